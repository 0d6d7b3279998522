//! Optional TOML configuration: one table per subcommand, keys named after
//! the flags. Values act as defaults; explicit flags win.
//!
//! ```toml
//! [extract]
//! d = 5
//! port-filter = "443"
//!
//! [evaluate]
//! folds = 10
//! seed = 42
//! ```

use std::path::Path;

use anyhow::Context;

#[derive(Default)]
pub struct FileConfig {
    table: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table = text
            .parse::<toml::Table>()
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(FileConfig { table })
    }

    fn value(&self, section: &str, key: &str) -> Option<&toml::Value> {
        self.table.get(section)?.as_table()?.get(key)
    }

    pub fn usize(&self, section: &str, key: &str) -> Option<usize> {
        self.value(section, key)?.as_integer().map(|v| v as usize)
    }

    pub fn u64(&self, section: &str, key: &str) -> Option<u64> {
        self.value(section, key)?.as_integer().map(|v| v as u64)
    }

    pub fn f64(&self, section: &str, key: &str) -> Option<f64> {
        let v = self.value(section, key)?;
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
    }

    pub fn bool(&self, section: &str, key: &str) -> Option<bool> {
        self.value(section, key)?.as_bool()
    }

    pub fn string(&self, section: &str, key: &str) -> Option<String> {
        self.value(section, key)?.as_str().map(str::to_owned)
    }
}
