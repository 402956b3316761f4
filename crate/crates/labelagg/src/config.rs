//! Optional TOML config file. Every key mirrors a command-line flag of the
//! same name; flags given on the command line win.
//!
//! ```toml
//! labels = "rte.tsv"
//! classes = 2
//! model = "nn-wa"
//! mu-grid = [0.001, 0.01, 0.1, 1.0]
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cli::{DataArgs, TrainArgs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub labels: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub classes: Option<usize>,
    pub dense: Option<bool>,
    pub train: TrainArgs,
}

#[derive(Deserialize)]
#[serde(rename_all = "kebab-case")]
struct DataKeys {
    labels: Option<PathBuf>,
    gold: Option<PathBuf>,
    classes: Option<usize>,
    dense: Option<bool>,
}

const DATA_KEYS: [&str; 4] = ["labels", "gold", "classes", "dense"];

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let err = |e: toml::de::Error| Error::Config(e.to_string());
        let mut table: toml::Table = toml::from_str(text).map_err(err)?;
        let mut data = toml::Table::new();
        for key in DATA_KEYS {
            if let Some(v) = table.remove(key) {
                data.insert(key.to_owned(), v);
            }
        }
        let data: DataKeys = data.try_into().map_err(err)?;
        let train: TrainArgs = table.try_into().map_err(err)?;
        Ok(Self { labels: data.labels, gold: data.gold, classes: data.classes, dense: data.dense, train })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Fills every unset flag from the file.
    pub fn apply(self, data: &mut DataArgs, train: &mut TrainArgs) {
        data.labels = data.labels.take().or(self.labels);
        data.gold = data.gold.take().or(self.gold);
        data.classes = data.classes.or(self.classes);
        data.dense = data.dense || self.dense.unwrap_or(false);
        train.fill_from(self.train);
    }
}
