use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PlantId, PlantSpec};
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/plants.json");

/// Plant parameter file: one object per plant id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlantCatalog {
    pub plants: BTreeMap<PlantId, PlantSpec>,
}

impl PlantCatalog {
    /// The checked-in default parameters.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("built-in plant file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let catalog: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<plants>".into(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plant catalog serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn get(&self, id: PlantId) -> Result<&PlantSpec> {
        self.plants
            .get(&id)
            .ok_or_else(|| Error::Config(format!("plant {id} missing from parameter file")))
    }

    fn validate(&self) -> Result<()> {
        for (id, spec) in &self.plants {
            if *id != spec.id {
                return Err(Error::Config(format!("entry {id} holds plant {}", spec.id)));
            }
            spec.validate()?;
        }
        Ok(())
    }
}
