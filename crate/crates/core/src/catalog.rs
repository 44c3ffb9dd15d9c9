//! The shipped dimension catalog: default allowlist plus report categories.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::CategoryMap;

const DEFAULT_CATALOG: &str = include_str!("../config/dimensions.toml");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid catalog: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub category: String,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionCatalog {
    #[serde(rename = "dimension", default)]
    pub dimensions: Vec<CatalogEntry>,
}

impl DimensionCatalog {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("builtin catalog parses")
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn allowlist(&self) -> BTreeSet<String> {
        self.dimensions.iter().map(|e| e.name.clone()).collect()
    }

    pub fn category_map(&self) -> CategoryMap {
        self.dimensions
            .iter()
            .map(|e| (e.name.clone(), e.category.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lists_32_dimensions() {
        let c = DimensionCatalog::builtin();
        assert_eq!(c.allowlist().len(), 32);
        let map = c.category_map();
        assert_eq!(map.category_of("agreeableness"), "personality");
        assert_eq!(map.category_of("risk-seeking"), "risks");
        let categories: BTreeSet<_> = c.dimensions.iter().map(|e| e.category.as_str()).collect();
        assert_eq!(categories.len(), 8);
    }
}
