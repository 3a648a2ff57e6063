//! Flat TOML configuration files whose keys mirror the long flag names.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::CliError;

/// Load a flat key-value TOML file. Keys may use `-` or `_` interchangeably.
pub fn load_flat<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_flat(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

pub fn parse_flat<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    let mut flat = toml::Table::new();
    for (k, v) in table {
        if v.is_table() {
            return Err(format!("nested table '{k}' is not allowed; use flat keys"));
        }
        flat.insert(k.replace('_', "-"), v);
    }
    toml::Value::Table(flat).try_into().map_err(|e: toml::de::Error| e.to_string())
}

/// Command-line values win over config-file values.
pub trait Overlay: Sized {
    fn overlay(self, file: Self) -> Self;
}

macro_rules! impl_overlay {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::cli::config::Overlay for $ty {
            fn overlay(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field),)* }
            }
        }
    };
}
pub(crate) use impl_overlay;

/// Hex SHA-256 of the canonical JSON encoding.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex(&Sha256::digest(&bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
