//! Deterministic JSON emission shared by every artifact writer.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Renders `value` as pretty JSON with lexicographically sorted object keys
/// and a trailing newline.
pub fn to_sorted_string<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Map is a BTreeMap, so routing through Value sorts every key.
    let value = serde_json::to_value(value).map_err(|e| Error::parse("<memory>", e))?;
    let mut out = serde_json::to_string_pretty(&value).map_err(|e| Error::parse("<memory>", e))?;
    out.push('\n');
    Ok(out)
}

pub fn write_sorted<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_sorted_string(value)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Unordered {
        zeta: u32,
        alpha: u32,
    }

    #[test]
    fn keys_come_out_sorted() {
        let s = to_sorted_string(&Unordered { zeta: 1, alpha: 2 }).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.ends_with('\n'));
    }
}
