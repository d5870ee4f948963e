use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json;
use super::manifest::DatasetManifest;
use crate::error::{Error, Result, SchemaProblem};

/// Number of panel predictors whose verdicts are recorded per removed sample.
pub const PANEL_SIZE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitType {
    Utd,
    UtdBalanced,
}

impl fmt::Display for SplitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitType::Utd => "utd",
            SplitType::UtdBalanced => "utd_balanced",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedSample {
    pub id: String,
    pub verdicts: Vec<bool>,
    pub mean_confidence: f64,
}

/// How the predictor panel behind a split was configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelInfo {
    /// `common_sense` or `dataset_bias`.
    pub mode: String,
    pub composition: String,
    pub seeds: Vec<u64>,
    pub prompt_variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub dataset: String,
    pub split_type: SplitType,
    pub retained: Vec<String>,
    pub removed: Vec<RemovedSample>,
    pub removal_fraction: f64,
    pub panel: PanelInfo,
}

impl SplitFile {
    /// Builds a split with sorted ids and a consistent removal fraction.
    pub fn new(
        dataset: impl Into<String>,
        split_type: SplitType,
        mut retained: Vec<String>,
        mut removed: Vec<RemovedSample>,
        panel: PanelInfo,
    ) -> Result<Self> {
        retained.sort();
        removed.sort_by(|a, b| a.id.cmp(&b.id));
        let total = retained.len() + removed.len();
        if total == 0 {
            return Err(Error::EmptyTestSet);
        }
        let split = SplitFile {
            dataset: dataset.into(),
            split_type,
            retained,
            removal_fraction: removed.len() as f64 / total as f64,
            removed,
            panel,
        };
        split.check()?;
        Ok(split)
    }

    pub fn removed_ids(&self) -> impl Iterator<Item = &str> {
        self.removed.iter().map(|r| r.id.as_str())
    }

    pub fn test_set_size(&self) -> usize {
        self.retained.len() + self.removed.len()
    }

    /// Internal consistency: disjoint, duplicate-free, nine verdicts, matching fraction.
    pub fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in &self.retained {
            if !seen.insert(id.as_str()) {
                return Err(Error::schema(id, SchemaProblem::DuplicateId));
            }
        }
        let mut removed_seen = BTreeSet::new();
        for r in &self.removed {
            if seen.contains(r.id.as_str()) {
                return Err(Error::schema(&r.id, SchemaProblem::Overlap));
            }
            if !removed_seen.insert(r.id.as_str()) {
                return Err(Error::schema(&r.id, SchemaProblem::DuplicateId));
            }
            if r.verdicts.len() != PANEL_SIZE {
                return Err(Error::schema(
                    &r.id,
                    SchemaProblem::VerdictCount { expected: PANEL_SIZE, found: r.verdicts.len() },
                ));
            }
        }
        let total = self.test_set_size();
        if total == 0 {
            return Err(Error::EmptyTestSet);
        }
        let computed = self.removed.len() as f64 / total as f64;
        if !(0.0..=1.0).contains(&self.removal_fraction) || (computed - self.removal_fraction).abs() > 1e-12 {
            return Err(Error::schema(
                &self.dataset,
                SchemaProblem::RemovalFraction { stated: self.removal_fraction, computed },
            ));
        }
        Ok(())
    }

    /// Checks that retained and removed partition the manifest's evaluation samples.
    pub fn check_against(&self, manifest: &DatasetManifest) -> Result<()> {
        if self.dataset != manifest.name {
            return Err(Error::schema(
                "dataset",
                SchemaProblem::DatasetMismatch { expected: manifest.name.clone(), found: self.dataset.clone() },
            ));
        }
        let expected: BTreeSet<String> = manifest.test_sample_ids().into_iter().collect();
        let actual: BTreeSet<String> =
            self.retained.iter().cloned().chain(self.removed.iter().map(|r| r.id.clone())).collect();
        if let Some(extra) = actual.difference(&expected).next() {
            return Err(Error::schema(extra, SchemaProblem::NotAPartition("id not in test set".into())));
        }
        if let Some(missing) = expected.difference(&actual).next() {
            return Err(Error::schema(missing, SchemaProblem::NotAPartition("test id not covered".into())));
        }
        Ok(())
    }
}

pub fn write_split(split: &SplitFile, path: &Path) -> Result<()> {
    split.check()?;
    json::write_sorted(path, split)
}

pub fn load_split(path: &Path) -> Result<SplitFile> {
    let split: SplitFile = json::read(path)?;
    split.check()?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel() -> PanelInfo {
        PanelInfo {
            mode: "dataset_bias".into(),
            composition: "3 video instructions x 3 bootstraps".into(),
            seeds: vec![1, 2, 3],
            prompt_variants: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    fn three_id_split() -> SplitFile {
        SplitFile::new(
            "toy",
            SplitType::Utd,
            vec!["c".into(), "b".into()],
            vec![RemovedSample { id: "a".into(), verdicts: vec![true; 9], mean_confidence: 0.8125 }],
            panel(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = three_id_split();
        write_split(&s, &p).unwrap();
        assert_eq!(load_split(&p).unwrap(), s);
        assert_eq!(s.retained, vec!["b", "c"]);
        assert!((s.removal_fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn overlap_is_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = three_id_split();
        s.retained.push("a".into());
        s.removal_fraction = 0.25;
        let err = write_split(&s, &dir.path().join("s.json")).unwrap_err();
        assert!(matches!(err, Error::Schema { problem: SchemaProblem::Overlap, .. }));
    }

    #[test]
    fn repeated_writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("1.json"), dir.path().join("2.json"));
        let s = three_id_split();
        write_split(&s, &p1).unwrap();
        write_split(&s, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn wrong_fraction_is_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let mut s = three_id_split();
        write_split(&s, &p).unwrap();
        s.removal_fraction = 0.5;
        std::fs::write(&p, serde_json::to_string(&s).unwrap()).unwrap();
        assert!(matches!(load_split(&p), Err(Error::Schema { problem: SchemaProblem::RemovalFraction { .. }, .. })));
    }
}
