//! Scores external model predictions on the full test set and on debiased splits.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::biaseval::metric_name;
use crate::corpus::{DatasetManifest, SplitFile, SplitRole, Task};
use crate::error::{Error, Result, SchemaProblem};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    /// Video ids, best first.
    Ranked(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum Record {
    Class { id: String, pred: usize },
    Ranked { query_id: String, ranked: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model: String,
    pub task: Task,
    pub predictions: BTreeMap<String, Prediction>,
}

/// Reads line-delimited prediction records; the model name is the file stem.
pub fn load_predictions(path: &Path, manifest: &DatasetManifest) -> Result<PredictionSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_predictions(&model, &text, manifest, &path.display().to_string())
}

/// `{"id": ..., "pred": k}` lines for classification, `{"query_id": ..., "ranked": [...]}` for retrieval.
pub fn parse_predictions(model: &str, text: &str, manifest: &DatasetManifest, origin: &str) -> Result<PredictionSet> {
    let samples: Vec<String> = manifest.test_sample_ids();
    let known: HashMap<&str, ()> = samples.iter().map(|s| (s.as_str(), ())).collect();
    let videos = manifest.video_index();
    let mut predictions = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::parse(format!("{origin}:{}", n + 1), e))?;
        let (id, prediction) = match (record, manifest.task) {
            (Record::Class { id, pred }, Task::Classification) => {
                if pred >= manifest.classes.len() {
                    return Err(Error::UnknownClass { id, index: pred, classes: manifest.classes.len() });
                }
                (id, Prediction::Class(pred))
            }
            (Record::Ranked { query_id, ranked }, Task::Retrieval) => {
                if ranked.is_empty() {
                    return Err(Error::schema(&query_id, SchemaProblem::Other("empty ranked list".into())));
                }
                if let Some(unknown) = ranked.iter().find(|v| !videos.contains_key(v.as_str())) {
                    return Err(Error::UnknownVideo(unknown.clone()));
                }
                (query_id, Prediction::Ranked(ranked))
            }
            (Record::Class { id, .. }, Task::Retrieval)
            | (Record::Ranked { query_id: id, .. }, Task::Classification) => {
                return Err(Error::schema(id, SchemaProblem::TaskMismatch("prediction record kind")));
            }
        };
        if !known.contains_key(id.as_str()) {
            return Err(Error::schema(id, SchemaProblem::UnknownSample));
        }
        if predictions.insert(id.clone(), prediction).is_some() {
            return Err(Error::schema(id, SchemaProblem::DuplicateId));
        }
    }
    if let Some(missing) = samples.iter().filter(|s| !predictions.contains_key(*s)).min() {
        return Err(Error::MissingSample(missing.clone()));
    }
    Ok(PredictionSet { model: model.to_owned(), task: manifest.task, predictions })
}

/// Ground truth of every test sample: class index or video id.
struct Truth {
    labels: HashMap<String, usize>,
    videos: HashMap<String, String>,
}

impl Truth {
    fn new(manifest: &DatasetManifest) -> Self {
        let labels =
            manifest.videos_in(SplitRole::Test).filter_map(|v| v.label_index.map(|l| (v.id.clone(), l))).collect();
        let videos = manifest.queries().into_iter().map(|q| (q.id, q.video_id)).collect();
        Truth { labels, videos }
    }

    fn hit(&self, id: &str, p: &Prediction, k: usize) -> Result<bool> {
        Ok(match p {
            Prediction::Class(c) => self.labels.get(id).ok_or_else(|| Error::MissingSample(id.to_owned()))? == c,
            Prediction::Ranked(r) => {
                let gt = self.videos.get(id).ok_or_else(|| Error::MissingSample(id.to_owned()))?;
                r.iter().take(k).any(|v| v == gt)
            }
        })
    }
}

/// Accuracy or recall@k (in percent) over exactly `ids`.
pub fn eval_at_k(preds: &PredictionSet, ids: &[String], manifest: &DatasetManifest, k: usize) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::EmptyResults);
    }
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let truth = Truth::new(manifest);
    let mut correct = 0usize;
    for id in ids {
        let p = preds.predictions.get(id).ok_or_else(|| Error::MissingSample(id.clone()))?;
        correct += truth.hit(id, p, k)? as usize;
    }
    Ok(100.0 * correct as f64 / ids.len() as f64)
}

/// Accuracy (classification) or recall@1 (retrieval) over exactly `ids`.
pub fn eval_on_split(preds: &PredictionSet, ids: &[String], manifest: &DatasetManifest) -> Result<f64> {
    eval_at_k(preds, ids, manifest, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub model: String,
    pub split: String,
    pub full: f64,
    pub split_metric: f64,
    /// `split_metric - full`
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub dataset: String,
    pub metric: String,
    pub rows: Vec<DeltaRow>,
}

/// Full-set and per-split metrics for every model; `splits` pairs a display name with each split.
pub fn delta_table(
    preds: &[PredictionSet],
    manifest: &DatasetManifest,
    splits: &[(String, SplitFile)],
) -> Result<DeltaTable> {
    for (_, split) in splits {
        split.check_against(manifest)?;
    }
    let full_ids = manifest.test_sample_ids();
    let mut rows = Vec::new();
    for p in preds {
        if p.task != manifest.task {
            return Err(Error::Precondition(format!("predictions `{}` are for another task", p.model)));
        }
        let full = eval_on_split(p, &full_ids, manifest)?;
        for (name, split) in splits {
            let split_metric = eval_on_split(p, &split.retained, manifest)?;
            rows.push(DeltaRow {
                model: p.model.clone(),
                split: name.clone(),
                full,
                split_metric,
                delta: split_metric - full,
            });
        }
    }
    Ok(DeltaTable { dataset: manifest.name.clone(), metric: metric_name(manifest.task).to_owned(), rows })
}

pub const CSV_HEADER: [&str; 5] = ["model", "split", "full", "split_metric", "delta"];

impl DeltaTable {
    /// Long-format CSV; numbers use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::parse("<csv>", e);
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.split.clone(),
                r.full.to_string(),
                r.split_metric.to_string(),
                r.delta.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse("<csv>", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Rows from [`DeltaTable::to_csv`] output.
    pub fn rows_from_csv(text: &str) -> Result<Vec<DeltaRow>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::parse("<csv>", e))?.clone();
        if headers.iter().ne(CSV_HEADER) {
            return Err(Error::parse("<csv>", format!("unexpected header {headers:?}")));
        }
        r.deserialize().map(|row| row.map_err(|e| Error::parse("<csv>", e))).collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "{} ({})\n\n| model | split | full | on split | delta |\n|---|---|---:|---:|---:|\n",
            self.dataset, self.metric
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {:.1} | {:.1} | {:+.1} |",
                r.model, r.split, r.full, r.split_metric, r.delta
            );
        }
        out
    }
}
