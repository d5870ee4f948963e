//! Nine-predictor panels, agreement statistics and debiased split construction.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::biaseval::{BiasMode, Evaluator, PerSampleResult, Prompts};
use crate::corpus::{
    json, DatasetManifest, PanelInfo, RemovedSample, SplitFile, SplitRole, SplitType, Task, PANEL_SIZE,
};
use crate::embed::instructions::{debias_query_instruction, debias_video_instruction, PANEL_VARIANTS};
use crate::error::{Error, Result, SchemaProblem};
use crate::represent::{ConceptKind, RepresentationSpec, Temporal};

pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

/// Splits are built from the objects sequence-of-frames representation.
pub const PANEL_SPEC: RepresentationSpec =
    RepresentationSpec { concept: ConceptKind::Objects, temporal: Temporal::SeqOfFrames };

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predictor {
    pub id: String,
    pub video_variant: u8,
    pub query_variant: Option<u8>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorPanel {
    pub task: Task,
    pub mode: BiasMode,
    pub seeds: Vec<u64>,
    pub predictors: Vec<Predictor>,
}

/// Configures the panel for `manifest`.
///
/// Classification uses dataset-bias probes: each video-side instruction
/// variant is paired with one bootstrapped probe per seed. Retrieval uses the
/// zero-shot product of query-side and video-side variants.
pub fn build_panel(manifest: &DatasetManifest, mode: BiasMode, seeds: [u64; 3]) -> Result<PredictorPanel> {
    let predictors = match (manifest.task, mode) {
        (Task::Classification, BiasMode::DatasetBias) => {
            if manifest.videos_in(SplitRole::Train).next().is_none() {
                return Err(Error::Precondition("classification panels need train-split videos".into()));
            }
            (1..=PANEL_VARIANTS)
                .flat_map(|v| {
                    seeds.iter().map(move |&s| Predictor {
                        id: format!("video_v{v}/seed_{s}"),
                        video_variant: v,
                        query_variant: None,
                        seed: Some(s),
                    })
                })
                .collect::<Vec<_>>()
        }
        (Task::Retrieval, BiasMode::CommonSense) => (1..=PANEL_VARIANTS)
            .flat_map(|q| {
                (1..=PANEL_VARIANTS).map(move |v| Predictor {
                    id: format!("query_v{q}/video_v{v}"),
                    video_variant: v,
                    query_variant: Some(q),
                    seed: None,
                })
            })
            .collect(),
        (Task::Classification, BiasMode::CommonSense) => {
            return Err(Error::Precondition("classification splits are built in dataset-bias mode (ds)".into()))
        }
        (Task::Retrieval, BiasMode::DatasetBias) => {
            return Err(Error::Precondition("retrieval splits are built in common-sense mode (cs)".into()))
        }
    };
    debug_assert_eq!(predictors.len(), PANEL_SIZE);
    let seeds = if manifest.task == Task::Classification { seeds.to_vec() } else { Vec::new() };
    Ok(PredictorPanel { task: manifest.task, mode, seeds, predictors })
}

impl PredictorPanel {
    pub fn info(&self) -> PanelInfo {
        let composition = match self.task {
            Task::Classification => "3 video-side instruction variants x 3 bootstrapped probes",
            Task::Retrieval => "3 query-side x 3 video-side instruction variants",
        };
        let mut variants: Vec<String> =
            (1..=PANEL_VARIANTS).filter_map(|v| debias_video_instruction(self.task, v)).map(|p| p.id()).collect();
        if self.task == Task::Retrieval {
            variants.extend((1..=PANEL_VARIANTS).filter_map(debias_query_instruction).map(|p| p.id()));
        }
        PanelInfo {
            mode: self.mode.as_str().to_owned(),
            composition: composition.to_owned(),
            seeds: self.seeds.clone(),
            prompt_variants: variants,
        }
    }
}

/// Per-sample correctness and confidence of each panel member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictMatrix {
    pub dataset: String,
    pub predictors: Vec<String>,
    /// Sorted sample ids.
    pub samples: Vec<String>,
    /// `correct[i][j]`: predictor j got sample i right.
    pub correct: Vec<Vec<bool>>,
    /// Ground-truth probability (probes) or cosine margin (zero-shot).
    pub confidence: Vec<Vec<f64>>,
    pub panel: PanelInfo,
}

impl VerdictMatrix {
    pub fn from_columns(
        dataset: impl Into<String>,
        panel: PanelInfo,
        columns: Vec<(String, Vec<PerSampleResult>)>,
    ) -> Result<Self> {
        let samples: Vec<String> =
            columns.first().map(|(_, r)| r.iter().map(|x| x.id.clone()).collect()).unwrap_or_default();
        if samples.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let n = samples.len();
        let mut correct = vec![Vec::with_capacity(columns.len()); n];
        let mut confidence = vec![Vec::with_capacity(columns.len()); n];
        for (name, results) in &columns {
            if results.len() != n || results.iter().zip(&samples).any(|(r, id)| &r.id != id) {
                return Err(Error::Precondition(format!("predictor `{name}` scored a different sample set")));
            }
            for (i, r) in results.iter().enumerate() {
                correct[i].push(r.correct);
                confidence[i].push(r.confidence);
            }
        }
        let m = VerdictMatrix {
            dataset: dataset.into(),
            predictors: columns.into_iter().map(|(name, _)| name).collect(),
            samples,
            correct,
            confidence,
            panel,
        };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        if self.predictors.len() != PANEL_SIZE {
            return Err(Error::schema(
                "predictors",
                SchemaProblem::VerdictCount { expected: PANEL_SIZE, found: self.predictors.len() },
            ));
        }
        if self.correct.len() != self.samples.len() || self.confidence.len() != self.samples.len() {
            return Err(Error::schema("samples", SchemaProblem::Other("row count differs from sample count".into())));
        }
        for (i, id) in self.samples.iter().enumerate() {
            if self.correct[i].len() != PANEL_SIZE || self.confidence[i].len() != PANEL_SIZE {
                return Err(Error::schema(
                    id,
                    SchemaProblem::VerdictCount { expected: PANEL_SIZE, found: self.correct[i].len() },
                ));
            }
            if i > 0 && self.samples[i - 1] >= *id {
                return Err(Error::schema(id, SchemaProblem::Other("sample ids must be unique and sorted".into())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_unanimous_correct(&self, row: usize) -> bool {
        self.correct[row].iter().all(|c| *c)
    }

    pub fn mean_confidence(&self, row: usize) -> f64 {
        self.confidence[row].iter().sum::<f64>() / self.confidence[row].len() as f64
    }

    fn removed(&self, row: usize) -> RemovedSample {
        RemovedSample {
            id: self.samples[row].clone(),
            verdicts: self.correct[row].clone(),
            mean_confidence: self.mean_confidence(row),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        json::write_sorted(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: VerdictMatrix = json::read(path)?;
        m.check()?;
        Ok(m)
    }
}

/// Runs every panel member on the objects sequence representation.
pub fn verdicts(panel: &PredictorPanel, eval: &Evaluator<'_>) -> Result<VerdictMatrix> {
    let task = eval.manifest.task;
    if task != panel.task {
        return Err(Error::Precondition("panel was built for a different task".into()));
    }
    let (_, default_query) = eval.prompts(PANEL_SPEC);
    let mut columns = Vec::with_capacity(PANEL_SIZE);
    for p in &panel.predictors {
        let video = debias_video_instruction(task, p.video_variant)
            .ok_or_else(|| Error::Precondition(format!("no video-side variant {}", p.video_variant)))?;
        let query = match p.query_variant {
            Some(q) => {
                debias_query_instruction(q).ok_or_else(|| Error::Precondition(format!("no query variant {q}")))?.text
            }
            None => default_query.as_str(),
        };
        let results = eval.eval_with(PANEL_SPEC, panel.mode, Prompts { video: video.text, query }, p.seed)?;
        columns.push((p.id.clone(), results));
    }
    VerdictMatrix::from_columns(eval.manifest.name.clone(), panel.info(), columns)
}

/// Fleiss' kappa for items rated correct/incorrect by `n` raters each.
///
/// `counts[i]` is the number of raters judging item i correct. Returns 1.0
/// when expected agreement is already perfect.
pub fn fleiss_kappa_counts(counts: &[usize], n: usize) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if n < 2 {
        return Err(Error::Precondition("Fleiss' kappa needs at least 2 raters".into()));
    }
    if let Some(c) = counts.iter().find(|&&c| c > n) {
        return Err(Error::Precondition(format!("{c} positive ratings exceed {n} raters")));
    }
    let (nf, items) = (n as f64, counts.len() as f64);
    let mut p_bar = 0.0;
    let mut positive = 0.0;
    for &c in counts {
        let (a, b) = (c as f64, (n - c) as f64);
        p_bar += (a * a + b * b - nf) / (nf * (nf - 1.0));
        positive += a;
    }
    p_bar /= items;
    let p1 = positive / (items * nf);
    let pe = p1 * p1 + (1.0 - p1) * (1.0 - p1);
    if pe >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - pe) / (1.0 - pe))
}

pub fn fleiss_kappa(matrix: &VerdictMatrix) -> Result<f64> {
    let counts: Vec<usize> = matrix.correct.iter().map(|row| row.iter().filter(|c| **c).count()).collect();
    fleiss_kappa_counts(&counts, PANEL_SIZE)
}

/// Removes exactly the samples every predictor got right.
pub fn build_utd_split(matrix: &VerdictMatrix) -> Result<SplitFile> {
    let (mut retained, mut removed) = (Vec::new(), Vec::new());
    for row in 0..matrix.len() {
        if matrix.is_unanimous_correct(row) {
            removed.push(matrix.removed(row));
        } else {
            retained.push(matrix.samples[row].clone());
        }
    }
    SplitFile::new(matrix.dataset.clone(), SplitType::Utd, retained, removed, matrix.panel.clone())
}

/// Largest-remainder apportionment of `total` seats over classes of `sizes`.
///
/// Leftover seats go to the largest remainders; ties prefer the smaller class,
/// then the lower class index.
pub fn apportion(total: usize, sizes: &[usize]) -> Result<Vec<usize>> {
    let n: usize = sizes.iter().sum();
    if total > n {
        return Err(Error::Precondition(format!("cannot remove {total} of {n} samples")));
    }
    if total == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    let mut quota: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let remainder: Vec<usize> = sizes.iter().map(|&s| total * s % n).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| remainder[b].cmp(&remainder[a]).then(sizes[a].cmp(&sizes[b])).then(a.cmp(&b)));
    let mut left = total - quota.iter().sum::<usize>();
    while left > 0 {
        for &c in &order {
            if left > 0 && quota[c] < sizes[c] {
                quota[c] += 1;
                left -= 1;
            }
        }
    }
    Ok(quota)
}

/// Removes as many samples as the UTD split but keeps class proportions.
///
/// Within each class the samples with the highest mean ground-truth
/// confidence go first; ties by sample id.
pub fn build_balanced_split(matrix: &VerdictMatrix, manifest: &DatasetManifest) -> Result<SplitFile> {
    if manifest.task != Task::Classification {
        return Err(Error::Precondition("balanced splits are built for classification only".into()));
    }
    let total = (0..matrix.len()).filter(|&r| matrix.is_unanimous_correct(r)).count();
    let index = manifest.video_index();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, id) in matrix.samples.iter().enumerate() {
        let label =
            index.get(id.as_str()).and_then(|v| v.label_index).ok_or_else(|| Error::UnknownVideo(id.clone()))?;
        by_class.entry(label).or_default().push(row);
    }
    let classes: Vec<usize> = by_class.keys().copied().collect();
    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    let quotas = apportion(total, &sizes)?;
    let mut removed_rows = Vec::with_capacity(total);
    for (class, quota) in classes.iter().zip(quotas) {
        let mut rows = by_class[class].clone();
        rows.sort_by(|&a, &b| {
            matrix
                .mean_confidence(b)
                .total_cmp(&matrix.mean_confidence(a))
                .then(matrix.samples[a].cmp(&matrix.samples[b]))
        });
        removed_rows.extend(rows.into_iter().take(quota));
    }
    removed_rows.sort_unstable();
    let removed: Vec<RemovedSample> = removed_rows.iter().map(|&r| matrix.removed(r)).collect();
    let retained = (0..matrix.len())
        .filter(|r| removed_rows.binary_search(r).is_err())
        .map(|r| matrix.samples[r].clone())
        .collect();
    SplitFile::new(matrix.dataset.clone(), SplitType::UtdBalanced, retained, removed, matrix.panel.clone())
}

/// Agreement and removal statistics for a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub kappa: f64,
    pub percent_biased: f64,
    pub percent_retained: f64,
}

pub fn split_stats(matrix: &VerdictMatrix, split: &SplitFile) -> Result<SplitStats> {
    Ok(SplitStats {
        kappa: fleiss_kappa(matrix)?,
        percent_biased: 100.0 * split.removal_fraction,
        percent_retained: 100.0 * (1.0 - split.removal_fraction),
    })
}
