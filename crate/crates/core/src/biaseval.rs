//! Concept x temporal bias measurement with zero-shot embeddings (common-sense
//! bias) or linear probes trained on the train split (dataset bias).

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetManifest, DescriptionStore, SplitRole, Task, VideoEntry};
use crate::embed::instructions::{query_instruction, video_instruction};
use crate::embed::{aggregate_avg, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::represent::{build, ConceptKind, RepresentationSpec, Temporal};
use crate::trainlin::{argmax, bootstrap_sample, train_softmax, LinearModel, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    CommonSense,
    DatasetBias,
}

impl BiasMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasMode::CommonSense => "common_sense",
            BiasMode::DatasetBias => "dataset_bias",
        }
    }
}

impl fmt::Display for BiasMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cs" | "common_sense" => Ok(BiasMode::CommonSense),
            "ds" | "dataset_bias" => Ok(BiasMode::DatasetBias),
            _ => Err(format!("unknown bias mode `{s}` (expected cs or ds)")),
        }
    }
}

/// Outcome for one test video (classification) or query (retrieval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSampleResult {
    pub id: String,
    /// Class index, or gallery index among the test videos.
    pub predicted: usize,
    pub correct: bool,
    /// Score of the predicted candidate.
    pub score: f64,
    /// Support for the ground truth: its probe probability in dataset-bias
    /// mode, its cosine margin over the best other candidate otherwise.
    pub confidence: f64,
}

/// Cosine similarity of `v` to every row of `matrix`.
pub fn similarities(v: &EmbeddingVector, matrix: &[EmbeddingVector]) -> Result<Vec<f64>> {
    if matrix.is_empty() {
        return Err(Error::Precondition("no candidates to compare against".into()));
    }
    matrix.iter().map(|row| crate::embed::cosine(v, row)).collect()
}

/// Class with the highest cosine; ties go to the lowest index.
pub fn classify_zero_shot(video: &EmbeddingVector, classes: &[EmbeddingVector]) -> Result<usize> {
    Ok(argmax(&similarities(video, classes)?))
}

/// Gallery video with the highest cosine; ties go to the lowest index.
pub fn retrieve_top1(query: &EmbeddingVector, videos: &[EmbeddingVector]) -> Result<usize> {
    Ok(argmax(&similarities(query, videos)?))
}

/// 100 x the fraction of correct samples.
pub fn dataset_metric(results: &[PerSampleResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let correct = results.iter().filter(|r| r.correct).count();
    Ok(100.0 * correct as f64 / results.len() as f64)
}

fn margin(scores: &[f64], gt: usize) -> f64 {
    let best_other = scores.iter().enumerate().filter(|(i, _)| *i != gt).map(|(_, s)| *s).reduce(f64::max);
    match best_other {
        Some(other) => scores[gt] - other,
        None => scores[gt],
    }
}

/// Per-candidate scores of one sample, possibly one row per frame.
fn judge(id: &str, rows: &[Vec<f64>], gt: usize, confidence: impl Fn(&[f64]) -> f64) -> PerSampleResult {
    let preds: Vec<usize> = rows.iter().map(|r| argmax(r)).collect();
    let correct = preds.contains(&gt);
    // Report the best-scoring frame among the correct ones, else overall.
    let frame = (0..rows.len())
        .filter(|&f| !correct || preds[f] == gt)
        .reduce(|a, b| if rows[b][preds[b]] > rows[a][preds[a]] { b } else { a })
        .unwrap();
    PerSampleResult {
        id: id.to_owned(),
        predicted: preds[frame],
        correct,
        score: rows[frame][preds[frame]],
        confidence: rows.iter().map(|r| confidence(r)).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// A video's embedded representation.
#[derive(Debug, Clone)]
pub enum VideoRep {
    One(EmbeddingVector),
    Frames(Vec<EmbeddingVector>),
}

impl VideoRep {
    fn vectors(&self) -> &[EmbeddingVector] {
        match self {
            VideoRep::One(v) => std::slice::from_ref(v),
            VideoRep::Frames(fs) => fs,
        }
    }
}

/// Embedding instructions for the two sides of a comparison.
#[derive(Debug, Clone, Copy)]
pub struct Prompts<'p> {
    pub video: &'p str,
    pub query: &'p str,
}

/// Everything needed to score representations of one dataset.
pub struct Evaluator<'a> {
    pub manifest: &'a DatasetManifest,
    pub store: &'a DescriptionStore,
    pub embedder: &'a Embedder<'a>,
    /// Probe settings for dataset-bias mode.
    pub train: TrainConfig,
}

impl<'a> Evaluator<'a> {
    pub fn new(manifest: &'a DatasetManifest, store: &'a DescriptionStore, embedder: &'a Embedder<'a>) -> Self {
        Evaluator { manifest, store, embedder, train: TrainConfig::default() }
    }

    fn test_videos(&self) -> Result<Vec<&'a VideoEntry>> {
        let videos: Vec<_> = self.manifest.videos_in(SplitRole::Test).collect();
        if videos.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        Ok(videos)
    }

    /// Embeds the `spec` representation of each video; avg is aggregated here.
    pub fn represent(
        &self,
        videos: &[&VideoEntry],
        spec: RepresentationSpec,
        instruction: &str,
    ) -> Result<Vec<VideoRep>> {
        let texts = videos.iter().map(|v| build(self.store, v, spec)).collect::<Result<Vec<_>>>()?;
        let items: Vec<(&str, &str)> =
            texts.iter().flat_map(|t| t.texts().iter().map(|s| (instruction, s.as_str()))).collect();
        let mut vectors = self.embedder.embed_batch(&items)?.into_iter();
        texts
            .iter()
            .map(|t| {
                let frames: Vec<EmbeddingVector> = vectors.by_ref().take(t.texts().len()).collect();
                Ok(match spec.temporal {
                    Temporal::MiddleFrame | Temporal::SeqOfFrames => VideoRep::One(frames.into_iter().next().unwrap()),
                    Temporal::AvgOverFrames => VideoRep::One(aggregate_avg(&frames)?),
                    Temporal::MaxScoreFrame => VideoRep::Frames(frames),
                })
            })
            .collect()
    }

    /// Default prompts for a cell.
    pub fn prompts(&self, spec: RepresentationSpec) -> (String, String) {
        let task = self.manifest.task;
        (
            video_instruction(task, spec.concept, spec.temporal).text.to_owned(),
            query_instruction(task, spec.temporal).text.to_owned(),
        )
    }

    /// Per-sample results for one cell with the default prompts.
    pub fn eval_temporal(&self, spec: RepresentationSpec, mode: BiasMode) -> Result<Vec<PerSampleResult>> {
        let (video, query) = self.prompts(spec);
        self.eval_with(spec, mode, Prompts { video: &video, query: &query }, None)
    }

    /// Per-sample results sorted by sample id.
    ///
    /// `bootstrap_seed` resamples the probe's training videos in dataset-bias mode.
    pub fn eval_with(
        &self,
        spec: RepresentationSpec,
        mode: BiasMode,
        prompts: Prompts<'_>,
        bootstrap_seed: Option<u64>,
    ) -> Result<Vec<PerSampleResult>> {
        let mut results = match (self.manifest.task, mode) {
            (Task::Classification, BiasMode::CommonSense) => self.classify_common_sense(spec, prompts)?,
            (Task::Classification, BiasMode::DatasetBias) => self.classify_dataset(spec, prompts, bootstrap_seed)?,
            (Task::Retrieval, BiasMode::CommonSense) => self.retrieve_common_sense(spec, prompts)?,
            (Task::Retrieval, BiasMode::DatasetBias) => {
                return Err(Error::Precondition("dataset bias is only measured for classification".into()))
            }
        };
        results.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(results)
    }

    fn classify_common_sense(&self, spec: RepresentationSpec, prompts: Prompts<'_>) -> Result<Vec<PerSampleResult>> {
        let videos = self.test_videos()?;
        let labels = self.embedder.embed_label_set(&self.manifest.classes, prompts.query)?;
        let reps = self.represent(&videos, spec, prompts.video)?;
        videos
            .par_iter()
            .zip(&reps)
            .map(|(v, rep)| {
                let gt = v.label_index.ok_or_else(|| Error::Precondition(format!("video `{}` has no label", v.id)))?;
                let rows = rep.vectors().iter().map(|f| similarities(f, &labels)).collect::<Result<Vec<_>>>()?;
                Ok(judge(&v.id, &rows, gt, |r| margin(r, gt)))
            })
            .collect()
    }

    /// Trains a probe on train-split representations of `spec`.
    ///
    /// Middle-frame and max-score-frame share one probe fitted on every train
    /// frame, so that the max-score result always dominates the middle frame.
    pub fn train_probe(
        &self,
        spec: RepresentationSpec,
        instruction: &str,
        bootstrap_seed: Option<u64>,
    ) -> Result<LinearModel> {
        let train: Vec<&VideoEntry> = self.manifest.videos_in(SplitRole::Train).collect();
        if train.is_empty() {
            return Err(Error::Precondition("dataset bias needs train-split videos".into()));
        }
        let train_spec = match spec.temporal {
            Temporal::MiddleFrame | Temporal::MaxScoreFrame => {
                RepresentationSpec::new(spec.concept, Temporal::MaxScoreFrame)
            }
            other => RepresentationSpec::new(spec.concept, other),
        };
        let reps = self.represent(&train, train_spec, instruction)?;
        let picks = match bootstrap_seed {
            Some(seed) => bootstrap_sample(train.len(), seed)?,
            None => (0..train.len()).collect(),
        };
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for i in picks {
            let label = train[i]
                .label_index
                .ok_or_else(|| Error::Precondition(format!("video `{}` has no label", train[i].id)))?;
            for v in reps[i].vectors() {
                x.push(v.as_slice().to_vec());
                y.push(label);
            }
        }
        let cfg = TrainConfig { seed: bootstrap_seed.unwrap_or(self.train.seed), ..self.train };
        train_softmax(&x, &y, self.manifest.classes.len(), &cfg)
    }

    fn classify_dataset(
        &self,
        spec: RepresentationSpec,
        prompts: Prompts<'_>,
        bootstrap_seed: Option<u64>,
    ) -> Result<Vec<PerSampleResult>> {
        let videos = self.test_videos()?;
        let probe = self.train_probe(spec, prompts.video, bootstrap_seed)?;
        let reps = self.represent(&videos, spec, prompts.video)?;
        videos
            .par_iter()
            .zip(&reps)
            .map(|(v, rep)| {
                let gt = v.label_index.ok_or_else(|| Error::Precondition(format!("video `{}` has no label", v.id)))?;
                let rows =
                    rep.vectors().iter().map(|f| probe.predict_proba(f.as_slice())).collect::<Result<Vec<_>>>()?;
                Ok(judge(&v.id, &rows, gt, |r| r[gt]))
            })
            .collect()
    }

    fn retrieve_common_sense(&self, spec: RepresentationSpec, prompts: Prompts<'_>) -> Result<Vec<PerSampleResult>> {
        let videos = self.test_videos()?;
        let queries = self.manifest.queries();
        if queries.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let items: Vec<(&str, &str)> = queries.iter().map(|q| (prompts.query, q.text.as_str())).collect();
        let qvecs = self.embedder.embed_batch(&items)?;
        let position = |id: &str| videos.iter().position(|v| v.id == id);
        let reps = self.represent(&videos, spec, prompts.video)?;
        let gallery: Vec<EmbeddingVector> = reps
            .into_iter()
            .enumerate()
            .map(|(j, rep)| match rep {
                VideoRep::One(v) => Ok(v),
                VideoRep::Frames(frames) => {
                    // Oracle frame: closest to any of the video's own captions.
                    let own: Vec<&EmbeddingVector> = queries
                        .iter()
                        .zip(&qvecs)
                        .filter(|(q, _)| q.video_id == videos[j].id)
                        .map(|(_, v)| v)
                        .collect();
                    let best = frames
                        .iter()
                        .map(|f| {
                            own.iter()
                                .map(|q| crate::embed::cosine(f, q))
                                .try_fold(f64::NEG_INFINITY, |m, c| c.map(|c| m.max(c)))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(frames.into_iter().nth(argmax(&best)).unwrap())
                }
            })
            .collect::<Result<_>>()?;
        queries
            .par_iter()
            .zip(&qvecs)
            .map(|(q, v)| {
                let gt = position(&q.video_id).ok_or_else(|| Error::UnknownVideo(q.video_id.clone()))?;
                let row = similarities(v, &gallery)?;
                Ok(judge(&q.id, &[row], gt, |r| margin(r, gt)))
            })
            .collect()
    }

    /// Metric for each requested cell, with deltas against the anchor cell.
    pub fn bias_grid(&self, specs: &[RepresentationSpec], mode: BiasMode) -> Result<BiasReport> {
        let mut cells = Vec::with_capacity(specs.len());
        for &spec in specs {
            let results = self.eval_temporal(spec, mode)?;
            cells.push(GridCell {
                concept: spec.concept,
                temporal: spec.temporal,
                metric: dataset_metric(&results)?,
                delta: None,
                results,
            });
        }
        let mut report = BiasReport {
            dataset: self.manifest.name.clone(),
            task: self.manifest.task,
            mode,
            metric_name: metric_name(self.manifest.task).to_owned(),
            embedding_model: self.embedder.endpoint.model_id().to_owned(),
            train: (mode == BiasMode::DatasetBias).then_some(self.train),
            cells,
        };
        report.fill_deltas();
        Ok(report)
    }
}

pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Classification => "accuracy",
        Task::Retrieval => "recall@1",
    }
}

/// Deltas are reported against this cell.
pub const ANCHOR: RepresentationSpec =
    RepresentationSpec { concept: ConceptKind::ObjCompAct, temporal: Temporal::SeqOfFrames };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub concept: ConceptKind,
    pub temporal: Temporal,
    /// Percentage in [0, 100], full precision.
    pub metric: f64,
    /// `metric` minus the anchor cell's metric, when the anchor was evaluated.
    pub delta: Option<f64>,
    pub results: Vec<PerSampleResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub dataset: String,
    pub task: Task,
    pub mode: BiasMode,
    pub metric_name: String,
    pub embedding_model: String,
    pub train: Option<TrainConfig>,
    pub cells: Vec<GridCell>,
}

impl BiasReport {
    pub fn cell(&self, spec: RepresentationSpec) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.concept == spec.concept && c.temporal == spec.temporal)
    }

    fn fill_deltas(&mut self) {
        let anchor = self.cell(ANCHOR).map(|c| c.metric);
        for cell in &mut self.cells {
            cell.delta = anchor.map(|a| cell.metric - a);
        }
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        crate::corpus::json::write_sorted(path, self)
    }

    /// `concept,temporal,metric,delta` with full-precision values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("concept,temporal,metric,delta\n");
        for c in &self.cells {
            let delta = c.delta.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", c.concept, c.temporal, c.metric, delta);
        }
        out
    }

    /// Concepts as rows and temporal setups as columns, one decimal.
    pub fn to_markdown(&self) -> String {
        let temporals: Vec<Temporal> =
            Temporal::ALL.into_iter().filter(|t| self.cells.iter().any(|c| c.temporal == *t)).collect();
        let concepts: Vec<ConceptKind> =
            ConceptKind::ALL.into_iter().filter(|k| self.cells.iter().any(|c| c.concept == *k)).collect();
        let mut out = format!("{} ({}, {})\n\n| concept |", self.dataset, self.mode, self.metric_name);
        for t in &temporals {
            let _ = write!(out, " {t} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(temporals.len()));
        out.push('\n');
        for k in concepts {
            let _ = write!(out, "| {k} |");
            for &t in &temporals {
                match self.cell(RepresentationSpec::new(k, t)) {
                    Some(c) if RepresentationSpec::new(k, t) != ANCHOR && c.delta.is_some() => {
                        let _ = write!(out, " {:.1} ({:+.1}) |", c.metric, c.delta.unwrap());
                    }
                    Some(c) => {
                        let _ = write!(out, " {:.1} |", c.metric);
                    }
                    None => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Concept, Payload};
    use crate::embed::EmbeddingStore;
    use crate::endpoint::{EmbeddingEndpoint, HashEmbedder};

    fn v(xs: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn basis(n: usize) -> Vec<EmbeddingVector> {
        (0..n).map(|i| v(&(0..n).map(|j| (i == j) as u8 as f32).collect::<Vec<_>>())).collect()
    }

    fn result(correct: bool) -> PerSampleResult {
        PerSampleResult { id: "x".into(), predicted: 0, correct, score: 0.0, confidence: 0.0 }
    }

    #[test]
    fn zero_shot_examples() {
        let classes = basis(3);
        assert_eq!(classify_zero_shot(&classes[2], &classes).unwrap(), 2);
        let tie = EmbeddingVector::normalized(vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(classify_zero_shot(&tie, &classes).unwrap(), 0);
        assert!(matches!(classify_zero_shot(&tie, &[]), Err(Error::Precondition(_))));
        assert!(matches!(classify_zero_shot(&v(&[1.0, 0.0]), &classes), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn retrieval_examples() {
        let videos = basis(4);
        assert_eq!(retrieve_top1(&videos[1], &videos).unwrap(), 1);
        let half = v(&[0.5, 0.0, 0.0, (0.75f32).sqrt()]);
        let gallery = vec![v(&[0.0, 1.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 0.0, 1.0, 0.0])];
        assert_eq!(retrieve_top1(&half, &gallery).unwrap(), 1);
        let twins = vec![v(&[0.0, 1.0]), v(&[0.6, 0.8]), v(&[0.6, 0.8])];
        assert_eq!(retrieve_top1(&v(&[0.6, 0.8]), &twins).unwrap(), 1);
    }

    #[test]
    fn metric_examples() {
        let r = |bits: &[bool]| bits.iter().map(|b| result(*b)).collect::<Vec<_>>();
        assert_eq!(dataset_metric(&r(&[true, true, false, false])).unwrap(), 50.0);
        assert_eq!(dataset_metric(&r(&[true, true])).unwrap(), 100.0);
        assert_eq!(dataset_metric(&r(&[false])).unwrap(), 0.0);
        assert!(matches!(dataset_metric(&[]), Err(Error::EmptyResults)));
        let once = r(&[true, false, false]);
        let twice: Vec<_> = once.iter().chain(&once).cloned().collect();
        assert_eq!(dataset_metric(&once).unwrap(), dataset_metric(&twice).unwrap());
    }

    #[test]
    fn max_over_frames_counts_any_correct_frame() {
        let gt = 1;
        let mut rows = vec![vec![0.9, 0.1]; 8];
        rows[2] = vec![0.2, 0.7];
        let r = judge("s", &rows, gt, |r| margin(r, gt));
        assert!(r.correct);
        assert_eq!(r.predicted, 1);
        assert_eq!(r.score, 0.7);
        let wrong = judge("s", &vec![vec![0.9, 0.1]; 8], gt, |r| margin(r, gt));
        assert!(!wrong.correct);
        assert_eq!(wrong.predicted, 0);
    }

    #[test]
    fn argmax_is_invariant_under_positive_rescaling() {
        let classes = [v(&[0.3, 0.9, 0.1]), v(&[0.8, 0.2, 0.4]), v(&[0.1, 0.1, 0.9])];
        let query = v(&[0.5, 0.5, 0.2]);
        let base = classify_zero_shot(&query, &classes).unwrap();
        for i in 0..3 {
            for c in [0.01f32, 7.5, 1e3] {
                let mut scaled = classes.to_vec();
                scaled[i] = scaled[i].scaled(c).unwrap();
                assert_eq!(classify_zero_shot(&query, &scaled).unwrap(), base);
            }
        }
    }

    fn toy(task: Task) -> (DatasetManifest, DescriptionStore) {
        let objects = [["guitar", "amplifier"], ["ball", "net"], ["oven", "tray"]];
        let classes = ["guitar amplifier", "ball net", "oven tray"];
        let mut videos = Vec::new();
        let mut store = DescriptionStore::new();
        for (i, objs) in objects.iter().enumerate() {
            for split in [SplitRole::Train, SplitRole::Test] {
                let id = format!("{}{i}", if split == SplitRole::Train { "tr" } else { "te" });
                for f in 0..3 {
                    let list = objs.iter().map(|s| s.to_string()).collect();
                    store.insert(&id, f, Concept::Objects, Payload::List(list)).unwrap();
                    store.insert(&id, f, Concept::ObjCompAct, Payload::Text(objs.join(" "))).unwrap();
                    store.insert(&id, f, Concept::ObjCompAct15w, Payload::Text(objs.join(" "))).unwrap();
                }
                videos.push(VideoEntry {
                    id,
                    frames: (0..3).map(|f| format!("{f}.png").into()).collect(),
                    label_index: (task == Task::Classification).then_some(i),
                    captions: (task == Task::Retrieval).then(|| vec![classes[i].to_owned()]),
                    split,
                });
            }
        }
        let manifest = DatasetManifest {
            name: "toy".into(),
            task,
            classes: if task == Task::Classification { classes.map(String::from).to_vec() } else { vec![] },
            videos,
        };
        manifest.validate().unwrap();
        (manifest, store)
    }

    #[test]
    fn object_labels_are_recovered_by_the_stub_embedder() {
        let ep = HashEmbedder::default();
        let cache = EmbeddingStore::in_memory(ep.model_id());
        let embedder = Embedder::new(&ep, &cache, 4).unwrap();
        for task in [Task::Classification, Task::Retrieval] {
            let (m, s) = toy(task);
            let eval = Evaluator::new(&m, &s, &embedder);
            let grid: Vec<_> = [ConceptKind::Objects, ConceptKind::ObjCompAct]
                .into_iter()
                .flat_map(|c| Temporal::ALL.map(|t| RepresentationSpec::new(c, t)))
                .collect();
            let report = eval.bias_grid(&grid, BiasMode::CommonSense).unwrap();
            for cell in &report.cells {
                assert_eq!(cell.metric, 100.0, "{task:?} {}/{}", cell.concept, cell.temporal);
            }
            assert_eq!(report.cell(ANCHOR).unwrap().delta, Some(0.0));
        }
    }

    #[test]
    fn dataset_bias_mode_and_restrictions() {
        let ep = HashEmbedder::new(64);
        let cache = EmbeddingStore::in_memory(ep.model_id());
        let embedder = Embedder::new(&ep, &cache, 2).unwrap();
        let (m, s) = toy(Task::Classification);
        let eval = Evaluator::new(&m, &s, &embedder);
        let spec = RepresentationSpec::new(ConceptKind::Objects, Temporal::SeqOfFrames);
        let results = eval.eval_temporal(spec, BiasMode::DatasetBias).unwrap();
        assert_eq!(dataset_metric(&results).unwrap(), 100.0);
        assert!(results.iter().all(|r| r.confidence > 0.0 && r.confidence < 1.0));
        let mid = eval
            .eval_temporal(RepresentationSpec::new(ConceptKind::Objects, Temporal::MiddleFrame), BiasMode::DatasetBias)
            .unwrap();
        let max = eval
            .eval_temporal(
                RepresentationSpec::new(ConceptKind::Objects, Temporal::MaxScoreFrame),
                BiasMode::DatasetBias,
            )
            .unwrap();
        for (a, b) in mid.iter().zip(&max) {
            assert!(b.correct >= a.correct);
        }
        let (rm, rs) = toy(Task::Retrieval);
        let reval = Evaluator::new(&rm, &rs, &embedder);
        assert!(matches!(reval.eval_temporal(spec, BiasMode::DatasetBias), Err(Error::Precondition(_))));
    }

    #[test]
    fn identical_texts_make_concept_rows_equal() {
        let ep = HashEmbedder::new(64);
        let cache = EmbeddingStore::in_memory(ep.model_id());
        let embedder = Embedder::new(&ep, &cache, 2).unwrap();
        let (m, _) = toy(Task::Classification);
        let mut s = DescriptionStore::new();
        for v in &m.videos {
            for f in 0..3 {
                for c in [Concept::Objects, Concept::Activities, Concept::Verbs] {
                    s.insert(&v.id, f, c, Payload::List(vec!["same words".into()])).unwrap();
                }
            }
        }
        let eval = Evaluator::new(&m, &s, &embedder);
        let metric = |c| {
            eval.eval_with(
                RepresentationSpec::new(c, Temporal::AvgOverFrames),
                BiasMode::CommonSense,
                Prompts { video: "v", query: "q" },
                None,
            )
            .map(|r| dataset_metric(&r).unwrap())
            .unwrap()
        };
        assert_eq!(metric(ConceptKind::Objects), metric(ConceptKind::Activities));
        assert_eq!(metric(ConceptKind::Objects), metric(ConceptKind::Verbs));
    }

    #[test]
    fn renders_csv_and_markdown() {
        let cell = |c, t, m: f64| GridCell { concept: c, temporal: t, metric: m, delta: None, results: vec![] };
        let mut report = BiasReport {
            dataset: "toy".into(),
            task: Task::Classification,
            mode: BiasMode::CommonSense,
            metric_name: "accuracy".into(),
            embedding_model: "m".into(),
            train: None,
            cells: vec![
                cell(ConceptKind::Objects, Temporal::SeqOfFrames, 40.0),
                cell(ConceptKind::ObjCompAct, Temporal::SeqOfFrames, 62.5),
            ],
        };
        report.fill_deltas();
        assert_eq!(
            report.to_csv(),
            "concept,temporal,metric,delta\nobjects,seq_of_frames,40,-22.5\nobj_comp_act,seq_of_frames,62.5,0\n"
        );
        let md = report.to_markdown();
        assert!(md.contains("| objects | 40.0 (-22.5) |"), "{md}");
        assert!(md.contains("| obj_comp_act | 62.5 |"), "{md}");
    }
}
