use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde_json::json;
use utd_core::annotate::{resolve_frames, Annotator, PromptLibrary, ResponseCache};
use utd_core::biaseval::{BiasMode, Evaluator};
use utd_core::corpus::{
    json as sorted_json, load_descriptions, load_manifest, load_split, validate_concepts, validate_store, write_split,
    Concept, DatasetManifest, DescriptionStore, Task, VideoEntry,
};
use utd_core::debias::{
    build_balanced_split, build_panel, build_utd_split, split_stats, verdicts, VerdictMatrix, DEFAULT_SEEDS, PANEL_SPEC,
};
use utd_core::embed::instructions::{debias_query_instruction, debias_video_instruction, PANEL_VARIANTS};
use utd_core::embed::{Embedder, EmbeddingStore};
use utd_core::endpoint::EmbeddingEndpoint;
use utd_core::represent::RepresentationSpec;
use utd_core::{benchmark, debias};

use crate::config::RunConfig;
use crate::provenance::{sibling, Provenance};
use crate::{
    AnnotateArgs, BenchmarkArgs, BiasArgs, Cli, Command, EmbedArgs, ExtractArgs, GridArgs, KappaArgs, SplitArgs,
    ValidateArgs,
};

pub fn run(cli: Cli) -> Result<ExitCode> {
    let config = RunConfig::load(cli.config.as_deref(), cli.stub)?;
    match cli.command {
        Command::Annotate(a) => annotate(&config, a),
        Command::Extract(a) => extract(&config, a),
        Command::Embed(a) => embed(&config, a),
        Command::Bias(a) => bias(&config, a),
        Command::Split(a) => split(&config, a),
        Command::Kappa(a) => kappa(a),
        Command::Benchmark(a) => bench(&config, a),
        Command::Validate(a) => validate(a),
    }
}

fn open_store(path: &Path, manifest: &DatasetManifest) -> Result<Option<DescriptionStore>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(load_descriptions(path, manifest).with_context(|| format!("loading {}", path.display()))?))
}

fn run_annotator(
    config: &RunConfig,
    manifest_path: &Path,
    descriptions: &Path,
    cache_dir: Option<&Path>,
    prompts: &PromptLibrary,
    concepts: &BTreeSet<Concept>,
    command: &'static str,
) -> Result<ExitCode> {
    let mut manifest = load_manifest(manifest_path)?;
    let existing = open_store(descriptions, &manifest)?;
    resolve_frames(&mut manifest, manifest_path.parent().unwrap_or(Path::new("")));
    let cache = match cache_dir {
        Some(dir) => ResponseCache::on_disk(dir)?,
        None => ResponseCache::in_memory(),
    };
    let (vlm, llm) = (config.vlm.chat(), config.llm.chat());
    let workers = if command == "annotate" { config.vlm.max_in_flight() } else { config.llm.max_in_flight() };
    let annotator = Annotator { vlm: vlm.as_ref(), llm: llm.as_ref(), prompts, cache: &cache, max_in_flight: workers };
    let mut prov = Provenance::new(command, config, json!({"concepts": concepts}))?
        .model("vlm", vlm.model_id())
        .model("llm", llm.model_id())
        .input("manifest", manifest_path)?;
    if descriptions.exists() {
        prov = prov.input("descriptions", descriptions)?;
    }
    let outcome = annotator.annotate_dataset(&manifest, concepts, existing)?;
    outcome.store.write(descriptions)?;
    prov.output(descriptions);
    prov.write(&sibling(descriptions, &format!("{command}.provenance.json")))?;
    println!("{} entries written to {}", outcome.store.len(), descriptions.display());
    if !outcome.is_complete() {
        for f in &outcome.failures {
            eprintln!("failed {}: {}", f.key, f.error);
        }
        bail!("{} entries could not be produced; rerun to resume", outcome.failures.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn annotate(config: &RunConfig, a: AnnotateArgs) -> Result<ExitCode> {
    let concepts = BTreeSet::from([Concept::ObjCompAct]);
    let prompts = PromptLibrary::standard();
    run_annotator(
        config,
        &a.inputs.manifest,
        &a.inputs.descriptions,
        a.cache_dir.as_deref(),
        &prompts,
        &concepts,
        "annotate",
    )
}

fn extract(config: &RunConfig, a: ExtractArgs) -> Result<ExitCode> {
    let concepts: BTreeSet<Concept> = a.concepts.into_iter().filter(|c| *c != Concept::ObjCompAct).collect();
    let prompts = match &a.exemplars {
        Some(p) => PromptLibrary::from_exemplar_file(p)?,
        None => PromptLibrary::standard(),
    };
    run_annotator(
        config,
        &a.inputs.manifest,
        &a.inputs.descriptions,
        a.cache_dir.as_deref(),
        &prompts,
        &concepts,
        "extract",
    )
}

fn open_embeddings(dir: Option<&Path>, endpoint: &dyn EmbeddingEndpoint) -> Result<EmbeddingStore> {
    Ok(match dir {
        Some(d) => EmbeddingStore::open_in_dir(d, endpoint.model_id())?,
        None => EmbeddingStore::in_memory(endpoint.model_id()),
    })
}

fn grid(g: &GridArgs) -> Vec<RepresentationSpec> {
    let concepts: BTreeSet<_> = g.concepts.iter().copied().collect();
    let temporals: BTreeSet<_> = g.temporals.iter().copied().collect();
    RepresentationSpec::grid()
        .into_iter()
        .filter(|s| concepts.contains(&s.concept) && temporals.contains(&s.temporal))
        .collect()
}

struct Loaded {
    manifest: DatasetManifest,
    store: DescriptionStore,
}

fn load_inputs(manifest: &Path, descriptions: &Path) -> Result<Loaded> {
    let manifest_doc = load_manifest(manifest)?;
    let store = load_descriptions(descriptions, &manifest_doc)?;
    Ok(Loaded { manifest: manifest_doc, store })
}

fn embed(config: &RunConfig, a: EmbedArgs) -> Result<ExitCode> {
    let Loaded { manifest, store } = load_inputs(&a.inputs.manifest, &a.inputs.descriptions)?;
    let endpoint = config.embed.embedding();
    let cache = open_embeddings(Some(&a.embed_cache), endpoint.as_ref())?;
    let embedder = Embedder::new(endpoint.as_ref(), &cache, config.embed.max_in_flight())?;
    let eval = Evaluator::new(&manifest, &store, &embedder);
    let videos: Vec<&VideoEntry> = manifest.videos.iter().collect();
    let targets: Vec<String> = match manifest.task {
        Task::Classification => manifest.classes.clone(),
        Task::Retrieval => manifest.queries().into_iter().map(|q| q.text).collect(),
    };
    let specs = grid(&a.grid);
    for &spec in &specs {
        let (video, query) = eval.prompts(spec);
        eval.represent(&videos, spec, &video)?;
        embedder.embed_label_set(&targets, &query)?;
    }
    if a.panel {
        for v in 1..=PANEL_VARIANTS {
            if let Some(p) = debias_video_instruction(manifest.task, v) {
                eval.represent(&videos, PANEL_SPEC, p.text)?;
            }
            if manifest.task == Task::Retrieval {
                if let Some(q) = debias_query_instruction(v) {
                    embedder.embed_label_set(&targets, q.text)?;
                }
            }
        }
    }
    let specs_str: Vec<String> = specs.iter().map(|s| s.to_string()).collect();
    let mut prov = Provenance::new("embed", config, json!({"cells": specs_str, "panel": a.panel}))?
        .model("embed", endpoint.model_id())
        .input("manifest", &a.inputs.manifest)?
        .input("descriptions", &a.inputs.descriptions)?;
    if let Some(path) = cache.path() {
        prov.output(path);
    }
    prov.write(&a.embed_cache.join("embed.provenance.json"))?;
    println!("{} vectors cached for {}", cache.len(), endpoint.model_id());
    Ok(ExitCode::SUCCESS)
}

fn bias(config: &RunConfig, a: BiasArgs) -> Result<ExitCode> {
    let Loaded { manifest, store } = load_inputs(&a.inputs.manifest, &a.inputs.descriptions)?;
    let endpoint = config.embed.embedding();
    let cache = open_embeddings(a.embed_cache.as_deref(), endpoint.as_ref())?;
    let embedder = Embedder::new(endpoint.as_ref(), &cache, config.embed.max_in_flight())?;
    let mut eval = Evaluator::new(&manifest, &store, &embedder);
    eval.train = config.train;
    let specs = grid(&a.grid);
    let report = eval.bias_grid(&specs, a.mode)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let specs_str: Vec<String> = specs.iter().map(|s| s.to_string()).collect();
    let mut prov = Provenance::new("bias", config, json!({"cells": specs_str, "mode": a.mode}))?
        .model("embed", endpoint.model_id())
        .input("manifest", &a.inputs.manifest)?
        .input("descriptions", &a.inputs.descriptions)?;
    let json_path = a.out.join("bias_report.json");
    report.write(&json_path)?;
    prov.output(&json_path);
    for (name, text) in [("bias_report.csv", report.to_csv()), ("bias_report.md", report.to_markdown())] {
        let path = a.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        prov.output(&path);
    }
    prov.write(&a.out.join("provenance.json"))?;
    print!("{}", report.to_markdown());
    Ok(ExitCode::SUCCESS)
}

fn split(config: &RunConfig, a: SplitArgs) -> Result<ExitCode> {
    let Loaded { manifest, store } = load_inputs(&a.inputs.manifest, &a.inputs.descriptions)?;
    let mode = a.mode.unwrap_or(match manifest.task {
        Task::Classification => BiasMode::DatasetBias,
        Task::Retrieval => BiasMode::CommonSense,
    });
    let seeds = a.seeds.or_else(|| config.seeds.clone()).unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    let seeds: [u64; 3] = seeds
        .as_slice()
        .try_into()
        .map_err(|_| anyhow::anyhow!("exactly three seeds are required, got {}", seeds.len()))?;
    let endpoint = config.embed.embedding();
    let cache = open_embeddings(a.embed_cache.as_deref(), endpoint.as_ref())?;
    let embedder = Embedder::new(endpoint.as_ref(), &cache, config.embed.max_in_flight())?;
    let mut eval = Evaluator::new(&manifest, &store, &embedder);
    eval.train = config.train;

    let panel = build_panel(&manifest, mode, seeds)?;
    let matrix = verdicts(&panel, &eval)?;
    let split = if a.balanced { build_balanced_split(&matrix, &manifest)? } else { build_utd_split(&matrix)? };
    let stats = split_stats(&matrix, &split)?;

    let mut prov = Provenance::new("split", config, json!({"mode": mode, "balanced": a.balanced}))?
        .model("embed", endpoint.model_id())
        .seeds(&panel.seeds)
        .input("manifest", &a.inputs.manifest)?
        .input("descriptions", &a.inputs.descriptions)?;
    write_split(&split, &a.out)?;
    prov.output(&a.out);
    let verdict_path = sibling(&a.out, "verdicts.json");
    matrix.write(&verdict_path)?;
    prov.output(&verdict_path);
    let stats_path = sibling(&a.out, "stats.json");
    sorted_json::write_sorted(&stats_path, &stats)?;
    prov.output(&stats_path);
    prov.write(&sibling(&a.out, "provenance.json"))?;
    println!(
        "{}: kappa {:.3}, {:.1}% biased, {:.1}% retained ({} of {} samples)",
        split.split_type,
        stats.kappa,
        stats.percent_biased,
        stats.percent_retained,
        split.retained.len(),
        split.test_set_size()
    );
    Ok(ExitCode::SUCCESS)
}

fn kappa(a: KappaArgs) -> Result<ExitCode> {
    let matrix = VerdictMatrix::load(&a.verdicts)?;
    println!("{}", debias::fleiss_kappa(&matrix)?);
    Ok(ExitCode::SUCCESS)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn bench(config: &RunConfig, a: BenchmarkArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&a.manifest)?;
    let mut prov = Provenance::new("benchmark", config, json!({}))?.input("manifest", &a.manifest)?;
    let mut preds = Vec::new();
    for p in &a.preds {
        preds.push(benchmark::load_predictions(p, &manifest)?);
        prov = prov.input(&format!("preds:{}", stem(p)), p)?;
    }
    let mut splits = Vec::new();
    for s in &a.splits {
        splits.push((stem(s), load_split(s)?));
        prov = prov.input(&format!("split:{}", stem(s)), s)?;
    }
    let table = benchmark::delta_table(&preds, &manifest, &splits)?;
    let outputs: [(PathBuf, String); 3] = [
        (a.out.clone(), table.to_csv()?),
        (sibling(&a.out, "md"), table.to_markdown()),
        (sibling(&a.out, "json"), sorted_json::to_sorted_string(&table)?),
    ];
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    for (path, text) in &outputs {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        prov.output(path);
    }
    prov.write(&sibling(&a.out, "provenance.json"))?;
    print!("{}", table.to_markdown());
    Ok(ExitCode::SUCCESS)
}

fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&a.manifest)?;
    println!(
        "manifest `{}`: {} videos, {} test samples",
        manifest.name,
        manifest.videos.len(),
        manifest.test_sample_ids().len()
    );
    let Some(path) = a.descriptions else { return Ok(ExitCode::SUCCESS) };
    let store = load_descriptions(&path, &manifest)?;
    let report = match &a.concepts {
        Some(c) => validate_concepts(&store, &manifest, c),
        None => validate_store(&store, &manifest),
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for (concept, r) in &report.concepts {
        println!(
            "{concept}: {}/{} videos complete, {} entries missing",
            r.complete_videos,
            r.total_videos,
            r.missing.len()
        );
    }
    for c in &report.absent_concepts {
        println!("{c}: absent");
    }
    let missing = report.total_missing();
    if missing > 0 {
        for key in report.missing_keys().take(20) {
            eprintln!("missing {key}");
        }
        bail!("{missing} description entries are missing");
    }
    Ok(ExitCode::SUCCESS)
}
