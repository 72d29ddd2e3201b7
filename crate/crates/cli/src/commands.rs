//! Subcommand implementations. Each returns the files it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use tkgc_core::data::{generate_synthetic, load_dataset, write_dataset, Quadruple, TkgDataset};
use tkgc_core::error::ModelError;
use tkgc_core::eval::{evaluate, read_jsonl, subsample, tpf_binned_analysis, write_bins_csv, RankingReport};
use tkgc_core::heterogeneity::compute_tpf;
use tkgc_core::model::Model;
use tkgc_core::ted::{TedIndex, TedScorer};
use tkgc_core::train::{evaluate_model, train};
use tkgc_tensor::{load_checkpoint, save_checkpoint, ParamStore};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{write_atomic, write_with};
use crate::stats::{dataset_stats, DatasetStats};

/// Resolved inputs shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Context {
    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("model.ckpt"))
    }

    pub fn dataset(&self) -> Result<TkgDataset, CliError> {
        let path =
            self.config.data.path.as_ref().ok_or_else(|| CliError::Config("no dataset path; set [data] path or pass --data".into()))?;
        Ok(load_dataset(path, &self.config.load_options())?)
    }
}

fn eval_queries(ctx: &Context, ds: &TkgDataset) -> Vec<Quadruple> {
    let all: Vec<Quadruple> = ds.quadruples(ctx.config.eval.split).collect();
    match ctx.config.eval.max_queries {
        0 => all,
        n => subsample(&all, n),
    }
}

fn write_report(ctx: &Context, prefix: &str, report: &RankingReport) -> Result<Vec<PathBuf>, CliError> {
    let edges = &ctx.config.eval.bin_edges;
    let bins = tpf_binned_analysis(&report.results, (!edges.is_empty()).then_some(edges.as_slice()));
    Ok(vec![
        write_with(&ctx.out.join(format!("{prefix}_summary.csv")), |w| report.write_summary_csv(w))?,
        write_with(&ctx.out.join(format!("{prefix}_results.jsonl")), |w| report.write_jsonl(w))?,
        write_with(&ctx.out.join(format!("{prefix}_bins.csv")), |w| write_bins_csv(&bins, w))?,
    ])
}

/// Loads a checkpoint into a model built from the configuration, rejecting
/// any difference in parameter names or shapes.
pub fn load_model(cfg: &RunConfig, ds: &TkgDataset, path: &Path) -> Result<Model, CliError> {
    let mut model = Model::new(cfg.model_config(ds.entity_count, ds.relation_count, ds.step_count), cfg.train.seed)?;
    let store = load_checkpoint(path)?;
    check_compatible(&model.store, &store)?;
    model.store = store;
    Ok(model)
}

fn check_compatible(expected: &ParamStore, found: &ParamStore) -> Result<(), CliError> {
    let mismatch = |m: String| CliError::Model(ModelError::CheckpointMismatch(m));
    if expected.len() != found.len() {
        return Err(mismatch(format!("expected {} tensors, found {}", expected.len(), found.len())));
    }
    for ((name, a), (other, b)) in expected.iter().zip(found.iter()) {
        if name != other {
            return Err(mismatch(format!("expected tensor `{name}`, found `{other}`")));
        }
        if a.shape() != b.shape() {
            return Err(mismatch(format!("`{name}` has shape {:?}, expected {:?}", b.shape(), a.shape())));
        }
    }
    Ok(())
}

fn ranking(ctx: &Context, ds: &TkgDataset, model: &Model) -> Result<RankingReport, CliError> {
    let quads = eval_queries(ctx, ds);
    let filter = ctx.config.filter().build(ds);
    let tpf = compute_tpf(ds, ctx.config.eval.tpf_window);
    let gate = model.config.gating.then_some(&tpf);
    let mut report = evaluate_model(model, ds, &quads, &filter, gate)?;
    for r in &mut report.results {
        r.tpf = Some(tpf.frequencies(&r.query.quad));
    }
    Ok(report)
}

pub fn train_cmd(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    ctx.config.validate()?;
    let ds = ctx.dataset()?;
    let cfg = ctx.config.train_config(ds.entity_count, ds.relation_count, ds.step_count);
    let outcome = train(&ds, &cfg, |_| {})?;
    let mut files = vec![write_atomic_str(&ctx.out.join("config.txt"), &ctx.config.render())?];
    let ckpt = ctx.checkpoint_path();
    if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    save_checkpoint(&outcome.model.store, &ckpt)?;
    files.push(ckpt);
    files.push(write_with(&ctx.out.join("training_log.jsonl"), |w| outcome.log.write_jsonl(w))?);
    let report = ranking(ctx, &ds, &outcome.model)?;
    files.extend(write_report(ctx, ctx.config.eval.split.name(), &report)?);
    Ok(files)
}

pub fn eval_cmd(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    ctx.config.validate()?;
    let ds = ctx.dataset()?;
    let path = ctx.checkpoint_path();
    let model = load_model(&ctx.config, &ds, &path)?;
    let report = ranking(ctx, &ds, &model)?;
    write_report(ctx, ctx.config.eval.split.name(), &report)
}

pub fn ted_cmd(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    ctx.config.validate()?;
    let ds = ctx.dataset()?;
    let index = TedIndex::new(&ds);
    let filter = ctx.config.filter().build(&ds);
    let mut files = Vec::new();
    for &split in &ctx.config.ted.splits {
        let quads: Vec<Quadruple> = ds.quadruples(split).collect();
        let mut rows = String::from("sigma,MRR,Hits1,Hits3,Hits10\n");
        for &sigma in &ctx.config.ted.sigmas {
            let scorer = TedScorer { index: &index, config: ctx.config.ted_config(sigma)? };
            let r = evaluate(&quads, &scorer, &filter, None)?;
            info!("ted {} sigma {sigma}: mrr {:.4} hits10 {:.4}", split.name(), r.mrr, r.hits10);
            rows.push_str(&format!("{sigma},{},{},{},{}\n", r.mrr, r.hits1, r.hits3, r.hits10));
        }
        files.push(write_atomic_str(&ctx.out.join(format!("ted_sweep_{}.csv", split.name())), &rows)?);
    }
    Ok(files)
}

pub fn synth_cmd(ctx: &Context, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let ds = generate_synthetic(&ctx.config.synth, seed)?;
    write_dataset(&ds, &ctx.out)?;
    Ok(["train.txt", "valid.txt", "test.txt", "stat.txt"].iter().map(|f| ctx.out.join(f)).collect())
}

pub fn stats_cmd(ctx: &Context) -> Result<(DatasetStats, Vec<PathBuf>), CliError> {
    let ds = ctx.dataset()?;
    let stats = dataset_stats(&ds, ctx.config.stats.history);
    let files = vec![
        write_with(&ctx.out.join("stats.csv"), |w| stats.write_summary(w))?,
        write_with(&ctx.out.join("activity_per_step.csv"), |w| stats.write_per_step(w))?,
        write_with(&ctx.out.join("activity_histogram.csv"), |w| stats.write_histogram(w))?,
    ];
    Ok((stats, files))
}

pub fn analyze_cmd(ctx: &Context, results: &Path) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(results).map_err(CliError::io(results))?;
    let results = read_jsonl(&text)?;
    let edges = &ctx.config.eval.bin_edges;
    let rows = tpf_binned_analysis(&results, (!edges.is_empty()).then_some(edges.as_slice()));
    Ok(vec![write_with(&ctx.out.join("bins.csv"), |w| write_bins_csv(&rows, w))?])
}

fn write_atomic_str(path: &Path, s: &str) -> Result<PathBuf, CliError> {
    write_atomic(path, s.as_bytes())?;
    Ok(path.to_path_buf())
}
