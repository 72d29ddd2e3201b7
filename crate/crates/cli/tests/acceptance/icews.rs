use std::env;
use std::path::{Path, PathBuf};

use tkgc_cli::stats::dataset_stats;
use tkgc_core::data::{load_dataset, LoadOptions, Quadruple, Split, TimeGranularity, TkgDataset};
use tkgc_core::eval::{evaluate, RankingReport};
use tkgc_core::ted::{TedConfig, TedIndex, TedScorer};
use tkgc_core::train::FilterConfig;

use crate::Outcome;

const STEPS: usize = 365;

fn locate() -> Option<PathBuf> {
    let candidates = [
        env::var_os("TKG_ICEWS14_DIR").map(PathBuf::from),
        Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/ICEWS14"))),
    ];
    candidates.into_iter().flatten().find(|p| p.join("train.txt").exists())
}

/// Some packagings count time in hours; those load as one step per 24.
fn load(dir: &Path) -> Result<(TkgDataset, &'static str), String> {
    let opts = |time_granularity| LoadOptions { time_granularity, allow_extra_columns: true, ..LoadOptions::default() };
    let ds = load_dataset(dir, &opts(TimeGranularity::Auto)).map_err(|e| e.to_string())?;
    if ds.step_count != STEPS {
        let hourly = load_dataset(dir, &opts(TimeGranularity::Divide(24))).map_err(|e| e.to_string())?;
        if hourly.step_count == STEPS {
            return Ok((hourly, "hours / 24"));
        }
    }
    Ok((ds, "auto"))
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

pub fn run() -> Outcome {
    let Some(dir) = locate() else {
        return Outcome::Skip("no dataset; set TKG_ICEWS14_DIR or place it in data/ICEWS14".into());
    };
    let (ds, granularity) = match load(&dir) {
        Ok(v) => v,
        Err(e) => return Outcome::Fail(format!("{}: {e}", dir.display())),
    };
    let mut problems = Vec::new();
    let s = dataset_stats(&ds, 15);
    let sizes = (s.entities, s.relations, s.steps, s.train, s.valid, s.test);
    if sizes != (7128, 230, 365, 72826, 8941, 8963) {
        problems.push(format!("stats {sizes:?}"));
    }

    let index = TedIndex::new(&ds);
    let filter = FilterConfig::default().build(&ds);
    let ted = |split: Split| -> RankingReport {
        let quads: Vec<Quadruple> = ds.quadruples(split).collect();
        let scorer = TedScorer { index: &index, config: TedConfig::new(0.1).unwrap() };
        evaluate(&quads, &scorer, &filter, None).unwrap()
    };
    let valid = ted(Split::Valid);
    let test = ted(Split::Test);
    if !within(valid.mrr, 0.455, 0.01) {
        problems.push(format!("valid MRR {:.4} vs 0.455", valid.mrr));
    }
    if !within(valid.hits10, 0.616, 0.01) {
        problems.push(format!("valid Hits@10 {:.4} vs 0.616", valid.hits10));
    }
    if !within(test.mrr, 0.441, 0.01) {
        problems.push(format!("test MRR {:.4} vs 0.441", test.mrr));
    }
    let detail = format!(
        "time {granularity}; stats {sizes:?}; TED sigma 0.1 valid MRR {:.4} Hits@10 {:.4}, test MRR {:.4}",
        valid.mrr, valid.hits10, test.mrr
    );
    if problems.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; off target: {}", problems.join(", ")))
    }
}
