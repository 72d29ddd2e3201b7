//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p tkgc-cli --test acceptance`; add `-- --list` to
//! see the criteria without running them.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use tkgc_core::data::{build_true_index, generate_synthetic, Quadruple, Split, SyntheticSpec, TimeScope};
use tkgc_core::eval::evaluate;
use tkgc_core::model::Variant;
use tkgc_core::ted::{TedConfig, TedIndex, TedScorer};

#[path = "../../../core/tests/common/model_grads.rs"]
mod model_grads;
#[path = "../../../tensor/tests/common/primitives.rs"]
mod primitives;
#[path = "../../../core/tests/common/rank_ref.rs"]
mod rank_ref;
#[path = "../../../core/tests/common/ted_ref.rs"]
mod ted_ref;

mod icews;
mod invariants;
mod training;

pub enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn gradients() -> Outcome {
    const TOL: f64 = 1e-5;
    let mut worst = ("", 0.0f64);
    let mut checked = 0;
    for (name, r) in primitives::primitive_reports() {
        checked += r.checked;
        if r.max_rel_error > worst.1 {
            worst = (name, r.max_rel_error);
        }
    }
    let losses = [
        ("temp-gru", model_grads::config(Variant::TempGru)),
        ("temp-gru full", model_grads::full(Variant::TempGru, false)),
        ("temp-gru bidirectional", model_grads::full(Variant::TempGru, true)),
        ("temp-sa", model_grads::config(Variant::TempSa)),
        ("temp-sa full", model_grads::full(Variant::TempSa, false)),
        ("temp-sa bidirectional", model_grads::full(Variant::TempSa, true)),
    ];
    for (name, config) in losses {
        let err = model_grads::check(config, tkgc_core::decoder::LossMode::CrossEntropy);
        if err > worst.1 {
            worst = (name, err);
        }
    }
    let detail = format!("{checked} primitive gradients and 6 losses, worst {:.2e} ({})", worst.1, worst.0);
    if worst.1 < TOL {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn ranking_oracle() -> Outcome {
    let n = rank_ref::check_random_rankings(2024, 1000);
    Outcome::Pass(format!("{n} queries identical to the brute-force oracle"))
}

fn ted_oracle() -> Outcome {
    ted_ref::check_against_oracle(50, 50);
    let spec = SyntheticSpec { entities: 50, relations: 4, steps: 40, facts_per_step: 40, periodicity: 0.8, ..SyntheticSpec::default() };
    let run = || {
        let ds = generate_synthetic(&spec, 3).unwrap();
        let index = TedIndex::new(&ds);
        let filter = build_true_index(&ds, &Split::ALL, TimeScope::PerStep);
        let quads: Vec<Quadruple> = ds.quadruples(Split::Test).collect();
        let scorer = TedScorer { index: &index, config: TedConfig::new(0.1).unwrap() };
        let report = evaluate(&quads, &scorer, &filter, None).unwrap();
        let mut bytes = Vec::new();
        report.write_jsonl(&mut bytes).unwrap();
        report.write_summary_csv(&mut bytes).unwrap();
        bytes
    };
    let (a, b) = (run(), run());
    if a == b {
        Outcome::Pass(format!("50 corpora match the oracle; reruns byte-identical ({} bytes)", a.len()))
    } else {
        Outcome::Fail("reruns differ".into())
    }
}

fn non_reproduction() -> Outcome {
    Outcome::Pass(
        "documented: full-scale neural results on ICEWS14 (e.g. temp-gru MRR 0.601) take GPU-days \
         and are not reproduced here; criteria 1-6 stand in for them"
            .into(),
    )
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "gradient correctness", budget: Duration::from_secs(30), run: gradients },
    Criterion { id: 2, name: "ranking oracle equivalence", budget: Duration::from_secs(10), run: ranking_oracle },
    Criterion { id: 3, name: "TED oracle equivalence and determinism", budget: Duration::from_secs(10), run: ted_oracle },
    Criterion { id: 4, name: "invariant suite", budget: Duration::from_secs(60), run: invariants::run },
    Criterion { id: 5, name: "overfit check", budget: Duration::from_secs(300), run: training::overfit },
    Criterion { id: 6, name: "replication effect", budget: Duration::from_secs(600), run: training::replication },
    Criterion { id: 7, name: "ICEWS14 statistics and TED", budget: Duration::from_secs(1800), run: icews::run },
    Criterion { id: 8, name: "explicit non-reproduction", budget: Duration::from_secs(1), run: non_reproduction },
];

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for c in CRITERIA {
            println!("criterion {}: test", c.id);
        }
        return ExitCode::SUCCESS;
    }
    // Budgets are stated for a single thread.
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().ok();
    panic::set_hook(Box::new(|_| {}));

    let mut failed = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Outcome::Fail(msg.replace('\n', " "))
        });
        let elapsed = start.elapsed();
        let (status, mut detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        let status = if status == "PASS" && elapsed > c.budget {
            detail = format!("{detail}; over the {}s budget", c.budget.as_secs());
            "FAIL"
        } else {
            status
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("[{status}] criterion {} {}: {detail} ({:.1}s)", c.id, c.name, elapsed.as_secs_f64());
    }
    println!("acceptance: {} criteria, {failed} failed", CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
