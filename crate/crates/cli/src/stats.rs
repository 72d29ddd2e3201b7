//! Dataset statistics: sizes, per-step activity and trailing-window activity.

use std::io::{self, Write};

use tkgc_core::data::{active_entities, Split, TkgDataset};

#[derive(Clone, Debug, PartialEq)]
pub struct StepActivity {
    pub step: usize,
    /// Entities with at least one fact at the step.
    pub active: usize,
    /// Active entities also active in one of the preceding `history` steps.
    pub active_with_history: usize,
    /// Mean over active entities of their fact count in the preceding
    /// `history` steps; `None` when nothing is active.
    pub mean_recent_occurrences: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub steps: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub history: usize,
    pub per_step: Vec<StepActivity>,
}

/// Statistics over the union of all splits.
pub fn dataset_stats(ds: &TkgDataset, history: usize) -> DatasetStats {
    let e = ds.entity_count;
    let snaps: Vec<_> = (0..ds.step_count).map(|t| ds.all_at(t)).collect();
    // occurrences[t][i]: facts of entity i at step t
    let occurrences: Vec<Vec<u32>> = snaps
        .iter()
        .map(|s| {
            let mut c = vec![0u32; e];
            for tr in s.triples() {
                c[tr.subject] += 1;
                if tr.object != tr.subject {
                    c[tr.object] += 1;
                }
            }
            c
        })
        .collect();
    let per_step = snaps
        .iter()
        .enumerate()
        .map(|(t, snap)| {
            let active = active_entities(snap);
            let lo = t.saturating_sub(history);
            let recent = |i: usize| (lo..t).map(|k| occurrences[k][i] as u64).sum::<u64>();
            let with_history = active.iter().filter(|&&i| recent(i) > 0).count();
            let mean = (!active.is_empty()).then(|| active.iter().map(|&i| recent(i) as f64).sum::<f64>() / active.len() as f64);
            StepActivity { step: t, active: active.len(), active_with_history: with_history, mean_recent_occurrences: mean }
        })
        .collect();
    DatasetStats {
        entities: e,
        relations: ds.relation_count,
        steps: ds.step_count,
        train: ds.split_len(Split::Train),
        valid: ds.split_len(Split::Valid),
        test: ds.split_len(Split::Test),
        history,
        per_step,
    }
}

impl DatasetStats {
    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "metric,value")?;
        for (k, v) in [
            ("entities", self.entities),
            ("relations", self.relations),
            ("steps", self.steps),
            ("train", self.train),
            ("valid", self.valid),
            ("test", self.test),
            ("total", self.train + self.valid + self.test),
        ] {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }

    pub fn write_per_step<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,active,active_with_history,mean_recent_occurrences")?;
        for s in &self.per_step {
            let mean = s.mean_recent_occurrences.map(|m| m.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", s.step, s.active, s.active_with_history, mean)?;
        }
        Ok(())
    }

    /// Histogram of the per-step mean recent occurrences in unit bins.
    pub fn activity_histogram(&self) -> Vec<(usize, usize)> {
        let means: Vec<f64> = self.per_step.iter().filter_map(|s| s.mean_recent_occurrences).collect();
        let top = means.iter().fold(0.0f64, |a, &b| a.max(b)).floor() as usize;
        let mut bins = vec![0; top + 1];
        for m in means {
            bins[m.floor() as usize] += 1;
        }
        bins.into_iter().enumerate().collect()
    }

    pub fn write_histogram<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,steps")?;
        for (lo, n) in self.activity_histogram() {
            writeln!(w, "{},{},{}", lo, lo + 1, n)?;
        }
        Ok(())
    }
}
