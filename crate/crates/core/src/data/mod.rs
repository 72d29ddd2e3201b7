//! Quadruples, snapshots, datasets and the true-triple index.

mod index;
mod loader;
mod synthetic;

use std::collections::BTreeSet;

pub use index::{build_true_index, TimeScope, TrueTripleIndex};
pub use loader::{load_dataset, write_dataset, DataError, DatasetFormat, LoadOptions, TimeGranularity};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// A timestamped fact `(subject, relation, object, time)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub time: usize,
}

impl Quadruple {
    pub fn new(subject: usize, relation: usize, object: usize, time: usize) -> Self {
        Self { subject, relation, object, time }
    }

    pub fn triple(&self) -> Triple {
        Triple::new(self.subject, self.relation, self.object)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

impl Triple {
    pub fn new(subject: usize, relation: usize, object: usize) -> Self {
        Self { subject, relation, object }
    }

    pub fn at(self, time: usize) -> Quadruple {
        Quadruple::new(self.subject, self.relation, self.object, time)
    }
}

/// Facts observed at one time step, kept sorted and free of duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub time: usize,
    triples: Vec<Triple>,
}

impl Snapshot {
    pub fn new(time: usize, mut triples: Vec<Triple>) -> Self {
        triples.sort_unstable();
        triples.dedup();
        Self { time, triples }
    }

    pub fn empty(time: usize) -> Self {
        Self { time, triples: Vec::new() }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    pub fn quadruples(&self) -> impl Iterator<Item = Quadruple> + '_ {
        self.triples.iter().map(move |t| t.at(self.time))
    }
}

/// Entities appearing as subject or object of any triple in `snapshot`.
pub fn active_entities(snapshot: &Snapshot) -> BTreeSet<usize> {
    snapshot.triples().iter().flat_map(|t| [t.subject, t.object]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "valid" | "validation" | "dev" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Discrete-time multigraph with shared vocabularies and three splits over
/// a common time axis `0..step_count`. Steps without facts are empty
/// snapshots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TkgDataset {
    pub entity_count: usize,
    pub relation_count: usize,
    pub step_count: usize,
    train: Vec<Snapshot>,
    valid: Vec<Snapshot>,
    test: Vec<Snapshot>,
    pub entity_names: Option<Vec<String>>,
    pub relation_names: Option<Vec<String>>,
}

impl TkgDataset {
    /// Groups quadruples into per-step snapshots. Indices are not checked
    /// here; see [`TkgDataset::validate`].
    pub fn from_quadruples(
        entity_count: usize,
        relation_count: usize,
        step_count: usize,
        train: &[Quadruple],
        valid: &[Quadruple],
        test: &[Quadruple],
    ) -> Self {
        let group = |quads: &[Quadruple]| {
            let mut per_step: Vec<Vec<Triple>> = vec![Vec::new(); step_count];
            for q in quads {
                if q.time < step_count {
                    per_step[q.time].push(q.triple());
                }
            }
            per_step.into_iter().enumerate().map(|(t, v)| Snapshot::new(t, v)).collect()
        };
        Self {
            entity_count,
            relation_count,
            step_count,
            train: group(train),
            valid: group(valid),
            test: group(test),
            entity_names: None,
            relation_names: None,
        }
    }

    pub fn split(&self, split: Split) -> &[Snapshot] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn snapshot(&self, split: Split, t: usize) -> &Snapshot {
        &self.split(split)[t]
    }

    pub fn quadruples(&self, split: Split) -> impl Iterator<Item = Quadruple> + '_ {
        self.split(split).iter().flat_map(Snapshot::quadruples)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).iter().map(Snapshot::len).sum()
    }

    pub fn total_len(&self) -> usize {
        Split::ALL.iter().map(|&s| self.split_len(s)).sum()
    }

    /// Checks vocabulary ranges, the time axis and per-step disjointness of
    /// train and test.
    pub fn validate(&self) -> Result<(), DataError> {
        for split in Split::ALL {
            let snaps = self.split(split);
            if snaps.len() != self.step_count {
                return Err(DataError::Invalid(format!("{} has {} snapshots, expected {}", split.name(), snaps.len(), self.step_count)));
            }
            for (t, snap) in snaps.iter().enumerate() {
                if snap.time != t {
                    return Err(DataError::Invalid(format!("{} snapshot {t} labelled {}", split.name(), snap.time)));
                }
                for tr in snap.triples() {
                    if tr.subject >= self.entity_count || tr.object >= self.entity_count || tr.relation >= self.relation_count {
                        return Err(DataError::Invalid(format!(
                            "{} fact {:?} at t={t} outside vocabulary ({} entities, {} relations)",
                            split.name(),
                            tr,
                            self.entity_count,
                            self.relation_count
                        )));
                    }
                }
            }
        }
        for t in 0..self.step_count {
            if let Some(tr) = self.test[t].triples().iter().find(|tr| self.train[t].contains(tr)) {
                return Err(DataError::Invalid(format!("fact {tr:?} at t={t} is in both train and test")));
            }
        }
        Ok(())
    }

    /// Union of all splits at step `t`.
    pub fn all_at(&self, t: usize) -> Snapshot {
        let mut v: Vec<Triple> = Vec::new();
        for split in Split::ALL {
            v.extend_from_slice(self.split(split)[t].triples());
        }
        Snapshot::new(t, v)
    }
}
