use std::collections::HashMap;

use super::{Split, TkgDataset};

/// Whether true-triple lookups are keyed by time step or ignore it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimeScope {
    #[default]
    PerStep,
    /// Every fact counts as true at every step.
    Static,
}

/// Completions of `(s, r, ?, t)` and `(?, r, o, t)` over a union of splits.
#[derive(Clone, Debug, Default)]
pub struct TrueTripleIndex {
    scope: TimeScope,
    objects: HashMap<(usize, usize, usize), Vec<usize>>,
    subjects: HashMap<(usize, usize, usize), Vec<usize>>,
}

impl TrueTripleIndex {
    fn key_time(&self, t: usize) -> usize {
        match self.scope {
            TimeScope::PerStep => t,
            TimeScope::Static => 0,
        }
    }

    pub fn scope(&self) -> TimeScope {
        self.scope
    }

    /// Sorted objects `o` with `(s, r, o, t)` known true.
    pub fn objects(&self, s: usize, r: usize, t: usize) -> &[usize] {
        self.objects.get(&(s, r, self.key_time(t))).map_or(&[], Vec::as_slice)
    }

    /// Sorted subjects `s` with `(s, r, o, t)` known true.
    pub fn subjects(&self, r: usize, o: usize, t: usize) -> &[usize] {
        self.subjects.get(&(r, o, self.key_time(t))).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, s: usize, r: usize, o: usize, t: usize) -> bool {
        self.objects(s, r, t).binary_search(&o).is_ok()
    }
}

pub fn build_true_index(ds: &TkgDataset, splits: &[Split], scope: TimeScope) -> TrueTripleIndex {
    let mut index = TrueTripleIndex { scope, ..Default::default() };
    for &split in splits {
        for q in ds.quadruples(split) {
            let t = index.key_time(q.time);
            index.objects.entry((q.subject, q.relation, t)).or_default().push(q.object);
            index.subjects.entry((q.relation, q.object, t)).or_default().push(q.subject);
        }
    }
    for v in index.objects.values_mut().chain(index.subjects.values_mut()) {
        v.sort_unstable();
        v.dedup();
    }
    index
}
