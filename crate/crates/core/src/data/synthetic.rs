use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, Quadruple, TkgDataset, Triple};

/// Parameters of the synthetic temporal graph generator.
///
/// Each step draws `facts_per_step` slots. For `t >= period`, slot `i` is a
/// copy of slot `i` at `t - period` with probability `periodicity`, and a
/// fresh uniformly random triple otherwise. Steps before `period` are
/// training-only warm-up. A fact whose triple also occurs at `t - period`
/// is only held out (valid/test) when that earlier occurrence is in train,
/// so with `periodicity = 1` every held-out fact recurs in training history.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    pub steps: usize,
    pub facts_per_step: usize,
    pub period: usize,
    pub periodicity: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            entities: 20,
            relations: 4,
            steps: 10,
            facts_per_step: 30,
            period: 1,
            periodicity: 0.5,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<TkgDataset, DataError> {
    if spec.entities == 0 || spec.steps == 0 || spec.relations == 0 {
        return Err(DataError::Invalid("synthetic spec needs at least one entity, relation and step".into()));
    }
    if !(0.0..=1.0).contains(&spec.periodicity) {
        return Err(DataError::Invalid(format!("periodicity {} outside [0, 1]", spec.periodicity)));
    }
    if spec.valid_fraction < 0.0 || spec.test_fraction < 0.0 || spec.valid_fraction + spec.test_fraction > 1.0 {
        return Err(DataError::Invalid("held-out fractions must be nonnegative and sum to at most 1".into()));
    }
    let period = spec.period.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fresh = |rng: &mut ChaCha8Rng| {
        let s = rng.random_range(0..spec.entities);
        let mut o = rng.random_range(0..spec.entities);
        if spec.entities > 1 {
            while o == s {
                o = rng.random_range(0..spec.entities);
            }
        }
        Triple::new(s, rng.random_range(0..spec.relations), o)
    };

    let mut slots: Vec<Vec<Triple>> = Vec::with_capacity(spec.steps);
    for t in 0..spec.steps {
        let row = (0..spec.facts_per_step)
            .map(|i| {
                let copy = t >= period && rng.random::<f64>() < spec.periodicity;
                if copy {
                    slots[t - period][i]
                } else {
                    fresh(&mut rng)
                }
            })
            .collect();
        slots.push(row);
    }

    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let mut train_sets: Vec<Vec<Triple>> = Vec::with_capacity(spec.steps);
    for (t, row) in slots.iter().enumerate() {
        let mut uniq = row.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let mut train_here = Vec::new();
        for tr in uniq {
            let earlier = t.checked_sub(period).map(|p| (slots[p].contains(&tr), train_sets[p].binary_search(&tr).is_ok()));
            let eligible = match earlier {
                None => false,
                Some((false, _)) => true,
                Some((true, in_train)) => in_train,
            };
            let u: f64 = rng.random();
            let q = Quadruple::new(tr.subject, tr.relation, tr.object, t);
            if eligible && u < spec.test_fraction {
                test.push(q);
            } else if eligible && u < spec.test_fraction + spec.valid_fraction {
                valid.push(q);
            } else {
                train.push(q);
                train_here.push(tr);
            }
        }
        train_sets.push(train_here);
    }
    let ds = TkgDataset::from_quadruples(spec.entities, spec.relations, spec.steps, &train, &valid, &test);
    ds.validate()?;
    Ok(ds)
}
