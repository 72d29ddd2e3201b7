//! Run configuration: `key = value` lines grouped under `[section]` headers.
//! Every key has a default; unknown sections and keys are errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use tkgc_core::data::{DatasetFormat, LoadOptions, Split, SyntheticSpec, TimeGranularity, TimeScope};
use tkgc_core::decoder::{DecoderKind, LossMode};
use tkgc_core::heterogeneity::{FrequencyTransform, TpfWindow};
use tkgc_core::model::{ModelConfig, Variant};
use tkgc_core::ted::{TedConfig, TierPolicy};
use tkgc_core::train::{FilterConfig, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub format: DatasetFormat,
    pub time_granularity: TimeGranularity,
    pub allow_extra_columns: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub variant: Variant,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub window: usize,
    pub bidirectional: bool,
    pub gating: bool,
    pub imputation: bool,
    pub positional: bool,
    pub decoder: DecoderKind,
    pub gate_hidden: usize,
    pub frequency_transform: FrequencyTransform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_snapshots: usize,
    pub snapshot_cap: usize,
    pub negatives: usize,
    pub dropout_current: f64,
    pub dropout_reference: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss: LossMode,
    pub valid_queries: usize,
    pub valid_split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub split: Split,
    pub filter_splits: Vec<Split>,
    pub filter_scope: TimeScope,
    pub tpf_window: TpfWindow,
    /// 0 = every quadruple.
    pub max_queries: usize,
    /// Bin edges in `log10(1 + f)`; empty = unit bins.
    pub bin_edges: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TedSection {
    pub sigmas: Vec<f64>,
    pub policy: String,
    pub weights: [f64; 3],
    pub splits: Vec<Split>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsSection {
    pub history: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub ted: TedSection,
    pub synth: SyntheticSpec,
    pub stats: StatsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSection {
                path: None,
                format: DatasetFormat::Auto,
                time_granularity: TimeGranularity::Auto,
                allow_extra_columns: false,
            },
            model: ModelSection {
                variant: Variant::TempGru,
                dim: 128,
                layers: 2,
                heads: 8,
                window: 15,
                bidirectional: false,
                gating: false,
                imputation: false,
                positional: false,
                decoder: DecoderKind::ComplEx,
                gate_hidden: 64,
                frequency_transform: FrequencyTransform::Log1p,
            },
            train: TrainSection {
                lr: 0.001,
                batch_snapshots: 8,
                snapshot_cap: 3000,
                negatives: 500,
                dropout_current: 0.5,
                dropout_reference: 0.2,
                max_epochs: 100,
                patience: 10,
                seed: 0,
                loss: LossMode::CrossEntropy,
                valid_queries: 1000,
                valid_split: Split::Valid,
            },
            eval: EvalSection {
                split: Split::Test,
                filter_splits: Split::ALL.to_vec(),
                filter_scope: TimeScope::PerStep,
                tpf_window: TpfWindow::StrictPast,
                max_queries: 0,
                bin_edges: Vec::new(),
            },
            ted: TedSection {
                sigmas: vec![1e-5, 1e-3, 1e-2, 0.1, 1.0, 10.0, 1e5],
                policy: "lexicographic".into(),
                weights: [100.0, 10.0, 1.0],
                splits: vec![Split::Valid, Split::Test],
            },
            synth: SyntheticSpec::default(),
            stats: StatsSection { history: 15 },
        }
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid number `{v}`"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{v}`")),
    }
}

fn parse_with<T>(v: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<T, String> {
    f(v).ok_or_else(|| format!("invalid {what} `{v}`"))
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn parse_splits(v: &str) -> Result<Vec<Split>, String> {
    match v {
        "all" => Ok(Split::ALL.to_vec()),
        "train_test" => Ok(vec![Split::Train, Split::Test]),
        _ => parse_list(v, |s| parse_with(s, "split", Split::parse)),
    }
}

fn parse_scope(v: &str) -> Result<TimeScope, String> {
    match v {
        "per_step" => Ok(TimeScope::PerStep),
        "static" => Ok(TimeScope::Static),
        _ => Err(format!("invalid filter scope `{v}`")),
    }
}

fn scope_name(s: TimeScope) -> &'static str {
    match s {
        TimeScope::PerStep => "per_step",
        TimeScope::Static => "static",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| CliError::Config(format!("line {}: {reason}", i + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
                section = name.trim().to_string();
                if !matches!(section.as_str(), "data" | "model" | "train" | "eval" | "ted" | "synth" | "stats") {
                    return Err(err(format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            cfg.set(&section, key.trim(), value.trim()).map_err(err)?;
        }
        Ok(cfg)
    }

    /// Sets one key; `section.key` form is accepted with an empty section.
    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<(), String> {
        let (section, key) = match (section, key.split_once('.')) {
            ("", Some((s, k))) => (s, k),
            _ => (section, key),
        };
        match (section, key) {
            ("data", "path") => self.data.path = Some(PathBuf::from(v)),
            ("data", "format") => self.data.format = parse_with(v, "format", DatasetFormat::parse)?,
            ("data", "time_granularity") => self.data.time_granularity = parse_with(v, "time granularity", TimeGranularity::parse)?,
            ("data", "allow_extra_columns") => self.data.allow_extra_columns = parse_bool(v)?,

            ("model", "variant") => self.model.variant = parse_with(v, "variant", Variant::parse)?,
            ("model", "dim") => self.model.dim = parse_num(v)?,
            ("model", "layers") => self.model.layers = parse_num(v)?,
            ("model", "heads") => self.model.heads = parse_num(v)?,
            ("model", "window") => self.model.window = parse_num(v)?,
            ("model", "bidirectional") => self.model.bidirectional = parse_bool(v)?,
            ("model", "gating") => self.model.gating = parse_bool(v)?,
            ("model", "imputation") => self.model.imputation = parse_bool(v)?,
            ("model", "positional") => self.model.positional = parse_bool(v)?,
            ("model", "decoder") => self.model.decoder = parse_with(v, "decoder", DecoderKind::parse)?,
            ("model", "gate_hidden") => self.model.gate_hidden = parse_num(v)?,
            ("model", "frequency_transform") => {
                self.model.frequency_transform = parse_with(v, "frequency transform", FrequencyTransform::parse)?
            }

            ("train", "lr") => self.train.lr = parse_num(v)?,
            ("train", "batch_snapshots") => self.train.batch_snapshots = parse_num(v)?,
            ("train", "snapshot_cap") => self.train.snapshot_cap = parse_num(v)?,
            ("train", "negatives") => self.train.negatives = parse_num(v)?,
            ("train", "dropout_current") => self.train.dropout_current = parse_num(v)?,
            ("train", "dropout_reference") => self.train.dropout_reference = parse_num(v)?,
            ("train", "max_epochs") => self.train.max_epochs = parse_num(v)?,
            ("train", "patience") => self.train.patience = parse_num(v)?,
            ("train", "seed") => self.train.seed = parse_num(v)?,
            ("train", "loss") => self.train.loss = parse_with(v, "loss", LossMode::parse)?,
            ("train", "valid_queries") => self.train.valid_queries = parse_num(v)?,
            ("train", "valid_split") => self.train.valid_split = parse_with(v, "split", Split::parse)?,

            ("eval", "split") => self.eval.split = parse_with(v, "split", Split::parse)?,
            ("eval", "filter_splits") => self.eval.filter_splits = parse_splits(v)?,
            ("eval", "filter_scope") => self.eval.filter_scope = parse_scope(v)?,
            ("eval", "tpf_window") => self.eval.tpf_window = parse_with(v, "frequency window", TpfWindow::parse)?,
            ("eval", "max_queries") => self.eval.max_queries = parse_num(v)?,
            ("eval", "bin_edges") => self.eval.bin_edges = parse_list(v, parse_num)?,

            ("ted", "sigmas") => self.ted.sigmas = parse_list(v, parse_num)?,
            ("ted", "policy") => {
                parse_with(v, "tier policy", TierPolicy::parse)?;
                self.ted.policy = v.to_string();
            }
            ("ted", "weights") => {
                let w: Vec<f64> = parse_list(v, parse_num)?;
                self.ted.weights = w.try_into().map_err(|_| "expected three tier weights".to_string())?;
            }
            ("ted", "splits") => self.ted.splits = parse_splits(v)?,

            ("synth", "entities") => self.synth.entities = parse_num(v)?,
            ("synth", "relations") => self.synth.relations = parse_num(v)?,
            ("synth", "steps") => self.synth.steps = parse_num(v)?,
            ("synth", "facts_per_step") => self.synth.facts_per_step = parse_num(v)?,
            ("synth", "period") => self.synth.period = parse_num(v)?,
            ("synth", "periodicity") => self.synth.periodicity = parse_num(v)?,
            ("synth", "valid_fraction") => self.synth.valid_fraction = parse_num(v)?,
            ("synth", "test_fraction") => self.synth.test_fraction = parse_num(v)?,

            ("stats", "history") => self.stats.history = parse_num(v)?,

            ("", _) => return Err(format!("key `{key}` outside any section")),
            _ => return Err(format!("unknown key `{key}` in [{section}]")),
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: self.data.format,
            time_granularity: self.data.time_granularity,
            allow_extra_columns: self.data.allow_extra_columns,
        }
    }

    pub fn model_config(&self, entities: usize, relations: usize, steps: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            dim: m.dim,
            layers: m.layers,
            heads: m.heads,
            window: m.window,
            bidirectional: m.bidirectional,
            gating: m.gating,
            imputation: m.imputation,
            positional: m.positional,
            decoder: m.decoder,
            gate_hidden: m.gate_hidden,
            frequency_transform: m.frequency_transform,
            ..ModelConfig::new(m.variant, entities, relations, steps)
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig { splits: self.eval.filter_splits.clone(), scope: self.eval.filter_scope }
    }

    pub fn train_config(&self, entities: usize, relations: usize, steps: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            batch_snapshots: t.batch_snapshots,
            snapshot_cap: t.snapshot_cap,
            negatives: t.negatives,
            dropout_current: t.dropout_current,
            dropout_reference: t.dropout_reference,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            loss: t.loss,
            valid_queries: t.valid_queries,
            valid_split: t.valid_split,
            tpf_window: self.eval.tpf_window,
            filter: self.filter(),
            ..TrainConfig::new(self.model_config(entities, relations, steps))
        }
    }

    pub fn ted_config(&self, sigma: f64) -> Result<TedConfig, CliError> {
        let mut c = TedConfig::new(sigma)?;
        c.policy = match TierPolicy::parse(&self.ted.policy) {
            Some(TierPolicy::BlendSum(_)) => TierPolicy::BlendSum(self.ted.weights),
            Some(p) => p,
            None => return Err(CliError::Config(format!("invalid tier policy `{}`", self.ted.policy))),
        };
        Ok(c)
    }

    /// Checks values that parse but cannot run.
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CliError::Config(msg.to_string())) };
        check(m.dim > 0 && m.layers > 0 && m.heads > 0 && m.gate_hidden > 0, "model sizes must be positive")?;
        check(m.dim.is_multiple_of(m.heads), "dim must be divisible by heads")?;
        m.decoder.check_dim(m.dim)?;
        check(self.ted.sigmas.iter().all(|&s| s > 0.0), "every sigma must be positive")?;
        check(!self.eval.filter_splits.is_empty(), "filter_splits must name at least one split")?;
        check(self.eval.bin_edges.windows(2).all(|w| w[0] < w[1]), "bin_edges must be increasing")?;
        // sizes are placeholders; only the dataset-independent checks matter here
        self.train_config(1, 1, 1).validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Every key with its effective value, in the file format.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let splits = |v: &[Split]| v.iter().map(|x| x.name()).collect::<Vec<_>>().join(",");
        let d = &self.data;
        let _ = writeln!(s, "[data]");
        if let Some(p) = &d.path {
            let _ = writeln!(s, "path = {}", p.display());
        }
        let fmt = match d.format {
            DatasetFormat::Auto => "auto",
            DatasetFormat::Integer => "integer",
            DatasetFormat::Named => "named",
        };
        let gran = match d.time_granularity {
            TimeGranularity::Auto => "auto".to_string(),
            TimeGranularity::Index => "index".to_string(),
            TimeGranularity::Daily => "daily".to_string(),
            TimeGranularity::Divide(n) => format!("divide:{n}"),
        };
        let _ = writeln!(s, "format = {fmt}\ntime_granularity = {gran}\nallow_extra_columns = {}", d.allow_extra_columns);
        let m = &self.model;
        let _ = writeln!(
            s,
            "\n[model]\nvariant = {}\ndim = {}\nlayers = {}\nheads = {}\nwindow = {}\nbidirectional = {}\ngating = {}\nimputation = {}\npositional = {}\ndecoder = {}\ngate_hidden = {}\nfrequency_transform = {}",
            m.variant.name(),
            m.dim,
            m.layers,
            m.heads,
            m.window,
            m.bidirectional,
            m.gating,
            m.imputation,
            m.positional,
            m.decoder.name(),
            m.gate_hidden,
            m.frequency_transform.name()
        );
        let t = &self.train;
        let _ = writeln!(
            s,
            "\n[train]\nlr = {}\nbatch_snapshots = {}\nsnapshot_cap = {}\nnegatives = {}\ndropout_current = {}\ndropout_reference = {}\nmax_epochs = {}\npatience = {}\nseed = {}\nloss = {}\nvalid_queries = {}\nvalid_split = {}",
            t.lr,
            t.batch_snapshots,
            t.snapshot_cap,
            t.negatives,
            t.dropout_current,
            t.dropout_reference,
            t.max_epochs,
            t.patience,
            t.seed,
            t.loss.name(),
            t.valid_queries,
            t.valid_split.name()
        );
        let e = &self.eval;
        let _ = writeln!(
            s,
            "\n[eval]\nsplit = {}\nfilter_splits = {}\nfilter_scope = {}\ntpf_window = {}\nmax_queries = {}\nbin_edges = {}",
            e.split.name(),
            splits(&e.filter_splits),
            scope_name(e.filter_scope),
            e.tpf_window.name(),
            e.max_queries,
            join(&e.bin_edges)
        );
        let _ = writeln!(
            s,
            "\n[ted]\nsigmas = {}\npolicy = {}\nweights = {}\nsplits = {}",
            join(&self.ted.sigmas),
            self.ted.policy,
            join(&self.ted.weights),
            splits(&self.ted.splits)
        );
        let y = &self.synth;
        let _ = writeln!(
            s,
            "\n[synth]\nentities = {}\nrelations = {}\nsteps = {}\nfacts_per_step = {}\nperiod = {}\nperiodicity = {}\nvalid_fraction = {}\ntest_fraction = {}",
            y.entities, y.relations, y.steps, y.facts_per_step, y.period, y.periodicity, y.valid_fraction, y.test_fraction
        );
        let _ = writeln!(s, "\n[stats]\nhistory = {}", self.stats.history);
        s
    }
}
