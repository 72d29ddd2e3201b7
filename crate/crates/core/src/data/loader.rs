use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use thiserror::Error;

use super::{Quadruple, Split, TkgDataset};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {reason}")]
    Malformed { file: PathBuf, line: usize, reason: String },
    #[error("{file}:{line}: {reason}")]
    OutOfRange { file: PathBuf, line: usize, reason: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// How the subject/relation/object columns are encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Integer ids when the first fact parses as integers, names otherwise.
    #[default]
    Auto,
    Integer,
    /// Names resolved through `entity2id.txt` / `relation2id.txt`, or by
    /// first appearance when those files are absent.
    Named,
}

impl DatasetFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Self::Auto),
            "integer" | "int" | "ids" => Some(Self::Integer),
            "named" | "names" => Some(Self::Named),
            _ => None,
        }
    }
}

/// Mapping from the raw time column to step indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimeGranularity {
    /// Integer times used as step indices, dates mapped to day offsets.
    #[default]
    Auto,
    /// Integer times used as step indices unchanged.
    Index,
    /// Integer times divided by a fixed width.
    Divide(u64),
    /// `YYYY-MM-DD` dates, one step per day counted from the earliest date.
    Daily,
}

impl TimeGranularity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Self::Auto),
            "index" => Some(Self::Index),
            "daily" | "day" => Some(Self::Daily),
            _ => s.strip_prefix("divide:").and_then(|n| n.parse().ok()).filter(|&n| n > 0).map(Self::Divide),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    pub time_granularity: TimeGranularity,
    /// Accept and ignore columns after the fourth (some public packagings
    /// append a constant fifth column).
    pub allow_extra_columns: bool,
}

struct RawLine {
    line: usize,
    fields: [String; 4],
}

fn read_split(path: &Path, allow_extra: bool) -> Result<Vec<RawLine>, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(['\t', ' ']).filter(|c| !c.is_empty()).collect();
        if cols.len() != 4 && !(allow_extra && cols.len() > 4) {
            return Err(DataError::Malformed {
                file: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        out.push(RawLine { line: i + 1, fields: [cols[0].into(), cols[1].into(), cols[2].into(), cols[3].into()] });
    }
    Ok(out)
}

fn read_id_map(path: &Path) -> Result<Option<HashMap<String, usize>>, DataError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, id) = line.rsplit_once('\t').ok_or_else(|| DataError::Malformed {
            file: path.to_path_buf(),
            line: i + 1,
            reason: "expected `name<TAB>id`".into(),
        })?;
        let id: usize = id.trim().parse().map_err(|_| DataError::Malformed {
            file: path.to_path_buf(),
            line: i + 1,
            reason: format!("non-integer id `{}`", id.trim()),
        })?;
        map.insert(name.to_string(), id);
    }
    Ok(Some(map))
}

fn names_from_map(map: &HashMap<String, usize>) -> Vec<String> {
    let n = map.values().max().map_or(0, |m| m + 1);
    let mut names = vec![String::new(); n];
    for (k, &v) in map {
        names[v] = k.clone();
    }
    names
}

struct Stat {
    entities: usize,
    relations: usize,
    total: Option<usize>,
}

fn read_stat(path: &Path) -> Result<Option<Stat>, DataError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let nums: Vec<usize> = text.split_whitespace().map(|v| v.parse()).collect::<Result<_, _>>().map_err(|_| DataError::Malformed {
        file: path.to_path_buf(),
        line: 1,
        reason: "expected integers".into(),
    })?;
    if nums.len() < 2 {
        return Err(DataError::Malformed { file: path.to_path_buf(), line: 1, reason: "expected `num_entities num_relations`".into() });
    }
    Ok(Some(Stat { entities: nums[0], relations: nums[1], total: nums.get(2).copied().filter(|&n| n > 0) }))
}

enum Resolver {
    Ids,
    Names { map: HashMap<String, usize>, fixed: bool },
}

impl Resolver {
    fn resolve(&mut self, field: &str) -> Result<usize, String> {
        match self {
            Resolver::Ids => field.parse().map_err(|_| format!("non-integer field `{field}`")),
            Resolver::Names { map, fixed } => {
                if let Some(&id) = map.get(field) {
                    return Ok(id);
                }
                if *fixed {
                    return Err(format!("unknown name `{field}`"));
                }
                let id = map.len();
                map.insert(field.to_string(), id);
                Ok(id)
            }
        }
    }
}

enum RawTime {
    Int(u64),
    Date(NaiveDate),
}

fn parse_time(field: &str, granularity: TimeGranularity) -> Result<RawTime, String> {
    if granularity != TimeGranularity::Daily {
        if let Ok(v) = field.parse::<u64>() {
            return Ok(RawTime::Int(v));
        }
    }
    if matches!(granularity, TimeGranularity::Daily | TimeGranularity::Auto) {
        if let Ok(d) = NaiveDate::parse_from_str(field, "%Y-%m-%d") {
            return Ok(RawTime::Date(d));
        }
    }
    Err(format!("unparseable time `{field}`"))
}

/// Reads `train.txt`, `valid.txt`, `test.txt` (plus optional `stat.txt`,
/// `entity2id.txt`, `relation2id.txt`) from `dir`.
pub fn load_dataset(dir: &Path, opts: &LoadOptions) -> Result<TkgDataset, DataError> {
    let mut raw = Vec::new();
    for split in Split::ALL {
        let path = dir.join(format!("{}.txt", split.name()));
        raw.push((path.clone(), read_split(&path, opts.allow_extra_columns)?));
    }
    let stat = read_stat(&dir.join("stat.txt"))?;
    let entity_map = read_id_map(&dir.join("entity2id.txt"))?;
    let relation_map = read_id_map(&dir.join("relation2id.txt"))?;

    let format = match opts.format {
        DatasetFormat::Auto => {
            let first = raw.iter().flat_map(|(_, v)| v.first()).next();
            match first {
                Some(l) if l.fields[..3].iter().all(|f| f.parse::<usize>().is_ok()) => DatasetFormat::Integer,
                Some(_) => DatasetFormat::Named,
                None => DatasetFormat::Integer,
            }
        }
        f => f,
    };
    let (mut ents, mut rels) = match format {
        DatasetFormat::Named => (
            Resolver::Names { fixed: entity_map.is_some(), map: entity_map.clone().unwrap_or_default() },
            Resolver::Names { fixed: relation_map.is_some(), map: relation_map.clone().unwrap_or_default() },
        ),
        _ => (Resolver::Ids, Resolver::Ids),
    };

    // (split, s, r, o, raw time)
    let mut parsed: Vec<(usize, usize, usize, usize, RawTime)> = Vec::new();
    for (k, (path, lines)) in raw.iter().enumerate() {
        for l in lines {
            let err = |reason: String| DataError::Malformed { file: path.clone(), line: l.line, reason };
            let s = ents.resolve(&l.fields[0]).map_err(err)?;
            let r = rels.resolve(&l.fields[1]).map_err(err)?;
            let o = ents.resolve(&l.fields[2]).map_err(err)?;
            let t = parse_time(&l.fields[3], opts.time_granularity).map_err(err)?;
            parsed.push((k, s, r, o, t));
        }
    }

    let ints: Vec<u64> = parsed
        .iter()
        .filter_map(|p| match p.4 {
            RawTime::Int(v) => Some(v),
            RawTime::Date(_) => None,
        })
        .collect();
    let dates: Vec<NaiveDate> = parsed
        .iter()
        .filter_map(|p| match p.4 {
            RawTime::Date(d) => Some(d),
            RawTime::Int(_) => None,
        })
        .collect();
    if !ints.is_empty() && !dates.is_empty() {
        return Err(DataError::Invalid("time column mixes integers and dates".into()));
    }
    let divisor = match opts.time_granularity {
        TimeGranularity::Divide(n) => n,
        _ => 1,
    };
    let first_date = dates.iter().min().copied();

    let mut quads: [Vec<Quadruple>; 3] = Default::default();
    for (k, s, r, o, t) in parsed {
        let step = match t {
            RawTime::Int(v) => (v / divisor) as usize,
            RawTime::Date(d) => (d - first_date.expect("dates present")).num_days() as usize,
        };
        quads[k].push(Quadruple::new(s, r, o, step));
    }

    let max_ent = quads.iter().flatten().map(|q| q.subject.max(q.object) + 1).max().unwrap_or(0);
    let max_rel = quads.iter().flatten().map(|q| q.relation + 1).max().unwrap_or(0);
    let step_count = quads.iter().flatten().map(|q| q.time + 1).max().unwrap_or(0);

    let (entity_count, relation_count) = match &stat {
        Some(st) => (st.entities, st.relations),
        None => match (&ents, &rels) {
            (Resolver::Names { map: em, .. }, Resolver::Names { map: rm, .. }) => {
                (em.values().max().map_or(0, |m| m + 1).max(max_ent), rm.values().max().map_or(0, |m| m + 1).max(max_rel))
            }
            _ => (max_ent, max_rel),
        },
    };

    // Range check with file/line context.
    for (k, (path, lines)) in raw.iter().enumerate() {
        for (q, l) in quads[k].iter().zip(lines) {
            if q.subject >= entity_count || q.object >= entity_count {
                return Err(DataError::OutOfRange {
                    file: path.clone(),
                    line: l.line,
                    reason: format!("entity index out of range (entity count {entity_count})"),
                });
            }
            if q.relation >= relation_count {
                return Err(DataError::OutOfRange {
                    file: path.clone(),
                    line: l.line,
                    reason: format!("relation index out of range (relation count {relation_count})"),
                });
            }
        }
    }

    for (k, q) in quads.iter().enumerate() {
        let mut sorted = q.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != q.len() {
            warn!("{}: dropped {} duplicated quadruples", Split::ALL[k].name(), q.len() - sorted.len());
        }
    }

    let mut ds = TkgDataset::from_quadruples(entity_count, relation_count, step_count, &quads[0], &quads[1], &quads[2]);
    ds.entity_names = match (&entity_map, ents) {
        (Some(m), _) => Some(names_from_map(m)),
        (None, Resolver::Names { map, .. }) => Some(names_from_map(&map)),
        _ => None,
    };
    ds.relation_names = match (&relation_map, rels) {
        (Some(m), _) => Some(names_from_map(m)),
        (None, Resolver::Names { map, .. }) => Some(names_from_map(&map)),
        _ => None,
    };

    if let Some(total) = stat.as_ref().and_then(|s| s.total) {
        if total != ds.total_len() {
            warn!("stat.txt declares {total} facts, loaded {}", ds.total_len());
        }
    }
    for t in 0..ds.step_count {
        let clash = ds.split(Split::Test)[t].triples().iter().filter(|tr| ds.split(Split::Train)[t].contains(tr)).count();
        if clash > 0 {
            warn!("{clash} test facts at t={t} also appear in train");
        }
    }
    info!(
        "loaded {}: {} entities, {} relations, {} steps, train/valid/test = {}/{}/{}",
        dir.display(),
        ds.entity_count,
        ds.relation_count,
        ds.step_count,
        ds.split_len(Split::Train),
        ds.split_len(Split::Valid),
        ds.split_len(Split::Test)
    );
    Ok(ds)
}

/// Writes the dataset in the integer layout read by [`load_dataset`].
pub fn write_dataset(ds: &TkgDataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for split in Split::ALL {
        let path = dir.join(format!("{}.txt", split.name()));
        let mut buf = Vec::new();
        for q in ds.quadruples(split) {
            writeln!(buf, "{}\t{}\t{}\t{}", q.subject, q.relation, q.object, q.time).expect("in-memory write");
        }
        fs::write(&path, buf).map_err(io_err(&path))?;
    }
    let stat = dir.join("stat.txt");
    fs::write(&stat, format!("{}\t{}\n", ds.entity_count, ds.relation_count)).map_err(io_err(&stat))?;
    let maps = [("entity2id.txt", &ds.entity_names), ("relation2id.txt", &ds.relation_names)];
    for (file, names) in maps {
        if let Some(names) = names {
            let path = dir.join(file);
            let body: String = names.iter().enumerate().map(|(i, n)| format!("{n}\t{i}\n")).collect();
            fs::write(&path, body).map_err(io_err(&path))?;
        }
    }
    Ok(())
}
