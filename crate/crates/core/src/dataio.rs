//! Implicit-feedback datasets: loading, identifier remapping, leave-one-out
//! splitting and negative sampling.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Which part of a split a matrix was derived from. Fitting routines refuse
/// `Test` matrices so tuned models cannot see held-out interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    #[default]
    Full,
    Train,
    Validation,
    Test,
    TrainValidation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub value: f64,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: usize, item: usize) -> Self {
        Self {
            user,
            item,
            value: 1.0,
            timestamp: None,
        }
    }

    pub fn at(user: usize, item: usize, timestamp: i64) -> Self {
        Self {
            user,
            item,
            value: 1.0,
            timestamp: Some(timestamp),
        }
    }
}

/// Sparse user x item matrix, stored as entries sorted by `(user, item)` with
/// per-user offsets (CSR layout).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    entries: Vec<Interaction>,
    offsets: Vec<usize>,
    partition: Partition,
}

impl InteractionMatrix {
    /// Builds a matrix from arbitrary-order entries. Duplicate `(user, item)`
    /// pairs collapse to the last occurrence.
    pub fn from_entries(
        n_users: usize,
        n_items: usize,
        entries: Vec<Interaction>,
        partition: Partition,
    ) -> Result<Self> {
        for e in &entries {
            if e.user >= n_users || e.item >= n_items {
                return Err(Error::invalid(format!(
                    "entry ({}, {}) outside {}x{} matrix",
                    e.user, e.item, n_users, n_items
                )));
            }
            if !(e.value.is_finite() && e.value >= 0.0) {
                return Err(Error::invalid(format!(
                    "entry ({}, {}) has invalid value {}",
                    e.user, e.item, e.value
                )));
            }
        }
        // stable sort keeps file order among duplicates, so the last one wins
        let mut entries = entries;
        entries.sort_by_key(|e| (e.user, e.item));
        let mut deduped: Vec<Interaction> = Vec::with_capacity(entries.len());
        for e in entries {
            match deduped.last_mut() {
                Some(last) if last.user == e.user && last.item == e.item => *last = e,
                _ => deduped.push(e),
            }
        }
        let mut offsets = vec![0usize; n_users + 1];
        for e in &deduped {
            offsets[e.user + 1] += 1;
        }
        for u in 0..n_users {
            offsets[u + 1] += offsets[u];
        }
        Ok(Self {
            n_users,
            n_items,
            entries: deduped,
            offsets,
            partition,
        })
    }

    pub fn empty(n_users: usize, n_items: usize, partition: Partition) -> Self {
        Self {
            n_users,
            n_items,
            entries: Vec::new(),
            offsets: vec![0; n_users + 1],
            partition,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn with_partition(mut self, partition: Partition) -> Self {
        self.partition = partition;
        self
    }

    pub fn entries(&self) -> &[Interaction] {
        &self.entries
    }

    pub fn user_row(&self, user: usize) -> &[Interaction] {
        &self.entries[self.offsets[user]..self.offsets[user + 1]]
    }

    pub fn user_items(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.user_row(user).iter().map(|e| e.item)
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.offsets[user + 1] - self.offsets[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        user < self.n_users
            && self
                .user_row(user)
                .binary_search_by_key(&item, |e| e.item)
                .is_ok()
    }

    pub fn value(&self, user: usize, item: usize) -> f64 {
        let row = self.user_row(user);
        row.binary_search_by_key(&item, |e| e.item)
            .map(|i| row[i].value)
            .unwrap_or(0.0)
    }

    /// Number of interactions per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items];
        for e in &self.entries {
            counts[e.item] += 1;
        }
        counts
    }

    /// Item-major view: for every item, the `(user, value)` pairs in user order.
    pub fn item_columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for e in &self.entries {
            cols[e.item].push((e.user, e.value));
        }
        cols
    }

    pub fn has_timestamps(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.timestamp.is_some())
    }

    pub fn is_binary(&self) -> bool {
        self.entries.iter().all(|e| e.value == 1.0)
    }

    /// Entry-wise union; where both contain a pair, `other` wins.
    pub fn union(&self, other: &InteractionMatrix, partition: Partition) -> Result<Self> {
        if self.n_users != other.n_users || self.n_items != other.n_items {
            return Err(Error::invalid(format!(
                "cannot merge {}x{} with {}x{}",
                self.n_users, self.n_items, other.n_users, other.n_items
            )));
        }
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self::from_entries(self.n_users, self.n_items, entries, partition)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_users, self.n_items);
        for e in &self.entries {
            m[(e.user, e.item)] = e.value;
        }
        m
    }

    pub(crate) fn ensure_not_test(&self, what: &str) -> Result<()> {
        if self.partition == Partition::Test {
            Err(Error::Leakage(format!("{what} was given the test partition")))
        } else {
            Ok(())
        }
    }
}

/// Bijection between external identifiers and dense internal indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMap {
    users: Vec<String>,
    items: Vec<String>,
    #[serde(skip)]
    user_lookup: HashMap<String, usize>,
    #[serde(skip)]
    item_lookup: HashMap<String, usize>,
}

impl IdMap {
    fn new(users: Vec<String>, items: Vec<String>) -> Self {
        let user_lookup = users.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let item_lookup = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self {
            users,
            items,
            user_lookup,
            item_lookup,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_id(&self, index: usize) -> Option<&str> {
        self.users.get(index).map(String::as_str)
    }

    pub fn item_id(&self, index: usize) -> Option<&str> {
        self.items.get(index).map(String::as_str)
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).copied()
    }
}

/// Numeric identifiers sort numerically, anything else lexicographically, so
/// that the internal index assignment does not depend on row order.
fn ordered_ids(ids: HashSet<String>) -> Vec<String> {
    let mut ids: Vec<String> = ids.into_iter().collect();
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap());
    } else {
        ids.sort();
    }
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Tsv,
    Csv,
}

impl Format {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Format::Tsv => line.split_whitespace().collect(),
            Format::Csv => line.split(',').map(str::trim).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadOptions {
    pub format: Format,
    pub binarize: bool,
    /// Keep entries with `value >= threshold`; `None` keeps every positive value.
    pub min_value: Option<f64>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            format: Format::Tsv,
            binarize: true,
            min_value: None,
        }
    }
}

struct RawRow {
    user: String,
    item: String,
    value: f64,
    timestamp: Option<i64>,
}

fn parse_rows(path: &Path, format: Format, reader: impl BufRead) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields = format.split(trimmed);
        if !(2..=4).contains(&fields.len()) || fields.iter().any(|f| f.is_empty()) {
            return Err(parse_err(format!(
                "expected user, item, [value], [timestamp]; found {} field(s)",
                fields.len()
            )));
        }
        let value = match fields.get(2) {
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("invalid value {v:?}")))?,
            None => 1.0,
        };
        let timestamp = match fields.get(3) {
            Some(t) => Some(
                t.parse::<i64>()
                    .map_err(|_| parse_err(format!("invalid timestamp {t:?}")))?,
            ),
            None => None,
        };
        rows.push(RawRow {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            value,
            timestamp,
        });
    }
    Ok(rows)
}

/// Reads a user/item[/value[/timestamp]] file into a deduplicated matrix with
/// dense 0-based indices.
pub fn load_interactions(path: &Path, opts: &LoadOptions) -> Result<(InteractionMatrix, IdMap)> {
    let file = fs::File::open(path)?;
    let rows = parse_rows(path, opts.format, BufReader::new(file))?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let keep = |v: f64| match opts.min_value {
        Some(t) => v >= t,
        None => v > 0.0,
    };
    let rows: Vec<RawRow> = rows.into_iter().filter(|r| keep(r.value)).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let ids = IdMap::new(
        ordered_ids(rows.iter().map(|r| r.user.clone()).collect()),
        ordered_ids(rows.iter().map(|r| r.item.clone()).collect()),
    );
    let entries = rows
        .iter()
        .map(|r| Interaction {
            user: ids.user_lookup[&r.user],
            item: ids.item_lookup[&r.item],
            value: if opts.binarize { 1.0 } else { r.value },
            timestamp: r.timestamp,
        })
        .collect();
    let matrix = InteractionMatrix::from_entries(ids.n_users(), ids.n_items(), entries, Partition::Full)?;
    Ok((matrix, ids))
}

fn write_rows(
    path: &Path,
    matrix: &InteractionMatrix,
    format: Format,
    user_name: impl Fn(usize) -> String,
    item_name: impl Fn(usize) -> String,
) -> Result<()> {
    let sep = match format {
        Format::Tsv => "\t",
        Format::Csv => ",",
    };
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in matrix.entries() {
        write!(out, "{}{sep}{}{sep}{}", user_name(e.user), item_name(e.item), e.value)?;
        if let Some(t) = e.timestamp {
            write!(out, "{sep}{t}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `matrix` with its external identifiers; `load_interactions` on the
/// result reproduces the matrix exactly.
pub fn save_interactions(path: &Path, matrix: &InteractionMatrix, ids: &IdMap, format: Format) -> Result<()> {
    write_rows(
        path,
        matrix,
        format,
        |u| ids.users[u].clone(),
        |i| ids.items[i].clone(),
    )
}

/// Reads a file whose identifiers are already internal indices (the split
/// partition layout).
pub fn read_indexed(path: &Path, n_users: usize, n_items: usize, partition: Partition) -> Result<InteractionMatrix> {
    let file = fs::File::open(path)?;
    let rows = parse_rows(path, Format::Tsv, BufReader::new(file))?;
    let mut entries = Vec::with_capacity(rows.len());
    for (n, r) in rows.into_iter().enumerate() {
        let bad = |what: &str, v: &str| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: format!("{what} index {v:?} is not a valid internal index"),
        };
        let user = r.user.parse::<usize>().map_err(|_| bad("user", &r.user))?;
        let item = r.item.parse::<usize>().map_err(|_| bad("item", &r.item))?;
        entries.push(Interaction {
            user,
            item,
            value: r.value,
            timestamp: r.timestamp,
        });
    }
    InteractionMatrix::from_entries(n_users, n_items, entries, partition)
}

pub fn write_indexed(path: &Path, matrix: &InteractionMatrix) -> Result<()> {
    write_rows(path, matrix, Format::Tsv, |u| u.to_string(), |i| i.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    LatestTimestamp,
    Random,
}

impl SplitPolicy {
    /// Latest-timestamp when every interaction carries a timestamp, random otherwise.
    pub fn default_for(matrix: &InteractionMatrix) -> Self {
        if matrix.has_timestamps() {
            SplitPolicy::LatestTimestamp
        } else {
            SplitPolicy::Random
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTriple {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    pub seed: u64,
    pub policy: SplitPolicy,
    /// Users with fewer than three interactions, kept train-only.
    pub cold_users: usize,
}

impl SplitTriple {
    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    /// Train and validation merged, the matrix used for final refits.
    pub fn train_validation(&self) -> InteractionMatrix {
        self.train
            .union(&self.validation, Partition::TrainValidation)
            .expect("split partitions share dimensions")
    }

    /// Every item the user interacted with in any partition, sorted.
    pub fn all_positives(&self, user: usize) -> Vec<usize> {
        let mut items: Vec<usize> = self
            .train
            .user_items(user)
            .chain(self.validation.user_items(user))
            .chain(self.test.user_items(user))
            .collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            policy: self.policy,
            n_users: self.n_users(),
            n_items: self.n_items(),
            train: self.train.nnz(),
            validation: self.validation.nnz(),
            test: self.test.nnz(),
            cold_users: self.cold_users,
        }
    }
}

/// Leave-one-out split: per user with at least three interactions, one
/// interaction goes to test, one to validation, the rest to train.
pub fn leave_one_out_split(matrix: &InteractionMatrix, policy: SplitPolicy, seed: u64) -> Result<SplitTriple> {
    let (m, n) = (matrix.n_users(), matrix.n_items());
    let mut train = Vec::with_capacity(matrix.nnz());
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut cold = 0usize;
    for u in 0..m {
        let row = matrix.user_row(u);
        if row.len() < 3 {
            if !row.is_empty() {
                cold += 1;
            }
            train.extend_from_slice(row);
            continue;
        }
        let (test_pos, val_pos) = match policy {
            SplitPolicy::LatestTimestamp => {
                let mut order: Vec<usize> = (0..row.len()).collect();
                for &i in &order {
                    if row[i].timestamp.is_none() {
                        return Err(Error::invalid(format!(
                            "user {u}: latest_timestamp policy needs timestamps on every interaction"
                        )));
                    }
                }
                order.sort_by_key(|&i| (row[i].timestamp, row[i].item));
                (order[row.len() - 1], order[row.len() - 2])
            }
            SplitPolicy::Random => {
                let mut r = rng::seeded(rng::derive(seed, u as u64));
                let t = r.random_range(0..row.len());
                let mut v = r.random_range(0..row.len() - 1);
                if v >= t {
                    v += 1;
                }
                (t, v)
            }
        };
        for (pos, e) in row.iter().enumerate() {
            if pos == test_pos {
                test.push(*e);
            } else if pos == val_pos {
                validation.push(*e);
            } else {
                train.push(*e);
            }
        }
    }
    if cold > 0 {
        log::info!("{cold} user(s) with fewer than 3 interactions kept train-only");
    }
    Ok(SplitTriple {
        train: InteractionMatrix::from_entries(m, n, train, Partition::Train)?,
        validation: InteractionMatrix::from_entries(m, n, validation, Partition::Validation)?,
        test: InteractionMatrix::from_entries(m, n, test, Partition::Test)?,
        seed,
        policy,
        cold_users: cold,
    })
}

/// Sidecar written next to the partition files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub seed: u64,
    pub policy: SplitPolicy,
    pub n_users: usize,
    pub n_items: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub cold_users: usize,
}

pub const SPLIT_FILES: [&str; 3] = ["train.tsv", "validation.tsv", "test.tsv"];
pub const SPLIT_MANIFEST: &str = "split.json";

pub fn write_split(dir: &Path, split: &SplitTriple) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_indexed(&dir.join(SPLIT_FILES[0]), &split.train)?;
    write_indexed(&dir.join(SPLIT_FILES[1]), &split.validation)?;
    write_indexed(&dir.join(SPLIT_FILES[2]), &split.test)?;
    let json = serde_json::to_string_pretty(&split.manifest())?;
    fs::write(dir.join(SPLIT_MANIFEST), json + "\n")?;
    Ok(())
}

pub fn read_split(dir: &Path) -> Result<SplitTriple> {
    let manifest: SplitManifest = serde_json::from_str(&fs::read_to_string(dir.join(SPLIT_MANIFEST))?)?;
    let (m, n) = (manifest.n_users, manifest.n_items);
    let split = SplitTriple {
        train: read_indexed(&dir.join(SPLIT_FILES[0]), m, n, Partition::Train)?,
        validation: read_indexed(&dir.join(SPLIT_FILES[1]), m, n, Partition::Validation)?,
        test: read_indexed(&dir.join(SPLIT_FILES[2]), m, n, Partition::Test)?,
        seed: manifest.seed,
        policy: manifest.policy,
        cold_users: manifest.cold_users,
    };
    if split.manifest() != manifest {
        return Err(Error::Format(format!(
            "{}: partition sizes disagree with {SPLIT_MANIFEST}",
            dir.display()
        )));
    }
    Ok(split)
}

/// Draws `n` distinct items from `0..n_items` outside the sorted `positives`.
pub fn sample_negatives_from(
    positives: &[usize],
    n_items: usize,
    n: usize,
    user: usize,
    rng: &mut rng::Rng,
) -> Result<Vec<usize>> {
    let available = n_items - positives.len();
    if available < n {
        return Err(Error::InsufficientNegatives {
            user,
            available,
            requested: n,
        });
    }
    let is_positive = |i: usize| positives.binary_search(&i).is_ok();
    if n.saturating_mul(3) <= available {
        let mut chosen = Vec::with_capacity(n);
        let mut seen = HashSet::with_capacity(n);
        while chosen.len() < n {
            let i = rng.random_range(0..n_items);
            if !is_positive(i) && seen.insert(i) {
                chosen.push(i);
            }
        }
        Ok(chosen)
    } else {
        let mut candidates: Vec<usize> = (0..n_items).filter(|&i| !is_positive(i)).collect();
        let (head, _) = candidates.partial_shuffle(rng, n);
        Ok(head.to_vec())
    }
}

/// `n` distinct items the user has not interacted with in any of `exclude`.
pub fn sample_negatives(exclude: &[&InteractionMatrix], user: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    let n_items = exclude.first().map(|m| m.n_items()).unwrap_or(0);
    let mut positives: Vec<usize> = exclude.iter().flat_map(|m| m.user_items(user)).collect();
    positives.sort_unstable();
    positives.dedup();
    let mut r = rng::seeded(seed);
    sample_negatives_from(&positives, n_items, n, user, &mut r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows() {
        let f = write_tmp("u1 i1\nu1 i2\nu2 i1\n");
        let (m, ids) = load_interactions(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!((m.n_users(), m.n_items(), m.nnz()), (2, 2, 3));
        assert!(m.entries().iter().all(|e| e.value == 1.0));
        assert_eq!(ids.user_index("u2"), Some(1));
        assert_eq!(ids.item_id(1), Some("i2"));
    }

    #[test]
    fn duplicates_collapse() {
        let f = write_tmp("# comment\nu1\ti1\nu1\ti1\n");
        let (m, _) = load_interactions(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.entries()[0].value, 1.0);
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_tmp("u1 i1 1\n# c\nu2 i2 oops\n");
        match load_interactions(f.path(), &LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("lonely\n");
        assert!(matches!(
            load_interactions(f.path(), &LoadOptions::default()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("# only a comment\n\n");
        assert!(matches!(
            load_interactions(f.path(), &LoadOptions::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn csv_with_threshold() {
        let f = write_tmp("1,10,4.0,100\n1,11,2.0,101\n2,10,3.5,102\n2,12,5,103\n");
        let opts = LoadOptions {
            format: Format::Csv,
            binarize: false,
            min_value: Some(3.5),
        };
        let (m, ids) = load_interactions(f.path(), &opts).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.n_items(), 2);
        assert_eq!(ids.item_id(0), Some("10"));
        assert!(m.has_timestamps());
        assert_eq!(m.value(1, 1), 5.0);
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        let f = write_tmp("10 1\n9 2\n100 3\n");
        let (_, ids) = load_interactions(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ids.user_id(0), Some("9"));
        assert_eq!(ids.user_id(2), Some("100"));
    }

    #[test]
    fn random_split_of_three() {
        let m = InteractionMatrix::from_entries(
            1,
            3,
            vec![Interaction::new(0, 0), Interaction::new(0, 1), Interaction::new(0, 2)],
            Partition::Full,
        )
        .unwrap();
        let s = leave_one_out_split(&m, SplitPolicy::Random, 11).unwrap();
        assert_eq!((s.train.nnz(), s.validation.nnz(), s.test.nnz()), (1, 1, 1));
        let mut all: Vec<usize> = s.all_positives(0);
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn latest_timestamp_split() {
        let m = InteractionMatrix::from_entries(
            1,
            3,
            vec![Interaction::at(0, 2, 1), Interaction::at(0, 0, 3), Interaction::at(0, 1, 2)],
            Partition::Full,
        )
        .unwrap();
        let s = leave_one_out_split(&m, SplitPolicy::default_for(&m), 0).unwrap();
        assert_eq!(s.policy, SplitPolicy::LatestTimestamp);
        assert_eq!(s.test.entries()[0].item, 0);
        assert_eq!(s.validation.entries()[0].item, 1);
        assert_eq!(s.train.entries()[0].item, 2);
    }

    #[test]
    fn cold_users_stay_in_train() {
        let m = InteractionMatrix::from_entries(
            2,
            4,
            vec![
                Interaction::new(0, 0),
                Interaction::new(0, 1),
                Interaction::new(1, 0),
                Interaction::new(1, 1),
                Interaction::new(1, 2),
            ],
            Partition::Full,
        )
        .unwrap();
        let s = leave_one_out_split(&m, SplitPolicy::Random, 3).unwrap();
        assert_eq!(s.cold_users, 1);
        assert_eq!(s.train.user_degree(0), 2);
        assert_eq!(s.test.user_degree(0), 0);
        assert_eq!(s.test.user_degree(1), 1);
    }

    #[test]
    fn forced_negative_set() {
        let m = InteractionMatrix::from_entries(
            1,
            5,
            vec![Interaction::new(0, 0), Interaction::new(0, 1)],
            Partition::Train,
        )
        .unwrap();
        let mut neg = sample_negatives(&[&m], 0, 3, 5).unwrap();
        neg.sort();
        assert_eq!(neg, vec![2, 3, 4]);
        assert!(matches!(
            sample_negatives(&[&m], 0, 4, 5),
            Err(Error::InsufficientNegatives { user: 0, .. })
        ));
    }

    #[test]
    fn ninety_nine_negatives() {
        let entries = (0..50).map(|i| Interaction::new(0, i * 7)).collect();
        let m = InteractionMatrix::from_entries(1, 1000, entries, Partition::Train).unwrap();
        let a = sample_negatives(&[&m], 0, 99, 42).unwrap();
        let b = sample_negatives(&[&m], 0, 99, 42).unwrap();
        assert_eq!(a, b);
        let set: HashSet<usize> = a.iter().copied().collect();
        assert_eq!(set.len(), 99);
        assert!(a.iter().all(|&i| !m.contains(0, i)));
    }

    #[test]
    fn split_files_round_trip() {
        let entries = (0..30)
            .flat_map(|u| (0..5).map(move |k| Interaction::new(u, (u * 3 + k * 5) % 40)))
            .collect();
        let m = InteractionMatrix::from_entries(30, 40, entries, Partition::Full).unwrap();
        let s = leave_one_out_split(&m, SplitPolicy::Random, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), &s).unwrap();
        let back = read_split(dir.path()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn test_partition_is_refused() {
        let m = InteractionMatrix::empty(1, 1, Partition::Test);
        assert!(matches!(m.ensure_not_test("fit"), Err(Error::Leakage(_))));
    }
}
