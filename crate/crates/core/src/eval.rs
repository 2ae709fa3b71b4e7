//! Leave-one-out HR / NDCG evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::ScoringModel;
use crate::dataio::{sample_negatives_from, InteractionMatrix, SplitTriple};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_CUTOFFS: [usize; 4] = [1, 5, 10, 20];
pub const DEFAULT_NEGATIVES: usize = 99;

/// `1 / log2(rank + 1)` inside the cutoff, 0 outside. `rank` is 1-based.
pub fn ndcg_at(rank: usize, cutoff: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    if rank <= cutoff {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn hit_at(rank: usize, cutoff: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    if rank <= cutoff {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// Rank the positive against this many sampled unseen items.
    Sampled(usize),
    /// Rank against every item the user has not interacted with.
    AllItems,
}

impl Default for NegativeSampling {
    fn default() -> Self {
        NegativeSampling::Sampled(DEFAULT_NEGATIVES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTarget {
    Validation,
    #[default]
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Hr,
    Ndcg,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Hr => "HR",
            MetricKind::Ndcg => "NDCG",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hr" | "hit" | "hit_rate" => Ok(MetricKind::Hr),
            "ndcg" => Ok(MetricKind::Ndcg),
            _ => Err(Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

/// A metric at one cutoff, e.g. NDCG@10. Serialized as that string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Metric {
    pub kind: MetricKind,
    pub cutoff: usize,
}

impl Metric {
    pub fn ndcg(cutoff: usize) -> Self {
        Self {
            kind: MetricKind::Ndcg,
            cutoff,
        }
    }

    pub fn hr(cutoff: usize) -> Self {
        Self {
            kind: MetricKind::Hr,
            cutoff,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.kind, self.cutoff)
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, cutoff) = s
            .split_once('@')
            .ok_or_else(|| Error::invalid(format!("metric {s:?} should look like ndcg@10")))?;
        let cutoff = cutoff
            .parse()
            .map_err(|_| Error::invalid(format!("bad cutoff in {s:?}")))?;
        Ok(Self {
            kind: kind.parse()?,
            cutoff,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub sampling: NegativeSampling,
    pub target: EvalTarget,
    pub cutoffs: Vec<usize>,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            sampling: NegativeSampling::default(),
            target: EvalTarget::Test,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user: usize,
    pub item: usize,
    /// 1-based position of the held-out item among the candidates.
    pub rank: usize,
    pub n_candidates: usize,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub cutoffs: Vec<usize>,
    pub sampling: NegativeSampling,
    pub target: EvalTarget,
    pub seed: u64,
    pub n_evaluated: usize,
    /// Users without a held-out interaction in the target partition.
    pub n_skipped: usize,
    /// Mean HR per cutoff, aligned with `cutoffs`.
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    #[serde(skip)]
    pub users: Vec<UserRecord>,
}

#[derive(Serialize)]
struct Summary<'a> {
    cutoffs: &'a [usize],
    sampling: NegativeSampling,
    target: EvalTarget,
    seed: u64,
    n_evaluated: usize,
    n_skipped: usize,
    metrics: std::collections::BTreeMap<String, f64>,
}

impl EvaluationResult {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        let idx = self.cutoffs.iter().position(|&c| c == metric.cutoff)?;
        Some(match metric.kind {
            MetricKind::Hr => self.hr[idx],
            MetricKind::Ndcg => self.ndcg[idx],
        })
    }

    /// Like [`get`](Self::get) but errors when the cutoff was not evaluated.
    pub fn metric(&self, metric: Metric) -> Result<f64> {
        self.get(metric)
            .ok_or_else(|| Error::invalid(format!("{metric} not among evaluated cutoffs {:?}", self.cutoffs)))
    }

    /// Per-user rows: `user,item,rank,n_candidates,HR@c...,NDCG@c...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,item,rank,n_candidates");
        for c in &self.cutoffs {
            write!(out, ",HR@{c}").unwrap();
        }
        for c in &self.cutoffs {
            write!(out, ",NDCG@{c}").unwrap();
        }
        out.push('\n');
        for r in &self.users {
            write!(out, "{},{},{},{}", r.user, r.item, r.rank, r.n_candidates).unwrap();
            for v in r.hr.iter().chain(&r.ndcg) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let mut metrics = std::collections::BTreeMap::new();
        for (idx, &c) in self.cutoffs.iter().enumerate() {
            metrics.insert(Metric::hr(c).to_string(), self.hr[idx]);
            metrics.insert(Metric::ndcg(c).to_string(), self.ndcg[idx]);
        }
        let s = Summary {
            cutoffs: &self.cutoffs,
            sampling: self.sampling,
            target: self.target,
            seed: self.seed,
            n_evaluated: self.n_evaluated,
            n_skipped: self.n_skipped,
            metrics,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.json")), self.summary_json())?;
        Ok(())
    }
}

/// 1-based rank of the positive: every candidate scoring higher counts, and
/// so does every equal-scoring candidate with a lower item index.
pub fn rank_of_positive(positive: usize, positive_score: f64, candidates: &[(usize, f64)]) -> usize {
    1 + candidates
        .iter()
        .filter(|&&(item, s)| s > positive_score || (s == positive_score && item < positive))
        .count()
}

fn held_out(target: &InteractionMatrix, user: usize) -> Option<usize> {
    target.user_row(user).first().map(|e| e.item)
}

/// Scores each user's held-out item against negatives and aggregates HR and
/// NDCG. Negatives never include the user's positives: for the test target
/// every partition is excluded, for validation only train and validation (so
/// tuning never reads test interactions).
pub fn evaluate_loo(model: &dyn ScoringModel, split: &SplitTriple, opts: &EvalOptions) -> Result<EvaluationResult> {
    if opts.cutoffs.is_empty() || opts.cutoffs.contains(&0) {
        return Err(Error::invalid("cutoffs must be non-empty and positive"));
    }
    if model.n_items() != split.n_items() {
        return Err(Error::DimensionMismatch {
            expected: split.n_items(),
            actual: model.n_items(),
        });
    }
    let (target, excluded): (&InteractionMatrix, Vec<&InteractionMatrix>) = match opts.target {
        EvalTarget::Test => (&split.test, vec![&split.train, &split.validation, &split.test]),
        EvalTarget::Validation => (&split.validation, vec![&split.train, &split.validation]),
    };
    if target.nnz() == 0 {
        return Err(Error::invalid(format!("{:?} partition is empty", opts.target)));
    }
    let n_items = split.n_items();
    let records: Vec<Option<UserRecord>> = (0..split.n_users())
        .into_par_iter()
        .map(|u| -> Result<Option<UserRecord>> {
            let Some(pos) = held_out(target, u) else {
                return Ok(None);
            };
            let mut positives: Vec<usize> = excluded.iter().flat_map(|m| m.user_items(u)).collect();
            positives.sort_unstable();
            positives.dedup();
            let negatives = match opts.sampling {
                NegativeSampling::Sampled(n) => {
                    let mut r = rng::seeded(rng::derive(opts.seed, u as u64));
                    sample_negatives_from(&positives, n_items, n, u, &mut r)?
                }
                NegativeSampling::AllItems => (0..n_items).filter(|i| positives.binary_search(i).is_err()).collect(),
            };
            let mut items = Vec::with_capacity(negatives.len() + 1);
            items.push(pos);
            items.extend_from_slice(&negatives);
            let scores = model.score_items(u, &items);
            let candidates: Vec<(usize, f64)> = negatives.iter().copied().zip(scores[1..].iter().copied()).collect();
            let rank = rank_of_positive(pos, scores[0], &candidates);
            Ok(Some(UserRecord {
                user: u,
                item: pos,
                rank,
                n_candidates: items.len(),
                hr: opts.cutoffs.iter().map(|&c| hit_at(rank, c)).collect(),
                ndcg: opts.cutoffs.iter().map(|&c| ndcg_at(rank, c)).collect(),
            }))
        })
        .collect::<Result<_>>()?;
    let n_skipped = records.iter().filter(|r| r.is_none()).count();
    let users: Vec<UserRecord> = records.into_iter().flatten().collect();
    let n = users.len() as f64;
    let mean = |pick: &dyn Fn(&UserRecord) -> f64| users.iter().map(pick).sum::<f64>() / n;
    let hr = (0..opts.cutoffs.len()).map(|k| mean(&|r| r.hr[k])).collect();
    let ndcg = (0..opts.cutoffs.len()).map(|k| mean(&|r| r.ndcg[k])).collect();
    Ok(EvaluationResult {
        cutoffs: opts.cutoffs.clone(),
        sampling: opts.sampling,
        target: opts.target,
        seed: opts.seed,
        n_evaluated: users.len(),
        n_skipped,
        hr,
        ndcg,
        users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{Algorithm, DotModel};
    use crate::dataio::{Interaction, Partition, SplitPolicy};
    use crate::hpo::Configuration;

    struct Constant(usize);

    impl ScoringModel for Constant {
        fn n_items(&self) -> usize {
            self.0
        }
        fn score(&self, _: usize) -> Vec<f64> {
            vec![1.0; self.0]
        }
    }

    fn split(m: usize, n: usize, train: &[(usize, usize)], val: &[(usize, usize)], test: &[(usize, usize)]) -> SplitTriple {
        let mk = |pairs: &[(usize, usize)], p| {
            InteractionMatrix::from_entries(m, n, pairs.iter().map(|&(u, i)| Interaction::new(u, i)).collect(), p).unwrap()
        };
        SplitTriple {
            train: mk(train, Partition::Train),
            validation: mk(val, Partition::Validation),
            test: mk(test, Partition::Test),
            seed: 0,
            policy: SplitPolicy::Random,
            cold_users: 0,
        }
    }

    #[test]
    fn closed_forms() {
        assert_eq!(ndcg_at(1, 5), 1.0);
        assert_eq!(ndcg_at(3, 10), 0.5);
        assert_eq!(ndcg_at(11, 10), 0.0);
        assert_eq!(hit_at(10, 10), 1.0);
        assert_eq!(hit_at(11, 10), 0.0);
        assert_eq!(hit_at(1, 1), 1.0);
    }

    #[test]
    fn tie_rule() {
        // positive item 3 with three equal-scoring competitors 1, 2, 5
        assert_eq!(rank_of_positive(3, 1.0, &[(1, 1.0), (2, 1.0), (5, 1.0), (6, 0.5)]), 3);
        assert_eq!(rank_of_positive(0, 1.0, &[(1, 1.0), (2, 1.0)]), 1);
    }

    #[test]
    fn constant_model_ranks_by_index() {
        // 7 items; one train, one validation and one test item per user
        let s = split(
            3,
            7,
            &[(0, 0), (1, 6), (2, 0)],
            &[(0, 1), (1, 5), (2, 1)],
            &[(0, 2), (1, 4), (2, 6)],
        );
        let opts = EvalOptions {
            sampling: NegativeSampling::AllItems,
            cutoffs: vec![1, 2, 3],
            ..EvalOptions::default()
        };
        let r = evaluate_loo(&Constant(7), &s, &opts).unwrap();
        // user 0: candidates {2,3,4,5,6}, positive 2 -> rank 1
        // user 1: candidates {0,1,2,3,4}, positive 4 -> rank 5
        // user 2: candidates {2,3,4,5,6}, positive 6 -> rank 5
        let ranks: Vec<usize> = r.users.iter().map(|u| u.rank).collect();
        assert_eq!(ranks, vec![1, 5, 5]);
        assert_eq!(r.hr, vec![1.0 / 3.0; 3]);
        assert_eq!(r.ndcg, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn dominant_positive() {
        let n = 120;
        let users = crate::matrix::Matrix::from_vec(1, 1, vec![1.0]);
        let items = crate::matrix::Matrix::from_fn(n, 1, |i, _| if i == 7 { 10.0 } else { -(i as f64) });
        let model = DotModel(crate::embed::EmbeddingPair::new(users, items).unwrap());
        let s = split(1, n, &[(0, 0)], &[(0, 1)], &[(0, 7)]);
        let r = evaluate_loo(&model, &s, &EvalOptions::default()).unwrap();
        assert_eq!(r.users[0].n_candidates, 100);
        assert_eq!(r.get(Metric::hr(10)), Some(1.0));
        assert_eq!(r.get(Metric::ndcg(10)), Some(1.0));
    }

    #[test]
    fn top_popular_hits_when_held_out_is_most_popular() {
        // item 0 is the most popular training item and every user's test item
        let m = 10;
        let mut train = Vec::new();
        for u in 0..m {
            train.push((u, 1 + u % 4));
            train.push((u + m, 0));
        }
        let test: Vec<(usize, usize)> = (0..m).map(|u| (u, 0)).collect();
        let val: Vec<(usize, usize)> = (0..m).map(|u| (u, 5 + u % 3)).collect();
        let s = split(2 * m, 12, &train, &val, &test);
        let model = Algorithm::TopPopular.fit(&s.train, &Configuration::new(), 0).unwrap();
        let opts = EvalOptions {
            sampling: NegativeSampling::Sampled(5),
            ..EvalOptions::default()
        };
        let r = evaluate_loo(&model, &s, &opts).unwrap();
        assert_eq!(r.n_evaluated, m);
        assert_eq!(r.n_skipped, m);
        assert_eq!(r.get(Metric::hr(1)), Some(1.0));
    }

    #[test]
    fn reproducible_and_seed_free_with_all_items() {
        let s = split(4, 9, &[(0, 0), (1, 1), (2, 2), (3, 3)], &[(0, 4), (1, 5), (2, 6), (3, 7)], &[(0, 8), (1, 0), (2, 1), (3, 2)]);
        let model = Algorithm::TopPopular.fit(&s.train, &Configuration::new(), 0).unwrap();
        let a = EvalOptions {
            sampling: NegativeSampling::Sampled(3),
            seed: 5,
            ..EvalOptions::default()
        };
        assert_eq!(evaluate_loo(&model, &s, &a).unwrap().to_csv(), evaluate_loo(&model, &s, &a).unwrap().to_csv());
        let all = |seed| EvalOptions {
            sampling: NegativeSampling::AllItems,
            seed,
            ..EvalOptions::default()
        };
        assert_eq!(evaluate_loo(&model, &s, &all(1)).unwrap().users, evaluate_loo(&model, &s, &all(2)).unwrap().users);
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("ndcg@10".parse::<Metric>().unwrap(), Metric::ndcg(10));
        assert_eq!("HR@5".parse::<Metric>().unwrap(), Metric::hr(5));
        assert!("ndcg".parse::<Metric>().is_err());
    }
}
