//! Observation-only expert dataset.
//!
//! Each record is a demonstrated state transition `(s_e, s_e')`. The agent
//! fills in the rest while it trains: the action it believes the expert took,
//! how closely its own best-matching transition agreed, how often the record
//! has been used, and (for heterogeneous action sets) a bridge around
//! transitions it cannot execute.

mod file;

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::distance::{self, DistanceBounds, DistanceError, MetricSpec};
use crate::envs::StateVec;

pub use file::{read_dataset, write_dataset, DatasetFile, DATASET_MAGIC, DATASET_VERSION};

/// Records compared during action inference: at least this many nearest
/// neighbours of the agent state.
pub const MIN_INFERENCE_CANDIDATES: usize = 50;

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("record {index} out of range for a dataset of {len}")]
    InvalidRecord { index: usize, len: usize },
    #[error("agent action set is empty")]
    NoActions,
    #[error("{0} expert ids for {1} transitions")]
    IdCount(usize, usize),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error("dataset metric/shape {found} does not match configured {expected}")]
    MetricMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ExpertError> = std::result::Result<T, E>;

/// A short agent-executable detour standing in for an infeasible transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Bridge {
    /// First action of the path.
    pub a_feas: usize,
    /// State reached after that first action.
    pub s_feas: StateVec,
    /// Number of agent steps until the path rejoins the expert trajectory.
    pub l_feas: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertRecord {
    pub s_e: StateVec,
    pub s_e_next: StateVec,
    /// Inferred agent action.
    pub a_e: usize,
    /// Best transition distance seen so far; infinite until the first match.
    pub err: f32,
    pub counter: u32,
    pub next_in_chain: Option<usize>,
    pub infeasible: bool,
    pub bridge: Option<Bridge>,
    /// Which demonstrator produced the record.
    pub expert_id: u32,
}

#[derive(Clone, Debug)]
pub struct ExpertDataset {
    records: Vec<ExpertRecord>,
    metric: MetricSpec,
    bounds: DistanceBounds,
    chain_eps: f32,
}

impl ExpertDataset {
    /// Build records with random initial actions over `num_actions`, infinite
    /// error and zero counters, then link chains by exact state equality.
    pub fn load<R: Rng + ?Sized>(
        transitions: Vec<(StateVec, StateVec)>,
        metric: MetricSpec,
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let ids = vec![0; transitions.len()];
        Self::load_with_ids(transitions, ids, metric, num_actions, 0.0, rng)
    }

    /// As [`load`](Self::load) with per-record expert ids and a chain-matching
    /// tolerance (`0` for exact equality).
    pub fn load_with_ids<R: Rng + ?Sized>(
        transitions: Vec<(StateVec, StateVec)>,
        expert_ids: Vec<u32>,
        metric: MetricSpec,
        num_actions: usize,
        chain_eps: f32,
        rng: &mut R,
    ) -> Result<Self> {
        if num_actions == 0 {
            return Err(ExpertError::NoActions);
        }
        if expert_ids.len() != transitions.len() {
            return Err(ExpertError::IdCount(expert_ids.len(), transitions.len()));
        }
        let bounds = distance::bounds(&metric)?;
        for (s, s2) in &transitions {
            metric.check(s)?;
            metric.check(s2)?;
        }
        let records = transitions
            .into_iter()
            .zip(expert_ids)
            .map(|((s_e, s_e_next), expert_id)| ExpertRecord {
                s_e,
                s_e_next,
                a_e: rng.random_range(0..num_actions),
                err: f32::INFINITY,
                counter: 0,
                next_in_chain: None,
                infeasible: false,
                bridge: None,
                expert_id,
            })
            .collect();
        let mut ds = ExpertDataset {
            records,
            metric,
            bounds,
            chain_eps,
        };
        ds.build_chains();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ExpertRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> Result<&ExpertRecord> {
        let len = self.records.len();
        self.records
            .get(i)
            .ok_or(ExpertError::InvalidRecord { index: i, len })
    }

    pub fn record_mut(&mut self, i: usize) -> Result<&mut ExpertRecord> {
        let len = self.records.len();
        self.records
            .get_mut(i)
            .ok_or(ExpertError::InvalidRecord { index: i, len })
    }

    pub fn metric(&self) -> &MetricSpec {
        &self.metric
    }

    pub fn bounds(&self) -> DistanceBounds {
        self.bounds
    }

    pub fn err_max(&self) -> f32 {
        self.bounds.err_max_transition
    }

    pub fn chain_eps(&self) -> f32 {
        self.chain_eps
    }

    /// The `k` records whose initial state is nearest to `query`, closest
    /// first; equal distances go to the lower index.
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<(usize, f32)>> {
        let mut all = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            all.push((i, distance::state_distance(&self.metric, query, &r.s_e)?));
        }
        let order = |a: &(usize, f32), b: &(usize, f32)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        let k = k.min(all.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, order);
            all.truncate(k);
        }
        all.sort_unstable_by(order);
        Ok(all)
    }

    /// Candidate set for action inference around an agent state.
    pub fn inference_candidates(&self, s_a: &[f32], k: usize) -> Result<Vec<usize>> {
        Ok(self
            .knn(s_a, k.max(MIN_INFERENCE_CANDIDATES))?
            .into_iter()
            .map(|(i, _)| i)
            .collect())
    }

    /// Lower each candidate's error to the distance between the agent
    /// transition and the record, taking over the agent's action, when that
    /// distance strictly improves on the stored error. Returns the number of
    /// records updated.
    pub fn infer_actions(
        &mut self,
        s_a: &[f32],
        a_a: usize,
        s_a_next: &[f32],
        candidates: &[usize],
    ) -> Result<usize> {
        let mut updated = 0;
        for &i in candidates {
            let len = self.records.len();
            let r = self
                .records
                .get_mut(i)
                .ok_or(ExpertError::InvalidRecord { index: i, len })?;
            let d = distance::transition_distance(&self.metric, (s_a, s_a_next), (&r.s_e, &r.s_e_next))?;
            if d < r.err {
                r.err = d;
                r.a_e = a_a;
                updated += 1;
            }
        }
        Ok(updated)
    }

    /// Pick one of the `k` nearest records whose initial state lies within
    /// the similarity threshold, uniformly at random. Every record in the
    /// final pool has its counter bumped (clamped at `c_max`).
    pub fn sample_similar<R: Rng + ?Sized>(
        &mut self,
        s_a: &[f32],
        k: usize,
        tau_similar: f32,
        c_max: u32,
        rng: &mut R,
    ) -> Result<Option<usize>> {
        if self.records.is_empty() {
            return Ok(None);
        }
        let threshold = distance::similarity_threshold_distance(&self.metric, tau_similar)?;
        let pool: Vec<usize> = self
            .knn(s_a, k.max(1))?
            .into_iter()
            .filter(|(_, d)| *d <= threshold)
            .map(|(i, _)| i)
            .collect();
        if pool.is_empty() {
            return Ok(None);
        }
        for &i in &pool {
            self.bump_counter(i, c_max);
        }
        Ok(Some(pool[rng.random_range(0..pool.len())]))
    }

    pub fn bump_counter(&mut self, i: usize, c_max: u32) {
        let r = &mut self.records[i];
        r.counter = (r.counter + 1).min(c_max);
    }

    fn states_match(&self, a: &[f32], b: &[f32]) -> bool {
        if self.chain_eps == 0.0 {
            a == b
        } else {
            distance::state_distance(&self.metric, a, b).is_ok_and(|d| d <= self.chain_eps)
        }
    }

    /// Link each record to the lowest-index record whose initial state equals
    /// its next state.
    pub fn build_chains(&mut self) {
        let successors: Vec<Option<usize>> = if self.chain_eps == 0.0 {
            let mut first: HashMap<Vec<u32>, usize> = HashMap::new();
            for (j, r) in self.records.iter().enumerate() {
                first.entry(state_key(&r.s_e)).or_insert(j);
            }
            self.records
                .iter()
                .map(|r| first.get(&state_key(&r.s_e_next)).copied())
                .collect()
        } else {
            self.records
                .iter()
                .map(|r| {
                    self.records
                        .iter()
                        .position(|c| self.states_match(&r.s_e_next, &c.s_e))
                })
                .collect()
        };
        for (r, next) in self.records.iter_mut().zip(successors) {
            r.next_in_chain = next;
        }
    }

    /// Records whose initial state matches `state` within `tol`.
    pub fn records_starting_at(&self, state: &[f32], tol: f32) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| match_within(&self.metric, state, &r.s_e, tol))
            .map(|(i, _)| i)
            .collect()
    }

    /// Reliability `1 - err / err_max`; an unmatched record scores 0.
    pub fn reliability(&self, i: usize) -> Result<f32> {
        Ok(reliability_of(self.record(i)?.err, self.err_max()))
    }
}

pub fn reliability_of(err: f32, err_max: f32) -> f32 {
    if err.is_finite() {
        (1.0 - err / err_max).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Bit pattern of a state, usable as an exact hash key.
pub fn state_key(s: &[f32]) -> Vec<u32> {
    // +0.0 and -0.0 must hash alike
    s.iter().map(|v| (v + 0.0).to_bits()).collect()
}

pub(crate) fn match_within(metric: &MetricSpec, a: &[f32], b: &[f32], tol: f32) -> bool {
    if tol == 0.0 {
        a == b
    } else {
        distance::state_distance(metric, a, b).is_ok_and(|d| d <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn episode(points: &[(f32, f32)]) -> Vec<(StateVec, StateVec)> {
        points
            .windows(2)
            .map(|w| (vec![w[0].0, w[0].1], vec![w[1].0, w[1].1]))
            .collect()
    }

    fn chains(ds: &ExpertDataset) -> Vec<(StateVec, Option<StateVec>)> {
        let mut out: Vec<_> = ds
            .records()
            .iter()
            .map(|r| {
                (
                    r.s_e.clone(),
                    r.next_in_chain.map(|j| ds.records()[j].s_e.clone()),
                )
            })
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    const PATH: [(f32, f32); 5] = [(0.1, 0.1), (0.2, 0.1), (0.3, 0.1), (0.3, 0.2), (0.3, 0.3)];

    #[test]
    fn empty_dataset_is_allowed() {
        let ds = ExpertDataset::load(vec![], MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        assert!(ds.is_empty());
        assert!(ds.knn(&[0.5, 0.5], 3).unwrap().is_empty());
    }

    #[test]
    fn fresh_records_are_unmatched() {
        let ds = ExpertDataset::load(episode(&PATH), MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        assert_eq!(ds.len(), 4);
        for r in ds.records() {
            assert!(r.err.is_infinite() && r.a_e < 4 && r.counter == 0);
        }
        assert_eq!(ds.reliability(0).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let bad = vec![(vec![0.1, 0.2, 0.3], vec![0.1, 0.2, 0.3])];
        assert!(ExpertDataset::load(bad, MetricSpec::euclidean(2), 4, &mut rng()).is_err());
    }

    #[test]
    fn sequential_episode_forms_one_chain() {
        let ds = ExpertDataset::load(episode(&PATH), MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        let links: Vec<_> = ds.records().iter().map(|r| r.next_in_chain).collect();
        assert_eq!(links, vec![Some(1), Some(2), Some(3), None]);
    }

    #[test]
    fn shuffled_episode_recovers_the_same_chain() {
        let plain = ExpertDataset::load(episode(&PATH), MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        let mut t = episode(&PATH);
        t.reverse();
        t.swap(0, 2);
        let shuffled = ExpertDataset::load(t, MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        assert_eq!(chains(&plain), chains(&shuffled));
    }

    #[test]
    fn disjoint_episodes_do_not_link() {
        let mut t = episode(&PATH[..3]);
        t.extend(episode(&[(0.7, 0.7), (0.8, 0.7), (0.9, 0.7)]));
        let ds = ExpertDataset::load(t, MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        let links: Vec<_> = ds.records().iter().map(|r| r.next_in_chain).collect();
        assert_eq!(links, vec![Some(1), None, Some(3), None]);
    }

    #[test]
    fn duplicate_start_state_links_lowest_index() {
        let t = vec![
            (vec![0.1, 0.1], vec![0.2, 0.2]),
            (vec![0.5, 0.5], vec![0.6, 0.6]),
            (vec![0.2, 0.2], vec![0.3, 0.3]),
            (vec![0.2, 0.2], vec![0.9, 0.9]),
        ];
        let ds = ExpertDataset::load(t, MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        assert_eq!(ds.records()[0].next_in_chain, Some(2));
        assert_eq!(ds.records_starting_at(&[0.2, 0.2], 0.0), vec![2, 3]);
    }

    #[test]
    fn exact_match_zeroes_error_and_worse_matches_do_not_overwrite() {
        let mut ds = ExpertDataset::load(episode(&PATH), MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        let r = ds.records()[1].clone();
        ds.infer_actions(&r.s_e, 3, &r.s_e_next, &[1]).unwrap();
        assert_eq!((ds.records()[1].a_e, ds.records()[1].err), (3, 0.0));
        ds.infer_actions(&r.s_e, 1, &[0.9, 0.9], &[1]).unwrap();
        assert_eq!((ds.records()[1].a_e, ds.records()[1].err), (3, 0.0));
        assert_eq!(ds.reliability(1).unwrap(), 1.0);
    }

    #[test]
    fn reliability_examples() {
        assert_eq!(reliability_of(0.0, 2.0), 1.0);
        assert_eq!(reliability_of(2.0, 2.0), 0.0);
        assert_eq!(reliability_of(0.5, 2.0), 0.75);
        assert_eq!(reliability_of(f32::INFINITY, 2.0), 0.0);
    }

    #[test]
    fn sampling_counts_the_whole_pool() {
        let t = vec![
            (vec![0.5, 0.5], vec![0.6, 0.5]),
            (vec![0.5, 0.5], vec![0.5, 0.6]),
            (vec![0.9, 0.9], vec![0.9, 0.8]),
        ];
        let mut ds = ExpertDataset::load(t, MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
        let mut r = rng();
        let pick = ds.sample_similar(&[0.5, 0.5], 3, 1.0, 100, &mut r).unwrap().unwrap();
        assert!(pick < 2);
        let counters: Vec<u32> = ds.records().iter().map(|r| r.counter).collect();
        assert_eq!(counters, vec![1, 1, 0]);
        // nothing within the threshold: no pick and no counting
        assert_eq!(ds.sample_similar(&[0.1, 0.1], 3, 0.99, 100, &mut r).unwrap(), None);
        assert_eq!(ds.records()[2].counter, 0);
        for _ in 0..10 {
            ds.sample_similar(&[0.5, 0.5], 3, 1.0, 4, &mut r).unwrap();
        }
        assert_eq!(ds.records()[0].counter, 4);
    }

    proptest! {
        #[test]
        fn knn_matches_brute_force(
            points in prop::collection::vec((0u8..=20, 0u8..=20), 1..200),
            query in (0u8..=20, 0u8..=20),
            k in 1usize..30,
        ) {
            let s = |p: (u8, u8)| vec![p.0 as f32 / 20.0, p.1 as f32 / 20.0];
            let t: Vec<_> = points.iter().map(|p| (s(*p), s(*p))).collect();
            let ds = ExpertDataset::load(t, MetricSpec::euclidean(2), 4, &mut rng()).unwrap();
            let q = s(query);
            let mut brute: Vec<(usize, f32)> = ds.records().iter().enumerate()
                .map(|(i, r)| (i, distance::state_distance(ds.metric(), &q, &r.s_e).unwrap()))
                .collect();
            brute.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            brute.truncate(k);
            prop_assert_eq!(ds.knn(&q, k).unwrap(), brute);
        }
    }
}
