//! Infeasibility marking and bridge repair for heterogeneous action sets.
//!
//! An expert transition whose best inferred-action error sits above a
//! percentile of all errors is presumed impossible for the agent. For such a
//! record we look for a short path in the agent's own experience graph from a
//! state matching `s_e` (at most `k` steps) to any state the expert reaches
//! within `n` steps after `s_e`, following the expert chains and switching
//! between chains wherever their states coincide.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::distance::MetricSpec;
use crate::envs::StateVec;
use crate::expert::{match_within, state_key, Bridge, ExpertDataset};
use crate::replay::PrioritizedReplay;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    /// Error percentile above which a record is infeasible, in `(0, 1)`.
    pub tau_infeas: f32,
    /// Maximum agent path length.
    pub k: usize,
    /// Maximum expert look-ahead.
    pub n: usize,
    /// Environment steps between refreshes.
    pub update_interval: u64,
    /// State-matching tolerance (0 = exact).
    pub match_tau: f32,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            tau_infeas: 0.95,
            k: 4,
            n: 3,
            update_interval: 1000,
            match_tau: 0.0,
        }
    }
}

/// Directed graph of the transitions stored in replay.
#[derive(Clone, Debug, Default)]
pub struct AgentTrajectoryView {
    states: Vec<StateVec>,
    index: HashMap<Vec<u32>, usize>,
    /// Sorted, deduplicated `(action, next node)` per node.
    edges: Vec<Vec<(usize, usize)>>,
}

impl AgentTrajectoryView {
    pub fn from_transitions<'a, I>(transitions: I) -> Self
    where
        I: IntoIterator<Item = (&'a [f32], usize, &'a [f32])>,
    {
        let mut view = AgentTrajectoryView::default();
        for (s, a, s2) in transitions {
            let u = view.intern(s);
            let v = view.intern(s2);
            view.edges[u].push((a, v));
        }
        for e in &mut view.edges {
            e.sort_unstable();
            e.dedup();
        }
        view
    }

    pub fn from_replay(replay: &PrioritizedReplay) -> Self {
        Self::from_transitions(
            replay
                .iter_chronological()
                .map(|e| (e.s_a.as_slice(), e.a_a, e.s_a_next.as_slice())),
        )
    }

    fn intern(&mut self, s: &[f32]) -> usize {
        let key = state_key(s);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.states.len();
        self.states.push(s.to_vec());
        self.edges.push(Vec::new());
        self.index.insert(key, i);
        i
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, node: usize) -> &[f32] {
        &self.states[node]
    }

    pub fn node_of(&self, s: &[f32]) -> Option<usize> {
        self.index.get(&state_key(s)).copied()
    }

    pub fn edges(&self, node: usize) -> &[(usize, usize)] {
        &self.edges[node]
    }

    /// Nodes whose state matches `s` within `tol`.
    pub fn matching(&self, metric: &MetricSpec, s: &[f32], tol: f32) -> Vec<usize> {
        if tol == 0.0 {
            return self.node_of(s).into_iter().collect();
        }
        (0..self.states.len())
            .filter(|&i| match_within(metric, s, &self.states[i], tol))
            .collect()
    }
}

/// Linearly interpolated `q`-quantile of an ascending slice.
pub fn quantile(sorted: &[f32], q: f32) -> Option<f32> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some((sorted[lo] as f64 + (h - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64)) as f32)
}

/// Flag records whose error lies strictly above the `tau_infeas` quantile of
/// the finite errors, or that were never matched. Flags are recomputed from
/// scratch, so records can become feasible again. Returns the flagged count.
pub fn mark_infeasible(ds: &mut ExpertDataset, tau_infeas: f32) -> usize {
    let mut finite: Vec<f32> = ds
        .records()
        .iter()
        .map(|r| r.err)
        .filter(|e| e.is_finite())
        .collect();
    finite.sort_unstable_by(f32::total_cmp);
    let threshold = quantile(&finite, tau_infeas);
    let mut count = 0;
    for i in 0..ds.len() {
        let r = ds.record_mut(i).unwrap();
        r.infeasible = match threshold {
            _ if !r.err.is_finite() => true,
            Some(t) => r.err > t,
            None => false,
        };
        count += r.infeasible as usize;
    }
    count
}

/// States the expert reaches within `n` steps after record `i`'s initial
/// state, with their depth (`s_e'` is depth 1). Any record starting at a
/// frontier state counts as a continuation.
pub fn expert_forward_states(
    ds: &ExpertDataset,
    i: usize,
    n: usize,
    match_tau: f32,
) -> Vec<(StateVec, usize)> {
    let Ok(rec) = ds.record(i) else {
        return Vec::new();
    };
    if n == 0 {
        return Vec::new();
    }
    let mut out = vec![(rec.s_e_next.clone(), 1)];
    let mut seen: HashSet<Vec<u32>> = HashSet::from([state_key(&rec.s_e_next)]);
    let mut queue = VecDeque::from([(rec.s_e_next.clone(), 1usize)]);
    while let Some((state, depth)) = queue.pop_front() {
        if depth >= n {
            continue;
        }
        // chain links are the exact matches among these
        for j in ds.records_starting_at(&state, match_tau) {
            let next = &ds.records()[j].s_e_next;
            if seen.insert(state_key(next)) {
                out.push((next.clone(), depth + 1));
                queue.push_back((next.clone(), depth + 1));
            }
        }
    }
    out
}

/// Shortest agent path (at most `cfg.k` steps) from a state matching record
/// `i`'s initial state to one of its expert forward states other than that
/// initial state. Among shortest
/// paths the lexicographically smallest action sequence wins.
pub fn find_bridge(
    view: &AgentTrajectoryView,
    ds: &ExpertDataset,
    i: usize,
    cfg: &BridgeConfig,
) -> Option<Bridge> {
    let rec = ds.record(i).ok()?;
    // returning to the start is no progress
    let targets: Vec<(StateVec, usize)> = expert_forward_states(ds, i, cfg.n, cfg.match_tau)
        .into_iter()
        .filter(|(t, _)| !match_within(ds.metric(), t, &rec.s_e, cfg.match_tau))
        .collect();
    if targets.is_empty() || cfg.k == 0 {
        return None;
    }
    let target_keys: HashSet<Vec<u32>> = targets.iter().map(|(s, _)| state_key(s)).collect();
    let is_target = |node: usize| {
        let s = view.state(node);
        if cfg.match_tau == 0.0 {
            target_keys.contains(&state_key(s))
        } else {
            targets
                .iter()
                .any(|(t, _)| match_within(ds.metric(), s, t, cfg.match_tau))
        }
    };

    // per node: (action sequence, node after the first action)
    let mut visited: HashSet<usize> = HashSet::new();
    let mut frontier: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    for start in view.matching(ds.metric(), &rec.s_e, cfg.match_tau) {
        visited.insert(start);
        frontier.push((start, Vec::new(), start));
    }
    for _depth in 1..=cfg.k {
        let mut next: HashMap<usize, (Vec<usize>, usize)> = HashMap::new();
        for (u, seq, first) in &frontier {
            for &(a, v) in view.edges(*u) {
                if visited.contains(&v) {
                    continue;
                }
                let mut cand = seq.clone();
                cand.push(a);
                let first_node = if seq.is_empty() { v } else { *first };
                match next.get(&v) {
                    Some((best, best_first)) if (best, *best_first) <= (&cand, first_node) => {}
                    _ => {
                        next.insert(v, (cand, first_node));
                    }
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        let hit = next
            .iter()
            .filter(|(v, _)| is_target(**v))
            .min_by(|a, b| (&a.1 .0, a.1 .1).cmp(&(&b.1 .0, b.1 .1)));
        if let Some((_, (seq, first))) = hit {
            return Some(Bridge {
                a_feas: seq[0],
                s_feas: view.state(*first).to_vec(),
                l_feas: seq.len(),
            });
        }
        visited.extend(next.keys().copied());
        let mut level: Vec<(usize, Vec<usize>, usize)> =
            next.into_iter().map(|(v, (seq, f))| (v, seq, f)).collect();
        level.sort_unstable_by(|a, b| (&a.1, a.2, a.0).cmp(&(&b.1, b.2, b.0)));
        frontier = level;
    }
    None
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RefreshStats {
    pub infeasible: usize,
    pub bridged: usize,
    pub improved: usize,
}

/// Re-mark infeasible records and search bridges for those that lack one or
/// could still get a shorter one. Stored bridges only ever shrink.
pub fn refresh_bridges(
    view: &AgentTrajectoryView,
    ds: &mut ExpertDataset,
    cfg: &BridgeConfig,
) -> RefreshStats {
    let infeasible = mark_infeasible(ds, cfg.tau_infeas);
    let mut stats = RefreshStats {
        infeasible,
        ..RefreshStats::default()
    };
    for i in 0..ds.len() {
        let r = ds.record(i).unwrap();
        if !r.infeasible || r.bridge.as_ref().is_some_and(|b| b.l_feas <= 1) {
            continue;
        }
        if let Some(b) = find_bridge(view, ds, i, cfg) {
            let r = ds.record_mut(i).unwrap();
            match &r.bridge {
                Some(old) if old.l_feas <= b.l_feas => {}
                _ => {
                    r.bridge = Some(b);
                    stats.improved += 1;
                }
            }
        }
    }
    stats.bridged = ds.records().iter().filter(|r| r.bridge.is_some()).count();
    stats
}
