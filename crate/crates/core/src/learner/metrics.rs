use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    /// Global step at which the episode ended.
    pub step: u64,
    pub episode: u64,
    pub episode_return: f32,
    pub normalized_return: f32,
    pub length: u32,
    pub reached_goal: bool,
}

/// Aggregates over one logging interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub step: u64,
    pub epsilon: f32,
    /// Mean confidence over every trained sample (0 for samples without an
    /// expert reference).
    pub mean_phi: f32,
    /// Fraction of trained samples that carried an expert reference.
    pub expert_fraction: f32,
    pub mean_loss: f32,
    /// Mean error over matched expert records.
    pub mean_err: f32,
    pub matched_fraction: f32,
    pub infeasible_fraction: f32,
    pub bridges: u32,
    pub mean_bridge_len: f32,
    pub updates: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: u64,
    pub mean_return: f32,
    pub mean_normalized: f32,
    pub std_normalized: f32,
    pub success_rate: f32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub episodes: Vec<EpisodeRow>,
    pub intervals: Vec<IntervalRow>,
    pub evals: Vec<EvalRow>,
    /// First evaluation step of the streak of optimal evaluations, if any.
    pub convergence_step: Option<u64>,
    /// Environment steps actually taken.
    pub steps: u64,
}

/// Write `# config_hash=<hash> seed=<seed>` followed by the CSV rows.
pub fn write_csv<W: Write, T: Serialize>(
    mut out: W,
    config_hash: &str,
    seed: u64,
    rows: &[T],
) -> std::io::Result<()> {
    writeln!(out, "# config_hash={config_hash} seed={seed}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// Parse rows written by [`write_csv`], skipping `#` comment lines.
pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, csv::Error> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .collect()
}

impl MetricsLog {
    /// Moving average over `window` consecutive intervals of `mean_phi`,
    /// one value per full window.
    pub fn smoothed_phi(&self, window: usize) -> Vec<f32> {
        let phi: Vec<f32> = self.intervals.iter().map(|r| r.mean_phi).collect();
        moving_average(&phi, window)
    }
}

pub fn moving_average(xs: &[f32], window: usize) -> Vec<f32> {
    if window == 0 || xs.len() < window {
        return Vec::new();
    }
    xs.windows(window)
        .map(|w| w.iter().sum::<f32>() / window as f32)
        .collect()
}
