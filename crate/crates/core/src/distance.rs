//! State and transition distances.
//!
//! Low-dimensional states are compared with Euclidean distance over features
//! normalized to `[0, 1]`. Multi-channel binary grids use a channel-weighted
//! Hamming distance, either with fixed per-channel weights or with weights
//! derived from how sparse each channel is in the two states being compared.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("state has {got} components, metric expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {index} = {value} lies outside [0, 1]")]
    NotNormalized { index: usize, value: f32 },
    #[error("invalid metric: {0}")]
    InvalidSpec(String),
    #[error("similarity level {0} must lie in (0, 1]")]
    TauOutOfRange(f32),
}

pub type Result<T, E = DistanceError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    EuclideanNormalized,
    HammingStatic,
    HammingDynamic,
}

impl MetricKind {
    pub fn id(self) -> u8 {
        match self {
            MetricKind::EuclideanNormalized => 0,
            MetricKind::HammingStatic => 1,
            MetricKind::HammingDynamic => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(MetricKind::EuclideanNormalized),
            1 => Some(MetricKind::HammingStatic),
            2 => Some(MetricKind::HammingDynamic),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateShape {
    Flat(usize),
    Grid {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl StateShape {
    pub fn len(&self) -> usize {
        match *self {
            StateShape::Flat(n) => n,
            StateShape::Grid {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(channels, pixels per channel)`; a flat shape is one channel.
    pub fn channels(&self) -> (usize, usize) {
        match *self {
            StateShape::Flat(n) => (1, n),
            StateShape::Grid {
                channels,
                height,
                width,
            } => (channels, height * width),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub shape: StateShape,
    pub static_channel_weights: Option<Vec<f32>>,
    pub w_base: f32,
    pub lambda: f32,
    /// Largest channel sparsity assumed when bounding the dynamic metric.
    pub rho_max: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceBounds {
    pub d_max_state: f32,
    pub err_max_transition: f32,
}

impl MetricSpec {
    pub fn euclidean(dim: usize) -> Self {
        MetricSpec {
            kind: MetricKind::EuclideanNormalized,
            shape: StateShape::Flat(dim),
            static_channel_weights: None,
            w_base: 1.0,
            lambda: 2.0,
            rho_max: 1.0,
        }
    }

    pub fn hamming_static(channels: usize, height: usize, width: usize, weights: Vec<f32>) -> Self {
        MetricSpec {
            kind: MetricKind::HammingStatic,
            shape: StateShape::Grid {
                channels,
                height,
                width,
            },
            static_channel_weights: Some(weights),
            ..Self::euclidean(0)
        }
    }

    pub fn hamming_dynamic(
        channels: usize,
        height: usize,
        width: usize,
        w_base: f32,
        lambda: f32,
        rho_max: f32,
    ) -> Self {
        MetricSpec {
            kind: MetricKind::HammingDynamic,
            shape: StateShape::Grid {
                channels,
                height,
                width,
            },
            static_channel_weights: None,
            w_base,
            lambda,
            rho_max,
        }
    }

    pub fn state_len(&self) -> usize {
        self.shape.len()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(DistanceError::InvalidSpec(m.to_string()));
        if self.shape.is_empty() {
            return invalid("empty state shape");
        }
        if !(self.w_base > 0.0) {
            return invalid("w_base must be > 0");
        }
        if !(self.lambda >= 0.0) {
            return invalid("lambda must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.rho_max) {
            return invalid("rho_max must lie in [0, 1]");
        }
        match self.kind {
            MetricKind::EuclideanNormalized => Ok(()),
            MetricKind::HammingStatic => {
                let (channels, _) = self.shape.channels();
                match &self.static_channel_weights {
                    Some(w) if w.len() != channels => {
                        invalid("static weights do not match channel count")
                    }
                    Some(w) if w.iter().any(|x| !(*x >= 0.0)) => {
                        invalid("static weights must be >= 0")
                    }
                    Some(_) => Ok(()),
                    None => invalid("hamming-static needs channel weights"),
                }
            }
            MetricKind::HammingDynamic => Ok(()),
        }
    }

    /// Dimension and normalization check applied to every input state.
    pub fn check(&self, s: &[f32]) -> Result<()> {
        if s.len() != self.state_len() {
            return Err(DistanceError::DimensionMismatch {
                expected: self.state_len(),
                got: s.len(),
            });
        }
        if self.kind == MetricKind::EuclideanNormalized {
            if let Some((index, &value)) = s
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(DistanceError::NotNormalized { index, value });
            }
        }
        Ok(())
    }

    /// Per-channel weights for a dynamic comparison of `a` and `b`.
    pub fn dynamic_weights(&self, a: &[f32], b: &[f32]) -> Result<Vec<f32>> {
        self.check(a)?;
        self.check(b)?;
        let (channels, pixels) = self.shape.channels();
        Ok((0..channels)
            .map(|c| {
                let range = c * pixels..(c + 1) * pixels;
                let density_a = active(&a[range.clone()]) as f32 / pixels as f32;
                let density_b = active(&b[range]) as f32 / pixels as f32;
                let rho = 1.0 - 0.5 * (density_a + density_b);
                self.w_base + self.lambda * rho
            })
            .collect())
    }
}

fn is_active(v: f32) -> bool {
    v > 0.5
}

fn active(channel: &[f32]) -> usize {
    channel.iter().filter(|v| is_active(**v)).count()
}

fn hamming(a: &[f32], b: &[f32]) -> usize {
    a.iter()
        .zip(b)
        .filter(|(x, y)| is_active(**x) != is_active(**y))
        .count()
}

pub fn state_distance(spec: &MetricSpec, a: &[f32], b: &[f32]) -> Result<f32> {
    spec.check(a)?;
    spec.check(b)?;
    let (channels, pixels) = spec.shape.channels();
    Ok(match spec.kind {
        MetricKind::EuclideanNormalized => a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (*x - *y) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt() as f32,
        MetricKind::HammingStatic => {
            let weights = spec.static_channel_weights.as_deref().unwrap_or(&[]);
            (0..channels)
                .map(|c| {
                    let r = c * pixels..(c + 1) * pixels;
                    weights[c] * hamming(&a[r.clone()], &b[r]) as f32
                })
                .sum()
        }
        MetricKind::HammingDynamic => {
            let weights = spec.dynamic_weights(a, b)?;
            (0..channels)
                .map(|c| {
                    let r = c * pixels..(c + 1) * pixels;
                    weights[c] * hamming(&a[r.clone()], &b[r]) as f32
                })
                .sum()
        }
    })
}

/// Distance between transitions `(s1, s1')` and `(s2, s2')`: the sum of the
/// start-state and end-state distances.
pub fn transition_distance(
    spec: &MetricSpec,
    first: (&[f32], &[f32]),
    second: (&[f32], &[f32]),
) -> Result<f32> {
    Ok(state_distance(spec, first.0, second.0)? + state_distance(spec, first.1, second.1)?)
}

pub fn bounds(spec: &MetricSpec) -> Result<DistanceBounds> {
    spec.validate()?;
    let (channels, pixels) = spec.shape.channels();
    let d_max_state = match spec.kind {
        MetricKind::EuclideanNormalized => (spec.state_len() as f32).sqrt(),
        MetricKind::HammingStatic => spec
            .static_channel_weights
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|w| w * pixels as f32)
            .sum(),
        MetricKind::HammingDynamic => {
            (spec.w_base + spec.lambda * spec.rho_max) * (channels * pixels) as f32
        }
    };
    if !(d_max_state > 0.0) {
        return Err(DistanceError::InvalidSpec(
            "maximum state distance must be > 0".into(),
        ));
    }
    Ok(DistanceBounds {
        d_max_state,
        err_max_transition: 2.0 * d_max_state,
    })
}

/// Largest distance still counted as "similar" at level `tau`:
/// `(1 - tau) * d_max`.
pub fn similarity_threshold_distance(spec: &MetricSpec, tau: f32) -> Result<f32> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(DistanceError::TauOutOfRange(tau));
    }
    Ok((1.0 - tau) * bounds(spec)?.d_max_state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn euclidean_examples() {
        let spec = MetricSpec::euclidean(4);
        let a = [0.2, 0.4, 0.6, 0.8];
        assert_eq!(state_distance(&spec, &a, &a).unwrap(), 0.0);
        assert_eq!(state_distance(&spec, &[0.0; 4], &[1.0; 4]).unwrap(), 2.0);
        assert_eq!(
            transition_distance(&spec, (&[0.0; 4], &[1.0; 4]), (&[1.0; 4], &[0.0; 4])).unwrap(),
            4.0
        );
        assert_eq!(bounds(&MetricSpec::euclidean(9)).unwrap().d_max_state, 3.0);
    }

    #[test]
    fn euclidean_rejects_bad_inputs() {
        let spec = MetricSpec::euclidean(2);
        assert_eq!(
            state_distance(&spec, &[0.0, 1.5], &[0.0, 0.0]),
            Err(DistanceError::NotNormalized {
                index: 1,
                value: 1.5
            })
        );
        assert!(matches!(
            state_distance(&spec, &[0.0], &[0.0, 0.0]),
            Err(DistanceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dynamic_hamming_single_pixel() {
        let spec = MetricSpec::hamming_dynamic(1, 10, 10, 1.0, 2.0, 1.0);
        let mut a = vec![0.0; 100];
        a[37] = 1.0;
        let b = vec![0.0; 100];
        let w = spec.dynamic_weights(&a, &b).unwrap();
        assert_abs_diff_eq!(w[0], 2.99, epsilon = 1e-6);
        assert_abs_diff_eq!(state_distance(&spec, &a, &b).unwrap(), 2.99, epsilon = 1e-6);
    }

    #[test]
    fn dynamic_bound_instantiation() {
        let spec = MetricSpec::hamming_dynamic(4, 10, 10, 1.0, 2.0, 1.0);
        let b = bounds(&spec).unwrap();
        assert_eq!(b.d_max_state, 1200.0);
        assert_eq!(b.err_max_transition, 2400.0);
    }

    #[test]
    fn static_hamming_weights_channels() {
        let spec = MetricSpec::hamming_static(2, 2, 2, vec![3.0, 0.5]);
        let a = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let b = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(state_distance(&spec, &a, &b).unwrap(), 3.0 + 1.0);
        assert_eq!(bounds(&spec).unwrap().d_max_state, 3.0 * 4.0 + 0.5 * 4.0);
        let bad = MetricSpec::hamming_static(2, 2, 2, vec![1.0]);
        assert!(bad.validate().is_err());
        let neg = MetricSpec::hamming_static(2, 2, 2, vec![1.0, -1.0]);
        assert!(neg.validate().is_err());
    }

    #[test]
    fn similarity_threshold_examples() {
        let spec = MetricSpec::euclidean(4);
        assert_eq!(similarity_threshold_distance(&spec, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            similarity_threshold_distance(&spec, 0.9).unwrap(),
            0.2,
            epsilon = 1e-6
        );
        assert!(
            similarity_threshold_distance(&spec, 0.99).unwrap()
                < similarity_threshold_distance(&spec, 0.9).unwrap()
        );
        assert!(similarity_threshold_distance(&spec, 0.0).is_err());
        assert!(similarity_threshold_distance(&spec, 1.01).is_err());
    }

    #[test]
    fn bound_holds_and_is_reached_by_corners() {
        let n = 6;
        let spec = MetricSpec::euclidean(n);
        let d_max = bounds(&spec).unwrap().d_max_state;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut reached = 0.0f32;
        for _ in 0..10_000 {
            let a: Vec<f32> = (0..n).map(|_| rng.random()).collect();
            let b: Vec<f32> = (0..n).map(|_| rng.random()).collect();
            assert!(state_distance(&spec, &a, &b).unwrap() <= d_max);
            let ca: Vec<f32> = (0..n).map(|_| rng.random_range(0..2) as f32).collect();
            let cb: Vec<f32> = ca.iter().map(|v| 1.0 - v).collect();
            reached = reached.max(state_distance(&spec, &ca, &cb).unwrap());
        }
        assert!(reached > 0.95 * d_max);
    }

    fn binary(len: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(prop::bool::ANY.prop_map(|b| b as u8 as f32), len)
    }

    fn specs() -> impl Strategy<Value = MetricSpec> {
        prop_oneof![
            Just(MetricSpec::euclidean(12)),
            Just(MetricSpec::hamming_static(3, 2, 2, vec![1.0, 0.5, 2.0])),
            Just(MetricSpec::hamming_dynamic(3, 2, 2, 1.0, 2.0, 1.0)),
        ]
    }

    proptest! {
        #[test]
        fn metric_axioms(spec in specs(), a in binary(12), b in binary(12), noise in prop::collection::vec(0.0f32..=1.0, 12)) {
            // euclidean also sees non-binary points
            let a: Vec<f32> = if spec.kind == MetricKind::EuclideanNormalized {
                a.iter().zip(&noise).map(|(x, n)| (x + n) / 2.0).collect()
            } else { a };
            let dab = state_distance(&spec, &a, &b).unwrap();
            let dba = state_distance(&spec, &b, &a).unwrap();
            prop_assert_eq!(dab, dba);
            prop_assert!(dab >= 0.0);
            prop_assert_eq!(state_distance(&spec, &a, &a).unwrap(), 0.0);
            if dab == 0.0 {
                if spec.kind == MetricKind::EuclideanNormalized {
                    prop_assert_eq!(&a, &b);
                } else {
                    prop_assert!(a.iter().zip(&b).all(|(x, y)| is_active(*x) == is_active(*y)));
                }
            }
            let bounds = bounds(&spec).unwrap();
            prop_assert!(dab <= bounds.d_max_state * (1.0 + 1e-6));
            let t = transition_distance(&spec, (&a, &b), (&b, &a)).unwrap();
            prop_assert!(t <= bounds.err_max_transition * (1.0 + 1e-6));
            prop_assert_eq!(bounds.err_max_transition, 2.0 * bounds.d_max_state);
        }

        #[test]
        fn dynamic_weights_are_bounded(a in binary(12), b in binary(12), w_base in 0.1f32..3.0, lambda in 0.0f32..4.0) {
            let spec = MetricSpec::hamming_dynamic(3, 2, 2, w_base, lambda, 1.0);
            for w in spec.dynamic_weights(&a, &b).unwrap() {
                prop_assert!(w >= w_base - 1e-6 && w <= w_base + lambda + 1e-6);
            }
        }

        #[test]
        fn transition_distance_is_symmetric(a in binary(12), b in binary(12), c in binary(12), d in binary(12)) {
            let spec = MetricSpec::hamming_dynamic(3, 2, 2, 1.0, 2.0, 1.0);
            prop_assert_eq!(
                transition_distance(&spec, (&a, &b), (&c, &d)).unwrap(),
                transition_distance(&spec, (&c, &d), (&a, &b)).unwrap()
            );
        }
    }
}
