use rand::Rng;

use crate::confidence::{delta_q, discount_weight, phi_heterogeneous, phi_homogeneous};
use crate::expert::{reliability_of, ExpertDataset};
use crate::nn::{argmax_action, NnError, Optimizer, QNetwork, TdEntry};
use crate::replay::AugmentedExperience;

use super::{Algorithm, LearnerError};

/// Epsilon-greedy choice. The random draw is skipped entirely when
/// `eps == 0`.
pub fn select_action<R: Rng + ?Sized>(q: &[f32], eps: f32, rng: &mut R) -> Result<usize, NnError> {
    if eps > 0.0 && rng.random::<f32>() < eps {
        if q.is_empty() {
            return Err(NnError::EmptyQ);
        }
        return Ok(rng.random_range(0..q.len()));
    }
    argmax_action(q)
}

/// `r` for terminal steps, otherwise `r + gamma * Q(s', a*; target)` where
/// `a*` maximizes the online network (or the target network when `double`
/// is off).
pub fn ddqn_target(
    r: f32,
    done: bool,
    s_next: &[f32],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f32,
    double: bool,
) -> Result<f32, NnError> {
    if done {
        return Ok(r);
    }
    let q_target = target.forward(s_next)?;
    let a = if double {
        argmax_action(&online.forward(s_next)?)?
    } else {
        argmax_action(&q_target)?
    };
    Ok(r + gamma * q_target[a])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub mode: Algorithm,
    pub gamma: f32,
    pub double_dqn: bool,
    pub beta_conf: f32,
    pub c_max: u32,
    pub phi_override: Option<f32>,
    pub optimizer: Optimizer,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    /// Batch loss before the update.
    pub loss: f32,
    /// Agent TD error per sample, for replay priorities.
    pub td_errors: Vec<f64>,
    /// Confidence per sample (0 without an expert term).
    pub phis: Vec<f32>,
    /// Samples that trained an expert term.
    pub expert_samples: usize,
}

/// Expert side of one sample: the action trained at `s_e`, the state it
/// leads to, and the confidence.
struct ExpertTerm {
    s_e: Vec<f32>,
    action: usize,
    s_next: Vec<f32>,
    phi: f32,
}

fn expert_term(
    online: &QNetwork,
    ds: &mut ExpertDataset,
    index: usize,
    a_a: usize,
    params: &StepParams,
) -> Result<Option<ExpertTerm>, LearnerError> {
    let err_max = ds.err_max();
    let rec = ds.record(index)?;
    let bridged = params.mode == Algorithm::HaDiiqn && rec.infeasible;
    if bridged && rec.bridge.is_none() {
        return Ok(None);
    }
    ds.bump_counter(index, params.c_max);
    let rec = ds.record(index)?;
    let w = discount_weight(rec.counter, params.c_max);
    let q = online.forward(&rec.s_e)?;
    let term = if bridged {
        let b = rec.bridge.as_ref().unwrap();
        ExpertTerm {
            s_e: rec.s_e.clone(),
            action: b.a_feas,
            s_next: b.s_feas.clone(),
            phi: phi_heterogeneous(delta_q(&q, b.a_feas, a_a, params.beta_conf), w),
        }
    } else {
        let eps = reliability_of(rec.err, err_max);
        ExpertTerm {
            s_e: rec.s_e.clone(),
            action: rec.a_e,
            s_next: rec.s_e_next.clone(),
            phi: phi_homogeneous(delta_q(&q, rec.a_e, a_a, params.beta_conf), w, eps),
        }
    };
    Ok(Some(ExpertTerm {
        phi: params.phi_override.unwrap_or(term.phi),
        ..term
    }))
}

/// One update on a sampled minibatch. Samples with a usable expert
/// reference contribute `phi * expert + (1 - phi) * agent` squared errors,
/// the rest plain agent errors; every term is scaled by the sample's
/// importance weight and the sum divided by the batch size.
pub fn train_step(
    online: &mut QNetwork,
    target: &QNetwork,
    mut dataset: Option<&mut ExpertDataset>,
    batch: &[(&AugmentedExperience, f32)],
    params: &StepParams,
) -> Result<StepOutcome, LearnerError> {
    struct Pending {
        agent_target: f32,
        agent_weight: f32,
        expert: Option<(ExpertTerm, f32, f32)>,
    }
    let mut pending = Vec::with_capacity(batch.len());
    let mut out = StepOutcome::default();
    for (exp, is_w) in batch {
        let y_a = ddqn_target(exp.r, exp.done, &exp.s_a_next, online, target, params.gamma, params.double_dqn)?;
        let q_a = online.forward(&exp.s_a)?[exp.a_a];
        out.td_errors.push((y_a - q_a) as f64);
        let term = match (params.mode, exp.expert_ref, dataset.as_deref_mut()) {
            (Algorithm::Dqn, _, _) | (_, None, _) | (_, _, None) => None,
            (_, Some(i), Some(ds)) => expert_term(online, ds, i, exp.a_a, params)?,
        };
        match term {
            Some(t) => {
                let y_e = ddqn_target(exp.r, exp.done, &t.s_next, online, target, params.gamma, params.double_dqn)?;
                let phi = t.phi;
                out.phis.push(phi);
                out.expert_samples += 1;
                pending.push(Pending {
                    agent_target: y_a,
                    agent_weight: (1.0 - phi) * is_w,
                    expert: Some((t, y_e, phi * is_w)),
                });
            }
            None => {
                out.phis.push(0.0);
                pending.push(Pending {
                    agent_target: y_a,
                    agent_weight: *is_w,
                    expert: None,
                });
            }
        }
    }
    let mut entries = Vec::with_capacity(2 * batch.len());
    for ((exp, _), p) in batch.iter().zip(&pending) {
        entries.push(TdEntry {
            state: &exp.s_a,
            action: exp.a_a,
            target: p.agent_target,
            weight: p.agent_weight,
        });
        if let Some((t, y_e, w)) = &p.expert {
            entries.push(TdEntry {
                state: &t.s_e,
                action: t.action,
                target: *y_e,
                weight: *w,
            });
        }
    }
    out.loss = online.weighted_td_step(&entries, batch.len(), params.optimizer)?;
    Ok(out)
}

pub fn train_step_diiqn(
    online: &mut QNetwork,
    target: &QNetwork,
    dataset: Option<&mut ExpertDataset>,
    batch: &[(&AugmentedExperience, f32)],
    params: &StepParams,
) -> Result<StepOutcome, LearnerError> {
    train_step(online, target, dataset, batch, &StepParams { mode: Algorithm::Diiqn, ..*params })
}

pub fn train_step_ha(
    online: &mut QNetwork,
    target: &QNetwork,
    dataset: Option<&mut ExpertDataset>,
    batch: &[(&AugmentedExperience, f32)],
    params: &StepParams,
) -> Result<StepOutcome, LearnerError> {
    train_step(online, target, dataset, batch, &StepParams { mode: Algorithm::HaDiiqn, ..*params })
}
