//! Regularized group-relative policy optimization.
//!
//! The objective over a batch of `B` groups with `K` generations each is
//!
//! ```text
//! J(θ) = 1/(BK) Σ_j Σ_i [ min(r a, clip(r, 1-ε, 1+ε) a) - β KL_i ]
//! r    = π_θ(o_i) / π_old(o_i)
//! KL_i = ρ - ln ρ - 1,   ρ = π_ref(o_i) / π_θ(o_i)
//! ```
//!
//! and is ascended with AdamW under a linearly decaying learning rate. The
//! gradient is analytic: every term contributes
//! `(∂surrogate/∂lnπ_θ - β (1 - ρ)) ∇θ ln π_θ(o_i)`.

use thiserror::Error;

use crate::types::{RunConfig, Stage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("importance ratio overflows: log-ratio {0}")]
    Overflow(f64),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("group {group} has {got} generations, expected {expected}")]
    ShapeMismatch { group: usize, expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
}

/// `π_new / π_old` from log densities.
pub fn importance_ratio(logp_new: f64, logp_old: f64) -> Result<f64, GrpoError> {
    let diff = logp_new - logp_old;
    let ratio = diff.exp();
    if ratio.is_finite() {
        Ok(ratio)
    } else {
        Err(GrpoError::Overflow(diff))
    }
}

/// `min(ratio * adv, clamp(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Non-negative KL estimator `ρ - ln ρ - 1` with `ρ = π_ref / π_θ`.
pub fn kl_approx(logp_theta: f64, logp_ref: f64) -> f64 {
    let log_rho = logp_ref - logp_theta;
    log_rho.exp_m1() - log_rho
}

/// A parametric policy whose log density is differentiable in its
/// parameters.
pub trait LogDensityModel {
    /// Everything needed to evaluate the density of one generation
    /// (conditioning context and the drawn action).
    type Sample;

    fn num_params(&self) -> usize;

    fn log_density(&self, params: &[f64], sample: &Self::Sample) -> f64;

    /// Log density at `params`, accumulating `scale * ∇ log density` into
    /// `grad`.
    fn accumulate_grad(&self, params: &[f64], sample: &Self::Sample, scale: f64, grad: &mut [f64]) -> f64;
}

/// One generation's contribution to the objective.
#[derive(Debug, Clone)]
pub struct PolicyTerm<S> {
    pub sample: S,
    pub advantage: f64,
    /// Log density under the rollout policy.
    pub logp_old: f64,
    /// Log density under the frozen reference policy.
    pub logp_ref: f64,
}

/// Parameters of one policy version.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub params: Vec<f64>,
    pub version: u64,
}

impl PolicySnapshot {
    pub fn new(params: Vec<f64>) -> Self {
        PolicySnapshot { params, version: 0 }
    }
}

/// Objective value with optional gradient and batch diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub objective: f64,
    pub gradient: Option<Vec<f64>>,
    pub mean_kl: f64,
    /// Fraction of terms whose ratio lies outside the clip band.
    pub clip_fraction: f64,
}

fn check_shapes<S>(groups: &[Vec<PolicyTerm<S>>], k: usize) -> Result<(), GrpoError> {
    match groups.iter().position(|g| g.len() != k) {
        Some(group) => Err(GrpoError::ShapeMismatch { group, expected: k, got: groups[group].len() }),
        None => Ok(()),
    }
}

/// Evaluates the clipped, KL-regularized objective at `params`, averaged
/// over all `B*K` terms. `k` is the group size required by the active stage.
pub fn evaluate_objective<M: LogDensityModel>(
    model: &M,
    params: &[f64],
    groups: &[Vec<PolicyTerm<M::Sample>>],
    k: usize,
    cfg: &RunConfig,
    with_gradient: bool,
) -> Result<ObjectiveEval, GrpoError> {
    if params.len() != model.num_params() {
        return Err(GrpoError::ParamCount { expected: model.num_params(), got: params.len() });
    }
    check_shapes(groups, k)?;
    let n = groups.iter().map(Vec::len).sum::<usize>();
    let mut gradient = with_gradient.then(|| vec![0.0; params.len()]);
    if n == 0 {
        return Ok(ObjectiveEval { objective: 0.0, gradient, mean_kl: 0.0, clip_fraction: 0.0 });
    }
    let inv_n = 1.0 / n as f64;
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let (mut objective, mut kl_sum, mut clipped) = (0.0, 0.0, 0usize);

    for term in groups.iter().flatten() {
        let logp = model.log_density(params, &term.sample);
        let ratio = importance_ratio(logp, term.logp_old)?;
        let a = term.advantage;
        let surrogate = clipped_surrogate(ratio, a, cfg.clip_eps);
        let kl = kl_approx(logp, term.logp_ref);
        objective += surrogate - cfg.kl_beta * kl;
        kl_sum += kl;
        if ratio < lo || ratio > hi {
            clipped += 1;
        }
        if let Some(grad) = gradient.as_mut() {
            // the unclipped branch carries the gradient whenever min picks it
            let d_surrogate = if ratio * a <= ratio.clamp(lo, hi) * a { a * ratio } else { 0.0 };
            let rho = (term.logp_ref - logp).exp();
            let coeff = (d_surrogate - cfg.kl_beta * (1.0 - rho)) * inv_n;
            if coeff != 0.0 {
                model.accumulate_grad(params, &term.sample, coeff, grad);
            }
        }
    }
    Ok(ObjectiveEval {
        objective: objective * inv_n,
        gradient,
        mean_kl: kl_sum * inv_n,
        clip_fraction: clipped as f64 * inv_n,
    })
}

/// Objective value only.
pub fn batch_objective<M: LogDensityModel>(
    model: &M,
    params: &[f64],
    groups: &[Vec<PolicyTerm<M::Sample>>],
    k: usize,
    cfg: &RunConfig,
) -> Result<f64, GrpoError> {
    evaluate_objective(model, params, groups, k, cfg, false).map(|e| e.objective)
}

/// AdamW with decoupled weight decay and a linearly decaying learning rate,
/// used for gradient *ascent*.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    total_steps: usize,
    t: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64, total_steps: usize) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps: total_steps.max(1),
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    /// Learning rate of the next step.
    pub fn current_lr(&self) -> f64 {
        self.lr * (1.0 - self.t as f64 / self.total_steps as f64).max(0.0)
    }

    /// Moves `params` along `grad` (ascent).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let lr = self.current_lr();
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            *p -= lr * self.weight_decay * *p;
            *p += lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Result of one accepted update.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub snapshot: PolicySnapshot,
    pub eval: ObjectiveEval,
}

/// One ascent step on the batch objective starting from `snapshot`, which
/// is also the rollout policy of `groups`. Aborts without touching the
/// parameters if any gradient entry is non-finite.
pub fn policy_gradient_step<M: LogDensityModel>(
    model: &M,
    snapshot: &PolicySnapshot,
    groups: &[Vec<PolicyTerm<M::Sample>>],
    k: usize,
    cfg: &RunConfig,
    optimizer: &mut AdamW,
) -> Result<StepOutcome, GrpoError> {
    let eval = evaluate_objective(model, &snapshot.params, groups, k, cfg, true)?;
    let grad = eval.gradient.as_ref().expect("gradient requested");
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(GrpoError::NonFiniteGradient { index });
    }
    let mut params = snapshot.params.clone();
    optimizer.step(&mut params, grad);
    Ok(StepOutcome {
        snapshot: PolicySnapshot { params, version: snapshot.version + 1 },
        eval,
    })
}

/// Position in the two-stage exploration-to-stability schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSchedule {
    pub stage: Stage,
    /// Generations per sample.
    pub k: usize,
    pub prompt_pool_size: usize,
    pub std_penalty_on: bool,
    pub steps_remaining: usize,
    stabilize_k: usize,
    stabilize_steps: usize,
}

impl StageSchedule {
    /// Schedule at step 0. Starts directly in the stability stage when the
    /// exploration stage has no steps.
    pub fn start(cfg: &RunConfig) -> Self {
        let explore = StageSchedule {
            stage: Stage::Explore,
            k: cfg.k_stage1,
            prompt_pool_size: cfg.prompt_count,
            std_penalty_on: true,
            steps_remaining: cfg.stage1_steps,
            stabilize_k: cfg.k_stage2,
            stabilize_steps: cfg.stage2_steps,
        };
        if cfg.stage1_steps == 0 {
            explore.stabilize()
        } else {
            explore
        }
    }

    fn stabilize(self) -> Self {
        StageSchedule {
            stage: Stage::Stabilize,
            k: self.stabilize_k,
            prompt_pool_size: 1,
            std_penalty_on: false,
            steps_remaining: self.stabilize_steps,
            ..self
        }
    }

    pub fn finished(&self) -> bool {
        self.stage == Stage::Stabilize && self.steps_remaining == 0
    }
}

/// Consumes one step; exhausting the exploration stage switches to the
/// stability stage (K = k_stage2, single prompt, penalty off).
pub fn advance_schedule(sched: StageSchedule) -> StageSchedule {
    let next = StageSchedule { steps_remaining: sched.steps_remaining.saturating_sub(1), ..sched };
    if next.stage == Stage::Explore && next.steps_remaining == 0 {
        next.stabilize()
    } else {
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, LN_2};

    /// N(θ, 1) over a scalar action.
    struct UnitGaussian;

    impl LogDensityModel for UnitGaussian {
        type Sample = f64;

        fn num_params(&self) -> usize {
            1
        }

        fn log_density(&self, params: &[f64], x: &f64) -> f64 {
            -0.5 * (x - params[0]).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
        }

        fn accumulate_grad(&self, params: &[f64], x: &f64, scale: f64, grad: &mut [f64]) -> f64 {
            grad[0] += scale * (x - params[0]);
            self.log_density(params, x)
        }
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(importance_ratio(-1.3, -1.3).unwrap(), 1.0);
        assert!((importance_ratio(LN_2, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((importance_ratio(-4f64.ln(), 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(importance_ratio(800.0, 0.0), Err(GrpoError::Overflow(_))));
    }

    #[test]
    fn surrogate_examples() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert_eq!(clipped_surrogate(1.0, -0.7, 0.2), -0.7);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_approx(-2.0, -2.0), 0.0);
        assert!((kl_approx(0.0, 1.0) - (E - 2.0)).abs() < 1e-15);
        assert!((kl_approx(0.0, 0.5f64.ln()) - (0.5 + LN_2 - 1.0)).abs() < 1e-15);
        assert!((kl_approx(0.0, 0.5f64.ln()) - 0.193147).abs() < 1e-6);
    }

    fn term(x: f64, adv: f64, old: f64, rf: f64) -> PolicyTerm<f64> {
        PolicyTerm { sample: x, advantage: adv, logp_old: old, logp_ref: rf }
    }

    #[test]
    fn objective_examples() {
        let cfg = RunConfig::default();
        let m = UnitGaussian;
        let lp = |x: f64| m.log_density(&[0.0], &x);
        // everything at the reference, zero advantages
        let groups = vec![vec![term(0.3, 0.0, lp(0.3), lp(0.3)), term(-1.0, 0.0, lp(-1.0), lp(-1.0))]];
        assert_eq!(batch_objective(&m, &[0.0], &groups, 2, &cfg).unwrap(), 0.0);
        let groups = vec![vec![term(0.3, -1.0, lp(0.3), lp(0.3)), term(-1.0, 1.0, lp(-1.0), lp(-1.0))]];
        assert_eq!(batch_objective(&m, &[0.0], &groups, 2, &cfg).unwrap(), 0.0);
        // single term with ratio 1.5 and no KL contribution
        let cfg0 = RunConfig { kl_beta: 0.0, ..cfg.clone() };
        let groups = vec![vec![term(0.3, 1.0, lp(0.3) - 1.5f64.ln(), lp(0.3))]];
        assert!((batch_objective(&m, &[0.0], &groups, 1, &cfg0).unwrap() - 1.2).abs() < 1e-12);
        assert!(matches!(
            batch_objective(&m, &[0.0], &groups, 2, &cfg0),
            Err(GrpoError::ShapeMismatch { group: 0, expected: 2, got: 1 })
        ));
    }

    #[test]
    fn zero_advantage_leaves_params_unchanged() {
        let cfg = RunConfig { kl_beta: 0.0, weight_decay: 0.0, ..RunConfig::default() };
        let m = UnitGaussian;
        let lp = |x: f64| m.log_density(&[0.4], &x);
        let groups = vec![vec![term(0.1, 0.0, lp(0.1), lp(0.1)), term(1.1, 0.0, lp(1.1), lp(1.1))]];
        let snap = PolicySnapshot::new(vec![0.4]);
        let mut opt = AdamW::new(1, 0.1, 0.0, 10);
        let out = policy_gradient_step(&m, &snap, &groups, 2, &cfg, &mut opt).unwrap();
        assert_eq!(out.snapshot.params, vec![0.4]);
        assert_eq!(out.snapshot.version, 1);
    }

    #[test]
    fn ascent_moves_toward_optimum() {
        // reward -(x - 2)^2 for actions around θ = 0: the optimum is θ = 2
        let cfg = RunConfig { kl_beta: 0.0, weight_decay: 0.0, ..RunConfig::default() };
        let m = UnitGaussian;
        let actions = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
        let rewards: Vec<f64> = actions.iter().map(|x: &f64| -(x - 2.0).powi(2)).collect();
        let adv = crate::rewards::aggregate::group_advantages(&rewards, 1e-8).advantages;
        let lp = |x: f64| m.log_density(&[0.0], &x);
        let groups = vec![actions
            .iter()
            .zip(&adv)
            .map(|(&x, &a)| term(x, a, lp(x), lp(x)))
            .collect::<Vec<_>>()];
        let eval = evaluate_objective(&m, &[0.0], &groups, 6, &cfg, true).unwrap();
        // closed form: mean of a_i (x_i - θ)
        let expected: f64 = actions.iter().zip(&adv).map(|(x, a)| a * x).sum::<f64>() / 6.0;
        assert!((eval.gradient.as_ref().unwrap()[0] - expected).abs() < 1e-12);
        let mut opt = AdamW::new(1, 0.1, 0.0, 10);
        let out = policy_gradient_step(&m, &PolicySnapshot::new(vec![0.0]), &groups, 6, &cfg, &mut opt).unwrap();
        assert!(out.snapshot.params[0] > 0.0 && out.snapshot.params[0] < 2.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let cfg = RunConfig::default();
        let m = UnitGaussian;
        let groups = vec![vec![term(f64::NAN, 1.0, 0.0, 0.0)]];
        let mut opt = AdamW::new(1, 0.1, 0.0, 10);
        let res = policy_gradient_step(&m, &PolicySnapshot::new(vec![0.0]), &groups, 1, &cfg, &mut opt);
        assert!(res.is_err());
    }

    #[test]
    fn linear_decay() {
        let mut opt = AdamW::new(1, 1.0, 0.0, 4);
        let mut p = [0.0];
        let mut lrs = vec![];
        for _ in 0..4 {
            lrs.push(opt.current_lr());
            opt.step(&mut p, &[1.0]);
        }
        assert_eq!(lrs, vec![1.0, 0.75, 0.5, 0.25]);
    }

    #[test]
    fn schedule_transitions() {
        let cfg = RunConfig { stage1_steps: 2, stage2_steps: 3, ..RunConfig::default() };
        let s = StageSchedule::start(&cfg);
        assert_eq!((s.stage, s.k, s.prompt_pool_size, s.std_penalty_on), (Stage::Explore, 12, 5, true));
        let s = advance_schedule(s);
        assert_eq!((s.stage, s.steps_remaining), (Stage::Explore, 1));
        let s = advance_schedule(s);
        assert_eq!((s.stage, s.k, s.prompt_pool_size, s.std_penalty_on), (Stage::Stabilize, 6, 1, false));
        assert_eq!(s.steps_remaining, 3);
        let s = advance_schedule(s);
        assert_eq!((s.stage, s.steps_remaining), (Stage::Stabilize, 2));
        let s = advance_schedule(advance_schedule(s));
        assert!(s.finished());
        let direct = StageSchedule::start(&RunConfig { stage1_steps: 0, ..cfg });
        assert_eq!(direct.stage, Stage::Stabilize);
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(lt in -20.0f64..20.0, lr in -20.0f64..20.0) {
            prop_assert!(kl_approx(lt, lr) >= 0.0);
        }

        #[test]
        fn surrogate_never_exceeds_unclipped(r in 0.0f64..5.0, a in -5.0f64..5.0, eps in 0.01f64..0.99) {
            let s = clipped_surrogate(r, a, eps);
            prop_assert!(s <= r * a + 1e-15);
            if (1.0 - eps..=1.0 + eps).contains(&r) {
                prop_assert_eq!(s, r * a);
            }
        }
    }
}
