//! Inexact Newton driver with adaptive forcing terms.
//!
//! Each iteration assembles the residual and Jacobian, decouples the block
//! system, solves it with preconditioned GMRES to the forcing tolerance
//! eta_l, and applies a damped update. Convergence requires both the 2-norm
//! and the max-norm of the scaled residual below the tolerance.

use crate::assembly::Assembler;
use crate::linear::{
    decouple_in_place, gmres, BlockMatrix, CprConfig, CprFpf, GmresConfig, IdentityPrecond,
    IluPrecond, Partitioning,
};
use crate::linear::vecops;
use crate::scalar::{lit, Scalar};
use crate::state::{Damping, State};
use crate::wells::WellRuntime;

/// Forcing-term rule for the linear tolerance eta_l.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForcingRule<S> {
    Constant(S),
    /// ||b(x_l) - r_(l-1)|| / ||b(x_(l-1))||
    EW1,
    /// | ||b(x_l)|| - ||r_(l-1)|| | / ||b(x_(l-1))||
    EW2,
    /// gamma * (||b(x_l)|| / ||b(x_(l-1))||)^beta
    EW3 { gamma: S, beta: S },
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig<S> {
    /// Tolerance on the scaled residual norms.
    pub epsilon: S,
    pub max_iters: usize,
    pub forcing: ForcingRule<S>,
    pub eta_min: S,
    pub eta_max: S,
    /// eta_1 before any history exists.
    pub eta_first: S,
    pub damping: Damping<S>,
    /// Residual growth factor that declares divergence.
    pub divergence_factor: S,
}

impl<S: Scalar> Default for NewtonConfig<S> {
    fn default() -> Self {
        NewtonConfig {
            epsilon: lit(1e-4),
            max_iters: 15,
            forcing: ForcingRule::EW3 { gamma: lit(0.9), beta: lit(2.0) },
            eta_min: lit(1e-4),
            eta_max: lit(0.9),
            eta_first: lit(0.1),
            damping: Damping::default(),
            divergence_factor: lit(1e4),
        }
    }
}

impl<S: Scalar> NewtonConfig<S> {
    /// Install a forcing rule; a constant below the current floor widens the
    /// eta bounds so the rule takes effect as written.
    pub fn with_forcing(mut self, rule: ForcingRule<S>) -> Self {
        if let ForcingRule::Constant(v) = rule {
            self.eta_min = self.eta_min.min(v);
        }
        self.forcing = rule;
        self
    }
}

/// Preconditioner used inside GMRES.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondChoice {
    CprFpf,
    Ilu0,
    None,
}

#[derive(Clone, Debug)]
pub struct LinearConfig<S> {
    pub restart: usize,
    pub max_iters: usize,
    pub precond: PrecondChoice,
    pub cpr: CprConfig<S>,
}

impl<S: Scalar> Default for LinearConfig<S> {
    fn default() -> Self {
        LinearConfig {
            restart: 30,
            max_iters: 200,
            precond: PrecondChoice::CprFpf,
            cpr: CprConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewtonOutcome {
    Converged,
    MaxIters,
    Diverged,
    /// Linear solve failed (non-convergence or a singular diagonal block).
    LinearFailure,
}

#[derive(Clone, Debug)]
pub struct NewtonReport<S> {
    pub outcome: NewtonOutcome,
    pub iterations: usize,
    /// 2-norms of the scaled residual, one entry per assembled residual
    /// (length iterations + 1 on a clean run).
    pub residual_norms: Vec<S>,
    pub residual_inf_norms: Vec<S>,
    /// Forcing values actually used, one per linear solve.
    pub etas: Vec<S>,
    /// GMRES iterations per Newton step.
    pub linear_iters: Vec<usize>,
    pub failure_detail: Option<String>,
}

impl<S: Scalar> NewtonReport<S> {
    pub fn linear_total(&self) -> usize {
        self.linear_iters.iter().sum()
    }
    pub fn converged(&self) -> bool {
        self.outcome == NewtonOutcome::Converged
    }
}

/// Inputs to [`forcing_eta`]; the difference norm is only needed by EW1.
#[derive(Clone, Copy, Debug)]
pub struct ForcingInputs<S> {
    pub norm_b: S,
    pub norm_b_prev: S,
    pub norm_lin_residual_prev: S,
    pub norm_b_minus_lin_residual_prev: S,
}

/// Evaluate the forcing rule and clamp into [eta_min, eta_max]. A vanishing
/// previous norm returns eta_min.
pub fn forcing_eta<S: Scalar>(rule: ForcingRule<S>, inp: &ForcingInputs<S>, eta_min: S, eta_max: S) -> S {
    let eta = match rule {
        ForcingRule::Constant(v) => v,
        ForcingRule::EW1 => {
            if inp.norm_b_prev == S::zero() {
                return eta_min;
            }
            inp.norm_b_minus_lin_residual_prev / inp.norm_b_prev
        }
        ForcingRule::EW2 => {
            if inp.norm_b_prev == S::zero() {
                return eta_min;
            }
            // the printed form can be negative; take the absolute value
            (inp.norm_b - inp.norm_lin_residual_prev).abs() / inp.norm_b_prev
        }
        ForcingRule::EW3 { gamma, beta } => {
            if inp.norm_b_prev == S::zero() {
                return eta_min;
            }
            gamma * (inp.norm_b / inp.norm_b_prev).powf(beta)
        }
    };
    eta.max(eta_min).min(eta_max)
}

/// Observer over each decoupled linear system before its solve: arguments
/// are the Newton iteration number, the matrix and the right-hand side.
pub type SystemObserver<'o, S> = &'o mut dyn FnMut(usize, &BlockMatrix<S>, &[S]);

/// Solve one backward-Euler step F(x) = 0 starting from `initial`.
///
/// `rt` carries the active well constraints and lagged wellbore densities;
/// the densities are refreshed after every accepted Newton update.
/// `on_system` observes every decoupled (A, b) pair before the linear solve.
#[allow(clippy::too_many_arguments)]
pub fn solve_timestep<S: Scalar>(
    asm: &Assembler<'_, S>,
    old: &State<S>,
    initial: State<S>,
    dt: S,
    rt: &mut [WellRuntime<S>],
    cfg: &NewtonConfig<S>,
    lin: &LinearConfig<S>,
    part: &Partitioning,
    a: &mut BlockMatrix<S>,
    mut on_system: Option<SystemObserver<'_, S>>,
) -> (State<S>, NewtonReport<S>) {
    let n = a.n_unknowns();
    let mut state = initial;
    let mut report = NewtonReport {
        outcome: NewtonOutcome::MaxIters,
        iterations: 0,
        residual_norms: Vec::new(),
        residual_inf_norms: Vec::new(),
        etas: Vec::new(),
        linear_iters: Vec::new(),
        failure_detail: None,
    };

    let mut r = vec![S::zero(); n];
    asm.assemble(&state, old, dt, rt, part, a, &mut r);
    let mut norm_b = vecops::norm2(&r);
    let mut norm_inf = vecops::norm_inf(&r);
    report.residual_norms.push(norm_b);
    report.residual_inf_norms.push(norm_inf);
    let norm0 = norm_b;
    if !norm_b.is_finite() {
        report.outcome = NewtonOutcome::Diverged;
        report.failure_detail = Some("non-finite residual at the initial iterate".into());
        return (state, report);
    }
    if norm_b < cfg.epsilon && norm_inf < cfg.epsilon {
        report.outcome = NewtonOutcome::Converged;
        return (state, report);
    }

    let mut prev_lin_residual: Option<Vec<S>> = None;
    let mut prev_norm_b = norm_b;

    for l in 1..=cfg.max_iters {
        // forcing tolerance
        let eta = if l == 1 {
            match cfg.forcing {
                ForcingRule::Constant(v) => v.max(cfg.eta_min).min(cfg.eta_max),
                _ => cfg.eta_first.max(cfg.eta_min).min(cfg.eta_max),
            }
        } else {
            let (norm_lin_prev, diff_norm) = match &prev_lin_residual {
                Some(rv) => {
                    let mut diff = vec![S::zero(); n];
                    vecops::sub(&r, rv, &mut diff);
                    (vecops::norm2(rv), vecops::norm2(&diff))
                }
                None => (S::zero(), S::zero()),
            };
            forcing_eta(
                cfg.forcing,
                &ForcingInputs {
                    norm_b,
                    norm_b_prev: prev_norm_b,
                    norm_lin_residual_prev: norm_lin_prev,
                    norm_b_minus_lin_residual_prev: diff_norm,
                },
                cfg.eta_min,
                cfg.eta_max,
            )
        };
        report.etas.push(eta);

        // b = -R, then decouple in place
        let mut b = vec![S::zero(); n];
        for (bi, ri) in b.iter_mut().zip(&r) {
            *bi = -*ri;
        }
        if let Err(e) = decouple_in_place(a, &mut b) {
            report.outcome = NewtonOutcome::LinearFailure;
            report.failure_detail = Some(e.to_string());
            return (state, report);
        }
        if let Some(f) = on_system.as_deref_mut() {
            f(l, a, &b);
        }

        let gcfg = GmresConfig { restart: lin.restart, max_iters: lin.max_iters, rtol: eta };
        let mut y = vec![S::zero(); n];
        let out = match lin.precond {
            PrecondChoice::CprFpf => match CprFpf::setup(a, part, lin.cpr.clone()) {
                Ok(m) => gmres(&(&*a, part), &m, &b, &gcfg, &mut y),
                Err(e) => {
                    report.outcome = NewtonOutcome::LinearFailure;
                    report.failure_detail = Some(e.to_string());
                    return (state, report);
                }
            },
            PrecondChoice::Ilu0 => match IluPrecond::setup(a, part) {
                Ok(m) => gmres(&(&*a, part), &m, &b, &gcfg, &mut y),
                Err(e) => {
                    report.outcome = NewtonOutcome::LinearFailure;
                    report.failure_detail = Some(e.to_string());
                    return (state, report);
                }
            },
            PrecondChoice::None => gmres(&(&*a, part), &IdentityPrecond, &b, &gcfg, &mut y),
        };
        report.linear_iters.push(out.iterations);
        if !out.converged {
            report.outcome = NewtonOutcome::LinearFailure;
            report.failure_detail =
                Some(format!("GMRES stalled at relative residual {:.3e}", out.rel_residual));
            return (state, report);
        }
        // the inexact condition ||A y - b|| <= eta ||b|| holds by
        // construction of the right-preconditioned solver
        debug_assert!(out.rel_residual <= eta * (S::one() + lit(1e-12)));

        // linear residual of this solve, for the EW1/EW2 history
        let mut ay = vec![S::zero(); n];
        a.spmv(&y, &mut ay, part);
        let mut lin_res = vec![S::zero(); n];
        vecops::sub(&b, &ay, &mut lin_res);
        prev_lin_residual = Some(lin_res);
        prev_norm_b = norm_b;

        state.apply_update(&y, &cfg.damping);
        let mix = asm.wellbore_mix_density(&state, rt);
        for (r, m) in rt.iter_mut().zip(mix) {
            r.mix_density = m;
        }
        report.iterations = l;

        asm.assemble(&state, old, dt, rt, part, a, &mut r);
        norm_b = vecops::norm2(&r);
        norm_inf = vecops::norm_inf(&r);
        report.residual_norms.push(norm_b);
        report.residual_inf_norms.push(norm_inf);

        if !norm_b.is_finite() || norm_b > cfg.divergence_factor * norm0 {
            report.outcome = NewtonOutcome::Diverged;
            return (state, report);
        }
        if norm_b < cfg.epsilon && norm_inf < cfg.epsilon {
            report.outcome = NewtonOutcome::Converged;
            return (state, report);
        }
    }
    report.outcome = NewtonOutcome::MaxIters;
    (state, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ew3_arithmetic_and_clamping() {
        let bounds = (1e-4, 0.9);
        let inp = |b: f64, bp: f64| ForcingInputs {
            norm_b: b,
            norm_b_prev: bp,
            norm_lin_residual_prev: 0.0,
            norm_b_minus_lin_residual_prev: 0.0,
        };
        let eta = forcing_eta(ForcingRule::EW3 { gamma: 1.0, beta: 2.0 }, &inp(0.5, 1.0), bounds.0, bounds.1);
        assert!((eta - 0.25).abs() < 1e-15);
        let eta = forcing_eta(ForcingRule::EW3 { gamma: 0.9, beta: 2.0 }, &inp(1.0, 1.0), bounds.0, bounds.1);
        assert_eq!(eta, 0.9);
    }

    #[test]
    fn ew2_uses_absolute_value_and_floor() {
        // ||b_l|| = 10, ||r_{l-1}|| = 9, ||b_{l-1}|| = 100 -> 0.01
        let inp = ForcingInputs::<f64> {
            norm_b: 10.0,
            norm_b_prev: 100.0,
            norm_lin_residual_prev: 9.0,
            norm_b_minus_lin_residual_prev: 0.0,
        };
        let eta = forcing_eta(ForcingRule::EW2, &inp, 1e-4, 0.9);
        assert!((eta - 0.01).abs() < 1e-15);
        // negative printed value: |9 - 10| / 100
        let inp2 = ForcingInputs { norm_b: 9.0, norm_lin_residual_prev: 10.0, ..inp };
        let eta2 = forcing_eta(ForcingRule::EW2, &inp2, 1e-4, 0.9);
        assert!((eta2 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_previous_norm_returns_floor() {
        let inp = ForcingInputs {
            norm_b: 1.0,
            norm_b_prev: 0.0,
            norm_lin_residual_prev: 0.0,
            norm_b_minus_lin_residual_prev: 0.0,
        };
        for rule in [ForcingRule::EW1, ForcingRule::EW2, ForcingRule::EW3 { gamma: 0.9, beta: 2.0 }] {
            assert_eq!(forcing_eta(rule, &inp, 1e-4, 0.9), 1e-4);
        }
    }

    #[test]
    fn eta_always_within_bounds() {
        let mut seed = 9u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64)
        };
        for _ in 0..500 {
            let inp = ForcingInputs {
                norm_b: next() * 100.0,
                norm_b_prev: next() * 100.0,
                norm_lin_residual_prev: next() * 100.0,
                norm_b_minus_lin_residual_prev: next() * 100.0,
            };
            for rule in [
                ForcingRule::Constant(next()),
                ForcingRule::EW1,
                ForcingRule::EW2,
                ForcingRule::EW3 { gamma: 0.9, beta: 2.0 },
            ] {
                let eta = forcing_eta(rule, &inp, 1e-4, 0.9);
                assert!((1e-4..=0.9).contains(&eta), "eta {eta} out of bounds for {rule:?}");
            }
        }
    }
}
