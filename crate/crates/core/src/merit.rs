//! The l1 merit function phi(x, tau) = tau f(x) + ||c(x)||_1, its local model
//! reduction, the merit-parameter update, the noise relaxation term, and the
//! classical and modified sufficient-decrease conditions with backtracking.

use nalgebra::DVector;

use crate::error::{Result, SqpError};

/// Merit parameter tau with its update constants.
#[derive(Debug, Clone, Copy)]
pub struct MeritState {
    pub tau: f64,
    pub tau_prev: f64,
    /// Slack fraction reserved for the constraint term in the trial formula.
    pub sigma: f64,
    /// Multiplicative cut applied when the trial value forces a decrease.
    pub eps_tau: f64,
}

impl MeritState {
    pub fn new(tau_init: f64, sigma: f64, eps_tau: f64) -> Result<Self> {
        if tau_init <= 0.0 {
            return Err(SqpError::InvalidConfig("tau_init must be positive".into()));
        }
        if !(0.0..1.0).contains(&sigma) || sigma == 0.0 {
            return Err(SqpError::InvalidConfig("sigma must lie in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&eps_tau) || eps_tau == 0.0 {
            return Err(SqpError::InvalidConfig("eps_tau must lie in (0,1)".into()));
        }
        Ok(Self {
            tau: tau_init,
            tau_prev: tau_init,
            sigma,
            eps_tau,
        })
    }
}

/// phi(x, tau) = tau f + ||c||_1.
pub fn merit_phi(f: f64, c: &DVector<f64>, tau: f64) -> f64 {
    tau * f + c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Reduction of the local merit model across the step: -tau g'd + ||c||_1.
pub fn model_reduction(tau: f64, g: &DVector<f64>, d: &DVector<f64>, c: &DVector<f64>) -> f64 {
    -tau * g.dot(d) + c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Merit-parameter update: the trial value is infinite when the curvature
/// term g'd + max(d'Wd, 0) is nonpositive, otherwise
/// (1 - sigma)||c||_1 / (g'd + max(d'Wd, 0)); tau keeps its previous value
/// when already no larger than the trial, else drops to (1-eps_tau) trial.
///
/// Returns the updated state and the trial value.
pub fn update_merit_parameter(
    state: MeritState,
    g_dot_d: f64,
    d_w_d: f64,
    c_l1: f64,
    round_off_scale: f64,
) -> (MeritState, f64) {
    let denom = g_dot_d + d_w_d.max(0.0);
    // In exact arithmetic a KKT-consistent direction at a feasible point gives
    // a nonpositive denominator; do not let round-off flip that case into a
    // zero trial value.
    let guard = 1e-13 * round_off_scale.max(1.0);
    let tau_trial = if denom <= guard {
        f64::INFINITY
    } else {
        (1.0 - state.sigma) * c_l1 / denom
    };
    let tau_new = if state.tau <= tau_trial {
        state.tau
    } else {
        (1.0 - state.eps_tau) * tau_trial
    };
    (
        MeritState {
            tau: tau_new,
            tau_prev: state.tau,
            ..state
        },
        tau_trial,
    )
}

/// Error budget for subsampled function and gradient estimates, with
/// surrogate constants for the quantities the bound depends on.
#[derive(Debug, Clone, Copy)]
pub struct RelaxationBudget {
    pub eps_f: f64,
    pub eps_g: f64,
    /// Surrogate for the product of the pseudoinverse and constraint bounds.
    pub kjc: f64,
    /// Surrogate for the reduced-Hessian floor.
    pub zeta: f64,
    /// Surrogate for the gradient bound.
    pub kg: f64,
    /// Surrogate for the curvature-matrix bound.
    pub kw: f64,
}

impl Default for RelaxationBudget {
    fn default() -> Self {
        Self {
            eps_f: 0.0,
            eps_g: 0.0,
            kjc: 1.0,
            zeta: 1.0,
            kg: 1.0,
            kw: 1.0,
        }
    }
}

impl RelaxationBudget {
    pub fn exact() -> Self {
        Self::default()
    }
}

/// Relaxation term added to the sufficient-decrease conditions:
/// tau (kjc + zeta^{-1} (kg + eps_g + kw kjc)) eps_g + 2 tau eps_f.
pub fn relaxation_eps_a(budget: &RelaxationBudget, tau: f64) -> f64 {
    tau * (budget.kjc + (budget.kg + budget.eps_g + budget.kw * budget.kjc) / budget.zeta)
        * budget.eps_g
        + 2.0 * tau * budget.eps_f
}

/// Classical sufficient decrease:
/// phi_trial <= phi_current - eta alpha delta_l + eps_a.
pub fn classical_condition(
    phi_trial: f64,
    phi_current: f64,
    alpha: f64,
    delta_l: f64,
    eta: f64,
    eps_a: f64,
) -> bool {
    phi_trial <= phi_current - eta * alpha * delta_l + eps_a
}

/// Right-hand side of the classical condition, for trace auditing.
pub fn classical_rhs(phi_current: f64, alpha: f64, delta_l: f64, eta: f64, eps_a: f64) -> f64 {
    phi_current - eta * alpha * delta_l + eps_a
}

/// Modified sufficient decrease with the second-order correction terms:
/// phi_trial <= phi_current - eta alpha delta_l
///              + alpha^2/2 (tau d'Hd + sum_i |d' (grad^2 c_i) d|) + eps_a,
/// where H is the objective-Hessian surrogate in use (exact or subsampled).
#[allow(clippy::too_many_arguments)]
pub fn modified_condition(
    phi_trial: f64,
    phi_current: f64,
    alpha: f64,
    delta_l: f64,
    eta: f64,
    tau: f64,
    d_h_d: f64,
    sum_abs_d_ci_d: f64,
    eps_a: f64,
) -> bool {
    phi_trial
        <= modified_rhs(
            phi_current,
            alpha,
            delta_l,
            eta,
            tau,
            d_h_d,
            sum_abs_d_ci_d,
            eps_a,
        )
}

#[allow(clippy::too_many_arguments)]
pub fn modified_rhs(
    phi_current: f64,
    alpha: f64,
    delta_l: f64,
    eta: f64,
    tau: f64,
    d_h_d: f64,
    sum_abs_d_ci_d: f64,
    eps_a: f64,
) -> f64 {
    phi_current - eta * alpha * delta_l
        + 0.5 * alpha * alpha * tau * d_h_d
        + 0.5 * alpha * alpha * sum_abs_d_ci_d
        + eps_a
}

/// Result of a backtracking search.
#[derive(Debug, Clone, Copy)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub backtracks: usize,
    /// Two sides of the accepted inequality, for trace auditing.
    pub lhs: f64,
    pub rhs: f64,
}

pub const MAX_BACKTRACKS_DEFAULT: usize = 60;

/// Backtrack alpha over {alpha0, nu alpha0, nu^2 alpha0, ...} until the
/// condition evaluator reports lhs <= rhs. The evaluator is called once per
/// trial step size.
pub fn backtrack(
    mut condition: impl FnMut(f64) -> (f64, f64),
    nu_alpha: f64,
    alpha0: f64,
    max_backtracks: usize,
) -> Result<LineSearchResult> {
    if !(nu_alpha > 0.0 && nu_alpha < 1.0) {
        return Err(SqpError::InvalidConfig("nu_alpha must lie in (0,1)".into()));
    }
    let mut alpha = alpha0;
    for backtracks in 0..=max_backtracks {
        let (lhs, rhs) = condition(alpha);
        if lhs <= rhs {
            return Ok(LineSearchResult {
                alpha,
                backtracks,
                lhs,
                rhs,
            });
        }
        alpha *= nu_alpha;
    }
    Err(SqpError::LineSearchFailure {
        backtracks: max_backtracks,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phi_basics() {
        let c0 = DVector::zeros(1);
        assert_eq!(merit_phi(3.5, &c0, 1.0), 3.5);

        // merit at the start point on the circle, objective weight 0.1
        let sqrt2 = std::f64::consts::SQRT_2;
        let f = 5.0 - 2.0 * sqrt2;
        let phi = merit_phi(f, &c0, 0.1);
        assert!((phi - 0.1 * f).abs() < 1e-15);
        assert!((phi - 0.217_157).abs() < 1e-6);

        let c = DVector::from_vec(vec![1.0, -2.0]);
        for tau in [0.1, 1.0, 7.0] {
            assert_eq!(merit_phi(0.0, &c, tau), 3.0);
        }
    }

    #[test]
    fn model_reduction_cases() {
        let c = DVector::from_vec(vec![0.5, -1.5]);
        let g = DVector::from_vec(vec![1.0, 0.0]);
        let zero = DVector::zeros(2);
        assert_eq!(model_reduction(0.7, &g, &zero, &c), 2.0);

        let d = DVector::from_vec(vec![-2.0, 0.0]);
        let feasible = DVector::zeros(2);
        assert_eq!(model_reduction(0.5, &g, &d, &feasible), 1.0);
    }

    fn state() -> MeritState {
        MeritState::new(1.0, 0.5, 0.5).unwrap()
    }

    #[test]
    fn tau_trial_infinite_keeps_tau() {
        let (next, trial) = update_merit_parameter(state(), -1.0, -2.0, 3.0, 1.0);
        assert!(trial.is_infinite());
        assert_eq!(next.tau, 1.0);
    }

    #[test]
    fn tau_update_walkthrough() {
        // g'd = 1, d'Wd = 1, ||c||_1 = 2, sigma = 0.5, tau_prev = 1, eps = 0.5
        let (next, trial) = update_merit_parameter(state(), 1.0, 1.0, 2.0, 1.0);
        assert!((trial - 0.5).abs() < 1e-15);
        assert!((next.tau - 0.25).abs() < 1e-15);
        assert!(next.tau <= trial);
    }

    #[test]
    fn tau_keep_branch() {
        let mut s = state();
        s.tau = 0.1;
        let (next, trial) = update_merit_parameter(s, 1.0, 1.0, 2.0, 1.0);
        assert!((trial - 0.5).abs() < 1e-15);
        assert_eq!(next.tau, 0.1);
    }

    #[test]
    fn relaxation_values() {
        assert_eq!(relaxation_eps_a(&RelaxationBudget::exact(), 1.0), 0.0);

        let half_f = RelaxationBudget {
            eps_f: 0.5,
            ..RelaxationBudget::default()
        };
        assert!((relaxation_eps_a(&half_f, 1.0) - 1.0).abs() < 1e-15);

        let g_noise = RelaxationBudget {
            eps_g: 0.1,
            ..RelaxationBudget::default()
        };
        // 1*(1 + (1 + 0.1 + 1))*0.1 = 0.31
        assert!((relaxation_eps_a(&g_noise, 1.0) - 0.31).abs() < 1e-15);
    }

    #[test]
    fn classical_condition_cases() {
        // zero reduction, zero relaxation: plain monotonicity
        assert!(classical_condition(0.9, 1.0, 1.0, 0.0, 1e-4, 0.0));
        assert!(!classical_condition(1.1, 1.0, 1.0, 0.0, 1e-4, 0.0));
        // arithmetic example
        assert!(classical_condition(0.9, 1.0, 1.0, 1.0, 1e-4, 0.0));
    }

    #[test]
    fn modified_condition_arithmetic() {
        // rhs = 1 - 1e-5 + 0.1 + 0.025 = 1.12499
        let rhs = modified_rhs(1.0, 1.0, 0.1, 1e-4, 1.0, 0.2, 0.05, 0.0);
        assert!((rhs - 1.12499).abs() < 1e-10);
        assert!(modified_condition(
            1.05, 1.0, 1.0, 0.1, 1e-4, 1.0, 0.2, 0.05, 0.0
        ));
    }

    #[test]
    fn backtracking_schedule() {
        // accepted immediately
        let res = backtrack(|a| (0.0, a), 0.5, 1.0, 60).unwrap();
        assert_eq!(res.alpha, 1.0);
        assert_eq!(res.backtracks, 0);

        // first acceptance at alpha = 0.25
        let res = backtrack(
            |a| if a <= 0.25 { (0.0, 1.0) } else { (2.0, 1.0) },
            0.5,
            1.0,
            60,
        )
        .unwrap();
        assert_eq!(res.backtracks, 2);
        assert!((res.alpha - 0.25).abs() < 1e-15);

        // exhaustion
        let err = backtrack(|_| (1.0, 0.0), 0.5, 1.0, 60).unwrap_err();
        match err {
            SqpError::LineSearchFailure { backtracks, alpha } => {
                assert_eq!(backtracks, 60);
                assert!(alpha < 1e-18);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        /// With zero second-order terms and zero relaxation the modified
        /// condition is the classical condition, outcome for outcome.
        #[test]
        fn modified_degenerates_to_classical(
            phi_trial in -10.0f64..10.0,
            phi_current in -10.0f64..10.0,
            alpha in 1e-6f64..1.0,
            delta_l in 0.0f64..10.0,
            eta in 1e-6f64..0.99,
        ) {
            let classical = classical_condition(phi_trial, phi_current, alpha, delta_l, eta, 0.0);
            let modified = modified_condition(phi_trial, phi_current, alpha, delta_l, eta, 1.0, 0.0, 0.0, 0.0);
            prop_assert_eq!(classical, modified);
        }

        /// tau never increases and stays positive under arbitrary updates.
        #[test]
        fn tau_is_positive_nonincreasing(
            g_dot_d in -5.0f64..5.0,
            d_w_d in -5.0f64..5.0,
            c_l1 in 0.0f64..5.0,
            steps in 1usize..30,
        ) {
            let mut s = state();
            for k in 0..steps {
                let prev = s.tau;
                let jitter = 1.0 + k as f64 * 0.37;
                let (next, trial) = update_merit_parameter(s, g_dot_d * jitter, d_w_d, c_l1, 1.0);
                prop_assert!(next.tau > 0.0 || (c_l1 == 0.0 && next.tau == 0.0));
                prop_assert!(next.tau <= prev);
                prop_assert!(next.tau <= trial);
                s = next;
            }
        }
    }
}
