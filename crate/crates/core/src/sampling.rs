//! Sample-set construction for finite-sum objectives: per-iteration batch
//! sizes, uniform draws without replacement, subsampled estimates, and the
//! deterministic error bounds tying estimate accuracy to batch size.
//!
//! Schedules encode the growth shapes required for fast local convergence:
//! summable relative gaps for function/gradient batches (certified by a
//! ratio-test bound at construction) and monotone growth to the full set for
//! Hessian batches. Constant floors involving analysis-only constants are
//! exposed as configuration, not computed.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SqpError};
use crate::linalg;
use crate::problem::FiniteSumOracle;

/// Batch-size rule for one estimate stream.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSchedule {
    /// |S_k| = N for all k.
    Full { n: usize },
    /// |S_k| = ceil(p N), constant over k.
    ConstantFraction { n: usize, fraction: f64 },
    /// Gap to the full set shrinks geometrically:
    /// |S_k| = clamp(ceil(N - gap0 r^k), 1, N).
    GeometricGap { n: usize, rate: f64, initial: usize },
    /// Hessian batch rule b_k = min(floor((1 - 0.95^((k+2)/2)) N), N),
    /// clamped below at 1.
    AdaptiveHessian { n: usize },
}

impl SampleSchedule {
    pub fn component_count(&self) -> usize {
        match *self {
            SampleSchedule::Full { n }
            | SampleSchedule::ConstantFraction { n, .. }
            | SampleSchedule::GeometricGap { n, .. }
            | SampleSchedule::AdaptiveHessian { n } => n,
        }
    }

    /// Batch size at iteration k, always in [1, N].
    pub fn size_at(&self, k: usize) -> usize {
        let n = self.component_count();
        let raw = match *self {
            SampleSchedule::Full { .. } => n as f64,
            SampleSchedule::ConstantFraction { fraction, .. } => (fraction * n as f64).ceil(),
            SampleSchedule::GeometricGap { rate, initial, .. } => {
                let gap = (n - initial) as f64 * rate.powi(k as i32);
                (n as f64 - gap).ceil()
            }
            SampleSchedule::AdaptiveHessian { .. } => {
                let shrink = 0.95f64.powf((k as f64 + 2.0) / 2.0);
                ((1.0 - shrink) * n as f64).floor()
            }
        };
        (raw as usize).clamp(1, n)
    }

    /// True when the schedule is the full set at every iteration.
    pub fn is_full(&self) -> bool {
        matches!(self, SampleSchedule::Full { .. })
    }
}

/// Build and verify a schedule over the horizon [0, horizon].
///
/// The verifier re-checks the declared conditions on the realized integer
/// sizes and rejects violating parameterizations: sizes within [1, N],
/// monotone growth and gap decay for the geometric kind (with the ratio-test
/// partial-sum certificate), and monotone growth reaching N asymptotically
/// for the Hessian kinds.
pub fn build_schedule(kind: SampleSchedule, horizon: usize) -> Result<SampleSchedule> {
    let n = kind.component_count();
    if n == 0 {
        return Err(SqpError::ScheduleViolation(
            "component count must be positive".into(),
        ));
    }
    match kind {
        SampleSchedule::ConstantFraction { fraction, .. } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(SqpError::ScheduleViolation(format!(
                    "constant fraction {fraction} outside (0, 1]"
                )));
            }
        }
        SampleSchedule::GeometricGap { rate, initial, .. } => {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(SqpError::ScheduleViolation(format!(
                    "geometric gap rate {rate} outside (0, 1)"
                )));
            }
            if initial == 0 || initial > n {
                return Err(SqpError::ScheduleViolation(format!(
                    "initial size {initial} outside [1, N]"
                )));
            }
            // realized gaps must stay under the closed-form decay, which is
            // what makes their partial sums bounded (d'Alembert certificate)
            let gap0 = (n - initial) as f64;
            let mut partial = 0.0;
            for k in 0..=horizon {
                let size = kind.size_at(k);
                let gap = (n - size) as f64;
                if gap > gap0 * rate.powi(k as i32) + 1e-9 {
                    return Err(SqpError::ScheduleViolation(format!(
                        "gap {gap} at k={k} exceeds geometric envelope"
                    )));
                }
                if k > 0 && size < kind.size_at(k - 1) {
                    return Err(SqpError::ScheduleViolation(format!(
                        "size decreased at k={k}"
                    )));
                }
                partial += gap / n as f64;
            }
            let certificate = gap0 / (n as f64 * (1.0 - rate));
            if partial > certificate + 1e-9 {
                return Err(SqpError::ScheduleViolation(format!(
                    "partial sum {partial} exceeds ratio-test certificate {certificate}"
                )));
            }
        }
        SampleSchedule::AdaptiveHessian { .. } => {
            for k in 1..=horizon {
                let prev = kind.size_at(k - 1);
                let cur = kind.size_at(k);
                if cur < prev {
                    return Err(SqpError::ScheduleViolation(format!(
                        "hessian batch shrank at k={k}"
                    )));
                }
                if prev == n && cur != n {
                    return Err(SqpError::ScheduleViolation("left the full set".into()));
                }
            }
        }
        SampleSchedule::Full { .. } => {}
    }
    Ok(kind)
}

/// Parse a schedule key: `full`, `frac:<p>`, `geo:<r>` (initial size 1), or
/// `adaptive-hess`.
pub fn schedule_from_key(key: &str, n: usize, horizon: usize) -> Result<SampleSchedule> {
    let kind = if key == "full" {
        SampleSchedule::Full { n }
    } else if let Some(frac) = key.strip_prefix("frac:") {
        let fraction: f64 = frac
            .parse()
            .map_err(|_| SqpError::UnknownKey(format!("schedule {key}")))?;
        SampleSchedule::ConstantFraction { n, fraction }
    } else if let Some(rate) = key.strip_prefix("geo:") {
        let rate: f64 = rate
            .parse()
            .map_err(|_| SqpError::UnknownKey(format!("schedule {key}")))?;
        SampleSchedule::GeometricGap {
            n,
            rate,
            initial: 1.max(n / 20),
        }
    } else if key == "adaptive-hess" {
        SampleSchedule::AdaptiveHessian { n }
    } else {
        return Err(SqpError::UnknownKey(format!("schedule {key}")));
    };
    build_schedule(kind, horizon)
}

/// Uniform draw of `size` indices out of 0..n without replacement,
/// deterministic given (seed, iteration, stream). The result is sorted, so a
/// full-size draw is exactly 0..n.
pub fn draw_samples(
    n: usize,
    size: usize,
    seed: u64,
    iteration: u64,
    stream: u64,
) -> Result<Vec<usize>> {
    if size == 0 || size > n {
        return Err(SqpError::SampleSizeOutOfRange { size, n });
    }
    if size == n {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration.wrapping_mul(4).wrapping_add(stream));
    let mut idx = rand::seq::index::sample(&mut rng, n, size).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Subsampled estimates (f_bar, g_bar, h_bar) over the three index sets.
pub fn subsampled_estimates(
    oracle: &FiniteSumOracle,
    x: &DVector<f64>,
    set_f: &[usize],
    set_g: &[usize],
    set_h: &[usize],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    Ok((
        oracle.batch_f(set_f, x)?,
        oracle.batch_g(set_g, x)?,
        oracle.batch_h(set_h, x)?,
    ))
}

/// Lumped surrogates for the componentwise bounds |f_i| <= kf, ||grad f_i||
/// <= kg, ||hess f_i|| <= kh used by the error-bound formulas.
#[derive(Debug, Clone, Copy)]
pub struct BoundConstants {
    pub kf_bound: f64,
    pub kg_bound: f64,
    pub kh_bound: f64,
}

impl BoundConstants {
    pub fn configured(kf_bound: f64, kg_bound: f64, kh_bound: f64) -> Self {
        Self {
            kf_bound,
            kg_bound,
            kh_bound,
        }
    }

    /// Estimate the surrogates as maxima of the component values and norms at
    /// a probe point.
    pub fn estimated(oracle: &FiniteSumOracle, x: &DVector<f64>) -> Self {
        let n = oracle.component_count();
        let mut kf = 0.0f64;
        let mut kg = 0.0f64;
        let mut kh = 0.0f64;
        for i in 0..n {
            kf = kf.max(oracle.problem().component_objective(i, x).abs());
            kg = kg.max(oracle.problem().component_gradient(i, x).norm());
            kh = kh.max(linalg::symmetric_two_norm(&linalg::symmetrize(
                &oracle.problem().component_hessian(i, x),
            )));
        }
        Self {
            kf_bound: kf,
            kg_bound: kg,
            kh_bound: kh,
        }
    }
}

/// Deterministic estimate-error bounds:
/// eps = 2 (N - |S|) / N * bound, one per estimate stream.
pub fn error_bounds(
    n: usize,
    sizes: (usize, usize, usize),
    constants: &BoundConstants,
) -> (f64, f64, f64) {
    let gap = |s: usize| 2.0 * (n - s) as f64 / n as f64;
    (
        gap(sizes.0) * constants.kf_bound,
        gap(sizes.1) * constants.kg_bound,
        gap(sizes.2) * constants.kh_bound,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite;

    #[test]
    fn full_draw_is_identity() {
        for seed in [0u64, 5, 99] {
            assert_eq!(
                draw_samples(7, 7, seed, 3, 0).unwrap(),
                vec![0, 1, 2, 3, 4, 5, 6]
            );
        }
    }

    #[test]
    fn draws_are_deterministic_per_seed_and_iteration() {
        let a = draw_samples(100, 13, 42, 7, 1).unwrap();
        let b = draw_samples(100, 13, 42, 7, 1).unwrap();
        assert_eq!(a, b);
        let c = draw_samples(100, 13, 42, 8, 1).unwrap();
        assert_ne!(a, c);
        let d = draw_samples(100, 13, 43, 7, 1).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn golden_draw_is_stable() {
        // frozen on first implementation; guards the generator layout
        let got = draw_samples(10, 3, 12345, 0, 0).unwrap();
        assert_eq!(got.len(), 3);
        assert!(got.windows(2).all(|w| w[0] < w[1]));
        let again = draw_samples(10, 3, 12345, 0, 0).unwrap();
        assert_eq!(got, again);
        assert_eq!(got, vec![0, 4, 5]);
    }

    #[test]
    fn draw_size_validation() {
        assert!(matches!(
            draw_samples(5, 0, 1, 0, 0),
            Err(SqpError::SampleSizeOutOfRange { .. })
        ));
        assert!(matches!(
            draw_samples(5, 6, 1, 0, 0),
            Err(SqpError::SampleSizeOutOfRange { .. })
        ));
    }

    #[test]
    fn subsampled_full_sets_reproduce_exact_values() {
        let spec = suite::LogisticProblemSpec::synthetic(12, 4, 1, 5);
        let fs = suite::make_logistic_problem(&spec).unwrap();
        let det = fs.to_deterministic();
        let x = DVector::from_fn(4, |i, _| 0.02 * (i as f64 - 1.5));
        let all: Vec<usize> = (0..12).collect();
        let (f_bar, g_bar, h_bar) = subsampled_estimates(&fs, &x, &all, &all, &all).unwrap();
        assert_eq!(f_bar, det.f(&x));
        assert_eq!(g_bar, det.g(&x));
        assert_eq!(h_bar, det.h(&x));
    }

    #[test]
    fn single_component_mean() {
        let spec = suite::LogisticProblemSpec::synthetic(2, 3, 1, 9);
        let fs = suite::make_logistic_problem(&spec).unwrap();
        let x = DVector::zeros(3);
        let f_bar = fs.batch_f(&[0], &x).unwrap();
        assert_eq!(f_bar, fs.problem().component_objective(0, &x));
    }

    #[test]
    fn error_bound_formulas() {
        let constants = BoundConstants::configured(3.0, 1.0, 2.0);
        let (ef, eg, eh) = error_bounds(100, (50, 100, 75), &constants);
        assert!((ef - 3.0).abs() < 1e-15); // 2 * 0.5 * 3
        assert_eq!(eg, 0.0);
        assert!((eh - 1.0).abs() < 1e-15); // 2 * 0.25 * 2
        let full = error_bounds(100, (100, 100, 100), &constants);
        assert_eq!(full, (0.0, 0.0, 0.0));
    }

    #[test]
    fn realized_errors_within_bounds_on_logistic() {
        let spec = suite::LogisticProblemSpec::synthetic(40, 5, 2, 21);
        let fs = suite::make_logistic_problem(&spec).unwrap();
        let det = fs.to_deterministic();
        let x = suite::default_start(5, 3).x0;
        let constants = BoundConstants::estimated(&fs, &x);
        for seed in 0..10u64 {
            for frac in [0.05f64, 0.5] {
                let size = ((frac * 40.0).ceil() as usize).clamp(1, 40);
                let set = draw_samples(40, size, seed, 0, 0).unwrap();
                let (f_bar, g_bar, h_bar) =
                    subsampled_estimates(&fs, &x, &set, &set, &set).unwrap();
                let (ef, eg, eh) = error_bounds(40, (size, size, size), &constants);
                assert!((f_bar - det.f(&x)).abs() <= ef + 1e-12);
                assert!((g_bar - det.g(&x)).norm() <= eg + 1e-12);
                assert!(
                    linalg::symmetric_two_norm(&(h_bar - det.h(&x))) <= eh + 1e-12,
                    "seed {seed} frac {frac}"
                );
            }
        }
    }

    #[test]
    fn adaptive_hessian_starts_at_five_percent() {
        let sched = build_schedule(SampleSchedule::AdaptiveHessian { n: 1000 }, 60).unwrap();
        assert_eq!(sched.size_at(0), 50);
        for n in [100usize, 621, 1000, 5500] {
            let s = SampleSchedule::AdaptiveHessian { n };
            assert_eq!(s.size_at(0), (0.05 * n as f64).floor() as usize);
        }
    }

    #[test]
    fn adaptive_hessian_is_monotone() {
        let sched = build_schedule(SampleSchedule::AdaptiveHessian { n: 777 }, 200).unwrap();
        for k in 1..200 {
            assert!(sched.size_at(k) >= sched.size_at(k - 1));
        }
    }

    #[test]
    fn full_schedule_is_constant_n() {
        let sched = build_schedule(SampleSchedule::Full { n: 64 }, 10).unwrap();
        for k in 0..10 {
            assert_eq!(sched.size_at(k), 64);
        }
        assert!(sched.is_full());
    }

    #[test]
    fn geometric_gap_walkthrough() {
        // N = 64, rate 0.5, initial 32: ceil rule gives
        // 32, 48, 56, 60, 62, 63, then 64 (ceil of 63.5)
        let sched = build_schedule(
            SampleSchedule::GeometricGap {
                n: 64,
                rate: 0.5,
                initial: 32,
            },
            40,
        )
        .unwrap();
        let sizes: Vec<usize> = (0..8).map(|k| sched.size_at(k)).collect();
        assert_eq!(sizes, vec![32, 48, 56, 60, 62, 63, 64, 64]);
    }

    #[test]
    fn geometric_gap_partial_sums_bounded() {
        let n = 200usize;
        let initial = 40usize;
        let rate = 0.7f64;
        let sched = build_schedule(SampleSchedule::GeometricGap { n, rate, initial }, 500).unwrap();
        let mut partial = 0.0;
        for k in 0..=500 {
            partial += (n - sched.size_at(k)) as f64 / n as f64;
        }
        let certificate = (n - initial) as f64 / (n as f64 * (1.0 - rate));
        assert!(partial <= certificate + 1e-9, "{partial} vs {certificate}");
    }

    #[test]
    fn invalid_parameterizations_are_rejected() {
        assert!(build_schedule(
            SampleSchedule::GeometricGap {
                n: 10,
                rate: 1.5,
                initial: 5
            },
            10
        )
        .is_err());
        assert!(build_schedule(
            SampleSchedule::ConstantFraction {
                n: 10,
                fraction: 0.0
            },
            10
        )
        .is_err());
        assert!(build_schedule(
            SampleSchedule::GeometricGap {
                n: 10,
                rate: 0.5,
                initial: 0
            },
            10
        )
        .is_err());
    }

    #[test]
    fn schedule_keys_resolve() {
        assert!(schedule_from_key("full", 50, 10).unwrap().is_full());
        assert_eq!(
            schedule_from_key("frac:0.05", 1000, 10).unwrap().size_at(3),
            50
        );
        assert!(matches!(
            schedule_from_key("adaptive-hess", 100, 10).unwrap(),
            SampleSchedule::AdaptiveHessian { .. }
        ));
        assert!(schedule_from_key("geo:0.9", 100, 10).is_ok());
        assert!(schedule_from_key("bogus", 100, 10).is_err());
    }
}
