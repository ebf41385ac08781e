//! Certification layer: analytic oracles, pointwise maximization sweep,
//! smoothing-limit checks, and the unilateral-deviation suite.
//!
//! The deviation suite is the statistical heart: it estimates the payoff of
//! the extracted pair, replays a structured adversarial family of
//! unilateral deviations under common random numbers, and flags any
//! deviation whose paired payoff gain exceeds `3 sigma + slack`. The
//! quantifier "for all admissible controls" is untestable at a desk, so the
//! family composition is fixed and reported, making substitution of a
//! stronger family straightforward.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::hamiltonian::{bang_selector, isaacs_gap, smoothed_selector, truncate, SmoothingLevel, TiePolicy};
use crate::mc::{per_path_payoffs, simulate_payoffs, McError, SimConfig};
use crate::model::{Diffusion, DriftBase, Monotonicity, Player, ProblemSpec, Terminal};
use crate::pde::{Diagnostics, GridSpec, GrowthSummary, SolveMode, ValueSolution};
use crate::strategy::{bang_bang_pair, deviation_family};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("linear oracle requires affine terminals, got {0}")]
    TerminalNotAffine(String),
    #[error("linear oracle declines: terminal slope of player {0} is zero (tie branch ambiguity)")]
    ZeroSlope(u8),
    #[error("oracle requires a constant drift base")]
    DriftNotConstant,
    #[error("oracle requires the identity diffusion")]
    DiffusionNotIdentity,
    #[error("quadrature oracle declines: terminal of player {0} is not nondecreasing")]
    TerminalNotMonotone(u8),
    #[error("quadrature oracle declines: no strictly increasing terminal")]
    NoStrictlyIncreasingTerminal,
    #[error(transparent)]
    Grid(#[from] crate::pde::PdeError),
}

/// Exact solution for affine terminals `a_i x + b_i`, constant drift base
/// `kappa`, identity diffusion: the gradients are the constants `a_i`, the
/// bang controls are frozen everywhere, and
/// `eta^i(t, x) = a_i x + b_i + a_i (kappa + u* + v*) (T - t)`.
///
/// Declines when either slope is zero (the tie branch would decide the
/// controls, and a guessing oracle is worse than none).
pub fn linear_oracle(spec: &ProblemSpec, grid: &GridSpec) -> Result<ValueSolution, OracleError> {
    let kappa = match spec.drift_base {
        DriftBase::Constant { value } => value,
        _ => return Err(OracleError::DriftNotConstant),
    };
    if spec.diffusion != Diffusion::Identity {
        return Err(OracleError::DiffusionNotIdentity);
    }
    let slope_of = |term: &Terminal, player: u8| match *term {
        Terminal::Affine { slope, intercept } => {
            if slope == 0.0 {
                Err(OracleError::ZeroSlope(player))
            } else {
                Ok((slope, intercept))
            }
        }
        ref other => Err(OracleError::TerminalNotAffine(format!("{other:?}"))),
    };
    let (a1, b1) = slope_of(&spec.terminal_1, 1)?;
    let (a2, b2) = slope_of(&spec.terminal_2, 2)?;
    grid.validate(spec)?;

    let tie = TiePolicy::for_spec(spec);
    let u_star = bang_selector(Player::One, a1, &tie, spec);
    let v_star = bang_selector(Player::Two, a2, &tie, spec);
    let rate = kappa + u_star + v_star;

    let nx = grid.nx;
    let nt = grid.nt;
    let xs = grid.xs();
    let size = (nt + 1) * nx;
    let mut eta1 = vec![0.0; size];
    let mut eta2 = vec![0.0; size];
    let mut zeta1 = vec![0.0; size];
    let mut zeta2 = vec![0.0; size];
    for k in 0..=nt {
        let t = spec.horizon * k as f64 / nt as f64;
        let remaining = spec.horizon - t;
        for j in 0..nx {
            let i = k * nx + j;
            eta1[i] = a1 * xs[j] + b1 + a1 * rate * remaining;
            eta2[i] = a2 * xs[j] + b2 + a2 * rate * remaining;
            zeta1[i] = a1;
            zeta2[i] = a2;
        }
    }
    Ok(ValueSolution {
        problem: spec.clone(),
        grid: grid.clone(),
        eta1,
        eta2,
        zeta1,
        zeta2,
        mode: SolveMode::Limit,
        diagnostics: Diagnostics {
            max_residual: 0.0,
            chatter_max_flips: 0,
            chatter_warning: false,
            growth: GrowthSummary {
                lambda: 1.0,
                max_ratio: 0.0,
            },
        },
    })
}

/// Gauss–Hermite nodes and weights for `∫ e^{-t^2} f(t) dt` (physicists'
/// convention), by Newton iteration on the orthonormal recurrence.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// `E[f(mean + std * xi)]` for standard normal `xi`, by Gauss–Hermite.
pub fn gauss_hermite_expectation<F: Fn(f64) -> f64>(
    f: F,
    mean: f64,
    std: f64,
    order: usize,
) -> f64 {
    let (nodes, weights) = gauss_hermite(order);
    let scale = std * std::f64::consts::SQRT_2;
    let mut acc = 0.0;
    for i in 0..order {
        acc += weights[i] * f(mean + scale * nodes[i]);
    }
    acc / std::f64::consts::PI.sqrt()
}

/// Gaussian-quadrature values of both equilibrium payoffs for monotone
/// terminals, constant drift base, identity diffusion.
///
/// Rationale: with both terminals nondecreasing and one strictly increasing,
/// the constant pair at the upper effective endpoints makes each value
/// function increasing in `x`, so the gradients stay nonnegative and the
/// selectors return those same endpoints — the candidate is self-consistent,
/// and the terminal state is exactly `x0 + (kappa + u_hi + v_hi) T + sqrt(T) xi`.
pub fn quadrature_oracle(spec: &ProblemSpec, order: usize) -> Result<(f64, f64), OracleError> {
    let kappa = match spec.drift_base {
        DriftBase::Constant { value } => value,
        _ => return Err(OracleError::DriftNotConstant),
    };
    if spec.diffusion != Diffusion::Identity {
        return Err(OracleError::DiffusionNotIdentity);
    }
    let m1 = spec.terminal_1.monotonicity();
    let m2 = spec.terminal_2.monotonicity();
    if m1 == Monotonicity::NotMonotone {
        return Err(OracleError::TerminalNotMonotone(1));
    }
    if m2 == Monotonicity::NotMonotone {
        return Err(OracleError::TerminalNotMonotone(2));
    }
    if m1 != Monotonicity::StrictlyIncreasing && m2 != Monotonicity::StrictlyIncreasing {
        return Err(OracleError::NoStrictlyIncreasingTerminal);
    }
    let (u_iv, v_iv) = spec.effective_control_intervals();
    let mean = spec.start_x + (kappa + u_iv[1] + v_iv[1]) * spec.horizon;
    let std = spec.horizon.sqrt();
    let j1 = gauss_hermite_expectation(|y| spec.terminal_1.eval(y), mean, std, order);
    let j2 = gauss_hermite_expectation(|y| spec.terminal_2.eval(y), mean, std, order);
    Ok((j1, j2))
}

/// Outcome of the pointwise maximization sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsaacsReport {
    pub n_samples: usize,
    pub seed: u64,
    pub min_gap_1: f64,
    pub min_gap_2: f64,
    pub violations: u64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Samples `(t, x, p, q, u, v)` uniformly over
/// `[0,T] x [-5,5] x [-10,10]^2 x U x V` and checks both maximization gaps
/// against `-1e-12`.
pub fn isaacs_sweep(spec: &ProblemSpec, n_samples: usize, seed: u64) -> IsaacsReport {
    let tie = TiePolicy::for_spec(spec);
    let tolerance = 1e-12;
    let gaps = exec::map_indexed(n_samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let t: f64 = rng.random_range(0.0..spec.horizon);
        let x: f64 = rng.random_range(-5.0..5.0);
        let p: f64 = rng.random_range(-10.0..10.0);
        let q: f64 = rng.random_range(-10.0..10.0);
        let u: f64 = rng.random_range(spec.u_interval[0]..spec.u_interval[1]);
        let v: f64 = rng.random_range(spec.v_interval[0]..spec.v_interval[1]);
        isaacs_gap(spec, t, x, p, q, u, v, &tie).expect("sampled controls are admissible")
    });
    let mut min1 = f64::INFINITY;
    let mut min2 = f64::INFINITY;
    let mut violations = 0u64;
    for (g1, g2) in &gaps {
        min1 = min1.min(*g1);
        min2 = min2.min(*g2);
        if *g1 < -tolerance || *g2 < -tolerance {
            violations += 1;
        }
    }
    IsaacsReport {
        n_samples,
        seed,
        min_gap_1: min1,
        min_gap_2: min2,
        violations,
        tolerance,
        pass: violations == 0,
    }
}

/// Outcome of the smoothing-limit checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub n_samples: usize,
    pub seed: u64,
    /// Samples where `smoothed != bang` despite `n > 1/|grad|`.
    pub selector_mismatches: u64,
    /// Samples violating `|trunc(x, n)| <= min(|x|, n)`.
    pub truncation_violations: u64,
    pub pass: bool,
}

/// For random nonzero gradients and levels `n > 1/|grad|`, asserts exact
/// equality of the smoothed and bang selectors; also checks the truncation
/// bound on random inputs.
pub fn smoothing_limit_suite(spec: &ProblemSpec, seed: u64, n_samples: usize) -> SmoothingReport {
    let tie = TiePolicy::for_spec(spec);
    let results = exec::map_indexed(n_samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let grad: f64 = rng.random_range(-10.0..10.0);
        let extra: u32 = rng.random_range(0..16);
        let mut mismatches = 0u64;
        if grad != 0.0 {
            let n = SmoothingLevel::new((1.0 / grad.abs()).floor() as u32 + 1 + extra)
                .expect("level >= 1");
            for player in [Player::One, Player::Two] {
                let s = smoothed_selector(player, grad, n, spec);
                let b = bang_selector(player, grad, &tie, spec);
                if s.to_bits() != b.to_bits() {
                    mismatches += 1;
                }
            }
        }
        let x: f64 = rng.random_range(-50.0..50.0);
        let n = SmoothingLevel::new(rng.random_range(1..64)).expect("level >= 1");
        let t = truncate(x, n);
        let trunc_bad = u64::from(!(t.abs() <= x.abs() && t.abs() <= n.as_f64()));
        (mismatches, trunc_bad)
    });
    let selector_mismatches = results.iter().map(|r| r.0).sum();
    let truncation_violations = results.iter().map(|r| r.1).sum();
    SmoothingReport {
        n_samples,
        seed,
        selector_mismatches,
        truncation_violations,
        pass: selector_mismatches == 0 && truncation_violations == 0,
    }
}

/// One unilateral deviation's paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub player: u8,
    pub description: String,
    /// `J_dev - J_star`, estimated on paired paths.
    pub payoff_gap: f64,
    /// Standard error of the paired gap.
    pub std_err: f64,
    pub violates: bool,
}

/// Outcome of the unilateral-deviation suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub case_name: String,
    pub deviations_per_player: usize,
    pub z_score: f64,
    pub slack: f64,
    pub star_payoff_1: f64,
    pub star_payoff_2: f64,
    pub records: Vec<DeviationRecord>,
    pub pass: bool,
}

/// Replays `deviations_per_player` unilateral deviations per player under
/// common random numbers and flags any whose paired payoff gain exceeds
/// `3 * std_err + slack`.
pub fn nash_deviation_suite(
    spec: &ProblemSpec,
    solution: &Arc<ValueSolution>,
    tie: &TiePolicy,
    deviations_per_player: usize,
    cfg: &SimConfig,
    slack: f64,
) -> Result<VerdictReport, McError> {
    let z_score = 3.0;
    let (u_star, v_star) = bang_bang_pair(solution, tie);
    let star_est = simulate_payoffs(spec, &u_star, &v_star, cfg)?;
    let star_paths = per_path_payoffs(spec, &u_star, &v_star, cfg);

    let mut records = Vec::with_capacity(2 * deviations_per_player);
    for player in [Player::One, Player::Two] {
        // distinct, reproducible family seed per player
        let family_seed = cfg
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(u64::from(player.number()));
        let base = match player {
            Player::One => &u_star,
            Player::Two => &v_star,
        };
        let family = deviation_family(base, deviations_per_player, family_seed, spec);
        let component = (player.number() - 1) as usize;
        for dev in family {
            let paths = match player {
                Player::One => per_path_payoffs(spec, &dev, &v_star, cfg),
                Player::Two => per_path_payoffs(spec, &u_star, &dev, cfg),
            };
            let n = paths.len();
            let mean = exec::pairwise_sum_by(0, n, &|i| {
                paths[i][component] - star_paths[i][component]
            }) / n as f64;
            let std_err = if n < 2 {
                0.0
            } else {
                let ss = exec::pairwise_sum_by(0, n, &|i| {
                    let d = paths[i][component] - star_paths[i][component] - mean;
                    d * d
                });
                (ss / ((n - 1) as f64 * n as f64)).sqrt()
            };
            records.push(DeviationRecord {
                player: player.number(),
                description: dev.description.clone(),
                payoff_gap: mean,
                std_err,
                violates: mean > z_score * std_err + slack,
            });
        }
    }
    let pass = records.iter().all(|r| !r.violates);
    Ok(VerdictReport {
        case_name: spec.describe(),
        deviations_per_player,
        z_score,
        slack,
        star_payoff_1: star_est.0.mean,
        star_payoff_2: star_est.1.mean,
        records,
        pass,
    })
}
