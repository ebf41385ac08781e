//! Backward finite-difference solver for the coupled value system.
//!
//! For each player, the value field `eta^i(t, x)` satisfies
//!
//! ```text
//!   d_t eta^i + 1/2 sigma^2 d_xx eta^i + H_i(t, x, zeta^1, zeta^2) = 0,
//!   eta^i(T, x) = g_i(x),        zeta^i = sigma * d_x eta^i,
//! ```
//!
//! where `H_i` is either the level-`n` smoothed generator or the
//! discontinuous maximized one. The scheme steps backward from the terminal
//! slice with
//!
//! * implicit diffusion (one tridiagonal solve per player per step; the two
//!   players' solves are independent because the coupling is lagged),
//! * an explicit source evaluated at the already-computed later time level,
//!   whose advection content is a first-order difference upwinded by the
//!   sign of the effective drift at the frozen controls,
//! * linear-extrapolation boundaries: the second spatial difference at the
//!   domain ends is set to zero, so far-field behavior stays affine.
//!
//! Freezing the controls from the later level's central gradients keeps the
//! update monotone, which the discontinuous source needs to avoid spurious
//! oscillation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::hamiltonian::{
    bang_selector, smoothed_generator_w, smoothed_selector, SmoothingLevel, TiePolicy,
};
use crate::model::{Player, ProblemSpec};

/// How far-field boundary rows are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    #[default]
    LinearExtrapolation,
}

/// Uniform space-time grid for one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Spatial nodes (>= 3).
    pub nx: usize,
    /// Time steps (>= 1); the stored fields have `nt + 1` time levels.
    pub nt: usize,
    #[serde(default)]
    pub boundary_policy: BoundaryPolicy,
}

impl GridSpec {
    /// Default grid: `x0 ± 8 sqrt(T) sigma_max`, 401 nodes, 400 steps per
    /// unit of horizon.
    pub fn default_for(spec: &ProblemSpec) -> Self {
        let half = 8.0 * spec.horizon.abs().sqrt() * spec.diffusion.sigma_max();
        GridSpec {
            x_min: spec.start_x - half,
            x_max: spec.start_x + half,
            nx: 401,
            nt: ((400.0 * spec.horizon).round() as usize).max(1),
            boundary_policy: BoundaryPolicy::LinearExtrapolation,
        }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<(), PdeError> {
        if self.nx < 3 {
            return Err(PdeError::InvalidGrid(format!(
                "nx must be >= 3, got {}",
                self.nx
            )));
        }
        if self.nt < 1 {
            return Err(PdeError::InvalidGrid(format!(
                "nt must be >= 1, got {}",
                self.nt
            )));
        }
        if !(self.x_min < spec.start_x && spec.start_x < self.x_max) {
            return Err(PdeError::InvalidGrid(format!(
                "grid must satisfy x_min < start_x < x_max, got [{}, {}] around {}",
                self.x_min, self.x_max, spec.start_x
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx).map(|j| self.x_min + j as f64 * dx).collect()
    }
}

/// Which generator drove a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Smoothed { n: u32 },
    Limit,
}

/// Informational growth summary embedded in [`Diagnostics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub lambda: f64,
    pub max_ratio: f64,
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Max over steps of the linear-system residual max-norm.
    pub max_residual: f64,
    /// Max over nodes of the number of step-to-step sign flips of the
    /// gradient fields.
    pub chatter_max_flips: u32,
    /// Set when flips exceed the degeneracy threshold (limit mode only);
    /// a warning, not a failure.
    pub chatter_warning: bool,
    pub growth: GrowthSummary,
}

/// Discretized value fields for both players.
///
/// Fields are row-major over time then space: index `k * nx + j` holds time
/// level `k` (so `k = 0` is `t = 0` and `k = nt` the terminal slice) at node
/// `j`. The terminal slices equal the sampled terminal payoffs exactly.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub mode: SolveMode,
    pub diagnostics: Diagnostics,
}

/// Gap history of a refinement run over smoothing levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    /// Levels actually solved.
    pub levels: Vec<u32>,
    /// Sup-grid differences between consecutive solved levels, both players.
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub final_level: u32,
}

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite field detected at time step {step} (t = {t})")]
    Unstable { step: usize, t: f64 },
    #[error("smoothing schedule must be a non-empty strictly increasing list of levels >= 1")]
    InvalidSchedule,
}

impl ValueSolution {
    #[inline]
    pub fn index(&self, k: usize, j: usize) -> usize {
        k * self.grid.nx + j
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.problem.horizon * k as f64 / self.grid.nt as f64
    }

    pub fn x_at(&self, j: usize) -> f64 {
        self.grid.x_min + j as f64 * self.grid.dx()
    }

    pub fn eta(&self, player: Player) -> &[f64] {
        match player {
            Player::One => &self.eta1,
            Player::Two => &self.eta2,
        }
    }

    pub fn zeta(&self, player: Player) -> &[f64] {
        match player {
            Player::One => &self.zeta1,
            Player::Two => &self.zeta2,
        }
    }

    /// Nearest grid node to `(t, x)`, clamped to the grid.
    pub fn nearest_node(&self, t: f64, x: f64) -> (usize, usize) {
        let dt = self.problem.horizon / self.grid.nt as f64;
        let k = (t / dt).round();
        let k = if k.is_finite() && k > 0.0 {
            (k as usize).min(self.grid.nt)
        } else {
            0
        };
        let j = ((x - self.grid.x_min) / self.grid.dx()).round();
        let j = if j.is_finite() && j > 0.0 {
            (j as usize).min(self.grid.nx - 1)
        } else {
            0
        };
        (k, j)
    }

    /// `eta^player(0, x0)` at the nearest node.
    pub fn eta_at_start(&self, player: Player) -> f64 {
        let (_, j) = self.nearest_node(0.0, self.problem.start_x);
        self.eta(player)[j]
    }

    /// Max over both eta fields of the nodewise absolute difference.
    pub fn sup_gap(&self, other: &ValueSolution) -> f64 {
        assert_eq!(self.eta1.len(), other.eta1.len(), "grids differ");
        let mut gap = 0.0f64;
        for i in 0..self.eta1.len() {
            gap = gap
                .max((self.eta1[i] - other.eta1[i]).abs())
                .max((self.eta2[i] - other.eta2[i]).abs());
        }
        gap
    }

    /// Writes the solution as CSV rows `t,x,eta1,eta2,zeta1,zeta2,ustar,vstar`,
    /// row-major over time then space, 17 significant digits.
    pub fn write_csv<W: Write>(&self, tie: &TiePolicy, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,eta1,eta2,zeta1,zeta2,ustar,vstar")?;
        for k in 0..=self.grid.nt {
            let t = self.time_at(k);
            for j in 0..self.grid.nx {
                let i = self.index(k, j);
                let us = bang_selector(Player::One, self.zeta1[i], tie, &self.problem);
                let vs = bang_selector(Player::Two, self.zeta2[i], tie, &self.problem);
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    t,
                    self.x_at(j),
                    self.eta1[i],
                    self.eta2[i],
                    self.zeta1[i],
                    self.zeta2[i],
                    us,
                    vs
                )?;
            }
        }
        Ok(())
    }
}

/// `sigma * d_x field` on one time slice: central differences at interior
/// nodes, second-order one-sided at the boundaries.
fn gradient_slice(spec: &ProblemSpec, t: f64, xs: &[f64], field: &[f64], out: &mut [f64]) {
    let nx = field.len();
    let dx = xs[1] - xs[0];
    out[0] = (-3.0 * field[0] + 4.0 * field[1] - field[2]) / (2.0 * dx)
        * spec.diffusion_value(t, xs[0]);
    for j in 1..nx - 1 {
        out[j] = (field[j + 1] - field[j - 1]) / (2.0 * dx) * spec.diffusion_value(t, xs[j]);
    }
    out[nx - 1] = (3.0 * field[nx - 1] - 4.0 * field[nx - 2] + field[nx - 3]) / (2.0 * dx)
        * spec.diffusion_value(t, xs[nx - 1]);
}

/// Gradient rule applied to a full `(nt + 1) x nx` field.
pub fn gradient_field(spec: &ProblemSpec, grid: &GridSpec, field: &[f64]) -> Vec<f64> {
    assert_eq!(field.len(), (grid.nt + 1) * grid.nx, "field does not match grid");
    let xs = grid.xs();
    let mut out = vec![0.0; field.len()];
    for k in 0..=grid.nt {
        let t = spec.horizon * k as f64 / grid.nt as f64;
        let row = k * grid.nx;
        gradient_slice(spec, t, &xs, &field[row..row + grid.nx], &mut out[row..row + grid.nx]);
    }
    out
}

enum SourceKind {
    Limit(TiePolicy),
    Smoothed(SmoothingLevel),
}

/// Explicit source for one player over one slice, with frozen controls and
/// upwinded own-gradient.
#[allow(clippy::too_many_arguments)]
fn assemble_rhs(
    spec: &ProblemSpec,
    kind: &SourceKind,
    player: Player,
    t_old: f64,
    xs: &[f64],
    dx: f64,
    dt: f64,
    e_old: &[f64],
    z_own: &[f64],
    z_other: &[f64],
    dt_source: &mut [f64],
) {
    let nx = xs.len();
    for j in 0..nx {
        // Effective controls frozen from the later level's gradients; for
        // player 2 the "own" field is zeta2 and the cross field zeta1.
        let (z1, z2) = match player {
            Player::One => (z_own[j], z_other[j]),
            Player::Two => (z_other[j], z_own[j]),
        };
        let (u_eff, v_eff) = match kind {
            SourceKind::Limit(tie) => (
                bang_selector(Player::One, z1, tie, spec),
                bang_selector(Player::Two, z2, tie, spec),
            ),
            SourceKind::Smoothed(n) => (
                smoothed_selector(Player::One, z1, *n, spec),
                smoothed_selector(Player::Two, z2, *n, spec),
            ),
        };
        let a = spec.drift_effective(t_old, xs[j], u_eff, v_eff);

        // First-order difference of the player's own field, upwinded by the
        // sign of the frozen drift; one-sided (equivalently, linearly
        // extrapolated) at the ends.
        let w = if j == 0 {
            (e_old[1] - e_old[0]) / dx
        } else if j == nx - 1 {
            (e_old[nx - 1] - e_old[nx - 2]) / dx
        } else if a > 0.0 {
            (e_old[j + 1] - e_old[j]) / dx
        } else if a < 0.0 {
            (e_old[j] - e_old[j - 1]) / dx
        } else {
            (e_old[j + 1] - e_old[j - 1]) / (2.0 * dx)
        };

        let source = match kind {
            SourceKind::Limit(_) => a * w,
            SourceKind::Smoothed(n) => {
                let z_cross = match player {
                    Player::One => z2,
                    Player::Two => z1,
                };
                smoothed_generator_w(spec, player, t_old, xs[j], w, z_cross, *n)
            }
        };
        dt_source[j] = dt * source;
    }
}

/// Implicit diffusion step `(I - dt/2 sigma^2 D2) e_new = e_old + dt source`
/// with identity rows at the two boundary nodes (zero second difference
/// closure). Solved in delta form `e_new = e_old + delta` so that slices the
/// step should leave alone (zero source, vanishing second differences) come
/// back bit-identical. Returns the residual max-norm of the delta system.
#[allow(clippy::too_many_arguments)]
fn diffusion_solve(
    spec: &ProblemSpec,
    t_new: f64,
    xs: &[f64],
    dx: f64,
    dt: f64,
    e_old: &[f64],
    dt_source: &[f64],
    out: &mut [f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    let nx = xs.len();
    scratch.clear();
    scratch.resize(4 * nx, 0.0);
    let (c, rest) = scratch.split_at_mut(nx);
    let (cp, rest) = rest.split_at_mut(nx);
    let (dp, rhs) = rest.split_at_mut(nx);

    for j in 0..nx {
        let s = spec.diffusion_value(t_new, xs[j]);
        c[j] = 0.5 * s * s * dt / (dx * dx);
    }
    // (I - c D2) delta = dt*source + c D2 e_old; the boundary closure makes
    // the rows at j = 0 and nx-1 identities with zero diffusion load.
    rhs[0] = dt_source[0];
    for j in 1..nx - 1 {
        rhs[j] = dt_source[j] + c[j] * (e_old[j - 1] - 2.0 * e_old[j] + e_old[j + 1]);
    }
    rhs[nx - 1] = dt_source[nx - 1];

    // Thomas sweep for delta (reusing `out` as the solution buffer).
    cp[0] = 0.0;
    dp[0] = rhs[0];
    for j in 1..nx {
        let (sub, diag, sup) = if j == nx - 1 {
            (0.0, 1.0, 0.0)
        } else {
            (-c[j], 1.0 + 2.0 * c[j], -c[j])
        };
        let m = diag - sub * cp[j - 1];
        cp[j] = sup / m;
        dp[j] = (rhs[j] - sub * dp[j - 1]) / m;
    }
    out[nx - 1] = dp[nx - 1];
    for j in (0..nx - 1).rev() {
        out[j] = dp[j] - cp[j] * out[j + 1];
    }

    let mut res = (out[0] - rhs[0]).abs().max((out[nx - 1] - rhs[nx - 1]).abs());
    for j in 1..nx - 1 {
        let lhs = -c[j] * out[j - 1] + (1.0 + 2.0 * c[j]) * out[j] - c[j] * out[j + 1];
        res = res.max((lhs - rhs[j]).abs());
    }
    for j in 0..nx {
        out[j] += e_old[j];
    }
    res
}

fn solve_with(
    spec: &ProblemSpec,
    grid: &GridSpec,
    kind: SourceKind,
) -> Result<ValueSolution, PdeError> {
    grid.validate(spec)?;
    let nx = grid.nx;
    let nt = grid.nt;
    let dt = spec.horizon / nt as f64;
    let dx = grid.dx();
    let xs = grid.xs();
    let size = (nt + 1) * nx;

    let mut eta1 = vec![0.0; size];
    let mut eta2 = vec![0.0; size];
    let mut zeta1 = vec![0.0; size];
    let mut zeta2 = vec![0.0; size];

    let term_row = nt * nx;
    for j in 0..nx {
        eta1[term_row + j] = spec.terminal(Player::One, xs[j]);
        eta2[term_row + j] = spec.terminal(Player::Two, xs[j]);
    }
    if eta1[term_row..].iter().chain(&eta2[term_row..]).any(|v| !v.is_finite()) {
        return Err(PdeError::Unstable {
            step: nt,
            t: spec.horizon,
        });
    }
    gradient_slice(
        spec,
        spec.horizon,
        &xs,
        &eta1[term_row..],
        &mut zeta1[term_row..term_row + nx],
    );
    gradient_slice(
        spec,
        spec.horizon,
        &xs,
        &eta2[term_row..],
        &mut zeta2[term_row..term_row + nx],
    );

    let mut rhs1 = vec![0.0; nx];
    let mut rhs2 = vec![0.0; nx];
    let mut scratch1 = Vec::new();
    let mut scratch2 = Vec::new();
    let mut flips1 = vec![0u32; nx];
    let mut flips2 = vec![0u32; nx];
    let mut max_residual = 0.0f64;

    for k in (0..nt).rev() {
        let t_new = k as f64 * dt;
        let t_old = (k + 1) as f64 * dt;
        let row_old = (k + 1) * nx;
        let row_new = k * nx;

        let (e1_head, e1_tail) = eta1.split_at_mut(row_old);
        let (e2_head, e2_tail) = eta2.split_at_mut(row_old);
        let e1_old = &e1_tail[..nx];
        let e2_old = &e2_tail[..nx];
        let z1_old = &zeta1[row_old..row_old + nx];
        let z2_old = &zeta2[row_old..row_old + nx];
        let e1_new = &mut e1_head[row_new..row_new + nx];
        let e2_new = &mut e2_head[row_new..row_new + nx];

        // The coupling between the players is lagged, so the two per-step
        // solves are independent.
        let (r1, r2) = exec::join(
            || {
                assemble_rhs(
                    spec, &kind, Player::One, t_old, &xs, dx, dt, e1_old, z1_old, z2_old,
                    &mut rhs1,
                );
                diffusion_solve(spec, t_new, &xs, dx, dt, e1_old, &rhs1, e1_new, &mut scratch1)
            },
            || {
                assemble_rhs(
                    spec, &kind, Player::Two, t_old, &xs, dx, dt, e2_old, z2_old, z1_old,
                    &mut rhs2,
                );
                diffusion_solve(spec, t_new, &xs, dx, dt, e2_old, &rhs2, e2_new, &mut scratch2)
            },
        );
        max_residual = max_residual.max(r1).max(r2);

        if e1_new.iter().chain(e2_new.iter()).any(|v| !v.is_finite()) {
            return Err(PdeError::Unstable { step: k, t: t_new });
        }

        let (z1_head, z1_tail) = zeta1.split_at_mut(row_old);
        let (z2_head, z2_tail) = zeta2.split_at_mut(row_old);
        gradient_slice(spec, t_new, &xs, e1_new, &mut z1_head[row_new..row_new + nx]);
        gradient_slice(spec, t_new, &xs, e2_new, &mut z2_head[row_new..row_new + nx]);

        for j in 0..nx {
            let (a, b) = (z1_head[row_new + j], z1_tail[j]);
            if a * b < 0.0 {
                flips1[j] += 1;
            }
            let (a, b) = (z2_head[row_new + j], z2_tail[j]);
            if a * b < 0.0 {
                flips2[j] += 1;
            }
        }
    }

    let chatter_max_flips = flips1.iter().chain(flips2.iter()).copied().max().unwrap_or(0);
    let chatter_threshold = (nt as u32 / 5).max(10);
    let mode = match kind {
        SourceKind::Limit(_) => SolveMode::Limit,
        SourceKind::Smoothed(n) => SolveMode::Smoothed { n: n.get() },
    };

    let mut solution = ValueSolution {
        problem: spec.clone(),
        grid: grid.clone(),
        eta1,
        eta2,
        zeta1,
        zeta2,
        mode,
        diagnostics: Diagnostics {
            max_residual,
            chatter_max_flips,
            chatter_warning: matches!(mode, SolveMode::Limit)
                && chatter_max_flips > chatter_threshold,
            growth: GrowthSummary {
                lambda: 0.0,
                max_ratio: 0.0,
            },
        },
    };
    let lambda = spec
        .terminal_1
        .polynomial_growth()
        .1
        .max(spec.terminal_2.polynomial_growth().1);
    let check = growth_diagnostic(&solution, lambda, f64::INFINITY);
    solution.diagnostics.growth = GrowthSummary {
        lambda,
        max_ratio: check.max_ratio,
    };
    Ok(solution)
}

/// Solves the level-`n` approximating system.
pub fn solve_smoothed(
    spec: &ProblemSpec,
    grid: &GridSpec,
    n: SmoothingLevel,
) -> Result<ValueSolution, PdeError> {
    solve_with(spec, grid, SourceKind::Smoothed(n))
}

/// Solves the limit system with the discontinuous maximized generator; the
/// tie policy supplies the controls wherever a frozen gradient is exactly
/// zero.
pub fn solve_limit(
    spec: &ProblemSpec,
    grid: &GridSpec,
    tie: &TiePolicy,
) -> Result<ValueSolution, PdeError> {
    solve_with(spec, grid, SourceKind::Limit(*tie))
}

/// Runs [`solve_smoothed`] along a strictly increasing schedule of levels,
/// recording sup-grid gaps between consecutive levels, and stops early once
/// a gap falls to `tol`.
pub fn refine_in_n(
    spec: &ProblemSpec,
    grid: &GridSpec,
    schedule: &[u32],
    tol: f64,
) -> Result<(ValueSolution, CauchyReport), PdeError> {
    if schedule.is_empty()
        || schedule.iter().any(|&n| n < 1)
        || schedule.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(PdeError::InvalidSchedule);
    }

    let mut levels = Vec::new();
    let mut gaps = Vec::new();
    let mut converged = false;
    let mut last: Option<ValueSolution> = None;
    for &n in schedule {
        let sol = solve_smoothed(spec, grid, SmoothingLevel::new(n).expect("checked above"))?;
        levels.push(n);
        if let Some(prev) = &last {
            let gap = sol.sup_gap(prev);
            gaps.push(gap);
            last = Some(sol);
            if gap <= tol {
                converged = true;
                break;
            }
        } else {
            last = Some(sol);
        }
    }
    let solution = last.expect("schedule is non-empty");
    let report = CauchyReport {
        final_level: *levels.last().expect("non-empty"),
        levels,
        gaps,
        converged,
    };
    Ok((solution, report))
}

/// Result of a polynomial-growth check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub lambda: f64,
    pub bound: f64,
    /// `max |eta^i(t,x)| / (1 + |x|^lambda)` over the grid and both players.
    pub max_ratio: f64,
    pub within_bound: bool,
}

/// Reports `max |eta^i(t,x)| / (1 + |x|^lambda)` against `c`. Informational.
pub fn growth_diagnostic(solution: &ValueSolution, lambda: f64, c: f64) -> GrowthCheck {
    let nx = solution.grid.nx;
    let mut max_ratio = 0.0f64;
    for k in 0..=solution.grid.nt {
        for j in 0..nx {
            let denom = 1.0 + solution.x_at(j).abs().powf(lambda);
            let i = solution.index(k, j);
            max_ratio = max_ratio
                .max(solution.eta1[i].abs() / denom)
                .max(solution.eta2[i].abs() / denom);
        }
    }
    GrowthCheck {
        lambda,
        bound: c,
        max_ratio,
        within_bound: max_ratio <= c,
    }
}
