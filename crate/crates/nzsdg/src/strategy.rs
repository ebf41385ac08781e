//! Markovian feedback strategies and deviation families.
//!
//! A [`FeedbackStrategy`] maps `(t, x)` to a control value in the player's
//! effective interval. The equilibrium candidate is the bang-bang pair read
//! off a [`ValueSolution`]: look up the player's gradient field at the
//! nearest grid node and apply the bang selector. Nearest-node lookup is
//! deliberate — interpolating across a sign change would fabricate
//! intermediate controls that a bang-bang strategy must never produce.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hamiltonian::{bang_selector, TiePolicy};
use crate::model::{Player, ProblemSpec};
use crate::pde::ValueSolution;

/// Rectangular grid of control values with nearest-node lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTable {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    /// Row-major over `ts` then `xs`.
    pub values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("table CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ControlTable {
    pub fn new(ts: Vec<f64>, xs: Vec<f64>, values: Vec<f64>) -> Result<Self, StrategyError> {
        if ts.is_empty() || xs.is_empty() || values.len() != ts.len() * xs.len() {
            return Err(StrategyError::Csv(format!(
                "need len(ts) * len(xs) = {} values, got {}",
                ts.len() * xs.len(),
                values.len()
            )));
        }
        if ts.windows(2).any(|w| w[0] >= w[1]) || xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(StrategyError::Csv("axes must be strictly increasing".into()));
        }
        Ok(ControlTable { ts, xs, values })
    }

    fn nearest(axis: &[f64], v: f64) -> usize {
        // assumes a sorted axis; ties resolve to the left node
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &a) in axis.iter().enumerate() {
            let d = (a - v).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    pub fn lookup(&self, t: f64, x: f64) -> f64 {
        let i = Self::nearest(&self.ts, t);
        let j = Self::nearest(&self.xs, x);
        self.values[i * self.xs.len() + j]
    }

    /// Emits rows `t,x,value`, row-major over `t` then `x`, with a header.
    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,value")?;
        for (i, &t) in self.ts.iter().enumerate() {
            for (j, &x) in self.xs.iter().enumerate() {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", t, x, self.values[i * self.xs.len() + j])?;
            }
        }
        Ok(())
    }

    /// Parses the format written by [`ControlTable::to_csv`]; the rows must
    /// cover a complete rectangle.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self, StrategyError> {
        let mut ts: Vec<f64> = Vec::new();
        let mut xs: Vec<f64> = Vec::new();
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("t,")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(StrategyError::Csv(format!(
                    "line {}: expected 3 columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| -> Result<f64, StrategyError> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| StrategyError::Csv(format!("line {}: {e}", lineno + 1)))
            };
            let (t, x, v) = (parse(cols[0])?, parse(cols[1])?, parse(cols[2])?);
            if !ts.contains(&t) {
                ts.push(t);
            }
            if !xs.contains(&x) {
                xs.push(x);
            }
            rows.push((t, x, v));
        }
        ts.sort_by(f64::total_cmp);
        xs.sort_by(f64::total_cmp);
        if rows.len() != ts.len() * xs.len() {
            return Err(StrategyError::Csv(format!(
                "expected a complete {}x{} rectangle, got {} rows",
                ts.len(),
                xs.len(),
                rows.len()
            )));
        }
        let mut values = vec![f64::NAN; rows.len()];
        for (t, x, v) in rows {
            let i = ts.iter().position(|&a| a == t).expect("collected above");
            let j = xs.iter().position(|&a| a == x).expect("collected above");
            values[i * xs.len() + j] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(StrategyError::Csv("duplicate rows leave holes".into()));
        }
        ControlTable::new(ts, xs, values)
    }
}

#[derive(Debug, Clone)]
pub enum StrategyKind {
    /// Bang-bang lookup into a solved gradient field.
    BangBang {
        solution: Arc<ValueSolution>,
        tie: TiePolicy,
    },
    Constant(f64),
    Table(ControlTable),
    /// `base`, replaced by `value` on the closed rectangle
    /// `t_range x x_range`.
    Override {
        base: Box<FeedbackStrategy>,
        t_range: [f64; 2],
        x_range: [f64; 2],
        value: f64,
    },
}

/// A Markovian control rule for one player.
#[derive(Debug, Clone)]
pub struct FeedbackStrategy {
    pub player: Player,
    /// The player's effective control interval; every evaluation is clamped
    /// into it.
    pub interval: [f64; 2],
    pub kind: StrategyKind,
    pub description: String,
}

impl FeedbackStrategy {
    pub fn constant(player: Player, spec: &ProblemSpec, value: f64) -> Self {
        FeedbackStrategy {
            player,
            interval: spec.effective_interval(player),
            kind: StrategyKind::Constant(value),
            description: format!("constant({value})"),
        }
    }

    pub fn bang_bang(player: Player, solution: Arc<ValueSolution>, tie: TiePolicy) -> Self {
        let interval = solution.problem.effective_interval(player);
        FeedbackStrategy {
            player,
            interval,
            kind: StrategyKind::BangBang { solution, tie },
            description: format!("bang-bang(player {})", player.number()),
        }
    }

    pub fn table(player: Player, spec: &ProblemSpec, table: ControlTable) -> Self {
        let description = format!("table({}x{})", table.ts.len(), table.xs.len());
        FeedbackStrategy {
            player,
            interval: spec.effective_interval(player),
            kind: StrategyKind::Table(table),
            description,
        }
    }

    /// Wraps `self` with a rectangular replacement region.
    pub fn with_override(self, t_range: [f64; 2], x_range: [f64; 2], value: f64) -> Self {
        let description = format!(
            "override(t in [{:.3}, {:.3}], x in [{:.3}, {:.3}], value {:.3}) of {}",
            t_range[0], t_range[1], x_range[0], x_range[1], value, self.description
        );
        FeedbackStrategy {
            player: self.player,
            interval: self.interval,
            kind: StrategyKind::Override {
                base: Box::new(self),
                t_range,
                x_range,
                value,
            },
            description,
        }
    }

    /// Control value at `(t, x)`; positions outside the lookup grids clamp
    /// to the boundary nodes.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let raw = match &self.kind {
            StrategyKind::Constant(c) => *c,
            StrategyKind::BangBang { solution, tie } => {
                let (k, j) = solution.nearest_node(t, x);
                let z = solution.zeta(self.player)[solution.index(k, j)];
                bang_selector(self.player, z, tie, &solution.problem)
            }
            StrategyKind::Table(table) => table.lookup(t, x),
            StrategyKind::Override {
                base,
                t_range,
                x_range,
                value,
            } => {
                if t >= t_range[0] && t <= t_range[1] && x >= x_range[0] && x <= x_range[1] {
                    *value
                } else {
                    base.eval(t, x)
                }
            }
        };
        raw.clamp(self.interval[0], self.interval[1])
    }
}

/// The bang-bang candidate equilibrium read off a solved value system.
pub fn bang_bang_pair(
    solution: &Arc<ValueSolution>,
    tie: &TiePolicy,
) -> (FeedbackStrategy, FeedbackStrategy) {
    (
        FeedbackStrategy::bang_bang(Player::One, Arc::clone(solution), *tie),
        FeedbackStrategy::bang_bang(Player::Two, Arc::clone(solution), *tie),
    )
}

/// Deterministic adversarial family for the deviation suite: the interval
/// endpoints and midpoint first, then alternating random rectangular
/// overrides of `base` and fully random lookup tables.
pub fn deviation_family(
    base: &FeedbackStrategy,
    count: usize,
    rng_seed: u64,
    spec: &ProblemSpec,
) -> Vec<FeedbackStrategy> {
    let player = base.player;
    let [lo, hi] = spec.effective_interval(player);
    let half = 8.0 * spec.horizon.sqrt() * spec.diffusion.sigma_max();
    let (x_lo, x_hi) = (spec.start_x - half, spec.start_x + half);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let strat = match i {
            0 => FeedbackStrategy::constant(player, spec, lo),
            1 => FeedbackStrategy::constant(player, spec, hi),
            2 => FeedbackStrategy::constant(player, spec, 0.5 * (lo + hi)),
            _ if (i - 3) % 2 == 0 => {
                let a: f64 = rng.random_range(0.0..spec.horizon);
                let b: f64 = rng.random_range(0.0..spec.horizon);
                let xa: f64 = rng.random_range(x_lo..x_hi);
                let xb: f64 = rng.random_range(x_lo..x_hi);
                let value = rng.random_range(lo..=hi);
                base.clone()
                    .with_override([a.min(b), a.max(b)], [xa.min(xb), xa.max(xb)], value)
            }
            _ => {
                let nt = 5;
                let nx = 9;
                let ts = (0..nt)
                    .map(|k| spec.horizon * k as f64 / (nt - 1) as f64)
                    .collect();
                let xs = (0..nx)
                    .map(|j| x_lo + (x_hi - x_lo) * j as f64 / (nx - 1) as f64)
                    .collect();
                let values = (0..nt * nx).map(|_| rng.random_range(lo..=hi)).collect();
                let table = ControlTable::new(ts, xs, values).expect("well-formed by construction");
                let mut s = FeedbackStrategy::table(player, spec, table);
                s.description = format!("random table 5x9 (member {i})");
                s
            }
        };
        out.push(strat);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Diffusion, DriftBase, Terminal, Transform};
    use crate::pde::{solve_limit, BoundaryPolicy, GridSpec};

    fn base_spec() -> ProblemSpec {
        ProblemSpec {
            horizon: 1.0,
            start_x: 0.0,
            drift_base: DriftBase::Constant { value: 0.0 },
            terminal_1: Terminal::Affine {
                slope: 1.0,
                intercept: 0.0,
            },
            terminal_2: Terminal::Affine {
                slope: 1.0,
                intercept: 0.0,
            },
            diffusion: Diffusion::Identity,
            u_interval: [0.0, 1.0],
            v_interval: [-1.0, 1.0],
            transform_h: Transform::Identity,
            transform_l: Transform::Identity,
            tie_eps1: Some(0.0),
            tie_eps2: Some(0.0),
        }
    }

    fn grid() -> GridSpec {
        GridSpec {
            x_min: -8.0,
            x_max: 8.0,
            nx: 101,
            nt: 100,
            boundary_policy: BoundaryPolicy::LinearExtrapolation,
        }
    }

    fn tie() -> TiePolicy {
        TiePolicy {
            eps1: 0.0,
            eps2: 0.0,
        }
    }

    #[test]
    fn bang_bang_pair_on_the_linear_and_conflict_cases() {
        let spec = base_spec();
        let sol = Arc::new(solve_limit(&spec, &grid(), &tie()).unwrap());
        let (u, v) = bang_bang_pair(&sol, &tie());
        for (t, x) in [(0.0, 0.0), (0.3, 1.2), (0.9, -5.0)] {
            assert_eq!(u.eval(t, x), 1.0);
            assert_eq!(v.eval(t, x), 1.0);
        }

        let mut spec = base_spec();
        spec.terminal_2 = Terminal::Affine {
            slope: -1.0,
            intercept: 0.0,
        };
        let sol = Arc::new(solve_limit(&spec, &grid(), &tie()).unwrap());
        let (u, v) = bang_bang_pair(&sol, &tie());
        assert_eq!(u.eval(0.5, 0.7), 1.0);
        assert_eq!(v.eval(0.5, 0.7), -1.0);
    }

    #[test]
    fn constant_terminals_extract_the_tie_values() {
        let mut spec = base_spec();
        spec.terminal_1 = Terminal::Affine {
            slope: 0.0,
            intercept: 2.0,
        };
        spec.terminal_2 = spec.terminal_1.clone();
        let my_tie = TiePolicy {
            eps1: 0.25,
            eps2: -0.5,
        };
        let sol = Arc::new(solve_limit(&spec, &grid(), &my_tie).unwrap());
        let (u, v) = bang_bang_pair(&sol, &my_tie);
        assert_eq!(u.eval(0.4, 1.0), 0.25);
        assert_eq!(v.eval(0.4, 1.0), -0.5);
    }

    #[test]
    fn eval_examples() {
        let spec = base_spec();
        let c = FeedbackStrategy::constant(Player::One, &spec, 0.5);
        assert_eq!(c.eval(0.123, -4.0), 0.5);

        let o = FeedbackStrategy::constant(Player::One, &spec, 1.0).with_override(
            [0.0, 0.5],
            [-10.0, 10.0],
            0.0,
        );
        assert_eq!(o.eval(0.25, 0.0), 0.0);
        assert_eq!(o.eval(0.75, 0.0), 1.0);
    }

    #[test]
    fn evaluations_clamp_outside_the_grid_and_stay_admissible() {
        let spec = base_spec();
        let sol = Arc::new(solve_limit(&spec, &grid(), &tie()).unwrap());
        let (u, _) = bang_bang_pair(&sol, &tie());
        assert_eq!(u.eval(5.0, 100.0), 1.0); // clamps to the last node
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let family = deviation_family(&u, 12, 99, &spec);
        for s in &family {
            for _ in 0..1000 {
                let t: f64 = rng.random_range(-0.5..1.5);
                let x: f64 = rng.random_range(-20.0..20.0);
                let val = s.eval(t, x);
                assert!((0.0..=1.0).contains(&val), "{} emitted {val}", s.description);
            }
        }
    }

    #[test]
    fn deviation_family_is_deterministic_and_anchored() {
        let spec = base_spec();
        let base = FeedbackStrategy::constant(Player::Two, &spec, 0.0);
        let a = deviation_family(&base, 9, 1234, &spec);
        let b = deviation_family(&base, 9, 1234, &spec);
        assert_eq!(a.len(), 9);
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.description, t.description);
            for i in 0..50 {
                let tt = i as f64 / 50.0;
                let xx = -6.0 + 0.25 * i as f64;
                assert_eq!(s.eval(tt, xx).to_bits(), t.eval(tt, xx).to_bits());
            }
        }
        assert_eq!(a[0].eval(0.1, 0.1), -1.0);
        assert_eq!(a[1].eval(0.1, 0.1), 1.0);
        assert_eq!(a[2].eval(0.1, 0.1), 0.0);
    }

    #[test]
    fn bang_bang_depends_only_on_gradient_signs() {
        let spec = base_spec();
        let sol = solve_limit(&spec, &grid(), &tie()).unwrap();
        let mut scaled = sol.clone();
        for z in &mut scaled.zeta1 {
            *z *= 3.7;
        }
        let (u1, _) = bang_bang_pair(&Arc::new(sol), &tie());
        let (u2, _) = bang_bang_pair(&Arc::new(scaled), &tie());
        for i in 0..200 {
            let t = i as f64 / 200.0;
            let x = -8.0 + 16.0 * i as f64 / 200.0;
            assert_eq!(u1.eval(t, x).to_bits(), u2.eval(t, x).to_bits());
        }
    }

    #[test]
    fn table_csv_round_trip() {
        let table = ControlTable::new(
            vec![0.0, 0.5, 1.0],
            vec![-1.0, 0.0, 1.0, 2.0],
            (0..12).map(|i| i as f64 / 11.0).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        table.to_csv(&mut buf).unwrap();
        let parsed = ControlTable::from_csv(&buf[..]).unwrap();
        assert_eq!(parsed, table);
        assert_eq!(parsed.lookup(0.26, 0.9), table.values[4 + 2]);
    }

    #[test]
    fn malformed_table_csv_is_rejected() {
        let missing = "t,x,value\n0,0,0.5\n0,1,0.25\n1,0,0.75\n";
        assert!(ControlTable::from_csv(missing.as_bytes()).is_err());
        let garbled = "t,x,value\n0,zero,0.5\n";
        assert!(ControlTable::from_csv(garbled.as_bytes()).is_err());
    }
}
