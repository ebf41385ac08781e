//! Game instance description and validation.
//!
//! A [`ProblemSpec`] holds every coefficient of the game: horizon, start
//! point, drift base `f`, terminal payoffs `g1`/`g2`, diffusion `sigma`,
//! raw control intervals `U`/`V`, the monotone transforms `h`/`l` applied to
//! the controls inside the drift, and the tie values used when a gradient is
//! exactly zero. Coefficients come from a closed descriptor catalogue rather
//! than arbitrary callables so that the growth and ellipticity constants the
//! theory relies on can be computed exactly from the descriptor parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn number(self) -> u8 {
        match self {
            Player::One => 1,
            Player::Two => 2,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

/// Drift base term `f(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftBase {
    /// `f = value`.
    Constant { value: f64 },
    /// `f = slope * x + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// `f = amplitude * sin(frequency * x) + offset`.
    Sinusoidal {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
}

impl DriftBase {
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            DriftBase::Constant { value } => value,
            DriftBase::Affine { slope, intercept } => slope * x + intercept,
            DriftBase::Sinusoidal {
                amplitude,
                frequency,
                offset,
            } => amplitude * (frequency * x).sin() + offset,
        }
    }

    /// Smallest catalogue constant `C` with `|f(t,x)| <= C (1 + |x|)`.
    pub fn linear_growth_constant(&self) -> f64 {
        match *self {
            DriftBase::Constant { value } => value.abs(),
            DriftBase::Affine { slope, intercept } => slope.abs().max(intercept.abs()),
            DriftBase::Sinusoidal {
                amplitude, offset, ..
            } => amplitude.abs() + offset.abs(),
        }
    }
}

/// How a terminal payoff behaves in `x`, as far as the oracles care.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    StrictlyIncreasing,
    NonDecreasing,
    NotMonotone,
}

/// Terminal payoff descriptor `g(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    /// `g = slope * x + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// `g = max(x - strike, 0)`.
    Ramp { strike: f64 },
    /// `g = |x|^exponent`, optionally multiplied by `sign(x)`.
    Power { exponent: f64, signed: bool },
    /// `g = amplitude / (1 + exp(-rate * (x - center)))`.
    Sigmoid {
        amplitude: f64,
        rate: f64,
        center: f64,
    },
}

impl Terminal {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Terminal::Affine { slope, intercept } => slope * x + intercept,
            Terminal::Ramp { strike } => (x - strike).max(0.0),
            Terminal::Power { exponent, signed } => {
                let p = x.abs().powf(exponent);
                if signed {
                    p * x.signum()
                } else {
                    p
                }
            }
            Terminal::Sigmoid {
                amplitude,
                rate,
                center,
            } => amplitude / (1.0 + (-rate * (x - center)).exp()),
        }
    }

    /// Constants `(C, gamma)` with `|g(x)| <= C (1 + |x|^gamma)`.
    pub fn polynomial_growth(&self) -> (f64, f64) {
        match *self {
            Terminal::Affine { slope, intercept } => (slope.abs().max(intercept.abs()), 1.0),
            Terminal::Ramp { strike } => (strike.abs().max(1.0), 1.0),
            Terminal::Power { exponent, .. } => (1.0, exponent.max(1.0)),
            Terminal::Sigmoid { amplitude, .. } => (amplitude.abs(), 1.0),
        }
    }

    pub fn monotonicity(&self) -> Monotonicity {
        match *self {
            Terminal::Affine { slope, .. } => {
                if slope > 0.0 {
                    Monotonicity::StrictlyIncreasing
                } else if slope == 0.0 {
                    Monotonicity::NonDecreasing
                } else {
                    Monotonicity::NotMonotone
                }
            }
            Terminal::Ramp { .. } => Monotonicity::NonDecreasing,
            Terminal::Power { signed, .. } => {
                if signed {
                    Monotonicity::StrictlyIncreasing
                } else {
                    Monotonicity::NotMonotone
                }
            }
            Terminal::Sigmoid {
                amplitude, rate, ..
            } => {
                if amplitude * rate > 0.0 {
                    Monotonicity::StrictlyIncreasing
                } else if amplitude == 0.0 {
                    Monotonicity::NonDecreasing
                } else {
                    Monotonicity::NotMonotone
                }
            }
        }
    }
}

/// Diffusion coefficient descriptor `sigma(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diffusion {
    /// `sigma = 1`.
    Identity,
    /// `sigma = base + oscillation * sin(x)`; uniformly elliptic when
    /// `base - |oscillation| > 0`.
    BoundedElliptic { base: f64, oscillation: f64 },
}

impl Diffusion {
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            Diffusion::Identity => 1.0,
            Diffusion::BoundedElliptic { base, oscillation } => base + oscillation * x.sin(),
        }
    }

    pub fn sigma_min(&self) -> f64 {
        match *self {
            Diffusion::Identity => 1.0,
            Diffusion::BoundedElliptic { base, oscillation } => base - oscillation.abs(),
        }
    }

    pub fn sigma_max(&self) -> f64 {
        match *self {
            Diffusion::Identity => 1.0,
            Diffusion::BoundedElliptic { base, oscillation } => base + oscillation.abs(),
        }
    }

    /// Largest `Upsilon` with `Upsilon <= sigma^2 <= Upsilon^{-1}`.
    pub fn ellipticity(&self) -> f64 {
        let lo = self.sigma_min();
        let hi = self.sigma_max();
        (lo * lo).min(1.0 / (hi * hi))
    }
}

/// Monotone continuous control transform (`h` or `l`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `scale * u + shift`.
    Affine { scale: f64, shift: f64 },
    /// `scale * tanh(rate * u)`.
    ScaledTanh { scale: f64, rate: f64 },
}

impl Transform {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::Affine { scale, shift } => scale * u + shift,
            Transform::ScaledTanh { scale, rate } => scale * (rate * u).tanh(),
        }
    }

    pub fn is_strictly_monotone(&self) -> bool {
        match *self {
            Transform::Identity => true,
            Transform::Affine { scale, .. } => scale != 0.0,
            Transform::ScaledTanh { scale, rate } => scale * rate != 0.0,
        }
    }

    /// Image of `[lo, hi]`, returned in ascending order.
    pub fn image(&self, interval: [f64; 2]) -> [f64; 2] {
        let a = self.eval(interval[0]);
        let b = self.eval(interval[1]);
        if a <= b {
            [a, b]
        } else {
            [b, a]
        }
    }
}

/// A complete game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Time horizon `T > 0`.
    pub horizon: f64,
    /// Start point `x0`.
    pub start_x: f64,
    pub drift_base: DriftBase,
    pub terminal_1: Terminal,
    pub terminal_2: Terminal,
    pub diffusion: Diffusion,
    /// Raw control interval of player 1, `[u_lo, u_hi]`.
    pub u_interval: [f64; 2],
    /// Raw control interval of player 2, `[v_lo, v_hi]`.
    pub v_interval: [f64; 2],
    pub transform_h: Transform,
    pub transform_l: Transform,
    /// Player 1 selector value at gradient exactly zero. Defaults to the
    /// midpoint of `h(U)`, clamped to 0 when `0` lies in `h(U)`.
    #[serde(default)]
    pub tie_eps1: Option<f64>,
    /// Player 2 analogue over `l(V)`.
    #[serde(default)]
    pub tie_eps2: Option<f64>,
}

/// Constants derivable from the descriptor parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `C` such that the full drift satisfies `|Gamma(t,x,u,v)| <= C (1 + |x|)`.
    pub drift_linear_growth: f64,
    /// `C` such that `|g1(x)| + |g2(x)| <= C (1 + |x|^gamma)`.
    pub terminal_growth_c: f64,
    /// The `gamma` for the bound above.
    pub terminal_growth_gamma: f64,
    /// Ellipticity constant `Upsilon` (1 for the identity diffusion).
    pub ellipticity: f64,
    /// `h(U)`, ascending.
    pub effective_u: [f64; 2],
    /// `l(V)`, ascending.
    pub effective_v: [f64; 2],
}

/// Outcome of [`ProblemSpec::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<String>,
    pub derived: DerivedConstants,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("player {player} control {value} outside admissible interval [{lo}, {hi}]")]
    ControlOutOfInterval {
        player: u8,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

impl ProblemSpec {
    /// Checks every catalogue invariant and reports the derived constants.
    ///
    /// All failures are report entries, never errors, so a caller can show
    /// the full list at once.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        if !(self.horizon > 0.0) {
            violations.push("horizon must be positive".to_string());
        }
        if !(self.u_interval[0] < self.u_interval[1]) {
            violations.push("u_interval must satisfy u_lo < u_hi".to_string());
        }
        if !(self.v_interval[0] < self.v_interval[1]) {
            violations.push("v_interval must satisfy v_lo < v_hi".to_string());
        }
        if !self.transform_h.is_strictly_monotone() {
            violations.push("transform_h must be strictly monotone".to_string());
        }
        if !self.transform_l.is_strictly_monotone() {
            violations.push("transform_l must be strictly monotone".to_string());
        }
        if self.diffusion.sigma_min() <= 0.0 {
            violations.push("ellipticity lower bound <= 0".to_string());
        }
        for (name, term) in [("terminal_1", &self.terminal_1), ("terminal_2", &self.terminal_2)] {
            if let Terminal::Power { exponent, .. } = term {
                if !(*exponent >= 1.0) {
                    violations.push(format!("{name} power exponent must be >= 1"));
                }
            }
        }

        let (effective_u, effective_v) = self.effective_control_intervals();
        let (tie1, tie2) = self.tie_values();
        if !(effective_u[0] <= tie1 && tie1 <= effective_u[1]) {
            violations.push("tie_eps1 must lie in the effective U-interval h(U)".to_string());
        }
        if !(effective_v[0] <= tie2 && tie2 <= effective_v[1]) {
            violations.push("tie_eps2 must lie in the effective V-interval l(V)".to_string());
        }

        let (c1, g1) = self.terminal_1.polynomial_growth();
        let (c2, g2) = self.terminal_2.polynomial_growth();
        let derived = DerivedConstants {
            drift_linear_growth: self.drift_base.linear_growth_constant()
                + effective_u[0].abs().max(effective_u[1].abs())
                + effective_v[0].abs().max(effective_v[1].abs()),
            terminal_growth_c: 2.0 * (c1 + c2),
            terminal_growth_gamma: g1.max(g2),
            ellipticity: self.diffusion.ellipticity(),
            effective_u,
            effective_v,
        };

        ValidationReport {
            ok: violations.is_empty(),
            violations,
            derived,
        }
    }

    /// Full drift `Gamma(t,x,u,v) = f(t,x) + h(u) + l(v)` for raw controls.
    pub fn drift(&self, t: f64, x: f64, u: f64, v: f64) -> Result<f64, ModelError> {
        if !(self.u_interval[0] <= u && u <= self.u_interval[1]) {
            return Err(ModelError::ControlOutOfInterval {
                player: 1,
                value: u,
                lo: self.u_interval[0],
                hi: self.u_interval[1],
            });
        }
        if !(self.v_interval[0] <= v && v <= self.v_interval[1]) {
            return Err(ModelError::ControlOutOfInterval {
                player: 2,
                value: v,
                lo: self.v_interval[0],
                hi: self.v_interval[1],
            });
        }
        Ok(self.drift_effective(t, x, self.transform_h.eval(u), self.transform_l.eval(v)))
    }

    /// Drift for controls already expressed in the effective intervals
    /// `h(U)` and `l(V)` (what feedback strategies emit).
    #[inline]
    pub fn drift_effective(&self, t: f64, x: f64, u_eff: f64, v_eff: f64) -> f64 {
        self.drift_base.eval(t, x) + u_eff + v_eff
    }

    pub fn terminal(&self, player: Player, x: f64) -> f64 {
        match player {
            Player::One => self.terminal_1.eval(x),
            Player::Two => self.terminal_2.eval(x),
        }
    }

    #[inline]
    pub fn diffusion_value(&self, t: f64, x: f64) -> f64 {
        self.diffusion.eval(t, x)
    }

    /// `(h(U), l(V))`, each ascending.
    pub fn effective_control_intervals(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.transform_h.image(self.u_interval),
            self.transform_l.image(self.v_interval),
        )
    }

    pub fn effective_interval(&self, player: Player) -> [f64; 2] {
        match player {
            Player::One => self.transform_h.image(self.u_interval),
            Player::Two => self.transform_l.image(self.v_interval),
        }
    }

    /// Resolved tie values `(eps1, eps2)`.
    pub fn tie_values(&self) -> (f64, f64) {
        let default_for = |iv: [f64; 2]| {
            if iv[0] <= 0.0 && 0.0 <= iv[1] {
                0.0
            } else {
                0.5 * (iv[0] + iv[1])
            }
        };
        let (u, v) = self.effective_control_intervals();
        (
            self.tie_eps1.unwrap_or_else(|| default_for(u)),
            self.tie_eps2.unwrap_or_else(|| default_for(v)),
        )
    }

    /// Short human-readable tag for reports.
    pub fn describe(&self) -> String {
        fn term(t: &Terminal) -> String {
            match *t {
                Terminal::Affine { slope, intercept } => format!("affine({slope},{intercept})"),
                Terminal::Ramp { strike } => format!("ramp(K={strike})"),
                Terminal::Power { exponent, signed } => {
                    format!("power({exponent},signed={signed})")
                }
                Terminal::Sigmoid { amplitude, .. } => format!("sigmoid(A={amplitude})"),
            }
        }
        let f = match self.drift_base {
            DriftBase::Constant { value } => format!("const({value})"),
            DriftBase::Affine { slope, intercept } => format!("affine({slope},{intercept})"),
            DriftBase::Sinusoidal { amplitude, .. } => format!("sin(A={amplitude})"),
        };
        let sigma = match self.diffusion {
            Diffusion::Identity => "id".to_string(),
            Diffusion::BoundedElliptic { base, oscillation } => {
                format!("{base}+{oscillation}sin")
            }
        };
        format!(
            "g1={}, g2={}, f={}, sigma={}, T={}",
            term(&self.terminal_1),
            term(&self.terminal_2),
            f,
            sigma,
            self.horizon
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn base_setting_validates() {
        let report = base_spec().validate();
        assert!(report.ok, "violations: {:?}", report.violations);
        assert_eq!(report.derived.effective_u, [0.0, 1.0]);
        assert_eq!(report.derived.effective_v, [-1.0, 1.0]);
        assert_eq!(report.derived.ellipticity, 1.0);
        assert_eq!(report.derived.drift_linear_growth, 2.0);
    }

    #[test]
    fn zero_horizon_is_flagged() {
        let mut spec = base_spec();
        spec.horizon = 0.0;
        let report = spec.validate();
        assert!(!report.ok);
        assert!(report
            .violations
            .iter()
            .any(|v| v == "horizon must be positive"));
    }

    #[test]
    fn degenerate_ellipticity_is_flagged() {
        let mut spec = base_spec();
        spec.diffusion = Diffusion::BoundedElliptic {
            base: 1.0,
            oscillation: 1.5,
        };
        let report = spec.validate();
        assert!(!report.ok);
        assert!(report
            .violations
            .iter()
            .any(|v| v == "ellipticity lower bound <= 0"));
    }

    #[test]
    fn drift_examples() {
        let mut spec = base_spec();
        spec.drift_base = DriftBase::Constant { value: 0.5 };
        assert_eq!(spec.drift(0.3, 2.0, 1.0, -1.0).unwrap(), 0.5);

        let spec = base_spec();
        assert_eq!(spec.drift(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);

        let mut spec = base_spec();
        spec.drift_base = DriftBase::Affine {
            slope: 1.0,
            intercept: 0.0,
        };
        spec.transform_l = Transform::Affine {
            scale: 2.0,
            shift: 0.0,
        };
        assert_eq!(spec.drift(0.0, 1.0, 1.0, 1.0).unwrap(), 4.0);
    }

    #[test]
    fn drift_rejects_inadmissible_controls() {
        let spec = base_spec();
        assert!(spec.drift(0.0, 0.0, 1.5, 0.0).is_err());
        assert!(spec.drift(0.0, 0.0, 0.5, -2.0).is_err());
    }

    #[test]
    fn terminal_examples() {
        let spec = base_spec();
        assert_eq!(spec.terminal(Player::One, 2.0), 2.0);

        let mut spec = base_spec();
        spec.terminal_2 = Terminal::Ramp { strike: 1.0 };
        assert_eq!(spec.terminal(Player::Two, 0.5), 0.0);

        let mut spec = base_spec();
        spec.terminal_1 = Terminal::Power {
            exponent: 2.0,
            signed: false,
        };
        assert_eq!(spec.terminal(Player::One, -3.0), 9.0);
    }

    #[test]
    fn diffusion_examples() {
        let spec = base_spec();
        assert_eq!(spec.diffusion_value(0.2, 17.0), 1.0);

        let mut spec = base_spec();
        spec.diffusion = Diffusion::BoundedElliptic {
            base: 1.0,
            oscillation: 0.25,
        };
        assert_eq!(spec.diffusion_value(0.0, 0.0), 1.0);
        assert!((spec.diffusion_value(0.0, std::f64::consts::FRAC_PI_2) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn effective_interval_examples() {
        let spec = base_spec();
        let (u, v) = spec.effective_control_intervals();
        assert_eq!(u, [0.0, 1.0]);
        assert_eq!(v, [-1.0, 1.0]);

        let mut spec = base_spec();
        spec.transform_h = Transform::Affine {
            scale: 2.0,
            shift: 1.0,
        };
        assert_eq!(spec.effective_interval(Player::One), [1.0, 3.0]);

        let mut spec = base_spec();
        spec.transform_l = Transform::ScaledTanh {
            scale: 1.0,
            rate: 1.0,
        };
        let v = spec.effective_interval(Player::Two);
        assert!((v[0] - (-0.7615941559557649)).abs() < 1e-15);
        assert!((v[1] - 0.7615941559557649).abs() < 1e-15);
    }

    #[test]
    fn effective_intervals_are_endpoint_images() {
        // Monotone decreasing affine transform swaps the endpoints.
        let mut spec = base_spec();
        spec.transform_h = Transform::Affine {
            scale: -1.0,
            shift: 0.0,
        };
        assert_eq!(spec.effective_interval(Player::One), [-1.0, 0.0]);
    }

    #[test]
    fn drift_growth_bound_holds_on_random_samples() {
        let specs = [
            {
                let mut s = base_spec();
                s.drift_base = DriftBase::Affine {
                    slope: -0.7,
                    intercept: 0.3,
                };
                s
            },
            {
                let mut s = base_spec();
                s.drift_base = DriftBase::Sinusoidal {
                    amplitude: 2.0,
                    frequency: 3.0,
                    offset: -0.5,
                };
                s.transform_h = Transform::Affine {
                    scale: 2.0,
                    shift: -1.0,
                };
                s
            },
        ];
        for spec in specs {
            let report = spec.validate();
            assert!(report.ok);
            let c = report.derived.drift_linear_growth;
            for i in 0..2000 {
                let x = -20.0 + 40.0 * (i as f64 / 1999.0);
                let t = spec.horizon * (i as f64 % 17.0) / 17.0;
                let u = spec.u_interval[0]
                    + (spec.u_interval[1] - spec.u_interval[0]) * ((i % 11) as f64 / 10.0);
                let v = spec.v_interval[0]
                    + (spec.v_interval[1] - spec.v_interval[0]) * ((i % 7) as f64 / 6.0);
                let g = spec.drift(t, x, u, v).unwrap();
                assert!(
                    g.abs() <= c * (1.0 + x.abs()) + 1e-12,
                    "drift {g} exceeds {c}(1+|{x}|)"
                );
            }
        }
    }

    #[test]
    fn diffusion_stays_within_ellipticity_band_on_lattice() {
        let mut spec = base_spec();
        spec.diffusion = Diffusion::BoundedElliptic {
            base: 1.0,
            oscillation: 0.25,
        };
        let report = spec.validate();
        let upsilon = report.derived.ellipticity;
        for i in 0..100 {
            for j in 0..100 {
                let t = spec.horizon * i as f64 / 99.0;
                let x = -10.0 + 20.0 * j as f64 / 99.0;
                let s = spec.diffusion_value(t, x);
                assert!(s >= upsilon.sqrt() - 1e-12);
                assert!(s <= (1.0 / upsilon).sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn default_ties_clamp_to_zero_when_interval_contains_it() {
        let mut spec = base_spec();
        spec.tie_eps1 = None;
        spec.tie_eps2 = None;
        assert_eq!(spec.tie_values(), (0.0, 0.0));

        spec.transform_h = Transform::Affine {
            scale: 1.0,
            shift: 2.0,
        };
        // h(U) = [2, 3] does not contain 0: midpoint.
        assert_eq!(spec.tie_values().0, 2.5);
    }
}
