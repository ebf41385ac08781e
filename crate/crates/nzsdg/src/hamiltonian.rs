//! Selectors, smoothings, truncation, and the Hamiltonian family.
//!
//! The drift is affine in the (transformed) controls, so each player's
//! Hamiltonian `H_i = z * sigma^{-1} * (f + h(u) + l(v))` is maximized over
//! the player's own control by jumping to an endpoint of the effective
//! interval according to the sign of the gradient `z`; at `z = 0` the tie
//! value applies. The smoothed selectors replace the jump with a ramp of
//! slope `n` (player 1 on `(-1/n, 0)`, player 2 on `(-1/n, 1/n)`, matching
//! the base-set construction), and the level-`n` generator additionally
//! truncates every `z`-factor to `[-n, n]`, which makes the approximating
//! system Lipschitz.

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, Player, ProblemSpec};

/// Control values applied when a selector gradient is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiePolicy {
    /// Player 1 value at zero gradient, in `h(U)`.
    pub eps1: f64,
    /// Player 2 value at zero gradient, in `l(V)`.
    pub eps2: f64,
}

impl TiePolicy {
    /// The spec's resolved tie values (configured or defaulted).
    pub fn for_spec(spec: &ProblemSpec) -> Self {
        let (eps1, eps2) = spec.tie_values();
        TiePolicy { eps1, eps2 }
    }

    pub fn value(&self, player: Player) -> f64 {
        match player {
            Player::One => self.eps1,
            Player::Two => self.eps2,
        }
    }
}

/// Smoothing level `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingLevel(u32);

impl SmoothingLevel {
    pub fn new(n: u32) -> Option<Self> {
        if n >= 1 {
            Some(SmoothingLevel(n))
        } else {
            None
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

/// Bang-bang selector: endpoint of the player's effective interval by the
/// sign of `grad`, tie value at exactly zero.
///
/// Comparisons with zero are exact floating-point comparisons; the smoothing
/// levels, not epsilon-fuzzing, are the regularization mechanism here.
pub fn bang_selector(player: Player, grad: f64, tie: &TiePolicy, spec: &ProblemSpec) -> f64 {
    let [lo, hi] = spec.effective_interval(player);
    if grad > 0.0 {
        hi
    } else if grad < 0.0 {
        lo
    } else {
        tie.value(player)
    }
}

/// Lipschitz ramp approximation of [`bang_selector`] at level `n`.
///
/// Saturated branches return the interval endpoints exactly, so outside the
/// ramp band this agrees bit-for-bit with the bang selector.
pub fn smoothed_selector(player: Player, grad: f64, n: SmoothingLevel, spec: &ProblemSpec) -> f64 {
    let nf = n.as_f64();
    let [lo, hi] = spec.effective_interval(player);
    match player {
        Player::One => {
            if grad >= 0.0 {
                hi
            } else if grad <= -1.0 / nf {
                lo
            } else {
                lo + (hi - lo) * (nf * grad + 1.0)
            }
        }
        Player::Two => {
            if grad >= 1.0 / nf {
                hi
            } else if grad <= -1.0 / nf {
                lo
            } else {
                // base ramp n*q on (-1/n, 1/n), mapped affinely onto [lo, hi]
                lo + (hi - lo) * (nf * grad + 1.0) * 0.5
            }
        }
    }
}

/// Truncation `(x ∧ n) ∨ (-n)`.
#[inline]
pub fn truncate(x: f64, n: SmoothingLevel) -> f64 {
    let nf = n.as_f64();
    x.min(nf).max(-nf)
}

/// Hamiltonian `H_i(t,x,z,u,v) = z * sigma^{-1}(t,x) * (f(t,x) + h(u) + l(v))`
/// for raw admissible controls. Both players share the same functional form;
/// the `z` argument carries the player's own gradient.
pub fn hamiltonian(
    spec: &ProblemSpec,
    _player: Player,
    t: f64,
    x: f64,
    z: f64,
    u: f64,
    v: f64,
) -> Result<f64, ModelError> {
    let gamma = spec.drift(t, x, u, v)?;
    Ok(z / spec.diffusion_value(t, x) * gamma)
}

/// Maximized Hamiltonian `H_i^*`: both selectors applied at their own
/// gradients, then the drift contracted against the player's `z`.
///
/// For `z1 != 0` the result does not depend on `eps1` (and symmetrically for
/// player 2): the tie value only ever multiplies a zero gradient.
pub fn hamiltonian_star(
    spec: &ProblemSpec,
    player: Player,
    t: f64,
    x: f64,
    z1: f64,
    z2: f64,
    tie: &TiePolicy,
) -> f64 {
    let u_eff = bang_selector(Player::One, z1, tie, spec);
    let v_eff = bang_selector(Player::Two, z2, tie, spec);
    let gamma = spec.drift_effective(t, x, u_eff, v_eff);
    let z = match player {
        Player::One => z1,
        Player::Two => z2,
    };
    z / spec.diffusion_value(t, x) * gamma
}

/// Level-`n` generator evaluated on a spatial gradient `w = z_own / sigma`
/// and the other player's raw gradient. Shared by [`hamiltonian_smoothed`]
/// and the smoothed solver, which feeds an upwinded `w`.
pub(crate) fn smoothed_generator_w(
    spec: &ProblemSpec,
    player: Player,
    t: f64,
    x: f64,
    w: f64,
    z_other: f64,
    n: SmoothingLevel,
) -> f64 {
    let f = spec.drift_base.eval(t, x);
    let [lo, hi] = spec.effective_interval(player);
    // w * (own bang selector): already Lipschitz in w, no ramp needed.
    let own_product = if w > 0.0 {
        w * hi
    } else if w < 0.0 {
        w * lo
    } else {
        0.0
    };
    let cross = smoothed_selector(player.other(), z_other, n, spec);
    truncate(w, n) * truncate(f, n) + truncate(own_product, n) + truncate(w, n) * cross
}

/// Truncated, smoothed Hamiltonian `H_i^n`. The inverse diffusion is folded
/// into each `z`-factor; the cross selector keeps its raw gradient argument.
pub fn hamiltonian_smoothed(
    spec: &ProblemSpec,
    player: Player,
    t: f64,
    x: f64,
    z1: f64,
    z2: f64,
    n: SmoothingLevel,
) -> f64 {
    let s = spec.diffusion_value(t, x);
    match player {
        Player::One => smoothed_generator_w(spec, player, t, x, z1 / s, z2, n),
        Player::Two => smoothed_generator_w(spec, player, t, x, z2 / s, z1, n),
    }
}

/// Pointwise maximization gaps `(H1^* - H1(p, u, v̄(q)), H2^* - H2(q, ū(p), v))`.
///
/// Both components are nonnegative for every admissible `(u, v)`.
pub fn isaacs_gap(
    spec: &ProblemSpec,
    t: f64,
    x: f64,
    p: f64,
    q: f64,
    u: f64,
    v: f64,
    tie: &TiePolicy,
) -> Result<(f64, f64), ModelError> {
    if !(spec.u_interval[0] <= u && u <= spec.u_interval[1]) {
        return Err(ModelError::ControlOutOfInterval {
            player: 1,
            value: u,
            lo: spec.u_interval[0],
            hi: spec.u_interval[1],
        });
    }
    if !(spec.v_interval[0] <= v && v <= spec.v_interval[1]) {
        return Err(ModelError::ControlOutOfInterval {
            player: 2,
            value: v,
            lo: spec.v_interval[0],
            hi: spec.v_interval[1],
        });
    }
    let sinv = 1.0 / spec.diffusion_value(t, x);
    let f = spec.drift_base.eval(t, x);
    let ub = bang_selector(Player::One, p, tie, spec);
    let vb = bang_selector(Player::Two, q, tie, spec);
    let hu = spec.transform_h.eval(u);
    let lv = spec.transform_l.eval(v);

    let h1_star = p * sinv * (f + ub + vb);
    let h1_dev = p * sinv * (f + hu + vb);
    let h2_star = q * sinv * (f + ub + vb);
    let h2_dev = q * sinv * (f + ub + lv);
    Ok((h1_star - h1_dev, h2_star - h2_dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftBase, Diffusion, Terminal, Transform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn n(level: u32) -> SmoothingLevel {
        SmoothingLevel::new(level).unwrap()
    }

    #[test]
    fn bang_selector_base_branches() {
        let spec = base_spec();
        let tie = TiePolicy { eps1: 0.3, eps2: 0.0 };
        assert_eq!(bang_selector(Player::One, 0.5, &tie, &spec), 1.0);
        assert_eq!(bang_selector(Player::One, 0.0, &tie, &spec), 0.3);
        assert_eq!(bang_selector(Player::Two, -2.0, &tie, &spec), -1.0);
    }

    #[test]
    fn smoothed_selector_base_branches() {
        let spec = base_spec();
        assert_eq!(smoothed_selector(Player::One, -0.05, n(10), &spec), 0.5);
        assert_eq!(smoothed_selector(Player::Two, 0.0, n(7), &spec), 0.0);
        assert_eq!(smoothed_selector(Player::One, 0.2, n(3), &spec), 1.0);
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(7.0, n(5)), 5.0);
        assert_eq!(truncate(-9.0, n(5)), -5.0);
        assert_eq!(truncate(0.4, n(1)), 0.4);
    }

    #[test]
    fn hamiltonian_examples() {
        let spec = base_spec();
        assert_eq!(
            hamiltonian(&spec, Player::One, 0.0, 0.0, 1.0, 1.0, 1.0).unwrap(),
            2.0
        );
        assert_eq!(
            hamiltonian(&spec, Player::Two, 0.5, 3.0, 0.0, 0.7, -0.2).unwrap(),
            0.0
        );
        let mut spec = base_spec();
        spec.drift_base = DriftBase::Constant { value: 0.5 };
        assert_eq!(
            hamiltonian(&spec, Player::One, 0.0, 0.0, 2.0, 0.0, -1.0).unwrap(),
            -1.0
        );
    }

    #[test]
    fn hamiltonian_star_examples() {
        let spec = base_spec();
        let tie = TiePolicy { eps1: 0.0, eps2: 0.0 };
        assert_eq!(
            hamiltonian_star(&spec, Player::One, 0.0, 0.0, 2.0, -3.0, &tie),
            0.0
        );
        assert_eq!(
            hamiltonian_star(&spec, Player::One, 0.0, 0.0, 0.0, 0.0, &tie),
            0.0
        );
        let mut spec = base_spec();
        spec.drift_base = DriftBase::Constant { value: 0.5 };
        assert_eq!(
            hamiltonian_star(&spec, Player::One, 0.0, 0.0, 1.0, 1.0, &tie),
            2.5
        );
    }

    #[test]
    fn hamiltonian_star_is_tie_independent_for_nonzero_gradients() {
        let spec = base_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let z1: f64 = rng.random_range(-10.0..10.0);
            let z2: f64 = rng.random_range(-10.0..10.0);
            if z1 == 0.0 || z2 == 0.0 {
                continue;
            }
            let a = hamiltonian_star(
                &spec,
                Player::One,
                0.3,
                1.0,
                z1,
                z2,
                &TiePolicy { eps1: 0.0, eps2: 0.0 },
            );
            let b = hamiltonian_star(
                &spec,
                Player::One,
                0.3,
                1.0,
                z1,
                z2,
                &TiePolicy { eps1: 0.9, eps2: -0.4 },
            );
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn hamiltonian_smoothed_examples() {
        let spec = base_spec();
        assert_eq!(
            hamiltonian_smoothed(&spec, Player::One, 0.0, 0.0, 1.0, 1.0, n(4)),
            2.0
        );
        assert_eq!(
            hamiltonian_smoothed(&spec, Player::One, 0.0, 0.0, 0.0, 3.0, n(4)),
            0.0
        );
        assert_eq!(
            hamiltonian_smoothed(&spec, Player::One, 0.0, 0.0, 10.0, 10.0, n(2)),
            4.0
        );
    }

    #[test]
    fn isaacs_gap_examples() {
        let spec = base_spec();
        let tie = TiePolicy { eps1: 0.0, eps2: 0.0 };
        let (g1, _) = isaacs_gap(&spec, 0.0, 0.0, 1.0, 1.0, 0.3, 0.5, &tie).unwrap();
        assert!((g1 - 0.7).abs() < 1e-15);

        let (g1, _) = isaacs_gap(&spec, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, &tie).unwrap();
        assert_eq!(g1, 0.0);

        let (g1, _) = isaacs_gap(&spec, 0.0, 0.0, -1.0, 1.0, 0.0, 0.5, &tie).unwrap();
        assert_eq!(g1, 0.0);
    }

    #[test]
    fn selector_ranges() {
        let mut spec = base_spec();
        spec.transform_h = Transform::Affine {
            scale: 2.0,
            shift: 1.0,
        };
        spec.transform_l = Transform::ScaledTanh {
            scale: 1.0,
            rate: 1.0,
        };
        let tie = TiePolicy::for_spec(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5000 {
            let g: f64 = rng.random_range(-20.0..20.0);
            let level = n(rng.random_range(1..100));
            for player in [Player::One, Player::Two] {
                let [lo, hi] = spec.effective_interval(player);
                let b = bang_selector(player, g, &tie, &spec);
                assert!(b == lo || b == hi || b == tie.value(player));
                let s = smoothed_selector(player, g, level, &spec);
                assert!((lo..=hi).contains(&s), "{s} outside [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn smoothed_equals_bang_beyond_the_ramp_band() {
        let spec = base_spec();
        let tie = TiePolicy::for_spec(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5000 {
            let g: f64 = rng.random_range(-5.0..5.0);
            if g == 0.0 {
                continue;
            }
            let level = n((1.0 / g.abs()).floor() as u32 + 1 + rng.random_range(0..20));
            for player in [Player::One, Player::Two] {
                let s = smoothed_selector(player, g, level, &spec);
                let b = bang_selector(player, g, &tie, &spec);
                assert_eq!(s.to_bits(), b.to_bits(), "player {player:?} grad {g}");
            }
        }
    }

    #[test]
    fn smoothed_selector_is_lipschitz() {
        let mut spec = base_spec();
        spec.transform_l = Transform::Affine {
            scale: 3.0,
            shift: -1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5000 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            let level = n(rng.random_range(1..64));
            for player in [Player::One, Player::Two] {
                let [lo, hi] = spec.effective_interval(player);
                let sa = smoothed_selector(player, a, level, &spec);
                let sb = smoothed_selector(player, b, level, &spec);
                assert!(
                    (sa - sb).abs() <= level.as_f64() * (hi - lo) * (a - b).abs() + 1e-12,
                    "Lipschitz violated: n={} |Δsel|={} |Δg|={}",
                    level.get(),
                    (sa - sb).abs(),
                    (a - b).abs()
                );
            }
        }
    }

    #[test]
    fn truncation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5000 {
            let x: f64 = rng.random_range(-100.0..100.0);
            let level = n(rng.random_range(1..50));
            let t = truncate(x, level);
            assert!(t.abs() <= level.as_f64());
            assert!(t.abs() <= x.abs());
            if x.abs() <= level.as_f64() {
                assert_eq!(t, x);
            }
        }
    }

    #[test]
    fn key_algebraic_identities() {
        let mut spec = base_spec();
        spec.transform_h = Transform::Affine {
            scale: 2.0,
            shift: 0.5,
        };
        let tie = TiePolicy::for_spec(&spec);
        let [lo, hi] = spec.effective_interval(Player::One);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..2000 {
            let p: f64 = rng.random_range(-10.0..10.0);
            let lhs = p * bang_selector(Player::One, p, &tie, &spec);
            let rhs = p.max(0.0) * (hi - lo) + p * lo;
            assert!((lhs - rhs).abs() < 1e-12);
        }
        // Base sets: q * v̄(q) = |q|.
        let spec = base_spec();
        let tie = TiePolicy::for_spec(&spec);
        for _ in 0..2000 {
            let q: f64 = rng.random_range(-10.0..10.0);
            assert_eq!(q * bang_selector(Player::Two, q, &tie, &spec), q.abs());
        }
    }

    #[test]
    fn isaacs_gaps_nonnegative_on_random_tuples() {
        let mut spec = base_spec();
        spec.drift_base = DriftBase::Sinusoidal {
            amplitude: 1.0,
            frequency: 2.0,
            offset: 0.2,
        };
        spec.diffusion = Diffusion::BoundedElliptic {
            base: 1.0,
            oscillation: 0.25,
        };
        let tie = TiePolicy::for_spec(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20_000 {
            let t: f64 = rng.random_range(0.0..spec.horizon);
            let x: f64 = rng.random_range(-5.0..5.0);
            let p: f64 = rng.random_range(-10.0..10.0);
            let q: f64 = rng.random_range(-10.0..10.0);
            let u: f64 = rng.random_range(spec.u_interval[0]..spec.u_interval[1]);
            let v: f64 = rng.random_range(spec.v_interval[0]..spec.v_interval[1]);
            let (g1, g2) = isaacs_gap(&spec, t, x, p, q, u, v, &tie).unwrap();
            assert!(g1 >= -1e-12, "gap1 {g1}");
            assert!(g2 >= -1e-12, "gap2 {g2}");
        }
    }
}
