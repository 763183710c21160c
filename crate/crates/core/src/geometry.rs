//! Mushroom-shaped billiard domains and their phase-space volumes.
//!
//! A mushroom is the union of a semicircular cap and a tilted trapezoidal
//! stem hanging below it:
//!
//! ```text
//!        ___
//!      /     \        cap:  x^2 + y^2 <= r^2,  y >= 0
//!     |       |
//!      -|   |-        stem: |x| <= w + y*tan_theta,  -h <= y <= 0
//!        | |
//!        ---
//! ```
//!
//! The opening between cap and stem (the "hole") is the segment `y = 0`,
//! `|x| < w`.  A particle in the cap whose angular momentum is large enough
//! can never reach the hole: the chord it travels along always stays at
//! distance `>= |sin(phi)| * r` from the centre, so if `|sin(phi)| >= w/r`
//! the orbit is trapped in the cap forever (while the walls stand still).
//! That trapped set is the integrable component; everything else is chaotic.
//!
//! All volumes here are phase-space volumes of the unit-energy shell
//! (`|v| = 1`), where the velocity direction contributes a factor `2*pi`:
//! `V(D) = 2*pi * area(D)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Which component of the domain a point lies in.
///
/// Points exactly on `y = 0` are reported as [`Region::Cap`]: the hole
/// segment is owned by the cap side so that membership is unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Cap,
    Stem,
    Outside,
}

/// Instantaneous shape parameters of the mushroom.
///
/// Invariants (enforced by [`MushroomShape::new`]):
///
/// * `r > 0`, `0 <= w <= r`, `h >= 0`, `tan_theta >= 0`;
/// * `w >= h * tan_theta`, so the stem keeps a non-negative half-width all
///   the way down to its floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MushroomShape {
    /// Cap radius.
    pub r: f64,
    /// Stem half-width at the hole (`y = 0`).
    pub w: f64,
    /// Stem depth; the floor sits at `y = -h`.
    pub h: f64,
    /// Inward slope of the stem's side walls.
    pub tan_theta: f64,
}

impl MushroomShape {
    /// Validates and builds a shape.
    ///
    /// # Examples
    ///
    /// ```
    /// use mushroom_core::geometry::MushroomShape;
    /// let s = MushroomShape::new(1.0, 0.5, 2.0, 0.1).unwrap();
    /// assert_eq!(s.nu(), 0.5);
    /// assert!(MushroomShape::new(1.0, 1.5, 2.0, 0.1).is_err()); // w > r
    /// ```
    pub fn new(r: f64, w: f64, h: f64, tan_theta: f64) -> Result<Self> {
        let s = MushroomShape { r, w, h, tan_theta };
        s.validate()?;
        Ok(s)
    }

    /// Checks the shape invariants, returning a description of the first
    /// violated one.
    pub fn validate(&self) -> Result<()> {
        let MushroomShape { r, w, h, tan_theta } = *self;
        let fail = |msg: String| Err(Error::InvalidShape(msg));
        if !(r.is_finite() && w.is_finite() && h.is_finite() && tan_theta.is_finite()) {
            return fail(format!("non-finite parameter in {self:?}"));
        }
        if r <= 0.0 {
            return fail(format!("cap radius must be positive, got r = {r}"));
        }
        if !(0.0..=r).contains(&w) {
            return fail(format!("stem half-width must satisfy 0 <= w <= r, got w = {w}, r = {r}"));
        }
        if h < 0.0 {
            return fail(format!("stem depth must be non-negative, got h = {h}"));
        }
        if tan_theta < 0.0 {
            return fail(format!("wall slope must be non-negative, got tan_theta = {tan_theta}"));
        }
        if w < h * tan_theta {
            return fail(format!(
                "stem floor has negative half-width: w = {w} < h * tan_theta = {}",
                h * tan_theta
            ));
        }
        Ok(())
    }

    /// Hole half-width relative to the cap radius, `nu = w / r`.
    #[inline]
    pub fn nu(&self) -> f64 {
        self.w / self.r
    }

    /// Area of the domain: half-disc plus trapezoidal stem.
    ///
    /// # Examples
    ///
    /// ```
    /// use mushroom_core::geometry::MushroomShape;
    /// use std::f64::consts::PI;
    /// // Pure half-disc (no stem).
    /// let s = MushroomShape::new(1.0, 0.0, 0.0, 0.0).unwrap();
    /// assert!((s.area() - PI / 2.0).abs() < 1e-15);
    /// // Rectangular stem: 2 * w * h.
    /// let s = MushroomShape::new(1.0, 0.5, 2.0, 0.0).unwrap();
    /// assert!((s.area() - (PI / 2.0 + 2.0)).abs() < 1e-15);
    /// ```
    pub fn area(&self) -> f64 {
        0.5 * PI * self.r * self.r + 2.0 * self.w * self.h - self.h * self.h * self.tan_theta
    }

    /// Classifies a point.  The segment `y = 0` counts as cap.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> Region {
        if y >= 0.0 {
            if x * x + y * y <= self.r * self.r {
                Region::Cap
            } else {
                Region::Outside
            }
        } else if y >= -self.h && x.abs() <= self.w + y * self.tan_theta {
            Region::Stem
        } else {
            Region::Outside
        }
    }

    /// Phase-space volumes of the unit-energy shell over this shape.
    pub fn volumes(&self) -> PhaseVolumes {
        let v_cap = PI * PI * self.r * self.r;
        let v_stem = 2.0 * PI * (2.0 * self.w * self.h - self.h * self.h * self.tan_theta);
        let v_ell = delta(self.nu()) * v_cap;
        PhaseVolumes {
            v_cap,
            v_stem,
            v_ell,
            v_cha: v_cap + v_stem - v_ell,
        }
    }
}

/// Phase-space volumes of the unit-energy shell, split by component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseVolumes {
    /// Cap volume, `pi^2 r^2`.
    pub v_cap: f64,
    /// Stem volume, `2 pi (2 w h - h^2 tan_theta)`.
    pub v_stem: f64,
    /// Volume of the integrable (trapped) component, `delta(nu) * v_cap`.
    pub v_ell: f64,
    /// Volume of the chaotic component, `v_cap + v_stem - v_ell`.
    pub v_cha: f64,
}

impl PhaseVolumes {
    /// Total volume of the shell, `v_cap + v_stem`.
    #[inline]
    pub fn total(&self) -> f64 {
        self.v_cap + self.v_stem
    }
}

/// Rates of change of the shape parameters, `d/dt (r, w, h)`.
///
/// Signs follow the geometry: a positive `dr` means the cap wall recedes
/// from the domain, positive `dw` means the stem side walls recede, positive
/// `dh` means the stem floor recedes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShapeRates {
    pub dr: f64,
    pub dw: f64,
    pub dh: f64,
}

/// Rates of change of the phase-space volumes induced by [`ShapeRates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeRates {
    pub dv_cap: f64,
    pub dv_stem: f64,
    pub dv_ell: f64,
    pub dv_cha: f64,
}

/// Chain-rules [`ShapeRates`] through the closed-form volumes.
pub fn volume_rates(shape: &MushroomShape, rates: &ShapeRates) -> VolumeRates {
    let nu = shape.nu();
    let d_nu = (rates.dw * shape.r - shape.w * rates.dr) / (shape.r * shape.r);
    let dv_cap = 2.0 * PI * PI * shape.r * rates.dr;
    let dv_stem = 2.0
        * PI
        * (2.0 * rates.dw * shape.h + 2.0 * shape.w * rates.dh
            - 2.0 * shape.h * rates.dh * shape.tan_theta);
    let dv_ell = delta_prime(nu) * d_nu * PI * PI * shape.r * shape.r + delta(nu) * dv_cap;
    VolumeRates {
        dv_cap,
        dv_stem,
        dv_ell,
        dv_cha: dv_cap + dv_stem - dv_ell,
    }
}

/// Fraction of the cap's phase-space volume occupied by the trapped
/// component when the hole half-width ratio is `nu`:
///
/// `delta(nu) = (2/pi) * (acos(nu) - nu * sqrt(1 - nu^2))`.
///
/// Monotone decreasing from `delta(0) = 1` (hole closed, everything trapped)
/// to `delta(1) = 0` (hole as wide as the cap, nothing trapped).
///
/// # Examples
///
/// ```
/// use mushroom_core::geometry::delta;
/// assert!((delta(0.0) - 1.0).abs() < 1e-15);
/// assert_eq!(delta(1.0), 0.0);
/// ```
#[inline]
pub fn delta(nu: f64) -> f64 {
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&nu), "nu out of range: {nu}");
    let nu = nu.clamp(0.0, 1.0);
    (2.0 / PI) * (nu.acos() - nu * (1.0 - nu * nu).sqrt())
}

/// Derivative of [`delta`]: `d delta / d nu = -(4/pi) * sqrt(1 - nu^2)`.
#[inline]
pub fn delta_prime(nu: f64) -> f64 {
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&nu), "nu out of range: {nu}");
    let nu = nu.clamp(0.0, 1.0);
    -(4.0 / PI) * (1.0 - nu * nu).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Monte-Carlo estimate of the component volumes by rejection sampling,
    /// together with one-standard-error bars.  This is the independent oracle
    /// for the closed forms: it only uses the membership predicate and the
    /// defining property of the trapped set (angular momentum at unit speed
    /// at least `w`), never the volume formulas themselves.
    fn mc_volumes(shape: &MushroomShape, n: u64, seed: u64) -> (PhaseVolumes, PhaseVolumes) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x_max, y_lo, y_hi) = (shape.r, -shape.h, shape.r);
        let box_vol = 2.0 * x_max * (y_hi - y_lo) * 2.0 * PI;
        let (mut k_cap, mut k_stem, mut k_ell) = (0u64, 0u64, 0u64);
        for _ in 0..n {
            let x = rng.gen_range(-x_max..x_max);
            let y = rng.gen_range(y_lo..y_hi);
            match shape.contains(x, y) {
                Region::Stem => k_stem += 1,
                Region::Cap => {
                    k_cap += 1;
                    // Unit velocity direction without trig: rejection-sample
                    // a point in the unit disc and normalise.
                    let (ux, uy) = loop {
                        let a = rng.gen_range(-1.0f64..1.0);
                        let b = rng.gen_range(-1.0f64..1.0);
                        let q = a * a + b * b;
                        if q > 1e-12 && q <= 1.0 {
                            let inv = 1.0 / q.sqrt();
                            break (a * inv, b * inv);
                        }
                    };
                    // Trapped iff |angular momentum| = |x*vy - y*vx| >= w.
                    if (x * uy - y * ux).abs() >= shape.w {
                        k_ell += 1;
                    }
                }
                Region::Outside => {}
            }
        }
        let est = |k: u64| box_vol * k as f64 / n as f64;
        let err = |k: u64| {
            let p = k as f64 / n as f64;
            box_vol * (p * (1.0 - p) / n as f64).sqrt()
        };
        let vols = PhaseVolumes {
            v_cap: est(k_cap),
            v_stem: est(k_stem),
            v_ell: est(k_ell),
            v_cha: est(k_cap + k_stem - k_ell),
        };
        let errs = PhaseVolumes {
            v_cap: err(k_cap),
            v_stem: err(k_stem),
            v_ell: err(k_ell),
            v_cha: err(k_cap + k_stem - k_ell),
        };
        (vols, errs)
    }

    #[test]
    fn delta_endpoints() {
        assert!((delta(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(delta(1.0), 0.0);
        assert!((delta_prime(1.0)).abs() < 1e-15);
        assert!((delta_prime(0.0) + 4.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn delta_half_matches_monte_carlo() {
        // Frozen from an independent high-precision evaluation of the same
        // closed form; the Monte-Carlo oracle below re-derives it from the
        // trapping condition alone.
        assert!((delta(0.5) - 0.391002) < 1e-6);

        let shape = MushroomShape::new(1.0, 0.5, 0.0, 0.0).unwrap();
        let (mc, err) = mc_volumes(&shape, 20_000_000, 7);
        let delta_mc = mc.v_ell / (PI * PI);
        let sigma = err.v_ell / (PI * PI);
        assert!(
            (delta(0.5) - delta_mc).abs() < 4.0 * sigma,
            "delta(0.5) = {} vs MC {} +- {}",
            delta(0.5),
            delta_mc,
            sigma
        );
        assert!((delta_mc - 0.3910f64).abs() < 1e-3);
    }

    #[test]
    fn volume_closed_forms_trivial_cases() {
        // No stem: the whole shell is the cap.
        let s = MushroomShape::new(2.0, 0.0, 0.0, 0.0).unwrap();
        let v = s.volumes();
        assert!((v.v_cap - PI * PI * 4.0).abs() < 1e-12);
        assert_eq!(v.v_stem, 0.0);
        // Hole closed: every cap orbit is trapped.
        assert!((v.v_ell - v.v_cap).abs() < 1e-12);

        // Hole fully open (w = r): no trapped component at all.
        let s = MushroomShape::new(1.0, 1.0, 2.0, 0.1).unwrap();
        let v = s.volumes();
        assert_eq!(v.v_ell, 0.0);
        assert!((v.v_cha - (v.v_cap + v.v_stem)).abs() < 1e-12);

        // Untilted stem of half-width w and depth h: plain rectangle.
        let s = MushroomShape::new(1.0, 0.5, 2.0, 0.0).unwrap();
        assert!((s.volumes().v_stem - 2.0 * PI * 2.0).abs() < 1e-12);
    }

    #[test]
    fn volume_closed_forms_match_monte_carlo_snapshot() {
        // Benchmark shape used throughout the test-suite: r = 1, w = 0.3,
        // h = 2, side slope tan(2.3 degrees).
        let tan_theta = 2.3f64.to_radians().tan();
        let shape = MushroomShape::new(1.0, 0.3, 2.0, tan_theta).unwrap();
        let v = shape.volumes();

        // Frozen reference values (independent evaluation of the same
        // integrals at higher working precision).
        assert!((v.v_cap - 9.869604401).abs() < 1e-6);
        assert!((v.v_stem - 6.530387206).abs() < 1e-6);
        assert!((v.v_ell - 6.157030962).abs() < 1e-6);
        assert!((v.v_cha - 10.242960645).abs() < 1e-6);

        // Monte-Carlo oracle agreement: three standard errors and 0.1%.
        let (mc, err) = mc_volumes(&shape, 60_000_000, 11);
        for (label, got, ref_v, sigma) in [
            ("v_cap", v.v_cap, mc.v_cap, err.v_cap),
            ("v_stem", v.v_stem, mc.v_stem, err.v_stem),
            ("v_ell", v.v_ell, mc.v_ell, err.v_ell),
            ("v_cha", v.v_cha, mc.v_cha, err.v_cha),
        ] {
            assert!(
                (got - ref_v).abs() < 3.0 * sigma,
                "{label}: closed {got} vs MC {ref_v} +- {sigma}"
            );
            assert!(
                ((got - ref_v) / got).abs() < 1e-3,
                "{label}: closed {got} vs MC {ref_v} beyond 0.1%"
            );
        }
    }

    #[test]
    fn volumes_are_shell_measure_of_area() {
        let tan_theta = 2.3f64.to_radians().tan();
        for (r, w, h) in [(1.0, 0.3, 2.0), (1.5, 1.1, 0.7), (0.5, 0.1, 1.9)] {
            let s = MushroomShape::new(r, w, h, tan_theta.min(w / h * 0.9)).unwrap();
            let v = s.volumes();
            assert!(
                ((v.v_cap + v.v_stem) - 2.0 * PI * s.area()).abs() < 1e-12 * v.total(),
                "shell volume should be 2*pi*area for {s:?}"
            );
        }
    }

    #[test]
    fn contains_classifies_boundary_and_interior() {
        let s = MushroomShape::new(1.0, 0.3, 2.0, 0.05).unwrap();
        assert_eq!(s.contains(0.0, 0.5), Region::Cap);
        assert_eq!(s.contains(0.0, -0.5), Region::Stem);
        assert_eq!(s.contains(0.9, -0.1), Region::Outside);
        assert_eq!(s.contains(0.0, 1.5), Region::Outside);
        // Points on the hole segment report cap.
        assert_eq!(s.contains(0.0, 0.0), Region::Cap);
        assert_eq!(s.contains(0.29, 0.0), Region::Cap);
        // Under the floor.
        assert_eq!(s.contains(0.0, -2.1), Region::Outside);
        // The side wall leans inward with depth.
        assert_eq!(s.contains(0.29, -0.01), Region::Stem);
        assert_eq!(s.contains(0.29, -1.9), Region::Outside);
    }

    #[test]
    fn shape_validation_rejects_bad_parameters() {
        assert!(MushroomShape::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(MushroomShape::new(1.0, -0.1, 1.0, 0.0).is_err());
        assert!(MushroomShape::new(1.0, 1.2, 1.0, 0.0).is_err());
        assert!(MushroomShape::new(1.0, 0.5, -1.0, 0.0).is_err());
        assert!(MushroomShape::new(1.0, 0.5, 1.0, -0.1).is_err());
        // Floor width would go negative: w < h * tan_theta.
        assert!(MushroomShape::new(1.0, 0.1, 2.0, 0.1).is_err());
        assert!(MushroomShape::new(1.0, f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn volume_rates_match_finite_differences() {
        let tan_theta = 0.08;
        let base = MushroomShape::new(1.2, 0.6, 1.5, tan_theta).unwrap();
        let rates = ShapeRates { dr: 0.3, dw: -0.2, dh: 0.5 };
        let vr = volume_rates(&base, &rates);
        let eps = 1e-6;
        let at = |t: f64| {
            MushroomShape::new(
                base.r + rates.dr * t,
                base.w + rates.dw * t,
                base.h + rates.dh * t,
                tan_theta,
            )
            .unwrap()
            .volumes()
        };
        let (plus, minus) = (at(eps), at(-eps));
        let fd = |p: f64, m: f64| (p - m) / (2.0 * eps);
        assert!((vr.dv_cap - fd(plus.v_cap, minus.v_cap)).abs() < 1e-5);
        assert!((vr.dv_stem - fd(plus.v_stem, minus.v_stem)).abs() < 1e-5);
        assert!((vr.dv_ell - fd(plus.v_ell, minus.v_ell)).abs() < 1e-5);
        assert!((vr.dv_cha - fd(plus.v_cha, minus.v_cha)).abs() < 1e-5);
    }

    /// Valid random shapes for property tests.
    fn arb_shape() -> impl Strategy<Value = MushroomShape> {
        (0.3f64..3.0, 0.05f64..1.0, 0.0f64..2.0, 0.0f64..0.95).prop_map(|(r, wf, hf, tf)| {
            let w = r * wf;
            let h = r * hf;
            let tan_theta = if h > 0.0 { tf * w / h } else { 0.0 };
            MushroomShape::new(r, w, h, tan_theta).expect("constructed shape must be valid")
        })
    }

    proptest! {
        #[test]
        fn prop_volume_identities(shape in arb_shape()) {
            let v = shape.volumes();
            prop_assert!(v.v_cap > 0.0);
            prop_assert!(v.v_stem >= -1e-12);
            prop_assert!((0.0..=v.v_cap * (1.0 + 1e-12)).contains(&v.v_ell));
            prop_assert!(v.v_cha > 0.0);
            prop_assert!(((v.v_cap + v.v_stem) - 2.0 * PI * shape.area()).abs()
                <= 1e-12 * v.total());
        }

        #[test]
        fn prop_delta_monotone_and_bounded(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(delta(lo) >= delta(hi) - 1e-15);
            prop_assert!((0.0..=1.0).contains(&delta(a)));
        }

        #[test]
        fn prop_delta_prime_matches_finite_difference(nu in 0.001f64..0.999) {
            let eps = 1e-6;
            let fd = (delta((nu + eps).min(1.0)) - delta((nu - eps).max(0.0))) / (2.0 * eps);
            prop_assert!((delta_prime(nu) - fd).abs() < 1e-6,
                "delta'({nu}) = {} vs FD {}", delta_prime(nu), fd);
        }

        #[test]
        fn prop_contains_respects_hole_ownership(shape in arb_shape(), xf in -1.0f64..1.0) {
            // Any point on y = 0 inside the cap radius reports Cap.
            let x = xf * shape.r;
            prop_assert_eq!(shape.contains(x, 0.0), Region::Cap);
        }
    }
}
