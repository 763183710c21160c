//! Periodic wall-motion protocols.
//!
//! A protocol prescribes how the mushroom's shape parameters `(r, w, h)`
//! evolve over one period `T`.  Everything downstream — the event-driven
//! simulator and the transport-theory engine — sees protocols only through
//! the [`Protocol`] trait, so new drive laws plug in without touching either.
//!
//! Two families are built in:
//!
//! * [`RectangleCycle`] — `(w, h)` traverses an axis-aligned rectangle while
//!   the cap radius stays fixed.  Each side of the rectangle is covered with
//!   a smooth ramp (quadratic ease-in / ease-out), so wall velocities are
//!   continuous and vanish at the corners.
//! * [`SinusoidalCycle`] — `r` and `h` breathe sinusoidally while the hole
//!   ratio `nu = w / r` dips from `1` down to `1 - c` once per period.
//!
//! [`FrozenProtocol`] wraps a static shape for testing against the
//! fixed-wall limit.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{MushroomShape, ShapeRates};

/// Relative tolerance used when comparing times against breakpoints.
const BREAKPOINT_REL_TOL: f64 = 1e-12;

/// Grid resolution for scanning one period (shape validation and release
/// searches).
const PERIOD_SCAN_POINTS: usize = 4096;

/// A periodic wall-motion law.
///
/// Implementations must be pure functions of time: the same `t` always maps
/// to the same shape, and `shape_at(t + period()) == shape_at(t)`.
pub trait Protocol: Send + Sync {
    /// Cycle length `T`.
    fn period(&self) -> f64;

    /// Shape parameters at time `t` (any real `t`; periodic extension).
    fn shape_at(&self, t: f64) -> MushroomShape;

    /// Wall-parameter velocities `(dr/dt, dw/dt, dh/dt)` at time `t`.
    fn rates_at(&self, t: f64) -> ShapeRates;

    /// Shape and rates together.  Implementations whose shape and rates
    /// share expensive sub-expressions should override this; the collision
    /// solver calls it once per probe.
    fn sample(&self, t: f64) -> (MushroomShape, ShapeRates) {
        (self.shape_at(t), self.rates_at(t))
    }

    /// Upper bounds on `|dr/dt|`, `|dw/dt|`, `|dh/dt|` over the whole cycle.
    /// Used as Lipschitz constants by the collision solver.
    fn max_rates(&self) -> ShapeRates;

    /// Sorted times in `[0, T]` (both endpoints included) where the rates
    /// are not smooth.  Root brackets and quadrature grids never straddle
    /// these.
    fn breakpoints(&self) -> Vec<f64>;

    /// Hole ratio `nu(t) = w(t) / r(t)`.
    fn nu_at(&self, t: f64) -> f64 {
        self.shape_at(t).nu()
    }

    /// Time derivative of the hole ratio.
    fn nu_rate(&self, t: f64) -> f64 {
        let (s, d) = self.sample(t);
        (d.dw * s.r - s.w * d.dr) / (s.r * s.r)
    }

    /// First breakpoint strictly after `t`, in the periodic extension.
    fn next_breakpoint_after(&self, t: f64) -> f64 {
        let period = self.period();
        let tol = period * BREAKPOINT_REL_TOL;
        let phase = t.rem_euclid(period);
        let base = t - phase;
        for &b in &self.breakpoints() {
            if b > phase + tol {
                return base + b;
            }
        }
        // Wrapped around: first interior breakpoint (or T itself) next cycle.
        let first = self
            .breakpoints()
            .into_iter()
            .find(|&b| b > tol)
            .unwrap_or(period);
        base + period + first
    }

    /// First time after a capture at `t_in` when the hole ratio climbs back
    /// to its capture value, i.e. the earliest `t > t_in` with
    /// `nu(t) >= nu(t_in)`.
    ///
    /// An orbit trapped in the integrable cap component at hole ratio
    /// `nu(t_in)` stays trapped exactly while `nu < nu(t_in)`, so this is
    /// the moment it rejoins the chaotic component.  Found by a grid scan
    /// over one period followed by bisection; periodicity guarantees a
    /// result no later than `t_in + T`.
    fn release_time(&self, t_in: f64) -> f64 {
        let period = self.period();
        let nu_c = self.nu_at(t_in);
        let step = period / PERIOD_SCAN_POINTS as f64;
        let mut lo = t_in;
        for k in 1..=PERIOD_SCAN_POINTS {
            let hi = if k == PERIOD_SCAN_POINTS { t_in + period } else { t_in + step * k as f64 };
            if self.nu_at(hi) >= nu_c {
                // Bisect [lo, hi] down to machine-level time resolution.
                let (mut lo, mut hi) = (lo, hi);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.nu_at(mid) >= nu_c {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo < period * 1e-14 {
                        break;
                    }
                }
                return hi;
            }
            lo = hi;
        }
        // nu never recovered on the grid; by periodicity it does at t_in + T.
        t_in + period
    }
}

/// Validates that every shape over one period is admissible.  Samples a
/// dense grid plus all breakpoints; the grid is fine enough for the smooth
/// protocols used here.
fn validate_over_period(p: &dyn Protocol) -> Result<()> {
    let period = p.period();
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidProtocol(format!("period must be positive and finite, got {period}")));
    }
    let mut times: Vec<f64> = (0..=PERIOD_SCAN_POINTS)
        .map(|k| period * k as f64 / PERIOD_SCAN_POINTS as f64)
        .collect();
    times.extend(p.breakpoints());
    for t in times {
        p.shape_at(t)
            .validate()
            .map_err(|e| Error::InvalidProtocol(format!("invalid shape at t = {t}: {e}")))?;
    }
    Ok(())
}

/// Orientation of the `(w, h)` rectangle loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(w1,h1) -> (w0,h1) -> (w0,h0) -> (w1,h0) -> (w1,h1)`:
    /// the hole narrows while the stem is deep.
    Anticlockwise,
    /// The reverse loop: the hole narrows while the stem is shallow.
    Clockwise,
}

/// `(w, h)` loop around an axis-aligned rectangle at fixed cap radius.
///
/// The loop starts (t = 0) at the corner `(w1, h1)` and spends `T/4` on each
/// side.  Along a side the moving parameter follows a quadratic ease-in /
/// ease-out ramp: it accelerates uniformly for the first half of the side
/// and decelerates for the second, so the parameter velocity is continuous
/// everywhere and zero at the corners.  The peak velocity on a side of
/// length `L` is `8 L / T`.
#[derive(Debug, Clone, Copy)]
pub struct RectangleCycle {
    r: f64,
    w0: f64,
    w1: f64,
    h0: f64,
    h1: f64,
    tan_theta: f64,
    direction: Direction,
    period: f64,
}

impl RectangleCycle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        r: f64,
        w0: f64,
        w1: f64,
        h0: f64,
        h1: f64,
        tan_theta: f64,
        direction: Direction,
        period: f64,
    ) -> Result<Self> {
        if !(w0 < w1) {
            return Err(Error::InvalidProtocol(format!(
                "rectangle needs w0 < w1, got w0 = {w0}, w1 = {w1}"
            )));
        }
        if !(h0 < h1) {
            return Err(Error::InvalidProtocol(format!(
                "rectangle needs h0 < h1, got h0 = {h0}, h1 = {h1}"
            )));
        }
        let cycle = RectangleCycle { r, w0, w1, h0, h1, tan_theta, direction, period };
        // Corner shapes bound all intermediate ones (w and h move monotonely
        // along each side), but run the generic scan anyway: it is cheap and
        // also covers the corner cases exactly.
        validate_over_period(&cycle)?;
        Ok(cycle)
    }

    /// Corners of the loop in traversal order, starting at `(w1, h1)`.
    fn corners(&self) -> [(f64, f64); 4] {
        match self.direction {
            Direction::Anticlockwise => [
                (self.w1, self.h1),
                (self.w0, self.h1),
                (self.w0, self.h0),
                (self.w1, self.h0),
            ],
            Direction::Clockwise => [
                (self.w1, self.h1),
                (self.w1, self.h0),
                (self.w0, self.h0),
                (self.w0, self.h1),
            ],
        }
    }

    /// Ease-in / ease-out ramp on `[0, 1]`: position `s` and velocity
    /// `ds/dx`, with `s(0) = 0`, `s(1) = 1`, `s'(0) = s'(1) = 0`.
    fn ramp(x: f64) -> (f64, f64) {
        if x < 0.5 {
            (2.0 * x * x, 4.0 * x)
        } else {
            let y = 1.0 - x;
            (1.0 - 2.0 * y * y, 4.0 * y)
        }
    }
}

impl Protocol for RectangleCycle {
    fn period(&self) -> f64 {
        self.period
    }

    fn shape_at(&self, t: f64) -> MushroomShape {
        let (shape, _) = self.sample(t);
        shape
    }

    fn rates_at(&self, t: f64) -> ShapeRates {
        let (_, rates) = self.sample(t);
        rates
    }

    fn sample(&self, t: f64) -> (MushroomShape, ShapeRates) {
        let tau = self.period / 4.0;
        let phase = t.rem_euclid(self.period);
        let leg = ((phase / tau) as usize).min(3);
        let x = (phase - leg as f64 * tau) / tau;
        let corners = self.corners();
        let (wa, ha) = corners[leg];
        let (wb, hb) = corners[(leg + 1) % 4];
        let (s, ds) = Self::ramp(x);
        let shape = MushroomShape {
            r: self.r,
            w: wa + (wb - wa) * s,
            h: ha + (hb - ha) * s,
            tan_theta: self.tan_theta,
        };
        let rates = ShapeRates {
            dr: 0.0,
            dw: (wb - wa) * ds / tau,
            dh: (hb - ha) * ds / tau,
        };
        (shape, rates)
    }

    fn max_rates(&self) -> ShapeRates {
        ShapeRates {
            dr: 0.0,
            dw: 8.0 * (self.w1 - self.w0) / self.period,
            dh: 8.0 * (self.h1 - self.h0) / self.period,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        // Corners at multiples of T/4, ramp kinks halfway along each side.
        (0..=8).map(|k| self.period * k as f64 / 8.0).collect()
    }
}

/// Sinusoidal breathing of cap radius and stem depth with a once-per-period
/// dip of the hole ratio.
///
/// With `s` the time scale and `T = 2 pi s`:
///
/// * `r(t) = r0 + a sin(t / s)`
/// * `h(t) = h0 + b sin(t / s)`
/// * `nu(t) = 1 - c (1 - cos(t / s)) / 2`, so `nu` falls from `1` at `t = 0`
///   to `1 - c` at `t = pi s` and recovers symmetrically;
/// * `w(t) = r(t) nu(t)`.
///
/// The hole starts fully open (`nu = 1`, no trapped component), narrows
/// during the first half-period — that is when chaotic orbits can be
/// captured — and reopens during the second half.
#[derive(Debug, Clone, Copy)]
pub struct SinusoidalCycle {
    r0: f64,
    h0: f64,
    a: f64,
    b: f64,
    c: f64,
    tan_theta: f64,
    time_scale: f64,
}

impl SinusoidalCycle {
    pub fn new(r0: f64, h0: f64, a: f64, b: f64, c: f64, tan_theta: f64, time_scale: f64) -> Result<Self> {
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(Error::InvalidProtocol(format!(
                "time_scale must be positive and finite, got {time_scale}"
            )));
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidProtocol(format!(
                "hole-dip amplitude must satisfy 0 <= c <= 1, got c = {c}"
            )));
        }
        if r0 - a.abs() <= 0.0 {
            return Err(Error::InvalidProtocol(format!(
                "cap radius reaches zero: r0 = {r0}, |a| = {}",
                a.abs()
            )));
        }
        if h0 - b.abs() < 0.0 {
            return Err(Error::InvalidProtocol(format!(
                "stem depth goes negative: h0 = {h0}, |b| = {}",
                b.abs()
            )));
        }
        let cycle = SinusoidalCycle { r0, h0, a, b, c, tan_theta, time_scale };
        validate_over_period(&cycle)?;
        Ok(cycle)
    }
}

impl Protocol for SinusoidalCycle {
    fn period(&self) -> f64 {
        2.0 * PI * self.time_scale
    }

    fn shape_at(&self, t: f64) -> MushroomShape {
        let (shape, _) = self.sample(t);
        shape
    }

    fn rates_at(&self, t: f64) -> ShapeRates {
        let (_, rates) = self.sample(t);
        rates
    }

    fn sample(&self, t: f64) -> (MushroomShape, ShapeRates) {
        let s = self.time_scale;
        let (sin, cos) = (t / s).sin_cos();
        let r = self.r0 + self.a * sin;
        let h = self.h0 + self.b * sin;
        let nu = 1.0 - 0.5 * self.c * (1.0 - cos);
        let dr = self.a / s * cos;
        let dh = self.b / s * cos;
        let d_nu = -0.5 * self.c / s * sin;
        let shape = MushroomShape { r, w: r * nu, h, tan_theta: self.tan_theta };
        let rates = ShapeRates { dr, dw: dr * nu + r * d_nu, dh };
        (shape, rates)
    }

    fn max_rates(&self) -> ShapeRates {
        let s = self.time_scale;
        let r_max = self.r0 + self.a.abs();
        ShapeRates {
            dr: self.a.abs() / s,
            dw: self.a.abs() / s + 0.5 * self.c / s * r_max,
            dh: self.b.abs() / s,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        // The drive is smooth; the half-period point is listed so that
        // interval scans land exactly on the hole-ratio minimum.
        let t = self.period();
        vec![0.0, 0.5 * t, t]
    }
}

/// Static walls: the shape never changes.  The period is an arbitrary
/// bookkeeping unit for the trait's periodic interface.
#[derive(Debug, Clone, Copy)]
pub struct FrozenProtocol {
    shape: MushroomShape,
    period: f64,
}

impl FrozenProtocol {
    pub fn new(shape: MushroomShape) -> Result<Self> {
        shape.validate()?;
        Ok(FrozenProtocol { shape, period: 1.0 })
    }
}

impl Protocol for FrozenProtocol {
    fn period(&self) -> f64 {
        self.period
    }

    fn shape_at(&self, _t: f64) -> MushroomShape {
        self.shape
    }

    fn rates_at(&self, _t: f64) -> ShapeRates {
        ShapeRates::default()
    }

    fn max_rates(&self) -> ShapeRates {
        ShapeRates::default()
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.period]
    }
}

/// Serializable protocol description, the on-disk configuration format.
///
/// ```json
/// {"kind": "rectangle", "r": 1.0, "w0": 0.3, "w1": 1.0, "h0": 2.0,
///  "h1": 6.0, "tan_theta": 0.0402, "direction": "anticlockwise"}
/// ```
///
/// ```json
/// {"kind": "sinusoidal", "r0": 1.0, "h0": 1.0, "a": 0.5, "b": -0.5,
///  "c": 0.8, "tan_theta": 0.1111, "time_scale": 1.0}
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolSpec {
    Rectangle {
        r: f64,
        w0: f64,
        w1: f64,
        h0: f64,
        h1: f64,
        tan_theta: f64,
        direction: Direction,
        /// Cycle length.  When omitted, a period is chosen so that the peak
        /// wall speed is `1e-3` of the reference particle speed, keeping the
        /// drive deep in the slow regime.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
    Sinusoidal {
        r0: f64,
        h0: f64,
        a: f64,
        b: f64,
        c: f64,
        tan_theta: f64,
        time_scale: f64,
    },
}

impl ProtocolSpec {
    /// Builds the protocol.  `reference_speed` is the particle speed used to
    /// pick a default rectangle period (peak wall speed `1e-3` of it); it is
    /// ignored when the period is given explicitly and by the sinusoidal
    /// family.
    pub fn build(&self, reference_speed: f64) -> Result<Box<dyn Protocol>> {
        match *self {
            ProtocolSpec::Rectangle { r, w0, w1, h0, h1, tan_theta, direction, period } => {
                let period = match period {
                    Some(p) => p,
                    None => {
                        if !(reference_speed.is_finite() && reference_speed > 0.0) {
                            return Err(Error::InvalidProtocol(format!(
                                "cannot derive a default period from reference speed {reference_speed}"
                            )));
                        }
                        // Peak parameter speed is 8 * side / T; cap it at
                        // 1e-3 * reference_speed.
                        8.0 * (w1 - w0).max(h1 - h0) * 1e3 / reference_speed
                    }
                };
                Ok(Box::new(RectangleCycle::new(r, w0, w1, h0, h1, tan_theta, direction, period)?))
            }
            ProtocolSpec::Sinusoidal { r0, h0, a, b, c, tan_theta, time_scale } => {
                Ok(Box::new(SinusoidalCycle::new(r0, h0, a, b, c, tan_theta, time_scale)?))
            }
        }
    }
}
