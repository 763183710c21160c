//! Composite-Simpson quadrature on piecewise-uniform grids.
//!
//! The transport integrands are smooth except at protocol breakpoints (ramp
//! kinks, window edges), so grids here are built per smooth segment: a
//! [`PiecewiseGrid`] covers `[a, b]`, split at the given interior points,
//! with an even number of uniform steps in every segment.  Simpson's rule
//! then converges at full fourth order, and doubling the node budget is a
//! cheap error estimate (the tests pin it below `1e-8`).

use crate::error::{Error, Result};

/// Composite Simpson value of uniformly sampled data (`n = values.len() - 1`
/// steps of width `h`, `n` even).
fn simpson_slice(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n >= 2 && n % 2 == 0);
    let mut acc = values[0] + values[n];
    let mut k = 1;
    while k < n {
        acc += 4.0 * values[k];
        if k + 1 < n {
            acc += 2.0 * values[k + 1];
        }
        k += 2;
    }
    acc * h / 3.0
}

/// Running integral at every node of uniformly sampled data, Simpson-grade:
/// even nodes come from composite pairs, odd nodes from the quadratic
/// through the surrounding triple.
fn cumulative_slice(values: &[f64], h: f64, out: &mut Vec<f64>) {
    let n = values.len() - 1;
    debug_assert!(n >= 2 && n % 2 == 0);
    let base = *out.last().expect("cumulative_slice needs a seeded start");
    let mut even = base;
    let mut k = 0;
    while k + 2 <= n {
        out.push(even + h / 12.0 * (5.0 * values[k] + 8.0 * values[k + 1] - values[k + 2]));
        even += h / 3.0 * (values[k] + 4.0 * values[k + 1] + values[k + 2]);
        out.push(even);
        k += 2;
    }
}

/// Composite Simpson integral of `f` over `[a, b]` with `n` uniform steps
/// (`n` even).  Convenience wrapper over a single-segment grid.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> Result<f64> {
    let grid = PiecewiseGrid::new(a, b, &[], n)?;
    let values = grid.sample(f)?;
    Ok(grid.integrate(&values))
}

/// Quadrature grid over `[a, b]`, uniform within each segment between
/// consecutive split points, with an even step count per segment.
#[derive(Debug, Clone)]
pub struct PiecewiseGrid {
    nodes: Vec<f64>,
    /// Node index where each segment starts; one trailing entry closes the
    /// last segment, so segment `s` spans `nodes[bounds[s]..=bounds[s+1]]`.
    bounds: Vec<usize>,
}

impl PiecewiseGrid {
    /// Builds a grid over `[a, b]` split at the interior points of `splits`
    /// (values outside `(a, b)` are ignored, duplicates merged), with about
    /// `n_total` steps distributed over the segments in proportion to their
    /// length (at least two, rounded up to even, per segment).
    pub fn new(a: f64, b: f64, splits: &[f64], n_total: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Quadrature(format!("bad interval [{a}, {b}]")));
        }
        if n_total == 0 {
            return Err(Error::Quadrature("step budget must be positive".into()));
        }
        let span = b - a;
        let tol = span * 1e-12;
        let mut cuts: Vec<f64> = splits
            .iter()
            .copied()
            .filter(|x| x.is_finite() && *x > a + tol && *x < b - tol)
            .collect();
        cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite cuts"));
        cuts.dedup_by(|x, y| (*x - *y).abs() <= tol);

        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(a);
        edges.extend(cuts);
        edges.push(b);

        let mut nodes = Vec::new();
        let mut bounds = Vec::with_capacity(edges.len());
        bounds.push(0);
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let len = hi - lo;
            let want = (n_total as f64 * len / span).ceil() as usize;
            let steps = want.max(2).next_multiple_of(2);
            let h = len / steps as f64;
            let first = if nodes.is_empty() { 0 } else { 1 };
            for k in first..steps {
                nodes.push(lo + h * k as f64);
            }
            nodes.push(hi);
            bounds.push(nodes.len() - 1);
        }
        Ok(PiecewiseGrid { nodes, bounds })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().expect("grid is never empty")
    }

    /// Evaluates `f` at every node, rejecting non-finite values.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Result<Vec<f64>> {
        let values: Vec<f64> = self.nodes.iter().map(|&t| f(t)).collect();
        for (&t, &v) in self.nodes.iter().zip(&values) {
            if !v.is_finite() {
                return Err(Error::Quadrature(format!("integrand not finite at t = {t}: {v}")));
            }
        }
        Ok(values)
    }

    /// Composite Simpson integral of node-sampled values over the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.nodes.len(), "value/node mismatch");
        self.segments()
            .map(|(lo, hi)| {
                let h = (self.nodes[hi] - self.nodes[lo]) / (hi - lo) as f64;
                simpson_slice(&values[lo..=hi], h)
            })
            .sum()
    }

    /// Running integral at every node.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.nodes.len(), "value/node mismatch");
        let mut out = Vec::with_capacity(self.nodes.len());
        out.push(0.0);
        for (lo, hi) in self.segments() {
            let h = (self.nodes[hi] - self.nodes[lo]) / (hi - lo) as f64;
            cumulative_slice(&values[lo..=hi], h, &mut out);
        }
        out
    }

    fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bounds.windows(2).map(|p| (p[0], p[1]))
    }

    /// Segment index containing node cell `k` (the cell `[nodes[k],
    /// nodes[k+1]]`): the segment whose start is the rightmost at or before
    /// `k`.
    fn segment_of_cell(&self, k: usize) -> usize {
        match self.bounds.binary_search(&k) {
            Ok(s) => s.min(self.bounds.len() - 2),
            Err(i) => i - 1,
        }
    }
}

/// A sampled integrand together with its running integral, supporting
/// evaluation of the integral at arbitrary interior points (local quadratic
/// reconstruction of the integrand, so the off-node error is `O(h^3)`).
#[derive(Debug, Clone)]
pub struct CumulativeIntegral {
    grid: PiecewiseGrid,
    values: Vec<f64>,
    cum: Vec<f64>,
}

impl CumulativeIntegral {
    pub fn new<F: Fn(f64) -> f64>(grid: PiecewiseGrid, f: F) -> Result<Self> {
        let values = grid.sample(f)?;
        let cum = grid.cumulative(&values);
        Ok(CumulativeIntegral { grid, values, cum })
    }

    pub fn grid(&self) -> &PiecewiseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Running integral at the grid nodes.
    pub fn at_nodes(&self) -> &[f64] {
        &self.cum
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().expect("grid is never empty")
    }

    /// Running integral at an arbitrary point of the covered interval
    /// (clamped to it).
    pub fn at(&self, t: f64) -> f64 {
        let nodes = self.grid.nodes();
        let t = t.clamp(nodes[0], *nodes.last().expect("non-empty"));
        // Cell k with nodes[k] <= t (rightmost).
        let k = match nodes.binary_search_by(|x| x.partial_cmp(&t).expect("finite nodes")) {
            Ok(i) => return self.cum[i],
            Err(i) => i - 1,
        };
        let seg = self.grid.segment_of_cell(k);
        let (lo, hi) = (self.grid.bounds[seg], self.grid.bounds[seg + 1]);
        let h = (nodes[hi] - nodes[lo]) / (hi - lo) as f64;
        // Quadratic through the three nodes around the cell, kept inside the
        // segment so breakpoint kinks are never straddled.
        let c = k.clamp(lo + 1, hi - 1);
        let (fm, f0, fp) = (self.values[c - 1], self.values[c], self.values[c + 1]);
        let antider = |u: f64| {
            f0 * u + 0.25 * (fp - fm) * u * u + (fp - 2.0 * f0 + fm) * u * u * u / 6.0
        };
        let u_t = (t - nodes[c]) / h;
        let u_k = k as f64 - c as f64;
        self.cum[k] + h * (antider(u_t) - antider(u_k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 2).unwrap();
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-14, "got {v}");
    }

    #[test]
    fn simpson_converges_at_fourth_order() {
        let exact = 2.0;
        let coarse = (simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 8).unwrap() - exact).abs();
        let fine = (simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 16).unwrap() - exact).abs();
        assert!(coarse / fine > 12.0, "ratio {}", coarse / fine);
        let v = simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 2000).unwrap();
        assert!((v - exact).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn grid_splits_recover_full_accuracy_at_kinks() {
        // |x| over [-1, 1]: a split at the kink makes the result exact.
        let grid = PiecewiseGrid::new(-1.0, 1.0, &[0.0], 100).unwrap();
        let vals = grid.sample(|x| x.abs()).unwrap();
        assert!((grid.integrate(&vals) - 1.0).abs() < 1e-15);
        // Without the split Simpson limps along at low order.
        let bad = simpson(|x: f64| x.abs(), -1.0, 1.0, 102).unwrap();
        assert!((bad - 1.0).abs() > 1e-8);
    }

    #[test]
    fn grid_ignores_out_of_range_and_duplicate_splits() {
        let grid = PiecewiseGrid::new(0.0, 1.0, &[-0.5, 0.25, 0.25, 2.0, 0.75], 40).unwrap();
        assert_eq!(grid.bounds.len() - 1, 3, "two interior splits -> three segments");
        let vals = grid.sample(|x| x * x).unwrap();
        assert!((grid.integrate(&vals) - 1.0 / 3.0).abs() < 1e-12);
        // Nodes are strictly increasing and hit the boundaries exactly.
        assert_eq!(grid.start(), 0.0);
        assert_eq!(grid.end(), 1.0);
        assert!(grid.nodes().windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn cumulative_matches_antiderivative_at_and_off_nodes() {
        let grid = PiecewiseGrid::new(0.0, 3.0, &[1.0], 2000).unwrap();
        let ci = CumulativeIntegral::new(grid, |x| x.cos()).unwrap();
        for (k, &t) in ci.grid().nodes().iter().enumerate() {
            assert!(
                (ci.at_nodes()[k] - t.sin()).abs() < 1e-12,
                "node {k} at {t}: {} vs {}",
                ci.at_nodes()[k],
                t.sin()
            );
        }
        for t in [0.0003, 0.41237, 0.99999, 1.0, 1.00001, 2.2345678, 3.0] {
            assert!((ci.at(t) - t.sin()).abs() < 1e-11, "off-node at {t}");
        }
        assert!((ci.total() - 3.0f64.sin()).abs() < 1e-12);
        // Clamping outside the covered interval.
        assert_eq!(ci.at(-1.0), 0.0);
        assert!((ci.at(10.0) - ci.total()).abs() < 1e-15);
    }

    #[test]
    fn doubling_the_budget_is_stable() {
        let f = |x: f64| (x.sin() + 0.3 * (3.0 * x).cos()).exp();
        let a = simpson(f, 0.0, 2.0, 5_000).unwrap();
        let b = simpson(f, 0.0, 2.0, 10_000).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrands_are_rejected() {
        let err = simpson(|x| 1.0 / x, 0.0, 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::Quadrature(_)));
        assert!(PiecewiseGrid::new(1.0, 1.0, &[], 10).is_err());
        assert!(PiecewiseGrid::new(0.0, f64::NAN, &[], 10).is_err());
        assert!(PiecewiseGrid::new(0.0, 1.0, &[], 0).is_err());
    }
}
