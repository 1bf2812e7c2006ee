//! Uniform grids on `[0, 1]`, trapezoid quadrature with partial end cells,
//! and the interpolation helpers shared by the kernel solver, controller
//! quadratures and the transport simulator.

use serde::{Deserialize, Serialize};

/// Uniform grid on `[0, 1]` with at least two nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformGrid {
    points: usize,
}

impl UniformGrid {
    pub fn new(points: usize) -> Self {
        assert!(points >= 2, "uniform grid needs at least two nodes");
        Self { points }
    }

    /// Grid whose spacing is as close as possible to `h` while the nodes
    /// still tile `[0, 1]` exactly.
    pub fn from_spacing(h: f64) -> Self {
        assert!(h > 0.0 && h <= 0.5, "spacing must lie in (0, 0.5]");
        let cells = (1.0 / h).round().max(2.0) as usize;
        Self::new(cells + 1)
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.node(i))
    }

    /// Index of the cell containing `x`, clamped to valid cells.
    pub fn cell_below(&self, x: f64) -> usize {
        let h = self.spacing();
        let i = (x / h).floor();
        (i.max(0.0) as usize).min(self.points - 2)
    }
}

/// Composite trapezoid over uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * (values[0] + values[values.len() - 1]) + interior)
}

/// Trapezoid rule for `∫_a^b f` aligned with the global grid of spacing `h`:
/// full cells between the interior nodes, partial cells at both ends.
///
/// Integration limits that fall between nodes are honored exactly by
/// evaluating the integrand at the limit itself, so the result varies
/// continuously with `a` and `b`.
pub fn integrate_partial(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    const ALIGN_EPS: f64 = 1e-12;
    if b - a <= ALIGN_EPS {
        return 0.0;
    }
    let first = ((a - ALIGN_EPS) / h).ceil() as i64;
    let last = ((b + ALIGN_EPS) / h).floor() as i64;
    if first > last {
        return 0.5 * (f(a) + f(b)) * (b - a);
    }
    let mut total = 0.0;
    let x_first = first as f64 * h;
    if x_first - a > ALIGN_EPS {
        total += 0.5 * (f(a) + f(x_first)) * (x_first - a);
    }
    let mut left = f(x_first);
    for i in first..last {
        let right = f((i + 1) as f64 * h);
        total += 0.5 * (left + right) * h;
        left = right;
    }
    let x_last = last as f64 * h;
    if b - x_last > ALIGN_EPS {
        total += 0.5 * (left + f(b)) * (b - x_last);
    }
    total
}

/// Linear interpolation of uniform samples over `[0, 1]`, clamped at the ends.
pub fn interp1(samples: &[f64], x: f64) -> f64 {
    debug_assert!(samples.len() >= 2);
    let n = samples.len();
    let pos = x.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    samples[i] * (1.0 - w) + samples[i + 1] * w
}

/// Dense scalar field on a uniform `(s, r)` grid over `[0, 1]²`,
/// stored row-major with `r` contiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field2 {
    ns: usize,
    nr: usize,
    data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(ns: usize, nr: usize) -> Self {
        assert!(ns >= 2 && nr >= 2);
        Self {
            ns,
            nr,
            data: vec![0.0; ns * nr],
        }
    }

    pub fn from_fn(ns: usize, nr: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(ns, nr);
        for is in 0..ns {
            let s = is as f64 / (ns - 1) as f64;
            for ir in 0..nr {
                let r = ir as f64 / (nr - 1) as f64;
                field.data[is * nr + ir] = f(s, r);
            }
        }
        field
    }

    pub fn rows(&self) -> usize {
        self.ns
    }

    pub fn cols(&self) -> usize {
        self.nr
    }

    pub fn at(&self, is: usize, ir: usize) -> f64 {
        self.data[is * self.nr + ir]
    }

    pub fn set(&mut self, is: usize, ir: usize, value: f64) {
        self.data[is * self.nr + ir] = value;
    }

    pub fn row(&self, is: usize) -> &[f64] {
        &self.data[is * self.nr..(is + 1) * self.nr]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Linear interpolation along `r` at a grid row.
    pub fn row_interp(&self, is: usize, r: f64) -> f64 {
        interp1(self.row(is), r)
    }

    /// Bilinear interpolation, clamped to the unit square.
    pub fn eval(&self, s: f64, r: f64) -> f64 {
        let ps = s.clamp(0.0, 1.0) * (self.ns - 1) as f64;
        let pr = r.clamp(0.0, 1.0) * (self.nr - 1) as f64;
        let is = (ps.floor() as usize).min(self.ns - 2);
        let ir = (pr.floor() as usize).min(self.nr - 2);
        let ws = ps - is as f64;
        let wr = pr - ir as f64;
        let v00 = self.at(is, ir);
        let v01 = self.at(is, ir + 1);
        let v10 = self.at(is + 1, ir);
        let v11 = self.at(is + 1, ir + 1);
        v00 * (1.0 - ws) * (1.0 - wr)
            + v01 * (1.0 - ws) * wr
            + v10 * ws * (1.0 - wr)
            + v11 * ws * wr
    }

    /// `L²` norm over the unit square (2-D trapezoid of the squared field).
    pub fn l2_norm(&self) -> f64 {
        let hs = 1.0 / (self.ns - 1) as f64;
        let hr = 1.0 / (self.nr - 1) as f64;
        let mut total = 0.0;
        for is in 0..self.ns {
            let ws = if is == 0 || is == self.ns - 1 { 0.5 } else { 1.0 };
            let row = self.row(is);
            let mut line = 0.5 * (row[0] * row[0] + row[self.nr - 1] * row[self.nr - 1]);
            for v in &row[1..self.nr - 1] {
                line += v * v;
            }
            total += ws * line;
        }
        (total * hs * hr).sqrt()
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `L²` norm of uniform samples on `[0, 1]`.
pub fn l2_norm(samples: &[f64]) -> f64 {
    let h = 1.0 / (samples.len() - 1) as f64;
    let squared: Vec<f64> = samples.iter().map(|v| v * v).collect();
    trapezoid(&squared, h).sqrt()
}

pub fn sup_abs(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_matches_linear_exactly() {
        let grid = UniformGrid::new(11);
        let vals: Vec<f64> = grid.nodes().map(|x| 3.0 * x + 1.0).collect();
        let got = trapezoid(&vals, grid.spacing());
        assert!((got - 2.5).abs() < 1e-14);
    }

    #[test]
    fn partial_cells_are_continuous_in_the_limits() {
        let f = |x: f64| x * x;
        let exact = |a: f64, b: f64| (b * b * b - a * a * a) / 3.0;
        let h = 0.1;
        for &(a, b) in &[(0.0, 1.0), (0.03, 0.97), (0.25, 0.35), (0.301, 0.309)] {
            let got = integrate_partial(f, a, b, h);
            assert!((got - exact(a, b)).abs() < 2e-3, "a={a} b={b} got={got}");
        }
        // Aligned and near-aligned limits agree to the shift size.
        let aligned = integrate_partial(f, 0.2, 0.8, h);
        let nudged = integrate_partial(f, 0.2 + 1e-9, 0.8 - 1e-9, h);
        assert!((aligned - nudged).abs() < 1e-8);
    }

    #[test]
    fn degenerate_interval_integrates_to_zero() {
        assert_eq!(integrate_partial(|_| 1.0, 0.4, 0.4, 0.1), 0.0);
        assert_eq!(integrate_partial(|_| 1.0, 0.5, 0.4, 0.1), 0.0);
    }

    #[test]
    fn bilinear_reproduces_bilinear_fields() {
        let field = Field2::from_fn(9, 7, |s, r| 2.0 * s - 3.0 * r + s * r);
        for &(s, r) in &[(0.13, 0.77), (0.0, 1.0), (0.999, 0.001)] {
            let want = 2.0 * s - 3.0 * r + s * r;
            assert!((field.eval(s, r) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_norm_of_constant_is_one() {
        let field = Field2::from_fn(21, 21, |_, _| 1.0);
        assert!((field.l2_norm() - 1.0).abs() < 1e-12);
        assert!((l2_norm(&vec![1.0; 41]) - 1.0).abs() < 1e-12);
    }
}
