//! Two-branch feedback-gain kernel on the triangle `0 <= s <= q <= 1`,
//! solved by successive approximation of the coupled integral equations.
//!
//! The kernel splits along the line `q - s = tau(1)`: below it (branch 1)
//! the equation involves only the coupling term, above it (branch 2) the
//! recirculation gain enters through the delayed-time inverse, both in the
//! integrands and in the integration limits. Branch 2 is solved after
//! branch 1 has converged, reading the frozen branch-1 values.

use crate::coefficients::{CoefficientSet, DelayFunction, DelayedTimeMap, Region};
use crate::grid::{integrate_partial, UniformGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("spacing {0} outside (0, 0.05]")]
    InvalidSpacing(f64),
    #[error("fixed-point residual {residual} still above {tolerance} after {iterations} sweeps")]
    NoConvergence {
        residual: f64,
        tolerance: f64,
        iterations: usize,
    },
    #[error("kernel geometry violated: {0}")]
    GeometryError(String),
    #[error("slope bound sup|tau'| = {0} >= 1, bound formula degenerate")]
    DegenerateSlope(f64),
    #[error("single-branch kernel: delay lies in the large-delay region")]
    SingleBranch,
}

/// Solver knobs. The defaults match the solver contract: tolerance `1e-8`,
/// at most 200 sweeps, undamped iteration with a 0.5 fallback.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelConfig {
    pub spacing: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            spacing: 0.025,
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

impl KernelConfig {
    pub fn with_spacing(spacing: f64) -> Self {
        Self {
            spacing,
            ..Self::default()
        }
    }
}

/// Kernel branch by point location relative to the line `q - s = tau(1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelBranch {
    One,
    Two,
}

/// Scalar field on the triangle `0 <= s <= q <= 1`, stored on the full
/// square with the sub-diagonal entries unused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangularField {
    n: usize,
    values: Vec<f64>,
}

impl TriangularField {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= j);
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i <= j);
        self.values[i * self.n + j] = value;
    }

    /// Bilinear interpolation restricted to the triangle: full cells use all
    /// four corners, diagonal cells interpolate linearly on the upper
    /// triangle. Queries are clamped onto the triangle.
    pub fn eval(&self, s: f64, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let s = s.clamp(0.0, q);
        let scale = (self.n - 1) as f64;
        let ps = s * scale;
        let pq = q * scale;
        let i = (ps.floor() as usize).min(self.n - 2);
        let j = (pq.floor() as usize).min(self.n - 2);
        let u = ps - i as f64;
        let v = pq - j as f64;
        if i < j {
            let v00 = self.at(i, j);
            let v01 = self.at(i, j + 1);
            let v10 = self.at(i + 1, j);
            let v11 = self.at(i + 1, j + 1);
            v00 * (1.0 - u) * (1.0 - v)
                + v01 * (1.0 - u) * v
                + v10 * u * (1.0 - v)
                + v11 * u * v
        } else {
            // Diagonal cell: the triangle (i,i)-(i,i+1)-(i+1,i+1) holds the
            // query since s <= q.
            let u = u.min(v);
            self.at(i, i) * (1.0 - v) + self.at(i + 1, i + 1) * u + self.at(i, i + 1) * (v - u)
        }
    }

    pub fn sup_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in i..self.n {
                m = m.max(self.at(i, j).abs());
            }
        }
        m
    }
}

/// Converged kernel with branch mask, iteration diagnostics and residual
/// history.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelGrid {
    field: TriangularField,
    grid: UniformGrid,
    tau_at_one: f64,
    region: Region,
    iterations_branch1: usize,
    iterations_branch2: usize,
    residual: f64,
    residual_history_branch1: Vec<f64>,
    residual_history_branch2: Vec<f64>,
}

impl KernelGrid {
    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn field(&self) -> &TriangularField {
        &self.field
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.field.at(i, j)
    }

    pub fn eval(&self, s: f64, q: f64) -> f64 {
        self.field.eval(s, q)
    }

    pub fn tau_at_one(&self) -> f64 {
        self.tau_at_one
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn branch(&self, i: usize, j: usize) -> KernelBranch {
        let d = (j - i) as f64 * self.grid.spacing();
        if d <= self.tau_at_one + 1e-12 {
            KernelBranch::One
        } else {
            KernelBranch::Two
        }
    }

    pub fn iterations(&self) -> (usize, usize) {
        (self.iterations_branch1, self.iterations_branch2)
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn residual_history(&self) -> (&[f64], &[f64]) {
        (
            &self.residual_history_branch1,
            &self.residual_history_branch2,
        )
    }

    pub fn sup_abs(&self) -> f64 {
        self.field.sup_abs()
    }
}

/// Analytic kernel bound: `w = max{1, 1/inf g'}`,
/// `W0 = sup|c|/(1 - sup|tau'|) + sup|f|`, bound `W0/w * exp(w (c̄ + f̄))`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelBound {
    pub weight: f64,
    pub base: f64,
    pub bound: f64,
}

pub fn kernel_bound(
    coeffs: &CoefficientSet,
    delay: &DelayFunction,
) -> Result<KernelBound, KernelError> {
    if delay.slope_sup() >= 1.0 {
        return Err(KernelError::DegenerateSlope(delay.slope_sup()));
    }
    let map = delay.delayed_time_map();
    let weight = 1.0f64.max(1.0 / map.g_prime_inf());
    let base = coeffs.c_sup() / (1.0 - delay.slope_sup()) + coeffs.f_sup();
    let bound = base / weight * (weight * (coeffs.c_sup() + coeffs.f_sup())).exp();
    Ok(KernelBound {
        weight,
        base,
        bound,
    })
}

/// Direct quadrature evaluators for the operator terms of the kernel
/// equations, computed over a given kernel iterate.
///
/// These follow the defining integrals term by term (partial-cell trapezoid,
/// no prefix-sum reuse), so they double as an independent check on the
/// optimized sweep used by [`solve_kernel`].
pub struct KernelTerms<'a> {
    coeffs: &'a CoefficientSet,
    map: &'a DelayedTimeMap,
    spacing: f64,
}

impl<'a> KernelTerms<'a> {
    pub fn new(coeffs: &'a CoefficientSet, map: &'a DelayedTimeMap, spacing: f64) -> Self {
        Self {
            coeffs,
            map,
            spacing,
        }
    }

    /// Reflected coordinate `s + 1 - q`.
    pub fn sigma(&self, s: f64, q: f64) -> f64 {
        s + 1.0 - q
    }

    /// Double integral of the coupling against the kernel.
    pub fn psi1(&self, field: &TriangularField, s: f64, q: f64) -> f64 {
        let sigma = self.sigma(s, q);
        let d = q - s;
        let h = self.spacing;
        integrate_partial(
            |theta| {
                integrate_partial(
                    |r| field.eval(theta, r) * self.coeffs.f(r, theta + d),
                    theta,
                    theta + d,
                    h,
                )
            },
            s,
            sigma,
            h,
        )
    }

    /// Split point of the single integrals: the delayed-time inverse of
    /// `min{sup g clamped, sigma + tau(1)}`.
    pub fn psi_split(&self, s: f64, q: f64) -> Result<f64, KernelError> {
        let sigma = self.sigma(s, q);
        let tau1 = self.map.delay().eval(1.0);
        let g_end = self.map.g(1.0);
        let arg = (self.map.g_bar().min(sigma + tau1)).min(g_end);
        self.map
            .invert(arg)
            .map_err(|e| KernelError::GeometryError(format!("psi split: {e}")))
    }

    /// Gain-weighted branch-1 reads along the delayed characteristic.
    pub fn psi21(&self, field: &TriangularField, s: f64, q: f64) -> Result<f64, KernelError> {
        let sigma = self.sigma(s, q);
        let lower = self
            .map
            .invert(sigma)
            .map_err(|e| KernelError::GeometryError(format!("inverse at sigma: {e}")))?;
        let upper = self.psi_split(s, q)?;
        self.gain_weighted(field, sigma, lower, upper)
    }

    /// Gain-weighted branch-2 reads along the delayed characteristic.
    pub fn psi22(&self, field: &TriangularField, s: f64, q: f64) -> Result<f64, KernelError> {
        let sigma = self.sigma(s, q);
        let lower = self.psi_split(s, q)?;
        self.gain_weighted(field, sigma, lower, 1.0)
    }

    fn gain_weighted(
        &self,
        field: &TriangularField,
        sigma: f64,
        lower: f64,
        upper: f64,
    ) -> Result<f64, KernelError> {
        const GEO_TOL: f64 = 1e-9;
        let mut geometry_ok = true;
        let value = integrate_partial(
            |p| {
                let arg = sigma + self.map.delay().eval(p);
                if arg > p + GEO_TOL {
                    geometry_ok = false;
                    return 0.0;
                }
                self.coeffs.c(p) * field.eval(arg.min(p), p)
            },
            lower,
            upper,
            self.spacing,
        );
        if geometry_ok {
            Ok(value)
        } else {
            Err(KernelError::GeometryError(format!(
                "characteristic read left the triangle (sigma = {sigma})"
            )))
        }
    }

    /// Coupling source term.
    pub fn xi1(&self, s: f64, q: f64) -> f64 {
        let d = q - s;
        integrate_partial(|theta| self.coeffs.f(theta - d, theta), q, 1.0, self.spacing)
    }

    /// Recirculation source term through the delayed-time inverse.
    pub fn xi2(&self, s: f64, q: f64) -> Result<f64, KernelError> {
        let sigma = self.sigma(s, q);
        let point = self
            .map
            .invert(sigma)
            .map_err(|e| KernelError::GeometryError(format!("inverse at sigma: {e}")))?;
        let slope = self.map.g_prime(point);
        if slope <= 1e-12 {
            return Err(KernelError::GeometryError(format!(
                "delayed-time slope {slope} at {point} not positive"
            )));
        }
        Ok(self.coeffs.c(point) / slope)
    }
}

/// Per-diagonal constants of the branch-2 equation; they depend only on the
/// anti-diagonal, not on the node position along it. The characteristic
/// integrals are re-evaluated every sweep (their interpolated reads near the
/// branch line touch cells whose corners converge with branch 2), so only
/// the genuinely iteration-independent pieces are cached.
struct DiagonalTerms {
    xi2: f64,
    lower: f64,
    split: f64,
}

/// Solve the two-branch kernel equations on the triangle.
///
/// Branch 1 iterates `K <- Psi1(K) - Xi1` on the diagonals `q - s <= tau(1)`;
/// for small delays branch 2 then iterates the full equation with the
/// converged branch-1 values frozen. Both stages use undamped successive
/// approximation, switching to 0.5 damping if the residual starts to
/// oscillate.
pub fn solve_kernel(
    coeffs: &CoefficientSet,
    delay: &DelayFunction,
    config: KernelConfig,
) -> Result<KernelGrid, KernelError> {
    if !(config.spacing > 0.0 && config.spacing <= 0.05) {
        return Err(KernelError::InvalidSpacing(config.spacing));
    }
    let grid = UniformGrid::from_spacing(config.spacing);
    let n = grid.len();
    let h = grid.spacing();
    let tau1 = delay.eval(1.0);
    let map = delay.delayed_time_map();

    // Coupling sampled once: every read in the sweeps is grid-aligned.
    let f_table: Vec<f64> = {
        let mut t = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                t[a * n + b] = coeffs.f(grid.node(a), grid.node(b));
            }
        }
        t
    };
    let f_at = |a: usize, b: usize| f_table[a * n + b];

    // Xi1 suffix per diagonal: xi1(i, j) = suffix[d][j].
    let last_branch1 = (0..n)
        .rev()
        .find(|&d| d as f64 * h <= tau1 + 1e-12)
        .unwrap_or(0);
    let xi1_suffix: Vec<Vec<f64>> = (0..n)
        .map(|d| {
            let mut suffix = vec![0.0; n];
            for t in (d..n - 1).rev() {
                let lo = f_at(t - d, t);
                let hi = f_at(t + 1 - d, t + 1);
                suffix[t] = suffix[t + 1] + 0.5 * (lo + hi) * h;
            }
            suffix
        })
        .collect();

    let mut field = TriangularField::zeros(n);

    // Applies one sweep of Psi1 - Xi1 over the requested diagonals, writing
    // into `next` and returning the sup change. Per diagonal the inner
    // integral is tabulated once and prefix-summed, so a sweep is O(n^3).
    let sweep_psi1 = |field: &TriangularField,
                      next: &mut TriangularField,
                      diagonals: std::ops::RangeInclusive<usize>,
                      extra: &dyn Fn(usize, &TriangularField) -> f64| {
        let mut inner = vec![0.0; n];
        let mut prefix = vec![0.0; n + 1];
        for d in diagonals {
            let top = n - 1 - d;
            for t in 0..=top {
                // G(t) = trapz_{r in [t, t+d]} K(t, r) f(r, t + d)
                let mut g = 0.0;
                if d > 0 {
                    g = 0.5 * (field.at(t, t) * f_at(t, t + d) + field.at(t, t + d) * f_at(t + d, t + d));
                    for r in t + 1..t + d {
                        g += field.at(t, r) * f_at(r, t + d);
                    }
                    g *= h;
                }
                inner[t] = g;
            }
            prefix[0] = 0.0;
            for t in 0..top {
                prefix[t + 1] = prefix[t] + 0.5 * (inner[t] + inner[t + 1]) * h;
            }
            let diag_extra = extra(d, field);
            for i in 0..=top {
                let j = i + d;
                let psi1 = prefix[top] - prefix[i];
                next.set(i, j, psi1 - xi1_suffix[d][j] + diag_extra);
            }
        }
    };

    let run_stage = |field: &mut TriangularField,
                     diagonals: std::ops::RangeInclusive<usize>,
                     extra: &dyn Fn(usize, &TriangularField) -> f64|
     -> Result<(usize, Vec<f64>), KernelError> {
        let mut history = Vec::new();
        let mut damping = 1.0;
        let mut next = field.clone();
        for iter in 1..=config.max_iterations {
            sweep_psi1(field, &mut next, diagonals.clone(), extra);
            let mut residual = 0.0f64;
            for d in diagonals.clone() {
                for i in 0..n - d {
                    let j = i + d;
                    let delta = next.at(i, j) - field.at(i, j);
                    residual = residual.max(delta.abs());
                    field.set(i, j, field.at(i, j) + damping * delta);
                }
            }
            history.push(residual);
            if residual <= config.tolerance {
                return Ok((iter, history));
            }
            // A residual bounce (decrease followed by an increase) signals
            // oscillation rather than the expected transient growth phase.
            let k = history.len();
            if damping == 1.0 && k >= 3 && history[k - 2] < history[k - 3] && history[k - 1] > history[k - 2] {
                damping = 0.5;
            }
        }
        Err(KernelError::NoConvergence {
            residual: *history.last().unwrap_or(&f64::INFINITY),
            tolerance: config.tolerance,
            iterations: config.max_iterations,
        })
    };

    // Stage 1: branch-1 diagonals only; the reads stay inside the branch.
    let no_extra = |_: usize, _: &TriangularField| 0.0;
    let (iters1, history1) = run_stage(&mut field, 0..=last_branch1, &no_extra)?;

    let mut iters2 = 0;
    let mut history2 = Vec::new();
    if last_branch1 < n - 1 {
        // Stage 2: branch-2 diagonals with per-diagonal constants from the
        // converged branch-1 values.
        let terms = KernelTerms::new(coeffs, &map, h);
        let mut diag_terms: Vec<Option<DiagonalTerms>> = Vec::with_capacity(n);
        for _ in 0..n {
            diag_terms.push(None);
        }
        for d in last_branch1 + 1..n {
            let s = 0.0;
            let q = d as f64 * h;
            let split = terms.psi_split(s, q)?;
            let xi2 = terms.xi2(s, q)?;
            let lower = map
                .invert(s + 1.0 - q)
                .map_err(|e| KernelError::GeometryError(format!("inverse at sigma: {e}")))?;
            // Pre-flight geometry check; the sweep's fast path only clamps.
            terms.psi21(&field, s, q)?;
            diag_terms[d] = Some(DiagonalTerms { xi2, lower, split });
        }
        let gain_extra = move |d: usize, field: &TriangularField| -> f64 {
            let diag = diag_terms[d].as_ref().expect("stage-2 diagonal prepared");
            let sigma = 1.0 - d as f64 * h;
            let characteristic = |p: f64| {
                let arg = sigma + delay.eval(p);
                coeffs.c(p) * field.eval(arg.min(p), p)
            };
            let psi21 = integrate_partial(characteristic, diag.lower, diag.split, h);
            let psi22 = integrate_partial(characteristic, diag.split, 1.0, h);
            psi21 + psi22 - diag.xi2
        };
        let (i2, h2) = run_stage(&mut field, last_branch1 + 1..=n - 1, &gain_extra)?;
        iters2 = i2;
        history2 = h2;
    }

    let residual = history1
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(history2.last().copied().unwrap_or(0.0));

    Ok(KernelGrid {
        field,
        grid,
        tau_at_one: tau1,
        region: delay.region(),
        iterations_branch1: iters1,
        iterations_branch2: iters2,
        residual,
        residual_history_branch1: history1,
        residual_history_branch2: history2,
    })
}

/// Largest jump of the kernel across the branch line, measured between the
/// grid diagonals that straddle `q - s = tau(1)`. Shrinks like the spacing
/// when the kernel is continuous, which certifies the two branches glue.
pub fn branch_boundary_gap(kernel: &KernelGrid) -> Result<f64, KernelError> {
    if kernel.region() == Region::D1 {
        return Err(KernelError::SingleBranch);
    }
    let n = kernel.grid().len();
    let h = kernel.grid().spacing();
    let last_branch1 = (0..n)
        .rev()
        .find(|&d| d as f64 * h <= kernel.tau_at_one() + 1e-12)
        .unwrap_or(0);
    if last_branch1 + 1 > n - 1 {
        return Err(KernelError::SingleBranch);
    }
    let d1 = last_branch1;
    let d2 = last_branch1 + 1;
    let mut gap = 0.0f64;
    for i in 0..n - d2 {
        gap = gap.max((kernel.value(i, i + d2) - kernel.value(i, i + d1)).abs());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DelayFamily, ScenarioSampler};

    fn d1_delay() -> DelayFunction {
        DelayFunction::new(
            DelayFamily::CosineChebyshev {
                offset: 3.0,
                amplitude: 0.5,
                frequency: 5.0,
            },
            41,
        )
        .unwrap()
    }

    fn d2_delay() -> DelayFunction {
        DelayFunction::new(
            DelayFamily::Exponential {
                amplitude: 0.5,
                rate: -1.6,
            },
            41,
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_give_zero_kernel_after_one_sweep() {
        let coeffs = CoefficientSet::zero(41);
        let kernel = solve_kernel(&coeffs, &d2_delay(), KernelConfig::default()).unwrap();
        assert_eq!(kernel.iterations().0, 1);
        assert_eq!(kernel.sup_abs(), 0.0);
        assert_eq!(branch_boundary_gap(&kernel).unwrap(), 0.0);
    }

    #[test]
    fn kernel_vanishes_on_the_far_edge_of_branch_one() {
        let coeffs = CoefficientSet::reference(41);
        let kernel = solve_kernel(&coeffs, &d2_delay(), KernelConfig::default()).unwrap();
        let n = kernel.grid().len();
        let h = kernel.grid().spacing();
        for i in 0..n {
            let s = i as f64 * h;
            if 1.0 - s <= kernel.tau_at_one() + 1e-12 {
                assert_eq!(kernel.value(i, n - 1), 0.0, "K(s, 1) at s = {s}");
            }
        }
    }

    #[test]
    fn large_delay_kernel_never_touches_branch_two() {
        let coeffs = CoefficientSet::reference(41);
        let delay = d1_delay();
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        // The two-branch stage never runs: no iterations, no residuals, and
        // every node is masked branch one.
        assert_eq!(kernel.iterations().1, 0);
        assert!(kernel.residual_history().1.is_empty());
        assert!(kernel.residual() <= 1e-8);
        assert!(matches!(
            branch_boundary_gap(&kernel),
            Err(KernelError::SingleBranch)
        ));
        let n = kernel.grid().len();
        for i in 0..n {
            for j in i..n {
                assert_eq!(kernel.branch(i, j), KernelBranch::One);
            }
        }
        // Re-solving reproduces the field bitwise.
        let again = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        for i in 0..n {
            for j in i..n {
                assert_eq!(kernel.value(i, j).to_bits(), again.value(i, j).to_bits());
            }
        }
        // The direct-quadrature evaluators confirm the converged values
        // satisfy the branch-1 equation.
        let h = kernel.grid().spacing();
        let map = delay.delayed_time_map();
        let terms = KernelTerms::new(&coeffs, &map, h);
        let mut worst = 0.0f64;
        for i in (0..n).step_by(5) {
            for j in (i..n).step_by(5) {
                let s = i as f64 * h;
                let q = j as f64 * h;
                let fx = terms.psi1(kernel.field(), s, q) - terms.xi1(s, q);
                worst = worst.max((fx - kernel.value(i, j)).abs());
            }
        }
        assert!(worst < 5e-7, "fixed-point defect {worst}");
    }

    #[test]
    fn small_delay_kernel_satisfies_both_equations() {
        let coeffs = CoefficientSet::reference(41);
        let delay = d2_delay();
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        assert!(kernel.residual() <= 1e-8);
        assert!(kernel.iterations().1 > 0);

        let map = delay.delayed_time_map();
        let h = kernel.grid().spacing();
        let terms = KernelTerms::new(&coeffs, &map, h);
        let n = kernel.grid().len();
        let mut worst = 0.0f64;
        for i in (0..n).step_by(4) {
            for j in (i..n).step_by(4) {
                let s = i as f64 * h;
                let q = j as f64 * h;
                let expected = match kernel.branch(i, j) {
                    KernelBranch::One => terms.psi1(kernel.field(), s, q) - terms.xi1(s, q),
                    KernelBranch::Two => {
                        terms.psi1(kernel.field(), s, q) - terms.xi1(s, q)
                            - terms.xi2(s, q).unwrap()
                            + terms.psi21(kernel.field(), s, q).unwrap()
                            + terms.psi22(kernel.field(), s, q).unwrap()
                    }
                };
                worst = worst.max((expected - kernel.value(i, j)).abs());
            }
        }
        assert!(worst < 5e-7, "fixed-point defect {worst}");
    }

    #[test]
    fn branch_mask_is_constant_along_anti_diagonals() {
        let coeffs = CoefficientSet::reference(41);
        let kernel = solve_kernel(&coeffs, &d2_delay(), KernelConfig::default()).unwrap();
        let n = kernel.grid().len();
        for d in 0..n {
            let first = kernel.branch(0, d);
            for i in 0..n - d {
                assert_eq!(kernel.branch(i, i + d), first);
            }
        }
    }

    #[test]
    fn bound_formula_matches_hand_evaluation() {
        let coeffs = CoefficientSet::zero(41);
        let bound = kernel_bound(&coeffs, &d2_delay()).unwrap();
        assert_eq!(bound.base, 0.0);
        assert_eq!(bound.bound, 0.0);

        let constant = DelayFunction::new(DelayFamily::Constant { value: 0.3 }, 41).unwrap();
        let coeffs = CoefficientSet::reference(41);
        let bound = kernel_bound(&coeffs, &constant).unwrap();
        assert_eq!(bound.weight, 1.0);
        assert!((bound.base - 30.0).abs() < 1e-12);
        assert!((bound.bound - 30.0 * (30.0f64).exp()).abs() < 1e-6);

        // Reference small-delay setup: w = 1, W0 = 110, bound = 110 e^30.
        let bound = kernel_bound(&coeffs, &d2_delay()).unwrap();
        assert_eq!(bound.weight, 1.0);
        assert!((bound.base - 110.0).abs() < 1e-9);
        assert!((bound.bound - 110.0 * (30.0f64).exp()).abs() / bound.bound < 1e-9);
    }

    #[test]
    fn boundary_gap_reduces_to_branch_two_when_coupling_vanishes() {
        // With f = 0 branch 1 has zero data, so the gap equals the largest
        // branch-2 magnitude adjacent to the line.
        let coeffs = CoefficientSet::new(
            crate::coefficients::GainFamily::Ramp { gain: 20.0 },
            crate::coefficients::CouplingFamily::Zero,
            41,
        )
        .unwrap();
        let kernel = solve_kernel(&coeffs, &d2_delay(), KernelConfig::default()).unwrap();
        let n = kernel.grid().len();
        let h = kernel.grid().spacing();
        let last_branch1 = (0..n)
            .rev()
            .find(|&d| d as f64 * h <= kernel.tau_at_one() + 1e-12)
            .unwrap();
        for i in 0..n - last_branch1 {
            assert_eq!(kernel.value(i, i + last_branch1), 0.0);
        }
        let gap = branch_boundary_gap(&kernel).unwrap();
        let mut expected = 0.0f64;
        for i in 0..n - (last_branch1 + 1) {
            expected = expected.max(kernel.value(i, i + last_branch1 + 1).abs());
        }
        assert_eq!(gap, expected);
        assert!(gap > 0.0);
    }

    #[test]
    fn refinement_shrinks_the_boundary_gap_linearly() {
        let coeffs = CoefficientSet::reference(41);
        let delay = d2_delay();
        let gaps: Vec<f64> = [0.05, 0.025, 0.0125]
            .iter()
            .map(|&h| {
                let k = solve_kernel(&coeffs, &delay, KernelConfig::with_spacing(h)).unwrap();
                branch_boundary_gap(&k).unwrap()
            })
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "gaps {gaps:?}");
        // First-order: each halving should at least halve-ish the gap.
        assert!(gaps[2] <= 0.75 * gaps[1], "gaps {gaps:?}");
    }

    #[test]
    fn sup_bound_holds_on_random_draws() {
        let mut sampler = ScenarioSampler::new(23);
        for trial in 0..20 {
            let region = if trial % 2 == 0 {
                Region::D1
            } else {
                Region::D2
            };
            let delay = loop {
                let d = sampler.sample_delay(region).unwrap();
                if d.slope_sup() < 1.0 {
                    break d;
                }
            };
            let coeffs = sampler.sample_coefficients(41);
            let kernel =
                solve_kernel(&coeffs, &delay, KernelConfig::with_spacing(0.05)).unwrap();
            let bound = kernel_bound(&coeffs, &delay).unwrap();
            assert!(
                kernel.sup_abs() <= bound.bound,
                "trial {trial}: sup {} vs bound {}",
                kernel.sup_abs(),
                bound.bound
            );
        }
    }
}
