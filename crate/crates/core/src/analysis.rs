//! Numerical certificates: analytic Lipschitz constants with empirical
//! probes against them, the semiglobal-stability constants and the decay
//! envelope they promise, norm and Lyapunov evaluations, state-error series,
//! and the controller timing benchmark.

use crate::coefficients::{
    CoefficientSet, DelayFunction, InitialCondition, Region, ScenarioSampler,
};
use crate::controller::{AnalyticFeedback, BoundaryController, ControlLaw, ControllerInput};
use crate::grid::{interp1, trapezoid, Field2};
use crate::kernel::{solve_kernel, KernelConfig};
use crate::operator::NeuralController;
use crate::simulator::{simulate, SimConfig, Trace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate bounds: {0}")]
    DegenerateBounds(String),
    #[error("traces disagree on grids or snapshot times")]
    GridMismatch,
    #[error("shadow labels need either an explicit error bound or a law to evaluate")]
    MissingShadowLabels,
    #[error("probe failed: {0}")]
    ProbeFailure(String),
}

/// Scalar norms of a sampled profile.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub sup: f64,
    pub c1: f64,
}

/// Trapezoid `L²`, max-abs sup, and `C¹` = sup + sup of the central
/// difference derivative (one-sided at the ends).
pub fn norms(samples: &[f64]) -> Norms {
    let n = samples.len();
    let h = 1.0 / (n - 1) as f64;
    let l2 = crate::grid::l2_norm(samples);
    let sup = crate::grid::sup_abs(samples);
    let mut dsup = 0.0f64;
    for i in 0..n {
        let d = if i == 0 {
            (samples[1] - samples[0]) / h
        } else if i == n - 1 {
            (samples[n - 1] - samples[n - 2]) / h
        } else {
            (samples[i + 1] - samples[i - 1]) / (2.0 * h)
        };
        dsup = dsup.max(d.abs());
    }
    Norms {
        l2,
        sup,
        c1: sup + dsup,
    }
}

/// Norms of a delay-line field; the `C¹` derivative runs along `r`.
pub fn norms_field(field: &Field2) -> Norms {
    let sup = field.sup_abs();
    let hr = 1.0 / (field.cols() - 1) as f64;
    let mut dsup = 0.0f64;
    for i in 0..field.rows() {
        let row = field.row(i);
        for j in 0..row.len() {
            let d = if j == 0 {
                (row[1] - row[0]) / hr
            } else if j == row.len() - 1 {
                (row[row.len() - 1] - row[row.len() - 2]) / hr
            } else {
                (row[j + 1] - row[j - 1]) / (2.0 * hr)
            };
            dsup = dsup.max(d.abs());
        }
    }
    Norms {
        l2: field.l2_norm(),
        sup,
        c1: sup + dsup,
    }
}

/// Weighted Lyapunov functionals of a transformed state and delay line.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Lyapunov {
    pub v1: f64,
    pub v2: f64,
    pub v: f64,
}

/// `V1 = ∫ e^{-b1 s} z², V2 = ∫∫ τ(s) e^{b2 r} u², V = A V1 + V2`.
pub fn lyapunov(z: &[f64], u: &Field2, delay: &DelayFunction, b1: f64, b2: f64, a: f64) -> Lyapunov {
    let n = z.len();
    let h = 1.0 / (n - 1) as f64;
    let weighted: Vec<f64> = (0..n)
        .map(|i| (-b1 * i as f64 * h).exp() * z[i] * z[i])
        .collect();
    let v1 = trapezoid(&weighted, h);
    let hr = 1.0 / (u.cols() - 1) as f64;
    let hs = 1.0 / (u.rows() - 1) as f64;
    let mut v2 = 0.0;
    for i in 0..u.rows() {
        let tau = delay.eval(i as f64 * hs);
        let row: Vec<f64> = (0..u.cols())
            .map(|j| (b2 * j as f64 * hr).exp() * u.at(i, j) * u.at(i, j))
            .collect();
        let ws = if i == 0 || i == u.rows() - 1 { 0.5 } else { 1.0 };
        v2 += ws * tau * trapezoid(&row, hr);
    }
    v2 *= hs;
    Lyapunov {
        v1,
        v2,
        v: a * v1 + v2,
    }
}

/// Inputs of the stability-constant evaluation: tuning weights, bounds of
/// the admissible sets, and the kernel/inverse-kernel bounds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StabilityInputs {
    pub b1: f64,
    pub b2: f64,
    /// `sup tau` over the admissible delays.
    pub tau_upper: f64,
    /// `inf tau` over the admissible delays.
    pub tau_lower: f64,
    pub state_bound: f64,
    pub line_bound: f64,
    pub kernel_bound: f64,
    pub c_sup: f64,
    pub f_sup: f64,
    /// Bound of the inverse-transformation kernel; defaults to the standard
    /// backstepping surrogate `K̄ e^{K̄}` when absent.
    pub inverse_kernel_bound: Option<f64>,
    /// Approximation error the envelope is evaluated at.
    pub epsilon: f64,
}

/// Every constant of the semiglobal practical-stability estimate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub amplification: f64,
    pub decay_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub k1: f64,
    pub k2: f64,
    pub m1: f64,
    pub m2: f64,
    pub epsilon_star: f64,
    pub initial_bound: f64,
}

/// Evaluate the stability constants verbatim from their defining formulas.
pub fn stability_constants(inputs: &StabilityInputs) -> Result<StabilityConstants, AnalysisError> {
    if !(inputs.b1 > 0.0 && inputs.b2 > 0.0) {
        return Err(AnalysisError::DegenerateBounds(
            "weights b1, b2 must be positive".to_string(),
        ));
    }
    if !(inputs.tau_lower > 0.0 && inputs.tau_upper >= inputs.tau_lower) {
        return Err(AnalysisError::DegenerateBounds(
            "delay bounds must satisfy 0 < lower <= upper".to_string(),
        ));
    }
    let amplification = (inputs.b1 * inputs.b2).exp();
    let decay_rate = inputs.b1.min(inputs.b2 / inputs.tau_upper);
    let beta1 = (1.0 / amplification) * (1.0f64).min((-inputs.b2).exp() / inputs.tau_upper);
    let beta2 = (inputs.b1.exp()).max(1.0 / inputs.tau_lower);
    let k_bar = inputs.kernel_bound;
    let k1 = 4.0
        * (1.0 + k_bar).max(
            inputs.c_sup * inputs.c_sup * (1.0 + inputs.tau_upper * inputs.tau_upper * k_bar * k_bar)
                + 1.0,
        );
    let f1 = inputs
        .inverse_kernel_bound
        .unwrap_or_else(|| k_bar * k_bar.exp());
    let k2 = (4.0 * (1.0 + f1 * f1)).max(
        1.0 + 4.0
            * inputs.c_sup
            * inputs.c_sup
            * (1.0
                + inputs.tau_upper
                    * inputs.tau_upper
                    * (2.0 * inputs.f_sup * inputs.tau_upper).exp()),
    );
    let m1 = k1 / beta1 * k2 * beta2;
    let m2 = k2 * beta2 * amplification;
    let state_sq = inputs.state_bound * inputs.state_bound + inputs.line_bound * inputs.line_bound;
    if state_sq <= 0.0 {
        return Err(AnalysisError::DegenerateBounds(
            "state bounds must not both vanish".to_string(),
        ));
    }
    let epsilon_star = (state_sq / (k2 * beta2 * amplification)).sqrt();
    let initial_bound = beta1 / k1
        * (state_sq / (k2 * beta2) - amplification * inputs.epsilon * inputs.epsilon);
    Ok(StabilityConstants {
        amplification,
        decay_rate,
        beta1,
        beta2,
        k1,
        k2,
        m1,
        m2,
        epsilon_star,
        initial_bound,
    })
}

/// Per-time margins of the decay envelope plus the forward norm-equivalence
/// check on snapshots.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub epsilon_used: f64,
    /// `(t, margin)` with margin `M1 e^{-at}(‖x0‖²+‖u0‖²) + M2 ε² − (‖x‖²+‖u‖²)`.
    pub margins: Vec<(f64, f64)>,
    pub pass: bool,
    /// Worst `(‖z‖²+‖u‖²) / (k1 (‖x‖²+‖u‖²))` over snapshots; at most one
    /// when the forward norm equivalence holds.
    pub norm_equivalence_ratio: f64,
}

/// Check the decay envelope along a trace. The approximation error is either
/// supplied or estimated by shadow evaluation of the exact feedback on the
/// recorded snapshots.
pub fn verify_envelope(
    trace: &Trace,
    constants: &StabilityConstants,
    epsilon: Option<f64>,
    law: &ControlLaw,
) -> Result<EnvelopeReport, AnalysisError> {
    if constants.decay_rate <= 0.0 {
        return Err(AnalysisError::DegenerateBounds(
            "decay rate must be positive".to_string(),
        ));
    }
    let epsilon_used = match epsilon {
        Some(e) => e,
        None => {
            if trace.snapshots.is_empty() {
                return Err(AnalysisError::MissingShadowLabels);
            }
            let mut worst = 0.0f64;
            for snap in &trace.snapshots {
                let exact = law
                    .control(&snap.x, &snap.u)
                    .map_err(|e| AnalysisError::ProbeFailure(e.to_string()))?;
                worst = worst.max((trace.control[snap.step] - exact).abs());
            }
            worst
        }
    };
    let initial = trace.x_l2[0] * trace.x_l2[0] + trace.u_l2[0] * trace.u_l2[0];
    let mut margins = Vec::with_capacity(trace.times.len());
    let mut pass = true;
    for (i, &t) in trace.times.iter().enumerate() {
        let state = trace.x_l2[i] * trace.x_l2[i] + trace.u_l2[i] * trace.u_l2[i];
        let bound = constants.m1 * (-constants.decay_rate * t).exp() * initial
            + constants.m2 * epsilon_used * epsilon_used;
        let margin = bound - state;
        pass &= margin >= 0.0;
        margins.push((t, margin));
    }
    let mut norm_ratio = 0.0f64;
    for snap in &trace.snapshots {
        let z = law
            .forward_transform(&snap.x, &snap.u)
            .map_err(|e| AnalysisError::ProbeFailure(e.to_string()))?;
        let zn = crate::grid::l2_norm(&z.z);
        let un = snap.u.l2_norm();
        let xn = crate::grid::l2_norm(&snap.x);
        let lhs = zn * zn + un * un;
        let rhs = constants.k1 * (xn * xn + un * un);
        if rhs > 0.0 {
            norm_ratio = norm_ratio.max(lhs / rhs);
        }
    }
    pass &= norm_ratio <= 1.0;
    Ok(EnvelopeReport {
        epsilon_used,
        margins,
        pass,
        norm_equivalence_ratio: norm_ratio,
    })
}

/// `L²` distance between the states of two traces at matching snapshots.
pub fn state_error(reference: &Trace, other: &Trace) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if reference.snapshots.len() != other.snapshots.len() {
        return Err(AnalysisError::GridMismatch);
    }
    let mut series = Vec::with_capacity(reference.snapshots.len());
    for (a, b) in reference.snapshots.iter().zip(&other.snapshots) {
        if a.x.len() != b.x.len() || (a.time - b.time).abs() > 1e-12 {
            return Err(AnalysisError::GridMismatch);
        }
        let diff: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| p - q).collect();
        series.push((a.time, crate::grid::l2_norm(&diff)));
    }
    Ok(series)
}

/// Which Lipschitz inequality a probe exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    /// Inverse of the delayed-time map between two small-delay functions.
    GInverse,
    /// The two-branch kernel as an operator of the delay.
    KernelK2,
    /// Feedback with both delays in the large-delay region.
    ControlCase1,
    /// Feedback with the delays straddling the regions.
    ControlCase2,
    /// Feedback with both delays in the small-delay region.
    ControlCase3,
}

/// Outcome of one probe battery.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub pairs: usize,
    pub skipped: usize,
    pub max_quotient: f64,
    pub median_quotient: f64,
    pub ceiling: f64,
}

/// The analytic constants of the Lipschitz lemmas, evaluated from primitive
/// bounds. The kernel bound is the measured sup of a solved kernel (the
/// constant the lemmas are stated with); the theorem-level bound may be
/// substituted for extra slack.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LipschitzBudget {
    pub l_tau: f64,
    pub l_tau_prime: f64,
    pub l_g: f64,
    pub l_b: f64,
    pub l_c: f64,
    pub l_f: f64,
    pub k_sup: f64,
    pub g_prime_inf: f64,
    pub g_prime_sup: f64,
    pub tau_prime_sup: f64,
    pub c_sup: f64,
    pub f_sup: f64,
    pub l_cap_f: f64,
    pub l1: f64,
    pub l2: f64,
    pub l_phi0: f64,
    pub l_kernel: f64,
    /// Empirical Lipschitz constants of the delay-line reads.
    pub l_u: f64,
    pub l_u_breve: f64,
    pub x_sup: f64,
    pub u_sup: f64,
    pub l_control: f64,
}

impl LipschitzBudget {
    /// Assemble the budget from a pair of delays, the plant coefficients, a
    /// solved kernel sup, and empirical state/read constants.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        coeffs: &CoefficientSet,
        delays: (&DelayFunction, &DelayFunction),
        k_sup: f64,
        l_u: f64,
        l_u_breve: f64,
        x_sup: f64,
        u_sup: f64,
    ) -> Self {
        let (d1, d2) = delays;
        let l_tau = d1.lipschitz().value().max(d2.lipschitz().value());
        let l_tau_prime = d1
            .slope_lipschitz()
            .value()
            .max(d2.slope_lipschitz().value());
        let tau_prime_sup = d1.slope_sup().max(d2.slope_sup());
        let map1 = d1.delayed_time_map();
        let map2 = d2.delayed_time_map();
        let g_prime_inf = map1.g_prime_inf().min(map2.g_prime_inf());
        let g_prime_sup = map1.g_prime_sup().max(map2.g_prime_sup());
        let l_g = if tau_prime_sup < 1.0 {
            1.0 / (1.0 - tau_prime_sup)
        } else {
            f64::INFINITY
        };
        // Derivative-operator bound from the admissible-set argument.
        let l_b = 1.0 / d1.tau_inf().min(d2.tau_inf());
        let l_c = coeffs.c_lipschitz().value();
        let l_f = coeffs.f_lipschitz().value();
        let c_sup = coeffs.c_sup();
        let f_sup = coeffs.f_sup();
        let one_minus = 1.0 - tau_prime_sup;
        let l_cap_f = (c_sup * l_b + c_sup * l_tau_prime + l_c * one_minus) / (one_minus * one_minus);
        let l1 = 3.0 * f_sup * k_sup + l_f * (1.0 + k_sup);
        let l0 = 3.0 * c_sup * k_sup * l_g
            + l_f * (1.0 + k_sup) * (1.0 + c_sup)
            + 3.0 * f_sup * k_sup * (1.0 + c_sup)
            + l_g / (one_minus * one_minus) * (c_sup * l_tau_prime + l_c * g_prime_sup);
        let l2 = l0 * g_prime_inf * (c_sup / g_prime_inf).exp();
        let l_phi0 = l_cap_f
            + 2.0 * k_sup * f_sup
            + 3.0 * c_sup * k_sup / (1.0 - l_tau)
            + c_sup * (l1 + l2)
            + 4.0 * l_g * c_sup * k_sup;
        let l_kernel = l_phi0 * f_sup.max(c_sup).exp();
        let l_control = k_sup
            .max(c_sup * (1.0 + k_sup))
            .max(
                6.0 * c_sup * u_sup * k_sup
                    + 2.0 * k_sup * x_sup
                    + c_sup * l_u * (1.0 + k_sup)
                    + l_kernel * (x_sup + c_sup * u_sup)
                    + c_sup * u_sup / (1.0 - l_tau),
            );
        Self {
            l_tau,
            l_tau_prime,
            l_g,
            l_b,
            l_c,
            l_f,
            k_sup,
            g_prime_inf,
            g_prime_sup,
            tau_prime_sup,
            c_sup,
            f_sup,
            l_cap_f,
            l1,
            l2,
            l_phi0,
            l_kernel,
            l_u,
            l_u_breve,
            x_sup,
            u_sup,
            l_control,
        }
    }
}

/// Probe configuration: pair count, seed, grids.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub pairs: usize,
    pub seed: u64,
    pub kernel_spacing: f64,
    pub state_nodes: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            seed: 31,
            kernel_spacing: 0.05,
            state_nodes: 21,
        }
    }
}

/// Smooth synthetic probe states standing in for the C¹ arguments of the
/// feedback operator.
fn probe_state(sampler: &mut ScenarioSampler, n: usize) -> (Vec<f64>, Field2) {
    let shape = sampler.sample_initial();
    let x = shape.sample(n);
    let phase = InitialCondition {
        amplitude: 0.4 * shape.amplitude,
        frequency: shape.frequency * 0.5,
        shift: shape.shift,
    };
    let u = Field2::from_fn(n, n, |s, r| {
        phase.eval(r * (1.0 - 0.3 * s)) + 0.2 * shape.amplitude * (std::f64::consts::PI * s).sin()
    });
    (x, u)
}

/// Empirical Lipschitz constant of the delay-line reads with respect to the
/// delay channel, over the probe pair.
fn empirical_read_lipschitz(u: &Field2, tau_a: &[f64], tau_b: &[f64]) -> f64 {
    let delta = tau_a
        .iter()
        .zip(tau_b)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if delta < 1e-12 {
        return 0.0;
    }
    let n = tau_a.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let q = i as f64 / (n - 1) as f64;
        for k in 0..=20 {
            let p = q * k as f64 / 20.0;
            let ra = (p / interp1(tau_a, q)).clamp(0.0, 1.0);
            let rb = (p / interp1(tau_b, q)).clamp(0.0, 1.0);
            worst = worst.max((u.eval(q, ra) - u.eval(q, rb)).abs() / delta);
        }
    }
    worst
}

/// Run one probe battery: empirical difference quotients of the probed
/// operator against the analytic ceiling of its lemma.
pub fn lipschitz_probe(
    kind: ProbeKind,
    coeffs: &CoefficientSet,
    config: ProbeConfig,
) -> Result<ProbeReport, AnalysisError> {
    let mut sampler = ScenarioSampler::new(config.seed).with_grid(config.state_nodes);
    let mut quotients = Vec::with_capacity(config.pairs);
    let mut skipped = 0usize;
    let mut ceiling = 0.0f64;
    let fail = |e: &dyn std::fmt::Display| AnalysisError::ProbeFailure(e.to_string());

    while quotients.len() < config.pairs {
        let (region_a, region_b) = match kind {
            ProbeKind::GInverse | ProbeKind::KernelK2 | ProbeKind::ControlCase3 => {
                (Region::D2, Region::D2)
            }
            ProbeKind::ControlCase1 => (Region::D1, Region::D1),
            ProbeKind::ControlCase2 => (Region::D1, Region::D2),
        };
        // The inequalities consume a global slope bound below one.
        let delay_a = sampler.sample_delay_slope_bounded(region_a).map_err(|e| fail(&e))?;
        let delay_b = sampler.sample_delay_slope_bounded(region_b).map_err(|e| fail(&e))?;
        let tau_a = delay_a.resample(config.state_nodes);
        let tau_b = delay_b.resample(config.state_nodes);
        let delta_tau = tau_a
            .iter()
            .zip(&tau_b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if delta_tau < 1e-9 {
            skipped += 1;
            continue;
        }

        match kind {
            ProbeKind::GInverse => {
                let map_a = delay_a.delayed_time_map();
                let map_b = delay_b.delayed_time_map();
                let (lo_a, hi_a) = map_a.range();
                let (lo_b, hi_b) = map_b.range();
                let lo = lo_a.max(lo_b);
                let hi = hi_a.min(hi_b);
                if hi <= lo {
                    skipped += 1;
                    continue;
                }
                let mut worst = 0.0f64;
                for k in 0..=200 {
                    let y = lo + (hi - lo) * k as f64 / 200.0;
                    let qa = map_a.invert(y).map_err(|e| fail(&e))?;
                    let qb = map_b.invert(y).map_err(|e| fail(&e))?;
                    worst = worst.max((qa - qb).abs());
                }
                quotients.push(worst / delta_tau);
                let l_tau = delay_a
                    .lipschitz()
                    .value()
                    .max(delay_b.lipschitz().value());
                ceiling = ceiling.max(1.0 / (1.0 - l_tau));
            }
            ProbeKind::KernelK2 => {
                let kcfg = KernelConfig::with_spacing(config.kernel_spacing);
                let ka = solve_kernel(coeffs, &delay_a, kcfg).map_err(|e| fail(&e))?;
                let kb = solve_kernel(coeffs, &delay_b, kcfg).map_err(|e| fail(&e))?;
                let n = ka.grid().len();
                let h = ka.grid().spacing();
                let line = delay_a.eval(1.0).max(delay_b.eval(1.0));
                let mut worst = 0.0f64;
                for d in 0..n {
                    if d as f64 * h <= line + 1e-12 {
                        continue;
                    }
                    for i in 0..n - d {
                        worst = worst.max((ka.value(i, i + d) - kb.value(i, i + d)).abs());
                    }
                }
                quotients.push(worst / delta_tau);
                let k_sup = ka.sup_abs().max(kb.sup_abs());
                let budget = LipschitzBudget::assemble(
                    coeffs,
                    (&delay_a, &delay_b),
                    k_sup,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                );
                ceiling = ceiling.max(budget.l_kernel);
            }
            ProbeKind::ControlCase1 | ProbeKind::ControlCase2 | ProbeKind::ControlCase3 => {
                let kcfg = KernelConfig::with_spacing(config.kernel_spacing);
                let ka = solve_kernel(coeffs, &delay_a, kcfg).map_err(|e| fail(&e))?;
                let kb = solve_kernel(coeffs, &delay_b, kcfg).map_err(|e| fail(&e))?;
                let k_sup = ka.sup_abs().max(kb.sup_abs());
                let law_a =
                    ControlLaw::new(ka, delay_a.clone(), coeffs.clone()).map_err(|e| fail(&e))?;
                let law_b =
                    ControlLaw::new(kb, delay_b.clone(), coeffs.clone()).map_err(|e| fail(&e))?;
                let (x_a, u_a) = probe_state(&mut sampler, config.state_nodes);
                let (x_b, u_b) = probe_state(&mut sampler, config.state_nodes);
                let ua = law_a.control_with_tau(&tau_a, &x_a, &u_a).map_err(|e| fail(&e))?;
                let ub = law_b.control_with_tau(&tau_b, &x_b, &u_b).map_err(|e| fail(&e))?;
                let dx = x_a
                    .iter()
                    .zip(&x_b)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0f64, f64::max);
                let du = u_a
                    .data()
                    .iter()
                    .zip(u_b.data())
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0f64, f64::max);
                let denom = delta_tau.max(dx).max(du);
                if denom < 1e-9 {
                    skipped += 1;
                    continue;
                }
                quotients.push((ua - ub).abs() / denom);
                let l_u = empirical_read_lipschitz(&u_a, &tau_a, &tau_b)
                    .max(empirical_read_lipschitz(&u_b, &tau_a, &tau_b));
                let x_sup = crate::grid::sup_abs(&x_a).max(crate::grid::sup_abs(&x_b));
                let u_sup = u_a.sup_abs().max(u_b.sup_abs());
                let budget = LipschitzBudget::assemble(
                    coeffs,
                    (&delay_a, &delay_b),
                    k_sup,
                    l_u,
                    0.0,
                    x_sup,
                    u_sup,
                );
                ceiling = ceiling.max(budget.l_control);
            }
        }
    }

    let mut sorted = quotients.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ProbeReport {
        kind,
        pairs: quotients.len(),
        skipped,
        max_quotient: sorted.last().copied().unwrap_or(0.0),
        median_quotient: sorted[sorted.len() / 2],
        ceiling,
    })
}

/// One row of the controller timing benchmark.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub ds: f64,
    /// Kernel solve seconds (the setup the exact feedback needs per delay).
    pub analytic_setup_seconds: f64,
    /// Mean per-run total of the per-step feedback evaluations.
    pub analytic_eval_seconds: f64,
    /// Mean per-run total of the per-step network inferences.
    pub neural_eval_seconds: f64,
    /// (setup + evaluations) / inferences.
    pub speedup: f64,
    pub repetitions: usize,
}

/// Closed-loop controller timing over a list of spatial steps: the exact
/// feedback pays its kernel solve plus per-step quadratures; the learned
/// operator pays per-step inference only. Both drive the same plant and
/// horizon.
pub fn bench_controllers(
    coeffs_for: impl Fn(usize) -> CoefficientSet,
    delay: &DelayFunction,
    x0_shape: &InitialCondition,
    model: &NeuralController,
    grids: &[f64],
    dt: f64,
    horizon: f64,
    repetitions: usize,
) -> Result<Vec<BenchRow>, AnalysisError> {
    let fail = |e: &dyn std::fmt::Display| AnalysisError::ProbeFailure(e.to_string());
    let mut rows = Vec::new();
    for &ds in grids {
        let n = (1.0 / ds).round() as usize + 1;
        let ds_exact = 1.0 / (n - 1) as f64;
        let coeffs = coeffs_for(n);
        let x0 = x0_shape.sample(n);
        let steps = (horizon / dt).round() as usize;
        let config = SimConfig {
            ds: ds_exact,
            dr: ds_exact,
            dt,
            horizon,
            snapshot_stride: steps,
            delay_noise: None,
        };
        let mut setup = 0.0;
        let mut analytic_eval = 0.0;
        let mut neural_eval = 0.0;
        for _ in 0..repetitions {
            let started = std::time::Instant::now();
            let kernel = solve_kernel(
                &coeffs,
                delay,
                KernelConfig::with_spacing(ds_exact.min(0.05)),
            )
            .map_err(|e| fail(&e))?;
            setup += started.elapsed().as_secs_f64();
            let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).map_err(|e| fail(&e))?;
            let feedback = AnalyticFeedback::new(law);
            let trace = simulate(&coeffs, delay, &x0, &feedback, config).map_err(|e| fail(&e))?;
            analytic_eval += trace.total_controller_seconds();

            let trace = simulate(&coeffs, delay, &x0, model, config).map_err(|e| fail(&e))?;
            neural_eval += trace.total_controller_seconds();
        }
        let reps = repetitions as f64;
        let row = BenchRow {
            ds,
            analytic_setup_seconds: setup / reps,
            analytic_eval_seconds: analytic_eval / reps,
            neural_eval_seconds: neural_eval / reps,
            speedup: (setup / reps + analytic_eval / reps) / (neural_eval / reps),
            repetitions,
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Convenience: shadow-estimate the worst feedback gap along a trace.
pub fn shadow_epsilon(trace: &Trace, law: &ControlLaw) -> Result<f64, AnalysisError> {
    let mut worst = 0.0f64;
    for snap in &trace.snapshots {
        let exact = law
            .control(&snap.x, &snap.u)
            .map_err(|e| AnalysisError::ProbeFailure(e.to_string()))?;
        worst = worst.max((trace.control[snap.step] - exact).abs());
    }
    Ok(worst)
}

/// Re-evaluate a boundary controller on the snapshots of a trace (used by
/// cross-controller diagnostics).
pub fn replay_controller(
    trace: &Trace,
    controller: &dyn BoundaryController,
    delay: &DelayFunction,
) -> Vec<f64> {
    let n = trace
        .snapshots
        .first()
        .map(|s| s.x.len())
        .unwrap_or_default();
    let tau = delay.resample(n);
    trace
        .snapshots
        .iter()
        .map(|snap| {
            controller.control(&ControllerInput {
                tau: &tau,
                x: &snap.x,
                u: &snap.u,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        let ones = vec![1.0; 41];
        let n = norms(&ones);
        assert!((n.l2 - 1.0).abs() < 1e-12);
        assert_eq!(n.sup, 1.0);
        assert_eq!(n.c1, 1.0);

        let ramp: Vec<f64> = (0..41).map(|i| i as f64 / 40.0).collect();
        let n = norms(&ramp);
        assert!((n.c1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn norm_scaling_and_triangle() {
        let a: Vec<f64> = (0..41).map(|i| (0.3 * i as f64).sin()).collect();
        let b: Vec<f64> = (0..41).map(|i| (0.11 * i as f64).cos()).collect();
        let scaled: Vec<f64> = a.iter().map(|v| -2.5 * v).collect();
        let na = norms(&a);
        let ns = norms(&scaled);
        assert!((ns.l2 - 2.5 * na.l2).abs() < 1e-12);
        assert!((ns.sup - 2.5 * na.sup).abs() < 1e-12);
        assert!((ns.c1 - 2.5 * na.c1).abs() < 1e-12);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        assert!(norms(&sum).l2 <= na.l2 + norms(&b).l2 + 1e-12);
    }

    #[test]
    fn lyapunov_collapses_to_plain_norms() {
        let delay = DelayFunction::new(
            crate::coefficients::DelayFamily::Constant { value: 1.0 },
            21,
        )
        .unwrap();
        let z: Vec<f64> = (0..21).map(|i| (i as f64 * 0.2).sin()).collect();
        let u = Field2::from_fn(21, 21, |s, r| s - r);
        let l = lyapunov(&z, &u, &delay, 0.0, 0.0, 1.0);
        let zl2 = crate::grid::l2_norm(&z);
        let ul2 = u.l2_norm();
        assert!((l.v - (zl2 * zl2 + ul2 * ul2)).abs() < 1e-12);
    }

    fn reference_inputs() -> StabilityInputs {
        StabilityInputs {
            b1: 1.0,
            b2: 1.0,
            tau_upper: 1.0,
            tau_lower: 0.5,
            state_bound: 10.0,
            line_bound: 10.0,
            kernel_bound: 2.0,
            c_sup: 20.0,
            f_sup: 10.0,
            inverse_kernel_bound: Some(5.0),
            epsilon: 0.0,
        }
    }

    #[test]
    fn stability_constants_collapse_for_unit_weights() {
        let c = stability_constants(&reference_inputs()).unwrap();
        assert!((c.amplification - std::f64::consts::E).abs() < 1e-12);
        assert!((c.decay_rate - 1.0).abs() < 1e-12);
        assert!(c.beta1 <= c.beta2);
        assert!(c.m1 > 0.0 && c.m2 > 0.0);
        assert!(c.epsilon_star > 0.0);
    }

    #[test]
    fn swapping_weights_keeps_only_the_amplification() {
        let mut inputs = reference_inputs();
        inputs.b1 = 2.0;
        inputs.b2 = 0.5;
        inputs.tau_upper = 2.0;
        let a = stability_constants(&inputs).unwrap();
        std::mem::swap(&mut inputs.b1, &mut inputs.b2);
        let b = stability_constants(&inputs).unwrap();
        assert_eq!(a.amplification.to_bits(), b.amplification.to_bits());
        assert!((a.decay_rate - b.decay_rate).abs() > 1e-9);
    }

    #[test]
    fn epsilon_star_shrinks_as_the_kernel_bound_grows() {
        // The kernel bound reaches epsilon* through the default
        // inverse-kernel surrogate, so pick coefficients mild enough that
        // that arm of k2 dominates.
        let mut inputs = StabilityInputs {
            c_sup: 1.0,
            f_sup: 0.5,
            inverse_kernel_bound: None,
            ..reference_inputs()
        };
        let small = stability_constants(&inputs).unwrap();
        inputs.kernel_bound = 4.0;
        let large = stability_constants(&inputs).unwrap();
        assert!(large.epsilon_star < small.epsilon_star);
        assert!(large.initial_bound < small.initial_bound);

        // Through k1, a larger kernel bound always tightens the admissible
        // initial set, whichever arm of k2 dominates.
        let mut inputs = reference_inputs();
        let before = stability_constants(&inputs).unwrap();
        inputs.kernel_bound = 40.0;
        let after = stability_constants(&inputs).unwrap();
        assert!(after.initial_bound < before.initial_bound);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let mut inputs = reference_inputs();
        inputs.b1 = 0.0;
        assert!(matches!(
            stability_constants(&inputs),
            Err(AnalysisError::DegenerateBounds(_))
        ));
    }

    #[test]
    fn g_inverse_probe_respects_its_ceiling() {
        let coeffs = CoefficientSet::reference(21);
        let config = ProbeConfig {
            pairs: 25,
            ..ProbeConfig::default()
        };
        let report = lipschitz_probe(ProbeKind::GInverse, &coeffs, config).unwrap();
        assert_eq!(report.pairs, 25);
        assert!(
            report.max_quotient <= report.ceiling,
            "quotient {} vs ceiling {}",
            report.max_quotient,
            report.ceiling
        );
        assert!(report.median_quotient <= report.max_quotient);
    }

    #[test]
    fn identical_delays_are_skipped() {
        // Degenerate pairs are counted rather than dividing by zero; forcing
        // them through the quotient calculation would need identical draws,
        // so exercise the guard directly.
        let u = Field2::from_fn(11, 11, |s, r| s + r);
        let tau = vec![0.5; 11];
        assert_eq!(empirical_read_lipschitz(&u, &tau, &tau), 0.0);
    }
}
