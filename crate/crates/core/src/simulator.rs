//! Closed-loop transport simulation.
//!
//! Two plant representations are integrated and cross-checked against each
//! other: the delay-free form that carries the recirculation through a 3-D
//! delay-line state `u(s, r, t)`, and the direct delayed form that reads the
//! outflow history `x(1, t - tau(s))` from a buffer. The state `x` advances
//! by first-order upwinding with forward Euler; the delay line advances
//! exactly along its characteristics (the explicit scheme would need
//! `dt <= min(tau) * dr`, which the reference small-delay step violates).

use crate::coefficients::{CoefficientSet, DelayFunction};
use crate::controller::{BoundaryController, ControllerInput};
use crate::grid::{l2_norm, Field2, UniformGrid};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("CFL violation: dt = {dt} exceeds ds = {ds}")]
    CflViolation { dt: f64, ds: f64 },
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error("initial state has {got} nodes, grid needs {expected}")]
    GridMismatch { expected: usize, got: usize },
}

/// Gaussian measurement noise applied to the delay channel handed to the
/// controller. The plant itself always evolves with the true delay.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DelayNoise {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub ds: f64,
    pub dr: f64,
    pub dt: f64,
    pub horizon: f64,
    pub snapshot_stride: usize,
    pub delay_noise: Option<DelayNoise>,
}

impl SimConfig {
    /// Reference large-delay configuration: spatial steps 0.025, time step
    /// 0.02, horizon 10.
    pub fn reference_d1() -> Self {
        Self {
            ds: 0.025,
            dr: 0.025,
            dt: 0.02,
            horizon: 10.0,
            snapshot_stride: 25,
            delay_noise: None,
        }
    }

    /// Reference small-delay configuration: spatial steps 0.025, time step
    /// 0.005, horizon 10.
    pub fn reference_d2() -> Self {
        Self {
            ds: 0.025,
            dr: 0.025,
            dt: 0.005,
            horizon: 10.0,
            snapshot_stride: 100,
            delay_noise: None,
        }
    }

    pub fn with_horizon(mut self, horizon: f64, snapshot_stride: usize) -> Self {
        self.horizon = horizon;
        self.snapshot_stride = snapshot_stride;
        self
    }

    fn validate(&self) -> Result<(UniformGrid, UniformGrid, usize), SimError> {
        if !(self.ds > 0.0 && self.ds <= 0.1 && self.dr > 0.0 && self.dr <= 0.1) {
            return Err(SimError::BadConfig(format!(
                "spatial steps must lie in (0, 0.1], got ds = {}, dr = {}",
                self.ds, self.dr
            )));
        }
        if self.dt > self.ds + 1e-12 {
            return Err(SimError::CflViolation {
                dt: self.dt,
                ds: self.ds,
            });
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(SimError::BadConfig("dt and horizon must be positive".into()));
        }
        let steps = (self.horizon / self.dt).round() as usize;
        if steps == 0 {
            return Err(SimError::BadConfig("horizon shorter than one step".into()));
        }
        if self.snapshot_stride == 0 || steps % self.snapshot_stride != 0 {
            return Err(SimError::BadConfig(format!(
                "snapshot stride {} must divide the step count {steps}",
                self.snapshot_stride
            )));
        }
        Ok((
            UniformGrid::from_spacing(self.ds),
            UniformGrid::from_spacing(self.dr),
            steps,
        ))
    }
}

/// Plant state at one instant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantState {
    pub step: usize,
    pub time: f64,
    pub x: Vec<f64>,
    pub u: Field2,
}

/// Time series and snapshots of one closed-loop run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub config: SimConfig,
    pub controller: String,
    pub times: Vec<f64>,
    pub control: Vec<f64>,
    pub x_l2: Vec<f64>,
    pub u_l2: Vec<f64>,
    pub outflow: Vec<f64>,
    pub controller_seconds: Vec<f64>,
    pub snapshots: Vec<PlantState>,
    pub initial_jump: f64,
    pub non_finite: bool,
}

impl Trace {
    pub fn final_x_l2(&self) -> f64 {
        *self.x_l2.last().expect("trace nonempty")
    }

    pub fn initial_x_l2(&self) -> f64 {
        self.x_l2[0]
    }

    /// Outflow history `x(1, t)` interpolated linearly in time; zero before
    /// the start per the zero-history convention.
    pub fn outflow_at(&self, t: f64) -> f64 {
        history_at(&self.outflow, self.config.dt, t)
    }

    pub fn total_controller_seconds(&self) -> f64 {
        self.controller_seconds.iter().sum()
    }
}

fn history_at(series: &[f64], dt: f64, t: f64) -> f64 {
    if t < 0.0 || series.is_empty() {
        return 0.0;
    }
    let pos = t / dt;
    let i = pos.floor() as usize;
    if i + 1 >= series.len() {
        return *series.last().unwrap();
    }
    let w = pos - i as f64;
    series[i] * (1.0 - w) + series[i + 1] * w
}

struct NoiseState {
    rng: ChaCha8Rng,
    sigma: f64,
}

impl NoiseState {
    fn new(noise: DelayNoise) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
            sigma: noise.sigma,
        }
    }

    /// Box-Muller standard normal.
    fn gaussian(&mut self) -> f64 {
        use rand::Rng;
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn perturb(&mut self, nominal: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(nominal) {
            *o = v + self.sigma * self.gaussian();
        }
    }
}

/// Shared per-run machinery: recording, boundary injection, noise.
struct Recorder<'a> {
    controller: &'a dyn BoundaryController,
    noise: Option<NoiseState>,
    tau_nominal: Vec<f64>,
    tau_channel: Vec<f64>,
    trace: Trace,
}

impl<'a> Recorder<'a> {
    fn new(
        controller: &'a dyn BoundaryController,
        delay: &DelayFunction,
        config: SimConfig,
        n_s: usize,
    ) -> Self {
        let tau_nominal = delay.resample(n_s);
        let tau_channel = tau_nominal.clone();
        let noise = config.delay_noise.map(NoiseState::new);
        Self {
            controller,
            noise,
            tau_nominal,
            tau_channel,
            trace: Trace {
                config,
                controller: controller.name().to_string(),
                times: Vec::new(),
                control: Vec::new(),
                x_l2: Vec::new(),
                u_l2: Vec::new(),
                outflow: Vec::new(),
                controller_seconds: Vec::new(),
                snapshots: Vec::new(),
                initial_jump: 0.0,
                non_finite: false,
            },
        }
    }

    /// Evaluate the controller on the step-start state and inject its output
    /// at the inflow boundary. Records the series entry and the periodic
    /// snapshot. Returns false when the state has left the finite range (the
    /// trace is then truncated and flagged).
    fn inject_and_record(&mut self, step: usize, t: f64, x: &mut [f64], u: &Field2) -> bool {
        if let Some(noise) = self.noise.as_mut() {
            let nominal = std::mem::take(&mut self.tau_nominal);
            noise.perturb(&nominal, &mut self.tau_channel);
            self.tau_nominal = nominal;
        }
        let started = Instant::now();
        let boundary = self.controller.boundary_value(&ControllerInput {
            tau: &self.tau_channel,
            x,
            u,
        });
        let spent = started.elapsed().as_secs_f64();
        if step == 0 {
            self.trace.initial_jump = (x[0] - boundary).abs();
        }
        x[0] = boundary;

        let finite = boundary.is_finite() && x.iter().all(|v| v.is_finite()) && u.all_finite();
        if !finite {
            self.trace.non_finite = true;
            return false;
        }
        self.trace.times.push(t);
        self.trace.control.push(boundary);
        self.trace.x_l2.push(l2_norm(x));
        self.trace.u_l2.push(u.l2_norm());
        self.trace.outflow.push(*x.last().unwrap());
        self.trace.controller_seconds.push(spent);
        if step % self.trace.config.snapshot_stride == 0 {
            self.trace.snapshots.push(PlantState {
                step,
                time: t,
                x: x.to_vec(),
                u: u.clone(),
            });
        }
        true
    }
}

/// Advance `x` one upwind/forward-Euler step. The source combines the
/// recirculation read (whatever representation supplies it) and the
/// trapezoid of the integral coupling.
fn advance_state(
    x: &[f64],
    x_next: &mut [f64],
    coeffs: &CoefficientSet,
    f_table: &[f64],
    recirculation: &dyn Fn(usize) -> f64,
    ds: f64,
    dt: f64,
) {
    let n = x.len();
    let lambda = dt / ds;
    for i in 1..n {
        // trapz_{q in [s_i, 1]} f(s_i, q) x(q)
        let row = &f_table[i * n..(i + 1) * n];
        let mut coupling = 0.5 * (row[i] * x[i] + row[n - 1] * x[n - 1]);
        for j in i + 1..n - 1 {
            coupling += row[j] * x[j];
        }
        coupling *= ds;
        let source = coeffs.c(i as f64 * ds) * recirculation(i) + coupling;
        x_next[i] = x[i] - lambda * (x[i] - x[i - 1]) + dt * source;
    }
    x_next[0] = x[0];
}

fn f_table(coeffs: &CoefficientSet, grid: UniformGrid) -> Vec<f64> {
    let n = grid.len();
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            table[i * n + j] = coeffs.f(grid.node(i), grid.node(j));
        }
    }
    table
}

/// Simulate the delay-free representation: `x` coupled to the delay-line
/// state `u`, which advances exactly along characteristics with inflow fill
/// from the outflow boundary.
pub fn simulate(
    coeffs: &CoefficientSet,
    delay: &DelayFunction,
    x0: &[f64],
    controller: &dyn BoundaryController,
    config: SimConfig,
) -> Result<Trace, SimError> {
    let (s_grid, r_grid, steps) = config.validate()?;
    let n_s = s_grid.len();
    let n_r = r_grid.len();
    if x0.len() != n_s {
        return Err(SimError::GridMismatch {
            expected: n_s,
            got: x0.len(),
        });
    }

    let mut x = x0.to_vec();
    let mut x_next = vec![0.0; n_s];
    let mut u = Field2::zeros(n_s, n_r);
    let mut u_next = Field2::zeros(n_s, n_r);
    let f_tab = f_table(coeffs, s_grid);
    let tau_plant: Vec<f64> = s_grid.nodes().map(|s| delay.eval(s)).collect();
    let mut recorder = Recorder::new(controller, delay, config, n_s);

    for step in 0..=steps {
        let t = step as f64 * config.dt;
        if !recorder.inject_and_record(step, t, &mut x, &u) {
            break;
        }
        if step == steps {
            break;
        }

        // x first: the delay-line inflow needs the new outflow value.
        {
            let u_ref = &u;
            let recirculation = |i: usize| u_ref.at(i, 0);
            advance_state(&x, &mut x_next, coeffs, &f_tab, &recirculation, config.ds, config.dt);
        }
        let outflow_old = *x.last().unwrap();
        let outflow_new = *x_next.last().unwrap();

        // Delay line along characteristics: u(s, r, t+dt) = u(s, r + dt/tau(s), t),
        // reading the outflow boundary when the foot leaves the domain.
        for i in 0..n_s {
            let shift = config.dt / tau_plant[i];
            for ir in 0..n_r {
                let r = ir as f64 * config.dr;
                let foot = r + shift;
                let value = if foot <= 1.0 {
                    u.row_interp(i, foot)
                } else {
                    // u(s, r, t+dt) = x(1, t + dt - tau(s)(1 - r))
                    let back = tau_plant[i] * (1.0 - r);
                    let w = ((config.dt - back) / config.dt).clamp(0.0, 1.0);
                    outflow_old * (1.0 - w) + outflow_new * w
                };
                u_next.set(i, ir, value);
            }
        }

        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut u, &mut u_next);
    }
    Ok(recorder.trace)
}

/// Simulate the direct delayed representation: the recirculation term reads
/// `x(1, t - tau(s))` from the outflow history, with zero history before the
/// start. The delay-line state handed to the controller is synthesized from
/// the same history along the characteristics.
pub fn simulate_delayed_reference(
    coeffs: &CoefficientSet,
    delay: &DelayFunction,
    x0: &[f64],
    controller: &dyn BoundaryController,
    config: SimConfig,
) -> Result<Trace, SimError> {
    let (s_grid, r_grid, steps) = config.validate()?;
    let n_s = s_grid.len();
    let n_r = r_grid.len();
    if x0.len() != n_s {
        return Err(SimError::GridMismatch {
            expected: n_s,
            got: x0.len(),
        });
    }

    let mut x = x0.to_vec();
    let mut x_next = vec![0.0; n_s];
    let mut u = Field2::zeros(n_s, n_r);
    let f_tab = f_table(coeffs, s_grid);
    let tau_plant: Vec<f64> = s_grid.nodes().map(|s| delay.eval(s)).collect();
    let mut history: Vec<f64> = Vec::with_capacity(steps + 1);
    let mut recorder = Recorder::new(controller, delay, config, n_s);

    for step in 0..=steps {
        let t = step as f64 * config.dt;
        // Synthesize the delay line from the recorded history so norm series
        // and controller inputs match the delay-free representation.
        history.push(*x.last().unwrap());
        for i in 0..n_s {
            for ir in 0..n_r {
                let r = ir as f64 * config.dr;
                let lag = tau_plant[i] * (1.0 - r);
                u.set(i, ir, history_at(&history, config.dt, t - lag));
            }
        }
        let recorded = recorder.inject_and_record(step, t, &mut x, &u);
        *history.last_mut().unwrap() = *x.last().unwrap();
        if !recorded || step == steps {
            break;
        }

        let recirculation = |i: usize| history_at(&history, config.dt, t - tau_plant[i]);
        advance_state(&x, &mut x_next, coeffs, &f_tab, &recirculation, config.ds, config.dt);
        std::mem::swap(&mut x, &mut x_next);
    }
    Ok(recorder.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DelayFamily, InitialCondition, Region, ScenarioSampler};
    use crate::controller::ZeroController;
    use crate::grid::sup_abs;

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

    fn short_config() -> SimConfig {
        SimConfig {
            ds: 0.025,
            dr: 0.025,
            dt: 0.02,
            horizon: 2.0,
            snapshot_stride: 10,
            delay_noise: None,
        }
    }

    #[test]
    fn config_validation_catches_bad_steps() {
        let mut config = short_config();
        config.dt = 0.05;
        assert!(matches!(
            simulate(
                &CoefficientSet::zero(41),
                &d2_delay(),
                &vec![0.0; 41],
                &ZeroController,
                config
            ),
            Err(SimError::CflViolation { .. })
        ));
        let mut config = short_config();
        config.snapshot_stride = 7;
        assert!(matches!(
            simulate(
                &CoefficientSet::zero(41),
                &d2_delay(),
                &vec![0.0; 41],
                &ZeroController,
                config
            ),
            Err(SimError::BadConfig(_))
        ));
    }

    #[test]
    fn pure_transport_moves_the_profile_out() {
        // c = f = 0, zero control: x(s, t) = x0(s - t) for s > t, else 0,
        // up to first-order smearing.
        let coeffs = CoefficientSet::zero(41);
        let x0: Vec<f64> = (0..41)
            .map(|i| {
                let s = i as f64 / 40.0;
                (-(s - 0.5) * (s - 0.5) / 0.02).exp()
            })
            .collect();
        let config = SimConfig {
            horizon: 0.25,
            snapshot_stride: 1,
            dt: 0.0125,
            ..short_config()
        };
        let trace = simulate(&coeffs, &d2_delay(), &x0, &ZeroController, config).unwrap();
        let last = trace.snapshots.last().unwrap();
        let mut worst = 0.0f64;
        for (i, &v) in last.x.iter().enumerate() {
            let s = i as f64 / 40.0;
            let want = if s >= 0.25 {
                (-(s - 0.75) * (s - 0.75) / 0.02).exp()
            } else {
                0.0
            };
            worst = worst.max((v - want).abs());
        }
        // O(ds) accuracy with a moderate constant for the Gaussian profile.
        assert!(worst < 0.2, "transport error {worst}");

        // Upwind monotonicity: sup never grows without sources.
        let sups: Vec<f64> = trace.snapshots.iter().map(|s| sup_abs(&s.x)).collect();
        for w in sups.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn boundary_identity_holds_after_every_step() {
        let coeffs = CoefficientSet::reference(41);
        let x0 = InitialCondition::reference().sample(41);
        let config = SimConfig {
            snapshot_stride: 1,
            ..short_config()
        };
        let trace = simulate(&coeffs, &d2_delay(), &x0, &ZeroController, config).unwrap();
        for snap in &trace.snapshots[1..] {
            let outflow = *snap.x.last().unwrap();
            for i in 0..snap.u.rows() {
                assert_eq!(snap.u.at(i, snap.u.cols() - 1), outflow);
            }
        }
    }

    #[test]
    fn delay_line_reproduces_the_outflow_history() {
        // u(s, 0, t) = x(1, t - tau(s)) once the line has filled.
        let coeffs = CoefficientSet::reference(41);
        let delay = d2_delay();
        let x0 = InitialCondition::reference().sample(41);
        let config = SimConfig {
            horizon: 2.0,
            snapshot_stride: 1,
            dt: 0.005,
            ..short_config()
        };
        let trace = simulate(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
        let tau_bar = delay.tau_sup();
        let mut worst = 0.0f64;
        let mut scale = 1.0f64;
        for snap in &trace.snapshots {
            if snap.time < tau_bar {
                continue;
            }
            scale = scale.max(sup_abs(&snap.x));
            for i in 0..41 {
                let tau = delay.eval(i as f64 / 40.0);
                let want = trace.outflow_at(snap.time - tau);
                worst = worst.max((snap.u.at(i, 0) - want).abs());
            }
        }
        assert!(
            worst <= 5.0 * (config.ds + config.dt) * scale,
            "delay-line drift {worst}, scale {scale}"
        );
    }

    #[test]
    fn two_representations_agree_for_zero_gain() {
        // With c = 0 the delay never enters: both forms integrate the same
        // equation and agree to roundoff.
        let coeffs = CoefficientSet::new(
            crate::coefficients::GainFamily::Zero,
            crate::coefficients::CouplingFamily::Harmonic {
                cos_amp: 5.0,
                cos_phase: 0.0,
                sin_amp: 5.0,
                sin_phase: 0.0,
            },
            41,
        )
        .unwrap();
        let x0 = InitialCondition::reference().sample(41);
        let a = simulate(&coeffs, &d2_delay(), &x0, &ZeroController, short_config()).unwrap();
        let b = simulate_delayed_reference(&coeffs, &d2_delay(), &x0, &ZeroController, short_config())
            .unwrap();
        for (na, nb) in a.x_l2.iter().zip(&b.x_l2) {
            assert!((na - nb).abs() < 1e-12);
        }
    }

    #[test]
    fn representations_agree_on_random_scenarios() {
        let mut sampler = ScenarioSampler::new(5);
        let coeffs = CoefficientSet::reference(41);
        for trial in 0..4 {
            let region = if trial % 2 == 0 { Region::D1 } else { Region::D2 };
            let scenario = sampler.sample_scenario(region).unwrap();
            let x0 = scenario.initial.sample(41);
            // Long delays need a finer delay line: sub-cell characteristic
            // shifts otherwise smear the recirculation reads.
            let dr = match region {
                Region::D1 => 0.0025,
                Region::D2 => 0.025,
            };
            let config = SimConfig {
                ds: 0.025,
                dr,
                dt: 0.005,
                horizon: 3.0,
                snapshot_stride: 100,
                delay_noise: None,
            };
            let a = simulate(&coeffs, &scenario.delay, &x0, &ZeroController, config).unwrap();
            let b = simulate_delayed_reference(
                &coeffs,
                &scenario.delay,
                &x0,
                &ZeroController,
                config,
            )
            .unwrap();
            let sup: f64 = a
                .x_l2
                .iter()
                .chain(&b.x_l2)
                .fold(1.0f64, |m, &v| m.max(v));
            let worst = a
                .x_l2
                .iter()
                .zip(&b.x_l2)
                .map(|(na, nb)| (na - nb).abs())
                .fold(0.0f64, f64::max);
            assert!(
                worst <= 5.0 * (config.ds + config.dt) * sup,
                "trial {trial}: drift {worst}, sup {sup}"
            );
        }
    }

    #[test]
    fn non_finite_states_truncate_and_flag() {
        struct Bomb;
        impl BoundaryController for Bomb {
            fn control(&self, _input: &ControllerInput<'_>) -> f64 {
                f64::NAN
            }
            fn name(&self) -> &'static str {
                "bomb"
            }
        }
        let coeffs = CoefficientSet::zero(41);
        let x0 = vec![1.0; 41];
        let trace = simulate(&coeffs, &d2_delay(), &x0, &Bomb, short_config()).unwrap();
        assert!(trace.non_finite);
        assert!(trace.times.is_empty());
    }
}
