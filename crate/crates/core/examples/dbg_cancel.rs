use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn main() {
    let tau2 = DelayFunction::new(DelayFamily::Constant { value: 2.0 }, 41).unwrap();
    let coeffs = CoefficientSet::new(GainFamily::Ramp { gain: 20.0 }, CouplingFamily::Zero, 41).unwrap();
    let kernel = solve_kernel(&coeffs, &tau2, KernelConfig::default()).unwrap();
    let law = ControlLaw::new(kernel, tau2.clone(), coeffs.clone()).unwrap();
    let feedback = AnalyticFeedback::new(law);
    let x0 = InitialCondition::reference().sample(41);
    // lambda = 1: exact transport
    let config = SimConfig { ds: 0.025, dr: 0.025, dt: 0.025, horizon: 3.5, snapshot_stride: 140, delay_noise: None };
    let trace = simulate_delayed_reference(&coeffs, &tau2, &x0, &feedback, config).unwrap();
    // discrete x1 spill after t=1 (should be ~0)
    println!("x1 spill for t in [1, 3.5]:");
    for (i, t) in trace.times.iter().enumerate() {
        if *t >= 1.0 && i % 8 == 0 {
            println!("  t={t:.2} x1={:+.5} U={:+.4}", trace.outflow[i], trace.control[i]);
        }
    }
    // reconstruct the cancellation at one time: x1(t) = U(t-1) + sum of sources along char
    let dt = config.dt;
    let k_of = |t: f64| (t / dt).round() as usize;
    for t_check in [2.3f64, 2.8] {
        let n_char = 40; // 40 cells from s=0 to s=1 at lambda=1, one cell per step
        let k_end = k_of(t_check);
        let u_inj = trace.control[k_end - n_char];
        let mut acc = 0.0;
        for m in 1..=n_char {
            // at step k_end - n_char + m - 1 the update into node m adds dt * c(s_m) * x1(t - 2) ... source evaluated at node m? upwind: x_next[i] uses source at i
            let k = k_end - n_char + m - 1;
            let t_k = k as f64 * dt;
            let s_m = m as f64 * 0.025;
            acc += dt * coeffs.c(s_m) * trace.outflow_at(t_k - 2.0);
        }
        println!("t={t_check}: x1={:+.5} vs U(t-1)+acc = {:+.5} (U(t-1)={:+.4}, acc={:+.4})",
            trace.outflow[k_end], u_inj + acc, u_inj, acc);
    }
    let _ = law;
}
