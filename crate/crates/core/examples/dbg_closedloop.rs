use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;
use std::time::Instant;

fn main() {
    let coeffs = CoefficientSet::reference(41);
    let x0f = InitialCondition::reference();
    for (name, fam, config) in [
        ("d1", DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, SimConfig::reference_d1()),
        ("d2", DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, SimConfig::reference_d2()),
    ] {
        let delay = DelayFunction::new(fam, 41).unwrap();
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
        let feedback = AnalyticFeedback::new(law);
        let x0 = x0f.sample(41);
        let t0 = Instant::now();
        let trace = simulate(&coeffs, &delay, &x0, &feedback, config).unwrap();
        let elapsed = t0.elapsed();
        println!("{name}: {elapsed:?} nonfinite={} initial_jump={:.3}", trace.non_finite, trace.initial_jump);
        println!("  x_l2(0)={:.4} x_l2(10)={:.3e} target {:.3e}", trace.initial_x_l2(), trace.final_x_l2(), 0.01 * trace.initial_x_l2());
        println!("  ctrl secs total {:.3}", trace.total_controller_seconds());
        // z(0,t) along the run
        let law = feedback.law();
        let mut worst_z0 = 0.0f64;
        for snap in &trace.snapshots {
            let ts = law.forward_transform(&snap.x, &snap.u).unwrap();
            worst_z0 = worst_z0.max(ts.boundary_abs);
        }
        println!("  max |z(0,t)| over snapshots: {worst_z0:.3e} (threshold {:.2e})", 0.01 * delaybs::grid::sup_abs(&x0));
        // uncompensated
        let tr0 = simulate(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
        println!("  zero ctrl: final {:.3e} vs initial {:.4} nonfinite={}", tr0.final_x_l2(), tr0.initial_x_l2(), tr0.non_finite);
    }
}
