use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn main() {
    let tau2 = DelayFunction::new(DelayFamily::Constant { value: 2.0 }, 41).unwrap();
    let coeffs = CoefficientSet::new(GainFamily::Ramp { gain: 20.0 }, CouplingFamily::Zero, 41).unwrap();
    let kernel = solve_kernel(&coeffs, &tau2, KernelConfig::default()).unwrap();
    println!("kernel sup = {:.3e}", kernel.sup_abs());
    let law = ControlLaw::new(kernel, tau2.clone(), coeffs.clone()).unwrap();
    let feedback = AnalyticFeedback::new(law);
    let x0 = InitialCondition::reference().sample(41);
    let config = SimConfig { ds: 0.025, dr: 0.025, dt: 0.02, horizon: 4.0, snapshot_stride: 10, delay_noise: None };
    let trace = simulate_delayed_reference(&coeffs, &tau2, &x0, &feedback, config).unwrap();
    for (i, t) in trace.times.iter().enumerate().step_by(5) {
        println!("t={t:.2} U={:+.4} x1={:+.4} xl2={:.4}", trace.control[i], trace.outflow[i], trace.x_l2[i]);
        if *t > 2.5 { break; }
    }
}
