use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn run(name: &str, coeffs: CoefficientSet, delay: DelayFunction) {
    let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
    let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
    let feedback = AnalyticFeedback::new(law);
    let x0 = InitialCondition::reference().sample(41);
    let config = SimConfig { ds: 0.025, dr: 0.025, dt: 0.02, horizon: 10.0, snapshot_stride: 50, delay_noise: None };
    let trace = simulate_delayed_reference(&coeffs, &delay, &x0, &feedback, config).unwrap();
    let series: Vec<String> = trace.snapshots.iter().map(|s| format!("{:.3}", delaybs::grid::l2_norm(&s.x))).collect();
    println!("{name}: {}", series.join(" "));
}

fn main() {
    let tau2 = DelayFunction::new(DelayFamily::Constant { value: 2.0 }, 41).unwrap();
    // recirculation only, constant large delay
    run("c-only tau=2 ", CoefficientSet::new(GainFamily::Ramp { gain: 20.0 }, CouplingFamily::Zero, 41).unwrap(), tau2.clone());
    // coupling only (no delay influence at all)
    run("f-only tau=2 ", CoefficientSet::new(GainFamily::Zero, CouplingFamily::Harmonic { cos_amp: 5.0, cos_phase: 0.0, sin_amp: 5.0, sin_phase: 0.0 }, 41).unwrap(), tau2.clone());
    // both, constant delay
    run("c+f tau=2    ", CoefficientSet::reference(41), tau2);
    // reference d1 delay, c only
    let d1 = DelayFunction::new(DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, 41).unwrap();
    run("c-only cosine", CoefficientSet::new(GainFamily::Ramp { gain: 20.0 }, CouplingFamily::Zero, 41).unwrap(), d1);
}
