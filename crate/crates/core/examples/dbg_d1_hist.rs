use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn main() {
    let x0f = InitialCondition::reference();
    for (name, fam, dt) in [
        ("d1", DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, 0.02),
        ("d2", DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 0.005),
    ] {
        let delay = DelayFunction::new(fam, 41).unwrap();
        let coeffs = CoefficientSet::reference(41);
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
        let feedback = AnalyticFeedback::new(law);
        let x0 = x0f.sample(41);
        let steps = (10.0_f64 / dt).round() as usize;
        let config = SimConfig { ds: 0.025, dr: 0.025, dt, horizon: 10.0, snapshot_stride: steps / 10, delay_noise: None };
        let trace = simulate_delayed_reference(&coeffs, &delay, &x0, &feedback, config).unwrap();
        let series: Vec<String> = trace.snapshots.iter().map(|s| format!("{:.3}", delaybs::grid::l2_norm(&s.x))).collect();
        println!("{name} history-form: final {:.4} target {:.4} | {}", trace.final_x_l2(), 0.01 * trace.initial_x_l2(), series.join(" "));
    }
}
