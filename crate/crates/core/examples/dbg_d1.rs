use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn main() {
    let x0f = InitialCondition::reference();
    let delay = DelayFunction::new(DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, 41).unwrap();
    for (ds, dt, dr) in [(0.025, 0.02, 0.025), (0.0125, 0.01, 0.0125), (0.025, 0.02, 0.0125), (0.025, 0.02, 0.00625), (0.025, 0.005, 0.025)] {
        let n = (1.0_f64 / ds).round() as usize + 1;
        let coeffs = CoefficientSet::reference(n);
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::with_spacing(ds)).unwrap();
        let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
        let feedback = AnalyticFeedback::new(law);
        let x0 = x0f.sample(n);
        let steps = (10.0_f64 / dt).round() as usize;
        let config = SimConfig { ds, dr, dt, horizon: 10.0, snapshot_stride: steps / 10, delay_noise: None };
        let trace = simulate(&coeffs, &delay, &x0, &feedback, config).unwrap();
        let series: Vec<String> = trace.snapshots.iter().map(|s| format!("{:.3}", l2(&s.x))).collect();
        println!("ds={ds} dt={dt} dr={dr}: final {:.4} target {:.4} | {}", trace.final_x_l2(), 0.01 * trace.initial_x_l2(), series.join(" "));
    }
}
fn l2(x: &[f64]) -> f64 { delaybs::grid::l2_norm(x) }
