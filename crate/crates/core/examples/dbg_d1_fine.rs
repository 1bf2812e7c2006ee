use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn main() {
    let x0f = InitialCondition::reference();
    let delay = DelayFunction::new(DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, 41).unwrap();
    for (ds, dt, dr, kh) in [
        (0.025, 0.02, 0.025, 0.025),     // pinned criterion-1 config
        (0.025, 0.025, 0.025, 0.025),    // exact CFL
        (0.0125, 0.0125, 0.0125, 0.0125),// exact CFL refined
        (0.00625, 0.005, 0.00625, 0.00625), // fine, CFL 0.8
    ] {
        let n = (1.0_f64 / ds).round() as usize + 1;
        let coeffs = CoefficientSet::reference(n);
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::with_spacing(kh)).unwrap();
        let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
        let feedback = AnalyticFeedback::new(law);
        let x0 = x0f.sample(n);
        let steps = (10.0_f64 / dt).round() as usize;
        let config = SimConfig { ds, dr, dt, horizon: 10.0, snapshot_stride: steps / 5, delay_noise: None };
        let trace = simulate(&coeffs, &delay, &x0, &feedback, config).unwrap();
        let series: Vec<String> = trace.snapshots.iter().map(|s| format!("{:.4}", delaybs::grid::l2_norm(&s.x))).collect();
        println!("ds={ds} dt={dt}: final {:.5} target {:.4} | {}", trace.final_x_l2(), 0.01 * trace.initial_x_l2(), series.join(" "));
    }
}
