use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn main() {
    let x0f = InitialCondition::reference();
    for (name, fam) in [
        ("d1", DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }),
        ("d2", DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }),
    ] {
        let delay = DelayFunction::new(fam, 41).unwrap();
        let coeffs = CoefficientSet::reference(41);
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
        let feedback = AnalyticFeedback::new(law);
        let x0 = x0f.sample(41);
        let dt = if name == "d1" { 0.02 } else { 0.005 };
        let steps = (4.0_f64 / dt).round() as usize;
        let config = SimConfig { ds: 0.025, dr: 0.025, dt, horizon: 4.0, snapshot_stride: steps / 40, delay_noise: None };
        let trace = simulate(&coeffs, &delay, &x0, &feedback, config).unwrap();
        let law = feedback.law();
        println!("{name}: dt_snap = {}", config.dt * config.snapshot_stride as f64);
        let mut snaps = trace.snapshots.iter();
        let mut prev = law.forward_transform(&snaps.next().unwrap().x, &snaps.next().unwrap().u).unwrap();
        // recompute aligned
        let mut zs: Vec<(f64, Vec<f64>)> = Vec::new();
        for snap in &trace.snapshots {
            let ts = law.forward_transform(&snap.x, &snap.u).unwrap();
            zs.push((snap.time, ts.z));
        }
        let _ = &mut prev;
        for w in zs.windows(2).step_by(8) {
            let (t0, z0) = &w[0];
            let (t1, z1) = &w[1];
            let res = delaybs::controller::transport_residual(z0, z1, t1 - t0);
            let zn = delaybs::grid::l2_norm(z0);
            println!("  t={t0:.2}: |z|={zn:.4} transport residual {res:.3}");
        }
    }
}
