use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn run(name: &str, fam: DelayFamily, ds: f64, dt: f64) {
    let n = (1.0_f64 / ds).round() as usize + 1;
    let coeffs = CoefficientSet::reference(n);
    let delay = DelayFunction::new(fam, n).unwrap();
    let kernel = solve_kernel(&coeffs, &delay, KernelConfig::with_spacing(ds.min(0.05))).unwrap();
    let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
    let feedback = AnalyticFeedback::new(law);
    let x0 = InitialCondition::reference().sample(n);
    let steps = (10.0 / dt).round() as usize;
    let stride = steps / 100;
    let config = SimConfig { ds, dr: ds, dt, horizon: 10.0, snapshot_stride: stride, delay_noise: None };
    let trace = simulate(&coeffs, &delay, &x0, &feedback, config).unwrap();
    let law = feedback.law();
    let mut worst_z0 = 0.0f64;
    let mut worst_res_all = 0.0f64;
    let mut worst_res_burn = 0.0f64;
    let zs: Vec<(f64, Vec<f64>)> = trace.snapshots.iter().map(|s| (s.time, law.forward_transform(&s.x, &s.u).unwrap().z)).collect();
    for (t, z) in &zs { let _ = t; worst_z0 = worst_z0.max(z[0].abs()); }
    for w in zs.windows(2) {
        let res = transport_residual(&w[0].1, &w[1].1, w[1].0 - w[0].0);
        worst_res_all = worst_res_all.max(res);
        if w[0].0 >= 2.0 { worst_res_burn = worst_res_burn.max(res); }
    }
    println!("{name} ds={ds} dt={dt}: max|z0|={worst_z0:.3e} res_all={worst_res_all:.3} res_t>=2={worst_res_burn:.4}");
}

fn main() {
    let d2 = DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 };
    let d1 = DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 };
    run("d2", d2.clone(), 0.025, 0.005);
    run("d2", d2.clone(), 0.0125, 0.0025);
    run("d1", d1.clone(), 0.025, 0.02);
    run("d1", d1, 0.0125, 0.01);
}
