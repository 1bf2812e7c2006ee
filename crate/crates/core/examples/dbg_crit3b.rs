use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::simulator::*;

fn run(name: &str, fam: DelayFamily, ds: f64, dt: f64) -> (f64, f64, f64) {
    let n = (1.0_f64 / ds).round() as usize + 1;
    let coeffs = CoefficientSet::reference(n);
    let delay = DelayFunction::new(fam, n).unwrap();
    let kernel = solve_kernel(&coeffs, &delay, KernelConfig::with_spacing(ds.min(0.05))).unwrap();
    let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
    let feedback = AnalyticFeedback::new(law);
    let x0 = InitialCondition::reference().sample(n);
    let steps = (10.0 / dt).round() as usize;
    let config = SimConfig { ds, dr: ds, dt, horizon: 10.0, snapshot_stride: steps / 100, delay_noise: None };
    let trace = simulate(&coeffs, &delay, &x0, &feedback, config).unwrap();
    let law = feedback.law();
    let zs: Vec<(f64, Vec<f64>)> = trace.snapshots.iter().map(|s| (s.time, law.forward_transform(&s.x, &s.u).unwrap().z)).collect();
    let mut sups: Vec<f64> = Vec::new();
    let mut l2_acc = 0.0;
    let mut count = 0.0;
    for w in zs.windows(2) {
        if w[0].0 < 1.5 { continue; }
        let (z0, z1) = (&w[0].1, &w[1].1);
        let dtp = w[1].0 - w[0].0;
        let h = 1.0 / (z0.len() - 1) as f64;
        let mut sup = 0.0f64;
        for i in 1..z0.len() - 1 {
            let r = (z1[i] - z0[i]) / dtp + (z0[i + 1] - z0[i - 1]) / (2.0 * h);
            sup = sup.max(r.abs());
            l2_acc += r * r;
            count += 1.0;
        }
        sups.push(sup);
    }
    sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sups[sups.len() / 2];
    let sup_max = *sups.last().unwrap();
    let l2 = (l2_acc / count).sqrt();
    println!("{name} ds={ds}: median {median:.4} sup {sup_max:.4} rms {l2:.4}");
    (median, sup_max, l2)
}

fn main() {
    let d2 = DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 };
    let d1 = DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 };
    let a = run("d2", d2.clone(), 0.025, 0.005);
    let b = run("d2", d2, 0.0125, 0.0025);
    println!("d2 factors: median {:.2} sup {:.2} rms {:.2}", a.0 / b.0, a.1 / b.1, a.2 / b.2);
    let a = run("d1", d1.clone(), 0.025, 0.02);
    let b = run("d1", d1, 0.0125, 0.01);
    println!("d1 factors: median {:.2} sup {:.2} rms {:.2}", a.0 / b.0, a.1 / b.1, a.2 / b.2);
}
