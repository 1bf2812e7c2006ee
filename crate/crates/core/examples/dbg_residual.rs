use delaybs::coefficients::{CoefficientSet, DelayFamily, DelayFunction};
use delaybs::kernel::{solve_kernel, KernelConfig};
use std::time::Instant;

fn main() {
    let coeffs = CoefficientSet::reference(41);
    for (name, fam) in [
        ("d1 cosine", DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }),
        ("d2 exp", DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }),
    ] {
        let delay = DelayFunction::new(fam, 41).unwrap();
        let t = Instant::now();
        let k = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        let el = t.elapsed();
        let (h1, h2) = k.residual_history();
        println!("{name}: {el:?} iters {:?} sup {:.3}", k.iterations(), k.sup_abs());
        println!("  b1 residuals: {:?}", h1.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>());
        println!("  b2 residuals: {:?}", h2.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>());
    }
    // fine grid timing
    let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    for h in [0.025, 0.0125, 0.00625] {
        let t = Instant::now();
        let k = solve_kernel(&coeffs, &delay, KernelConfig::with_spacing(h)).unwrap();
        println!("h={h}: {:?} iters {:?} sup {:.4}", t.elapsed(), k.iterations(), k.sup_abs());
    }
}
