use delaybs::coefficients::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::controller::ControlLaw;
use delaybs::grid::Field2;

fn main() {
    // Failure 2: tabulated near-boundary delay kernel solve
    for tau1 in [1.0 - 1e-6, 1.0 + 1e-6] {
        let samples: Vec<f64> = (0..41).map(|i| { let s = i as f64 / 40.0; tau1 + 0.3 * (1.0 - s) }).collect();
        let delay = DelayFunction::new(DelayFamily::Tabulated { samples }, 41).unwrap();
        println!("tau1={tau1}: region {:?} g_bar={:.3e}", delay.region(), delay.delayed_time_map().g_bar());
        let map = delay.delayed_time_map();
        println!("  invert(0) -> {:?}", map.invert(0.0));
        let gb = map.g_bar();
        println!("  invert(g_bar={gb:.3e}) -> {:?}", map.invert(gb));
        let coeffs = CoefficientSet::reference(41);
        match solve_kernel(&coeffs, &delay, KernelConfig::default()) {
            Ok(k) => println!("  kernel ok, iters {:?} sup {:.3}", k.iterations(), k.sup_abs()),
            Err(e) => println!("  kernel ERR: {e}"),
        }
    }
    // Failure 3: D1 refined quadrature
    let coeffs = CoefficientSet::reference(41);
    let d1 = DelayFunction::new(DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, 41).unwrap();
    let k = solve_kernel(&coeffs, &d1, KernelConfig::default()).unwrap();
    let law = ControlLaw::new(k, d1, coeffs.clone()).unwrap();
    let x0 = InitialCondition::reference();
    for n in [41usize, 81, 161, 321] {
        let x = x0.sample(n);
        let u = Field2::zeros(n, n);
        println!("D1 U(0) at n={n}: {:.10}", law.control(&x, &u).unwrap());
    }
    let d2 = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    let k2 = solve_kernel(&coeffs, &d2, KernelConfig::default()).unwrap();
    let law2 = ControlLaw::new(k2, d2, coeffs).unwrap();
    for n in [41usize, 81, 161] {
        let x = x0.sample(n);
        let u = Field2::zeros(n, n);
        println!("D2 U(0) at n={n}: {:.10}", law2.control(&x, &u).unwrap());
    }
}
