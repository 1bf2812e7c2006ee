use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::grid::Field2;
use std::time::Instant;

// hand-rolled sim with explicit upwind u-advance (paper-plausible scheme)
fn main() {
    let delay = DelayFunction::new(DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, 41).unwrap();
    let coeffs = CoefficientSet::reference(41);
    let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
    let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
    let feedback = AnalyticFeedback::new(law);
    let x0 = InitialCondition::reference().sample(41);
    let (ds, dr, dt) = (0.025, 0.025, 0.02);
    let n = 41;
    let steps = (10.0_f64 / dt).round() as usize;
    let tau: Vec<f64> = (0..n).map(|i| delay.eval(i as f64 / 40.0)).collect();
    let mut x = x0.clone();
    let mut u = Field2::zeros(n, n);
    let mut xn = vec![0.0; n];
    let mut un = Field2::zeros(n, n);
    let t0 = Instant::now();
    let mut norm10 = 0.0;
    for k in 0..=steps {
        let tau_ch: Vec<f64> = tau.clone();
        let b = feedback.boundary_value(&ControllerInput { tau: &tau_ch, x: &x, u: &u });
        x[0] = b;
        if k == steps { norm10 = delaybs::grid::l2_norm(&x); break; }
        // x upwind
        for i in 1..n {
            let mut coup = 0.5 * (coeffs.f(i as f64 * ds, i as f64 * ds) * x[i] + coeffs.f(i as f64 * ds, 1.0) * x[n-1]);
            for j in i+1..n-1 { coup += coeffs.f(i as f64 * ds, j as f64 * ds) * x[j]; }
            coup *= ds;
            let src = coeffs.c(i as f64 * ds) * u.at(i, 0) + coup;
            xn[i] = x[i] - dt / ds * (x[i] - x[i-1]) + dt * src;
        }
        xn[0] = x[0];
        // u explicit upwind in r: tau u_t = u_r -> u_next = u + dt/(tau dr) (u(j+1)-u(j)); boundary j=n-1: x1_new
        for i in 0..n {
            let v = dt / (tau[i] * dr);
            for j in 0..n-1 {
                un.set(i, j, u.at(i, j) + v * (u.at(i, j+1) - u.at(i, j)));
            }
            un.set(i, n-1, xn[n-1]);
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut u, &mut un);
    }
    println!("explicit-upwind u: x_l2(10) = {norm10:.5} target 0.0383, {:?}", t0.elapsed());
}
