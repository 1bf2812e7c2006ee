use delaybs::coefficients::{CoefficientSet, DelayFamily, DelayFunction};
use delaybs::kernel::{solve_kernel, KernelBranch, KernelConfig, KernelTerms};

fn main() {
    let coeffs = CoefficientSet::reference(41);
    let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
    let map = delay.delayed_time_map();
    let h = kernel.grid().spacing();
    let terms = KernelTerms::new(&coeffs, &map, h);
    println!("iters {:?} residual {:.3e} sup {:.4}", kernel.iterations(), kernel.residual(), kernel.sup_abs());
    let n = kernel.grid().len();
    let mut worst = (0.0f64, 0, 0);
    for i in 0..n { for j in i..n {
        let s = i as f64 * h; let q = j as f64 * h;
        let expected = match kernel.branch(i,j) {
            KernelBranch::One => terms.psi1(kernel.field(), s, q) - terms.xi1(s, q),
            KernelBranch::Two => terms.psi1(kernel.field(), s, q) - terms.xi1(s, q)
                - terms.xi2(s,q).unwrap() + terms.psi21(kernel.field(), s,q).unwrap() + terms.psi22(kernel.field(), s,q).unwrap(),
        };
        let d = (expected - kernel.value(i,j)).abs();
        if d > worst.0 { worst = (d, i, j); }
    }}
    let (d, i, j) = worst;
    let s = i as f64 * h; let q = j as f64 * h;
    println!("worst defect {d:.3e} at ({i},{j}) s={s} q={q} branch {:?}", kernel.branch(i,j));
    println!("  K        = {:.6}", kernel.value(i,j));
    println!("  psi1     = {:.6}", terms.psi1(kernel.field(), s, q));
    println!("  xi1      = {:.6}", terms.xi1(s, q));
    if kernel.branch(i,j) == KernelBranch::Two {
        println!("  xi2      = {:.6}", terms.xi2(s,q).unwrap());
        println!("  psi21    = {:.6}", terms.psi21(kernel.field(), s,q).unwrap());
        println!("  psi22    = {:.6}", terms.psi22(kernel.field(), s,q).unwrap());
        println!("  split    = {:.6}", terms.psi_split(s,q).unwrap());
        println!("  g_inv(sigma) = {:.6}", map.invert(s+1.0-q).unwrap());
        println!("  g_bar={:.6} g(1)={:.6} tau1={:.6}", map.g_bar(), map.g(1.0), delay.eval(1.0));
    }
}
