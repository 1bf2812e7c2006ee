use delaybs::coefficients::*;
fn main() {
    let tau1 = 1.0 - 1e-6;
    let samples: Vec<f64> = (0..41).map(|i| { let s = i as f64 / 40.0; tau1 + 0.3 * (1.0 - s) }).collect();
    let delay = DelayFunction::new(DelayFamily::Tabulated { samples: samples.clone() }, 41).unwrap();
    let map = delay.delayed_time_map();
    let y = map.g_bar();
    const BOUND_SCAN: usize = 2048;
    let scan: Vec<f64> = (0..=BOUND_SCAN).map(|i| { let s = i as f64 / BOUND_SCAN as f64; s - delay.eval(s) }).collect();
    let m = scan.len() - 1;
    println!("scan[m] - y = {:.3e}", scan[m] - y);
    println!("scan[m-1] - y = {:.3e}", scan[m - 1] - y);
    let mut bracket = None;
    for j in (0..m).rev() {
        let a = scan[j] - y;
        let b = scan[j + 1] - y;
        if a == 0.0 && b == 0.0 { continue; }
        if a * b <= 0.0 { bracket = Some(j); break; }
    }
    println!("bracket = {bracket:?}");
    // now replicate cubic
    if let Some(j) = bracket {
        let a = j as f64 / m as f64;
        let b = (j + 1) as f64 / m as f64;
        println!("a={a} b={b}");
        let g: Vec<f64> = delay.grid().nodes().map(|s| s - delay.eval(s)).collect();
        let n = g.len();
        let h = 1.0 / (n - 1) as f64;
        let cell = (((0.5 * (a + b)) / h).floor().max(0.0) as usize).min(n - 2);
        println!("cell={cell} g[cell]={} g[cell+1]={}", g[cell], g[cell + 1]);
    }
}
