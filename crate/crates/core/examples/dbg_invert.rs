use delaybs::coefficients::*;

fn main() {
    let tau1 = 1.0 - 1e-6;
    let samples: Vec<f64> = (0..41).map(|i| { let s = i as f64 / 40.0; tau1 + 0.3 * (1.0 - s) }).collect();
    let delay = DelayFunction::new(DelayFamily::Tabulated { samples }, 41).unwrap();
    let map = delay.delayed_time_map();
    let gb = map.g_bar();
    let (lo, hi) = map.range();
    println!("g_bar = {gb:.17e}");
    println!("hi    = {hi:.17e}");
    println!("lo    = {lo:.17e}");
    println!("g(1.0)= {:.17e}", map.g(1.0));
    println!("gb > hi? {}", gb > hi);
    println!("invert(gb) -> {:?}", map.invert(gb));
    println!("invert(hi) -> {:?}", map.invert(hi));
    println!("invert(gb*0.99) -> {:?}", map.invert(gb*0.99));
}
