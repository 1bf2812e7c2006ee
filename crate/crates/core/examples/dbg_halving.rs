use delaybs::coefficients::*;
use delaybs::simulator::*;
use delaybs::controller::ZeroController;

fn main() {
    let coeffs = CoefficientSet::reference(41);
    let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    let x0f = InitialCondition::reference();
    let mut prev = None;
    for (ds, dt) in [(0.05, 0.01), (0.025, 0.005), (0.0125, 0.0025)] {
        let n = (1.0_f64 / ds).round() as usize + 1;
        let steps = (5.0_f64 / dt).round() as usize;
        let config = SimConfig { ds, dr: ds, dt, horizon: 5.0, snapshot_stride: steps, delay_noise: None };
        let x0 = x0f.sample(n);
        let a = simulate(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
        let b = simulate_delayed_reference(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
        let worst = a.x_l2.iter().zip(&b.x_l2).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
        let sup: f64 = a.x_l2.iter().chain(&b.x_l2).fold(1.0f64, |m, &v| m.max(v));
        let factor = prev.map(|p: f64| p / worst).unwrap_or(0.0);
        println!("ds={ds}: drift {worst:.4} sup {sup:.1} ratio {:.2} halving factor {factor:.2}", worst / (sup * (ds + dt)));
        prev = Some(worst);
    }
}
