use delaybs::coefficients::*;
use delaybs::simulator::*;
use delaybs::controller::ZeroController;

fn main() {
    let coeffs = CoefficientSet::reference(41);
    let mut sampler = ScenarioSampler::new(5);
    for trial in 0..6 {
        let region = if trial % 2 == 0 { Region::D1 } else { Region::D2 };
        let sc = sampler.sample_scenario(region).unwrap();
        for (ds, dt, dr) in [(0.025, 0.02, 0.0025), (0.0125, 0.01, 0.0025)] {
            let n = (1.0_f64 / ds).round() as usize + 1;
            let x0 = sc.initial.sample(n);
            let steps = (5.0_f64 / dt).round() as usize;
            let config = SimConfig { ds, dr, dt, horizon: 5.0, snapshot_stride: steps, delay_noise: None };
            let a = simulate(&coeffs, &sc.delay, &x0, &ZeroController, config).unwrap();
            let b = simulate_delayed_reference(&coeffs, &sc.delay, &x0, &ZeroController, config).unwrap();
            let sup: f64 = a.x_l2.iter().chain(&b.x_l2).fold(1.0f64, |m, &v| m.max(v));
            let worst = a.x_l2.iter().zip(&b.x_l2).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
            println!("trial {trial} {region:?} ds={ds} dt={dt} dr={dr}: drift {worst:.4} ratio {:.2}", worst / (sup * (ds + dt)));
        }
    }
}
