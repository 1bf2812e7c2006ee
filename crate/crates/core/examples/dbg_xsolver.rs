use delaybs::coefficients::*;
use delaybs::simulator::*;
use delaybs::controller::ZeroController;

fn main() {
    let coeffs = CoefficientSet::reference(41);
    let mut sampler = ScenarioSampler::new(5);
    for trial in 0..8 {
        let region = if trial % 2 == 0 { Region::D1 } else { Region::D2 };
        let sc = sampler.sample_scenario(region).unwrap();
        let x0 = sc.initial.sample(41);
        for dt in [0.02, 0.005] {
            if region == Region::D2 && dt > 0.005 { continue; }
            let config = SimConfig { ds: 0.025, dr: 0.025, dt, horizon: 5.0, snapshot_stride: 250, delay_noise: None };
            let a = simulate(&coeffs, &sc.delay, &x0, &ZeroController, config).unwrap();
            let b = simulate_delayed_reference(&coeffs, &sc.delay, &x0, &ZeroController, config).unwrap();
            if a.non_finite || b.non_finite { println!("trial {trial} dt={dt}: NONFINITE"); continue; }
            let sup: f64 = a.x_l2.iter().chain(&b.x_l2).fold(1.0f64, |m, &v| m.max(v));
            let worst = a.x_l2.iter().zip(&b.x_l2).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
            println!("trial {trial} {region:?} dt={dt}: drift {worst:.3} sup {sup:.3} ratio {:.2} (allowed 5)", worst / (sup * (0.025 + dt)));
        }
    }
    // refinement behavior D1
    let sc = ScenarioSampler::new(5).sample_scenario(Region::D1).unwrap();
    let x0_f = sc.initial;
    for (ds, dt) in [(0.05, 0.04), (0.025, 0.02), (0.0125, 0.01)] {
        let n = (1.0_f64 / ds).round() as usize + 1;
        let config = SimConfig { ds, dr: ds, dt, horizon: 5.0, snapshot_stride: 125, delay_noise: None };
        let x0 = x0_f.sample(n);
        let a = simulate(&coeffs, &sc.delay, &x0, &ZeroController, config).unwrap();
        let b = simulate_delayed_reference(&coeffs, &sc.delay, &x0, &ZeroController, config).unwrap();
        let sup: f64 = a.x_l2.iter().chain(&b.x_l2).fold(1.0f64, |m, &v| m.max(v));
        let worst = a.x_l2.iter().zip(&b.x_l2).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
        println!("refine ds={ds}: drift {worst:.4} sup {sup:.3} drift/sup {:.4}", worst / sup);
    }
}
