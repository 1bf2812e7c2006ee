use delaybs::coefficients::*;
use delaybs::simulator::*;
use delaybs::controller::ZeroController;

fn run(gain: f64, horizon: f64) {
    let coeffs = CoefficientSet::new(
        GainFamily::Ramp { gain },
        CouplingFamily::Harmonic { cos_amp: gain/4.0, cos_phase: 0.0, sin_amp: gain/4.0, sin_phase: 0.0 },
        41,
    ).unwrap();
    let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    let x0f = InitialCondition::reference();
    let mut prev: Option<(f64, f64)> = None;
    print!("gain {gain} T={horizon}: ");
    for (ds, dt) in [(0.05, 0.01), (0.025, 0.005), (0.0125, 0.0025), (0.00625, 0.00125)] {
        let n = (1.0_f64 / ds).round() as usize + 1;
        let steps = (horizon / dt).round() as usize;
        let config = SimConfig { ds, dr: ds, dt, horizon, snapshot_stride: steps, delay_noise: None };
        let x0 = x0f.sample(n);
        let a = simulate(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
        let b = simulate_delayed_reference(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
        let max_d = a.x_l2.iter().zip(&b.x_l2).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
        let l2_d = (a.x_l2.iter().zip(&b.x_l2).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * dt).sqrt();
        let f = prev.map(|(pm, pl)| (pm / max_d, pl / l2_d)).unwrap_or((0.0, 0.0));
        print!("[{ds}: max {max_d:.3} l2 {l2_d:.3} factors {:.2}/{:.2}] ", f.0, f.1);
        prev = Some((max_d, l2_d));
    }
    println!();
}

fn main() {
    run(20.0, 2.0);
    run(20.0, 5.0);
    run(10.0, 5.0);
}
