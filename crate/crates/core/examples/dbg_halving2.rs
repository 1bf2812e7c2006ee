use delaybs::coefficients::*;
use delaybs::simulator::*;
use delaybs::controller::ZeroController;

fn main() {
    for gain in [4.0, 8.0] {
        let coeffs = CoefficientSet::new(
            GainFamily::Ramp { gain },
            CouplingFamily::Harmonic { cos_amp: 2.0, cos_phase: 0.0, sin_amp: 2.0, sin_phase: 0.0 },
            41,
        ).unwrap();
        let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
        let x0f = InitialCondition::reference();
        let mut prev = None;
        print!("gain {gain}: ");
        for (ds, dt) in [(0.05, 0.01), (0.025, 0.005), (0.0125, 0.0025)] {
            let n = (1.0_f64 / ds).round() as usize + 1;
            let steps = (5.0_f64 / dt).round() as usize;
            let config = SimConfig { ds, dr: ds, dt, horizon: 5.0, snapshot_stride: steps, delay_noise: None };
            let x0 = x0f.sample(n);
            let a = simulate(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
            let b = simulate_delayed_reference(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
            let worst = a.x_l2.iter().zip(&b.x_l2).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
            let factor = prev.map(|p: f64| p / worst).unwrap_or(0.0);
            print!("[ds={ds}: drift {worst:.4} factor {factor:.2}] ");
            prev = Some(worst);
        }
        println!();
    }
}
