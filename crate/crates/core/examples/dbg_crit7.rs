use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::operator::*;
use delaybs::simulator::*;
use std::time::Instant;

fn main() {
    let coeffs21 = CoefficientSet::reference(21);
    let dataset = generate_dataset(&coeffs21, GenerationConfig::desk(), 21).unwrap();
    let config = ModelConfig { basis: 96, epochs: 1200, target_loss: Some(4.5e-3), learning_rate: 3e-3, lr_decay: 0.9985, seed: 0, ..ModelConfig::default() };
    let t0 = Instant::now();
    let model = train(&dataset, config).unwrap();
    println!("train: {} epochs {:?} loss {:.3e} holdout {:.4?}", model.loss_curve.len(), t0.elapsed(), model.loss_curve.last().unwrap(), model.holdout_median_relative_error);
    save_model(&model, std::path::Path::new("/tmp/desk_model_final.json")).unwrap();

    let coeffs = CoefficientSet::reference(41);
    let x0 = InitialCondition::reference().sample(41);
    let neural = NeuralController::new(model);
    for (name, fam, cfg) in [
        ("d1", DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, SimConfig::reference_d1()),
        ("d2", DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, SimConfig::reference_d2()),
    ] {
        let delay = DelayFunction::new(fam, 41).unwrap();
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
        let feedback = AnalyticFeedback::new(law);
        let ta = simulate(&coeffs, &delay, &x0, &feedback, cfg).unwrap();
        let tn = simulate(&coeffs, &delay, &x0, &neural, cfg).unwrap();
        let d: Vec<f64> = ta.snapshots.last().unwrap().x.iter().zip(&tn.snapshots.last().unwrap().x).map(|(p, q)| p - q).collect();
        let es_end = delaybs::grid::l2_norm(&d);
        let bounded = !tn.non_finite && tn.x_l2.iter().all(|v| *v < 1e3);
        // shadow eps over snapshots
        let mut eps = 0.0f64;
        for snap in &tn.snapshots {
            let exact = feedback.law().control(&snap.x, &snap.u).unwrap();
            eps = eps.max((tn.control[snap.step] - exact).abs());
        }
        println!("{name}: e_s(10)={es_end:.4} (target {:.4}) bounded={bounded} eps_shadow={eps:.3}", 0.05 * ta.initial_x_l2());
        // noisy tau
        let noisy_cfg = SimConfig { delay_noise: Some(DelayNoise { sigma: 0.05, seed: 42 }), ..cfg };
        let tnoise = simulate(&coeffs, &delay, &x0, &neural, noisy_cfg).unwrap();
        println!("   noisy: bounded={} final={:.4}", !tnoise.non_finite && tnoise.x_l2.iter().all(|v| *v < 1e3), tnoise.final_x_l2());
        // timing: analytic (kernel+evals) vs neural inference, criterion-9 style
        let t0 = Instant::now();
        let k2 = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        let kernel_secs = t0.elapsed().as_secs_f64();
        println!("   ctrl secs: analytic {:.3}+kernel {:.3} vs neural {:.3} -> speedup {:.2}x",
            ta.total_controller_seconds(), kernel_secs, tn.total_controller_seconds(),
            (ta.total_controller_seconds() + kernel_secs) / tn.total_controller_seconds());
        let _ = k2;
    }
}
