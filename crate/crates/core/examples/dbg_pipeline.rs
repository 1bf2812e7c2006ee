use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::operator::*;
use delaybs::simulator::*;
use std::time::Instant;

fn main() {
    let coeffs21 = CoefficientSet::reference(21);
    let t0 = Instant::now();
    let dataset = generate_dataset(&coeffs21, GenerationConfig::desk(), 21).unwrap();
    println!("dataset: {} records ({:?} regions), skipped {}, in {:?}",
        dataset.records.len(), dataset.region_counts(), dataset.meta.skipped, t0.elapsed());
    let labels: Vec<f64> = dataset.records.iter().map(|r| r.label.abs()).collect();
    let mx = labels.iter().fold(0.0f64, |m, &v| m.max(v));
    println!("label magnitude: max {:.2} mean {:.3}", mx, labels.iter().sum::<f64>() / labels.len() as f64);

    let t0 = Instant::now();
    let config = ModelConfig { epochs: 120, target_loss: Some(1.5e-3), seed: 0, ..ModelConfig::default() };
    let model = match train(&dataset, config) {
        Ok(m) => m, Err(e) => { println!("train error: {e}"); return; }
    };
    println!("train: {} epochs in {:?}, final loss {:.4e}, params {}",
        model.loss_curve.len(), t0.elapsed(), model.loss_curve.last().unwrap(), model.parameter_count());
    println!("holdout: median rel {:?} max abs {:?}", model.holdout_median_relative_error, model.holdout_max_abs_error);

    // closed-loop eval on both reference scenarios at criterion grids
    let coeffs = CoefficientSet::reference(41);
    let x0 = InitialCondition::reference().sample(41);
    let neural = NeuralController::new(model);
    for (name, fam, config) in [
        ("d1", DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, SimConfig::reference_d1()),
        ("d2", DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, SimConfig::reference_d2()),
    ] {
        let delay = DelayFunction::new(fam, 41).unwrap();
        let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
        let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
        let feedback = AnalyticFeedback::new(law);
        let t0 = Instant::now();
        let ta = simulate(&coeffs, &delay, &x0, &feedback, config).unwrap();
        let t_analytic = t0.elapsed();
        let t0 = Instant::now();
        let tn = simulate(&coeffs, &delay, &x0, &neural, config).unwrap();
        let t_neural = t0.elapsed();
        let es: Vec<f64> = ta.snapshots.iter().zip(&tn.snapshots).map(|(a, b)| {
            let d: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| p - q).collect();
            delaybs::grid::l2_norm(&d)
        }).collect();
        println!("{name}: analytic {:?} neural {:?} | final analytic {:.4} neural {:.4} | e_s(end) {:.4} (target {:.4}) bounded={}",
            t_analytic, t_neural, ta.final_x_l2(), tn.final_x_l2(), es.last().unwrap(), 0.05 * ta.initial_x_l2(), !tn.non_finite);
        // shadow epsilon
        let mut eps = 0.0f64;
        for snap in &tn.snapshots {
            let exact = feedback.law().control(&snap.x, &snap.u).unwrap();
            eps = eps.max((tn.control[snap.step] - exact).abs());
        }
        println!("   eps_shadow = {eps:.4}");
    }
}
