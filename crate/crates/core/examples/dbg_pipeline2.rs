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
    println!("dataset: {} records in {:?}", dataset.records.len(), t0.elapsed());

    for (name, config) in [
        ("narrow", ModelConfig { epochs: 150, target_loss: Some(5e-4), seed: 0, ..ModelConfig::default() }),
    ] {
        let t0 = Instant::now();
        let model = match train(&dataset, config) { Ok(m) => m, Err(e) => { println!("{name}: train error {e}"); continue; } };
        println!("{name}: {} epochs in {:?}, loss {:.3e}, holdout med-rel {:.4?}",
            model.loss_curve.len(), t0.elapsed(), model.loss_curve.last().unwrap(), model.holdout_median_relative_error);
        save_model(&model, std::path::Path::new(&format!("/tmp/model_{name}.json"))).unwrap();

        let coeffs = CoefficientSet::reference(41);
        let x0 = InitialCondition::reference().sample(41);
        let neural = NeuralController::new(model);
        for (scen, fam, cfg) in [
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
            println!("  {scen}: U_n(0)={:.2} exact {:.2} | final a {:.4} n {:.4} | e_s(10) {:.4} target {:.4} bounded={}",
                tn.control[0], ta.control[0], ta.final_x_l2(), tn.final_x_l2(), es_end, 0.05 * ta.initial_x_l2(), !tn.non_finite && tn.x_l2.iter().all(|v| *v < 100.0));
        }
    }
}
