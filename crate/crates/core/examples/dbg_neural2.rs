use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::operator::*;
use delaybs::simulator::*;

fn main() {
    let coeffs21 = CoefficientSet::reference(21);
    let dataset = generate_dataset(&coeffs21, GenerationConfig::desk(), 21).unwrap();
    let config = ModelConfig { basis: 96, epochs: 800, target_loss: Some(2e-3), learning_rate: 2e-3, lr_decay: 0.997, seed: 0, ..ModelConfig::default() };
    let model = train(&dataset, config).unwrap();
    println!("epochs {} loss {:.3e} holdout {:.4?}", model.loss_curve.len(), model.loss_curve.last().unwrap(), model.holdout_median_relative_error);
    for (i, l) in model.loss_curve.iter().enumerate().step_by(30) { println!("  ep {i}: {l:.3e}"); }
    save_model(&model, std::path::Path::new("/tmp/model_narrow2.json")).unwrap();

    let coeffs = CoefficientSet::reference(41);
    let x0 = InitialCondition::reference().sample(41);
    let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
    let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
    let neural = NeuralController::new(model);
    let cfg = SimConfig { snapshot_stride: 40, ..SimConfig::reference_d2() };
    let trace = simulate(&coeffs, &delay, &x0, &neural, cfg).unwrap();
    println!("d2 neural closed loop:");
    for snap in &trace.snapshots {
        let exact = law.control(&snap.x, &snap.u).unwrap();
        let k = snap.step;
        println!("  t={:4.1} U_n={:+9.3} U_ex={:+9.3} xl2={:9.3}", snap.time, trace.control[k], exact, trace.x_l2[k]);
        if trace.x_l2[k] > 1e4 { break; }
    }
}
