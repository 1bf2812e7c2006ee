use delaybs::coefficients::*;
use delaybs::controller::*;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::operator::*;
use delaybs::simulator::*;

fn main() {
    let coeffs21 = CoefficientSet::reference(21);
    let dataset = generate_dataset(&coeffs21, GenerationConfig::desk(), 21).unwrap();
    let config = ModelConfig { epochs: 120, target_loss: Some(1.5e-3), seed: 0, ..ModelConfig::default() };
    let model = train(&dataset, config).unwrap();
    save_model(&model, std::path::Path::new("/tmp/desk_model.json")).unwrap();

    let coeffs = CoefficientSet::reference(41);
    let x0 = InitialCondition::reference().sample(41);
    let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    let kernel = solve_kernel(&coeffs, &delay, KernelConfig::default()).unwrap();
    let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).unwrap();
    let neural = NeuralController::new(model);
    let cfg = SimConfig { snapshot_stride: 10, ..SimConfig::reference_d2() };
    let trace = simulate(&coeffs, &delay, &x0, &neural, cfg).unwrap();
    println!("step | t | U_neural | U_exact(state) | x_l2");
    for snap in trace.snapshots.iter().take(40) {
        let exact = law.control(&snap.x, &snap.u).unwrap();
        let k = snap.step;
        println!("{:4} {:5.2} {:+10.3} {:+10.3} {:9.3}", k, snap.time, trace.control[k], exact, trace.x_l2[k]);
        if trace.x_l2[k] > 1e3 { break; }
    }
}
