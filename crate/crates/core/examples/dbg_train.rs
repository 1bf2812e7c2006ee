use delaybs::operator::*;
use delaybs::operator::net::Activation;
use delaybs::coefficients::Region;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic_record(grid: usize, seed: u64) -> DatasetRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DatasetRecord {
        scenario: seed as usize, region: Region::D2, time: 0.0,
        tau: (0..grid).map(|_| rng.gen_range(0.1..4.0)).collect(),
        x: (0..grid).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        u: (0..grid * grid).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        label: rng.gen_range(-10.0..10.0),
    }
}

fn main() {
    let grid = 5;
    let mut records = Vec::new();
    for s in 0..20u64 {
        for k in 0..8 {
            let mut r = synthetic_record(grid, 1000 + s * 31 + k);
            r.scenario = s as usize;
            r.label = r.x.iter().sum::<f64>() * 0.3 - 0.1 * r.u[3] + 0.05 * r.tau[2];
            records.push(r);
        }
    }
    let dataset = Dataset { grid, meta: Default::default(), records };
    let config = ModelConfig {
        basis: 4, grid: 5, branch_hidden: vec![8], conv_channels: None,
        trunk_hidden: vec![6], activation: Activation::Tanh, batch_size: 8,
        epochs: 500, target_loss: Some(1e-5), learning_rate: 3e-3, seed: 3,
        ..ModelConfig::default()
    };
    let model = train(&dataset, config).unwrap();
    let lc = &model.loss_curve;
    println!("epochs {} final {:.3e}", lc.len(), lc.last().unwrap());
    for (i, l) in lc.iter().enumerate().step_by(50) { println!("  ep {i}: {l:.4e}"); }
}
