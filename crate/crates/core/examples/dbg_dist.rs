use delaybs::coefficients::*;
use delaybs::grid::Field2;
use delaybs::operator::*;

fn main() {
    let coeffs21 = CoefficientSet::reference(21);
    let dataset = generate_dataset(&coeffs21, GenerationConfig::desk(), 21).unwrap();
    let model = load_model(std::path::Path::new("/tmp/desk_model.json")).unwrap();

    // fit on big-label training records
    let mut big: Vec<(f64, f64)> = Vec::new();
    for r in &dataset.records {
        if r.label.abs() > 5.0 {
            big.push((r.label, model.forward(&r.tau, &r.x, &r.u)));
        }
    }
    println!("{} records with |label|>5", big.len());
    let mut worst = (0.0, 0.0, 0.0);
    let mut mean_rel = 0.0;
    for &(l, p) in &big {
        let rel = (p - l).abs() / l.abs();
        mean_rel += rel;
        if (p - l).abs() > worst.0 { worst = ((p - l).abs(), l, p); }
    }
    println!("big-label fit: mean rel {:.3}, worst abs {:.2} (label {:.2} pred {:.2})", mean_rel / big.len() as f64, worst.0, worst.1, worst.2);

    // reference d2 t=0 state: native 21-grid forward vs predict from 41-grid
    let delay = DelayFunction::new(DelayFamily::Exponential { amplitude: 0.5, rate: -1.6 }, 41).unwrap();
    let x41 = InitialCondition::reference().sample(41);
    let u41 = Field2::zeros(41, 41);
    let tau41 = delay.resample(41);
    let via_predict = model.predict(&tau41, &x41, &u41).unwrap();
    let x21 = InitialCondition::reference().sample(21);
    let u21 = vec![0.0; 441];
    let tau21 = delay.resample(21);
    let native = model.forward(&tau21, &x21, &u21);
    println!("reference d2 t=0: predict-from-41 {via_predict:.3} native-21 {native:.3}");

    // is there a matching training record? find d2 records with time 0
    for r in dataset.records.iter().filter(|r| r.region == Region::D2 && r.time == 0.0).take(5) {
        let p = model.forward(&r.tau, &r.x, &r.u);
        println!("train d2 t=0 record: label {:+.3} pred {:+.3} (x0 amp ~ {:.2})", r.label, p, r.x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
}
