use delaybs::coefficients::*;
use delaybs::simulator::*;
use delaybs::controller::ZeroController;

fn main() {
    let coeffs = CoefficientSet::reference(41);
    let delay = DelayFunction::new(DelayFamily::CosineChebyshev { offset: 3.0, amplitude: 0.5, frequency: 5.0 }, 41).unwrap();
    let x0 = InitialCondition::reference().sample(41);
    for (dr, stride) in [(0.025, 25usize), (0.00625, 25)] {
        let config = SimConfig { ds: 0.025, dr, dt: 0.02, horizon: 8.0, snapshot_stride: stride, delay_noise: None };
        let trace = simulate(&coeffs, &delay, &x0, &ZeroController, config).unwrap();
        let mut worst = 0.0f64;
        let mut worst_lagged = 0.0f64;
        let mut scale = 1.0f64;
        for snap in trace.snapshots.iter().filter(|s| s.time >= delay.tau_sup()) {
            scale = scale.max(delaybs::grid::sup_abs(&snap.x));
            for i in 0..41 {
                let tau = delay.eval(i as f64 / 40.0);
                let want = trace.outflow_at(snap.time - tau);
                worst = worst.max((snap.u.at(i, 0) - want).abs());
                // hypothesis: effective systematic lag ~ tau*dr
                let lag = tau * dr;
                let want_lag = trace.outflow_at(snap.time - tau - lag);
                worst_lagged = worst_lagged.max((snap.u.at(i, 0) - want_lag).abs());
            }
        }
        println!("dr={dr}: u(s,0) vs x1(t-tau): drift {worst:.3}, vs lagged {worst_lagged:.3}, scale {scale:.3}, bound {:.3}", 5.0*(0.025+0.02)*scale);
    }
}
