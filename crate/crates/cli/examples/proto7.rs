use std::time::Instant;
use zext_cli::ensembles::*;
use zext_core::field::toy;
use zext_core::greenkubo::VarianceMatrix;
use zext_core::shift::DyadicShift;
use zext_core::stats::{ks_two_sample, SampleSet};

fn main() {
    let sys = DyadicShift;
    let field = toy::default_field(1, 1.0);
    let a = VarianceMatrix::scalar(2.0); // exact cylinder value
    let sigma = 1.0;                      // exact
    let (dt, delta) = (1e-4, 2.0 * (1.0f64 * 1e-4).sqrt());

    let t0 = Instant::now();
    let y = limit_terminal_ensemble(&a, &[-1.0], 1, sigma, 1.0, dt, delta, 20_000, 99, 50).unwrap();
    println!("y ensemble 20k: {:?}  mean={:.4} var={:.4}", t0.elapsed(),
        y.iter().sum::<f64>()/y.len() as f64,
        y.iter().map(|v| v*v).sum::<f64>()/y.len() as f64);
    let y_set = SampleSet::new(y).unwrap();

    for (eps, n) in [(1e-2, 20_000usize), (1e-3, 20_000), (1e-4, 10_000)] {
        let t0 = Instant::now();
        let e = error_ensemble(&sys, &field, &[1.0], eps, 1.0, 2, n, 99, 5).unwrap();
        let el = t0.elapsed();
        let set = SampleSet::new(e.terminal_scaled.clone()).unwrap();
        let ks = ks_two_sample(&set, &y_set).unwrap();
        let m2 = set.values().iter().map(|v| v*v).sum::<f64>() / set.len() as f64;
        println!("eps={eps:.0e} n={n}: KS={ks:.4} var={m2:.4} ({el:?})");
    }
}
