use engage_core::nn::{finite_diff_check, Batch, DnnNet, LogisticNet, LstmNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const WIDTH: usize = 12;

fn random_batch(seed: u64, rows: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..rows * WIDTH)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let y = (0..rows)
        .map(|_| f64::from(rng.random_range(0..2u8)))
        .collect();
    (x, y)
}

#[test]
fn dnn_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = DnnNet::new(WIDTH, &[64, 32, 16], &mut rng);
        let (x, y) = random_batch(seed + 100, 16);
        let report = finite_diff_check(&mut net, &Batch::new(&x, &y, WIDTH), 1e-5, 40, seed);
        println!("dnn seed {seed}: {report:?}");
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn lstm_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = LstmNet::new(5, 32, 32, &[32, 16], &mut rng);
        let (x, y) = random_batch(seed + 200, 16);
        let report = finite_diff_check(&mut net, &Batch::new(&x, &y, WIDTH), 1e-5, 40, seed);
        println!("lstm seed {seed}: {report:?}");
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn logistic_gradients_are_exact_to_rounding() {
    let mut net = LogisticNet::new(WIDTH, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for v in net.params.values_mut(0) {
        *v = rng.sample(StandardNormal);
    }
    let (x, y) = random_batch(9, 32);
    let report = finite_diff_check(&mut net, &Batch::new(&x, &y, WIDTH), 1e-5, 100, 9);
    assert!(report.max_relative_error < 1e-9, "{report:?}");
}
