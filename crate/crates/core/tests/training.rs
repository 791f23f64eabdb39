use pvgadf::nn::{train, Architecture, Dataset, Network, NetworkConfig, Tensor3, TrainConfig};
use pvgadf::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_set(n: usize, size: usize, n_classes: usize, seed: u64) -> Dataset<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dataset::default();
    for k in 0..n {
        let data = (0..2 * size * size).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        d.push(Tensor3::new(2, size, size, data).unwrap(), k % n_classes);
    }
    d
}

#[test]
fn overfits_ten_samples() {
    let data = toy_set(10, 16, 5, 1);
    let cfg = NetworkConfig { n_classes: 5, input_size: 16, seed: 2, ..Default::default() };
    let mut net = Network::<f32>::new(cfg).unwrap();
    let tc = TrainConfig { batch_size: 10, max_epochs: 500, patience: 0, ..Default::default() };
    let mut reached = None;
    let hist = pvgadf::nn::train_with_callback(&mut net, &data, None, &tc, |r| {
        if r.train_acc == 1.0 && reached.is_none() {
            reached = Some(r.epoch);
        }
    })
    .unwrap();
    assert!(reached.is_some(), "never reached 100% training accuracy");
    let correct = (0..10).filter(|&k| net.predict(&data.x[k]).unwrap() == data.y[k]).count();
    assert_eq!(correct, 10);
    let losses: Vec<f64> = hist.epochs.iter().map(|r| r.train_loss).collect();
    assert!(losses.iter().all(|l| l.is_finite()));
    // Mean loss over consecutive 5-epoch blocks never goes up.
    let blocks: Vec<f64> = losses.chunks_exact(5).map(|c| c.iter().sum::<f64>() / 5.0).collect();
    for w in blocks.windows(2) {
        assert!(w[1] <= w[0], "smoothed loss increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn training_is_deterministic_for_any_thread_count() {
    let data = toy_set(24, 12, 3, 7);
    let val = toy_set(6, 12, 3, 8);
    let cfg = NetworkConfig { n_classes: 3, input_size: 12, seed: 4, ..Default::default() };
    let tc = TrainConfig { batch_size: 8, max_epochs: 4, seed: 9, ..Default::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut net = Network::<f32>::new(cfg).unwrap();
            let h = train(&mut net, &data, Some(&val), &tc).unwrap();
            (net.params, h)
        })
    };
    let (a, ha) = run(1);
    let (b, hb) = run(1);
    let (c, hc) = run(3);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(ha, hb);
    assert_eq!(ha, hc);
    assert_eq!(ha.epochs.len(), 4);
}

#[test]
fn early_stopping_restores_best_weights() {
    let data = toy_set(12, 10, 2, 3);
    let val = toy_set(8, 10, 2, 99);
    let cfg =
        NetworkConfig { architecture: Architecture::Ann, n_classes: 2, input_size: 10, seed: 1, ..Default::default() };
    let mut net = Network::<f32>::new(cfg).unwrap();
    let tc = TrainConfig { batch_size: 4, max_epochs: 60, patience: 3, ..Default::default() };
    let h = train(&mut net, &data, Some(&val), &tc).unwrap();
    let best = h.epochs.iter().find(|r| r.epoch == h.best_epoch).unwrap();
    let (_, acc) = pvgadf::nn::train::evaluate_loss(&net, &val).unwrap();
    assert_eq!(acc, best.val_acc);
    if h.stopped_early {
        assert_eq!(h.epochs.len(), h.best_epoch + 3);
    }
}

#[test]
fn diverging_loss_is_reported() {
    let data = toy_set(8, 10, 2, 5);
    let cfg = NetworkConfig { architecture: Architecture::Ann, n_classes: 2, input_size: 10, ..Default::default() };
    let mut net = Network::<f32>::new(cfg).unwrap();
    net.params.iter_mut().for_each(|p| *p = f32::NAN);
    let r = train(&mut net, &data, None, &TrainConfig { max_epochs: 2, ..Default::default() });
    assert!(matches!(r, Err(Error::NonFiniteLoss { epoch: 1, batch: 0, .. })));
}

#[test]
fn history_csv_header() {
    let h = pvgadf::nn::History::default();
    assert_eq!(h.to_csv(), "epoch,train_loss,train_acc,val_loss,val_acc\n");
}

#[test]
fn full_size_step_timing() {
    let data = toy_set(24, 50, 9, 1);
    let net = Network::<f32>::new(NetworkConfig::default()).unwrap();
    let mut g = vec![0.0f32; net.n_params()];
    net.loss_and_grad(&data.x[0], data.y[0], &mut g).unwrap();
    let t = std::time::Instant::now();
    for k in 0..24 {
        net.loss_and_grad(&data.x[k], data.y[k], &mut g).unwrap();
    }
    eprintln!("CbamCnn forward+backward: {:.2} ms/sample", t.elapsed().as_secs_f64() * 1e3 / 24.0);
}
