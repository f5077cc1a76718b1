//! The autoregressive log-density against a brute-force chain rule where each
//! conditional comes from a separate forward pass with the future scrambled.

use rand::Rng;

use pixprior::priors::{discretized_logistic_logprob, ArConfig, ArPriorModel, ImagePrior};
use pixprior::rng::seeded;
use pixprior::Image;

fn chain_rule(model: &ArPriorModel, x: &Image, seed: u64) -> f64 {
    let mut r = seeded(seed);
    let levels = x.levels();
    let ch = x.channels();
    let hw = x.height() * x.width();
    let mut total = 0.0;
    for i in 0..hw * ch {
        let (pixel, c) = (i / ch, i % ch);
        let mut probe = x.clone();
        for j in i..hw * ch {
            let (pj, cj) = (j / ch, j % ch);
            probe.data_mut()[cj * hw + pj] = r.random_range(0..256) as f64 / 255.0;
        }
        let cond = &model.conditionals(&probe).unwrap()[i];
        total += discretized_logistic_logprob(cond, levels[c * hw + pixel] as usize).unwrap();
    }
    total
}

fn check(size: usize, channels: usize, seed: u64) {
    let model = ArPriorModel::new(ArConfig {
        in_channels: channels,
        features: 6,
        layers: 2,
        patch_size: size,
        seed,
        ..ArConfig::default()
    })
    .unwrap();
    let mut r = seeded(seed + 100);
    let data = (0..size * size * channels).map(|_| r.random_range(0..256) as f64 / 255.0).collect();
    let x = Image::new(size, size, channels, data).unwrap();
    let direct = model.log_density(&x).unwrap();
    let brute = chain_rule(&model, &x, seed);
    assert!((direct - brute).abs() <= 1e-9, "{direct} vs {brute}");
}

#[test]
fn two_by_two_gray() {
    for seed in 0..4 {
        check(2, 1, seed);
    }
}

#[test]
fn four_by_four_gray() {
    for seed in 0..4 {
        check(4, 1, seed);
    }
}

#[test]
fn four_by_four_colour() {
    check(4, 3, 9);
}
