//! Shared support for the integration tests: the unrolled-graph gradient
//! oracle and a generator of random tiny networks.

pub mod tape;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snncost_core::config::KvConfig;
use snncost_core::lif::LifParams;
use snncost_core::network::NetworkSpec;
use snncost_core::snn::{LayerWeights, Weights};
use snncost_core::tensor::Tensor;

pub struct TinyCase {
    pub net: NetworkSpec,
    pub weights: Weights,
    pub lif: LifParams,
    pub input_spikes: Vec<Tensor>,
    pub label: usize,
}

/// Random 1-2 hidden-layer networks with at most ~20 LIF neurons, random
/// LIF parameters, random weight scale, and Bernoulli input spike trains.
/// All convs are stride 1.
pub fn random_tiny_case(seed: u64) -> TinyCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = rng.gen_range(0..4u32);
    let out_classes = rng.gen_range(2..=3usize);
    let (spec_text, in_size) = match arch {
        0 => {
            // single hidden FC layer
            let in_size = rng.gen_range(2..=4usize);
            let hidden = rng.gen_range(3..=12usize);
            (
                format!("input = 1 {in_size}\nlayer = fc {hidden}\nlayer = fc {out_classes}\n"),
                in_size,
            )
        }
        1 => {
            // two hidden FC layers
            let in_size = rng.gen_range(2..=4usize);
            let h1 = rng.gen_range(3..=10usize);
            let h2 = rng.gen_range(3..=8usize);
            (
                format!(
                    "input = 1 {in_size}\nlayer = fc {h1}\nlayer = fc {h2}\nlayer = fc {out_classes}\n"
                ),
                in_size,
            )
        }
        2 => {
            // conv then output
            let in_size = 4;
            let (k, pad) = if rng.gen_bool(0.5) { (2, 0) } else { (1, 1) };
            (
                format!(
                    "input = 1 {in_size}\nlayer = conv {k} 3 1 {pad}\nlayer = fc {out_classes}\n"
                ),
                in_size,
            )
        }
        _ => {
            // conv, pool, output
            let in_size = 4;
            (
                format!(
                    "input = 1 {in_size}\nlayer = conv 1 3 1 1\nlayer = pool 2 2\nlayer = fc {out_classes}\n"
                ),
                in_size,
            )
        }
    };
    let cfg = KvConfig::parse(&spec_text).unwrap();
    let net = NetworkSpec::from_config(&cfg).unwrap();

    let mut weights = Weights::init(&net, rng.gen());
    let scale = rng.gen_range(0.5..3.0);
    for layer in &mut weights.layers {
        if let LayerWeights::Conv(t) | LayerWeights::Fc(t) = layer {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
    }

    let lif = LifParams::new(
        rng.gen_range(0.6..=1.0),
        rng.gen_range(0.2..1.0),
        rng.gen_range(0.8..4.0),
    )
    .unwrap();

    let timesteps = rng.gen_range(1..=4usize);
    let p_fire = rng.gen_range(0.2..0.8);
    let input_spikes: Vec<Tensor> = (0..timesteps)
        .map(|_| {
            let data: Vec<f64> = (0..in_size * in_size)
                .map(|_| if rng.gen_bool(p_fire) { 1.0 } else { 0.0 })
                .collect();
            Tensor::from_vec(&[in_size, in_size, 1], data).unwrap()
        })
        .collect();
    let label = rng.gen_range(0..out_classes);

    TinyCase {
        net,
        weights,
        lif,
        input_spikes,
        label,
    }
}

/// Relative-error check with an absolute floor for exact zeros.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}
