//! Bernoulli rate encoding of pixel intensities into spike trains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encode a normalized image into `t` binary spike tensors. Each pixel fires
/// independently per timestep with probability equal to its intensity.
/// Deterministic for a fixed seed.
pub fn poisson_encode(image: &Tensor, t: usize, seed: u64) -> Result<Vec<Tensor>> {
    if t == 0 {
        return Err(Error::Validation("timesteps must be >= 1".into()));
    }
    if let Some(bad) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!(
            "pixel intensity {bad} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let mut spikes = Tensor::zeros(image.shape());
        for (dst, &p) in spikes.data_mut().iter_mut().zip(image.data()) {
            // sample even for p in {0,1} to keep the stream layout fixed
            let draw: f64 = rng.gen();
            *dst = if draw < p { 1.0 } else { 0.0 };
        }
        out.push(spikes);
    }
    Ok(out)
}

/// Per-image encoder seed, mixed so that parallel workers draw independent,
/// order-free streams.
pub fn image_seed(base_seed: u64, epoch: usize, image_index: usize) -> u64 {
    // splitmix64 over the packed inputs
    let mut z = base_seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul((image_index as u64).wrapping_add(1)))
        .wrapping_add(0xbf58476d1ce4e5b9u64.wrapping_mul((epoch as u64).wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
