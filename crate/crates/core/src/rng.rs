//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a stream addressed by a key
//! `(master seed, experiment, path index, stream)`. The key is mixed into a
//! 256-bit ChaCha8 key, so a stream depends only on its address and never
//! on which worker produced it or in which order streams were opened.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Address of one random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngKey {
    pub master: u64,
    pub experiment: u64,
    pub path: u64,
    pub stream: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a label, used to name experiments.
pub fn label(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl RngKey {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            experiment: 0,
            path: 0,
            stream: 0,
        }
    }

    pub fn experiment(self, experiment: u64) -> Self {
        Self { experiment, ..self }
    }

    pub fn named(self, name: &str) -> Self {
        self.experiment(label(name))
    }

    pub fn path(self, path: u64) -> Self {
        Self { path, ..self }
    }

    pub fn stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    fn seed(&self) -> [u8; 32] {
        let mut h = splitmix(self.master);
        let mut words = [0u64; 4];
        for (i, part) in [self.experiment, self.path, self.stream].into_iter().enumerate() {
            h = splitmix(h ^ splitmix(part.wrapping_add(i as u64 + 1)));
            words[i] = h;
        }
        words[3] = splitmix(h ^ self.master.rotate_left(17));
        let mut seed = [0u8; 32];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        seed
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.seed())
    }

    /// `n` standard normal draws from this stream.
    pub fn normals(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// One standard normal draw.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform draw on `[lo, hi)`.
pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_depend_only_on_address() {
        let k = RngKey::new(7).named("x").path(3).stream(1);
        assert_eq!(k.normals(5), k.normals(5));
        assert_ne!(k.normals(5), k.path(4).normals(5));
        assert_ne!(k.normals(5), k.stream(2).normals(5));
        assert_ne!(k.normals(5), RngKey::new(8).named("x").path(3).stream(1).normals(5));
    }
}
