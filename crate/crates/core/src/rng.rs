//! Counter-based Gaussian streams.
//!
//! A draw is addressed by `(seed, domain, index, k)`: the ChaCha key is built
//! from `seed` and a domain tag, the stream id is the trajectory `index`, and
//! component `k` sits at a fixed word offset. No generator state is shared, so
//! batches can be produced in any order or in parallel.

use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent families of draws that must never collide for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Amplitudes = 0x616d_706c,
    KarhunenLoeve = 0x6b6c_6b6c,
    WhiteNoise = 0x7768_6974,
    Shift = 0x7368_6674,
    Aux = 0x6175_7878,
}

const WORDS_PER_DRAW: u128 = 4;

fn key(seed: u64, domain: Domain) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[..8].copy_from_slice(&seed.to_le_bytes());
    k[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    k[16..].copy_from_slice(b"qsd-gaussian-key");
    k
}

/// Sequential reader over one `(seed, domain, index)` stream.
pub struct GaussianStream {
    rng: ChaCha20Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, domain: Domain, index: u64) -> Self {
        let mut rng = ChaCha20Rng::from_seed(key(seed, domain));
        rng.set_stream(index);
        Self { rng }
    }

    /// Jump to component `k`; subsequent draws continue from there.
    pub fn seek(&mut self, k: u64) {
        self.rng.set_word_pos(WORDS_PER_DRAW * k as u128);
    }

    fn open_unit(&mut self) -> f64 {
        // (0, 1]
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Circular complex Gaussian with `E|z|^2 = 1`.
    pub fn complex_normal(&mut self) -> Complex64 {
        let u1 = self.open_unit();
        let u2 = self.open_unit();
        Complex64::from_polar((-u1.ln()).sqrt(), std::f64::consts::TAU * u2)
    }

    pub fn fill(&mut self, out: &mut [Complex64]) {
        for z in out {
            *z = self.complex_normal();
        }
    }
}

/// Component `k` of stream `(seed, domain, index)`.
pub fn complex_normal_at(seed: u64, domain: Domain, index: u64, k: u64) -> Complex64 {
    let mut s = GaussianStream::new(seed, domain, index);
    s.seek(k);
    s.complex_normal()
}
