//! Counter-addressed Gaussian noise.
//!
//! The normals of step `k` on path `p` are a pure function of
//! `(seed, p, k)`: the ChaCha stream is selected by the path id and the
//! block position by the step id, each step owning a fixed number of words.
//! Sequential reads and random access give identical values, so ensembles
//! are independent of scheduling.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn uniform_open(bits: u64) -> f64 {
    // (0, 1]: never zero, so the logarithm below is finite
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Reader positioned at one `(seed, path, step)` cell.
pub struct NoiseStream {
    rng: ChaCha8Rng,
    step: u64,
    per_step: usize,
}

impl NoiseStream {
    /// `per_step` is the number of normals every step provides.
    pub fn new(seed: u64, path: u64, step: u64, per_step: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let mut s = NoiseStream {
            rng,
            step,
            per_step: per_step.max(1),
        };
        s.seek(step);
        s
    }

    /// Four 32-bit words per pair of normals.
    fn words_per_step(&self) -> u128 {
        4 * self.per_step.div_ceil(2) as u128
    }

    /// Jump to another step of the same path.
    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * self.words_per_step());
        self.step = step;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// The current step's normals (Box–Muller), then advance one step.
    pub fn normals(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.per_step, "normals per step is fixed");
        for pair in out.chunks_mut(2) {
            let u1 = uniform_open(self.rng.next_u64());
            let u2 = uniform_open(self.rng.next_u64());
            let r = (-2.0 * u1.ln()).sqrt();
            let a = 2.0 * std::f64::consts::PI * u2;
            pair[0] = r * a.cos();
            if pair.len() > 1 {
                pair[1] = r * a.sin();
            }
        }
        // consumed words already end the step exactly
        self.step += 1;
    }
}

/// Uniform on `(0, 1]` keyed by `(seed, stream, index)`.
pub fn uniform_at(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * 2);
    uniform_open(rng.next_u64())
}

/// One standard normal at `(seed, path, step)`.
pub fn normal_at(seed: u64, path: u64, step: u64) -> f64 {
    let mut z = [0.0];
    NoiseStream::new(seed, path, step, 1).normals(&mut z);
    z[0]
}
