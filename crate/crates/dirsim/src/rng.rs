//! Seeded, splittable random streams.
//!
//! A stream is identified by a `(seed, stream_id)` pair on top of a
//! counter-based ChaCha generator, so the same pair always replays the same
//! sequence and distinct stream ids are independent. `split` derives child
//! ids deterministically, which is the sanctioned way to parallelize: shard
//! work over children and results do not depend on scheduling order.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// Normal variates come from the Marsaglia polar method: an exact
/// transformation of uniforms, recorded in run manifests so outputs can be
/// tied to the generation method of the build.
pub const NORMAL_METHOD: &str = "marsaglia-polar";

/// A single-owner random stream. Move it between threads freely; to run in
/// parallel, `split` it and hand one child to each shard.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    generator: ChaCha12Rng,
    children_spawned: u64,
    spare_normal: Option<f64>,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; avalanches every input bit across the output.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_child_id(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut generator = ChaCha12Rng::seed_from_u64(seed);
        generator.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            generator,
            children_spawned: 0,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform variate in [0, 1) with 53 random bits.
    pub fn next_uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.generator.next_u64() >> 11) as f64 * SCALE
    }

    /// Standard normal variate by the polar method. Pairs are generated
    /// together; the spare is cached for the next call.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_uniform() - 1.0;
            let v = 2.0 * self.next_uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    /// Derives `k` independent child streams. The parent's own output
    /// sequence is unaffected; only its spawn counter advances, so repeated
    /// splits keep producing fresh ids.
    pub fn split(&mut self, k: usize) -> Vec<RngStream> {
        let mut children = Vec::with_capacity(k);
        for _ in 0..k {
            let id = derive_child_id(self.stream_id, self.children_spawned);
            self.children_spawned += 1;
            children.push(RngStream::new(self.seed, id));
        }
        children
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ks_statistic;

    #[test]
    fn same_pair_replays() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 0);
        for _ in 0..100 {
            assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
        }
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_normal().to_bits(), b.next_normal().to_bits());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let first: Vec<f64> = (0..4).map(|_| a.next_uniform()).collect();
        let second: Vec<f64> = (0..4).map(|_| b.next_uniform()).collect();
        assert_ne!(first, second);
    }

    #[test]
    fn uniform_moments_and_ks() {
        let mut rng = RngStream::new(1, 0);
        let n = 1_000_000usize;
        let mut draws: Vec<f64> = (0..n).map(|_| rng.next_uniform()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
        assert!(draws.iter().all(|&u| (0.0..1.0).contains(&u)));
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = ks_statistic(&draws, |x| x.clamp(0.0, 1.0));
        assert!(ks < 0.002, "KS statistic {ks}");
    }

    #[test]
    fn normal_moments_and_tail() {
        let mut rng = RngStream::new(2, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut tail = 0usize;
        for _ in 0..n {
            let z = rng.next_normal();
            sum += z;
            sum_sq += z * z;
            if z.abs() > 1.96 {
                tail += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
        let frac = tail as f64 / n as f64;
        assert!((frac - 0.05).abs() < 0.002, "tail fraction {frac}");
    }

    #[test]
    fn split_children_distinct_and_parent_untouched() {
        let mut parent = RngStream::new(9, 3);
        let mut untouched = RngStream::new(9, 3);
        let mut children = parent.split(4);
        let firsts: Vec<u64> = children
            .iter_mut()
            .map(|c| c.next_uniform().to_bits())
            .collect();
        for i in 0..firsts.len() {
            for j in (i + 1)..firsts.len() {
                assert_ne!(firsts[i], firsts[j]);
            }
        }
        // Parent output unaffected by splitting.
        assert_eq!(
            parent.next_uniform().to_bits(),
            untouched.next_uniform().to_bits()
        );
        // One child, first value differs from the parent's.
        let mut one = RngStream::new(9, 3).split(1).remove(0);
        assert_ne!(
            one.next_uniform().to_bits(),
            RngStream::new(9, 3).next_uniform().to_bits()
        );
    }

    #[test]
    fn split_streams_uncorrelated() {
        let mut parent = RngStream::new(5, 0);
        let mut children = parent.split(2);
        let n = 100_000usize;
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for _ in 0..n {
            let x = children[0].next_uniform();
            let y = children[1].next_uniform();
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let vx = sxx / nf - (sx / nf) * (sx / nf);
        let vy = syy / nf - (sy / nf) * (sy / nf);
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() < 0.01, "correlation {corr}");
    }
}
