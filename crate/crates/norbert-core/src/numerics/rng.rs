/// Counter-based seedable generator (splitmix64).
///
/// The state advances by a fixed odd constant and each output is a bijective
/// mix of the state, so the stream is a pure function of `(seed, index)` and
/// identical on every platform. Uniform variates are built from the top 53
/// bits; normal variates use the 12-uniform sum approximation, which keeps
/// the generator free of transcendental functions and therefore bit-exact
/// across libm implementations.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    state: u64,
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, state: seed }
    }

    /// Independent stream keyed by `(seed, id)`. Forking depends only on the
    /// construction seed, never on how much of this stream was consumed, so
    /// per-batch streams can be derived in any order.
    pub fn fork(&self, id: u64) -> Rng {
        Rng::new(mix(self.seed ^ mix(id.wrapping_add(GAMMA))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in `[0, n)` via 128-bit widening multiply (no modulo
    /// bias worth caring about at these ranges, and branch-free).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via the sum of 12 uniforms minus 6 (Irwin-Hall
    /// approximation). Adequate for weight initialization and sampling; tails
    /// truncate at +-6.
    pub fn normal(&mut self) -> f64 {
        let mut s = 0.0;
        for _ in 0..12 {
            s += self.uniform();
        }
        s - 6.0
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices from `[0, n)`, ascending. Partial Fisher-Yates on
    /// an index map so cost is O(k) in memory for small k.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut remap = std::collections::HashMap::new();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let j = i + self.below(n - i);
            let vj = *remap.get(&j).unwrap_or(&j);
            let vi = *remap.get(&i).unwrap_or(&i);
            out.push(vj);
            remap.insert(j, vi);
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn forked_streams_are_independent_of_parent_consumption() {
        let parent = Rng::new(9);
        let mut f1 = parent.fork(3);
        let mut parent2 = Rng::new(9);
        parent2.next_u64();
        let mut f2 = parent2.fork(3);
        assert_eq!(f1.next_u64(), f2.next_u64());
    }

    #[test]
    fn uniform_in_range_and_roughly_uniform() {
        let mut rng = Rng::new(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(2);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn sample_indices_distinct_and_in_range() {
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            let ks = rng.sample_indices(20, 5);
            assert_eq!(ks.len(), 5);
            for w in ks.windows(2) {
                assert!(w[0] < w[1]);
            }
            assert!(*ks.last().unwrap() < 20);
        }
    }

    #[test]
    fn below_covers_all_buckets() {
        let mut rng = Rng::new(11);
        let mut counts = [0usize; 8];
        for _ in 0..8000 {
            counts[rng.below(8)] += 1;
        }
        for c in counts {
            assert!(c > 800, "bucket count {c}");
        }
    }
}
