use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-step subsample indices derived from `(seed, step)`.
///
/// Clouds of equal length receive the same index set at a given step, so a
/// target generated by deforming a template's samples is compared on the
/// same subset of sample positions as the template itself.
#[derive(Debug, Clone, Copy)]
pub struct SubsampleSchedule {
    seed: u64,
    size: usize,
}

impl SubsampleSchedule {
    pub fn new(seed: u64, size: usize) -> Self {
        Self { seed, size }
    }

    /// Indices into a cloud of `len` points for `step`; the whole cloud when
    /// it is not larger than the subsample size.
    pub fn indices(&self, len: usize, step: u64) -> Vec<usize> {
        if len <= self.size {
            return (0..len).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step);
        index::sample(&mut rng, len, self.size).into_vec()
    }
}

/// Independent RNG for a `(seed, stream)` pair.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
