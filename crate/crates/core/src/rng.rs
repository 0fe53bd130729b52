use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic, splittable random stream.
///
/// Every stream is identified by a master seed and a stream index; two
/// streams with the same pair produce identical output and streams with
/// different indices never overlap. Replicas and grid points each derive
/// their own stream, so results do not depend on scheduling order.
#[derive(Clone, Debug)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    pub fn derive(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index);
        Self { inner }
    }

    /// Stream for a two-level index such as (grid point, replica).
    pub fn derive2(seed: u64, outer: u64, inner: u64) -> Self {
        Self::derive(seed, (outer << 32) ^ inner)
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
