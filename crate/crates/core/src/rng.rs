use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Counter-based random stream: identical `(seed, stream_id)` pairs yield
/// identical draw sequences, distinct stream ids give independent streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha12Rng,
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            inner,
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derived stream for a sub-task (chain, replicate, block).
    pub fn substream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed, self.stream_id.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}
