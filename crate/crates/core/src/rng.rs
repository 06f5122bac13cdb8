//! Keyed random streams.
//!
//! Every random decision in the pipeline is drawn from a ChaCha stream
//! selected by a key: the global seed picks the ChaCha key and the labels
//! (sequence, frame, person, purpose) hash to the 64-bit stream id. Two
//! consumers with different labels never share state, so results do not
//! depend on evaluation order or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Labels selecting one random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngKey {
    pub seed: u64,
    pub sequence_id: String,
    pub frame_index: u64,
    pub person_index: u64,
}

/// Purpose tags mixed into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamTag {
    Shift,
    Swap,
    Steal,
    Drop,
    Augment,
    Toy,
    Init,
    Order,
    Other(u32),
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::Shift => 1,
            StreamTag::Swap => 2,
            StreamTag::Steal => 3,
            StreamTag::Drop => 4,
            StreamTag::Augment => 5,
            StreamTag::Toy => 6,
            StreamTag::Init => 7,
            StreamTag::Order => 8,
            StreamTag::Other(v) => 0x1_0000_0000 | u64::from(v),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl RngKey {
    pub fn new(seed: u64, sequence_id: impl Into<String>, frame_index: u64, person_index: u64) -> Self {
        Self {
            seed,
            sequence_id: sequence_id.into(),
            frame_index,
            person_index,
        }
    }

    /// A key with only the seed set; handy for one-off streams.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, "", 0, 0)
    }

    /// Same labels under a different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn stream_id(&self, tag: StreamTag) -> u64 {
        let mut h = fnv1a(FNV_OFFSET, self.sequence_id.as_bytes());
        h = fnv1a(h, &[0xff]);
        h = fnv1a(h, &self.frame_index.to_le_bytes());
        h = fnv1a(h, &self.person_index.to_le_bytes());
        fnv1a(h, &tag.code().to_le_bytes())
    }

    pub fn stream(&self, tag: StreamTag) -> KeyedStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id(tag));
        KeyedStream(rng)
    }
}

/// Derives a child seed from a parent seed and an integer label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(FNV_OFFSET, &label.to_le_bytes()));
    rng.random()
}

/// Source of uniform draws on `[0, 1)`. Production code draws from a
/// [`KeyedStream`]; tests can script the exact values.
pub trait UniformSource {
    fn uniform(&mut self) -> f64;

    /// Uniform index in `0..n`; `n` must be positive.
    fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

#[derive(Debug, Clone)]
pub struct KeyedStream(ChaCha8Rng);

impl KeyedStream {
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

impl UniformSource for KeyedStream {
    fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

/// Replays a fixed list of draws, then panics.
#[derive(Debug, Clone)]
pub struct ScriptedDraws {
    values: Vec<f64>,
    pos: usize,
}

impl ScriptedDraws {
    pub fn new(values: impl Into<Vec<f64>>) -> Self {
        Self {
            values: values.into(),
            pos: 0,
        }
    }
}

impl UniformSource for ScriptedDraws {
    fn uniform(&mut self) -> f64 {
        let v = *self
            .values
            .get(self.pos)
            .expect("scripted draws exhausted");
        self.pos += 1;
        v
    }
}
