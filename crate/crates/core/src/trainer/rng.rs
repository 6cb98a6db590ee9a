//! Named, order-independent random streams.
//!
//! One root seed spawns any number of independent ChaCha streams keyed by
//! name (the stream id is a hash of the name). Streams advance separately,
//! so per-expert work can run in parallel without losing determinism, and
//! their positions serialize into checkpoints for exact resumption.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::fnv1a;
use crate::error::{Error, Result};
use crate::nn::TensorStore;

#[derive(Debug, Clone)]
pub struct RngStreams {
    root: u64,
    streams: BTreeMap<String, ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(root: u64) -> Self {
        Self { root, streams: BTreeMap::new() }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    fn fresh(root: u64, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(root);
        rng.set_stream(fnv1a(name.as_bytes()));
        rng
    }

    pub fn stream(&mut self, name: &str) -> &mut ChaCha8Rng {
        let root = self.root;
        self.streams.entry(name.to_string()).or_insert_with(|| Self::fresh(root, name))
    }

    /// Removes a stream so a worker thread can own it; put it back with
    /// [`RngStreams::restore`] once the parallel section ends.
    pub fn take(&mut self, name: &str) -> ChaCha8Rng {
        let root = self.root;
        self.streams.remove(name).unwrap_or_else(|| Self::fresh(root, name))
    }

    pub fn restore(&mut self, name: &str, rng: ChaCha8Rng) {
        self.streams.insert(name.to_string(), rng);
    }

    pub fn save_into(&self, store: &mut TensorStore) {
        store.insert_meta("rng.root", self.root.to_string());
        for (name, rng) in &self.streams {
            store.insert_meta(format!("rng.pos.{name}"), rng.get_word_pos().to_string());
        }
    }

    pub fn load_from(store: &TensorStore) -> Result<Self> {
        let root: u64 = store
            .meta("rng.root")?
            .parse()
            .map_err(|_| Error::Parse("bad rng root seed".into()))?;
        let mut streams = BTreeMap::new();
        for (key, value) in &store.meta {
            if let Some(name) = key.strip_prefix("rng.pos.") {
                let pos: u128 =
                    value.parse().map_err(|_| Error::Parse(format!("bad rng position for {name}")))?;
                let mut rng = Self::fresh(root, name);
                rng.set_word_pos(pos);
                streams.insert(name.to_string(), rng);
            }
        }
        Ok(Self { root, streams })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_creation_order() {
        let mut a = RngStreams::new(9);
        let mut b = RngStreams::new(9);
        let x1: f64 = a.stream("one").random();
        let _ = a.stream("two").random::<f64>();
        let _ = b.stream("two").random::<f64>();
        let y1: f64 = b.stream("one").random();
        assert_eq!(x1, y1);
    }

    #[test]
    fn positions_roundtrip_through_the_store() {
        let mut streams = RngStreams::new(4);
        for _ in 0..13 {
            let _: f64 = streams.stream("env").random();
        }
        let _: u32 = streams.stream("curriculum.0").random();
        let mut store = TensorStore::new();
        streams.save_into(&mut store);
        let mut restored = RngStreams::load_from(&store).unwrap();
        assert_eq!(
            streams.stream("env").random::<f64>(),
            restored.stream("env").random::<f64>()
        );
        assert_eq!(
            streams.stream("curriculum.0").random::<u32>(),
            restored.stream("curriculum.0").random::<u32>()
        );
    }
}
