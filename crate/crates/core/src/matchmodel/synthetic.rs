//! Seeded synthetic pair sets for exercising the trainer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lingfeat::{FeatureVector, Slot, FEATURE_COUNT, RESERVED_SLOT_VALUE};

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub features: Vec<FeatureVector>,
    /// Labels after flipping.
    pub labels: Vec<u8>,
    /// `cos_embed_1 > 0.5`, before flipping.
    pub clean_labels: Vec<u8>,
}

/// `n` rows where the label is `cos_embed_1 > 0.5` and every other slot is
/// independent noise (binary slots Bernoulli(0.5), the rest U[0, 1], the
/// reserved slot constant). Each label flips with probability `label_noise`.
pub fn separable_pairs(n: usize, label_noise: f64, seed: u64) -> SyntheticSet {
    assert!((0.0..=1.0).contains(&label_noise));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut clean_labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = [0.0; FEATURE_COUNT];
        for slot in Slot::ALL {
            v[slot.index()] = match slot {
                Slot::Reserved17 => RESERVED_SLOT_VALUE,
                s if Slot::DIRECT.contains(&s) || Slot::RAG.contains(&s) => {
                    f64::from(u8::from(rng.random_bool(0.5)))
                }
                _ => rng.random::<f64>(),
            };
        }
        let clean = u8::from(v[Slot::CosEmbed1.index()] > 0.5);
        let flip = rng.random_bool(label_noise);
        features.push(FeatureVector::from_dense(v));
        clean_labels.push(clean);
        labels.push(if flip { 1 - clean } else { clean });
    }
    SyntheticSet {
        features,
        labels,
        clean_labels,
    }
}
