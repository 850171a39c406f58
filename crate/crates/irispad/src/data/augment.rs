use image::DynamicImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Training-time augmentation: a horizontal flip with probability 0.5 drawn
/// from a seeded stream. In evaluation mode it is the identity.
#[derive(Debug)]
pub struct Augmenter {
    rng: ChaCha8Rng,
    training: bool,
}

impl Augmenter {
    pub fn new(seed: u64, training: bool) -> Self {
        Augmenter {
            rng: ChaCha8Rng::seed_from_u64(seed),
            training,
        }
    }

    pub fn apply(&mut self, image: &DynamicImage) -> DynamicImage {
        if self.training && self.rng.gen_bool(0.5) {
            image.fliph()
        } else {
            image.clone()
        }
    }

    /// The flip decision alone, for pipelines that flip tensors directly.
    pub fn next_flip(&mut self) -> bool {
        self.training && self.rng.gen_bool(0.5)
    }
}
