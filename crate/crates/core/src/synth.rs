//! Planted-rationale corpora with a known generative label function.
//!
//! Every instance carries exactly one *trigger* token of its label's class
//! (the rationale), several copies of one *distractor* token, and filler.
//! In the training split the distractor agrees with the label with
//! probability `train_distractor_agreement`; in the test split it is drawn
//! independently of the label, which mimics a cross-domain shift where a
//! shortcut stops working.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Instance, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub num_classes: usize,
    pub triggers_per_class: usize,
    pub distractors_per_class: usize,
    pub fillers: usize,
    pub length: usize,
    /// Copies of the distractor token in each instance.
    pub distractor_repeats: usize,
    pub train_distractor_agreement: f64,
    pub test_distractor_agreement: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            num_classes: 2,
            triggers_per_class: 10,
            distractors_per_class: 2,
            fillers: 26,
            length: 10,
            distractor_repeats: 3,
            train_distractor_agreement: 0.95,
            test_distractor_agreement: 0.5,
            train_size: 2000,
            test_size: 500,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn vocab_size(&self) -> usize {
        self.num_classes * (self.triggers_per_class + self.distractors_per_class) + self.fillers
    }

    pub fn trigger(class: usize, k: usize) -> String {
        format!("trig{class}_{k}")
    }

    pub fn distractor(class: usize, k: usize) -> String {
        format!("dist{class}_{k}")
    }

    pub fn filler(k: usize) -> String {
        format!("fill{k}")
    }
}

/// The exact label function: the class of the (single) trigger token.
pub fn planted_label(tokens: &[String]) -> Option<usize> {
    tokens.iter().find_map(|t| {
        let rest = t.strip_prefix("trig")?;
        rest.split_once('_')?.0.parse().ok()
    })
}

/// Generates `(train, test)` splits.
pub fn planted_corpus(cfg: &PlantedConfig) -> (Dataset, Dataset) {
    assert!(
        cfg.length > cfg.distractor_repeats,
        "instance too short for its distractors"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = generate(
        cfg,
        &mut rng,
        cfg.train_size,
        cfg.train_distractor_agreement,
        Split::Train,
    );
    let test = generate(
        cfg,
        &mut rng,
        cfg.test_size,
        cfg.test_distractor_agreement,
        Split::Test,
    );
    (train, test)
}

fn generate(
    cfg: &PlantedConfig,
    rng: &mut ChaCha8Rng,
    n: usize,
    agreement: f64,
    split: Split,
) -> Dataset {
    let domain = match split {
        Split::Train => "source",
        Split::Test => "shifted",
    };
    let instances = (0..n)
        .map(|i| {
            let label = rng.gen_range(0..cfg.num_classes);
            let distractor_class = if rng.gen_bool(agreement) {
                label
            } else {
                let other = rng.gen_range(0..cfg.num_classes - 1);
                if other >= label {
                    other + 1
                } else {
                    other
                }
            };
            let distractor = PlantedConfig::distractor(
                distractor_class,
                rng.gen_range(0..cfg.distractors_per_class),
            );
            let mut slots: Vec<(String, u8)> = Vec::with_capacity(cfg.length);
            slots.push((
                PlantedConfig::trigger(label, rng.gen_range(0..cfg.triggers_per_class)),
                1,
            ));
            for _ in 0..cfg.distractor_repeats {
                slots.push((distractor.clone(), 0));
            }
            while slots.len() < cfg.length {
                slots.push((PlantedConfig::filler(rng.gen_range(0..cfg.fillers)), 0));
            }
            slots.shuffle(rng);
            let (tokens, mask): (Vec<String>, Vec<u8>) = slots.into_iter().unzip();
            Instance::new(format!("{split}-{i:05}"), tokens, mask, label).with_domain(domain)
        })
        .collect();
    Dataset::new(
        format!("planted-{split}"),
        cfg.num_classes,
        split,
        instances,
    )
    .expect("generated instances are valid")
}
