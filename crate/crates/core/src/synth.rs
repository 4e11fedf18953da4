//! Generator for a two-class labeled corpus whose classes differ only in
//! the shape of their event graphs.
//!
//! * `chain`: `A v1 B. B v2 C. C v3 D.` links entities through a path of
//!   distinct predicates.
//! * `star`: `A v1 B. A v1 C. A v1 D. B v2. C v3.` hangs three objects off a
//!   single predicate hub, with two more predicates on its leaves.
//!
//! Both shapes use four entities and three predicates drawn from the same
//! pools, so the multiset of node surfaces and categories carries no class
//! signal. Optional distractor sentences (`E v F.`) are added to both
//! classes alike.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NAMES: &[&str] = &[
    "Alice", "Bruno", "Chiara", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ilse", "Jonas",
    "Kofi", "Lena", "Mateo", "Nadia", "Oskar", "Priya", "Quinn", "Rosa", "Sven", "Tomas", "Ulla",
    "Viktor", "Wanda", "Xavi", "Yara", "Zane", "Amara", "Boris", "Carmen", "Dario", "Esme",
    "Fabio",
];

pub const VERBS: &[&str] = &[
    "meets", "calls", "helps", "visits", "hires", "praises", "chases", "beats", "backs", "funds",
    "joins", "sues", "attacks", "defeats", "tells", "pays", "loves", "needs",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Total documents, split evenly between the two classes.
    pub documents: usize,
    pub distractors: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            documents: 200,
            distractors: 1,
            seed: 7,
        }
    }
}

pub const CHAIN: &str = "chain";
pub const STAR: &str = "star";

fn pick<'a, const N: usize>(pool: &[&'a str], rng: &mut impl Rng) -> [&'a str; N] {
    let chosen: Vec<&str> = pool.choose_multiple(rng, N).copied().collect();
    chosen.try_into().expect("pool is large enough")
}

/// Text of one document of the given class.
pub fn document(class: &str, distractors: usize, rng: &mut impl Rng) -> Result<String> {
    let [a, b, c, d, e, f] = pick::<6>(NAMES, rng);
    let [v1, v2, v3, v4] = pick::<4>(VERBS, rng);
    let mut sentences = match class {
        CHAIN => vec![
            format!("{a} {v1} {b}."),
            format!("{b} {v2} {c}."),
            format!("{c} {v3} {d}."),
        ],
        STAR => vec![
            format!("{a} {v1} {b}."),
            format!("{a} {v1} {c}."),
            format!("{a} {v1} {d}."),
            format!("{b} {v2}."),
            format!("{c} {v3}."),
        ],
        other => {
            return Err(Error::invalid(
                "synthetic class",
                format!("unknown class {other:?}"),
            ))
        }
    };
    for _ in 0..distractors {
        sentences.push(format!("{e} {v4} {f}."));
    }
    sentences.shuffle(rng);
    Ok(sentences.join(" "))
}

/// The corpus as labeled-TSV text (`label<TAB>text` per line).
pub fn labeled_tsv(cfg: &SynthConfig) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = String::new();
    for i in 0..cfg.documents {
        let class = if i % 2 == 0 { CHAIN } else { STAR };
        out.push_str(class);
        out.push('\t');
        out.push_str(&document(class, cfg.distractors, &mut rng)?);
        out.push('\n');
    }
    Ok(out)
}
