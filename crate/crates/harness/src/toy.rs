//! A small synthetic world for desk-scale attack runs: a template-grammar
//! corpus, a bigram generator over it, a hash local embedder and a linear
//! victim built on an independently seeded hash embedder.

use std::sync::Arc;

use embinv_core::embed::{EmbedderPort, HashEmbedder, LinearVictim};
use embinv_core::lm::{train_ngram, NGramLm};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DETS: &[&str] = &["the", "a", "every", "some", "this", "that", "my", "our", "your", "their"];
const ADJS: &[&str] = &[
    "big", "small", "red", "blue", "green", "old", "young", "quick", "slow", "happy", "sad",
    "bright", "dark", "quiet", "loud", "warm", "cold", "tall", "short", "soft", "hard", "heavy",
    "clever", "lazy", "brave", "calm", "wild", "gentle", "tiny", "proud", "hungry", "busy",
    "golden", "silver", "rusty", "famous",
];
const NOUNS: &[&str] = &[
    "dog", "cat", "bird", "fish", "horse", "farmer", "teacher", "doctor", "child", "girl", "boy",
    "river", "mountain", "city", "village", "garden", "house", "car", "train", "ship", "king",
    "queen", "baby", "student", "artist", "chef", "pilot", "nurse", "lawyer", "singer", "dancer",
    "forest", "ocean", "desert", "island", "bridge", "tower", "castle", "market", "school",
    "library", "museum", "kitchen", "window", "door", "robot", "wizard", "sailor", "tiger",
    "rabbit", "monkey", "painter", "baker", "soldier", "captain",
];
const TRANSITIVE: &[&str] = &[
    "sees", "likes", "finds", "watches", "follows", "helps", "builds", "paints", "visits",
    "cleans", "carries", "feeds", "loves", "hates", "calls", "chases", "opens", "closes", "buys",
    "sells", "draws", "holds", "pushes", "pulls", "catches", "misses", "greets", "meets", "warns",
    "trusts", "admires", "remembers",
];
const INTRANSITIVE: &[&str] = &[
    "runs", "sleeps", "sings", "dances", "laughs", "cries", "jumps", "swims", "waits", "smiles",
    "walks", "falls", "rests", "works", "plays", "shouts", "wanders",
];
const ADVERBS: &[&str] = &[
    "quickly", "slowly", "happily", "quietly", "loudly", "often", "always", "never", "rarely",
    "gladly", "softly", "early", "today", "again",
];
const PREPS: &[&str] = &[
    "near", "under", "over", "behind", "beside", "inside", "outside", "across", "through",
    "around",
];

/// `n` sentences of at most six words drawn from a fixed template grammar.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |words: &[&'static str], rng: &mut ChaCha8Rng| *words.choose(rng).expect("non-empty list");
    (0..n)
        .map(|_| {
            let r = &mut rng;
            let words: Vec<&str> = match r.random_range(0..6) {
                0 => vec![pick(DETS, r), pick(ADJS, r), pick(NOUNS, r), pick(TRANSITIVE, r), pick(DETS, r), pick(NOUNS, r)],
                1 => vec![pick(DETS, r), pick(NOUNS, r), pick(INTRANSITIVE, r), pick(ADVERBS, r)],
                2 => vec![pick(DETS, r), pick(NOUNS, r), pick(INTRANSITIVE, r), pick(PREPS, r), pick(DETS, r), pick(NOUNS, r)],
                3 => vec![pick(DETS, r), pick(ADJS, r), pick(NOUNS, r), pick(INTRANSITIVE, r)],
                4 => vec![pick(DETS, r), pick(NOUNS, r), pick(TRANSITIVE, r), pick(DETS, r), pick(ADJS, r), pick(NOUNS, r)],
                _ => vec![pick(DETS, r), pick(NOUNS, r), "and", pick(DETS, r), pick(NOUNS, r), pick(INTRANSITIVE, r)],
            };
            words.join(" ")
        })
        .collect()
}

/// Everything needed to run attacks in the synthetic world.
pub struct ToyWorld {
    pub corpus: Vec<String>,
    pub lm: NGramLm,
    pub local: Arc<dyn EmbedderPort>,
    pub victim: Arc<LinearVictim>,
}

pub const TOY_CORPUS_SIZE: usize = 500;
pub const TOY_LOCAL_DIM: usize = 256;
pub const TOY_VICTIM_BASE_DIM: usize = 256;
pub const TOY_VICTIM_DIM: usize = 192;

impl ToyWorld {
    pub fn new(seed: u64) -> Self {
        let corpus = synthetic_corpus(TOY_CORPUS_SIZE, seed);
        let lm = train_ngram(&corpus, 2, 0.1).expect("non-empty corpus");
        let local: Arc<dyn EmbedderPort> = Arc::new(HashEmbedder::new(TOY_LOCAL_DIM, 3, seed ^ 0x10ca1));
        let base: Arc<dyn EmbedderPort> = Arc::new(HashEmbedder::new(TOY_VICTIM_BASE_DIM, 3, seed ^ 0xb1c7));
        let victim = Arc::new(
            LinearVictim::random(base, TOY_VICTIM_DIM, seed ^ 0x3a9).expect("valid victim dimensions"),
        );
        Self { corpus, lm, local, victim }
    }

    /// `n` distinct corpus sentences chosen with `seed`.
    pub fn targets(&self, n: usize, seed: u64) -> Vec<String> {
        let mut unique: Vec<&String> = Vec::new();
        for s in &self.corpus {
            if !unique.contains(&s) {
                unique.push(s);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        unique.choose_multiple(&mut rng, n).map(|s| s.to_string()).collect()
    }
}
