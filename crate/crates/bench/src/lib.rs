//! Input generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "get", "set", "name", "value", "list", "size", "return", "the", "of", "user", "index", "count", "this", "new",
    "add", "remove",
];

/// `len` tokens drawn from a 16-word vocabulary.
pub fn sentence(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_owned()).collect()
}

pub fn sentence_pairs(seed: u64, count: usize, len: usize) -> Vec<(Vec<String>, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (sentence(&mut rng, len), sentence(&mut rng, len))).collect()
}

/// A Java-like method body with `statements` assignment lines and a comment
/// sharing part of the vocabulary.
pub fn snippet(seed: u64, statements: usize) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code = String::from("void run() {\n");
    for _ in 0..statements {
        let words = sentence(&mut rng, 4);
        code.push_str(&format!("{}_{} = {}({});\n", words[0], words[1], words[2], words[3]));
    }
    code.push('}');
    (code, sentence(&mut rng, 10).join(" "))
}
