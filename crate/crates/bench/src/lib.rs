//! Shared inputs for the benchmarks.

use agentdial_core::prng::Xoshiro256;
use agentdial_core::react::render_trace;
use agentdial_core::testgen;
use agentdial_core::{render_call, ApiCall};

/// Rendered calls from the property-test generator.
pub fn call_texts(n: usize, seed: u64) -> Vec<String> {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    (0..n).map(|_| render_call(&testgen::call(&mut rng))).collect()
}

pub fn calls(n: usize, seed: u64) -> Vec<ApiCall> {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    (0..n).map(|_| testgen::call(&mut rng)).collect()
}

/// Rendered multi-turn traces.
pub fn traces(n: usize, seed: u64) -> Vec<String> {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    (0..n)
        .map(|i| render_trace(&testgen::dialogue(&mut rng, &format!("b{i}"))))
        .collect()
}

/// Pairs of sentences of roughly `words` tokens.
pub fn sentence_pairs(n: usize, words: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let long = |rng: &mut Xoshiro256| {
        let mut s = String::new();
        while s.split_whitespace().count() < words {
            s.push(' ');
            s.push_str(&testgen::sentence(rng));
        }
        s
    };
    (0..n).map(|_| (long(&mut rng), long(&mut rng))).collect()
}
