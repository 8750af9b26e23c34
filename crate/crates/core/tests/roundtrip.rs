//! Seeded round-trip suites and oracle comparisons.

use agentdial_core::call::{ast_equal, match_call_sets, CallMatchPolicy};
use agentdial_core::eval::{lcs_len, rouge, RougeVariant};
use agentdial_core::prng::Xoshiro256;
use agentdial_core::testgen::{self, suites};
use agentdial_core::ApiCall;

#[test]
fn call_text() {
    assert_eq!(suites::call_round_trip(2000, 1), Vec::<String>::new());
}

#[test]
fn toolcall_json() {
    assert_eq!(suites::toolcall_json_round_trip(2000, 2), Vec::<String>::new());
}

#[test]
fn jsonl_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(suites::jsonl_round_trip(300, 3, dir.path()), Vec::<String>::new());
}

#[test]
fn traces() {
    assert_eq!(suites::trace_round_trip(2000, 4), Vec::<String>::new());
}

#[test]
fn masking() {
    assert_eq!(suites::masking_commutes(500, 5), Vec::<String>::new());
}

/// Longest common subsequence by enumerating every subsequence of `a`.
fn brute_lcs(a: &[&str], b: &[&str]) -> usize {
    let is_subseq = |s: &[&str]| {
        let mut it = b.iter();
        s.iter().all(|x| it.any(|y| y == x))
    };
    (0u32..(1 << a.len()))
        .filter_map(|mask| {
            let s: Vec<&str> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
            is_subseq(&s).then_some(s.len())
        })
        .max()
        .unwrap_or(0)
}

#[test]
fn rouge_l_against_brute_force() {
    let mut rng = Xoshiro256::seed_from_u64(6);
    let alphabet = ["a", "b", "c"];
    for _ in 0..3000 {
        let a: Vec<&str> = (0..rng.below(9)).map(|_| alphabet[rng.below(3) as usize]).collect();
        let b: Vec<&str> = (0..rng.below(9)).map(|_| alphabet[rng.below(3) as usize]).collect();
        let l = brute_lcs(&a, &b);
        assert_eq!(lcs_len(&a, &b), l);
        let expected = if l == 0 { 0.0 } else { 2.0 * l as f64 / (a.len() + b.len()) as f64 };
        assert!((rouge(&a.join(" "), &b.join(" "), RougeVariant::L) - expected).abs() < 1e-12);
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn call_sets_against_all_bijections() {
    let mut rng = Xoshiro256::seed_from_u64(7);
    let policy = CallMatchPolicy::default();
    let pool: Vec<ApiCall> = (0..3).map(|_| testgen::call(&mut rng)).collect();
    for _ in 0..4000 {
        let n = rng.below(5) as usize;
        let m = if rng.chance(0.8) { n } else { rng.below(5) as usize };
        let gold: Vec<ApiCall> = (0..n).map(|_| pool[rng.below(3) as usize].clone()).collect();
        let pred: Vec<ApiCall> = (0..m).map(|_| pool[rng.below(3) as usize].clone()).collect();
        let oracle = n == m
            && permutations(n)
                .iter()
                .any(|p| p.iter().enumerate().all(|(i, &j)| ast_equal(&pred[i], &gold[j], &policy)));
        assert_eq!(match_call_sets(&pred, &gold, &policy), oracle, "{pred:?} vs {gold:?}");
    }
}
