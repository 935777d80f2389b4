//! Maximum spanning arborescence decoding (Chu-Liu/Edmonds).
//!
//! Score matrices are indexed `[dependent][head]`; node 0 is the root and
//! only ever a head.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MstError {
    #[error("cannot decode an empty sentence")]
    Empty,
    #[error("score matrix must be square, found {0}×{1}")]
    Shape(usize, usize),
}

/// Best head of `v` among `nodes`, lowest index on ties.
fn best_head(scores: &Array2<f64>, v: usize, n: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_s = f64::NEG_INFINITY;
    for u in 0..n {
        if u == v {
            continue;
        }
        let s = scores[[v, u]];
        if best == usize::MAX || s > best_s {
            best = u;
            best_s = s;
        }
    }
    best
}

fn find_cycle(heads: &[usize]) -> Option<Vec<usize>> {
    let n = heads.len();
    let mut color = vec![0u8; n];
    color[0] = 2;
    for start in 1..n {
        if color[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while color[v] == 0 {
            color[v] = 1;
            path.push(v);
            v = heads[v];
        }
        if color[v] == 1 {
            let pos = path.iter().position(|&x| x == v).unwrap();
            let mut cycle = path[pos..].to_vec();
            cycle.sort_unstable();
            return Some(cycle);
        }
        for p in path {
            color[p] = 2;
        }
    }
    None
}

/// Unconstrained maximum arborescence rooted at 0. `heads[0]` is 0.
pub fn chu_liu_edmonds(scores: &Array2<f64>) -> Vec<usize> {
    let n = scores.nrows();
    let mut heads = vec![0; n];
    for v in 1..n {
        heads[v] = best_head(scores, v, n);
    }
    let cycle = match find_cycle(&heads) {
        None => return heads,
        Some(c) => c,
    };
    let in_cycle: Vec<bool> = (0..n).map(|v| cycle.contains(&v)).collect();
    // Contracted graph: outside nodes keep their relative order, the cycle
    // becomes the last node.
    let outside: Vec<usize> = (0..n).filter(|&v| !in_cycle[v]).collect();
    let m = outside.len() + 1;
    let c = m - 1;
    let mut sub = Array2::from_elem((m, m), f64::NEG_INFINITY);
    let mut enter = vec![0usize; m];
    let mut leave = vec![0usize; m];
    for (a, &u) in outside.iter().enumerate() {
        for (b, &w) in outside.iter().enumerate() {
            if a != b {
                sub[[b, a]] = scores[[w, u]];
            }
        }
        // u -> cycle, breaking the cycle edge into the entered node
        let mut best = f64::NEG_INFINITY;
        let mut arg = usize::MAX;
        for &v in &cycle {
            let s = scores[[v, u]] - scores[[v, heads[v]]];
            let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
            if arg == usize::MAX || s > best {
                best = s;
                arg = v;
            }
        }
        sub[[c, a]] = best;
        enter[a] = arg;
        // cycle -> u
        if u != 0 {
            let mut best = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for &v in &cycle {
                let s = scores[[u, v]];
                if arg == usize::MAX || s > best {
                    best = s;
                    arg = v;
                }
            }
            sub[[a, c]] = best;
            leave[a] = arg;
        }
    }
    let sub_heads = chu_liu_edmonds(&sub);
    let mut out = heads.clone();
    for (b, &w) in outside.iter().enumerate() {
        if w == 0 {
            continue;
        }
        let h = sub_heads[b];
        out[w] = if h == c { leave[b] } else { outside[h] };
    }
    let a = sub_heads[c];
    out[enter[a]] = outside[a];
    out
}

fn tree_score(scores: &Array2<f64>, heads: &[usize]) -> f64 {
    (1..heads.len()).map(|v| scores[[v, heads[v]]]).sum()
}

/// Maximum spanning arborescence with exactly one dependent of the root.
/// Returns one head per word (`result[i]` is the head of word `i + 1`).
///
/// When the unconstrained optimum has several root dependents, every word is
/// tried as the sole root dependent and the best tree kept (lowest word on
/// ties).
pub fn decode_mst(scores: &Array2<f64>) -> Result<Vec<usize>, MstError> {
    let (r, c) = scores.dim();
    if r != c {
        return Err(MstError::Shape(r, c));
    }
    if r < 2 {
        return Err(MstError::Empty);
    }
    let mut s = scores.clone();
    s.mapv_inplace(|x| if x.is_nan() { f64::NEG_INFINITY } else { x });
    for i in 0..r {
        s[[i, i]] = f64::NEG_INFINITY;
    }
    let heads = chu_liu_edmonds(&s);
    if heads[1..].iter().filter(|&&h| h == 0).count() == 1 {
        return Ok(heads[1..].to_vec());
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for root_child in 1..r {
        let mut m = s.clone();
        for v in 1..r {
            if v != root_child {
                m[[v, 0]] = f64::NEG_INFINITY;
            }
        }
        let h = chu_liu_edmonds(&m);
        let score = tree_score(&s, &h);
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, h));
        }
    }
    Ok(best.unwrap().1[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::validate_tree;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive maximum over single-rooted trees.
    fn brute_force(scores: &Array2<f64>) -> (f64, Vec<usize>) {
        let n = scores.nrows() - 1;
        let mut heads = vec![0usize; n];
        let mut best: Option<(f64, Vec<usize>)> = None;
        loop {
            if validate_tree(&heads).is_ok() {
                let s: f64 = heads.iter().enumerate().map(|(i, &h)| scores[[i + 1, h]]).sum();
                if best.as_ref().map_or(true, |(b, _)| s > *b) {
                    best = Some((s, heads.clone()));
                }
            }
            let mut k = 0;
            loop {
                if k == n {
                    return best.unwrap();
                }
                heads[k] += 1;
                if heads[k] <= n {
                    break;
                }
                heads[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn single_word_attaches_to_root() {
        let s = Array2::from_elem((2, 2), 1.0);
        assert_eq!(decode_mst(&s).unwrap(), vec![0]);
        assert_eq!(decode_mst(&Array2::zeros((1, 1))), Err(MstError::Empty));
    }

    #[test]
    fn two_node_cycle_is_broken() {
        // 1 and 2 prefer each other; root edge into 2 is the cheaper break.
        let mut s = Array2::from_elem((3, 3), f64::NEG_INFINITY);
        s[[1, 2]] = 10.0;
        s[[2, 1]] = 10.0;
        s[[1, 0]] = 1.0;
        s[[2, 0]] = 3.0;
        assert_eq!(decode_mst(&s).unwrap(), vec![2, 0]);
    }

    #[test]
    fn multiple_root_children_are_reduced_to_one() {
        let mut s = Array2::zeros((4, 4));
        for v in 1..4 {
            s[[v, 0]] = 5.0;
        }
        s[[2, 1]] = 4.0;
        s[[3, 1]] = 1.0;
        let heads = decode_mst(&s).unwrap();
        assert_eq!(heads.iter().filter(|&&h| h == 0).count(), 1);
        assert_eq!(heads, vec![0, 1, 1]);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=5 {
            for _ in 0..40 {
                let s = Array2::from_shape_simple_fn((n + 1, n + 1), || rng.gen_range(-3.0..3.0));
                let heads = decode_mst(&s).unwrap();
                validate_tree(&heads).unwrap();
                let got: f64 = heads.iter().enumerate().map(|(i, &h)| s[[i + 1, h]]).sum();
                let (want, _) = brute_force(&s);
                assert!((got - want).abs() < 1e-9, "n={} got {} want {}", n, got, want);
            }
        }
    }
}
