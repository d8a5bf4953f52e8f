//! Brute-force reference implementations. They enumerate what the real
//! algorithms compute by dynamic programming, so they only scale to tiny
//! inputs; tests compare the two.

use crate::nn::Tensor;

/// Every length-`frames` sequence over `classes` symbols.
pub fn all_paths(frames: usize, classes: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..frames {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..classes).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

/// CTC collapse: merge repeats, then drop blanks (class 0).
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev && c != 0 {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

fn path_log_prob(probs: &Tensor, path: &[usize]) -> f64 {
    path.iter()
        .enumerate()
        .map(|(t, &c)| probs.get(t, c).ln())
        .sum()
}

/// Σ over all paths collapsing to `target` of the path probability.
pub fn ctc_path_sum(probs: &Tensor, target: &[usize]) -> f64 {
    all_paths(probs.rows(), probs.cols())
        .iter()
        .filter(|p| collapse(p) == target)
        .map(|p| path_log_prob(probs, p).exp())
        .sum()
}

/// Highest path log-probability among paths collapsing to `target`.
pub fn ctc_best_path_log(probs: &Tensor, target: &[usize]) -> f64 {
    all_paths(probs.rows(), probs.cols())
        .iter()
        .filter(|p| collapse(p) == target)
        .map(|p| path_log_prob(probs, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Edit distance by exhaustive recursion with memoisation over suffixes.
pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let sub = go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
        let del = go(&a[1..], b, memo) + 1;
        let ins = go(a, &b[1..], memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut Default::default())
}

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
pub fn pairwise_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in positives {
        for n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positives.len() * negatives.len()) as f64
}

/// Every way of placing `count` ordered segments with at least
/// `min_len` frames each into `frames` frames, gaps allowed anywhere.
/// Yields `(start, end_inclusive)` per segment.
pub fn all_segmentations(frames: usize, count: usize, min_len: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(from: usize, frames: usize, left: usize, min_len: usize, acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if left == 0 {
            out.push(acc.clone());
            return;
        }
        for start in from..frames {
            for end in start + min_len - 1..frames {
                acc.push((start, end));
                go(end + 1, frames, left - 1, min_len, acc, out);
                acc.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(0, frames, count, min_len.max(1), &mut Vec::new(), &mut out);
    out
}

/// chrF by listing every character n-gram of both strings and pairing
/// equal ones greedily, one order at a time. Whitespace is ignored.
pub fn chrf_bruteforce(reference: &str, hypothesis: &str, order: usize, beta: f64) -> f64 {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    if r.is_empty() && h.is_empty() {
        return 1.0;
    }
    let (mut precision, mut recall, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=order {
        let grams = |s: &[char]| -> Vec<Vec<char>> { s.windows(n).map(|w| w.to_vec()).collect() };
        let rg = grams(&r);
        let mut hg = grams(&h);
        if rg.is_empty() || hg.is_empty() {
            continue;
        }
        let total_h = hg.len();
        let mut matched = 0usize;
        for g in &rg {
            if let Some(pos) = hg.iter().position(|x| x == g) {
                hg.remove(pos);
                matched += 1;
            }
        }
        precision += matched as f64 / total_h as f64;
        recall += matched as f64 / rg.len() as f64;
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let (p, r) = (precision / orders as f64, recall / orders as f64);
    let b2 = beta * beta;
    if p + r == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / (b2 * p + r)
    }
}
