//! Evaluation measures: regression error, correlation, liked/disliked
//! classification, cosine similarity, equal error rate and character error rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(p: &[f64], t: &[f64], min_len: usize) -> Result<()> {
    if p.len() != t.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} predictions vs {} targets",
            p.len(),
            t.len()
        )));
    }
    if p.len() < min_len {
        return Err(Error::InvalidInput(format!("need at least {min_len} pairs, got {}", p.len())));
    }
    Ok(())
}

pub fn mse(p: &[f64], t: &[f64]) -> Result<f64> {
    check_pair(p, t, 1)?;
    Ok(p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Sample Pearson correlation.
pub fn pearson_lcc(p: &[f64], t: &[f64]) -> Result<f64> {
    check_pair(p, t, 2)?;
    let (mp, mt) = (mean(p), mean(t));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in p.iter().zip(t) {
        let (da, db) = (a - mp, b - mt);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput("correlation undefined for zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `-0.0 + 0.0` is `+0.0`, so signed zeros sort as one value.
fn unsigned_zero(v: f64) -> f64 {
    v + 0.0
}

/// 1-based fractional ranks; tied values share the average of their ranks.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let x: Vec<f64> = x.iter().copied().map(unsigned_zero).collect();
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of fractional ranks.
pub fn spearman_srcc(p: &[f64], t: &[f64]) -> Result<f64> {
    check_pair(p, t, 2)?;
    pearson_lcc(&fractional_ranks(p), &fractional_ranks(t))
}

/// Kendall tau-b in O(n log n) (Knight's merge-sort count).
pub fn kendall_tau(p: &[f64], t: &[f64]) -> Result<f64> {
    check_pair(p, t, 2)?;
    let n = p.len() as i64;
    let n0 = n * (n - 1) / 2;
    let mut pairs: Vec<(f64, f64)> = p
        .iter()
        .zip(t)
        .map(|(&a, &b)| (unsigned_zero(a), unsigned_zero(b)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tied_in = |vals: &mut dyn Iterator<Item = (f64, f64)>, key: fn(&(f64, f64)) -> (f64, f64)| {
        let mut total = 0i64;
        let mut run = 0i64;
        let mut prev: Option<(f64, f64)> = None;
        for v in vals {
            let k = key(&v);
            if prev == Some(k) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
            prev = Some(k);
        }
        total + run * (run - 1) / 2
    };
    let ties_p = tied_in(&mut pairs.iter().copied(), |v| (v.0, 0.0));
    let ties_joint = tied_in(&mut pairs.iter().copied(), |v| *v);

    let mut ys: Vec<f64> = pairs.iter().map(|v| v.1).collect();
    let swaps = merge_count(&mut ys);
    let ties_t = tied_in(&mut ys.iter().map(|&y| (y, 0.0)), |v| *v);

    let numerator = n0 - ties_p - ties_t + ties_joint - 2 * swaps;
    tau_b(numerator, n0, ties_p, ties_t)
}

pub(crate) fn tau_b(numerator: i64, n0: i64, ties_p: i64, ties_t: i64) -> Result<f64> {
    let denom = (n0 - ties_p) * (n0 - ties_t);
    if denom == 0 {
        return Err(Error::InvalidInput("Kendall tau undefined when all pairs are tied".into()));
    }
    Ok(numerator as f64 / (denom as f64).sqrt())
}

/// Stable merge sort returning the number of strict inversions.
fn merge_count(v: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as i64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikeLabel {
    Liked,
    Disliked,
}

/// Returns `(accuracy, f1)`. F1 is 0 when precision + recall is 0.
pub fn accuracy_f1(pred: &[LikeLabel], truth: &[LikeLabel], positive: LikeLabel) -> Result<(f64, f64)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::InvalidInput(format!(
            "label lists must be equal-length and non-empty ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        if p == t {
            correct += 1;
        }
        match (*p == positive, *t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let accuracy = correct as f64 / pred.len() as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    };
    Ok((accuracy, f1))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("vector lengths {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidInput("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    /// Midpoint of the score interval that realises the selected operating point.
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Equal error rate over the candidate thresholds formed by all scores.
///
/// FAR is the fraction of impostor scores `>= t`, FRR the fraction of
/// genuine scores `< t`. The candidate minimising `|FAR - FRR|` wins (lowest
/// threshold on ties); EER is the mean of the two rates there.
pub fn compute_eer(genuine: &[f64], impostor: &[f64]) -> Result<EerResult> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::InvalidInput("EER needs genuine and impostor scores".into()));
    }
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut cands: Vec<f64> = g.iter().chain(&im).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let (ng, ni) = (g.len() as i64, im.len() as i64);

    let mut best: Option<(i64, usize, i64, i64)> = None;
    for (k, &t) in cands.iter().enumerate() {
        let fa = ni - im.partition_point(|&s| s < t) as i64;
        let fr = g.partition_point(|&s| s < t) as i64;
        let gap = (fa * ng - fr * ni).abs();
        if best.is_none_or(|b| gap < b.0) {
            best = Some((gap, k, fa, fr));
        }
    }
    let (_, k, fa, fr) = best.expect("at least one candidate");
    Ok(eer_at(&cands, k, fa, fr, ng, ni))
}

pub(crate) fn eer_at(cands: &[f64], k: usize, fa: i64, fr: i64, ng: i64, ni: i64) -> EerResult {
    let far = fa as f64 / ni as f64;
    let frr = fr as f64 / ng as f64;
    let threshold = if k == 0 {
        cands[0]
    } else {
        (cands[k - 1] + cands[k]) / 2.0
    };
    EerResult {
        eer: (far + frr) / 2.0,
        threshold,
        far,
        frr,
    }
}

/// Levenshtein distance with unit costs, two-row dynamic programme.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance normalised by reference length, over arbitrary symbols.
pub fn token_error_rate<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("error rate needs a non-empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Character error rate over Unicode scalar values.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    token_error_rate(&r, &h)
}
