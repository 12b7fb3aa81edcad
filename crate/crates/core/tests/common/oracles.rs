//! Reference implementations of the segment metrics and the sweeps that
//! compare them with the library.

use gesture_core::metrics::{edit_score, f1_at_k, segments_from_labels, Segment};
use rand::Rng;

/// Run-length compression, skipping unlabeled frames.
pub fn runs(labels: &[Option<u8>]) -> Vec<(u8, usize, usize)> {
    let mut out: Vec<(u8, usize, usize)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let Some(l) = *l else { continue };
        match out.last_mut() {
            Some((pl, _, e)) if *pl == l && *e + 1 == i => *e = i,
            _ => out.push((l, i, i)),
        }
    }
    out
}

pub fn levenshtein_dp(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub fn edit_oracle(pred: &[Option<u8>], truth: &[Option<u8>]) -> f64 {
    let p: Vec<u8> = runs(pred).into_iter().map(|r| r.0).collect();
    let t: Vec<u8> = runs(truth).into_iter().map(|r| r.0).collect();
    let n = p.len().max(t.len());
    if n == 0 {
        return 100.0;
    }
    (100.0 * (1.0 - levenshtein_dp(&p, &t) as f64 / n as f64)).max(0.0)
}

/// IoU by counting frames.
pub fn iou_frames(a: (usize, usize), b: (usize, usize)) -> f64 {
    let hi = a.1.max(b.1);
    let (mut inter, mut uni) = (0, 0);
    for f in 0..=hi {
        let ia = f >= a.0 && f <= a.1;
        let ib = f >= b.0 && f <= b.1;
        inter += usize::from(ia && ib);
        uni += usize::from(ia || ib);
    }
    inter as f64 / uni as f64
}

pub type Run = (u8, usize, usize);

pub fn greedy_tp(pred: &[Run], truth: &[Run], k: u32) -> usize {
    let mut used = vec![false; truth.len()];
    let mut tp = 0;
    for p in pred {
        let mut best = None::<(usize, f64)>;
        for (j, t) in truth.iter().enumerate() {
            if used[j] || t.0 != p.0 {
                continue;
            }
            let v = iou_frames((p.1, p.2), (t.1, t.2));
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, v)) = best {
            if v * 100.0 > k as f64 {
                used[j] = true;
                tp += 1;
            }
        }
    }
    tp
}

/// Maximum number of disjoint same-label pairs above the threshold.
pub fn optimal_tp(pred: &[Run], truth: &[Run], k: u32, used: &mut Vec<bool>) -> usize {
    let Some((p, rest)) = pred.split_first() else { return 0 };
    let mut best = optimal_tp(rest, truth, k, used);
    for j in 0..truth.len() {
        let t = truth[j];
        if !used[j] && t.0 == p.0 && iou_frames((p.1, p.2), (t.1, t.2)) * 100.0 > k as f64 {
            used[j] = true;
            best = best.max(1 + optimal_tp(rest, truth, k, used));
            used[j] = false;
        }
    }
    best
}

pub fn f1_from(tp: usize, np: usize, nt: usize) -> f64 {
    if np == 0 && nt == 0 {
        return 100.0;
    }
    100.0 * 2.0 * tp as f64 / (np + nt) as f64
}

pub fn to_segments(labels: &[Option<u8>]) -> Vec<Segment<u8>> {
    let opt: Vec<Option<usize>> = labels.iter().map(|l| l.map(usize::from)).collect();
    segments_from_labels(&opt)
        .into_iter()
        .map(|s| Segment {
            label: s.label.expect("labeled segment") as u8,
            start: s.start,
            end: s.end,
        })
        .collect()
}

pub fn check_f1(pred: &[Option<u8>], truth: &[Option<u8>], k: u32) -> (f64, f64, f64) {
    let got = f1_at_k(&to_segments(pred), &to_segments(truth), k);
    let (rp, rt) = (runs(pred), runs(truth));
    let greedy = f1_from(greedy_tp(&rp, &rt, k), rp.len(), rt.len());
    let optimal = f1_from(optimal_tp(&rp, &rt, k, &mut vec![false; rt.len()]), rp.len(), rt.len());
    (got, greedy, optimal)
}

pub fn all_sequences(len: usize, alphabet: &[Option<u8>]) -> Vec<Vec<Option<u8>>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                alphabet.iter().map(move |&a| {
                    let mut s = s.clone();
                    s.push(a);
                    s
                })
            })
            .collect();
    }
    out
}

pub fn random_labels(rng: &mut impl Rng, classes: u8, gaps: bool) -> Vec<Option<u8>> {
    let n = rng.random_range(0..40);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let l = if gaps && rng.random::<f64>() < 0.15 {
            None
        } else {
            Some(rng.random_range(0..classes))
        };
        for _ in 0..rng.random_range(1..8) {
            out.push(l);
        }
    }
    out.truncate(n);
    out
}

fn as_usize(v: &[Option<u8>]) -> Vec<Option<usize>> {
    v.iter().map(|l| l.map(usize::from)).collect()
}

/// Compares `edit_score` with the DP oracle on `n` random pairs.
pub fn edit_sweep(n: usize, seed: u64) -> Result<(), String> {
    let mut r = super::rng(seed);
    for _ in 0..n {
        let p = random_labels(&mut r, 5, true);
        let t = random_labels(&mut r, 5, true);
        let (got, want) = (edit_score(&as_usize(&p), &as_usize(&t)), edit_oracle(&p, &t));
        if got != want {
            return Err(format!("edit {got} vs oracle {want} for {p:?} / {t:?}"));
        }
    }
    Ok(())
}

fn compare_f1(p: &[Option<u8>], t: &[Option<u8>]) -> Result<bool, String> {
    let mut below_optimal = false;
    for k in [10, 25, 50] {
        let (got, greedy, optimal) = check_f1(p, t, k);
        if got != greedy || got > optimal || (k >= 50 && got != optimal) {
            return Err(format!(
                "k={k}: f1 {got}, greedy oracle {greedy}, optimal {optimal} for {p:?} / {t:?}"
            ));
        }
        below_optimal |= got < optimal;
    }
    Ok(below_optimal)
}

/// Every pair of length-6 sequences over {unlabeled, 0, 1} with at most
/// four segments. Returns the number of sequences per side and the pairs
/// where greedy matching scores below the optimal matching.
pub fn f1_exhaustive() -> Result<(usize, usize), String> {
    let seqs: Vec<_> = all_sequences(6, &[None, Some(0), Some(1)])
        .into_iter()
        .filter(|s| runs(s).len() <= 4)
        .collect();
    let mut gaps = 0;
    for p in &seqs {
        for t in &seqs {
            gaps += usize::from(compare_f1(p, t)?);
        }
    }
    Ok((seqs.len(), gaps))
}

pub fn f1_sweep(n: usize, seed: u64) -> Result<(), String> {
    let mut r = super::rng(seed);
    for _ in 0..n {
        let p = random_labels(&mut r, 4, true);
        let t = random_labels(&mut r, 4, true);
        compare_f1(&p, &t)?;
    }
    Ok(())
}
