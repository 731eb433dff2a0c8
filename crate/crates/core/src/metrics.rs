//! CLEAR MOT and identity metrics on the ground plane.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, solve_gated};
use crate::{Error, Result};

pub const DEFAULT_MATCH_RADIUS: f64 = 1.0;

/// Objects of one frame, `(identity, x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FrameAnnotations {
    pub frame: u64,
    pub items: Vec<(u64, f64, f64)>,
}

impl FrameAnnotations {
    pub fn new(frame: u64, items: Vec<(u64, f64, f64)>) -> Self {
        Self { frame, items }
    }
}

/// Counts are stored as floats so that medians of even-sized sets stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MotReport {
    pub mota: f64,
    pub motp: f64,
    pub idp: f64,
    pub idr: f64,
    pub idf1: f64,
    pub fp: f64,
    pub fn_: f64,
    pub idsw: f64,
}

fn dist(a: &(u64, f64, f64), b: &(u64, f64, f64)) -> f64 {
    (a.1 - b.1).hypot(a.2 - b.2)
}

fn check_frames(truth: &[FrameAnnotations], hypothesis: &[FrameAnnotations]) -> Result<()> {
    if truth.len() != hypothesis.len() {
        return Err(Error::SequenceLength { truth: truth.len(), hypothesis: hypothesis.len() });
    }
    for (index, (t, h)) in truth.iter().zip(hypothesis).enumerate() {
        if t.frame != h.frame {
            return Err(Error::FrameMismatch { index, truth: t.frame, hypothesis: h.frame });
        }
        for f in [t, h] {
            let mut seen = BTreeSet::new();
            for item in &f.items {
                if !item.1.is_finite() || !item.2.is_finite() {
                    return Err(Error::NonFinite("annotation"));
                }
                if !seen.insert(item.0) {
                    return Err(Error::DuplicateIdentity { frame: f.frame, identity: item.0 });
                }
            }
        }
    }
    Ok(())
}

/// Per-pair count of frames in which truth `t` and hypothesis `h` are both
/// present and closer than `radius`.
pub fn identity_overlap(truth: &[FrameAnnotations], hypothesis: &[FrameAnnotations], radius: f64) -> BTreeMap<(u64, u64), u64> {
    let mut overlap = BTreeMap::new();
    for (t, h) in truth.iter().zip(hypothesis) {
        for a in &t.items {
            for b in &h.items {
                if dist(a, b) < radius {
                    *overlap.entry((a.0, b.0)).or_insert(0) += 1;
                }
            }
        }
    }
    overlap
}

/// Identity true positives under the best one-to-one truth-to-hypothesis
/// identity map.
fn best_idtp(truth: &[FrameAnnotations], hypothesis: &[FrameAnnotations], radius: f64) -> u64 {
    let overlap = identity_overlap(truth, hypothesis, radius);
    let tids: Vec<u64> = overlap.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let hids: Vec<u64> = overlap.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    if tids.is_empty() {
        return 0;
    }
    let cost: Vec<Vec<f64>> = tids
        .iter()
        .map(|t| hids.iter().map(|h| -(overlap.get(&(*t, *h)).copied().unwrap_or(0) as f64)).collect())
        .collect();
    hungarian(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| overlap.get(&(tids[i], hids[j])).copied().unwrap_or(0)))
        .sum()
}

/// Precision, recall and F1 from identity true positives and totals.
pub fn id_scores(idtp: u64, total_truth: u64, total_hyp: u64) -> (f64, f64, f64) {
    let idp = if total_hyp == 0 { if total_truth == 0 { 1.0 } else { 0.0 } } else { idtp as f64 / total_hyp as f64 };
    let idr = if total_truth == 0 { if total_hyp == 0 { 1.0 } else { 0.0 } } else { idtp as f64 / total_truth as f64 };
    let idf1 = if idp + idr > 0.0 { 2.0 * idp * idr / (idp + idr) } else { 0.0 };
    (idp, idr, idf1)
}

/// Evaluates a hypothesis sequence against ground truth.
///
/// Matches are pairs closer than `match_radius`. A pair matched in the
/// previous frame is kept while it stays within the radius; the remaining
/// objects are matched by minimum total distance. An identity switch is
/// counted when a truth object is matched to a different hypothesis than at
/// its previous match. Without ground truth MOTA is 1 when there are no false
/// positives and 0 otherwise.
pub fn evaluate_sequence(truth: &[FrameAnnotations], hypothesis: &[FrameAnnotations], match_radius: f64) -> Result<MotReport> {
    if !(match_radius > 0.0) {
        return Err(Error::InvalidParameter(format!("match radius must be positive, got {match_radius}")));
    }
    check_frames(truth, hypothesis)?;
    let (mut gt, mut hyp_total, mut matches) = (0u64, 0u64, 0u64);
    let (mut fp, mut fn_, mut idsw) = (0u64, 0u64, 0u64);
    let mut dist_sum = 0.0;
    let mut previous: BTreeMap<u64, u64> = BTreeMap::new();
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();

    for (t, h) in truth.iter().zip(hypothesis) {
        gt += t.items.len() as u64;
        hyp_total += h.items.len() as u64;
        let mut t_used = vec![false; t.items.len()];
        let mut h_used = vec![false; h.items.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (ti, a) in t.items.iter().enumerate() {
            let Some(&hid) = previous.get(&a.0) else { continue };
            if let Some(hj) = h.items.iter().position(|b| b.0 == hid) {
                if !h_used[hj] && dist(a, &h.items[hj]) < match_radius {
                    t_used[ti] = true;
                    h_used[hj] = true;
                    pairs.push((ti, hj));
                }
            }
        }
        let rest_t: Vec<usize> = (0..t.items.len()).filter(|&i| !t_used[i]).collect();
        let rest_h: Vec<usize> = (0..h.items.len()).filter(|&j| !h_used[j]).collect();
        if !rest_t.is_empty() && !rest_h.is_empty() {
            let cost: Vec<Vec<Option<f64>>> = rest_t
                .iter()
                .map(|&i| {
                    rest_h
                        .iter()
                        .map(|&j| {
                            let d = dist(&t.items[i], &h.items[j]);
                            (d < match_radius).then_some(d)
                        })
                        .collect()
                })
                .collect();
            for (a, b) in solve_gated(&cost) {
                pairs.push((rest_t[a], rest_h[b]));
            }
        }

        previous.clear();
        for &(ti, hj) in &pairs {
            let (a, b) = (&t.items[ti], &h.items[hj]);
            if let Some(&prev) = last_match.get(&a.0) {
                if prev != b.0 {
                    idsw += 1;
                }
            }
            last_match.insert(a.0, b.0);
            previous.insert(a.0, b.0);
            dist_sum += dist(a, b);
        }
        matches += pairs.len() as u64;
        fn_ += t.items.len() as u64 - pairs.len() as u64;
        fp += h.items.len() as u64 - pairs.len() as u64;
    }

    let mota = if gt == 0 {
        if fp == 0 { 1.0 } else { 0.0 }
    } else {
        1.0 - (fn_ + fp + idsw) as f64 / gt as f64
    };
    let motp = if matches == 0 { 0.0 } else { dist_sum / matches as f64 };
    let idtp = best_idtp(truth, hypothesis, match_radius);
    let (idp, idr, idf1) = id_scores(idtp, gt, hyp_total);
    Ok(MotReport { mota, motp, idp, idr, idf1, fp: fp as f64, fn_: fn_ as f64, idsw: idsw as f64 })
}

/// Median of a non-empty slice; the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyReports);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Componentwise median over cameras.
pub fn aggregate_across_cameras(reports: &[MotReport]) -> Result<MotReport> {
    let m = |f: fn(&MotReport) -> f64| median(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(MotReport {
        mota: m(|r| r.mota)?,
        motp: m(|r| r.motp)?,
        idp: m(|r| r.idp)?,
        idr: m(|r| r.idr)?,
        idf1: m(|r| r.idf1)?,
        fp: m(|r| r.fp)?,
        fn_: m(|r| r.fn_)?,
        idsw: m(|r| r.idsw)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(frames: Vec<Vec<(u64, f64, f64)>>) -> Vec<FrameAnnotations> {
        frames.into_iter().enumerate().map(|(f, items)| FrameAnnotations::new(f as u64, items)).collect()
    }

    fn walk(n: usize) -> Vec<FrameAnnotations> {
        seq((0..n).map(|f| vec![(1, f as f64 * 0.1, 0.0), (2, 5.0, f as f64 * 0.1)]).collect())
    }

    #[test]
    fn perfect_hypothesis() {
        let t = walk(10);
        let r = evaluate_sequence(&t, &t, 1.0).unwrap();
        assert_eq!(r, MotReport { mota: 1.0, motp: 0.0, idp: 1.0, idr: 1.0, idf1: 1.0, fp: 0.0, fn_: 0.0, idsw: 0.0 });
    }

    #[test]
    fn empty_hypothesis() {
        let t = walk(5);
        let h = seq(vec![vec![]; 5]);
        let r = evaluate_sequence(&t, &h, 1.0).unwrap();
        assert_eq!(r.mota, 0.0);
        assert_eq!(r.idr, 0.0);
        assert_eq!(r.fn_, 10.0);
    }

    #[test]
    fn single_switch_halves_idf1() {
        let t = seq((0..10).map(|f| vec![(1, f as f64, 0.0)]).collect());
        let h = seq((0..10).map(|f| vec![(if f < 5 { 7 } else { 8 }, f as f64, 0.0)]).collect());
        let r = evaluate_sequence(&t, &h, 1.0).unwrap();
        assert_eq!(r.idsw, 1.0);
        assert_eq!((r.idp, r.idr, r.idf1), (0.5, 0.5, 0.5));
        assert_eq!(r.mota, 0.9);
    }

    #[test]
    fn continuity_beats_closer_newcomer() {
        // Hypothesis 9 drifts but stays in range; 8 appears closer at frame 2.
        let t = seq(vec![vec![(1, 0.0, 0.0)], vec![(1, 0.0, 0.0)], vec![(1, 0.0, 0.0)]]);
        let h = seq(vec![vec![(9, 0.1, 0.0)], vec![(9, 0.5, 0.0)], vec![(9, 0.6, 0.0), (8, 0.0, 0.0)]]);
        let r = evaluate_sequence(&t, &h, 1.0).unwrap();
        assert_eq!(r.idsw, 0.0);
        assert_eq!(r.fp, 1.0);
    }

    #[test]
    fn extra_false_positive_costs_one_over_gt() {
        let t = walk(6);
        let mut h = t.clone();
        let base = evaluate_sequence(&t, &h, 1.0).unwrap();
        h[3].items.push((99, -20.0, -20.0));
        let r = evaluate_sequence(&t, &h, 1.0).unwrap();
        assert!((base.mota - r.mota - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let t = walk(3);
        assert!(matches!(evaluate_sequence(&t, &walk(2), 1.0), Err(Error::SequenceLength { .. })));
        let mut h = t.clone();
        h[1].frame = 7;
        assert!(matches!(evaluate_sequence(&t, &h, 1.0), Err(Error::FrameMismatch { index: 1, .. })));
        let mut h = t.clone();
        h[0].items.push((1, 0.0, 0.0));
        assert!(matches!(evaluate_sequence(&t, &h, 1.0), Err(Error::DuplicateIdentity { frame: 0, identity: 1 })));
    }

    #[test]
    fn medians() {
        let r = |mota| MotReport { mota, ..Default::default() };
        assert_eq!(aggregate_across_cameras(&[r(0.6)]).unwrap(), r(0.6));
        assert!((aggregate_across_cameras(&[r(0.6), r(0.8), r(0.7)]).unwrap().mota - 0.7).abs() < 1e-15);
        assert!((aggregate_across_cameras(&[r(0.6), r(0.8)]).unwrap().mota - 0.7).abs() < 1e-15);
        assert_eq!(aggregate_across_cameras(&[]), Err(Error::EmptyReports));
        let c = |fp| MotReport { fp, ..Default::default() };
        assert_eq!(aggregate_across_cameras(&[c(1.0), c(2.0)]).unwrap().fp, 1.5);
    }

    fn arb_sequence() -> impl Strategy<Value = (Vec<FrameAnnotations>, Vec<FrameAnnotations>)> {
        let frame = || prop::collection::btree_map(0u64..3, (-2.0f64..2.0, -2.0f64..2.0), 0..=3);
        (1usize..=12).prop_flat_map(move |n| {
            (prop::collection::vec(frame(), n), prop::collection::vec(frame(), n)).prop_map(|(t, h)| {
                let conv = |v: Vec<BTreeMap<u64, (f64, f64)>>| seq(v.into_iter().map(|m| m.into_iter().map(|(k, (x, y))| (k, x, y)).collect()).collect());
                (conv(t), conv(h))
            })
        })
    }

    proptest! {
        #[test]
        fn relabeling_keeps_idf1((t, h) in arb_sequence()) {
            let a = evaluate_sequence(&t, &h, 1.0).unwrap();
            let relabeled: Vec<FrameAnnotations> = h.iter().map(|f| FrameAnnotations::new(f.frame, f.items.iter().map(|&(i, x, y)| (100 + (i + 1) % 3, x, y)).collect())).collect();
            let b = evaluate_sequence(&t, &relabeled, 1.0).unwrap();
            prop_assert_eq!(a.idf1, b.idf1);
            prop_assert!(a.mota <= 1.0);
            if a.idp + a.idr > 0.0 {
                prop_assert!((a.idf1 - 2.0 * a.idp * a.idr / (a.idp + a.idr)).abs() < 1e-15);
            }
        }

        #[test]
        fn perfect_is_one((t, _) in arb_sequence()) {
            let r = evaluate_sequence(&t, &t, 1.0).unwrap();
            prop_assert_eq!(r.mota, 1.0);
            prop_assert_eq!(r.idsw, 0.0);
        }
    }
}
