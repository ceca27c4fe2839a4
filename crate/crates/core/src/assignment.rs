//! Optimal one-to-one matching of tracked masks against filtered detections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

/// Minimum-cost perfect assignment of a square cost matrix.
///
/// Returns `perm` with `perm[row] = column`. Among all optimal assignments the
/// lexicographically smallest permutation is returned, so equal-cost inputs
/// give reproducible answers.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidCost(format!(
                "row {i} has {} columns, expected {n}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidCost(format!("entry ({i},{j}) is not finite")));
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (row_pot, col_pot) = solve_duals(cost);
    let scale = cost.iter().flatten().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-9 * scale * n as f64;
    // Under optimal potentials, every optimal assignment uses only tight edges
    // and every perfect matching on tight edges is optimal.
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (cost[i][j] - row_pot[i] - col_pot[j]).abs() <= eps)
                .collect()
        })
        .collect();
    Ok(lexicographic_perfect_matching(&tight))
}

/// Shortest augmenting path method with row/column potentials, O(n³).
fn solve_duals(cost: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = cost.len();
    let a = |i: usize, j: usize| cost[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (u[1..].to_vec(), v[1..].to_vec())
}

fn lexicographic_perfect_matching(edges: &[Vec<bool>]) -> Vec<usize> {
    let n = edges.len();
    let mut perm = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    for i in 0..n {
        let mut chosen = None;
        for j in 0..n {
            if !edges[i][j] || col_used[j] {
                continue;
            }
            col_used[j] = true;
            let ok = has_perfect_matching(edges, i + 1, &col_used);
            col_used[j] = false;
            if ok {
                chosen = Some(j);
                break;
            }
        }
        let chosen = chosen.expect("tight graph always contains the solver's own matching");
        perm[i] = chosen;
        col_used[chosen] = true;
    }
    perm
}

/// Whether rows `first_row..n` can be matched into the free columns.
fn has_perfect_matching(edges: &[Vec<bool>], first_row: usize, col_used: &[bool]) -> bool {
    let n = edges.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    fn augment(
        r: usize,
        edges: &[Vec<bool>],
        col_used: &[bool],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for c in 0..edges.len() {
            if edges[r][c] && !col_used[c] && !seen[c] {
                seen[c] = true;
                if owner[c].is_none_or(|o| augment(o, edges, col_used, seen, owner)) {
                    owner[c] = Some(r);
                    return true;
                }
            }
        }
        false
    }
    (first_row..n).all(|r| {
        let mut seen = vec![false; n];
        augment(r, edges, col_used, &mut seen, &mut owner)
    })
}

/// One slot pairing of the padded assignment. `None` marks a padding slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub track: Option<usize>,
    pub seg: Option<usize>,
    pub iou: f64,
    pub matched: bool,
}

/// Bijection between padded track slots and padded segment slots.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<Pair>,
}

impl Matching {
    /// `(track, seg, iou)` for every matched pair.
    pub fn matched(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pairs.iter().filter(|p| p.matched).map(|p| {
            (
                p.track.expect("matched pair has a track"),
                p.seg.expect("matched pair has a segment"),
                p.iou,
            )
        })
    }

    pub fn unmatched_tracks(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .pairs
            .iter()
            .filter(|p| !p.matched)
            .filter_map(|p| p.track)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn unmatched_segs(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().filter(|p| !p.matched).filter_map(|p| p.seg).collect();
        v.sort_unstable();
        v
    }
}

/// Pads the shorter side with empty masks, maximizes total IoU, and flags a
/// pair as matched only when its IoU exceeds `matched_iou_min`.
pub fn match_track_seg(tracks: &[Mask], segs: &[Mask], matched_iou_min: f64) -> Result<Matching> {
    if let Some(first) = tracks.first().or(segs.first()) {
        for m in tracks.iter().chain(segs) {
            first.check_dims(m)?;
        }
    }
    let n = tracks.len().max(segs.len());
    let mut iou = vec![vec![0.0; n]; n];
    for (q, t) in tracks.iter().enumerate() {
        for (p, s) in segs.iter().enumerate() {
            iou[q][p] = t.iou(s)?;
        }
    }
    let cost: Vec<Vec<f64>> = iou.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let perm = hungarian(&cost)?;
    let pairs = perm
        .iter()
        .enumerate()
        .map(|(q, &p)| {
            let track = (q < tracks.len()).then_some(q);
            let seg = (p < segs.len()).then_some(p);
            let value = if track.is_some() && seg.is_some() {
                iou[q][p]
            } else {
                0.0
            };
            Pair {
                track,
                seg,
                iou: value,
                matched: track.is_some() && seg.is_some() && value > matched_iou_min,
            }
        })
        .collect();
    Ok(Matching { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
    }

    #[test]
    fn one_by_one() {
        assert_eq!(hungarian(&[vec![3.5]]).unwrap(), vec![0]);
    }

    #[test]
    fn two_by_two_brute_force() {
        let c = vec![vec![-0.9, -0.1], vec![-0.2, -0.8]];
        let p = hungarian(&c).unwrap();
        assert_eq!(p, vec![0, 1]);
        assert!((total(&c, &p) - -1.7).abs() < 1e-12);
    }

    #[test]
    fn all_zero_gives_identity() {
        let c = vec![vec![0.0; 3]; 3];
        assert_eq!(hungarian(&c).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        // Optimal cost -2 is reached by [1,0,2] and [2,0,1].
        let c = vec![vec![0.0, -1.0, -1.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]];
        assert_eq!(hungarian(&c).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[vec![0.0, 1.0]]).is_err());
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        assert_eq!(hungarian(&[]).unwrap(), Vec::<usize>::new());
    }

    fn px(w: u32, h: u32, pts: &[(u32, u32)]) -> Mask {
        Mask::from_pixels(w, h, pts).unwrap()
    }

    #[test]
    fn identical_single_pair_matches() {
        let m = px(4, 4, &[(1, 1), (2, 1)]);
        let r = match_track_seg(std::slice::from_ref(&m), std::slice::from_ref(&m), 0.0).unwrap();
        assert_eq!(r.matched().collect::<Vec<_>>(), vec![(0, 0, 1.0)]);
    }

    #[test]
    fn segments_without_tracks_are_unmatched() {
        let a = px(4, 4, &[(0, 0)]);
        let b = px(4, 4, &[(3, 3)]);
        let r = match_track_seg(&[], &[a, b], 0.0).unwrap();
        assert_eq!(r.pairs.len(), 2);
        assert_eq!(r.matched().count(), 0);
        assert_eq!(r.unmatched_segs(), vec![0, 1]);
        assert!(r.unmatched_tracks().is_empty());
    }

    #[test]
    fn second_track_takes_the_overlapping_segment() {
        // track1 has 10 px, seg covers 7 of them exactly -> IoU 0.7
        let t0 = px(10, 4, &[(0, 3)]);
        let t1_px: Vec<_> = (0..10).map(|x| (x, 0)).collect();
        let s_px: Vec<_> = (0..7).map(|x| (x, 0)).collect();
        let t1 = px(10, 4, &t1_px);
        let s = px(10, 4, &s_px);
        let r = match_track_seg(&[t0, t1], &[s], 0.0).unwrap();
        let m: Vec<_> = r.matched().collect();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].0, m[0].1), (1, 0));
        assert!((m[0].2 - 0.7).abs() < 1e-12);
        assert_eq!(r.unmatched_tracks(), vec![0]);
    }

    #[test]
    fn zero_overlap_pair_is_not_matched() {
        let t = px(4, 4, &[(0, 0)]);
        let s = px(4, 4, &[(3, 3)]);
        let r = match_track_seg(&[t], &[s], 0.0).unwrap();
        assert_eq!(r.matched().count(), 0);
        assert_eq!(r.unmatched_tracks(), vec![0]);
        assert_eq!(r.unmatched_segs(), vec![0]);
    }

    #[test]
    fn dimension_mismatch() {
        let t = px(4, 4, &[(0, 0)]);
        let s = px(5, 4, &[(0, 0)]);
        assert!(match_track_seg(&[t], &[s], 0.0).is_err());
    }
}
