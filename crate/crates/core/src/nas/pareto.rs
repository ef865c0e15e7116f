use serde::{Deserialize, Serialize};

use super::constraints::Footprint;
use crate::snn::ArchDescriptor;

/// One evaluated architecture in objective space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub descriptor: ArchDescriptor,
    pub accuracy: f64,
    /// Joules per inference.
    pub energy: f64,
    pub footprint: Footprint,
}

/// Indices of the non-dominated `(energy, accuracy)` pairs, sorted by
/// energy. Lower energy and higher accuracy are better; exact duplicates
/// keep the earliest index.
pub fn pareto_front_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[b].1.total_cmp(&points[a].1))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in order {
        if points[i].1 > best {
            best = points[i].1;
            front.push(i);
        }
    }
    front
}

/// Non-dominated subset of `points`, sorted by energy.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.energy, p.accuracy)).collect();
    pareto_front_indices(&pairs)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Index (into `front`) of the point farthest from the chord joining the
/// front's extremes, in normalised (log10 energy, accuracy) space. Ties go
/// to the higher accuracy. `front` must be sorted by energy.
pub fn knee_index(front: &[(f64, f64)]) -> Option<usize> {
    match front.len() {
        0 => return None,
        1 => return Some(0),
        _ => {}
    }
    let xs: Vec<f64> = front.iter().map(|p| p.0.max(f64::MIN_POSITIVE).log10()).collect();
    let ys: Vec<f64> = front.iter().map(|p| p.1).collect();
    let norm = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        v.iter()
            .map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 })
            .collect()
    };
    let (xs, ys) = (norm(&xs), norm(&ys));
    let last = front.len() - 1;
    let (dx, dy) = (xs[last] - xs[0], ys[last] - ys[0]);
    let len = (dx * dx + dy * dy).sqrt();
    let dist = |i: usize| {
        if len == 0.0 {
            0.0
        } else {
            ((xs[i] - xs[0]) * dy - (ys[i] - ys[0]) * dx).abs() / len
        }
    };
    const TIE: f64 = 1e-12;
    let mut best = 0;
    for i in 1..front.len() {
        let (di, db) = (dist(i), dist(best));
        if di > db + TIE || (di >= db - TIE && front[i].1 > front[best].1) {
            best = i;
        }
    }
    Some(best)
}

/// Knee of an energy-sorted front.
pub fn knee_point(front: &[ParetoPoint]) -> Option<&ParetoPoint> {
    let pairs: Vec<(f64, f64)> = front.iter().map(|p| (p.energy, p.accuracy)).collect();
    knee_index(&pairs).map(|i| &front[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[(f64, f64)]) -> Vec<usize> {
        let mut keep = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let dominated = points.iter().any(|q| q.0 <= p.0 && q.1 >= p.1 && (q.0 < p.0 || q.1 > p.1));
            let dup_before = points[..i].iter().any(|q| q == p);
            if !dominated && !dup_before {
                keep.push(i);
            }
        }
        keep.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0));
        keep
    }

    #[test]
    fn examples() {
        assert_eq!(pareto_front_indices(&[(1.0, 0.5)]), vec![0]);
        assert_eq!(pareto_front_indices(&[(1e-3, 0.90), (2e-3, 0.85)]), vec![0]);
        assert_eq!(pareto_front_indices(&[(1.0, 0.5), (1.0, 0.5)]), vec![0]);
        assert!(pareto_front_indices(&[]).is_empty());
    }

    #[test]
    fn knee_examples() {
        assert_eq!(knee_index(&[(1.0, 0.5)]), Some(0));
        assert_eq!(knee_index(&[(1.0, 0.5), (2.0, 0.7)]), Some(1));
        assert_eq!(knee_index(&[(0.1, 0.5), (0.2, 0.9), (1.0, 0.95)]), Some(1));
        assert_eq!(knee_index(&[]), None);
    }

    proptest! {
        #[test]
        fn matches_brute_force(pts in proptest::collection::vec((0u8..20, 0u8..20), 0..200)) {
            let points: Vec<(f64, f64)> = pts.iter().map(|&(e, a)| (e as f64, a as f64 / 20.0)).collect();
            prop_assert_eq!(pareto_front_indices(&points), brute(&points));
        }
    }
}
