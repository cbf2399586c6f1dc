//! Statistics that turn embedding plots into assertable numbers: sweep rank
//! correlation, silhouette, interpolation checks, pair AUC, and a k-NN
//! probe.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

/// Average ranks (1-based), ties share the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Spearman rank correlation with tie-aware average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Group 1-D coordinates by parameter value, in ascending parameter order.
fn group_medians(
    coords_1d: &[f64],
    param_values: &[f64],
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if coords_1d.len() != param_values.len() || coords_1d.is_empty() {
        return Err(AnalysisError::Empty);
    }
    // f64 params come from a shared grid, so bit-equality grouping is sound.
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (&c, &p) in coords_1d.iter().zip(param_values) {
        groups.entry(p.to_bits()).or_insert((p, Vec::new())).1.push(c);
    }
    let mut out: Vec<(f64, f64)> = groups
        .into_values()
        .map(|(p, mut cs)| (p, median(&mut cs)))
        .collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite params"));
    Ok(out)
}

/// |Spearman rho| between the swept parameter and the median 1-D coordinate
/// per parameter group. Sign-insensitive: the 1-D axis orientation is
/// arbitrary.
pub fn sweep_rank_correlation(
    coords_1d: &[f64],
    param_values: &[f64],
) -> Result<f64, AnalysisError> {
    let medians = group_medians(coords_1d, param_values)?;
    if medians.len() < 2 {
        return Err(AnalysisError::SingleGroup(medians.len()));
    }
    let params: Vec<f64> = medians.iter().map(|&(p, _)| p).collect();
    let meds: Vec<f64> = medians.iter().map(|&(_, m)| m).collect();
    Ok(spearman(&params, &meds).abs())
}

/// Silhouette over the full-dimensional embeddings with cosine distance.
#[derive(Debug, Clone)]
pub struct SilhouetteResult {
    pub mean: f64,
    /// Points in singleton clusters (silhouette pinned to 0).
    pub singleton_points: Vec<usize>,
}

fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += (x as f64).powi(2);
        nb += (y as f64).powi(2);
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na.sqrt() * nb.sqrt())
}

pub fn silhouette(
    embeddings: &[Vec<f32>],
    labels: &[usize],
) -> Result<SilhouetteResult, AnalysisError> {
    let n = embeddings.len();
    if n == 0 || labels.len() != n {
        return Err(AnalysisError::Empty);
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    if by_label.len() < 2 {
        return Err(AnalysisError::SingleLabel);
    }

    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(&embeddings[i], &embeddings[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut total = 0.0f64;
    let mut singleton_points = Vec::new();
    for i in 0..n {
        let own = &by_label[&labels[i]];
        if own.len() < 2 {
            singleton_points.push(i);
            continue; // contributes 0
        }
        let a: f64 = own
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| dist[i * n + j])
            .sum::<f64>()
            / (own.len() - 1) as f64;
        let b = by_label
            .iter()
            .filter(|(&l, _)| l != labels[i])
            .map(|(_, members)| {
                members.iter().map(|&j| dist[i * n + j]).sum::<f64>() / members.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(SilhouetteResult {
        mean: total / n as f64,
        singleton_points,
    })
}

/// Per-group verdicts of the unseen-between-seen interpolation check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub pass: bool,
    /// (parameter value, lower seen neighbor, upper seen neighbor, ok).
    pub groups: Vec<InterpolationGroup>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolationGroup {
    pub param: f64,
    pub lower_seen: f64,
    pub upper_seen: f64,
    pub median: f64,
    pub ok: bool,
}

/// Checks that every unseen group's median 1-D coordinate falls strictly
/// between the medians of its adjacent seen groups (ties fail, tolerance
/// 1e-9). Unseen groups outside the seen range are not checkable and fail.
pub fn interpolation_check(
    coords_1d: &[f64],
    param_values: &[f64],
    seen: &[bool],
) -> Result<InterpolationReport, AnalysisError> {
    if coords_1d.len() != param_values.len() || coords_1d.len() != seen.len() {
        return Err(AnalysisError::Empty);
    }
    let medians = group_medians(coords_1d, param_values)?;
    let mut seen_by_param: BTreeMap<u64, bool> = BTreeMap::new();
    for (&p, &s) in param_values.iter().zip(seen) {
        let entry = seen_by_param.entry(p.to_bits()).or_insert(s);
        *entry = *entry || s;
    }
    let flags: Vec<bool> = medians
        .iter()
        .map(|&(p, _)| seen_by_param[&p.to_bits()])
        .collect();

    const TIE_TOL: f64 = 1e-9;
    let mut groups = Vec::new();
    let mut pass = true;
    for (gi, &(param, med)) in medians.iter().enumerate() {
        if flags[gi] {
            continue;
        }
        let lower = (0..gi).rev().find(|&j| flags[j]);
        let upper = (gi + 1..medians.len()).find(|&j| flags[j]);
        let (ok, lo_p, hi_p) = match (lower, upper) {
            (Some(lo), Some(hi)) => {
                let (lo_p, lo_m) = medians[lo];
                let (hi_p, hi_m) = medians[hi];
                let (mn, mx) = if lo_m <= hi_m { (lo_m, hi_m) } else { (hi_m, lo_m) };
                let ok = med > mn + TIE_TOL && med < mx - TIE_TOL;
                (ok, lo_p, hi_p)
            }
            _ => (false, f64::NAN, f64::NAN),
        };
        pass &= ok;
        groups.push(InterpolationGroup {
            param,
            lower_seen: lo_p,
            upper_seen: hi_p,
            median: med,
            ok,
        });
    }
    Ok(InterpolationReport { pass, groups })
}

/// Rank-based AUC of distance as a predictor of "different style".
/// Ties receive average ranks; 1.0 means perfect separation.
pub fn pair_auc(distances: &[(f64, bool)]) -> Result<f64, AnalysisError> {
    let positives = distances.iter().filter(|&&(_, same)| !same).count();
    let negatives = distances.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(AnalysisError::OneClassMissing);
    }
    let values: Vec<f64> = distances.iter().map(|&(d, _)| d).collect();
    let ranks = average_ranks(&values);
    let rank_sum: f64 = distances
        .iter()
        .zip(&ranks)
        .filter(|((_, same), _)| !same)
        .map(|(_, &r)| r)
        .sum();
    let np = positives as f64;
    let nn = negatives as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Leave-one-out k-NN classification with cosine distance.
/// Votes are tallied per label; ties break toward the smaller summed
/// distance among the k neighbors.
pub fn knn_accuracy(
    embeddings: &[Vec<f32>],
    labels: &[usize],
    k: usize,
    evaluate: Option<&[bool]>,
) -> Result<f64, AnalysisError> {
    let n = embeddings.len();
    if n < 2 || labels.len() != n {
        return Err(AnalysisError::Empty);
    }
    let mut correct = 0usize;
    let mut counted = 0usize;
    for i in 0..n {
        if let Some(mask) = evaluate {
            if !mask[i] {
                continue;
            }
        }
        let mut neighbors: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (cosine_distance(&embeddings[i], &embeddings[j]), labels[j]))
            .collect();
        neighbors.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances"));
        let top = &neighbors[..k.min(neighbors.len())];
        let mut votes: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for &(d, l) in top {
            let e = votes.entry(l).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        let predicted = votes
            .iter()
            .max_by(|a, b| {
                (a.1 .0, std::cmp::Reverse(ordered(a.1 .1)))
                    .cmp(&(b.1 .0, std::cmp::Reverse(ordered(b.1 .1))))
            })
            .map(|(&l, _)| l)
            .expect("k >= 1");
        if predicted == labels[i] {
            correct += 1;
        }
        counted += 1;
    }
    if counted == 0 {
        return Err(AnalysisError::Empty);
    }
    Ok(correct as f64 / counted as f64)
}

fn ordered(v: f64) -> std::cmp::Reverse<u64> {
    // Monotone map of non-negative f64 onto u64 for total ordering.
    std::cmp::Reverse(v.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_monotone_and_reversed() {
        let params = [0.0, 1.0, 2.0, 3.0];
        let coords = [10.0, 11.0, 12.0, 13.0];
        assert!((spearman(&params, &coords) - 1.0).abs() < 1e-12);
        let reversed = [13.0, 12.0, 11.0, 10.0];
        assert!((spearman(&params, &reversed) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_correlation_is_sign_insensitive() {
        let params: Vec<f64> = (0..20).map(|i| (i % 5) as f64).collect();
        let coords: Vec<f64> = params.iter().map(|&p| -3.0 * p + 0.01).collect();
        let rho = sweep_rank_correlation(&coords, &params).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_correlation_rejects_single_group() {
        let err = sweep_rank_correlation(&[1.0, 2.0], &[5.0, 5.0]).unwrap_err();
        assert!(matches!(err, AnalysisError::SingleGroup(1)));
    }

    #[test]
    fn two_group_sweep_rho_is_one_or_zero() {
        let rho = sweep_rank_correlation(&[0.0, 0.1, 5.0, 5.1], &[0.0, 0.0, 10.0, 10.0]).unwrap();
        assert_eq!(rho, 1.0);
        let rho = sweep_rank_correlation(&[1.0, -1.0, 0.1, -0.1], &[0.0, 0.0, 10.0, 10.0]).unwrap();
        assert_eq!(rho, 0.0);
    }

    #[test]
    fn silhouette_antipodal_clusters_near_one() {
        let mut embeddings = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let eps = 0.001 * i as f32;
            embeddings.push(vec![1.0, eps]);
            labels.push(0);
            embeddings.push(vec![-1.0, eps]);
            labels.push(1);
        }
        let s = silhouette(&embeddings, &labels).unwrap();
        assert!(s.mean > 0.99, "mean {}", s.mean);
        assert!(s.singleton_points.is_empty());
    }

    #[test]
    fn silhouette_single_label_rejected() {
        let embeddings: Vec<Vec<f32>> = (0..6).map(|_| vec![1.0, 0.0]).collect();
        let labels = vec![3usize; 6];
        assert!(matches!(
            silhouette(&embeddings, &labels).unwrap_err(),
            AnalysisError::SingleLabel
        ));
    }

    #[test]
    fn silhouette_flags_singletons_as_zero() {
        let embeddings = vec![
            vec![1.0, 0.0],
            vec![0.99, 0.01],
            vec![-1.0, 0.0],
            vec![-0.99, 0.01],
            vec![0.0, 1.0],
        ];
        let labels = vec![0, 0, 1, 1, 2];
        let s = silhouette(&embeddings, &labels).unwrap();
        assert_eq!(s.singleton_points, vec![4]);
    }

    #[test]
    fn interpolation_pass_and_fail_cases() {
        // Groups 0,2,4 seen; 1,3 unseen with monotone medians.
        let params = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0];
        let seen = [true, true, false, false, true, true, false, false, true, true];
        let coords = [0.0, 0.2, 1.0, 1.2, 2.0, 2.2, 3.0, 3.2, 4.0, 4.2];
        let report = interpolation_check(&coords, &params, &seen).unwrap();
        assert!(report.pass);
        assert_eq!(report.groups.len(), 2);

        // Push group 1's median outside its neighbors.
        let coords_bad = [0.0, 0.2, 9.0, 9.2, 2.0, 2.2, 3.0, 3.2, 4.0, 4.2];
        let report = interpolation_check(&coords_bad, &params, &seen).unwrap();
        assert!(!report.pass);
        let bad: Vec<_> = report.groups.iter().filter(|g| !g.ok).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].param, 1.0);

        // Exact tie with a neighbor median fails under the 1e-9 rule.
        let coords_tie = [0.0, 0.2, 0.0, 0.2, 2.0, 2.2, 3.0, 3.2, 4.0, 4.2];
        let report = interpolation_check(&coords_tie, &params, &seen).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn pair_auc_hand_cases() {
        let perfect = [(0.1, true), (0.2, true), (0.3, false), (0.4, false)];
        assert_eq!(pair_auc(&perfect).unwrap(), 1.0);

        let identical = [(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        assert!((pair_auc(&identical).unwrap() - 0.5).abs() < 1e-12);

        assert!(matches!(
            pair_auc(&[(0.1, true)]).unwrap_err(),
            AnalysisError::OneClassMissing
        ));
    }

    #[test]
    fn knn_probe_on_separated_clusters() {
        let mut embeddings = Vec::new();
        let mut labels = Vec::new();
        for c in 0..4usize {
            for j in 0..6 {
                let mut v = vec![0.0f32; 4];
                v[c] = 1.0;
                v[(c + 1) % 4] = 0.01 * j as f32;
                embeddings.push(v);
                labels.push(c);
            }
        }
        let acc = knn_accuracy(&embeddings, &labels, 5, None).unwrap();
        assert_eq!(acc, 1.0);

        // Restricting evaluation to a mask only scores those points.
        let mask: Vec<bool> = (0..embeddings.len()).map(|i| labels[i] == 2).collect();
        let acc = knn_accuracy(&embeddings, &labels, 5, Some(&mask)).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn statistics_are_permutation_invariant() {
        let params: Vec<f64> = (0..30).map(|i| (i % 6) as f64).collect();
        let coords: Vec<f64> = params.iter().map(|&p| p * 2.0 + ((p as i64) % 3) as f64 * 0.1).collect();
        let rho = sweep_rank_correlation(&coords, &params).unwrap();

        let mut idx: Vec<usize> = (0..30).collect();
        idx.reverse();
        idx.swap(3, 17);
        let coords_p: Vec<f64> = idx.iter().map(|&i| coords[i]).collect();
        let params_p: Vec<f64> = idx.iter().map(|&i| params[i]).collect();
        assert_eq!(rho, sweep_rank_correlation(&coords_p, &params_p).unwrap());
    }
}
