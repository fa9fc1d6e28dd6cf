//! Correlation, permutation significance and inter-annotator agreement.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of permutation replicates.
pub const DEFAULT_PERMUTATIONS: usize = 10_000;

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::Precondition(format!(
            "correlation needs at least 3 observations, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// 1-based fractional ranks; tied values share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_unchecked(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson_unchecked(xs, ys)
}

pub fn pearson_r2(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let r = pearson(xs, ys)?;
    Ok(r * r)
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson_unchecked(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Spearman,
    Pearson,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::Spearman => "spearman",
            Statistic::Pearson => "pearson",
        })
    }
}

/// Two-sided permutation p-value, `(1 + #{|stat_b| >= |stat_obs|}) / (B + 1)`.
///
/// Replicate `b` shuffles `ys` with a generator seeded by `seed + b`, so
/// every replicate is reproducible on its own. Replicate statistics within
/// 1e-12 of the observed magnitude count as ties.
pub fn permutation_pvalue(xs: &[f64], ys: &[f64], statistic: Statistic, permutations: usize, seed: u64) -> Result<f64> {
    if permutations < 100 {
        return Err(Error::Precondition(format!(
            "at least 100 permutations required, got {permutations}"
        )));
    }
    check_pair(xs, ys)?;
    let (xs, ys) = match statistic {
        Statistic::Spearman => (average_ranks(xs), average_ranks(ys)),
        Statistic::Pearson => (xs.to_vec(), ys.to_vec()),
    };
    let observed = pearson_unchecked(&xs, &ys)?.abs();
    let mut shuffled = ys.clone();
    let mut exceed = 0usize;
    for b in 0..permutations {
        shuffled.copy_from_slice(&ys);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
        shuffled.shuffle(&mut rng);
        let stat = pearson_unchecked(&xs, &shuffled)?.abs();
        if stat >= observed - 1e-12 {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (permutations + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub spearman_rho: f64,
    pub pearson_r2: f64,
    pub p_spearman: f64,
    pub p_pearson: f64,
    pub n: usize,
    pub permutations: usize,
    pub seed: u64,
}

pub fn correlate(xs: &[f64], ys: &[f64], permutations: usize, seed: u64) -> Result<CorrelationResult> {
    Ok(CorrelationResult {
        spearman_rho: spearman(xs, ys)?,
        pearson_r2: pearson_r2(xs, ys)?,
        p_spearman: permutation_pvalue(xs, ys, Statistic::Spearman, permutations, seed)?,
        p_pearson: permutation_pvalue(xs, ys, Statistic::Pearson, permutations, seed)?,
        n: xs.len(),
        permutations,
        seed,
    })
}

/// Fleiss' kappa for an items × categories table of rating counts. Every
/// row must sum to the same number of raters.
pub fn fleiss_kappa(table: &[Vec<usize>]) -> Result<f64> {
    let first = table
        .first()
        .ok_or_else(|| Error::Precondition("agreement table has no items".into()))?;
    let categories = first.len();
    if categories < 2 {
        return Err(Error::Precondition("at least 2 categories are required".into()));
    }
    let raters: usize = first.iter().sum();
    if raters < 2 {
        return Err(Error::Precondition("at least 2 raters per item are required".into()));
    }
    for (row, counts) in table.iter().enumerate() {
        if counts.len() != categories {
            return Err(Error::LengthMismatch {
                expected: categories,
                found: counts.len(),
            });
        }
        let sum: usize = counts.iter().sum();
        if sum != raters {
            return Err(Error::RowSumMismatch {
                row,
                expected: raters,
                found: sum,
            });
        }
    }
    let items = table.len() as f64;
    let n = raters as f64;
    let mut column_totals = vec![0usize; categories];
    let mut agreement_sum = 0.0;
    for counts in table {
        let squares: usize = counts.iter().map(|c| c * c).sum();
        agreement_sum += (squares - raters) as f64 / (n * (n - 1.0));
        for (total, c) in column_totals.iter_mut().zip(counts) {
            *total += c;
        }
    }
    if column_totals.iter().filter(|&&t| t > 0).count() < 2 {
        return Err(Error::DegenerateAgreement);
    }
    let p_bar = agreement_sum / items;
    let p_e: f64 = column_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (items * n);
            p * p
        })
        .sum();
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Landis and Koch qualitative band for a kappa value.
pub fn landis_koch_band(kappa: f64) -> &'static str {
    match kappa {
        k if k < 0.0 => "poor",
        k if k <= 0.20 => "slight",
        k if k <= 0.40 => "fair",
        k if k <= 0.60 => "moderate",
        k if k <= 0.80 => "substantial",
        _ => "almost perfect",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn correlation_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0);
        assert!((pearson_r2(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
        // y = [1,-2,1] has zero covariance with x = [1,2,3]
        assert_eq!(pearson_r2(&[1.0, 2.0, 3.0], &[1.0, -2.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn correlation_errors() {
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(Error::ConstantInput)
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let xs: Vec<f64> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
            let ys: Vec<f64> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a = rng.random_range(0.5..3.0);
            let b = rng.random_range(-2.0..2.0);
            let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            assert!((spearman(&xs, &ys).unwrap() - spearman(&moved, &ys).unwrap()).abs() < 1e-12);
            assert!((spearman(&xs, &ys).unwrap() + spearman(&flipped, &ys).unwrap()).abs() < 1e-12);
            assert!((pearson_r2(&xs, &ys).unwrap() - pearson_r2(&flipped, &ys).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_bounds_and_determinism() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let p = permutation_pvalue(&xs, &ys, Statistic::Spearman, 1000, 3).unwrap();
        assert_eq!(p, permutation_pvalue(&xs, &ys, Statistic::Spearman, 1000, 3).unwrap());
        assert!((1.0 / 1001.0..=1.0).contains(&p));
        assert!(permutation_pvalue(&xs, &ys, Statistic::Spearman, 99, 3).is_err());
    }

    #[test]
    fn kappa_examples() {
        let perfect = vec![vec![3, 0], vec![0, 3], vec![3, 0]];
        assert_eq!(fleiss_kappa(&perfect).unwrap(), 1.0);
        let degenerate = vec![vec![4, 0], vec![4, 0]];
        assert!(matches!(fleiss_kappa(&degenerate), Err(Error::DegenerateAgreement)));
        let ragged = vec![vec![2, 1], vec![1, 1]];
        assert!(matches!(
            fleiss_kappa(&ragged),
            Err(Error::RowSumMismatch { row: 1, .. })
        ));
        // the worked example from Fleiss (1971) style tables: 10 items, 14 raters
        let table = vec![
            vec![0, 0, 0, 0, 14],
            vec![0, 2, 6, 4, 2],
            vec![0, 0, 3, 5, 6],
            vec![0, 3, 9, 2, 0],
            vec![2, 2, 8, 1, 1],
            vec![7, 7, 0, 0, 0],
            vec![3, 2, 6, 3, 0],
            vec![2, 5, 3, 2, 2],
            vec![6, 5, 2, 1, 0],
            vec![0, 2, 2, 3, 7],
        ];
        assert!((fleiss_kappa(&table).unwrap() - 0.209_930_704_898).abs() < 1e-9);
    }

    #[test]
    fn bands() {
        assert_eq!(landis_koch_band(1.0), "almost perfect");
        assert_eq!(landis_koch_band(0.79), "substantial");
        assert_eq!(landis_koch_band(0.5), "moderate");
        assert_eq!(landis_koch_band(-0.1), "poor");
    }
}
