//! Fleiss' κ across a fixed number of raters (here: training runs).

use serde::{Deserialize, Serialize};

use super::{Result, StatsError};
use crate::num::Real;

/// `items × raters` category indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    ratings: Vec<Vec<usize>>,
    num_categories: usize,
}

impl RatingMatrix {
    pub fn new(ratings: Vec<Vec<usize>>, num_categories: usize) -> Result<Self> {
        let raters = ratings.first().map(Vec::len).ok_or(StatsError::Empty)?;
        if raters < 2 {
            return Err(StatsError::InvalidRatings(format!(
                "need >= 2 raters, got {raters}"
            )));
        }
        if let Some(row) = ratings.iter().position(|r| r.len() != raters) {
            return Err(StatsError::InvalidRatings(format!(
                "item {row} has a different rater count"
            )));
        }
        if let Some(&bad) = ratings.iter().flatten().find(|&&c| c >= num_categories) {
            return Err(StatsError::InvalidRatings(format!(
                "category {bad} outside [0, {num_categories})"
            )));
        }
        Ok(RatingMatrix {
            ratings,
            num_categories,
        })
    }

    /// Transposes per-rater label vectors (one per run) into a rating matrix.
    pub fn from_raters(per_rater: &[Vec<usize>], num_categories: usize) -> Result<Self> {
        let items = per_rater.first().map(Vec::len).ok_or(StatsError::Empty)?;
        if let Some(r) = per_rater.iter().find(|r| r.len() != items) {
            return Err(StatsError::LengthMismatch(items, r.len()));
        }
        let ratings = (0..items)
            .map(|i| per_rater.iter().map(|r| r[i]).collect())
            .collect();
        Self::new(ratings, num_categories)
    }

    pub fn items(&self) -> usize {
        self.ratings.len()
    }

    pub fn raters(&self) -> usize {
        self.ratings[0].len()
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.ratings
    }
}

/// `κ = (P̄ − P̄_e) / (1 − P̄_e)`; 1 when every rating falls in one category.
pub fn fleiss_kappa<T: Real>(m: &RatingMatrix) -> Result<T> {
    let n_items = T::from_usize_lossy(m.items());
    let r = T::from_usize_lossy(m.raters());
    let mut totals = vec![T::zero(); m.num_categories];
    let mut p_bar = T::zero();
    for row in m.rows() {
        let mut counts = vec![T::zero(); m.num_categories];
        for &c in row {
            counts[c] += T::one();
        }
        let sq: T = counts.iter().map(|&c| c * c).sum();
        p_bar += (sq - r) / (r * (r - T::one()));
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    p_bar /= n_items;
    let p_e: T = totals
        .iter()
        .map(|&t| {
            let p = t / (n_items * r);
            p * p
        })
        .sum();
    if p_e >= T::one() {
        return if p_bar >= T::one() {
            Ok(T::one())
        } else {
            Err(StatsError::UndefinedKappa(p_bar.as_f64()))
        };
    }
    Ok((p_bar - p_e) / (T::one() - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement_is_one() {
        let m = RatingMatrix::new(vec![vec![0, 0, 0], vec![1, 1, 1], vec![2, 2, 2]], 3).unwrap();
        assert_eq!(fleiss_kappa::<f64>(&m).unwrap(), 1.0);
        let single = RatingMatrix::new(vec![vec![1, 1], vec![1, 1]], 2).unwrap();
        assert_eq!(fleiss_kappa::<f64>(&single).unwrap(), 1.0);
    }

    #[test]
    fn hand_matrix() {
        // (A,A,B), (A,A,A), (B,B,B): P_i = 1/3, 1, 1 -> P̄ = 7/9
        // p_A = 5/9, p_B = 4/9 -> P̄_e = 41/81; κ = (63/81 − 41/81)/(40/81) = 22/40
        let m = RatingMatrix::new(vec![vec![0, 0, 1], vec![0, 0, 0], vec![1, 1, 1]], 2).unwrap();
        assert!((fleiss_kappa::<f64>(&m).unwrap() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(RatingMatrix::new(vec![vec![0]], 2).is_err());
        assert!(RatingMatrix::new(vec![vec![0, 1], vec![0]], 2).is_err());
        assert!(RatingMatrix::new(vec![vec![0, 2]], 2).is_err());
        assert!(RatingMatrix::new(vec![], 2).is_err());
        let m = RatingMatrix::from_raters(&[vec![0, 1, 1], vec![0, 1, 0]], 2).unwrap();
        assert_eq!(m.rows(), &[vec![0, 0], vec![1, 1], vec![1, 0]]);
    }
}
