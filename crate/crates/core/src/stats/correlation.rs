//! Pearson, Spearman (mid-ranks) and Kendall tau-b.
//!
//! Two-sided p-values are exact for `n <= EXACT_MAX_N`, from a full
//! enumeration of the permutations of `y`; above that Pearson and Spearman
//! use the t distribution with `n − 2` degrees of freedom and Kendall the
//! tie-corrected normal approximation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::{Result, StatsError};
use crate::num::Real;

pub const EXACT_MAX_N: usize = 10;

/// Relative slack when counting permutation statistics as extreme as the observed one.
const PERMUTATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    ExactPermutation,
    StudentT,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Correlation<T> {
    pub coefficient: T,
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

fn check_pair<T>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew {
            needed: 3,
            got: x.len(),
        });
    }
    Ok(())
}

fn centred(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| x - m).collect()
}

fn to_f64<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

/// Product-moment r of two pre-centred vectors with precomputed norms.
struct Centred {
    x: Vec<f64>,
    y: Vec<f64>,
    norm: f64,
}

impl Centred {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let (x, y) = (centred(x), centred(y));
        let sx = x.iter().map(|v| v * v).sum::<f64>();
        let sy = y.iter().map(|v| v * v).sum::<f64>();
        if sx == 0.0 {
            return Err(StatsError::ZeroVariance("x"));
        }
        if sy == 0.0 {
            return Err(StatsError::ZeroVariance("y"));
        }
        Ok(Centred {
            x,
            y,
            norm: (sx * sy).sqrt(),
        })
    }

    fn r_permuted(&self, perm: &[usize]) -> f64 {
        let cross: f64 = self.x.iter().zip(perm).map(|(a, &j)| a * self.y[j]).sum();
        (cross / self.norm).clamp(-1.0, 1.0)
    }
}

/// Calls `f` on every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Share of permutations whose statistic is at least as extreme as `observed`.
fn exact_p(n: usize, observed: f64, stat: impl Fn(&[usize]) -> f64) -> f64 {
    let threshold = observed.abs() * (1.0 - PERMUTATION_TOL) - PERMUTATION_TOL;
    let mut extreme = 0u64;
    let mut total = 0u64;
    for_each_permutation(n, |p| {
        total += 1;
        if stat(p).abs() >= threshold {
            extreme += 1;
        }
    });
    extreme as f64 / total as f64
}

fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn product_moment<T: Real>(x: &[f64], y: &[f64]) -> Result<Correlation<T>> {
    let c = Centred::new(x, y)?;
    let n = x.len();
    let identity: Vec<usize> = (0..n).collect();
    let r = c.r_permuted(&identity);
    let (p_value, method) = if n <= EXACT_MAX_N {
        (
            exact_p(n, r, |p| c.r_permuted(p)),
            PValueMethod::ExactPermutation,
        )
    } else {
        (t_test_p(r, n), PValueMethod::StudentT)
    };
    Ok(Correlation {
        coefficient: T::lit(r),
        p_value,
        n,
        method,
    })
}

/// Pearson's r. With a binary `y` this is the point-biserial coefficient.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    check_pair(x, y)?;
    product_moment(&to_f64(x), &to_f64(y))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn rank<T: Real>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| {
        xs[a]
            .partial_cmp(&xs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank (i + j)/2 + 1
        let shared = T::from_usize_lossy(i + j + 2) / (T::one() + T::one());
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson on mid-ranks.
pub fn spearman<T: Real>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    check_pair(x, y)?;
    product_moment(&to_f64(&rank(x)), &to_f64(&rank(y)))
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `Σ t(t−1)/2`, `Σ t(t−1)(t−2)` and `Σ t(t−1)(2t+5)` over tie groups.
fn tie_sums(xs: &[f64]) -> (f64, f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let (mut pairs, mut cubic, mut var) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        pairs += t * (t - 1.0) / 2.0;
        cubic += t * (t - 1.0) * (t - 2.0);
        var += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    (pairs, cubic, var)
}

/// Kendall's tau-b with tie correction.
pub fn kendall<T: Real>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    check_pair(x, y)?;
    let (x, y) = (to_f64(x), to_f64(y));
    let n = x.len();
    let n0 = (n * (n - 1) / 2) as f64;
    let (tx, tx3, tx_var) = tie_sums(&x);
    let (ty, ty3, ty_var) = tie_sums(&y);
    if tx == n0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if ty == n0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    let denom = ((n0 - tx) * (n0 - ty)).sqrt();
    let score = |perm: &[usize]| -> i64 {
        let mut s = 0i64;
        for i in 0..n {
            for j in (i + 1)..n {
                s += sign(x[i] - x[j]) * sign(y[perm[i]] - y[perm[j]]);
            }
        }
        s
    };
    let identity: Vec<usize> = (0..n).collect();
    let s = score(&identity) as f64;
    let tau = (s / denom).clamp(-1.0, 1.0);
    let (p_value, method) = if n <= EXACT_MAX_N {
        (
            exact_p(n, s, |p| score(p) as f64),
            PValueMethod::ExactPermutation,
        )
    } else {
        let nf = n as f64;
        let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tx_var - ty_var) / 18.0
            + tx3 * ty3 / (9.0 * nf * (nf - 1.0) * (nf - 2.0))
            + (2.0 * tx) * (2.0 * ty) / (2.0 * nf * (nf - 1.0));
        let z = s / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (
            (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0),
            PValueMethod::Normal,
        )
    };
    Ok(Correlation {
        coefficient: T::lit(tau),
        p_value,
        n,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let r = pearson(&x, &x).unwrap();
        assert!((r.coefficient - 1.0).abs() < 1e-15);
        // only the identity and nothing else reaches |r| = 1 besides the reversal
        assert!((r.p_value - 2.0 / 120.0).abs() < 1e-15);
        assert_eq!(
            pearson(&[1.0f64, 2.0, 3.0], &[3.0, 2.0, 1.0])
                .unwrap()
                .coefficient,
            -1.0
        );
    }

    #[test]
    fn spearman_is_rank_invariant() {
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let cubed: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        assert!((spearman(&x, &cubed).unwrap().coefficient - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert!((spearman(&x, &rev).unwrap().coefficient + 1.0).abs() < 1e-15);
    }

    #[test]
    fn kendall_values() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(kendall(&x, &x).unwrap().coefficient, 1.0);
        assert_eq!(
            kendall(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().coefficient,
            -1.0
        );
        // one adjacent swap: 5 concordant, 1 discordant of 6 pairs
        let tau = kendall(&x, &[2.0, 1.0, 3.0, 4.0]).unwrap().coefficient;
        assert!((tau - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mid_ranks() {
        assert_eq!(rank(&[10.0f64, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            pearson(&[1.0f64, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            StatsError::ZeroVariance("x")
        );
        assert!(spearman(&[1.0f64, 2.0, 3.0], &[5.0, 5.0, 5.0]).is_err());
        assert!(kendall(&[2.0f64, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(matches!(
            pearson(&[1.0f64, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooFew { .. })
        ));
        assert!(pearson(&[1.0f64, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn large_n_uses_asymptotics() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin() + v * 0.05).collect();
        let r = pearson(&x, &y).unwrap();
        assert_eq!(r.method, PValueMethod::StudentT);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
        assert_eq!(kendall(&x, &y).unwrap().method, PValueMethod::Normal);
    }

    #[test]
    fn heap_enumerates_all() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 120);
    }
}
