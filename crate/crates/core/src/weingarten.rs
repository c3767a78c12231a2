//! Orthogonal Weingarten calculus for small moment orders.
//!
//! Moments of a Haar-orthogonal matrix scaled by `sqrt(c_w)` reduce to sums over
//! pairs of pair partitions, weighted by a Weingarten value that depends only on
//! the coset cycle type of the two pairings.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{domain, Error, Result};

/// A perfect matching of `{1, ..., 2m}` in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    /// Builds a pairing from arbitrary pairs, canonicalizing the order.
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = pairs
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        pairs.sort_unstable();
        let m = pairs.len();
        if m == 0 {
            return Err(domain("a pairing needs at least one pair"));
        }
        let mut seen = vec![false; 2 * m + 1];
        for &(a, b) in &pairs {
            for i in [a, b] {
                if i == 0 || i > 2 * m || seen[i] {
                    return Err(domain(format!("pairs do not cover 1..={} exactly once", 2 * m)));
                }
                seen[i] = true;
            }
        }
        Ok(Pairing { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn m(&self) -> usize {
        self.pairs.len()
    }

    /// Partner of each index (0-based), as a fixed-point-free involution.
    fn involution(&self) -> Vec<usize> {
        let mut p = vec![0; 2 * self.m()];
        for &(a, b) in &self.pairs {
            p[a - 1] = b - 1;
            p[b - 1] = a - 1;
        }
        p
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &(a, b) in &self.pairs {
            write!(f, "({a}{b})")?;
        }
        Ok(())
    }
}

/// An integer partition with parts in weakly decreasing order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CycleType {
    parts: Vec<usize>,
}

impl CycleType {
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(domain("cycle type parts must be positive and nonempty"));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(CycleType { parts })
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn m(&self) -> usize {
        self.parts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// All partitions of `m`, in reverse lexicographic order: `(1,...,1)` first.
    pub fn all_of(m: usize) -> Vec<CycleType> {
        fn rec(rem: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if rem == 0 {
                out.push(cur.clone());
                return;
            }
            for p in (1..=rem.min(max)).rev() {
                cur.push(p);
                rec(rem - p, p, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(m, m, &mut Vec::new(), &mut out);
        out.reverse();
        out.into_iter().map(|parts| CycleType { parts }).collect()
    }
}

impl fmt::Display for CycleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// A Weingarten value at fixed `n`, exact when available and otherwise a `1/n` series.
#[derive(Debug, Clone, PartialEq)]
pub struct WeingartenValue {
    pub exact: Option<BigRational>,
    /// `(power, coefficient)` meaning `coefficient / n^power`, powers increasing.
    pub series: Option<Vec<(u32, i64)>>,
}

impl WeingartenValue {
    /// The exact value if present, otherwise the summed series at `n`.
    pub fn value(&self, n: usize) -> f64 {
        if let Some(q) = &self.exact {
            return rational_to_f64(q);
        }
        let series = self.series.as_deref().unwrap_or(&[]);
        series_sum(series, n as f64, u32::MAX)
    }
}

/// Every canonical pairing of `{1, ..., 2m}` in lexicographic order.
pub fn enumerate_pairings(m: usize) -> Result<Vec<Pairing>> {
    if !(1..=6).contains(&m) {
        return Err(domain(format!("enumerate_pairings needs 1 <= m <= 6, got {m}")));
    }
    fn rec(free: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
        if free.is_empty() {
            out.push(Pairing { pairs: cur.clone() });
            return;
        }
        let a = free.remove(0);
        for k in 0..free.len() {
            let b = free.remove(k);
            cur.push((a, b));
            rec(free, cur, out);
            cur.pop();
            free.insert(k, b);
        }
        free.insert(0, a);
    }
    let mut out = Vec::new();
    rec(&mut (1..=2 * m).collect(), &mut Vec::new(), &mut out);
    Ok(out)
}

/// Half-lengths of the cycles of `tau ∘ pi`.
///
/// The union of two perfect matchings is a disjoint union of alternating cycles;
/// a component with `2k` vertices contributes the part `k`.
pub fn coset_cycle_type(pi: &Pairing, tau: &Pairing) -> Result<CycleType> {
    if pi.m() != tau.m() {
        return Err(domain(format!("pairings of different size: {} vs {}", pi.m(), tau.m())));
    }
    let (p, t) = (pi.involution(), tau.involution());
    let mut seen = vec![false; p.len()];
    let mut parts = Vec::new();
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut i = start;
        let mut len = 0;
        loop {
            seen[i] = true;
            let j = p[i];
            seen[j] = true;
            len += 1;
            i = t[j];
            if i == start {
                break;
            }
        }
        parts.push(len);
    }
    CycleType::new(parts)
}

/// Exact `W[λ]` for `|λ| ≤ 2`.
pub fn weingarten_exact_k2(n: usize, lambda: &CycleType) -> Result<BigRational> {
    if n < 3 {
        return Err(domain(format!("exact Weingarten values need n >= 3, got {n}")));
    }
    let nb = BigInt::from(n);
    let one = BigInt::one();
    let denom = (&nb - &one) * &nb * (&nb + BigInt::from(2));
    match lambda.parts() {
        [1] => Ok(BigRational::new(one, nb)),
        [1, 1] => Ok(BigRational::new(&nb + &one, denom)),
        [2] => Ok(BigRational::new(-one, denom)),
        _ => Err(Error::Unsupported(format!(
            "no exact Weingarten value for {lambda}; use weingarten_series"
        ))),
    }
}

/// Series coefficients `(power, coeff)` through `1/n^5`.
pub fn series_coefficients(lambda: &CycleType) -> Result<&'static [(u32, i64)]> {
    Ok(match lambda.parts() {
        [1] => &[(1, 1)],
        [1, 1] => &[(2, 1), (4, 2), (5, -2)],
        [2] => &[(3, -1), (4, 1), (5, -3)],
        [1, 1, 1] => &[(3, 1), (5, 6)],
        [2, 1] => &[(4, -1), (5, 1)],
        [3] => &[(5, 2)],
        _ => {
            return Err(Error::Unsupported(format!(
                "Weingarten series only tabulated for m <= 3, got {lambda}"
            )))
        }
    })
}

fn series_sum(series: &[(u32, i64)], n: f64, order: u32) -> f64 {
    series
        .iter()
        .filter(|(p, _)| *p <= order)
        .map(|&(p, c)| c as f64 / n.powi(p as i32))
        .sum()
}

/// Truncated `1/n` series for `W[λ]`, keeping powers up to `order`.
///
/// `W[1] = 1/n` is exact and returned whole for any `order >= 1`.
pub fn weingarten_series(n: usize, lambda: &CycleType, order: u32) -> Result<f64> {
    if order > 5 {
        return Err(Error::Unsupported(format!("series known only through 1/n^5, asked {order}")));
    }
    Ok(series_sum(series_coefficients(lambda)?, n as f64, order))
}

/// Both representations of `W[λ]` available at width `n`.
pub fn weingarten(n: usize, lambda: &CycleType) -> Result<WeingartenValue> {
    let series = series_coefficients(lambda)?.to_vec();
    let exact = if lambda.m() <= 2 { Some(weingarten_exact_k2(n, lambda)?) } else { None };
    Ok(WeingartenValue { exact, series: Some(series) })
}

fn catalan(k: usize) -> i64 {
    let mut c: i64 = 1;
    for i in 0..k as i64 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}

/// Leading `1/n` coefficient: `∏ (-1)^{λ_i - 1} Catalan(λ_i - 1)`.
pub fn beta_leading(lambda: &CycleType) -> i64 {
    lambda
        .parts()
        .iter()
        .map(|&p| if p % 2 == 0 { -catalan(p - 1) } else { catalan(p - 1) })
        .product()
}

/// `(-1)^{s-1} (s-1)!`.
pub fn mobius_coefficient(s: usize) -> Result<i64> {
    if s == 0 {
        return Err(domain("Möbius coefficient needs s >= 1"));
    }
    let f: i64 = (1..s as i64).product();
    Ok(if s % 2 == 1 { f } else { -f })
}

/// `E[W_{i1 j1} ... W_{i2k j2k}]` for `W = sqrt(c_w) O`, `O` Haar on `O(n)`.
///
/// Indices are 1-based. Odd moments vanish and return `0.0`. Orders `k <= 2` use
/// exact Weingarten values, `k = 3` the series through `1/n^5`.
pub fn orthogonal_moment(n: usize, c_w: f64, rows: &[usize], cols: &[usize]) -> Result<f64> {
    if rows.len() != cols.len() {
        return Err(domain("row and column index lists differ in length"));
    }
    if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i == 0 || i > n) {
        return Err(domain(format!("index {bad} outside 1..={n}")));
    }
    if rows.is_empty() || rows.len() % 2 == 1 {
        return Ok(if rows.is_empty() { 1.0 } else { 0.0 });
    }
    let k = rows.len() / 2;
    if k > 3 {
        return Err(Error::Unsupported(format!("moments of order {} not supported", 2 * k)));
    }
    let pairings = enumerate_pairings(k)?;
    let matches = |p: &Pairing, idx: &[usize]| p.pairs().iter().all(|&(a, b)| idx[a - 1] == idx[b - 1]);
    let row_ok: Vec<&Pairing> = pairings.iter().filter(|p| matches(p, rows)).collect();
    let col_ok: Vec<&Pairing> = pairings.iter().filter(|p| matches(p, cols)).collect();
    let mut total = 0.0;
    if k <= 2 {
        let mut acc = BigRational::zero();
        for p in &row_ok {
            for s in &col_ok {
                acc += weingarten_exact_k2(n, &coset_cycle_type(p, s)?)?;
            }
        }
        total = rational_to_f64(&acc);
    } else {
        for p in &row_ok {
            for s in &col_ok {
                total += weingarten_series(n, &coset_cycle_type(p, s)?, 5)?;
            }
        }
    }
    Ok(total * c_w.powi(k as i32))
}

pub(crate) fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}
