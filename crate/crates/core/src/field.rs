//! Exact arithmetic over prime fields GF(q).
//!
//! Everything transmitted or cached in a session is a vector of field
//! symbols, so this module is the substrate for the whole crate: element
//! ops, vectors, Gaussian-elimination rank, and the constrained sampler
//! used for per-user masking vectors.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("modulus {0} is not a prime in [2, 2^31)")]
    NotPrime(u64),
    #[error("operands use different moduli ({0} vs {1})")]
    ModulusMismatch(u64, u64),
    #[error("vector length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("empty input")]
    Empty,
}

/// Deterministic primality check by trial division; valid for q < 2^31.
pub fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    if q % 2 == 0 {
        return q == 2;
    }
    let mut d = 3u64;
    while d * d <= q {
        if q % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// A prime field GF(q). Elements are canonical residues in `[0, q)` stored
/// as `u64`; q < 2^31 so products never overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldCtx {
    q: u64,
}

impl FieldCtx {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if q >= 1 << 31 || !is_prime(q) {
            return Err(FieldError::NotPrime(q));
        }
        Ok(FieldCtx { q })
    }

    #[inline]
    pub fn order(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        a % self.q
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a * b) % self.q
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat: a^(q-2).
    pub fn inv(&self, a: u64) -> Result<u64, FieldError> {
        if a % self.q == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(a, self.q - 2))
    }

    /// Uniform element.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.q)
    }
}

/// A vector over GF(q). The modulus lives in the [`FieldCtx`] passed to each
/// operation; constructors reduce eagerly so stored elements are canonical.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FVec(pub Vec<u64>);

impl FVec {
    pub fn zero(len: usize) -> Self {
        FVec(vec![0; len])
    }

    /// Unit vector e_i (0-based index).
    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = vec![0; len];
        v[i] = 1;
        FVec(v)
    }

    pub fn from_raw(ctx: &FieldCtx, elems: &[u64]) -> Self {
        FVec(elems.iter().map(|&e| ctx.reduce(e)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn add(&self, ctx: &FieldCtx, other: &FVec) -> Result<FVec, FieldError> {
        if self.len() != other.len() {
            return Err(FieldError::LengthMismatch(self.len(), other.len()));
        }
        Ok(FVec(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| ctx.add(a, b))
                .collect(),
        ))
    }

    pub fn sub(&self, ctx: &FieldCtx, other: &FVec) -> Result<FVec, FieldError> {
        if self.len() != other.len() {
            return Err(FieldError::LengthMismatch(self.len(), other.len()));
        }
        Ok(FVec(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| ctx.sub(a, b))
                .collect(),
        ))
    }

    /// Element-wise product.
    pub fn mul(&self, ctx: &FieldCtx, other: &FVec) -> Result<FVec, FieldError> {
        if self.len() != other.len() {
            return Err(FieldError::LengthMismatch(self.len(), other.len()));
        }
        Ok(FVec(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| ctx.mul(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, ctx: &FieldCtx, c: u64) -> FVec {
        FVec(self.0.iter().map(|&a| ctx.mul(a, c)).collect())
    }

    pub fn sum(&self, ctx: &FieldCtx) -> u64 {
        self.0.iter().fold(0, |acc, &e| ctx.add(acc, e))
    }

    pub fn sample<R: Rng + ?Sized>(ctx: &FieldCtx, len: usize, rng: &mut R) -> FVec {
        FVec((0..len).map(|_| ctx.sample(rng)).collect())
    }
}

/// In-place accumulate `dst += c * src` over GF(q); lengths must match.
pub fn axpy(ctx: &FieldCtx, dst: &mut [u64], c: u64, src: &[u64]) {
    debug_assert_eq!(dst.len(), src.len());
    if c == 0 {
        return;
    }
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = ctx.add(*d, ctx.mul(c, s));
    }
}

/// Rank of a matrix over GF(q) by Gaussian elimination.
pub fn matrix_rank(ctx: &FieldCtx, rows: &[FVec]) -> Result<usize, FieldError> {
    if rows.is_empty() {
        return Err(FieldError::Empty);
    }
    let ncols = rows[0].len();
    for r in rows {
        if r.len() != ncols {
            return Err(FieldError::LengthMismatch(ncols, r.len()));
        }
    }
    let mut m: Vec<Vec<u64>> = rows.iter().map(|r| r.0.clone()).collect();
    let mut rank = 0usize;
    for col in 0..ncols {
        let Some(pivot) = (rank..m.len()).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = ctx.inv(m[rank][col])?;
        for e in m[rank].iter_mut() {
            *e = ctx.mul(*e, inv);
        }
        for r in 0..m.len() {
            if r != rank && m[r][col] != 0 {
                let c = ctx.neg(m[r][col]);
                let (head, tail) = m.split_at_mut(rank.max(r));
                let (piv_row, row) = if r < rank {
                    (&tail[0], &mut head[r])
                } else {
                    (&head[rank], &mut tail[0])
                };
                axpy(ctx, row, c, piv_row);
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    Ok(rank)
}

/// Uniform sample from the affine subspace `{x in GF(q)^len : sum(x) = target}`.
///
/// The first `len-1` coordinates are free and uniform; the last is forced,
/// which hits every point of the subspace exactly once.
pub fn sample_vec_with_sum<R: Rng + ?Sized>(
    ctx: &FieldCtx,
    len: usize,
    target_sum: u64,
    rng: &mut R,
) -> Result<FVec, FieldError> {
    if len == 0 {
        return Err(FieldError::Empty);
    }
    let mut v: Vec<u64> = (0..len - 1).map(|_| ctx.sample(rng)).collect();
    let partial = v.iter().fold(0, |acc, &e| ctx.add(acc, e));
    v.push(ctx.sub(ctx.reduce(target_sum), partial));
    Ok(FVec(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn primality() {
        assert!(is_prime(2));
        assert!(is_prime(3));
        assert!(is_prime(5));
        assert!(is_prime(2147483647));
        assert!(!is_prime(1));
        assert!(!is_prime(4));
        assert!(!is_prime(9));
        assert!(FieldCtx::new(6).is_err());
        assert!(FieldCtx::new(1).is_err());
    }

    #[test]
    fn small_field_fixtures() {
        let f3 = FieldCtx::new(3).unwrap();
        assert_eq!(f3.add(2, 2), 1);
        let f2 = FieldCtx::new(2).unwrap();
        assert_eq!(f2.inv(1).unwrap(), 1);
        let f5 = FieldCtx::new(5).unwrap();
        // Oracle: brute-force scan of products for the inverse of 2 mod 5.
        let expect = (1..5).find(|&x| (2 * x) % 5 == 1).unwrap();
        assert_eq!(expect, 3);
        assert_eq!(f5.inv(2).unwrap(), 3);
        assert_eq!(f5.inv(0), Err(FieldError::ZeroInverse));
    }

    /// Field axioms by exhaustive check for q <= 7.
    #[test]
    fn field_axioms_exhaustive() {
        for q in [2u64, 3, 5, 7] {
            let f = FieldCtx::new(q).unwrap();
            for a in 0..q {
                assert_eq!(f.add(a, f.neg(a)), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
                }
                for b in 0..q {
                    assert_eq!(f.add(a, b), f.add(b, a));
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in 0..q {
                        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }

    /// Brute-force rank: size of the row space by enumerating all spans.
    fn rank_by_span(ctx: &FieldCtx, rows: &[FVec]) -> usize {
        let q = ctx.order();
        let mut span = std::collections::HashSet::new();
        let k = rows.len();
        let mut coeffs = vec![0u64; k];
        loop {
            let mut acc = vec![0u64; rows[0].len()];
            for (c, r) in coeffs.iter().zip(rows) {
                axpy(ctx, &mut acc, *c, &r.0);
            }
            span.insert(acc);
            let mut i = 0;
            while i < k {
                coeffs[i] += 1;
                if coeffs[i] < q {
                    break;
                }
                coeffs[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
        let mut n = span.len();
        let mut r = 0;
        while n > 1 {
            n /= q as usize;
            r += 1;
        }
        r
    }

    #[test]
    fn rank_fixtures() {
        let f2 = FieldCtx::new(2).unwrap();
        let id2 = vec![FVec(vec![1, 0]), FVec(vec![0, 1])];
        assert_eq!(matrix_rank(&f2, &id2).unwrap(), 2);
        let dup = vec![FVec(vec![1, 1, 0]), FVec(vec![1, 1, 0])];
        assert_eq!(matrix_rank(&f2, &dup).unwrap(), 1);
        assert_eq!(matrix_rank(&f2, &[]), Err(FieldError::Empty));
    }

    #[test]
    fn rank_matches_span_enumeration() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for q in [2u64, 3] {
            let ctx = FieldCtx::new(q).unwrap();
            for rows_n in 1..=3usize {
                for cols in 1..=3usize {
                    for _ in 0..40 {
                        let rows: Vec<FVec> = (0..rows_n)
                            .map(|_| FVec::sample(&ctx, cols, &mut rng))
                            .collect();
                        assert_eq!(
                            matrix_rank(&ctx, &rows).unwrap(),
                            rank_by_span(&ctx, &rows),
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn sum_constrained_sampler() {
        let f2 = FieldCtx::new(2).unwrap();
        // Forced single coordinate.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let v = sample_vec_with_sum(&f2, 1, 0, &mut rng).unwrap();
        assert_eq!(v.0, vec![0]);

        // q=3, N=2, sum=2: support is exactly {(0,2),(1,1),(2,0)}.
        let f3 = FieldCtx::new(3).unwrap();
        for seed in 0..50 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let v = sample_vec_with_sum(&f3, 2, 2, &mut rng).unwrap();
            assert_eq!(v.sum(&f3), 2);
        }

        // q=2, N=2, sum=1: each of (0,1),(1,0) close to probability 1/2
        // over 10^4 seeds (3 sigma of a fair Bernoulli).
        let trials = 10_000u64;
        let mut zero_one = 0u64;
        for seed in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let v = sample_vec_with_sum(&f2, 2, 1, &mut rng).unwrap();
            assert_eq!(v.sum(&f2), 1);
            if v.0 == [0, 1] {
                zero_one += 1;
            }
        }
        let sigma = (trials as f64 * 0.25).sqrt();
        assert!((zero_one as f64 - trials as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn vector_ops_and_errors() {
        let f5 = FieldCtx::new(5).unwrap();
        let a = FVec(vec![1, 2, 3]);
        let b = FVec(vec![4, 4, 4]);
        assert_eq!(a.add(&f5, &b).unwrap().0, vec![0, 1, 2]);
        assert_eq!(a.sub(&f5, &b).unwrap().0, vec![2, 3, 4]);
        assert_eq!(a.scale(&f5, 2).0, vec![2, 4, 1]);
        let short = FVec(vec![1]);
        assert!(matches!(
            a.add(&f5, &short),
            Err(FieldError::LengthMismatch(3, 1))
        ));
    }
}
