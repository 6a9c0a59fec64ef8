//! Closed-form performance: memory ratios, transmission loads and
//! subpacketization for the grouping and hybrid schemes, the matching
//! converse bound for the first layer, the two-subsystem baselines, and
//! the comparison sweeps. Everything is exact big-rational arithmetic;
//! only the CSV rendering of astronomically large subpacketizations falls
//! back to log10.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::scheme::Mode;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("parameter out of range: {0}")]
    Param(String),
    #[error("infeasible split: {0}")]
    Infeasible(String),
}

pub fn big_binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn big_ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// How to evaluate the single-layer load between cache lattice points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RcMethod {
    /// Memory sharing: linear interpolation between adjacent lattice loads.
    #[default]
    Interpolated,
    /// Evaluate `K(1-mu)/(1+K*mu)` at the given ratio directly.
    Formula,
}

/// Load of the K-user single-layer scheme at memory ratio `mu`.
///
/// Lattice points `mu = t/K` give `(K-t)/(t+1)` exactly; between them the
/// default is memory sharing (linear interpolation of the lattice loads).
pub fn rc(mu: &BigRational, k: u64) -> Result<BigRational, AnalysisError> {
    rc_with(mu, k, RcMethod::Interpolated)
}

pub fn rc_with(mu: &BigRational, k: u64, method: RcMethod) -> Result<BigRational, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::Param("rc needs K >= 1".into()));
    }
    if mu.is_negative() || *mu > BigRational::one() {
        return Err(AnalysisError::Infeasible(format!(
            "memory ratio {mu} outside [0,1]"
        )));
    }
    match method {
        RcMethod::Formula => {
            let kk = BigRational::from_integer(BigInt::from(k));
            Ok(&kk * (BigRational::one() - mu) / (BigRational::one() + &kk * mu))
        }
        RcMethod::Interpolated => {
            let scaled = mu * BigRational::from_integer(BigInt::from(k));
            let t_lo = scaled.floor().to_integer().to_u64().unwrap();
            let lattice = |t: u64| -> BigRational {
                if t >= k {
                    BigRational::zero()
                } else {
                    ratio((k - t) as i64, (t + 1) as i64)
                }
            };
            let frac = &scaled - BigRational::from_integer(BigInt::from(t_lo));
            if frac.is_zero() {
                return Ok(lattice(t_lo));
            }
            let lo = lattice(t_lo);
            let hi = lattice(t_lo + 1);
            Ok(&lo + frac * (hi - &lo))
        }
    }
}

/// The `(K1, K2; M1, M2; N)` system, memories in file units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemParams {
    pub k1: u64,
    pub k2: u64,
    pub n: u64,
    pub m1: BigRational,
    pub m2: BigRational,
}

impl SystemParams {
    pub fn new(
        k1: u64,
        k2: u64,
        n: u64,
        m1: BigRational,
        m2: BigRational,
    ) -> Result<Self, AnalysisError> {
        if k1 == 0 || k2 == 0 {
            return Err(AnalysisError::Param("K1, K2 must be positive".into()));
        }
        if n < k1 * k2 {
            return Err(AnalysisError::Param(format!("need N >= K1*K2, got N={n}")));
        }
        let nn = BigRational::from_integer(BigInt::from(n));
        for (name, m) in [("M1", &m1), ("M2", &m2)] {
            if m.is_negative() || *m > nn {
                return Err(AnalysisError::Param(format!("{name} outside [0, N]")));
            }
        }
        Ok(SystemParams { k1, k2, n, m1, m2 })
    }
}

/// File/memory split fractions between the two subsystems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitParams {
    pub alpha: BigRational,
    pub beta: BigRational,
}

impl SplitParams {
    pub fn new(alpha: BigRational, beta: BigRational) -> Result<Self, AnalysisError> {
        for (name, v) in [("alpha", &alpha), ("beta", &beta)] {
            if v.is_negative() || *v > BigRational::one() {
                return Err(AnalysisError::Param(format!("{name} outside [0,1]")));
            }
        }
        Ok(SplitParams { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Knmd,
    Wwcy,
}

/// Two-subsystem baseline loads. The first subsystem holds an alpha
/// fraction of every file, the mirror memory, and a beta fraction of user
/// memory; the remainder runs a single-layer scheme over all K1*K2 users
/// that transits both hops. A term whose file fraction is zero drops out;
/// an included term with a cache ratio outside [0,1] makes the split
/// infeasible.
pub fn baseline_loads(
    base: Baseline,
    p: &SystemParams,
    s: &SplitParams,
    method: RcMethod,
) -> Result<(BigRational, BigRational), AnalysisError> {
    let one = BigRational::one();
    let nn = BigRational::from_integer(BigInt::from(p.n));
    let alpha = &s.alpha;
    let beta = &s.beta;
    let co_alpha = &one - alpha;
    let co_beta = &one - beta;

    let mut r1 = BigRational::zero();
    let mut r2 = BigRational::zero();
    if !alpha.is_zero() {
        let mu1 = &p.m1 / (alpha * &nn);
        let mu_users = &(beta * &p.m2) / (alpha * &nn);
        let first = match base {
            Baseline::Knmd => {
                BigRational::from_integer(BigInt::from(p.k2)) * rc_with(&mu1, p.k1, method)?
            }
            Baseline::Wwcy => rc_with(&mu1, p.k1, method)? * rc_with(&mu_users, p.k2, method)?,
        };
        r1 += alpha * first;
        r2 += alpha * rc_with(&mu_users, p.k2, method)?;
    }
    if !co_alpha.is_zero() {
        let mu2 = &(&co_beta * &p.m2) / (&co_alpha * &nn);
        r1 += &co_alpha * rc_with(&mu2, p.k1 * p.k2, method)?;
        r2 += &co_alpha * rc_with(&mu2, p.k2, method)?;
    }
    Ok((r1, r2))
}

pub fn knmd_loads(
    p: &SystemParams,
    s: &SplitParams,
) -> Result<(BigRational, BigRational), AnalysisError> {
    baseline_loads(Baseline::Knmd, p, s, RcMethod::Interpolated)
}

pub fn wwcy_loads(
    p: &SystemParams,
    s: &SplitParams,
) -> Result<(BigRational, BigRational), AnalysisError> {
    baseline_loads(Baseline::Wwcy, p, s, RcMethod::Interpolated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    R1,
    R2,
}

#[derive(Debug, Clone)]
pub struct BaselineOpt {
    pub best: SplitParams,
    pub r1: BigRational,
    pub r2: BigRational,
    pub feasible_points: usize,
    /// Non-dominated (R1, R2) points, ascending in R1.
    pub frontier: Option<Vec<(SplitParams, BigRational, BigRational)>>,
}

/// Exhaustive grid search over `(alpha, beta)` in `[0,1]^2` with
/// `resolution` points per axis. Ties break toward smaller alpha, then
/// smaller beta.
pub fn optimize_baseline(
    base: Baseline,
    p: &SystemParams,
    objective: Objective,
    resolution: u64,
    method: RcMethod,
    want_frontier: bool,
) -> Result<BaselineOpt, AnalysisError> {
    if resolution < 100 {
        return Err(AnalysisError::Param(
            "resolution must be at least 100 points per axis".into(),
        ));
    }
    let steps = resolution - 1;
    let mut best: Option<(SplitParams, BigRational, BigRational)> = None;
    let mut feasible = 0usize;
    let mut points: Vec<(SplitParams, BigRational, BigRational)> = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            let split = SplitParams {
                alpha: ratio(i as i64, steps as i64),
                beta: ratio(j as i64, steps as i64),
            };
            let Ok((r1, r2)) = baseline_loads(base, p, &split, method) else {
                continue;
            };
            feasible += 1;
            let better = match &best {
                None => true,
                Some((_, b1, b2)) => match objective {
                    Objective::R1 => r1 < *b1,
                    Objective::R2 => r2 < *b2,
                },
            };
            if better {
                best = Some((split.clone(), r1.clone(), r2.clone()));
            }
            if want_frontier {
                points.push((split, r1, r2));
            }
        }
    }
    let (best, r1, r2) =
        best.ok_or_else(|| AnalysisError::Infeasible("no feasible split on the grid".into()))?;
    let frontier = if want_frontier {
        points.sort_by(|a, b| (&a.1, &a.2).cmp(&(&b.1, &b.2)));
        let mut front: Vec<(SplitParams, BigRational, BigRational)> = Vec::new();
        for (s, r1, r2) in points {
            if front.last().map_or(true, |(_, _, last_r2)| r2 < *last_r2) {
                front.push((s, r1, r2));
            }
        }
        Some(front)
    } else {
        None
    };
    Ok(BaselineOpt {
        best,
        r1,
        r2,
        feasible_points: feasible,
        frontier,
    })
}

/// Exact `(K, F, Z, S)` of a PDA family member, numbers only; prices
/// hybrid compositions without materializing arrays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyParams {
    pub k: u64,
    pub f: BigUint,
    pub z: BigUint,
    pub s: BigUint,
    pub label: String,
}

impl FamilyParams {
    pub fn mn(k: u64, t: u64) -> Result<Self, AnalysisError> {
        if t > k || t == 0 {
            return Err(AnalysisError::Param(format!(
                "mn needs 1 <= t <= K, got t={t}, K={k}"
            )));
        }
        Ok(FamilyParams {
            k,
            f: big_binomial(k, t),
            z: big_binomial(k - 1, t - 1),
            s: big_binomial(k, t + 1),
            label: format!("mn:{k},{t}"),
        })
    }

    /// Grouped low-subpacketization family: `(q(m+1), q^m, q^{m-1}, (q-1)q^m)`.
    pub fn partition(q: u64, m: u64) -> Result<Self, AnalysisError> {
        if q < 2 || m < 1 {
            return Err(AnalysisError::Param(format!(
                "partition needs q >= 2, m >= 1, got q={q}, m={m}"
            )));
        }
        let base = BigUint::from(q);
        Ok(FamilyParams {
            k: q * (m + 1),
            f: base.pow(m as u32),
            z: base.pow(m as u32 - 1),
            s: BigUint::from(q - 1) * base.pow(m as u32),
            label: format!("partition:{q},{m}"),
        })
    }

    /// Parameters read off a verified array.
    pub fn from_verified(p: crate::pda::PdaParams, label: &str) -> Self {
        FamilyParams {
            k: p.k as u64,
            f: BigUint::from(p.f),
            z: BigUint::from(p.z),
            s: BigUint::from(p.s),
            label: label.to_string(),
        }
    }
}

/// A scheme's closed-form performance at one operating point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerfRecord {
    pub scheme: String,
    pub mode: Mode,
    pub params_label: String,
    pub m1_ratio: BigRational,
    pub m2_ratio: BigRational,
    /// Subpacketization; `None` when the scheme has no fixed finite value
    /// at this point (decentralized baseline).
    pub f: Option<BigUint>,
    pub r1: BigRational,
    pub r2: BigRational,
}

/// Performance of the grouping scheme at `(K1, K2, t)`.
///
/// Secure-private mode adds the key-material corrections `K2*Z1/(N*F)` to
/// the mirror ratio and `(F - Z2)/(N*F)` to the user ratio; loads and
/// subpacketization are mode-independent.
pub fn grouping_perf(
    k1: u64,
    k2: u64,
    t: u64,
    n: u64,
    mode: Mode,
) -> Result<PerfRecord, AnalysisError> {
    let k = k1 * k2;
    if t < k2 || t > k {
        return Err(AnalysisError::Param(format!(
            "grouping needs K2 <= t <= K1*K2, got t={t}"
        )));
    }
    if n < 1 {
        return Err(AnalysisError::Param("need N >= 1".into()));
    }
    let f = big_binomial(k, t);
    let z1 = big_binomial(k - k2, t - k2);
    let z2 = &big_binomial(k - 1, t - 1) - &z1;
    let mut m1 = big_ratio(z1.clone(), f.clone());
    let mut m2 = ratio(t as i64, k as i64) - &m1;
    if mode == Mode::SecurePrivate {
        let nf = BigUint::from(n) * &f;
        m1 += big_ratio(BigUint::from(k2) * &z1, nf.clone());
        m2 += big_ratio(&f - &z2, nf);
    }
    let r1 = ratio((k - t) as i64, (t + 1) as i64);
    let r2 = &r1 - big_ratio(big_binomial(k - k2, t + 1), f.clone())
        + big_ratio(BigUint::from(k2) * &z1, f.clone());
    Ok(PerfRecord {
        scheme: "grouping".into(),
        mode,
        params_label: format!("t={t}"),
        m1_ratio: m1,
        m2_ratio: m2,
        f: Some(f),
        r1,
        r2,
    })
}

/// Performance of the hybrid scheme built from outer shape `B` and inner
/// shape `C`: ratios `Z1/F1` and `Z2/F2` (plus secure-private corrections),
/// subpacketization `F1*F2`, loads `S1*S2/(F1*F2)` and `S2/F2`.
pub fn hybrid_perf(
    outer: &FamilyParams,
    inner: &FamilyParams,
    n: u64,
    mode: Mode,
) -> Result<PerfRecord, AnalysisError> {
    if n < 1 {
        return Err(AnalysisError::Param("need N >= 1".into()));
    }
    let f = &outer.f * &inner.f;
    let mut m1 = big_ratio(outer.z.clone(), outer.f.clone());
    let mut m2 = big_ratio(inner.z.clone(), inner.f.clone());
    if mode == Mode::SecurePrivate {
        m1 += big_ratio(&outer.z * &inner.s, BigUint::from(n) * &f);
        m2 += big_ratio(&inner.f - &inner.z, BigUint::from(n) * &inner.f);
    }
    let r1 = big_ratio(&outer.s * &inner.s, f.clone());
    let r2 = big_ratio(inner.s.clone(), inner.f.clone());
    Ok(PerfRecord {
        scheme: "hybrid".into(),
        mode,
        params_label: format!("{}x{}", outer.label, inner.label),
        m1_ratio: m1,
        m2_ratio: m2,
        f: Some(f),
        r1,
        r2,
    })
}

/// Converse bound on the first-layer load under uncoded placement at
/// cache point t: `(K1*K2 - t)/(t + 1)`.
pub fn lower_bound_r1(k1: u64, k2: u64, t: u64) -> Result<BigRational, AnalysisError> {
    let k = k1 * k2;
    if t > k {
        return Err(AnalysisError::Param(format!("need t <= K1*K2, got t={t}")));
    }
    Ok(ratio((k - t) as i64, (t + 1) as i64))
}

/// Factorizations `K = q(m+1)` with q >= 2, m >= 1 are the candidate
/// low-subpacketization parameters; picks the one whose memory ratio `1/q`
/// is closest to `target` (ties toward larger q, i.e. lower memory).
pub fn partition_params_for(k: u64, target: &BigRational) -> Option<(u64, u64)> {
    let mut best: Option<((u64, u64), BigRational)> = None;
    for q in 2..=k / 2 {
        if k % q != 0 || k / q < 2 {
            continue;
        }
        let m = k / q - 1;
        let gap = (ratio(1, q as i64) - target).abs();
        let better = match &best {
            None => true,
            Some(((bq, _), g)) => gap < *g || (gap == *g && q > *bq),
        };
        if better {
            best = Some(((q, m), gap));
        }
    }
    best.map(|(p, _)| p)
}

/// Grouping-scheme t whose plain mirror ratio is closest to `target`.
pub fn t_for_m1_ratio(k1: u64, k2: u64, target: &BigRational) -> u64 {
    let k = k1 * k2;
    let mut best_t = k2;
    let mut best_gap: Option<BigRational> = None;
    for t in k2..=k {
        let m1 = big_ratio(big_binomial(k - k2, t - k2), big_binomial(k, t));
        let gap = (&m1 - target).abs();
        if best_gap.as_ref().map_or(true, |g| gap < *g) {
            best_t = t;
            best_gap = Some(gap);
        }
    }
    best_t
}

/// One sweep point: the grouping scheme at `t` plus every comparison
/// scheme matched to the same memory-ratio point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub t: u64,
    pub m1_target: BigRational,
    pub m2_target: BigRational,
    pub rows: Vec<PerfRecord>,
}

/// Build the comparison table at the given grouping cache points.
///
/// Baselines are evaluated with whole-system splits (`alpha = beta = 1`)
/// at the point's plain memory ratios; hybrid rows pick the nearest
/// lattice or factorization parameters and report their true achieved
/// ratios.
pub fn sweep_compare(
    k1: u64,
    k2: u64,
    n: u64,
    ts: &[u64],
    mode: Mode,
) -> Result<Vec<SweepPoint>, AnalysisError> {
    let k = k1 * k2;
    if n < k {
        return Err(AnalysisError::Param(format!("need N >= K1*K2 = {k}")));
    }
    let mut points = Vec::new();
    for &t in ts {
        let grouping = grouping_perf(k1, k2, t, n, mode)?;
        let plain = grouping_perf(k1, k2, t, n, Mode::Plain)?;
        let (m1, m2) = (plain.m1_ratio.clone(), plain.m2_ratio.clone());
        let mut rows = vec![grouping];

        let round_to = |x: &BigRational, kk: u64| -> u64 {
            let scaled = x * BigRational::from_integer(BigInt::from(kk)) + ratio(1, 2);
            scaled.floor().to_integer().to_u64().unwrap_or(0).min(kk)
        };
        let t1 = round_to(&m1, k1).max(1);
        let t2 = round_to(&m2, k2).max(1);

        rows.push(PerfRecord {
            scheme: "wwcy".into(),
            mode,
            params_label: format!("alpha=1;beta=1;t1={t1};t2={t2}"),
            m1_ratio: m1.clone(),
            m2_ratio: m2.clone(),
            f: Some(&big_binomial(k1, t1) * &big_binomial(k2, t2)),
            r1: rc(&m1, k1)? * rc(&m2, k2)?,
            r2: rc(&m2, k2)?,
        });

        rows.push(PerfRecord {
            scheme: "knmd".into(),
            mode,
            params_label: "alpha=1;beta=1".into(),
            m1_ratio: m1.clone(),
            m2_ratio: m2.clone(),
            f: None,
            r1: BigRational::from_integer(BigInt::from(k2)) * rc(&m1, k1)?,
            r2: rc(&m2, k2)?,
        });

        if let Some((q1, mm1)) = partition_params_for(k1, &m1) {
            let outer = FamilyParams::partition(q1, mm1)?;
            let inner = FamilyParams::mn(k2, t2)?;
            let mut rec = hybrid_perf(&outer, &inner, n, mode)?;
            rec.scheme = "hybrid_part_mn".into();
            rows.push(rec);

            if let Some((q2, mm2)) = partition_params_for(k2, &m2) {
                let inner = FamilyParams::partition(q2, mm2)?;
                let mut rec = hybrid_perf(&outer, &inner, n, mode)?;
                rec.scheme = "hybrid_part_part".into();
                rows.push(rec);
            }
        }
        points.push(SweepPoint {
            t,
            m1_target: m1,
            m2_target: m2,
            rows,
        });
    }
    Ok(points)
}

/// Render a rational as `p/q`.
pub fn rational_str(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn f_str(f: &Option<BigUint>) -> String {
    match f {
        None => "NA".into(),
        Some(v) => {
            if v.bits() <= 40 {
                v.to_string()
            } else {
                let log10 = match v.to_f64() {
                    Some(x) if x.is_finite() => x.log10(),
                    _ => v.bits() as f64 * std::f64::consts::LN_2 / std::f64::consts::LN_10,
                };
                format!("{log10:.6}")
            }
        }
    }
}

/// CSV rows: `scheme,mode,K1,K2,N,t_or_params,m1_ratio,m2_ratio,F_or_log10F,R1,R2`.
/// F prints exact digits up to 40 bits and log10(F) beyond.
pub fn sweep_csv(k1: u64, k2: u64, n: u64, points: &[SweepPoint]) -> String {
    let mut out =
        String::from("scheme,mode,K1,K2,N,t_or_params,m1_ratio,m2_ratio,F_or_log10F,R1,R2\n");
    for point in points {
        for r in &point.rows {
            let mode = match r.mode {
                Mode::Plain => "plain",
                Mode::SecurePrivate => "sp",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.scheme,
                mode,
                k1,
                k2,
                n,
                r.params_label.replace(',', ";"),
                rational_str(&r.m1_ratio),
                rational_str(&r.m2_ratio),
                f_str(&r.f),
                rational_str(&r.r1),
                rational_str(&r.r2),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> BigRational {
        ratio(p, q)
    }

    #[test]
    fn rc_fixtures() {
        assert_eq!(rc(&r(0, 1), 7).unwrap(), r(7, 1));
        assert_eq!(rc(&r(1, 1), 7).unwrap(), r(0, 1));
        assert_eq!(rc(&r(1, 2), 4).unwrap(), r(2, 3));
        // Off-lattice: halfway between t=1 (load 3/2) and t=2 (load 2/3).
        assert_eq!(rc(&r(3, 8), 4).unwrap(), (r(3, 2) + r(2, 3)) / r(2, 1));
        assert!(rc(&r(3, 2), 4).is_err());
        for t in 0..=4 {
            assert_eq!(
                rc_with(&r(t, 4), 4, RcMethod::Formula).unwrap(),
                rc(&r(t, 4), 4).unwrap()
            );
        }
    }

    fn example_system() -> SystemParams {
        SystemParams::new(2, 2, 24, r(4, 1), r(8, 1)).unwrap()
    }

    #[test]
    fn baseline_collapse_at_full_split() {
        let p = example_system();
        let s = SplitParams::new(r(1, 1), r(1, 1)).unwrap();
        let (r1, r2) = knmd_loads(&p, &s).unwrap();
        assert_eq!(r1, r(2, 1) * rc(&r(1, 6), 2).unwrap());
        assert_eq!(r2, rc(&r(1, 3), 2).unwrap());
        let (w1, w2) = wwcy_loads(&p, &s).unwrap();
        assert_eq!(w1, rc(&r(1, 6), 2).unwrap() * rc(&r(1, 3), 2).unwrap());
        assert_eq!(w2, r2);
    }

    #[test]
    fn baseline_infeasible_split() {
        let p = example_system();
        // alpha too small: mirror cache exceeds the subsystem library.
        let s = SplitParams::new(r(1, 10), r(0, 1)).unwrap();
        assert!(knmd_loads(&p, &s).is_err());
    }

    #[test]
    fn optimizer_is_deterministic_and_feasible() {
        let p = example_system();
        let a = optimize_baseline(
            Baseline::Knmd,
            &p,
            Objective::R1,
            101,
            RcMethod::Interpolated,
            false,
        )
        .unwrap();
        let b = optimize_baseline(
            Baseline::Knmd,
            &p,
            Objective::R1,
            101,
            RcMethod::Interpolated,
            false,
        )
        .unwrap();
        assert_eq!(a.best, b.best);
        assert!(a.feasible_points > 0);
        assert!(optimize_baseline(
            Baseline::Knmd,
            &p,
            Objective::R1,
            99,
            RcMethod::Interpolated,
            false
        )
        .is_err());
        // Pushing user memory into the second subsystem can only help the
        // first-layer objective of this baseline.
        assert_eq!(a.best.beta, r(0, 1));
    }

    #[test]
    fn degenerate_full_mirror_memory() {
        let p = SystemParams::new(2, 2, 24, r(24, 1), r(8, 1)).unwrap();
        let best = optimize_baseline(
            Baseline::Knmd,
            &p,
            Objective::R1,
            101,
            RcMethod::Interpolated,
            false,
        )
        .unwrap();
        assert!(best.r1 < r(1, 2));
    }

    #[test]
    fn grouping_perf_fixtures() {
        let sp = grouping_perf(2, 2, 2, 24, Mode::SecurePrivate).unwrap();
        assert_eq!(sp.m1_ratio, r(13, 72));
        assert_eq!(sp.m2_ratio, r(26, 72));
        assert_eq!(sp.r1, r(2, 3));
        assert_eq!(sp.r2, r(1, 1));
        assert_eq!(sp.f, Some(BigUint::from(6u32)));

        let plain = grouping_perf(2, 2, 2, 24, Mode::Plain).unwrap();
        assert_eq!(plain.m1_ratio, r(1, 6));
        assert_eq!(plain.m2_ratio, r(1, 3));

        // Full-cache endpoint: nothing multicast, unicast load K2.
        let edge = grouping_perf(2, 2, 4, 24, Mode::Plain).unwrap();
        assert_eq!(edge.r1, r(0, 1));
        assert_eq!(edge.r2, r(2, 1));
        assert!(grouping_perf(2, 2, 1, 24, Mode::Plain).is_err());
    }

    #[test]
    fn hybrid_perf_fixtures() {
        let outer = FamilyParams::mn(2, 1).unwrap();
        let inner = FamilyParams::mn(3, 1).unwrap();
        let rec = hybrid_perf(&outer, &inner, 24, Mode::Plain).unwrap();
        assert_eq!(rec.r1, r(1, 2));
        assert_eq!(rec.r2, r(1, 1));
        assert_eq!(rec.f, Some(BigUint::from(6u32)));
        assert_eq!(rec.m1_ratio, r(1, 2));
        assert_eq!(rec.m2_ratio, r(1, 3));

        let sq = hybrid_perf(
            &FamilyParams::mn(2, 1).unwrap(),
            &FamilyParams::mn(2, 1).unwrap(),
            24,
            Mode::Plain,
        )
        .unwrap();
        assert_eq!(sq.r1, r(1, 4));
        assert_eq!(sq.r2, r(1, 2));

        // All-star outer: no first-layer traffic.
        let outer = FamilyParams {
            k: 1,
            f: BigUint::one(),
            z: BigUint::one(),
            s: BigUint::zero(),
            label: "allstar".into(),
        };
        let rec = hybrid_perf(&outer, &inner, 24, Mode::Plain).unwrap();
        assert_eq!(rec.r1, r(0, 1));
    }

    #[test]
    fn hybrid_of_mn_shapes_matches_baseline_at_lattice() {
        // Composing two MN shapes reproduces the improved layered baseline
        // at lattice-aligned memories with alpha = beta = 1.
        for (k1, t1, k2, t2) in [(4u64, 2u64, 3u64, 1u64), (3, 1, 4, 2), (5, 3, 2, 1)] {
            let rec = hybrid_perf(
                &FamilyParams::mn(k1, t1).unwrap(),
                &FamilyParams::mn(k2, t2).unwrap(),
                1000,
                Mode::Plain,
            )
            .unwrap();
            let p = SystemParams::new(
                k1,
                k2,
                1000,
                r(t1 as i64, k1 as i64) * r(1000, 1),
                r(t2 as i64, k2 as i64) * r(1000, 1),
            )
            .unwrap();
            let s = SplitParams::new(r(1, 1), r(1, 1)).unwrap();
            let (w1, w2) = wwcy_loads(&p, &s).unwrap();
            assert_eq!(rec.r1, w1);
            assert_eq!(rec.r2, w2);
        }
    }

    #[test]
    fn grouping_matches_lower_bound_and_r1_monotone() {
        // R1 is non-increasing in t and meets the converse bound pointwise.
        // R2 moves the other way (the unicast share grows with mirror
        // memory), so only its positivity is asserted here.
        for (k1, k2) in [(2u64, 2u64), (4, 3)] {
            let mut prev: Option<BigRational> = None;
            for t in k2..=k1 * k2 {
                let rec = grouping_perf(k1, k2, t, k1 * k2, Mode::Plain).unwrap();
                assert_eq!(rec.r1, lower_bound_r1(k1, k2, t).unwrap());
                assert!(rec.r2 >= BigRational::zero());
                if let Some(p1) = prev {
                    assert!(rec.r1 <= p1);
                }
                prev = Some(rec.r1);
            }
        }
        assert_eq!(lower_bound_r1(2, 2, 4).unwrap(), r(0, 1));
    }

    #[test]
    fn sp_ratio_gap_shrinks_with_library_size() {
        let small = grouping_perf(2, 2, 2, 24, Mode::SecurePrivate).unwrap();
        let large = grouping_perf(2, 2, 2, 24_000, Mode::SecurePrivate).unwrap();
        let plain = grouping_perf(2, 2, 2, 24, Mode::Plain).unwrap();
        let gap_small = &small.m1_ratio - &plain.m1_ratio;
        let gap_large = &large.m1_ratio - &plain.m1_ratio;
        assert!(gap_large < gap_small);
        assert!(gap_large > BigRational::zero());
    }

    #[test]
    fn partition_param_choice() {
        assert_eq!(partition_params_for(40, &r(1, 5)), Some((5, 7)));
        assert_eq!(partition_params_for(40, &r(1, 2)), Some((2, 19)));
        assert_eq!(partition_params_for(3, &r(1, 2)), None);
    }

    #[test]
    fn sweep_has_expected_rows_and_csv_shape() {
        let pts = sweep_compare(4, 3, 1000, &[3, 6, 9], Mode::Plain).unwrap();
        assert_eq!(pts.len(), 3);
        for p in &pts {
            let names: Vec<&str> = p.rows.iter().map(|r| r.scheme.as_str()).collect();
            assert_eq!(&names[..3], &["grouping", "wwcy", "knmd"]);
            // K1=4 factors as 2*(1+1); K2=3 has no valid factorization.
            assert!(names.contains(&"hybrid_part_mn"));
            assert!(!names.contains(&"hybrid_part_part"));
        }
        let csv = sweep_csv(4, 3, 1000, &pts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "scheme,mode,K1,K2,N,t_or_params,m1_ratio,m2_ratio,F_or_log10F,R1,R2"
        );
        assert_eq!(
            lines.len(),
            1 + pts.iter().map(|p| p.rows.len()).sum::<usize>()
        );
    }
}
