//! Exhaustive mutual-information audits of the security and privacy
//! constraints on tiny instances.
//!
//! Every random object in a session is enumerated over its exact domain:
//! the library (uniform symbols), the security vectors (uniform), the
//! privacy vectors (uniform over the sum-(q-1) slice), and the demand
//! assignment (all single-file requests per user by default). Each
//! configuration is run through the deterministic protocol and contributes
//! one count to the joint histogram of (secret; observation); the mutual
//! information is then exact, and "zero" means exact factorization of
//! every joint count, never a floating-point threshold.
//!
//! Packets must be single symbols (B = F) so the state space stays within
//! the budget; the product of domain sizes is checked before any work.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::field::FVec;
use crate::scheme::{
    DemandMatrix, Library, Mode, Randomness, SchemeInstance,
};
use crate::sim::{execute, SessionData, SimError};

pub const DEFAULT_BUDGET: u128 = 1 << 26;

/// What the adversary sees and what must stay hidden from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditTarget {
    /// Wiretap on the server link: secret (D, W), observation = first-layer
    /// transmissions (public vectors included).
    Security1,
    /// Wiretap on all mirror links jointly: secret (D, W), observation =
    /// every mirror's transmissions.
    Security2,
    /// Colluding mirrors `t1` (0-based): secret = demand rows of all other
    /// mirrors' users; observation = first layer, own demand rows, own
    /// caches' key vectors, and the library.
    Privacy1 { t1: Vec<usize> },
    /// Colluding users `t1 x t2` (0-based): secret = demand rows of users
    /// outside both sets; observation = the t1 mirrors' transmissions, the
    /// colluders' demand rows and key records, and the library.
    Privacy2 { t1: Vec<usize>, t2: Vec<usize> },
}

impl AuditTarget {
    pub fn label(&self) -> String {
        match self {
            AuditTarget::Security1 => "security1".into(),
            AuditTarget::Security2 => "security2".into(),
            AuditTarget::Privacy1 { t1 } => format!("privacy1(t1={t1:?})"),
            AuditTarget::Privacy2 { t1, t2 } => format!("privacy2(t1={t1:?},t2={t2:?})"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DemandModel {
    /// All assignments of one file per user, uniformly.
    EnumerateSingleFile,
    /// A fixed matrix (demands carry no randomness).
    Fixed(Vec<FVec>),
}

#[derive(Debug, Clone)]
pub struct AuditSpec {
    pub inst: SchemeInstance,
    pub demand_model: DemandModel,
    pub target: AuditTarget,
    pub budget: u128,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("state space {states} exceeds budget {budget}")]
    Budget { states: u128, budget: u128 },
    #[error("audits need single-symbol packets (B = F)")]
    PacketLen,
    #[error("bad audit parameters: {0}")]
    Param(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Result of one audit. `exactly_zero` is decided by integer arithmetic on
/// counts; `mi_logq` is a float rendering of the same histogram in log-q
/// units, for reporting only.
#[derive(Debug, Clone)]
pub struct MiReport {
    pub target: String,
    pub exactly_zero: bool,
    pub mi_logq: f64,
    pub states: u128,
    pub secret_support: usize,
    pub obs_support: usize,
    pub joint_support: usize,
}

impl MiReport {
    pub fn render(&self) -> String {
        let mi = if self.exactly_zero {
            "MI=0/1".to_string()
        } else {
            format!("MI>0 (~{:.6} log-q units)", self.mi_logq)
        };
        format!(
            "target={} {mi} states={} supports: secret={} obs={} joint={}",
            self.target, self.states, self.secret_support, self.obs_support, self.joint_support
        )
    }
}

/// Bit-packs base-q digit streams so histogram keys stay small.
#[derive(Clone, Copy)]
struct Packer {
    q: u64,
    per_word: u32,
}

impl Packer {
    fn new(q: u64) -> Packer {
        let mut per_word = 0u32;
        let mut acc: u128 = 1;
        while acc * q as u128 <= u64::MAX as u128 {
            acc *= q as u128;
            per_word += 1;
        }
        Packer { q, per_word }
    }

    fn pack(&self, digits: &[u64]) -> Vec<u64> {
        let mut words = Vec::with_capacity(digits.len() / self.per_word as usize + 1);
        let mut acc = 0u64;
        let mut n = 0u32;
        for &d in digits {
            acc = acc * self.q + d;
            n += 1;
            if n == self.per_word {
                words.push(acc);
                acc = 0;
                n = 0;
            }
        }
        if n > 0 {
            words.push(acc);
        }
        words
    }
}

struct Domains {
    w_states: u64,
    v_states: u64,
    p_states: u64,
    d_states: u64,
    union_ids: Vec<u64>,
    p_free: u32,
}

fn checked_pow(base: u64, exp: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u128)?;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc)
}

fn domains(spec: &AuditSpec) -> Result<(Domains, u128), AuditError> {
    let inst = &spec.inst;
    let q = inst.field().order();
    let too_big = || AuditError::Budget {
        states: u128::MAX,
        budget: spec.budget,
    };
    let w_states =
        checked_pow(q, (inst.n_files() * inst.file_len()) as u32).ok_or_else(too_big)? as u64;
    let union_ids: Vec<u64> = inst.hpda().union_s_k().into_iter().collect();
    let secure = inst.mode() == Mode::SecurePrivate;
    let v_states = if secure {
        checked_pow(q, union_ids.len() as u32).ok_or_else(too_big)? as u64
    } else {
        1
    };
    let p_free = (inst.n_files() - 1) as u32;
    let p_states = if secure {
        checked_pow(q, p_free * inst.users() as u32).ok_or_else(too_big)? as u64
    } else {
        1
    };
    let d_states = match &spec.demand_model {
        DemandModel::EnumerateSingleFile => checked_pow(
            inst.n_files() as u64,
            inst.users() as u32,
        )
        .ok_or_else(too_big)? as u64,
        DemandModel::Fixed(_) => 1,
    };
    let states = w_states as u128 * v_states as u128 * p_states as u128 * d_states as u128;
    if states > spec.budget {
        return Err(AuditError::Budget {
            states,
            budget: spec.budget,
        });
    }
    Ok((
        Domains {
            w_states,
            v_states,
            p_states,
            d_states,
            union_ids,
            p_free,
        },
        states,
    ))
}

fn decode_library(inst: &SchemeInstance, mut idx: u64) -> Library {
    let q = inst.field().order();
    let mut files = Vec::with_capacity(inst.n_files());
    for _ in 0..inst.n_files() {
        let mut file = Vec::with_capacity(inst.file_len());
        for _ in 0..inst.file_len() {
            file.push(idx % q);
            idx /= q;
        }
        files.push(file);
    }
    Library::from_files(inst, files).expect("enumerated library is well-formed")
}

fn decode_randomness(inst: &SchemeInstance, dom: &Domains, v_idx: u64, mut p_idx: u64) -> Randomness {
    let q = inst.field().order();
    let ctx = inst.field();
    let mut v = v_idx;
    let security = dom
        .union_ids
        .iter()
        .map(|&s| {
            let sym = v % q;
            v /= q;
            (s, vec![sym])
        })
        .collect();
    let privacy = (0..inst.users())
        .map(|_| {
            let mut elems = Vec::with_capacity(inst.n_files());
            let mut sum = 0u64;
            for _ in 0..dom.p_free {
                let sym = p_idx % q;
                p_idx /= q;
                sum = ctx.add(sum, sym);
                elems.push(sym);
            }
            elems.push(ctx.sub(q - 1, sum));
            FVec(elems)
        })
        .collect();
    Randomness { security, privacy }
}

fn decode_demands(inst: &SchemeInstance, model: &DemandModel, mut d_idx: u64) -> DemandMatrix {
    let rows = match model {
        DemandModel::Fixed(rows) => rows.clone(),
        DemandModel::EnumerateSingleFile => (0..inst.users())
            .map(|_| {
                let n = (d_idx % inst.n_files() as u64) as usize;
                d_idx /= inst.n_files() as u64;
                FVec::unit(inst.n_files(), n)
            })
            .collect(),
    };
    DemandMatrix::from_rows(inst, rows).expect("enumerated demands are well-formed")
}

fn push_fvec(out: &mut Vec<u64>, v: &FVec) {
    out.extend_from_slice(&v.0);
}

fn secret_digits(
    target: &AuditTarget,
    inst: &SchemeInstance,
    lib: &Library,
    demands: &DemandMatrix,
) -> Vec<u64> {
    let mut out = Vec::new();
    match target {
        AuditTarget::Security1 | AuditTarget::Security2 => {
            for row in demands.rows() {
                push_fvec(&mut out, row);
            }
            for n in 0..inst.n_files() {
                for j in 0..inst.hpda().f() {
                    out.extend_from_slice(lib.packet(n, j));
                }
            }
        }
        AuditTarget::Privacy1 { t1 } => {
            for k1 in 0..inst.hpda().k1() {
                if t1.contains(&k1) {
                    continue;
                }
                for k2 in 0..inst.hpda().k2() {
                    push_fvec(&mut out, demands.row(inst.user_index(k1, k2)));
                }
            }
        }
        AuditTarget::Privacy2 { t1, t2 } => {
            for k1 in 0..inst.hpda().k1() {
                for k2 in 0..inst.hpda().k2() {
                    if !t1.contains(&k1) && !t2.contains(&k2) {
                        push_fvec(&mut out, demands.row(inst.user_index(k1, k2)));
                    }
                }
            }
        }
    }
    out
}

fn obs_digits(
    target: &AuditTarget,
    inst: &SchemeInstance,
    lib: &Library,
    demands: &DemandMatrix,
    data: &SessionData,
) -> Vec<u64> {
    let mut out = Vec::new();
    let push_library = |out: &mut Vec<u64>| {
        for n in 0..inst.n_files() {
            for j in 0..inst.hpda().f() {
                out.extend_from_slice(lib.packet(n, j));
            }
        }
    };
    let push_q = |out: &mut Vec<u64>| {
        if let Some(qvecs) = &data.qvecs {
            for qv in qvecs {
                push_fvec(out, qv);
            }
        }
    };
    let push_layer1 = |out: &mut Vec<u64>| {
        for sig in data.server_multicast.values() {
            out.extend_from_slice(sig);
        }
        if let Some(origin) = &data.origin {
            for sig in origin.values() {
                out.extend_from_slice(sig);
            }
        }
    };
    match target {
        AuditTarget::Security1 => {
            push_q(&mut out);
            push_layer1(&mut out);
        }
        AuditTarget::Security2 => {
            push_q(&mut out);
            for sigs in &data.mirror_sigs {
                for sig in sigs.values() {
                    out.extend_from_slice(sig);
                }
            }
        }
        AuditTarget::Privacy1 { t1 } => {
            // Uncoded mirror cache content is a projection of the library,
            // which is already observed; only the key vectors add state.
            push_library(&mut out);
            push_q(&mut out);
            push_layer1(&mut out);
            for &k1 in t1 {
                for k2 in 0..inst.hpda().k2() {
                    push_fvec(&mut out, demands.row(inst.user_index(k1, k2)));
                }
                for key in data.caches.mirrors[k1].vectors.values() {
                    out.extend_from_slice(key);
                }
            }
        }
        AuditTarget::Privacy2 { t1, t2 } => {
            push_library(&mut out);
            push_q(&mut out);
            for &k1 in t1 {
                for sig in data.mirror_sigs[k1].values() {
                    out.extend_from_slice(sig);
                }
                for &k2 in t2 {
                    push_fvec(&mut out, demands.row(inst.user_index(k1, k2)));
                    for (_, rec) in data.caches.users[inst.user_index(k1, k2)].coded.values() {
                        out.extend_from_slice(rec);
                    }
                }
            }
        }
    }
    out
}

type Hist = HashMap<(Vec<u64>, Vec<u64>), u64>;

fn merge(mut a: Hist, b: Hist) -> Hist {
    if a.len() < b.len() {
        return merge(b, a);
    }
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Run the exhaustive audit described by `spec`.
pub fn mi_audit(spec: &AuditSpec) -> Result<MiReport, AuditError> {
    let inst = &spec.inst;
    if inst.packet_len() != 1 {
        return Err(AuditError::PacketLen);
    }
    if let AuditTarget::Privacy1 { t1 } | AuditTarget::Privacy2 { t1, .. } = &spec.target {
        if t1.iter().any(|&k| k >= inst.hpda().k1()) {
            return Err(AuditError::Param("mirror index out of range".into()));
        }
    }
    if let AuditTarget::Privacy2 { t2, .. } = &spec.target {
        if t2.iter().any(|&k| k >= inst.hpda().k2()) {
            return Err(AuditError::Param("user index out of range".into()));
        }
    }
    let (dom, states) = domains(spec)?;
    let packer = Packer::new(inst.field().order());
    let secure = inst.mode() == Mode::SecurePrivate;

    // Outermost domain (the library) is partitioned across workers; each
    // builds a private histogram and the results merge associatively.
    let joint: Hist = (0..dom.w_states)
        .into_par_iter()
        .fold(Hist::new, |mut hist, w_idx| {
            let lib = decode_library(inst, w_idx);
            for v_idx in 0..dom.v_states {
                for p_idx in 0..dom.p_states {
                    let rand = secure.then(|| decode_randomness(inst, &dom, v_idx, p_idx));
                    for d_idx in 0..dom.d_states {
                        let demands = decode_demands(inst, &spec.demand_model, d_idx);
                        let data = execute(inst, &lib, rand.as_ref(), &demands)
                            .expect("enumerated session must run");
                        let secret =
                            packer.pack(&secret_digits(&spec.target, inst, &lib, &demands));
                        let obs =
                            packer.pack(&obs_digits(&spec.target, inst, &lib, &demands, &data));
                        *hist.entry((secret, obs)).or_insert(0) += 1;
                    }
                }
            }
            hist
        })
        .reduce(Hist::new, merge);

    let mut secret_marg: HashMap<&[u64], u128> = HashMap::new();
    let mut obs_marg: HashMap<&[u64], u128> = HashMap::new();
    for ((s, o), &n) in &joint {
        *secret_marg.entry(s.as_slice()).or_insert(0) += n as u128;
        *obs_marg.entry(o.as_slice()).or_insert(0) += n as u128;
    }

    let mut exactly_zero = true;
    let mut mi = 0.0f64;
    let ln_q = (inst.field().order() as f64).ln();
    for ((s, o), &n) in &joint {
        let ns = secret_marg[s.as_slice()];
        let no = obs_marg[o.as_slice()];
        if n as u128 * states != ns * no {
            exactly_zero = false;
        }
        let p = n as f64 / states as f64;
        mi += p * ((n as f64 * states as f64) / (ns as f64 * no as f64)).ln() / ln_q;
    }
    if exactly_zero {
        mi = 0.0;
    }
    Ok(MiReport {
        target: spec.target.label(),
        exactly_zero,
        mi_logq: mi,
        states,
        secret_support: secret_marg.len(),
        obs_support: obs_marg.len(),
        joint_support: joint.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpda::hybrid_hpda;
    use crate::pda::mn_pda;
    use crate::scheme::Delivery;

    /// Smallest meaningful composite: 2 mirrors x 2 users, F = 4, N = 2.
    pub fn tiny_instance(mode: Mode) -> SchemeInstance {
        let h = hybrid_hpda(&mn_pda(2, 1).unwrap(), &mn_pda(2, 1).unwrap()).unwrap();
        SchemeInstance::new(h, 2, 2, 4, mode, Delivery::MirrorAssisted).unwrap()
    }

    #[test]
    fn plain_server_link_leaks() {
        let spec = AuditSpec {
            inst: tiny_instance(Mode::Plain),
            demand_model: DemandModel::EnumerateSingleFile,
            target: AuditTarget::Security1,
            budget: DEFAULT_BUDGET,
        };
        let rep = mi_audit(&spec).unwrap();
        assert_eq!(rep.states, 4096);
        assert!(!rep.exactly_zero);
        assert!(rep.mi_logq > 0.0);
    }

    #[test]
    fn secure_server_link_is_exactly_independent() {
        let spec = AuditSpec {
            inst: tiny_instance(Mode::SecurePrivate),
            demand_model: DemandModel::EnumerateSingleFile,
            target: AuditTarget::Security1,
            budget: DEFAULT_BUDGET,
        };
        let rep = mi_audit(&spec).unwrap();
        assert_eq!(rep.states, 1 << 19);
        assert!(rep.exactly_zero, "{}", rep.render());
        assert_eq!(rep.mi_logq, 0.0);
    }

    #[test]
    fn budget_and_packet_len_guards() {
        let spec = AuditSpec {
            inst: tiny_instance(Mode::SecurePrivate),
            demand_model: DemandModel::EnumerateSingleFile,
            target: AuditTarget::Security1,
            budget: 1 << 10,
        };
        assert!(matches!(mi_audit(&spec), Err(AuditError::Budget { .. })));

        let h = hybrid_hpda(&mn_pda(2, 1).unwrap(), &mn_pda(2, 1).unwrap()).unwrap();
        let wide =
            SchemeInstance::new(h, 2, 2, 8, Mode::Plain, Delivery::MirrorAssisted).unwrap();
        let spec = AuditSpec {
            inst: wide,
            demand_model: DemandModel::EnumerateSingleFile,
            target: AuditTarget::Security1,
            budget: DEFAULT_BUDGET,
        };
        assert!(matches!(mi_audit(&spec), Err(AuditError::PacketLen)));
    }

    #[test]
    fn fixed_demand_security_still_zero_when_secure() {
        let inst = tiny_instance(Mode::SecurePrivate);
        let rows = vec![
            FVec(vec![1, 0]),
            FVec(vec![0, 1]),
            FVec(vec![1, 0]),
            FVec(vec![0, 1]),
        ];
        let spec = AuditSpec {
            inst,
            demand_model: DemandModel::Fixed(rows),
            target: AuditTarget::Security1,
            budget: DEFAULT_BUDGET,
        };
        let rep = mi_audit(&spec).unwrap();
        assert!(rep.exactly_zero);
    }
}
