//! Execution of the two-layer coded caching scheme an HPDA describes.
//!
//! Placement fills mirror and user caches (uncoded packet rows, plus
//! one-time-pad key material in secure-private mode), the server and the
//! mirrors emit coded signals, and every user reconstructs its requested
//! linear combination of files. Two axes of variation:
//!
//! * Mode: `Plain` sends bare packet sums driven by the demand vectors;
//!   `SecurePrivate` masks every signal with a fresh security vector and
//!   replaces demands by public vectors `q = p + d`, where each privacy
//!   vector `p` is uniform over the sum-(q-1) slice so `q` reveals nothing.
//! * Delivery: `MirrorAssisted` lets each mirror originate the signals for
//!   packets only it caches; `MirrorBlind` moves that generation to the
//!   server so a mirror never needs its own users' demands, at the cost of
//!   a larger first-layer load. Mirrors still cancel foreign terms out of
//!   the multicast signals in both variants; that step never involves a
//!   mirror's own users' demands.
//!
//! Mirror encoding is fenced by construction: [`mirror_signals`] receives a
//! [`MirrorView`] holding only the mirror's cache, the public (or, in plain
//! mode, demand) vectors, and the received signals. There is no library
//! handle to misuse.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::field::{FVec, FieldCtx, FieldError};
use crate::hpda::Hpda;
use crate::pda::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    SecurePrivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    MirrorAssisted,
    MirrorBlind,
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("bad instance: {0}")]
    BadInstance(String),
    #[error("randomness must be supplied exactly in secure-private mode")]
    RandomnessMismatch,
    #[error("no signal with id {0}")]
    UnknownSignal(u64),
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
}

/// A runnable configuration: array, library shape, field, and variant flags.
#[derive(Debug, Clone)]
pub struct SchemeInstance {
    hpda: Hpda,
    n_files: usize,
    field: FieldCtx,
    file_len: usize,
    mode: Mode,
    delivery: Delivery,
    /// Occurrences of every integer as (mirror, row, col).
    occurrences: BTreeMap<u64, Vec<(usize, usize, usize)>>,
}

impl SchemeInstance {
    pub fn new(
        hpda: Hpda,
        n_files: usize,
        q: u64,
        file_len: usize,
        mode: Mode,
        delivery: Delivery,
    ) -> Result<Self, SchemeError> {
        let field = FieldCtx::new(q)?;
        if n_files == 0 {
            return Err(SchemeError::BadInstance("need at least one file".into()));
        }
        let f = hpda.f();
        if file_len == 0 || file_len % f != 0 {
            return Err(SchemeError::BadInstance(format!(
                "file length {file_len} is not a positive multiple of F={f}"
            )));
        }
        let occurrences = hpda.occurrences();
        Ok(SchemeInstance {
            hpda,
            n_files,
            field,
            file_len,
            mode,
            delivery,
            occurrences,
        })
    }

    pub fn hpda(&self) -> &Hpda {
        &self.hpda
    }

    pub fn field(&self) -> &FieldCtx {
        &self.field
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn file_len(&self) -> usize {
        self.file_len
    }

    pub fn packet_len(&self) -> usize {
        self.file_len / self.hpda.f()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn delivery(&self) -> Delivery {
        self.delivery
    }

    pub fn users(&self) -> usize {
        self.hpda.k1() * self.hpda.k2()
    }

    /// Flat user index for (mirror, user-in-mirror), both 0-based.
    pub fn user_index(&self, k1: usize, k2: usize) -> usize {
        k1 * self.hpda.k2() + k2
    }

    pub fn occurrences(&self) -> &BTreeMap<u64, Vec<(usize, usize, usize)>> {
        &self.occurrences
    }

    /// Server multicast ids: the union of sub-array integers minus the
    /// mirror-originated ones.
    pub fn multicast_ids(&self) -> Vec<u64> {
        self.hpda
            .union_s_k()
            .into_iter()
            .filter(|s| !self.hpda.s_m().contains(s))
            .collect()
    }
}

/// The file library, pre-split into F packets of `file_len / F` symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Library {
    files: Vec<Vec<u64>>,
    packet_len: usize,
}

impl Library {
    pub fn random<R: Rng + ?Sized>(inst: &SchemeInstance, rng: &mut R) -> Library {
        let files = (0..inst.n_files)
            .map(|_| {
                (0..inst.file_len)
                    .map(|_| inst.field.sample(rng))
                    .collect()
            })
            .collect();
        Library {
            files,
            packet_len: inst.packet_len(),
        }
    }

    pub fn from_files(inst: &SchemeInstance, files: Vec<Vec<u64>>) -> Result<Library, SchemeError> {
        if files.len() != inst.n_files
            || files.iter().any(|w| w.len() != inst.file_len)
            || files
                .iter()
                .any(|w| w.iter().any(|&x| x >= inst.field.order()))
        {
            return Err(SchemeError::BadInstance(
                "library shape or alphabet mismatch".into(),
            ));
        }
        Ok(Library {
            files,
            packet_len: inst.packet_len(),
        })
    }

    pub fn n_files(&self) -> usize {
        self.files.len()
    }

    pub fn packet_len(&self) -> usize {
        self.packet_len
    }

    /// Packet j (0-based) of file n: the contiguous symbol slice
    /// `[j*B/F, (j+1)*B/F)`.
    #[inline]
    pub fn packet(&self, n: usize, j: usize) -> &[u64] {
        &self.files[n][j * self.packet_len..(j + 1) * self.packet_len]
    }
}

/// One request vector per user, indexed by flat user index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandMatrix {
    rows: Vec<FVec>,
}

impl DemandMatrix {
    pub fn from_rows(inst: &SchemeInstance, rows: Vec<FVec>) -> Result<Self, SchemeError> {
        if rows.len() != inst.users()
            || rows.iter().any(|r| r.len() != inst.n_files)
            || rows
                .iter()
                .any(|r| r.0.iter().any(|&x| x >= inst.field.order()))
        {
            return Err(SchemeError::BadInstance(
                "demand matrix shape or alphabet mismatch".into(),
            ));
        }
        Ok(DemandMatrix { rows })
    }

    /// Worst-case default: user u requests file u (distinct unit vectors).
    pub fn distinct_units(inst: &SchemeInstance) -> Result<Self, SchemeError> {
        if inst.n_files < inst.users() {
            return Err(SchemeError::BadInstance(
                "distinct unit demands need N >= K1*K2".into(),
            ));
        }
        Ok(DemandMatrix {
            rows: (0..inst.users())
                .map(|u| FVec::unit(inst.n_files, u))
                .collect(),
        })
    }

    /// User u requests the sum of files 2u and 2u+1: a full-rank matrix of
    /// genuine two-term linear combinations.
    pub fn adjacent_pairs(inst: &SchemeInstance) -> Result<Self, SchemeError> {
        if inst.n_files < 2 * inst.users() {
            return Err(SchemeError::BadInstance(
                "pair demands need N >= 2*K1*K2".into(),
            ));
        }
        let rows = (0..inst.users())
            .map(|u| {
                let mut v = vec![0u64; inst.n_files];
                v[2 * u] = 1;
                v[2 * u + 1] = 1;
                FVec(v)
            })
            .collect();
        Ok(DemandMatrix { rows })
    }

    pub fn rows(&self) -> &[FVec] {
        &self.rows
    }

    pub fn row(&self, idx: usize) -> &FVec {
        &self.rows[idx]
    }
}

/// Session key material: one security vector per signal id and one privacy
/// vector per user, all generated at the server.
#[derive(Debug, Clone)]
pub struct Randomness {
    /// Per signal id in the union of the sub-array integer sets.
    pub security: BTreeMap<u64, Vec<u64>>,
    /// Per flat user index; uniform over the sum-(q-1) slice of GF(q)^N.
    pub privacy: Vec<FVec>,
}

impl Randomness {
    pub fn generate<R: Rng + ?Sized>(
        inst: &SchemeInstance,
        rng: &mut R,
    ) -> Result<Randomness, SchemeError> {
        let plen = inst.packet_len();
        let security = inst
            .hpda
            .union_s_k()
            .into_iter()
            .map(|s| (s, (0..plen).map(|_| inst.field.sample(rng)).collect()))
            .collect();
        let sum_target = inst.field.order() - 1;
        let privacy = (0..inst.users())
            .map(|_| crate::field::sample_vec_with_sum(&inst.field, inst.n_files, sum_target, rng))
            .collect::<Result<_, _>>()?;
        Ok(Randomness { security, privacy })
    }
}

/// `L_{v,j}`: the v-combination of packet j across all files.
pub fn lin_comb(
    ctx: &FieldCtx,
    v: &FVec,
    lib: &Library,
    j: usize,
) -> Result<Vec<u64>, SchemeError> {
    if v.len() != lib.n_files() {
        return Err(SchemeError::Field(FieldError::LengthMismatch(
            v.len(),
            lib.n_files(),
        )));
    }
    let mut acc = vec![0u64; lib.packet_len];
    for (n, &c) in v.0.iter().enumerate() {
        crate::field::axpy(ctx, &mut acc, c, lib.packet(n, j));
    }
    Ok(acc)
}

/// Same combination computed from a cached row (per-file packets at one j).
fn lin_comb_cached(ctx: &FieldCtx, v: &FVec, row: &[Vec<u64>]) -> Vec<u64> {
    let mut acc = vec![0u64; row.first().map_or(0, Vec::len)];
    for (packet, &c) in row.iter().zip(&v.0) {
        crate::field::axpy(ctx, &mut acc, c, packet);
    }
    acc
}

pub(crate) fn add_assign(ctx: &FieldCtx, acc: &mut [u64], v: &[u64]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = ctx.add(*a, b);
    }
}

pub(crate) fn sub_assign(ctx: &FieldCtx, acc: &mut [u64], v: &[u64]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = ctx.sub(*a, b);
    }
}

/// A mirror cache: all files' packets at the starred rows, plus the
/// security vectors for its mirror-originated signal ids.
#[derive(Debug, Clone)]
pub struct MirrorCache {
    /// row j -> per-file packet values.
    pub rows: BTreeMap<usize, Vec<Vec<u64>>>,
    pub vectors: BTreeMap<u64, Vec<u64>>,
}

/// A user cache: packets at its starred rows, plus one coded record
/// `V_s + L_{p,j}` per integer cell `s` in its column (at row j).
#[derive(Debug, Clone)]
pub struct UserCache {
    pub rows: BTreeMap<usize, Vec<Vec<u64>>>,
    /// row j -> (signal id at that row, masked key record).
    pub coded: BTreeMap<usize, (u64, Vec<u64>)>,
}

#[derive(Debug, Clone)]
pub struct CacheSet {
    pub mirrors: Vec<MirrorCache>,
    pub users: Vec<UserCache>,
}

impl CacheSet {
    /// Cache size in field symbols.
    pub fn mirror_symbols(&self, k1: usize, inst: &SchemeInstance) -> usize {
        let m = &self.mirrors[k1];
        let plen = inst.packet_len();
        m.rows.len() * inst.n_files() * plen + m.vectors.len() * plen
    }

    pub fn user_symbols(&self, k1: usize, k2: usize, inst: &SchemeInstance) -> usize {
        let u = &self.users[inst.user_index(k1, k2)];
        let plen = inst.packet_len();
        u.rows.len() * inst.n_files() * plen + u.coded.len() * plen
    }
}

/// Fill every cache according to the array: stars mark uncoded packet rows;
/// in secure-private mode mirrors add the security vectors of their own
/// signal ids and users add the masked key records for their column.
pub fn place(
    inst: &SchemeInstance,
    lib: &Library,
    rand: Option<&Randomness>,
) -> Result<CacheSet, SchemeError> {
    match (inst.mode, rand) {
        (Mode::Plain, None) | (Mode::SecurePrivate, Some(_)) => {}
        _ => return Err(SchemeError::RandomnessMismatch),
    }
    let h = &inst.hpda;
    let ctx = &inst.field;
    let cache_row = |j: usize| -> Vec<Vec<u64>> {
        (0..inst.n_files)
            .map(|n| lib.packet(n, j).to_vec())
            .collect()
    };

    let mut mirrors = Vec::with_capacity(h.k1());
    for m in 0..h.k1() {
        let rows: BTreeMap<usize, Vec<Vec<u64>>> = (0..h.f())
            .filter(|&j| h.mirror_has_row(m, j))
            .map(|j| (j, cache_row(j)))
            .collect();
        let vectors = match rand {
            Some(r) => h
                .s_k(m)
                .intersection(h.s_m())
                .map(|s| {
                    r.security
                        .get(s)
                        .cloned()
                        .map(|v| (*s, v))
                        .ok_or(SchemeError::UnknownSignal(*s))
                })
                .collect::<Result<_, _>>()?,
            None => BTreeMap::new(),
        };
        mirrors.push(MirrorCache { rows, vectors });
    }

    let mut users = Vec::with_capacity(inst.users());
    for m in 0..h.k1() {
        for c in 0..h.k2() {
            let mut rows = BTreeMap::new();
            let mut coded = BTreeMap::new();
            for j in 0..h.f() {
                match h.sub(m).get(j, c) {
                    Cell::Star => {
                        rows.insert(j, cache_row(j));
                    }
                    Cell::Int(s) => {
                        if let Some(r) = rand {
                            let key =
                                r.security.get(&s).ok_or(SchemeError::UnknownSignal(s))?;
                            let mut rec =
                                lin_comb(ctx, &r.privacy[inst.user_index(m, c)], lib, j)?;
                            add_assign(ctx, &mut rec, key);
                            coded.insert(j, (s, rec));
                        }
                    }
                }
            }
            users.push(UserCache { rows, coded });
        }
    }
    Ok(CacheSet { mirrors, users })
}

/// Public vectors `q = p + d`, one per user. Secure-private mode only.
pub fn gen_public_vectors(
    inst: &SchemeInstance,
    rand: &Randomness,
    demands: &DemandMatrix,
) -> Result<Vec<FVec>, SchemeError> {
    if inst.mode != Mode::SecurePrivate {
        return Err(SchemeError::RandomnessMismatch);
    }
    rand.privacy
        .iter()
        .zip(demands.rows())
        .map(|(p, d)| p.add(&inst.field, d).map_err(SchemeError::from))
        .collect()
}

/// The per-user vectors that drive signal coefficients: public vectors in
/// secure-private mode, demand rows in plain mode. Entries may be withheld
/// (`None`) to model what a node is allowed to see.
pub type CoeffVecs = Vec<Option<FVec>>;

pub fn coeff_vecs_full(vecs: &[FVec]) -> CoeffVecs {
    vecs.iter().cloned().map(Some).collect()
}

/// Plain-mode mirror-blind view: every row except mirror `k1`'s own users.
pub fn coeff_vecs_without_mirror(inst: &SchemeInstance, vecs: &[FVec], k1: usize) -> CoeffVecs {
    vecs.iter()
        .cloned()
        .enumerate()
        .map(|(u, v)| {
            if u / inst.hpda().k2() == k1 {
                None
            } else {
                Some(v)
            }
        })
        .collect()
}

fn coeff<'a>(vecs: &'a CoeffVecs, user: usize) -> Result<&'a FVec, SchemeError> {
    vecs[user].as_ref().ok_or_else(|| {
        SchemeError::Inconsistent(format!("coefficient vector of user {user} withheld"))
    })
}

/// Server multicast signals, one per integer outside the mirror set: the
/// sum of `L_{v,j}` over that integer's cells, plus the signal's security
/// vector in secure-private mode.
pub fn server_signals(
    inst: &SchemeInstance,
    lib: &Library,
    rand: Option<&Randomness>,
    vecs: &CoeffVecs,
) -> Result<BTreeMap<u64, Vec<u64>>, SchemeError> {
    let ctx = &inst.field;
    let mut out = BTreeMap::new();
    for s in inst.multicast_ids() {
        let mut acc = vec![0u64; inst.packet_len()];
        if let Some(r) = rand {
            add_assign(
                ctx,
                &mut acc,
                r.security.get(&s).ok_or(SchemeError::UnknownSignal(s))?,
            );
        }
        for &(m, j, c) in &inst.occurrences[&s] {
            let v = coeff(vecs, inst.user_index(m, c))?;
            let term = lin_comb(ctx, v, lib, j)?;
            add_assign(ctx, &mut acc, &term);
        }
        out.insert(s, acc);
    }
    Ok(out)
}

/// Mirror-originated signals computed at the server (mirror-blind
/// delivery): for each mirror and each of its mirror-set ids, the sum of
/// `L_{v,j}` over the id's cells plus its security vector.
pub fn server_mirror_origin_signals(
    inst: &SchemeInstance,
    lib: &Library,
    rand: Option<&Randomness>,
    vecs: &CoeffVecs,
) -> Result<BTreeMap<(usize, u64), Vec<u64>>, SchemeError> {
    let ctx = &inst.field;
    let mut out = BTreeMap::new();
    for m in 0..inst.hpda.k1() {
        for &s in inst.hpda.s_k(m).intersection(inst.hpda.s_m()) {
            let mut acc = vec![0u64; inst.packet_len()];
            if let Some(r) = rand {
                add_assign(
                    ctx,
                    &mut acc,
                    r.security.get(&s).ok_or(SchemeError::UnknownSignal(s))?,
                );
            }
            for &(mm, j, c) in &inst.occurrences[&s] {
                debug_assert_eq!(mm, m);
                let v = coeff(vecs, inst.user_index(mm, c))?;
                let term = lin_comb(ctx, v, lib, j)?;
                add_assign(ctx, &mut acc, &term);
            }
            out.insert((m, s), acc);
        }
    }
    Ok(out)
}

/// Everything a mirror may legitimately consult while encoding. No library
/// handle: cancellation terms come out of the cached packet rows.
pub struct MirrorView<'a> {
    pub mirror: usize,
    pub cache: &'a MirrorCache,
    /// Public vectors (secure-private) or demand rows (plain); rows a node
    /// must not see are `None`.
    pub vecs: &'a CoeffVecs,
    pub server_multicast: &'a BTreeMap<u64, Vec<u64>>,
    /// Mirror-origin signals received from the server (mirror-blind only).
    pub forwarded: Option<&'a BTreeMap<(usize, u64), Vec<u64>>>,
}

/// Second-layer signals of one mirror, keyed by signal id.
///
/// For ids shared with other mirrors' users, the mirror cancels every term
/// whose packet row it caches and whose user hangs off another mirror. For
/// its own mirror-set ids it either synthesizes the signal from cache
/// (mirror-assisted) or forwards the server-provided copy (mirror-blind).
pub fn mirror_signals(
    inst: &SchemeInstance,
    view: &MirrorView<'_>,
) -> Result<BTreeMap<u64, Vec<u64>>, SchemeError> {
    let ctx = &inst.field;
    let h = &inst.hpda;
    let m = view.mirror;
    let mut out = BTreeMap::new();
    for &s in h.s_k(m) {
        if h.s_m().contains(&s) {
            let signal = match inst.delivery {
                Delivery::MirrorBlind => view
                    .forwarded
                    .and_then(|f| f.get(&(m, s)))
                    .cloned()
                    .ok_or(SchemeError::UnknownSignal(s))?,
                Delivery::MirrorAssisted => {
                    let mut acc = vec![0u64; inst.packet_len()];
                    if inst.mode == Mode::SecurePrivate {
                        let key = view
                            .cache
                            .vectors
                            .get(&s)
                            .ok_or(SchemeError::UnknownSignal(s))?;
                        add_assign(ctx, &mut acc, key);
                    }
                    for &(mm, j, c) in &inst.occurrences[&s] {
                        debug_assert_eq!(mm, m);
                        let row = view.cache.rows.get(&j).ok_or_else(|| {
                            SchemeError::Inconsistent(format!(
                                "mirror {m} lacks cached row {j} for own signal {s}"
                            ))
                        })?;
                        let v = coeff(view.vecs, inst.user_index(mm, c))?;
                        add_assign(ctx, &mut acc, &lin_comb_cached(ctx, v, row));
                    }
                    acc
                }
            };
            out.insert(s, signal);
        } else {
            let mut acc = view
                .server_multicast
                .get(&s)
                .cloned()
                .ok_or(SchemeError::UnknownSignal(s))?;
            for &(mm, j, c) in &inst.occurrences[&s] {
                if mm == m || !h.mirror_has_row(m, j) {
                    continue;
                }
                let row = view.cache.rows.get(&j).ok_or_else(|| {
                    SchemeError::Inconsistent(format!(
                        "mirror {m} expected cached row {j} while canceling signal {s}"
                    ))
                })?;
                let v = coeff(view.vecs, inst.user_index(mm, c))?;
                sub_assign(ctx, &mut acc, &lin_comb_cached(ctx, v, row));
            }
            out.insert(s, acc);
        }
    }
    Ok(out)
}

/// Recover `L_{d,j}` for every packet index j at user (k1, k2).
///
/// Starred rows come straight from cache. For an integer cell `s`, the user
/// takes the mirror signal, strips its own masked key record (secure-private
/// mode), and subtracts the remaining foreign terms, each of which it can
/// rebuild from a starred row. Terms the mirror already cancelled (foreign
/// sub-array, mirror-starred row) are skipped; a term that is neither
/// cancelled nor rebuildable aborts the session, since it means the array
/// or the session state is corrupt.
pub fn decode_user(
    inst: &SchemeInstance,
    k1: usize,
    k2: usize,
    cache: &UserCache,
    mirror_sigs: &BTreeMap<u64, Vec<u64>>,
    vecs: &CoeffVecs,
    own_demand: &FVec,
) -> Result<Vec<Vec<u64>>, SchemeError> {
    let ctx = &inst.field;
    let h = &inst.hpda;
    let mut packets = Vec::with_capacity(h.f());
    for j in 0..h.f() {
        match h.sub(k1).get(j, k2) {
            Cell::Star => {
                let row = cache.rows.get(&j).ok_or_else(|| {
                    SchemeError::Inconsistent(format!("user ({k1},{k2}) lacks starred row {j}"))
                })?;
                packets.push(lin_comb_cached(ctx, own_demand, row));
            }
            Cell::Int(s) => {
                let mut acc = mirror_sigs
                    .get(&s)
                    .cloned()
                    .ok_or(SchemeError::UnknownSignal(s))?;
                if inst.mode == Mode::SecurePrivate {
                    let (rec_s, rec) = cache.coded.get(&j).ok_or_else(|| {
                        SchemeError::Inconsistent(format!(
                            "user ({k1},{k2}) lacks key record for row {j}"
                        ))
                    })?;
                    if *rec_s != s {
                        return Err(SchemeError::Inconsistent(format!(
                            "key record id {rec_s} != cell id {s} at row {j}"
                        )));
                    }
                    sub_assign(ctx, &mut acc, rec);
                }
                for &(mm, r, c) in &inst.occurrences[&s] {
                    if (mm, r, c) == (k1, j, k2) {
                        continue;
                    }
                    // Already cancelled upstream by the mirror.
                    if mm != k1 && h.mirror_has_row(k1, r) {
                        continue;
                    }
                    let row = cache.rows.get(&r).ok_or_else(|| {
                        SchemeError::Inconsistent(format!(
                            "user ({k1},{k2}) cannot rebuild term of signal {s} at row {r}: row not cached"
                        ))
                    })?;
                    let v = coeff(vecs, inst.user_index(mm, c))?;
                    sub_assign(ctx, &mut acc, &lin_comb_cached(ctx, v, row));
                }
                packets.push(acc);
            }
        }
    }
    Ok(packets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpda::{grouping_hpda, GroupingParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn example_instance(mode: Mode, q: u64) -> SchemeInstance {
        let h = grouping_hpda(GroupingParams::new(2, 2, 2).unwrap()).unwrap();
        SchemeInstance::new(h, 24, q, 6, mode, Delivery::MirrorAssisted).unwrap()
    }

    fn example_demands(inst: &SchemeInstance) -> DemandMatrix {
        DemandMatrix::adjacent_pairs(inst).unwrap()
    }

    #[test]
    fn lin_comb_selector_and_zero() {
        let inst = example_instance(Mode::Plain, 5);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let lib = Library::random(&inst, &mut rng);
        let e2 = FVec::unit(24, 2);
        assert_eq!(
            lin_comb(inst.field(), &e2, &lib, 4).unwrap(),
            lib.packet(2, 4)
        );
        let zero = FVec::zero(24);
        assert!(lin_comb(inst.field(), &zero, &lib, 0)
            .unwrap()
            .iter()
            .all(|&x| x == 0));
        // A two-file demand at one packet index equals the packet sum.
        let mut d = vec![0u64; 24];
        d[0] = 1;
        d[1] = 1;
        let sum = lin_comb(inst.field(), &FVec(d), &lib, 3).unwrap();
        let mut expect = lib.packet(0, 3).to_vec();
        add_assign(inst.field(), &mut expect, lib.packet(1, 3));
        assert_eq!(sum, expect);
    }

    #[test]
    fn placement_sizes_plain_and_secure() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let inst = example_instance(Mode::Plain, 2);
        let lib = Library::random(&inst, &mut rng);
        let caches = place(&inst, &lib, None).unwrap();
        // 4 files at the mirror, 8 at each user (file = 6 symbols).
        assert_eq!(caches.mirror_symbols(0, &inst), 4 * 6);
        assert_eq!(caches.user_symbols(0, 0, &inst), 8 * 6);

        let inst = example_instance(Mode::SecurePrivate, 2);
        let rand = Randomness::generate(&inst, &mut rng).unwrap();
        let caches = place(&inst, &lib, Some(&rand)).unwrap();
        // 13/3 files and 26/3 files, in symbols.
        assert_eq!(caches.mirror_symbols(0, &inst) * 3, 13 * 6);
        assert_eq!(caches.user_symbols(1, 1, &inst) * 3, 26 * 6);
        assert!(place(&inst, &lib, None).is_err());
    }

    #[test]
    fn public_vectors_are_componentwise_sums() {
        let inst = example_instance(Mode::SecurePrivate, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let rand = Randomness::generate(&inst, &mut rng).unwrap();
        let demands = example_demands(&inst);
        let q = gen_public_vectors(&inst, &rand, &demands).unwrap();
        for (u, qv) in q.iter().enumerate() {
            let expect = rand.privacy[u].add(inst.field(), demands.row(u)).unwrap();
            assert_eq!(*qv, expect);
        }
    }

    #[test]
    fn public_vector_sum_vanishes_for_unit_demands() {
        for q in [2u64, 3, 5] {
            let inst = example_instance(Mode::SecurePrivate, q);
            let demands = DemandMatrix::distinct_units(&inst).unwrap();
            for seed in 0..20 {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let rand = Randomness::generate(&inst, &mut rng).unwrap();
                let qvecs = gen_public_vectors(&inst, &rand, &demands).unwrap();
                for qv in &qvecs {
                    assert_eq!(qv.sum(inst.field()), 0);
                }
            }
        }
    }

    /// Signals of the worked 2x2 session, plain variant: four server
    /// multicasts with the stated composition, and mirror 1's processed and
    /// self-originated signals.
    #[test]
    fn example_signals_plain() {
        let inst = example_instance(Mode::Plain, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let lib = Library::random(&inst, &mut rng);
        let demands = example_demands(&inst);
        let vecs = coeff_vecs_full(demands.rows());
        let caches = place(&inst, &lib, None).unwrap();
        let server = server_signals(&inst, &lib, None, &vecs).unwrap();
        assert_eq!(server.len(), 4);

        let ctx = inst.field();
        let l = |u: usize, j: usize| lin_comb(ctx, demands.row(u), &lib, j).unwrap();
        let sum2 = |a: Vec<u64>, b: &[u64]| {
            let mut acc = a;
            add_assign(ctx, &mut acc, b);
            acc
        };
        // First multicast = L_{d11,4} + L_{d12,2} + L_{d21,1} (1-based rows).
        let expect1 = sum2(sum2(l(0, 3), &l(1, 1)), &l(2, 0));
        assert_eq!(server[&1], expect1);

        let view = MirrorView {
            mirror: 0,
            cache: &caches.mirrors[0],
            vecs: &vecs,
            server_multicast: &server,
            forwarded: None,
        };
        let m1 = mirror_signals(&inst, &view).unwrap();
        assert_eq!(m1.len(), 6);
        // Signal 1 after cancellation = L_{d11,4} + L_{d12,2}.
        assert_eq!(m1[&1], sum2(l(0, 3), &l(1, 1)));
        // Signal 3 passes through unchanged.
        assert_eq!(m1[&3], server[&3]);
        // Mirror-originated signal 5 = L_{d11,1}.
        assert_eq!(m1[&5], l(0, 0));
    }

    /// Secure-private variant of the same session: the security vector
    /// rides on every signal and public vectors replace demands.
    #[test]
    fn example_signals_secure_private() {
        let inst = example_instance(Mode::SecurePrivate, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let lib = Library::random(&inst, &mut rng);
        let rand = Randomness::generate(&inst, &mut rng).unwrap();
        let demands = example_demands(&inst);
        let qvecs = gen_public_vectors(&inst, &rand, &demands).unwrap();
        let vecs = coeff_vecs_full(&qvecs);
        let caches = place(&inst, &lib, Some(&rand)).unwrap();
        let server = server_signals(&inst, &lib, Some(&rand), &vecs).unwrap();

        let ctx = inst.field();
        let l = |v: &FVec, j: usize| lin_comb(ctx, v, &lib, j).unwrap();
        let mut expect1 = rand.security[&1].clone();
        add_assign(ctx, &mut expect1, &l(&qvecs[0], 3));
        add_assign(ctx, &mut expect1, &l(&qvecs[1], 1));
        add_assign(ctx, &mut expect1, &l(&qvecs[2], 0));
        assert_eq!(server[&1], expect1);

        let view = MirrorView {
            mirror: 0,
            cache: &caches.mirrors[0],
            vecs: &vecs,
            server_multicast: &server,
            forwarded: None,
        };
        let m1 = mirror_signals(&inst, &view).unwrap();
        // Signal 1 at mirror 1 = V_1 + L_{q11,4} + L_{q12,2}.
        let mut expect = rand.security[&1].clone();
        add_assign(ctx, &mut expect, &l(&qvecs[0], 3));
        add_assign(ctx, &mut expect, &l(&qvecs[1], 1));
        assert_eq!(m1[&1], expect);
        // Mirror-originated signal 5 = V_5 + L_{q11,1}.
        let mut expect = rand.security[&5].clone();
        add_assign(ctx, &mut expect, &l(&qvecs[0], 0));
        assert_eq!(m1[&5], expect);
    }

    #[test]
    fn full_cache_edge_has_no_server_signals() {
        let h = grouping_hpda(GroupingParams::new(2, 2, 4).unwrap()).unwrap();
        let inst = SchemeInstance::new(h, 4, 2, 3, Mode::Plain, Delivery::MirrorAssisted).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let lib = Library::random(&inst, &mut rng);
        let demands = DemandMatrix::distinct_units(&inst).unwrap();
        let vecs = coeff_vecs_full(demands.rows());
        let server = server_signals(&inst, &lib, None, &vecs).unwrap();
        assert!(server.is_empty());
    }

    /// End-to-end decode of the worked session: every user reconstructs its
    /// requested two-file sum packet by packet.
    #[test]
    fn example_decode_all_users() {
        for (mode, q) in [
            (Mode::Plain, 2),
            (Mode::Plain, 3),
            (Mode::SecurePrivate, 2),
            (Mode::SecurePrivate, 3),
        ] {
            let inst = example_instance(mode, q);
            let mut rng = ChaCha12Rng::seed_from_u64(31);
            let lib = Library::random(&inst, &mut rng);
            let rand = match mode {
                Mode::SecurePrivate => Some(Randomness::generate(&inst, &mut rng).unwrap()),
                Mode::Plain => None,
            };
            let demands = example_demands(&inst);
            let vecs = match &rand {
                Some(r) => coeff_vecs_full(&gen_public_vectors(&inst, r, &demands).unwrap()),
                None => coeff_vecs_full(demands.rows()),
            };
            let caches = place(&inst, &lib, rand.as_ref()).unwrap();
            let server = server_signals(&inst, &lib, rand.as_ref(), &vecs).unwrap();
            for k1 in 0..2 {
                let view = MirrorView {
                    mirror: k1,
                    cache: &caches.mirrors[k1],
                    vecs: &vecs,
                    server_multicast: &server,
                    forwarded: None,
                };
                let sigs = mirror_signals(&inst, &view).unwrap();
                for k2 in 0..2 {
                    let u = inst.user_index(k1, k2);
                    let got = decode_user(
                        &inst,
                        k1,
                        k2,
                        &caches.users[u],
                        &sigs,
                        &vecs,
                        demands.row(u),
                    )
                    .unwrap();
                    for (j, got_j) in got.iter().enumerate() {
                        let expect = lin_comb(inst.field(), demands.row(u), &lib, j).unwrap();
                        assert_eq!(*got_j, expect, "user ({k1},{k2}) packet {j}");
                    }
                }
            }
        }
    }

    /// A demand over an all-starred column decodes from cache alone.
    #[test]
    fn trivial_decode_from_cache() {
        let h = crate::hpda::hybrid_hpda(
            &crate::pda::mn_pda(2, 1).unwrap(),
            &crate::pda::mn_pda(2, 2).unwrap(),
        )
        .unwrap();
        let inst = SchemeInstance::new(h, 4, 3, 4, Mode::Plain, Delivery::MirrorAssisted).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let lib = Library::random(&inst, &mut rng);
        let demands = DemandMatrix::distinct_units(&inst).unwrap();
        let vecs = coeff_vecs_full(demands.rows());
        let caches = place(&inst, &lib, None).unwrap();
        let server = server_signals(&inst, &lib, None, &vecs).unwrap();
        assert!(server.is_empty());
        let view = MirrorView {
            mirror: 0,
            cache: &caches.mirrors[0],
            vecs: &vecs,
            server_multicast: &server,
            forwarded: None,
        };
        let sigs = mirror_signals(&inst, &view).unwrap();
        assert!(sigs.is_empty());
        let got =
            decode_user(&inst, 0, 0, &caches.users[0], &sigs, &vecs, demands.row(0)).unwrap();
        for (j, got_j) in got.iter().enumerate() {
            assert_eq!(*got_j, lib.packet(0, j));
        }
    }

    #[test]
    fn corrupted_session_aborts_loudly() {
        let inst = example_instance(Mode::Plain, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let lib = Library::random(&inst, &mut rng);
        let demands = example_demands(&inst);
        let vecs = coeff_vecs_full(demands.rows());
        let caches = place(&inst, &lib, None).unwrap();
        let server = server_signals(&inst, &lib, None, &vecs).unwrap();
        // Drop the cached rows the mirror needs for cancellation.
        let mut broken = caches.mirrors[0].clone();
        broken.rows.clear();
        let view = MirrorView {
            mirror: 0,
            cache: &broken,
            vecs: &vecs,
            server_multicast: &server,
            forwarded: None,
        };
        assert!(matches!(
            mirror_signals(&inst, &view),
            Err(SchemeError::Inconsistent(_))
        ));
    }

    #[test]
    fn instance_preconditions() {
        let h = grouping_hpda(GroupingParams::new(2, 2, 2).unwrap()).unwrap();
        assert!(
            SchemeInstance::new(h.clone(), 24, 4, 6, Mode::Plain, Delivery::MirrorAssisted)
                .is_err()
        );
        assert!(
            SchemeInstance::new(h.clone(), 24, 2, 7, Mode::Plain, Delivery::MirrorAssisted)
                .is_err()
        );
        assert!(SchemeInstance::new(h, 0, 2, 6, Mode::Plain, Delivery::MirrorAssisted).is_err());
    }
}
