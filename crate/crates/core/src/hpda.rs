//! Hierarchical placement delivery arrays.
//!
//! An HPDA extends a PDA to a two-layer network: a mirror part `A0`
//! (F x K1, stars and nulls) says which packet rows each mirror site
//! caches, and K1 user sub-arrays (each F x K2) are per-mirror PDAs. The
//! integer set `S_M` marks signals that originate at mirror sites; all
//! other integers are multicast by the server. Two constructions are
//! provided: a grouping of one MN PDA, which minimizes the first-layer
//! load, and a hybrid composition of two PDAs, which trades load for
//! subpacketization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::pda::{binomial, mn_pda, verify_pda, Cell, Grid, Pda, PdaError, PdaViolation,
    SubsetRanker, MAX_GRID_CELLS};

/// Mirror-part entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorCell {
    Star,
    Null,
}

impl fmt::Display for MirrorCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MirrorCell::Star => write!(f, "*"),
            MirrorCell::Null => write!(f, "."),
        }
    }
}

/// Parameters of a valid HPDA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HpdaParams {
    pub k1: usize,
    pub k2: usize,
    pub f: usize,
    /// Stars per mirror column.
    pub z1: usize,
    /// Stars per user column.
    pub z2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HpdaViolation {
    /// B1: mirror column star count differs from column 1.
    B1ColumnStars {
        mirror: usize,
        expected: usize,
        got: usize,
    },
    /// B2: a sub-array fails a single-layer condition.
    B2SubArray { mirror: usize, inner: PdaViolation },
    /// B2: sub-arrays disagree on the per-user star count.
    B2StarCount {
        mirror: usize,
        expected: usize,
        got: usize,
    },
    /// B3: a mirror-originated integer occurs in several sub-arrays.
    B3MultipleSubs { value: u64, mirrors: (usize, usize) },
    /// B3: a mirror-originated integer never occurs.
    B3Absent { value: u64 },
    /// B3: occurrence row is not starred in the owning mirror column.
    B3MissingMirrorStar {
        value: u64,
        mirror: usize,
        row: usize,
        col: usize,
    },
    /// B4: cross-sub-array repeat without the required mirror star.
    B4MissingMirrorStar {
        value: u64,
        a: (usize, usize, usize),
        b: (usize, usize, usize),
        at: (usize, usize),
    },
    /// Declared integer set differs from the integers present.
    IntegerSetMismatch { mirror: usize },
}

impl fmt::Display for HpdaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpdaViolation::B1ColumnStars {
                mirror,
                expected,
                got,
            } => write!(
                f,
                "B1: mirror column {} has {} stars, expected {}",
                mirror + 1,
                got,
                expected
            ),
            HpdaViolation::B2SubArray { mirror, inner } => {
                write!(f, "B2: sub-array {}: {}", mirror + 1, inner)
            }
            HpdaViolation::B2StarCount {
                mirror,
                expected,
                got,
            } => write!(
                f,
                "B2: sub-array {} has {} stars per column, expected {}",
                mirror + 1,
                got,
                expected
            ),
            HpdaViolation::B3MultipleSubs { value, mirrors } => write!(
                f,
                "B3: mirror integer {} occurs in sub-arrays {} and {}",
                value,
                mirrors.0 + 1,
                mirrors.1 + 1
            ),
            HpdaViolation::B3Absent { value } => {
                write!(f, "B3: mirror integer {value} occurs in no sub-array")
            }
            HpdaViolation::B3MissingMirrorStar {
                value,
                mirror,
                row,
                col,
            } => write!(
                f,
                "B3: integer {} at (row {}, mirror {}, col {}) lacks mirror star",
                value,
                row + 1,
                mirror + 1,
                col + 1
            ),
            HpdaViolation::B4MissingMirrorStar { value, a, b, at } => write!(
                f,
                "B4: integer {} at (sub {}, {}, {}) and (sub {}, {}, {}): expected star at mirror ({}, {})",
                value,
                a.0 + 1,
                a.1 + 1,
                a.2 + 1,
                b.0 + 1,
                b.1 + 1,
                b.2 + 1,
                at.0 + 1,
                at.1 + 1
            ),
            HpdaViolation::IntegerSetMismatch { mirror } => write!(
                f,
                "declared integer set of sub-array {} does not match its entries",
                mirror + 1
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum HpdaError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Pda(#[from] PdaError),
    #[error("verification failed: {} violation(s)", .0.len())]
    Invalid(Vec<HpdaViolation>),
    #[error("parameter out of range: {0}")]
    Param(String),
    #[error("bad text format: {0}")]
    BadText(String),
}

/// Unvalidated HPDA data: shapes are consistent, conditions unchecked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpdaRaw {
    k1: usize,
    k2: usize,
    f: usize,
    a0: Vec<MirrorCell>,
    subs: Vec<Grid>,
    s_m: BTreeSet<u64>,
    s_k: Vec<BTreeSet<u64>>,
}

impl HpdaRaw {
    /// Assemble from parts; `s_k` defaults to the integers present in each
    /// sub-array when `None`.
    pub fn new(
        a0: Vec<MirrorCell>,
        subs: Vec<Grid>,
        s_m: BTreeSet<u64>,
        s_k: Option<Vec<BTreeSet<u64>>>,
    ) -> Result<Self, HpdaError> {
        if subs.is_empty() {
            return Err(HpdaError::Shape("no sub-arrays".into()));
        }
        let f = subs[0].rows();
        let k2 = subs[0].cols();
        let k1 = subs.len();
        for (i, s) in subs.iter().enumerate() {
            if s.rows() != f || s.cols() != k2 {
                return Err(HpdaError::Shape(format!(
                    "sub-array {} is {}x{}, expected {}x{}",
                    i + 1,
                    s.rows(),
                    s.cols(),
                    f,
                    k2
                )));
            }
        }
        if a0.len() != f * k1 {
            return Err(HpdaError::Shape(format!(
                "mirror part has {} cells, expected {}x{}",
                a0.len(),
                f,
                k1
            )));
        }
        let s_k = match s_k {
            Some(sets) => {
                if sets.len() != k1 {
                    return Err(HpdaError::Shape(format!(
                        "{} integer sets for {} sub-arrays",
                        sets.len(),
                        k1
                    )));
                }
                sets
            }
            None => subs
                .iter()
                .map(|g| g.integer_set().into_iter().collect())
                .collect(),
        };
        Ok(HpdaRaw {
            k1,
            k2,
            f,
            a0,
            subs,
            s_m,
            s_k,
        })
    }

    #[inline]
    pub fn a0(&self, row: usize, mirror: usize) -> MirrorCell {
        self.a0[row * self.k1 + mirror]
    }

    pub fn sub(&self, mirror: usize) -> &Grid {
        &self.subs[mirror]
    }
}

/// Check conditions B1-B4 plus integer-set consistency.
pub fn verify_hpda(raw: &HpdaRaw) -> Result<HpdaParams, Vec<HpdaViolation>> {
    let mut violations = Vec::new();

    // B1: uniform star count over mirror columns.
    let star_count = |mirror: usize| {
        (0..raw.f)
            .filter(|&r| raw.a0(r, mirror) == MirrorCell::Star)
            .count()
    };
    let z1 = star_count(0);
    for m in 0..raw.k1 {
        let got = star_count(m);
        if got != z1 {
            violations.push(HpdaViolation::B1ColumnStars {
                mirror: m,
                expected: z1,
                got,
            });
        }
    }

    // B2: every sub-array is a PDA with a common Z2.
    let mut z2 = 0usize;
    for (m, sub) in raw.subs.iter().enumerate() {
        match verify_pda(sub) {
            Ok(p) => {
                if m == 0 {
                    z2 = p.z;
                } else if p.z != z2 {
                    violations.push(HpdaViolation::B2StarCount {
                        mirror: m,
                        expected: z2,
                        got: p.z,
                    });
                }
            }
            Err(inner) => {
                violations.extend(
                    inner
                        .into_iter()
                        .map(|v| HpdaViolation::B2SubArray { mirror: m, inner: v }),
                );
            }
        }
        let present: BTreeSet<u64> = sub.integer_set().into_iter().collect();
        if present != raw.s_k[m] {
            violations.push(HpdaViolation::IntegerSetMismatch { mirror: m });
        }
    }

    // Occurrences of every integer across all sub-arrays.
    let mut occ: BTreeMap<u64, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for (m, sub) in raw.subs.iter().enumerate() {
        for (value, cells) in sub.occurrences() {
            occ.entry(value)
                .or_default()
                .extend(cells.into_iter().map(|(r, c)| (m, r, c)));
        }
    }

    // B3: mirror integers live in exactly one sub-array, on mirror-starred rows.
    for &value in &raw.s_m {
        match occ.get(&value) {
            None => violations.push(HpdaViolation::B3Absent { value }),
            Some(cells) => {
                let first = cells[0].0;
                if let Some(other) = cells.iter().find(|c| c.0 != first) {
                    violations.push(HpdaViolation::B3MultipleSubs {
                        value,
                        mirrors: (first, other.0),
                    });
                }
                for &(m, r, c) in cells {
                    if raw.a0(r, m) != MirrorCell::Star {
                        violations.push(HpdaViolation::B3MissingMirrorStar {
                            value,
                            mirror: m,
                            row: r,
                            col: c,
                        });
                    }
                }
            }
        }
    }

    // B4: cross-sub-array repeats need mirror stars behind integer entries.
    for (&value, cells) in &occ {
        for (i, &a) in cells.iter().enumerate() {
            for &b in &cells[i + 1..] {
                if a.0 == b.0 {
                    continue;
                }
                for (x, y) in [(a, b), (b, a)] {
                    // x = (k1, j, k2), y = (k1', j', _): condition on a^(k1)_{j',k2}.
                    if let Cell::Int(_) = raw.subs[x.0].get(y.1, x.2) {
                        if raw.a0(y.1, x.0) != MirrorCell::Star {
                            violations.push(HpdaViolation::B4MissingMirrorStar {
                                value,
                                a,
                                b,
                                at: (y.1, x.0),
                            });
                        }
                    }
                }
            }
        }
    }

    if violations.is_empty() {
        Ok(HpdaParams {
            k1: raw.k1,
            k2: raw.k2,
            f: raw.f,
            z1,
            z2,
        })
    } else {
        Err(violations)
    }
}

/// Exact cardinalities of the integer sets, feeding the closed-form loads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpdaStats {
    pub s_m: usize,
    pub s_k: Vec<usize>,
    pub s_m_inter_k: Vec<usize>,
    pub union_s_k: usize,
}

/// A verified hierarchical placement delivery array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hpda {
    raw: HpdaRaw,
    params: HpdaParams,
}

impl Hpda {
    pub fn new(raw: HpdaRaw) -> Result<Self, HpdaError> {
        let params = verify_hpda(&raw).map_err(HpdaError::Invalid)?;
        Ok(Hpda { raw, params })
    }

    pub fn raw(&self) -> &HpdaRaw {
        &self.raw
    }

    pub fn params(&self) -> HpdaParams {
        self.params
    }

    pub fn k1(&self) -> usize {
        self.params.k1
    }

    pub fn k2(&self) -> usize {
        self.params.k2
    }

    pub fn f(&self) -> usize {
        self.params.f
    }

    #[inline]
    pub fn mirror_has_row(&self, mirror: usize, row: usize) -> bool {
        self.raw.a0(row, mirror) == MirrorCell::Star
    }

    pub fn sub(&self, mirror: usize) -> &Grid {
        self.raw.sub(mirror)
    }

    pub fn s_m(&self) -> &BTreeSet<u64> {
        &self.raw.s_m
    }

    pub fn s_k(&self, mirror: usize) -> &BTreeSet<u64> {
        &self.raw.s_k[mirror]
    }

    pub fn union_s_k(&self) -> BTreeSet<u64> {
        self.raw.s_k.iter().flatten().copied().collect()
    }

    /// Occurrences of every integer as (mirror, row, col), ascending.
    pub fn occurrences(&self) -> BTreeMap<u64, Vec<(usize, usize, usize)>> {
        let mut occ: BTreeMap<u64, Vec<(usize, usize, usize)>> = BTreeMap::new();
        for (m, sub) in self.raw.subs.iter().enumerate() {
            for (value, cells) in sub.occurrences() {
                occ.entry(value)
                    .or_default()
                    .extend(cells.into_iter().map(|(r, c)| (m, r, c)));
            }
        }
        occ
    }

    pub fn stats(&self) -> HpdaStats {
        let union: BTreeSet<u64> = self.union_s_k();
        HpdaStats {
            s_m: self.raw.s_m.len(),
            s_k: self.raw.s_k.iter().map(|s| s.len()).collect(),
            s_m_inter_k: self
                .raw
                .s_k
                .iter()
                .map(|s| s.intersection(&self.raw.s_m).count())
                .collect(),
            union_s_k: union.len(),
        }
    }

    /// Text form: header `HPDA K1 K2 F Z1 Z2`, the mirror part, each
    /// sub-array, and the integer sets; blocks separated by blank lines.
    pub fn to_text(&self) -> String {
        let p = self.params;
        let mut out = format!("HPDA {} {} {} {} {}\n", p.k1, p.k2, p.f, p.z1, p.z2);
        for r in 0..p.f {
            let line: Vec<String> = (0..p.k1).map(|m| self.raw.a0(r, m).to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        for sub in &self.raw.subs {
            out.push('\n');
            for line in sub.render_rows() {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push('\n');
        out.push_str(&render_set("SM", &self.raw.s_m));
        for (i, set) in self.raw.s_k.iter().enumerate() {
            out.push_str(&render_set(&format!("S{}", i + 1), set));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HpdaError> {
        let raw = parse_raw(text)?;
        let hpda = Hpda::new(raw)?;
        // Header numbers must agree with the inferred parameters.
        let header = text.lines().next().unwrap_or_default().to_string();
        let nums: Vec<usize> = header
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse().unwrap_or(usize::MAX))
            .collect();
        let p = hpda.params;
        if nums != [p.k1, p.k2, p.f, p.z1, p.z2] {
            return Err(HpdaError::BadText(format!(
                "header {header:?} disagrees with inferred ({}, {}, {}, {}, {})",
                p.k1, p.k2, p.f, p.z1, p.z2
            )));
        }
        Ok(hpda)
    }
}

fn render_set(name: &str, set: &BTreeSet<u64>) -> String {
    let items: Vec<String> = set.iter().map(|v| v.to_string()).collect();
    if items.is_empty() {
        format!("{name}:\n")
    } else {
        format!("{name}: {}\n", items.join(" "))
    }
}

/// Parse the text form without validating the array conditions.
pub fn parse_raw(text: &str) -> Result<HpdaRaw, HpdaError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HpdaError::BadText("empty".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "HPDA" {
        return Err(HpdaError::BadText(format!("bad header {header:?}")));
    }
    let nums: Vec<usize> = fields[1..]
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| HpdaError::BadText(format!("bad header {header:?}")))?;
    let (k1, k2, f) = (nums[0], nums[1], nums[2]);

    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut set_lines: Vec<&str> = Vec::new();
    for line in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else if trimmed.starts_with("SM:") || trimmed.chars().next() == Some('S') && trimmed.contains(':') {
            set_lines.push(trimmed);
        } else {
            current.push(trimmed);
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    if blocks.len() != k1 + 1 {
        return Err(HpdaError::BadText(format!(
            "expected mirror part plus {} sub-arrays, found {} blocks",
            k1,
            blocks.len()
        )));
    }

    let a0_block = &blocks[0];
    if a0_block.len() != f {
        return Err(HpdaError::BadText(format!(
            "mirror part has {} rows, expected {f}",
            a0_block.len()
        )));
    }
    let mut a0 = Vec::with_capacity(f * k1);
    for line in a0_block {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != k1 {
            return Err(HpdaError::BadText(format!(
                "mirror row {line:?} has {} entries, expected {k1}",
                toks.len()
            )));
        }
        for t in toks {
            a0.push(match t {
                "*" => MirrorCell::Star,
                "." => MirrorCell::Null,
                _ => return Err(HpdaError::BadText(format!("bad mirror token {t:?}"))),
            });
        }
    }

    let mut subs = Vec::with_capacity(k1);
    for block in &blocks[1..] {
        let grid = Grid::parse_rows(block)?;
        if grid.rows() != f || grid.cols() != k2 {
            return Err(HpdaError::BadText(format!(
                "sub-array is {}x{}, expected {f}x{k2}",
                grid.rows(),
                grid.cols()
            )));
        }
        subs.push(grid);
    }

    let mut s_m = None;
    let mut s_k: Vec<Option<BTreeSet<u64>>> = vec![None; k1];
    for line in set_lines {
        let (name, rest) = line
            .split_once(':')
            .ok_or_else(|| HpdaError::BadText(format!("bad set line {line:?}")))?;
        let set: BTreeSet<u64> = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<u64>()
                    .map_err(|_| HpdaError::BadText(format!("bad integer {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        if name == "SM" {
            s_m = Some(set);
        } else if let Some(idx) = name.strip_prefix('S').and_then(|n| n.parse::<usize>().ok()) {
            if idx == 0 || idx > k1 {
                return Err(HpdaError::BadText(format!("set index {idx} out of range")));
            }
            s_k[idx - 1] = Some(set);
        } else {
            return Err(HpdaError::BadText(format!("unknown set line {line:?}")));
        }
    }
    let s_m = s_m.ok_or_else(|| HpdaError::BadText("missing SM line".into()))?;
    let s_k: Vec<BTreeSet<u64>> = s_k
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| HpdaError::BadText(format!("missing S{} line", i + 1))))
        .collect::<Result<_, _>>()?;
    HpdaRaw::new(a0, subs, s_m, Some(s_k))
}

/// Parameters of the grouping construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupingParams {
    pub k1: u64,
    pub k2: u64,
    pub t: u64,
}

impl GroupingParams {
    pub fn new(k1: u64, k2: u64, t: u64) -> Result<Self, HpdaError> {
        if k1 < 1 || k2 < 1 {
            return Err(HpdaError::Param("K1 and K2 must be positive".into()));
        }
        if t < k2 || t > k1 * k2 {
            return Err(HpdaError::Param(format!(
                "grouping needs K2 <= t <= K1*K2, got t={t}, K2={k2}, K1*K2={}",
                k1 * k2
            )));
        }
        Ok(GroupingParams { k1, k2, t })
    }
}

/// Build an HPDA by grouping the columns of `mn_pda(K1*K2, t)` into K1
/// blocks of K2.
///
/// A mirror caches exactly the rows where its whole column block is
/// starred; in those rows the stars are replaced by fresh mirror-signal
/// integers. Fresh labels start after the MN signal count S = C(K1K2,t+1)
/// and are assigned per block, walking star rows top-down and columns
/// left-to-right, so each mirror owns one contiguous range.
pub fn grouping_hpda(p: GroupingParams) -> Result<Hpda, HpdaError> {
    let GroupingParams { k1, k2, t } = p;
    let base = mn_pda(k1 * k2, t)?;
    let f = base.params().f;
    let s = binomial(k1 * k2, t + 1)? as u64;
    let z1 = binomial(k1 * k2 - k2, t - k2)? as u64;

    let mut a0 = Vec::with_capacity(f * k1 as usize);
    let mut subs: Vec<Vec<Cell>> = vec![Vec::with_capacity(f * k2 as usize); k1 as usize];
    // Row-major over the composite; fresh labels are assigned per block, so
    // track a cursor per mirror.
    let mut next_label: Vec<u64> = (0..k1).map(|b| s + b * k2 * z1 + 1).collect();
    for row in 0..f {
        for b in 0..k1 as usize {
            let cols = (b * k2 as usize)..((b + 1) * k2 as usize);
            let star_row = cols
                .clone()
                .all(|c| base.grid().get(row, c) == Cell::Star);
            a0.push(if star_row {
                MirrorCell::Star
            } else {
                MirrorCell::Null
            });
            for c in cols {
                let cell = base.grid().get(row, c);
                if star_row {
                    debug_assert_eq!(cell, Cell::Star);
                    subs[b].push(Cell::Int(next_label[b]));
                    next_label[b] += 1;
                } else {
                    subs[b].push(cell);
                }
            }
        }
    }
    for (b, cursor) in next_label.iter().enumerate() {
        debug_assert_eq!(*cursor, s + (b as u64 + 1) * k2 * z1 + 1);
    }
    let s_m: BTreeSet<u64> = (s + 1..=s + k1 * k2 * z1).collect();
    let subs = subs
        .into_iter()
        .map(|cells| Grid::from_cells(f, k2 as usize, cells))
        .collect::<Result<Vec<_>, _>>()?;
    Hpda::new(HpdaRaw::new(a0, subs, s_m, None)?)
}

/// Expected integer sets of the grouping construction, for cross-checks:
/// each mirror's set is its fresh contiguous range joined with the labels of
/// MN signals touching its column block.
pub fn grouping_expected_sets(p: GroupingParams) -> Result<(BTreeSet<u64>, Vec<BTreeSet<u64>>), HpdaError> {
    let GroupingParams { k1, k2, t } = p;
    let s = binomial(k1 * k2, t + 1)? as u64;
    let z1 = binomial(k1 * k2 - k2, t - k2)? as u64;
    let s_m: BTreeSet<u64> = (s + 1..=s + k1 * k2 * z1).collect();
    let ranker = SubsetRanker::new(k1 * k2, t + 1)?;
    let mut sets = Vec::new();
    for b in 0..k1 {
        let mut set: BTreeSet<u64> =
            (s + b * k2 * z1 + 1..=s + (b + 1) * k2 * z1).collect();
        let block = (b * k2 + 1)..=((b + 1) * k2);
        for rank in 1..=(s as u128) {
            let subset = ranker.unrank(rank)?;
            if subset.iter().any(|v| block.contains(v)) {
                set.insert(rank as u64);
            }
        }
        sets.push(set);
    }
    Ok((s_m, sets))
}

/// Build an HPDA from an outer PDA `B` (mirror layer) and inner PDA `C`
/// (user layer).
///
/// The mirror part repeats each row of `B` F2 times with integers dropped.
/// Every entry of `B` is replaced by a shifted copy of `C`: integer `s`
/// maps to `C + (s-1)*S2`, and the r-th star (top-down) in column `k1`
/// maps to `C + ((k1-1)*Z1 + r - 1 + S1)*S2`. Star-derived labels form the
/// mirror set. Composite row `(f1, f2)` is stored at index `(f1-1)*F2 + f2`.
pub fn hybrid_hpda(outer: &Pda, inner: &Pda) -> Result<Hpda, HpdaError> {
    let bp = outer.params();
    let cp = inner.params();
    let (f1, f2) = (bp.f, cp.f);
    let f = f1
        .checked_mul(f2)
        .filter(|&v| v * (bp.k * cp.k) <= MAX_GRID_CELLS)
        .ok_or(PdaError::TooLarge(MAX_GRID_CELLS))?;
    let (s1, s2, z1) = (bp.s as u64, cp.s as u64, bp.z as u64);

    // Star order per outer column: row -> 1-based rank among that column's stars.
    let mut star_order: Vec<BTreeMap<usize, u64>> = Vec::with_capacity(bp.k);
    for col in 0..bp.k {
        let mut order = BTreeMap::new();
        let mut rank = 0u64;
        for row in 0..f1 {
            if outer.grid().get(row, col) == Cell::Star {
                rank += 1;
                order.insert(row, rank);
            }
        }
        star_order.push(order);
    }

    let mut a0 = Vec::with_capacity(f * bp.k);
    let mut subs: Vec<Vec<Cell>> = vec![Vec::with_capacity(f * cp.k); bp.k];
    for row1 in 0..f1 {
        for row2 in 0..f2 {
            for (mirror, sub) in subs.iter_mut().enumerate() {
                let offset = match outer.grid().get(row1, mirror) {
                    Cell::Int(s) => {
                        a0.push(MirrorCell::Null);
                        (s - 1) * s2
                    }
                    Cell::Star => {
                        a0.push(MirrorCell::Star);
                        let order = star_order[mirror][&row1];
                        (mirror as u64 * z1 + order - 1 + s1) * s2
                    }
                };
                for col in 0..cp.k {
                    sub.push(match inner.grid().get(row2, col) {
                        Cell::Star => Cell::Star,
                        Cell::Int(v) => Cell::Int(v + offset),
                    });
                }
            }
        }
    }
    let s_m: BTreeSet<u64> = (s1 * s2 + 1..=(s1 + z1 * bp.k as u64) * s2).collect();
    let subs = subs
        .into_iter()
        .map(|cells| Grid::from_cells(f, cp.k, cells))
        .collect::<Result<Vec<_>, _>>()?;
    Hpda::new(HpdaRaw::new(a0, subs, s_m, None)?)
}
