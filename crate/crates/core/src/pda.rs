//! Single-layer placement delivery arrays.
//!
//! A PDA is an F x K grid over stars and positive integers that encodes a
//! single-server coded caching scheme: stars mark cached packets, equal
//! integers mark packets served by one multicast signal. This module holds
//! the grid type, a verifier for the defining conditions, the
//! Maddah-Ali--Niesen (MN) construction, and a grouped low-subpacketization
//! family used for subpacketization/load trade-off sweeps.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

/// One grid entry: a cached-packet marker or a signal id (>= 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Star,
    Int(u64),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Star => write!(f, "*"),
            Cell::Int(s) => write!(f, "{s}"),
        }
    }
}

/// Rectangular grid over `{*} ∪ ints`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

impl Grid {
    pub fn from_cells(rows: usize, cols: usize, cells: Vec<Cell>) -> Result<Self, PdaError> {
        if rows * cols != cells.len() {
            return Err(PdaError::Shape {
                rows,
                cols,
                cells: cells.len(),
            });
        }
        Ok(Grid { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Cell) {
        self.cells[row * self.cols + col] = v;
    }

    /// Distinct integers present, ascending.
    pub fn integer_set(&self) -> Vec<u64> {
        let mut set: Vec<u64> = self
            .cells
            .iter()
            .filter_map(|c| match c {
                Cell::Int(s) => Some(*s),
                Cell::Star => None,
            })
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    /// Occurrences of each integer as (row, col) lists, ascending by value.
    pub fn occurrences(&self) -> BTreeMap<u64, Vec<(usize, usize)>> {
        let mut map: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
        for row in 0..self.rows {
            for col in 0..self.cols {
                if let Cell::Int(s) = self.get(row, col) {
                    map.entry(s).or_default().push((row, col));
                }
            }
        }
        map
    }

    pub fn render_rows(&self) -> Vec<String> {
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.get(r, c).to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    /// Parse whitespace-separated rows of `*` / decimal tokens. All rows must
    /// have equal length.
    pub fn parse_rows(lines: &[&str]) -> Result<Self, PdaError> {
        let mut cells = Vec::new();
        let mut cols = None;
        for (i, line) in lines.iter().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match cols {
                None => cols = Some(toks.len()),
                Some(c) if c != toks.len() => {
                    return Err(PdaError::Ragged {
                        row: i,
                        expected: c,
                        got: toks.len(),
                    })
                }
                _ => {}
            }
            for t in toks {
                cells.push(match t {
                    "*" => Cell::Star,
                    _ => Cell::Int(t.parse::<u64>().map_err(|_| PdaError::BadToken {
                        row: i,
                        token: t.to_string(),
                    })?),
                });
            }
        }
        let cols = cols.unwrap_or(0);
        if cols == 0 || lines.is_empty() {
            return Err(PdaError::EmptyGrid);
        }
        Grid::from_cells(lines.len(), cols, cells)
    }
}

/// Inferred parameters of a valid PDA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PdaParams {
    /// Users (columns).
    pub k: usize,
    /// Subpacketization (rows).
    pub f: usize,
    /// Stars per column.
    pub z: usize,
    /// Distinct integers.
    pub s: usize,
}

/// A violation of one of the defining conditions, with coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PdaViolation {
    /// C1: column `col` has `got` stars, column 0 fixes `expected`.
    ColumnStars {
        col: usize,
        expected: usize,
        got: usize,
    },
    /// C2 alphabet: integer labels must be positive.
    NonPositiveInt { row: usize, col: usize },
    /// C3a: equal integers share a row or a column.
    SameLine {
        value: u64,
        a: (usize, usize),
        b: (usize, usize),
    },
    /// C3b: the crossing entry of an equal pair is not a star.
    MissingCrossStar {
        value: u64,
        a: (usize, usize),
        b: (usize, usize),
        at: (usize, usize),
    },
}

impl fmt::Display for PdaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PdaViolation::ColumnStars { col, expected, got } => write!(
                f,
                "C1: column {} has {} stars, expected {}",
                col + 1,
                got,
                expected
            ),
            PdaViolation::NonPositiveInt { row, col } => {
                write!(f, "C2: non-positive integer at ({}, {})", row + 1, col + 1)
            }
            PdaViolation::SameLine { value, a, b } => write!(
                f,
                "C3a: integer {} repeats in one row/column at ({}, {}) and ({}, {})",
                value,
                a.0 + 1,
                a.1 + 1,
                b.0 + 1,
                b.1 + 1
            ),
            PdaViolation::MissingCrossStar { value, a, b, at } => write!(
                f,
                "C3b: integer {} at ({}, {}) and ({}, {}) lacks star at ({}, {})",
                value,
                a.0 + 1,
                a.1 + 1,
                b.0 + 1,
                b.1 + 1,
                at.0 + 1,
                at.1 + 1
            ),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PdaError {
    #[error("grid shape {rows}x{cols} does not match {cells} cells")]
    Shape {
        rows: usize,
        cols: usize,
        cells: usize,
    },
    #[error("ragged grid: row {row} has {got} entries, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("bad token {token:?} in row {row}")]
    BadToken { row: usize, token: String },
    #[error("empty grid")]
    EmptyGrid,
    #[error("parameter out of range: {0}")]
    Param(String),
    #[error("construction exceeds the materialization limit ({0} cells)")]
    TooLarge(usize),
    #[error("constructed grid failed verification: {0:?}")]
    Invalid(Vec<PdaViolation>),
    #[error("bad header: {0}")]
    BadHeader(String),
}

/// Guard against accidentally materializing combinatorially huge arrays;
/// closed-form sweeps never build grids, only sessions do.
pub const MAX_GRID_CELLS: usize = 4_000_000;

/// Check the defining conditions on a raw grid; on success infer `(K,F,Z,S)`.
///
/// Z is read off column 0 and checked against every column. S counts
/// distinct integers: labels need not be consecutive, which lets the same
/// verifier gate the sub-arrays of composite two-layer arrays where label
/// sets have gaps.
pub fn verify_pda(grid: &Grid) -> Result<PdaParams, Vec<PdaViolation>> {
    let mut violations = Vec::new();
    let expected = (0..grid.rows())
        .filter(|&r| grid.get(r, 0) == Cell::Star)
        .count();
    for col in 0..grid.cols() {
        let got = (0..grid.rows())
            .filter(|&r| grid.get(r, col) == Cell::Star)
            .count();
        if got != expected {
            violations.push(PdaViolation::ColumnStars {
                col,
                expected,
                got,
            });
        }
    }
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            if grid.get(row, col) == Cell::Int(0) {
                violations.push(PdaViolation::NonPositiveInt { row, col });
            }
        }
    }
    let occ = grid.occurrences();
    for (&value, cells) in &occ {
        for (i, &a) in cells.iter().enumerate() {
            for &b in &cells[i + 1..] {
                if a.0 == b.0 || a.1 == b.1 {
                    violations.push(PdaViolation::SameLine { value, a, b });
                    continue;
                }
                for at in [(a.0, b.1), (b.0, a.1)] {
                    if grid.get(at.0, at.1) != Cell::Star {
                        violations.push(PdaViolation::MissingCrossStar { value, a, b, at });
                    }
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(PdaParams {
            k: grid.cols(),
            f: grid.rows(),
            z: expected,
            s: occ.len(),
        })
    } else {
        Err(violations)
    }
}

/// A verified placement delivery array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pda {
    grid: Grid,
    params: PdaParams,
}

impl Pda {
    pub fn new(grid: Grid) -> Result<Self, PdaError> {
        let params = verify_pda(&grid).map_err(PdaError::Invalid)?;
        Ok(Pda { grid, params })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> PdaParams {
        self.params
    }

    /// Memory ratio Z/F and transmission load S/F as exact rationals.
    pub fn loads(&self) -> (Ratio<u64>, Ratio<u64>) {
        let f = self.params.f as u64;
        (
            Ratio::new(self.params.z as u64, f),
            Ratio::new(self.params.s as u64, f),
        )
    }

    /// Text form: header `PDA K F Z S`, then one row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "PDA {} {} {} {}\n",
            self.params.k, self.params.f, self.params.z, self.params.s
        );
        for line in self.grid.render_rows() {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Parse the text form and re-verify. The header is cross-checked
    /// against the inferred parameters.
    pub fn from_text(text: &str) -> Result<Self, PdaError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(PdaError::EmptyGrid)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "PDA" {
            return Err(PdaError::BadHeader(header.to_string()));
        }
        let nums: Vec<usize> = fields[1..]
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| PdaError::BadHeader(header.to_string()))?;
        let body: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
        let grid = Grid::parse_rows(&body)?;
        let pda = Pda::new(grid)?;
        let p = pda.params;
        if [p.k, p.f, p.z, p.s] != [nums[0], nums[1], nums[2], nums[3]] {
            return Err(PdaError::BadHeader(format!(
                "header {header:?} disagrees with inferred ({}, {}, {}, {})",
                p.k, p.f, p.z, p.s
            )));
        }
        Ok(pda)
    }
}

/// Binomial coefficient in u128; errors on overflow rather than saturating.
pub fn binomial(n: u64, k: u64) -> Result<u128, PdaError> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or_else(|| PdaError::Param(format!("binomial({n},{k}) overflows")))?;
        acc /= (i + 1) as u128;
    }
    Ok(acc)
}

/// Lexicographic rank/unrank between t-subsets of `[n]` and `[1 : C(n,t)]`.
#[derive(Debug, Clone, Copy)]
pub struct SubsetRanker {
    n: u64,
    t: u64,
}

impl SubsetRanker {
    /// `t > n` is allowed; the domain is then empty (count 0).
    pub fn new(n: u64, t: u64) -> Result<Self, PdaError> {
        Ok(SubsetRanker { n, t })
    }

    pub fn count(&self) -> Result<u128, PdaError> {
        binomial(self.n, self.t)
    }

    /// 1-based lex rank of an ascending t-subset of `[1:n]`.
    pub fn rank(&self, subset: &[u64]) -> Result<u128, PdaError> {
        if subset.len() as u64 != self.t
            || subset.windows(2).any(|w| w[0] >= w[1])
            || subset.iter().any(|&v| v < 1 || v > self.n)
        {
            return Err(PdaError::Param(format!(
                "not an ascending {}-subset of [1:{}]: {subset:?}",
                self.t, self.n
            )));
        }
        let mut rank: u128 = 1;
        let mut prev = 0u64;
        for (i, &v) in subset.iter().enumerate() {
            for skipped in prev + 1..v {
                rank += binomial(self.n - skipped, self.t - 1 - i as u64)?;
            }
            prev = v;
        }
        Ok(rank)
    }

    /// Inverse of [`Self::rank`].
    pub fn unrank(&self, rank: u128) -> Result<Vec<u64>, PdaError> {
        let total = self.count()?;
        if rank < 1 || rank > total {
            return Err(PdaError::Param(format!(
                "rank {rank} out of [1:{total}]"
            )));
        }
        let mut rest = rank - 1;
        let mut subset = Vec::with_capacity(self.t as usize);
        let mut v = 1u64;
        for i in 0..self.t {
            loop {
                let block = binomial(self.n - v, self.t - 1 - i)?;
                if rest < block {
                    subset.push(v);
                    v += 1;
                    break;
                }
                rest -= block;
                v += 1;
            }
        }
        Ok(subset)
    }
}

/// MN placement delivery array for `K` users at cache point `t/K`.
///
/// Rows are the t-subsets of `[K]` in lex order; the cell at (T, k) is a
/// star when `k ∈ T` and otherwise the lex rank of `T ∪ {k}` among
/// (t+1)-subsets. Parameters come out as `(K, C(K,t), C(K-1,t-1), C(K,t+1))`.
pub fn mn_pda(k: u64, t: u64) -> Result<Pda, PdaError> {
    if t < 1 || t > k {
        return Err(PdaError::Param(format!("need 1 <= t <= K, got t={t}, K={k}")));
    }
    let rows = binomial(k, t)?;
    let cells_total = rows
        .checked_mul(k as u128)
        .filter(|&c| c <= MAX_GRID_CELLS as u128)
        .ok_or(PdaError::TooLarge(MAX_GRID_CELLS))? as usize;
    let row_ranker = SubsetRanker::new(k, t)?;
    let sig_ranker = SubsetRanker::new(k, t + 1)?;
    let mut cells = Vec::with_capacity(cells_total);
    let mut union = Vec::with_capacity(t as usize + 1);
    for r in 1..=rows {
        let subset = row_ranker.unrank(r)?;
        for col in 1..=k {
            if subset.binary_search(&col).is_ok() {
                cells.push(Cell::Star);
            } else {
                union.clear();
                union.extend_from_slice(&subset);
                let pos = union.partition_point(|&v| v < col);
                union.insert(pos, col);
                cells.push(Cell::Int(sig_ranker.rank(&union)? as u64));
            }
        }
    }
    let grid = Grid::from_cells(rows as usize, k as usize, cells)?;
    Pda::new(grid)
}

/// Grouped low-subpacketization PDA family with parameters
/// `(q(m+1), q^m, q^{m-1}, (q-1)q^m)`, i.e. memory ratio `1/q` and load
/// `q - 1` at subpacketization `q^m`.
///
/// Users form m+1 groups of size q. Rows are vectors `a ∈ Z_q^m`; user
/// `(i, j)` with `i <= m` stars the rows with `a_i = j`, the last group
/// stars rows whose digit sum is `j`. Signals are labelled by vectors
/// `u ∈ Z_q^{m+1}` whose last digit differs from the sum of the first `m`;
/// each signal serves one user per group. The output is gated through
/// [`verify_pda`], so its parameters are inferred, never assumed.
pub fn partition_pda(q: u64, m: u64) -> Result<Pda, PdaError> {
    if q < 2 || m < 1 {
        return Err(PdaError::Param(format!("need q >= 2, m >= 1, got q={q}, m={m}")));
    }
    let f = (q as u128)
        .checked_pow(m as u32)
        .ok_or(PdaError::TooLarge(MAX_GRID_CELLS))?;
    let k = q as u128 * (m as u128 + 1);
    if f * k > MAX_GRID_CELLS as u128 {
        return Err(PdaError::TooLarge(MAX_GRID_CELLS));
    }
    let (f, k) = (f as usize, k as usize);
    let m = m as usize;

    // 1-based label of a signal vector u (last digit != sum of the rest):
    // its index among all (m+1)-digit base-q vectors, minus the invalid
    // vectors that precede it (one per prefix, at last digit = prefix sum).
    let label = |prefix: &[u64], last: u64| -> u64 {
        let mut idx: u64 = 0;
        let mut sum: u64 = 0;
        for &d in prefix {
            idx = idx * q + d;
            sum += d;
        }
        let full = idx * q + last;
        let invalid_before = idx + u64::from(sum % q < last);
        full - invalid_before + 1
    };

    let mut cells = Vec::with_capacity(f * k);
    let mut digits = vec![0u64; m];
    for _ in 0..f {
        let digit_sum: u64 = digits.iter().sum::<u64>() % q;
        for i in 0..m {
            for j in 0..q {
                if digits[i] == j {
                    cells.push(Cell::Star);
                } else {
                    let saved = digits[i];
                    digits[i] = j;
                    let lab = label(&digits, digit_sum);
                    digits[i] = saved;
                    cells.push(Cell::Int(lab));
                }
            }
        }
        for j in 0..q {
            if digit_sum == j {
                cells.push(Cell::Star);
            } else {
                cells.push(Cell::Int(label(&digits, j)));
            }
        }
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < q {
                break;
            }
            *d = 0;
        }
    }
    let grid = Grid::from_cells(f, k, cells)?;
    Pda::new(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EQ3_TEXT: &str = "PDA 4 6 3 4\n\
        * * 1 2\n\
        * 1 * 3\n\
        * 2 3 *\n\
        1 * * 4\n\
        2 * 4 *\n\
        3 4 * *\n";

    #[test]
    fn mn_4_2_matches_published_array() {
        let pda = mn_pda(4, 2).unwrap();
        assert_eq!(pda.to_text(), EQ3_TEXT);
        assert_eq!(
            pda.params(),
            PdaParams {
                k: 4,
                f: 6,
                z: 3,
                s: 4
            }
        );
    }

    #[test]
    fn mn_small_fixtures() {
        let p21 = mn_pda(2, 1).unwrap();
        assert_eq!(p21.grid().render_rows(), vec!["* 1", "1 *"]);
        let p31 = mn_pda(3, 1).unwrap();
        assert_eq!(p31.grid().render_rows(), vec!["* 1 2", "1 * 3", "2 3 *"]);
    }

    #[test]
    fn mn_family_parameters() {
        for k in 1..=8u64 {
            for t in 1..=k {
                let pda = mn_pda(k, t).unwrap();
                let p = pda.params();
                assert_eq!(p.k as u128, k as u128);
                assert_eq!(p.f as u128, binomial(k, t).unwrap());
                assert_eq!(p.z as u128, binomial(k - 1, t - 1).unwrap());
                assert_eq!(p.s as u128, binomial(k, t + 1).unwrap());
            }
        }
    }

    #[test]
    fn loads_fixtures() {
        let (mem, load) = mn_pda(4, 2).unwrap().loads();
        assert_eq!(mem, Ratio::new(1, 2));
        assert_eq!(load, Ratio::new(2, 3));
        let (mem, load) = mn_pda(3, 3).unwrap().loads();
        assert_eq!(mem, Ratio::new(1, 1));
        assert_eq!(load, Ratio::new(0, 1));
        let (mem, load) = mn_pda(2, 1).unwrap().loads();
        assert_eq!(mem, Ratio::new(1, 2));
        assert_eq!(load, Ratio::new(1, 2));
    }

    #[test]
    fn single_column_grid_is_valid() {
        let grid = Grid::parse_rows(&["*", "1"]).unwrap();
        assert_eq!(
            verify_pda(&grid).unwrap(),
            PdaParams {
                k: 1,
                f: 2,
                z: 1,
                s: 1
            }
        );
    }

    #[test]
    fn mutated_array_is_flagged() {
        let mut grid = mn_pda(4, 2).unwrap().grid().clone();
        // Row 1 gains a second 2 next to the one in column 4.
        grid.set(0, 2, Cell::Int(2));
        let violations = verify_pda(&grid).err().expect("mutation must be caught");
        assert!(violations.iter().any(|v| matches!(
            v,
            PdaViolation::SameLine {
                value: 2,
                a: (0, 2),
                b: (0, 3)
            }
        )));
    }

    #[test]
    fn cross_star_violation_reported_with_coordinates() {
        // Two 1s at (0,0)/(1,1) but (0,1) holds an integer.
        let grid = Grid::parse_rows(&["1 2", "* 1"]).unwrap();
        let violations = verify_pda(&grid).err().unwrap();
        assert!(violations
            .iter()
            .any(|v| matches!(v, PdaViolation::MissingCrossStar { value: 1, at: (0, 1), .. })));
    }

    #[test]
    fn rank_unrank_fixtures() {
        let r = SubsetRanker::new(4, 3).unwrap();
        assert_eq!(r.rank(&[1, 2, 3]).unwrap(), 1);
        assert_eq!(r.rank(&[2, 3, 4]).unwrap(), 4);
        let r = SubsetRanker::new(4, 2).unwrap();
        assert_eq!(r.rank(&[1, 2]).unwrap(), 1);
    }

    #[test]
    fn rank_unrank_roundtrip_and_monotone() {
        for n in 1..=8u64 {
            for t in 1..=n {
                let r = SubsetRanker::new(n, t).unwrap();
                let total = r.count().unwrap();
                let mut prev: Option<Vec<u64>> = None;
                for rank in 1..=total {
                    let s = r.unrank(rank).unwrap();
                    assert_eq!(r.rank(&s).unwrap(), rank);
                    if let Some(p) = &prev {
                        assert!(*p < s, "lex order broken at rank {rank}");
                    }
                    prev = Some(s);
                }
            }
        }
    }

    #[test]
    fn partition_family_is_verified_and_ratioed() {
        for (q, m) in [(2u64, 1u64), (2, 2), (2, 3), (3, 1), (3, 2), (4, 1)] {
            let pda = partition_pda(q, m).unwrap();
            let p = pda.params();
            assert_eq!(p.k as u64, q * (m + 1));
            assert_eq!(p.f as u64, q.pow(m as u32));
            assert_eq!(p.z as u64, q.pow(m as u32 - 1));
            assert_eq!(p.s as u64, (q - 1) * q.pow(m as u32));
            let (mem, _) = pda.loads();
            assert_eq!(mem, Ratio::new(1, q));
        }
    }

    #[test]
    fn partition_load_dominates_mn_at_equal_point() {
        // q=2, m=2: K=6, memory 1/2. MN at the same point is (6, t=3).
        let part = partition_pda(2, 2).unwrap();
        let mn = mn_pda(6, 3).unwrap();
        assert_eq!(part.loads().0, mn.loads().0);
        assert!(part.loads().1 >= mn.loads().1);
    }

    #[test]
    fn text_roundtrip() {
        let pda = mn_pda(5, 2).unwrap();
        let parsed = Pda::from_text(&pda.to_text()).unwrap();
        assert_eq!(parsed, pda);
        assert!(Pda::from_text("PDA 1 1 1\n*\n").is_err());
        assert!(Pda::from_text("PDA 2 2 1 1\n* 1\n* 1\n").is_err());
    }

    #[test]
    fn param_errors() {
        assert!(mn_pda(4, 0).is_err());
        assert!(mn_pda(4, 5).is_err());
        assert!(partition_pda(1, 1).is_err());
        assert!(partition_pda(2, 0).is_err());
    }
}
