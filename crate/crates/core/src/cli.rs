//! Command-line interface: construct, verify, simulate, audit, compare,
//! demo. Every command prints a `hpda-lab format v1` header line; data
//! files use the array text formats and the comparison command writes CSV.
//!
//! Exit codes: 0 success, 1 verification violation or a nonzero
//! secure-mode audit, 2 parameter/precondition failure, 3 I/O failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::analysis::{
    self, grouping_perf, hybrid_perf, rational_str, sweep_compare, sweep_csv, t_for_m1_ratio,
    FamilyParams,
};
use crate::hpda::{self, GroupingParams, Hpda};
use crate::pda::{self, mn_pda, partition_pda, Pda};
use crate::scheme::{place, DemandMatrix, Delivery, Library, Mode, Randomness, SchemeInstance};
use crate::sim::{
    audit::{mi_audit, AuditSpec, AuditTarget, DemandModel, DEFAULT_BUDGET},
    measure_loads, random_full_rank_demand, run_session, subrng,
};

pub const FORMAT_HEADER: &str = "hpda-lab format v1";

const EXIT_OK: i32 = 0;
const EXIT_VIOLATION: i32 = 1;
const EXIT_PARAM: i32 = 2;
const EXIT_IO: i32 = 3;

#[derive(Debug)]
enum CliError {
    /// Verification failed or a secure audit leaked: exit 1.
    Finding(String),
    /// Bad parameters or preconditions: exit 2.
    Param(String),
    /// Filesystem trouble: exit 3.
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Finding(_) => EXIT_VIOLATION,
            CliError::Param(_) => EXIT_PARAM,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Finding(m) | CliError::Param(m) | CliError::Io(m) => m,
        }
    }
}

macro_rules! param_from {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Param(e.to_string())
            }
        })*
    };
}

param_from!(
    pda::PdaError,
    hpda::HpdaError,
    crate::scheme::SchemeError,
    crate::analysis::AnalysisError,
    crate::sim::SimError,
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hpda-lab",
    about = "Hierarchical placement delivery arrays: construction, verification, simulation, audits, comparisons"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a two-layer array and write its text form.
    Construct(ConstructArgs),
    /// Check a PDA or HPDA file against its defining conditions.
    Verify { path: PathBuf },
    /// Run one delivery session on an HPDA file and measure the loads.
    Simulate(SimulateArgs),
    /// Exhaustive mutual-information audit on a tiny HPDA instance.
    Audit(AuditArgs),
    /// Closed-form comparison sweep, CSV output.
    Compare(CompareArgs),
    /// The 2x2 walkthrough end to end, plain and secure-private.
    Demo {
        /// Session seed (no implicit entropy anywhere).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct ConstructArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Mirror count (grouping).
    #[arg(long)]
    k1: Option<u64>,
    /// Users per mirror (grouping).
    #[arg(long)]
    k2: Option<u64>,
    /// Cache parameter (grouping).
    #[arg(long)]
    t: Option<u64>,
    /// Outer array, e.g. mn:2,1 or partition:2,2 (hybrid).
    #[arg(long)]
    outer: Option<String>,
    /// Inner array (hybrid).
    #[arg(long)]
    inner: Option<String>,
    /// Library size, for printing the secure-private memory ratios.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    Grouping,
    Hybrid,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Plain,
    Sp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Plain => Mode::Plain,
            ModeArg::Sp => Mode::SecurePrivate,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DeliveryArg {
    Assisted,
    Blind,
}

impl From<DeliveryArg> for Delivery {
    fn from(d: DeliveryArg) -> Delivery {
        match d {
            DeliveryArg::Assisted => Delivery::MirrorAssisted,
            DeliveryArg::Blind => Delivery::MirrorBlind,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DemandArg {
    /// Distinct unit vectors (worst case).
    Units,
    /// Sums of adjacent file pairs.
    Pairs,
    /// Uniform full-rank matrix.
    Random,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    path: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    q: u64,
    /// File length in symbols; must be a multiple of F.
    #[arg(long)]
    b: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = DeliveryArg::Assisted)]
    delivery: DeliveryArg,
    #[arg(long, value_enum, default_value_t = DemandArg::Units)]
    demand: DemandArg,
    #[arg(long)]
    seed: u64,
    /// Also print the transcript log.
    #[arg(long)]
    transcript: bool,
}

#[derive(Args, Debug)]
struct AuditArgs {
    path: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    q: u64,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Sp)]
    mode: ModeArg,
    /// Colluding mirror set, 1-based, comma-separated.
    #[arg(long, default_value = "1")]
    t1: String,
    /// Colluding per-mirror user set, 1-based, comma-separated.
    #[arg(long, default_value = "1")]
    t2: String,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    k1: u64,
    #[arg(long)]
    k2: u64,
    #[arg(long)]
    n: u64,
    /// Mirror memory-ratio grid, e.g. 0.2,0.3,0.4.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    tmin: Option<u64>,
    #[arg(long)]
    tmax: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse a family spec like `mn:4,2` or `partition:2,2` and build it.
fn parse_pda_spec(spec: &str) -> Result<Pda, CliError> {
    let (family, params) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Param(format!("bad array spec {spec:?}, want family:a,b")))?;
    let nums: Vec<u64> = params
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Param(format!("bad number in array spec {spec:?}")))
        })
        .collect::<Result<_, _>>()?;
    if nums.len() != 2 {
        return Err(CliError::Param(format!(
            "array spec {spec:?} needs exactly two parameters"
        )));
    }
    match family {
        "mn" => Ok(mn_pda(nums[0], nums[1])?),
        "partition" => Ok(partition_pda(nums[0], nums[1])?),
        other => Err(CliError::Param(format!("unknown array family {other:?}"))),
    }
}

fn parse_ratio(s: &str) -> Result<BigRational, CliError> {
    let bad = || CliError::Param(format!("bad ratio {s:?}"));
    if let Some((num, den)) = s.split_once('/') {
        let n = BigInt::from_str(num.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(den.trim()).map_err(|_| bad())?;
        if d == BigInt::from(0) {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let int: BigInt = if int.is_empty() {
            BigInt::from(0)
        } else {
            BigInt::from_str(int).map_err(|_| bad())?
        };
        let frac = BigInt::from_str(frac).map_err(|_| bad())?;
        return Ok(BigRational::new(int * &scale + frac, scale));
    }
    Ok(BigRational::from_integer(
        BigInt::from_str(s.trim()).map_err(|_| bad())?,
    ))
}

fn parse_index_set(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|x| {
            let v = x
                .trim()
                .parse::<usize>()
                .map_err(|_| CliError::Param(format!("bad index {x:?}")))?;
            if v == 0 {
                return Err(CliError::Param("indices are 1-based".into()));
            }
            Ok(v - 1)
        })
        .collect()
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(CliError::from)
}

fn perf_lines(out: &mut String, rec: &analysis::PerfRecord) {
    let f = rec
        .f
        .as_ref()
        .map(|v| v.to_string())
        .unwrap_or_else(|| "NA".into());
    let mode = match rec.mode {
        Mode::Plain => "plain",
        Mode::SecurePrivate => "secure-private",
    };
    let _ = writeln!(
        out,
        "predicted ({mode}): M1/N={} M2/N={} F={f} R1={} R2={}",
        rational_str(&rec.m1_ratio),
        rational_str(&rec.m2_ratio),
        rational_str(&rec.r1),
        rational_str(&rec.r2),
    );
}

fn cmd_construct(args: &ConstructArgs) -> Result<String, CliError> {
    let mut out = String::new();
    let (hpda, perf_plain, perf_sp): (Hpda, _, _) = match args.method {
        Method::Grouping => {
            let (k1, k2, t) = match (args.k1, args.k2, args.t) {
                (Some(k1), Some(k2), Some(t)) => (k1, k2, t),
                _ => return Err(CliError::Param("grouping needs --k1, --k2 and --t".into())),
            };
            let h = hpda::grouping_hpda(GroupingParams::new(k1, k2, t)?)?;
            let plain = args
                .n
                .map(|n| grouping_perf(k1, k2, t, n, Mode::Plain))
                .transpose()?;
            let sp = args
                .n
                .map(|n| grouping_perf(k1, k2, t, n, Mode::SecurePrivate))
                .transpose()?;
            (h, plain, sp)
        }
        Method::Hybrid => {
            let (outer, inner) = match (&args.outer, &args.inner) {
                (Some(o), Some(i)) => (parse_pda_spec(o)?, parse_pda_spec(i)?),
                _ => return Err(CliError::Param("hybrid needs --outer and --inner".into())),
            };
            let h = hpda::hybrid_hpda(&outer, &inner)?;
            let op = FamilyParams::from_verified(outer.params(), args.outer.as_ref().unwrap());
            let ip = FamilyParams::from_verified(inner.params(), args.inner.as_ref().unwrap());
            let plain = args
                .n
                .map(|n| hybrid_perf(&op, &ip, n, Mode::Plain))
                .transpose()?;
            let sp = args
                .n
                .map(|n| hybrid_perf(&op, &ip, n, Mode::SecurePrivate))
                .transpose()?;
            (h, plain, sp)
        }
    };
    std::fs::write(&args.out, hpda.to_text())?;
    let p = hpda.params();
    let st = hpda.stats();
    let _ = writeln!(
        out,
        "wrote {} (K1={} K2={} F={} Z1={} Z2={})",
        args.out.display(),
        p.k1,
        p.k2,
        p.f,
        p.z1,
        p.z2
    );
    let _ = writeln!(
        out,
        "stats: |SM|={} |Sk|={:?} |SM^Sk|={:?} |USk|={}",
        st.s_m, st.s_k, st.s_m_inter_k, st.union_s_k
    );
    if let Some(rec) = perf_plain {
        perf_lines(&mut out, &rec);
    }
    if let Some(rec) = perf_sp {
        perf_lines(&mut out, &rec);
    }
    Ok(out)
}

fn cmd_verify(path: &Path) -> Result<String, CliError> {
    let text = read_to_string(path)?;
    let header = text.lines().next().unwrap_or_default();
    let mut out = String::new();
    if header.starts_with("PDA") {
        let body: Vec<&str> = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .collect();
        let grid = pda::Grid::parse_rows(&body)?;
        match pda::verify_pda(&grid) {
            Ok(p) => {
                let _ = writeln!(out, "ok: PDA K={} F={} Z={} S={}", p.k, p.f, p.z, p.s);
                Ok(out)
            }
            Err(violations) => {
                for v in &violations {
                    let _ = writeln!(out, "violation: {v}");
                }
                print!("{out}");
                Err(CliError::Finding(format!(
                    "{} violation(s)",
                    violations.len()
                )))
            }
        }
    } else if header.starts_with("HPDA") {
        let raw = hpda::parse_raw(&text)?;
        match hpda::verify_hpda(&raw) {
            Ok(p) => {
                let _ = writeln!(
                    out,
                    "ok: HPDA K1={} K2={} F={} Z1={} Z2={}",
                    p.k1, p.k2, p.f, p.z1, p.z2
                );
                Ok(out)
            }
            Err(violations) => {
                for v in &violations {
                    let _ = writeln!(out, "violation: {v}");
                }
                print!("{out}");
                Err(CliError::Finding(format!(
                    "{} violation(s)",
                    violations.len()
                )))
            }
        }
    } else {
        Err(CliError::Param(format!(
            "unrecognized header {header:?}; expected PDA or HPDA"
        )))
    }
}

fn load_hpda(path: &Path) -> Result<Hpda, CliError> {
    let text = read_to_string(path)?;
    Ok(Hpda::from_text(&text)?)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let hpda = load_hpda(&args.path)?;
    let inst = SchemeInstance::new(
        hpda,
        args.n,
        args.q,
        args.b,
        args.mode.into(),
        args.delivery.into(),
    )?;
    let lib = Library::random(&inst, &mut subrng(args.seed, 0));
    let rand = match inst.mode() {
        Mode::SecurePrivate => Some(Randomness::generate(&inst, &mut subrng(args.seed, 1))?),
        Mode::Plain => None,
    };
    let demands = match args.demand {
        DemandArg::Units => DemandMatrix::distinct_units(&inst)?,
        DemandArg::Pairs => DemandMatrix::adjacent_pairs(&inst)?,
        DemandArg::Random => random_full_rank_demand(&inst, &mut subrng(args.seed, 2))?,
    };
    let transcript = run_session(&inst, &lib, rand.as_ref(), &demands)?;
    let (r1, r2) = measure_loads(&transcript);
    let decode_ok = transcript.decoded.iter().all(|d| d.ok);

    let caches = place(&inst, &lib, rand.as_ref())?;
    let denom = args.n * args.b;
    let m1 = num_rational::Ratio::new(caches.mirror_symbols(0, &inst), denom);
    let m2 = num_rational::Ratio::new(caches.user_symbols(0, 0, &inst), denom);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "R1={}/{} R2={}/{} decode={}",
        r1.numer(),
        r1.denom(),
        r2.numer(),
        r2.denom(),
        if decode_ok { "OK" } else { "FAIL" }
    );
    let _ = writeln!(
        out,
        "M1/N={}/{} M2/N={}/{} F={} seed={} digest={:016x}",
        m1.numer(),
        m1.denom(),
        m2.numer(),
        m2.denom(),
        inst.hpda().f(),
        args.seed,
        transcript.digest()
    );
    if args.transcript {
        out.push_str(&transcript.export());
    }
    if !decode_ok {
        print!("{out}");
        return Err(CliError::Finding("a user failed to decode".into()));
    }
    Ok(out)
}

fn cmd_audit(args: &AuditArgs) -> Result<String, CliError> {
    let hpda = load_hpda(&args.path)?;
    let f = hpda.f();
    let inst = SchemeInstance::new(
        hpda,
        args.n,
        args.q,
        f,
        args.mode.into(),
        Delivery::MirrorAssisted,
    )?;
    let target = match args.target.as_str() {
        "security1" => AuditTarget::Security1,
        "security2" => AuditTarget::Security2,
        "privacy1" => AuditTarget::Privacy1 {
            t1: parse_index_set(&args.t1)?,
        },
        "privacy2" => AuditTarget::Privacy2 {
            t1: parse_index_set(&args.t1)?,
            t2: parse_index_set(&args.t2)?,
        },
        other => {
            return Err(CliError::Param(format!(
                "unknown target {other:?}; want security1|security2|privacy1|privacy2"
            )))
        }
    };
    let secure = inst.mode() == Mode::SecurePrivate;
    let spec = AuditSpec {
        inst,
        demand_model: DemandModel::EnumerateSingleFile,
        target,
        budget: args.budget,
    };
    let rep = mi_audit(&spec).map_err(|e| CliError::Param(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "target: {}", rep.target);
    let _ = writeln!(out, "states: {}", rep.states);
    let _ = writeln!(
        out,
        "MI={}",
        if rep.exactly_zero {
            "0/1".to_string()
        } else {
            format!(">0 (~{:.6} log-q units)", rep.mi_logq)
        }
    );
    let _ = writeln!(
        out,
        "supports: secret={} obs={} joint={}",
        rep.secret_support, rep.obs_support, rep.joint_support
    );
    if secure && !rep.exactly_zero {
        print!("{out}");
        return Err(CliError::Finding(
            "secure-private audit measured nonzero information".into(),
        ));
    }
    Ok(out)
}

fn cmd_compare(args: &CompareArgs) -> Result<String, CliError> {
    let ts: Vec<u64> = match (&args.grid, args.tmin, args.tmax) {
        (Some(grid), None, None) => {
            let mut ts = Vec::new();
            for item in grid.split(',') {
                let target = parse_ratio(item.trim())?;
                ts.push(t_for_m1_ratio(args.k1, args.k2, &target));
            }
            ts
        }
        (None, Some(lo), Some(hi)) => {
            if lo > hi {
                return Err(CliError::Param("tmin exceeds tmax".into()));
            }
            (lo..=hi).collect()
        }
        _ => {
            return Err(CliError::Param(
                "give either --grid or both --tmin and --tmax".into(),
            ))
        }
    };
    let points = sweep_compare(args.k1, args.k2, args.n, &ts, args.mode.into())?;
    let csv = sweep_csv(args.k1, args.k2, args.n, &points);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            Ok(format!(
                "wrote {} ({} rows at {} points)\n",
                path.display(),
                points.iter().map(|p| p.rows.len()).sum::<usize>(),
                points.len()
            ))
        }
        None => Ok(csv),
    }
}

fn cmd_demo(seed: u64) -> Result<String, CliError> {
    let mut out = String::new();
    let h = hpda::grouping_hpda(GroupingParams::new(2, 2, 2)?)?;
    let _ = writeln!(out, "grouping construction at (K1,K2,t) = (2,2,2):\n");
    out.push_str(&h.to_text());
    let _ = writeln!(out);
    for mode in [Mode::Plain, Mode::SecurePrivate] {
        let inst = SchemeInstance::new(h.clone(), 24, 2, 6, mode, Delivery::MirrorAssisted)?;
        let lib = Library::random(&inst, &mut subrng(seed, 0));
        let rand = match mode {
            Mode::SecurePrivate => Some(Randomness::generate(&inst, &mut subrng(seed, 1))?),
            Mode::Plain => None,
        };
        let demands = DemandMatrix::adjacent_pairs(&inst)?;
        let transcript = run_session(&inst, &lib, rand.as_ref(), &demands)?;
        let (r1, r2) = measure_loads(&transcript);
        let caches = place(&inst, &lib, rand.as_ref())?;
        let m1 = num_rational::Ratio::new(caches.mirror_symbols(0, &inst), 24 * 6);
        let m2 = num_rational::Ratio::new(caches.user_symbols(0, 0, &inst), 24 * 6);
        let label = match mode {
            Mode::Plain => "plain",
            Mode::SecurePrivate => "secure-private",
        };
        let _ = writeln!(
            out,
            "{label}: every user requests a two-file sum over GF(2); N=24, B=6"
        );
        let _ = writeln!(
            out,
            "  R1={}/{} R2={}/{} M1/N={}/{} M2/N={}/{} decode={}",
            r1.numer(),
            r1.denom(),
            r2.numer(),
            r2.denom(),
            m1.numer(),
            m1.denom(),
            m2.numer(),
            m2.denom(),
            if transcript.decoded.iter().all(|d| d.ok) {
                "OK"
            } else {
                "FAIL"
            }
        );
    }
    let _ = writeln!(out, "\nclosed forms at N=24:");
    perf_lines(&mut out, &grouping_perf(2, 2, 2, 24, Mode::Plain)?);
    perf_lines(&mut out, &grouping_perf(2, 2, 2, 24, Mode::SecurePrivate)?);
    let bound = analysis::lower_bound_r1(2, 2, 2)?;
    let _ = writeln!(
        out,
        "first-layer converse bound at t=2: {} (met with equality)",
        rational_str(&bound)
    );
    Ok(out)
}

/// Run the parsed command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { EXIT_OK } else { EXIT_PARAM };
        }
    };
    println!("{FORMAT_HEADER}");
    let result = match &cli.command {
        Command::Construct(args) => cmd_construct(args),
        Command::Verify { path } => cmd_verify(path),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Demo { seed } => cmd_demo(*seed),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

/// Decimal rendering helper for tests and bindings.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.numer()
        .to_f64()
        .and_then(|n| r.denom().to_f64().map(|d| n / d))
        .unwrap_or(f64::NAN)
}
