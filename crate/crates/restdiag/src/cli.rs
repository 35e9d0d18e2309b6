//! Command-line front end: JSON in, JSON out.
//!
//! Exit codes: 0 on success, 2 when a mathematical precondition fails (the
//! report names it), 1 on parse or configuration errors.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::constructions::{self, build_amc_counterexample, build_nonlinear_witness, build_span_witness};
use crate::corpus;
use crate::error::Error;
use crate::linalg::{c, CMat};
use crate::op_core::{op_in_ideal, singular_values, DiagonalizableOperator, IdentityDecomposition, Projection, TruncOperator};
use crate::permutations::{self, IndexPermutation, PartitionOfIndices};
use crate::projections::{ess_codim_with, is_fredholm_pair_with};
use crate::restdiag::{self as rd, conditions_ladder};
use crate::seq_ideal::{am_closure_member, in_ideal, IdealTag, SeqProfile};
use crate::tolerances::ToleranceConfig;

pub const SCHEMA: &str = "restdiag/1";
pub const SEED_ENV: &str = "RESTDIAG_SEED";

#[derive(Debug, Parser)]
#[command(name = "restdiag", version, about = "Restricted diagonalization workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Input JSON file (`-` for stdin).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// JSON config file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// finite-rank | schatten:<p> | compact
    #[arg(long, global = true)]
    pub ideal: Option<String>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,
    #[arg(long, global = true)]
    pub tol_gap_lo: Option<f64>,
    #[arg(long, global = true)]
    pub tol_gap_hi: Option<f64>,
    #[arg(long, global = true)]
    pub tol_residual: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Ideal membership of a profile or an operator.
    Membership,
    /// Essential codimension of a projection pair.
    EssCodim,
    /// Series conditions for two families.
    VerifyConditions,
    /// Assemble a certified diagonalizing unitary.
    Diagonalize,
    /// Conditions induced by a given diagonalizing unitary.
    VerifyReverse,
    /// Unitary conjugating one decomposition of the identity onto another.
    ConjugateDecomp,
    /// Equivalence of two orthonormal bases.
    BasisEquiv,
    /// Generate and verify a counterexample construction.
    Witness {
        #[command(subcommand)]
        kind: WitnessKind,
    },
    /// Finite permutation with the same block images.
    PermAlign {
        /// Largest mismatch set accepted.
        #[arg(long, default_value_t = permutations::DEFAULT_MISMATCH_BOUND)]
        bound: usize,
    },
    /// Finite permutation carrying one diagonal operator onto another.
    OrbitDiag,
    /// Write a seeded input file for another subcommand.
    Fixture {
        #[arg(value_enum)]
        kind: FixtureKind,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum WitnessKind {
    Nonlinear {
        #[arg(long, default_value_t = 8)]
        blocks: usize,
    },
    Span,
    Amc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    RoundTrip,
    FiniteTrace,
    Permutation,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Membership => "membership",
            Command::EssCodim => "ess-codim",
            Command::VerifyConditions => "verify-conditions",
            Command::Diagonalize => "diagonalize",
            Command::VerifyReverse => "verify-reverse",
            Command::ConjugateDecomp => "conjugate-decomp",
            Command::BasisEquiv => "basis-equiv",
            Command::Witness { kind } => match kind {
                WitnessKind::Nonlinear { .. } => "witness-nonlinear",
                WitnessKind::Span => "witness-span",
                WitnessKind::Amc => "witness-amc",
            },
            Command::PermAlign { .. } => "perm-align",
            Command::OrbitDiag => "orbit-diag",
            Command::Fixture { .. } => "fixture",
        }
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub ideal: IdealTag,
    pub dim: usize,
    pub seed: u64,
    pub tolerances: ToleranceConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    ideal: Option<String>,
    dim: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    tolerances: FileTolerances,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTolerances {
    rank_eps: Option<f64>,
    gap_lo: Option<f64>,
    gap_hi: Option<f64>,
    residual_tol: Option<f64>,
}

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum RunError {
    /// Exit 1: unreadable input, bad JSON, bad flags.
    Config(String),
    /// Exit 2: a mathematical precondition failed.
    Precondition(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Precondition(_) => 2,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        if e.is_precondition() {
            RunError::Precondition(e)
        } else {
            RunError::Config(e.to_string())
        }
    }
}

pub const DEFAULT_DIM: usize = 32;

impl RunConfig {
    /// Flags over config file over `RESTDIAG_SEED` over defaults.
    pub fn resolve(cli: Cli, env_seed: Option<String>) -> Result<Self, RunError> {
        let file: FileConfig = match &cli.opts.config {
            Some(p) => parse_json(&read_source(p)?, p)?,
            None => FileConfig::default(),
        };
        let o = cli.opts;
        let ideal = match o.ideal.or(file.ideal) {
            Some(s) => s.parse::<IdealTag>().map_err(|e| RunError::Config(e.to_string()))?,
            None => IdealTag::Compact,
        };
        let env_seed = match env_seed {
            Some(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| RunError::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?,
            ),
            None => None,
        };
        let d = ToleranceConfig::default();
        let tolerances = ToleranceConfig {
            rank_eps: o.tol_rank.or(file.tolerances.rank_eps).unwrap_or(d.rank_eps),
            gap_lo: o.tol_gap_lo.or(file.tolerances.gap_lo).unwrap_or(d.gap_lo),
            gap_hi: o.tol_gap_hi.or(file.tolerances.gap_hi).unwrap_or(d.gap_hi),
            residual_tol: o.tol_residual.or(file.tolerances.residual_tol).unwrap_or(d.residual_tol),
        };
        tolerances.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(RunConfig {
            command: cli.command,
            input: o.input,
            output: o.output,
            ideal,
            dim: o.dim.or(file.dim).unwrap_or(DEFAULT_DIM),
            seed: o.seed.or(file.seed).or(env_seed).unwrap_or(0),
            tolerances,
        })
    }
}

fn read_source(p: &Path) -> Result<String, RunError> {
    if p == Path::new("-") {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| RunError::Config(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))
}

fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T, RunError> {
    let mut v: Value = serde_json::from_str(text)
        .map_err(|e| RunError::Config(format!("{}: {e}", origin.display())))?;
    if let Value::Object(m) = &mut v {
        match m.remove("schema") {
            None => {}
            Some(Value::String(s)) if s == SCHEMA => {}
            Some(other) => {
                return Err(RunError::Config(format!(
                    "{}: schema {other} is not \"{SCHEMA}\"",
                    origin.display()
                )))
            }
        }
    }
    serde_json::from_value(v).map_err(|e| RunError::Config(format!("{}: {e}", origin.display())))
}

fn input<T: DeserializeOwned>(cfg: &RunConfig) -> Result<T, RunError> {
    let p = cfg
        .input
        .as_deref()
        .ok_or_else(|| RunError::Config(format!("{} needs --input", cfg.command.name())))?;
    parse_json(&read_source(p)?, p)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MembershipInput {
    profile: Option<SeqProfile>,
    operator: Option<TruncOperator>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairInput {
    pub p: Projection,
    pub q: Projection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamiliesInput {
    pub ps: Vec<Projection>,
    pub es: Vec<Projection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalizeInput {
    pub operator: DiagonalizableOperator,
    /// Diagonal family; the dominant coordinate family when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub es: Option<Vec<Projection>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReverseInput {
    operator: DiagonalizableOperator,
    unitary: TruncOperator,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecompInput {
    ps: IdentityDecomposition,
    es: IdentityDecomposition,
}

/// Vectors as lists of `[re, im]` pairs.
type VectorList = Vec<Vec<[f64; 2]>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisInput {
    e: VectorList,
    f: VectorList,
    tail_gap: SeqProfile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermInput {
    pub tau: IndexPermutation,
    pub partition: PartitionOfIndices,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OrbitInput {
    b: DiagonalizableOperator,
    b_prime: DiagonalizableOperator,
}

fn columns(v: &VectorList) -> Result<CMat, RunError> {
    let k = v.len();
    let n = v.first().map_or(0, Vec::len);
    if v.iter().any(|x| x.len() != n) {
        return Err(RunError::Config("basis vectors have different lengths".into()));
    }
    Ok(CMat::from_fn(n, k, |i, j| c(v[j][i][0], v[j][i][1])))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

/// Runs one command and returns the report payload.
pub fn execute(cfg: &RunConfig) -> Result<Value, RunError> {
    let j = cfg.ideal;
    let tol = &cfg.tolerances;
    let out = match &cfg.command {
        Command::Membership => {
            let inp: MembershipInput = input(cfg)?;
            let (profile, member) = match (inp.profile, inp.operator) {
                (Some(p), None) => {
                    let m = in_ideal(&p, j);
                    (p, m)
                }
                (None, Some(op)) => (singular_values(&op)?, op_in_ideal(&op, j)),
                _ => return Err(RunError::Config("give exactly one of profile, operator".into())),
            };
            json!({
                "ideal": j.to_string(),
                "member": member,
                "am_closure_member": am_closure_member(&profile, j),
                "singular_values": profile,
            })
        }
        Command::EssCodim => {
            let inp: PairInput = input(cfg)?;
            if !is_fredholm_pair_with(&inp.p, &inp.q, tol)? {
                return Err(Error::NotFredholmPair.into());
            }
            to_value(&ess_codim_with(&inp.p, &inp.q, tol)?)
        }
        Command::VerifyConditions => {
            let inp: FamiliesInput = input(cfg)?;
            let r = rd::verify_conditions(&inp.ps, &inp.es, j)?;
            let mut v = to_value(&r);
            v["passes"] = json!(r.passes());
            v
        }
        Command::Diagonalize => {
            let inp: DiagonalizeInput = input(cfg)?;
            let es = inp
                .es
                .unwrap_or_else(|| rd::dominant_diagonal_family(inp.operator.spectral()));
            to_value(&rd::assemble_unitary_with(&inp.operator, &es, j, tol)?)
        }
        Command::VerifyReverse => {
            let inp: ReverseInput = input(cfg)?;
            let r = rd::verify_reverse_with(&inp.operator, &inp.unitary, j, tol)?;
            let mut v = to_value(&r);
            v["passes"] = json!(r.passes());
            v
        }
        Command::ConjugateDecomp => {
            let inp: DecompInput = input(cfg)?;
            json!({ "unitary": rd::conjugate_decompositions_with(&inp.ps, &inp.es, j, tol)? })
        }
        Command::BasisEquiv => {
            let inp: BasisInput = input(cfg)?;
            let (e, f) = (columns(&inp.e)?, columns(&inp.f)?);
            json!({
                "ideal": j.to_string(),
                "equivalent": rd::are_j_equivalent(&e, &f, &inp.tail_gap, j)?,
                "l2_summable": rd::gap_l2_summable(&inp.tail_gap),
            })
        }
        Command::Witness { kind } => witness(kind, cfg)?,
        Command::PermAlign { bound } => {
            let inp: PermInput = input(cfg)?;
            let t = permutations::align_finite_traced(&inp.tau, &inp.partition, *bound)?;
            json!({
                "mismatch": permutations::mismatch_set(&inp.tau, &inp.partition),
                "sigma": t.sigma,
                "support": t.sigma.support(),
                "mismatch_sizes": t.mismatch_sizes,
                "block_images_match": permutations::same_block_images(&t.sigma, &inp.tau, &inp.partition),
            })
        }
        Command::OrbitDiag => {
            let inp: OrbitInput = input(cfg)?;
            json!({ "sigma": permutations::orbit_diag_equal(&inp.b, &inp.b_prime, j)? })
        }
        Command::Fixture { kind } => fixture(*kind, cfg)?,
    };
    Ok(out)
}

fn witness(kind: &WitnessKind, cfg: &RunConfig) -> Result<Value, RunError> {
    let j = cfg.ideal;
    Ok(match kind {
        WitnessKind::Nonlinear { blocks } => {
            let w = build_nonlinear_witness(j, *blocks, cfg.dim.max(2 * blocks))?;
            let report = w.verify(j)?;
            json!({ "witness": w, "report": report })
        }
        WitnessKind::Span => {
            let w = build_span_witness(j, cfg.dim)?;
            let report = w.verify(j, cfg.dim)?;
            json!({ "witness": w, "report": report })
        }
        WitnessKind::Amc => {
            let dims = [cfg.dim, 2 * cfg.dim, 4 * cfg.dim];
            let coeffs = constructions::harmonic_coeffs();
            let ladder = conditions_ladder(&dims, &cfg.tolerances, |d| {
                let w = build_amc_counterexample(&coeffs, &constructions::default_lambdas(d), d)?;
                Ok((w.a.spectral().to_vec(), w.diagonal_family()))
            })?;
            let w = build_amc_counterexample(&coeffs, &constructions::default_lambdas(cfg.dim), cfg.dim)?;
            json!({
                "dim": cfg.dim,
                "coefficients": w.f,
                "diagonalizer": w.diagonalizer(),
                "residual": w.a.conjugation_residual(&w.diagonalizer()),
                "forced_threshold": w.forced_threshold(),
                "forced_distance": w.forced_distance(),
                "pinched_x_profile": w.pinched_x_profile()?,
                "ladder": ladder,
            })
        }
    })
}

/// Parts for the round-trip fixture.
pub const FIXTURE_PARTS: usize = 5;

fn fixture(kind: FixtureKind, cfg: &RunConfig) -> Result<Value, RunError> {
    let mut rng = corpus::rng(cfg.seed);
    let n = cfg.dim;
    Ok(match kind {
        FixtureKind::RoundTrip => {
            if n < FIXTURE_PARTS {
                return Err(RunError::Config(format!("round-trip fixture needs dim >= {FIXTURE_PARTS}")));
            }
            let rt = corpus::round_trip(&mut rng, n, FIXTURE_PARTS, 0.5)?;
            to_value(&DiagonalizeInput {
                operator: rt.a,
                es: Some(rt.es),
            })
        }
        FixtureKind::FiniteTrace => {
            if n < 4 {
                return Err(RunError::Config("finite-trace fixture needs dim >= 4".into()));
            }
            json!({
                "p": corpus::random_projection(&mut rng, n, 3, false),
                "q": corpus::random_projection(&mut rng, n, 1, false),
            })
        }
        FixtureKind::Permutation => {
            let blocks = 4.min(n.max(1));
            let (tau, partition) = corpus::permutation_instance(&mut rng, n, blocks, 12);
            to_value(&PermInput { tau, partition })
        }
    })
}

/// Wraps a payload in the versioned envelope. Fixtures are inputs for other
/// subcommands and carry only the schema tag.
pub fn envelope(command: &str, payload: Value) -> Value {
    let mut m = Map::new();
    m.insert("schema".into(), json!(SCHEMA));
    if command != "fixture" {
        m.insert("command".into(), json!(command));
    }
    match payload {
        Value::Object(p) => m.extend(p),
        other => {
            m.insert("result".into(), other);
        }
    }
    Value::Object(m)
}

fn error_report(command: &str, e: &Error) -> Value {
    let mut err = json!({ "message": e.to_string(), "condition": condition_name(e.root()) });
    if let Error::Stage { stage, .. } = e {
        err["stage"] = json!(stage);
    }
    envelope(command, json!({ "error": err }))
}

/// Stable identifier of an error variant.
fn condition_name(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::DimMismatch(..) => "dim_mismatch",
        Error::NonCompactTail => "non_compact_tail",
        Error::Unrepresentable(_) => "unrepresentable",
        Error::NotProjection(_) => "not_projection",
        Error::NotDecomposition(_) => "not_decomposition",
        Error::NotFredholmPair => "not_fredholm_pair",
        Error::TailMismatch => "tail_mismatch",
        Error::PreconditionFailed(_) => "precondition_failed",
        Error::KernelMismatch => "kernel_mismatch",
        Error::TotalCodimNonzero(_) => "total_codim_nonzero",
        Error::NotCompactDefect => "not_compact_defect",
        Error::OverlapNotFiniteRank(..) => "overlap_not_finite_rank",
        Error::NoValidIndex => "no_valid_index",
        Error::NotDiagonalizing(_) => "not_diagonalizing",
        Error::CodimNonzero(_) => "codim_nonzero",
        Error::ConditionsFail(_) => "conditions_fail",
        Error::NotOrthonormal(_) => "not_orthonormal",
        Error::OutOfRange(_) => "out_of_range",
        Error::DistinctnessUnreachable(_) => "distinctness_unreachable",
        Error::SquareEqualsIdeal => "square_equals_ideal",
        Error::ZeroCoefficient(_) => "zero_coefficient",
        Error::UnboundedMismatch(..) => "unbounded_mismatch",
        Error::SupportExceedsDim(..) => "support_exceeds_dim",
        Error::SpectrumMismatch(_) => "spectrum_mismatch",
        Error::Stage { .. } => "stage",
    }
}

fn emit(cfg_output: Option<&Path>, v: &Value) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(v).expect("reports serialize");
    text.push('\n');
    match cfg_output {
        Some(p) => fs::write(p, text).map_err(|e| RunError::Config(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| RunError::Config(format!("stdout: {e}"))),
    }
}

/// Runs a resolved config, writing the report; returns the exit status.
pub fn run(cfg: &RunConfig) -> i32 {
    let name = cfg.command.name();
    let result = execute(cfg).and_then(|v| emit(cfg.output.as_deref(), &envelope(name, v)));
    match result {
        Ok(()) => 0,
        Err(RunError::Precondition(e)) => {
            eprintln!("restdiag {name}: {e}");
            if let Err(RunError::Config(msg)) = emit(cfg.output.as_deref(), &error_report(name, &e)) {
                eprintln!("restdiag {name}: {msg}");
            }
            2
        }
        Err(RunError::Config(msg)) => {
            eprintln!("restdiag {name}: {msg}");
            1
        }
    }
}

/// Entry point for the binary: parses `args` and runs.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match RunConfig::resolve(cli, std::env::var(SEED_ENV).ok()) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            match &e {
                RunError::Config(msg) => eprintln!("restdiag: {msg}"),
                RunError::Precondition(err) => eprintln!("restdiag: {err}"),
            }
            e.exit_code()
        }
    }
}
