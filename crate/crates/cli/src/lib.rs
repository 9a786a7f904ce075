//! Command-line front end for the `entorder` library.
//!
//! Every command produces a [`Report`]: a deterministic JSON document with the
//! command echo, its inputs, structured results, the seed and the tool version.
//! Parties are numbered from 1 in all output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use entorder::catalog;
use entorder::invariants::{self, tensor_rank};
use entorder::protocols::{self, ExtractBudget, TraceMode};
use entorder::state::StateFile;
use entorder::structure::{self, ghz_witness, independence_defect, independence_graph, partition};
use entorder::verdict::{self, CompareOptions, Witness};
use entorder::{tol, Answer, InvariantVector, ProtocolTrace, PureState, RankStatus, Regime, SearchBudget, Verdict, C64};

pub const TOOL_NAME: &str = "entorder";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure classes with their exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("protocol failure: {0}")]
    Protocol(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<entorder::Error> for CliError {
    fn from(e: entorder::Error) -> Self {
        use entorder::Error as E;
        match e {
            E::ProtocolFailure(_) | E::ImpossibleBranch { .. } | E::Inconsistency(_) | E::NonUnitaryCorrection(_) | E::IncompleteMeasurement(_) => {
                CliError::Protocol(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Full report with command echo, inputs, seed and version.
    Report,
    /// The results object alone.
    Raw,
}

#[derive(Debug, Parser)]
#[command(name = "entorder", version, about = "Convertibility of multipartite pure states")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "report")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dimensions, invariants, partition and independence table of a state.
    Analyze(SourceArgs),
    /// Convertibility verdicts between two states.
    Compare(CompareArgs),
    /// Runs a protocol and reports its trace.
    Simulate(SimulateArgs),
    /// Independence graph, optionally exported as DOT.
    Graph(GraphArgs),
    /// Tensor rank bounds.
    Rank(RankArgs),
    /// Lists the built-in states.
    Catalog,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// State file.
    #[arg(required_unless_present = "catalog")]
    pub file: Option<PathBuf>,
    /// Built-in state name.
    #[arg(long, conflicts_with = "file")]
    pub catalog: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// State files; combined in command-line order with `--catalog`.
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub catalog: Vec<String>,
    /// locc, slocc, mclocc, mcslocc or all.
    #[arg(long, default_value = "all")]
    pub regime: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    GhzMerge,
    GhzToRsep,
    Rus,
    Teleport,
    BellExtract,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub protocol: Protocol,
    /// Local dimension.
    #[arg(short = 'd')]
    pub d: Option<usize>,
    /// Parties of the first GHZ state.
    #[arg(long)]
    pub left: Option<usize>,
    /// Parties of the second GHZ state.
    #[arg(long)]
    pub right: Option<usize>,
    /// Parties of the target.
    #[arg(short = 'N')]
    pub n: Option<usize>,
    /// Comma-separated weights.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Target state file whose last party labels the terms.
    #[arg(long)]
    pub a_file: Option<PathBuf>,
    /// Source state file (rus, teleport resource)
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Source state from the catalog
    #[arg(long, conflicts_with = "src")]
    pub src_catalog: Option<String>,
    /// Target state file (rus)
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Target state from the catalog
    #[arg(long, conflicts_with = "target")]
    pub target_catalog: Option<String>,
    /// Monte Carlo trials for repeat-until-success
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Comma-separated real amplitudes of the teleported state.
    #[arg(long, value_delimiter = ',')]
    pub payload: Vec<f64>,
    /// Comma-separated pair of parties for Bell extraction.
    #[arg(long, value_delimiter = ',')]
    pub pair: Vec<usize>,
    /// Report every branch (default).
    #[arg(long, conflicts_with = "sample")]
    pub exhaustive: bool,
    /// Report one branch drawn with the seed.
    #[arg(long)]
    pub sample: bool,
    /// Include post-measurement states in the trace.
    #[arg(long)]
    pub dump_states: bool,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// DOT output path.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Budget {
    Low,
    Default,
    High,
}

impl Budget {
    pub fn search_budget(self, seed: u64) -> SearchBudget {
        match self {
            Budget::Low => SearchBudget::low(),
            Budget::Default => SearchBudget::default(),
            Budget::High => SearchBudget::high(),
        }
        .with_seed(seed)
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum, default_value = "default")]
    pub budget: Budget,
    /// Writes the decomposition, one product term per state record.
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
}

/// A state given on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    File(PathBuf),
    Catalog(String),
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::File(p) => p.display().to_string(),
            Source::Catalog(n) => format!("catalog:{n}"),
        }
    }

    pub fn load(&self) -> CliResult<PureState> {
        match self {
            Source::Catalog(name) => Ok(catalog::build(name)?),
            Source::File(path) => read_state(path),
        }
    }

    fn from_args(file: &Option<PathBuf>, catalog: &Option<String>) -> CliResult<Self> {
        match (file, catalog) {
            (Some(f), None) => Ok(Source::File(f.clone())),
            (None, Some(c)) => Ok(Source::Catalog(c.clone())),
            _ => Err(CliError::Input("give either a state file or --catalog".into())),
        }
    }
}

pub fn read_state(path: &Path) -> CliResult<PureState> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    PureState::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Structured output of one command.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: Vec<String>,
    pub inputs: Vec<String>,
    pub results: Value,
    pub seed: u64,
    pub tool: ToolInfo,
    /// Exit status implied by the results.
    #[serde(skip)]
    pub success: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Report {
    fn new(command: &str, inputs: Vec<String>, results: Value, seed: u64) -> Self {
        Self {
            command: vec![command.to_string()],
            inputs,
            results,
            seed,
            tool: ToolInfo { name: TOOL_NAME, version: TOOL_VERSION },
            success: true,
        }
    }

    pub fn render(&self, format: Format) -> String {
        let v = match format {
            Format::Report => serde_json::to_value(self).expect("report serializes"),
            Format::Raw => self.results.clone(),
        };
        let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
        s.push('\n');
        s
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn blocks_one_based(p: &structure::Partition) -> Vec<Vec<usize>> {
    p.blocks.iter().map(|b| one_based(b)).collect()
}

fn rank_value(r: &RankStatus) -> Value {
    json!({
        "lower": r.lower,
        "upper": r.upper,
        "exact": r.exact,
        "value": r.exact_value(),
        "method": r.method_label(),
        "witness_available": r.witness.is_some(),
        "notes": r.notes,
    })
}

fn invariants_value(inv: &InvariantVector) -> Value {
    json!({ "tensor_rank": rank_value(&inv.rank), "local_ranks": inv.local_ranks })
}

/// Analysis of one state.
pub fn cmd_analyze(source: &Source, seed: u64) -> CliResult<Report> {
    let s = source.load()?;
    let inv = invariants::invariant_vector(&s, &SearchBudget::default().with_seed(seed));
    let part = partition(&s);
    let mut table = Vec::new();
    for i in 0..s.parties() {
        for j in i + 1..s.parties() {
            let defect = independence_defect(&s, i, j)?;
            table.push(json!({ "pair": [i + 1, j + 1], "independent": defect <= tol::INDEP, "defect": defect }));
        }
    }
    let ghz = match ghz_witness(&s, &inv) {
        Ok(w) => json!({ "present": w.is_some(), "decided": true }),
        Err(_) => json!({ "present": false, "decided": false }),
    };
    let results = json!({
        "dims": s.dims(),
        "parties": s.parties(),
        "norm": s.norm(),
        "invariants": invariants_value(&inv),
        "partition": blocks_one_based(&part),
        "partition_label": part.label(),
        "independence": table,
        "ghz_witness": ghz,
    });
    Ok(Report::new("analyze", vec![source.label()], results, seed))
}

/// Verdicts for one regime name (or `all`).
pub fn cmd_compare(src: &Source, dst: &Source, regime: &str, seed: u64) -> CliResult<Report> {
    let a = src.load()?;
    let b = dst.load()?;
    if a.parties() != b.parties() {
        return Err(CliError::Input(format!("party counts differ: {} vs {}", a.parties(), b.parties())));
    }
    let opts = CompareOptions { seed, budget: SearchBudget::default().with_seed(seed), ..CompareOptions::default() };
    let mut notes = Vec::new();
    let verdicts: Vec<Verdict> = if regime.eq_ignore_ascii_case("all") {
        verdict::hierarchy_check_with(&a, &b, &opts)?.verdicts().into_iter().cloned().collect()
    } else {
        let (r, aliased) = Regime::parse(regime)?;
        if aliased {
            notes.push("MCSLOCC coincides with MCLOCC; answered as MCLOCC".to_string());
        }
        vec![verdict::compare_with(&a, &b, r, &opts)?]
    };
    let (entries, witnesses) = verdict_values(&verdicts);
    let results = json!({ "verdicts": entries, "witnesses": witnesses, "notes": notes });
    Ok(Report::new("compare", vec![src.label(), dst.label()], results, seed))
}

/// Verdicts as report entries with witnesses moved to a side table.
pub fn verdict_values(verdicts: &[Verdict]) -> (Vec<Value>, Vec<Value>) {
    let mut entries = Vec::new();
    let mut witnesses = Vec::new();
    for v in verdicts {
        let witness_ref = v.witness.as_ref().map(|w| {
            let id = format!("w{}", witnesses.len() + 1);
            let body = match w {
                Witness::Operators(ops) => json!({ "id": id, "kind": "operators", "operators": to_value(ops) }),
                Witness::Trace(t) => json!({ "id": id, "kind": "trace", "trace": to_value(t.as_ref()) }),
            };
            witnesses.push(body);
            id
        });
        entries.push(json!({
            "regime": v.regime,
            "answer": v.answer,
            "reason": to_value(&v.reason),
            "details": v.details,
            "witness_ref": witness_ref,
        }));
    }
    (entries, witnesses)
}

/// Tensor rank with its method and an optional decomposition export.
pub fn cmd_rank(source: &Source, budget: Budget, seed: u64, witness_out: Option<&Path>) -> CliResult<Report> {
    let s = source.load()?;
    let status = tensor_rank(&s, &budget.search_budget(seed));
    if let Some(path) = witness_out {
        let dec = status.witness.as_ref().ok_or_else(|| CliError::Input("no decomposition available to export".into()))?;
        let files: Vec<StateFile> = dec.to_state_files()?;
        write_file(path, &serde_json::to_string_pretty(&files).expect("state files serialize"))?;
    }
    let mut results = rank_value(&status);
    results["budget"] = json!(format!("{budget:?}").to_lowercase());
    Ok(Report::new("rank", vec![source.label()], results, seed))
}

/// Independence graph with partition clusters.
pub fn cmd_graph(source: &Source, dot: Option<&Path>, seed: u64) -> CliResult<Report> {
    let s = source.load()?;
    let g = independence_graph(&s);
    let part = partition(&s);
    if let Some(path) = dot {
        write_file(path, &g.to_dot(&part))?;
    }
    let edges: Vec<[usize; 2]> = g.edges().into_iter().map(|(i, j)| [i + 1, j + 1]).collect();
    let adjacency: Vec<Vec<u8>> = g.adjacency.iter().map(|row| row.iter().map(|&x| x as u8).collect()).collect();
    let results = json!({
        "parties": s.parties(),
        "edges": edges,
        "adjacency": adjacency,
        "partition": blocks_one_based(&part),
        "dot": dot.map(|p| p.display().to_string()),
    });
    Ok(Report::new("graph", vec![source.label()], results, seed))
}

/// Built-in states with their expected invariants.
pub fn cmd_catalog(seed: u64) -> CliResult<Report> {
    let entries: Vec<Value> = catalog::entries()
        .into_iter()
        .map(|e| {
            let dims = catalog::build(&e.name).map(|s| s.dims().to_vec()).unwrap_or_default();
            let expected = e.expected.map(|x| {
                json!({
                    "tensor_rank": x.rank,
                    "local_ranks": x.local_ranks,
                    "partition": x.partition.iter().map(|b| one_based(b)).collect::<Vec<_>>(),
                })
            });
            json!({ "name": e.name, "description": e.description, "dims": dims, "expected": expected })
        })
        .collect();
    let results = json!({
        "entries": entries,
        "parametric": ["GHZ<d>", "GHZ<d>x<N>", "phi<d>_<j>_<N>"],
    });
    Ok(Report::new("catalog", vec![], results, seed))
}

fn parse_weights(p: &[f64]) -> CliResult<Vec<f64>> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(CliError::Input(format!("weights must be non-negative: {p:?}")));
    }
    Ok(p.to_vec())
}

/// Term vectors and weights of a reduced-separable target: contracting the
/// last party with `⟨i|` must leave a product vector for every `i`.
pub fn split_reduced_separable(target: &PureState, d: usize) -> CliResult<(Vec<f64>, Vec<Vec<Vec<C64>>>)> {
    let n = target.parties();
    if n < 2 || target.dims()[n - 1] != d {
        return Err(CliError::Input(format!("target must have at least two parties and last dimension {d}, got dims {:?}", target.dims())));
    }
    let t = target.normalized();
    let head: Vec<usize> = t.dims()[..n - 1].to_vec();
    let mut p = Vec::with_capacity(d);
    let mut a: Vec<Vec<Vec<C64>>> = vec![Vec::with_capacity(d); n - 1];
    for i in 0..d {
        let amps: Vec<C64> = t.amps().iter().skip(i).step_by(d).copied().collect();
        let weight: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        p.push(weight);
        if weight <= tol::ZERO {
            for (k, ak) in a.iter_mut().enumerate() {
                let mut e = vec![C64::new(0.0, 0.0); head[k]];
                e[0] = C64::new(1.0, 0.0);
                ak.push(e);
            }
            continue;
        }
        let term = PureState::new(head.clone(), amps)?;
        let mut vecs: Vec<Vec<C64>> = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let (u, _, _) = entorder::linalg::svd_sorted(&term.matricize(&[k])?);
            vecs.push(u.column(0).iter().copied().collect());
        }
        let product = PureState::product(&vecs)?;
        let overlap = product.inner(&term.normalized())?;
        if (overlap.norm() - 1.0).abs() > tol::FID {
            return Err(CliError::Input(format!("term {i} of the target is not a product vector (overlap {})", overlap.norm())));
        }
        let phase = overlap / overlap.norm();
        for z in vecs[0].iter_mut() {
            *z *= phase;
        }
        for (k, v) in vecs.into_iter().enumerate() {
            a[k].push(v);
        }
    }
    Ok((p, a))
}

/// Deterministic traces must succeed on every branch; post-selected ones
/// need a successful branch of positive probability.
fn trace_succeeded(trace: &ProtocolTrace) -> bool {
    match trace.mode {
        TraceMode::PostSelected => {
            trace.success_probability > tol::ZERO && trace.branches.iter().filter(|b| b.success).all(|b| b.overlap >= 1.0 - tol::FID)
        }
        _ => trace.deterministic_success(),
    }
}

fn trace_results(trace: &ProtocolTrace, sample: bool, seed: u64) -> CliResult<(Value, bool)> {
    let ok = trace_succeeded(trace);
    if sample {
        let t = trace.sampled(seed)?;
        let drawn = t.branches.iter().all(|b| b.success);
        Ok((json!({ "trace": to_value(&t), "success": ok, "sampled_branch_success": drawn }), ok))
    } else {
        Ok((json!({ "trace": to_value(trace), "success": ok }), ok))
    }
}

fn optional_source(file: &Option<PathBuf>, catalog: &Option<String>, what: &str) -> CliResult<Source> {
    Source::from_args(file, catalog).map_err(|_| CliError::Input(format!("{what}: give --{what} or --{what}-catalog")))
}

fn required<T: Copy>(x: Option<T>, flag: &str) -> CliResult<T> {
    x.ok_or_else(|| CliError::Input(format!("missing {flag}")))
}

/// Runs one protocol. The report's `success` reflects its declared
/// success condition.
pub fn cmd_simulate(args: &SimulateArgs, seed: u64) -> CliResult<Report> {
    let sample = args.sample;
    let mut inputs = Vec::new();
    let (mut results, success) = match args.protocol {
        Protocol::GhzMerge => {
            let d = required(args.d, "-d")?;
            let (m1, m2) = (required(args.left, "--left")?, required(args.right, "--right")?);
            let trace = protocols::ghz_merge(d, m1, m2)?;
            let trace = if args.dump_states { trace.with_states() } else { trace };
            let (mut r, ok) = trace_results(&trace, sample, seed)?;
            r["parameters"] = json!({ "d": d, "left": m1, "right": m2 });
            (r, ok)
        }
        Protocol::GhzToRsep => {
            let d = required(args.d, "-d")?;
            let n = required(args.n, "-N")?;
            let given = parse_weights(&args.p)?;
            let (p, a) = match &args.a_file {
                Some(path) => {
                    inputs.push(path.display().to_string());
                    let target = read_state(path)?;
                    if target.parties() != n {
                        return Err(CliError::Input(format!("a-file has {} parties, expected {n}", target.parties())));
                    }
                    let (p, a) = split_reduced_separable(&target, d)?;
                    if !given.is_empty() {
                        let total: f64 = given.iter().sum();
                        let mismatch = given.len() > d
                            || (0..d).any(|i| (given.get(i).copied().unwrap_or(0.0) / total - p[i]).abs() > 1e-9);
                        if mismatch {
                            return Err(CliError::Input(format!("--p {given:?} does not match the a-file term weights {p:?}")));
                        }
                    }
                    (p, a)
                }
                None => {
                    let p = if given.is_empty() { vec![1.0 / d as f64; d] } else { given };
                    let a = (0..n - 1)
                        .map(|_| {
                            (0..p.len())
                                .map(|i| {
                                    let mut e = vec![C64::new(0.0, 0.0); d];
                                    e[i % d] = C64::new(1.0, 0.0);
                                    e
                                })
                                .collect()
                        })
                        .collect();
                    (p, a)
                }
            };
            let trace = protocols::ghz_to_reduced_separable(d, n, &p, &a)?;
            let trace = if args.dump_states { trace.with_states() } else { trace };
            let (mut r, ok) = trace_results(&trace, sample, seed)?;
            r["parameters"] = json!({ "d": d, "N": n, "p": p });
            (r, ok)
        }
        Protocol::Rus => {
            let src = optional_source(&args.src, &args.src_catalog, "src")?;
            let dst = optional_source(&args.target, &args.target_catalog, "target")?;
            inputs.extend([src.label(), dst.label()]);
            let (a, b) = (src.load()?, dst.load()?);
            let opts = CompareOptions { seed, ..CompareOptions::default() };
            let v = verdict::compare_with(&a, &b, Regime::Slocc, &opts)?;
            let witness = match (&v.answer, &v.witness) {
                (Answer::Yes, Some(Witness::Operators(w))) => w.clone(),
                _ => return Err(CliError::Input(format!("no SLOCC operator witness: {} ({})", v.answer, v.details))),
            };
            let report = protocols::repeat_until_success(&a, &witness, &b, args.trials, seed)?;
            let ok = report.first_success.is_some();
            let r = json!({
                "single_trial_probability": report.single_trial_probability,
                "trials": report.trials,
                "first_success": report.first_success,
                "successes": report.successes,
                "empirical_frequency": report.empirical_frequency,
                "sigma": report.sigma,
                "deviation_in_sigma": report.deviation_in_sigma(),
                "analytic_bound": report.analytic_bound,
                "witness": to_value(&witness),
                "trace": to_value(&report.trace),
                "success": ok,
            });
            (r, ok)
        }
        Protocol::Teleport => {
            let src = Source::from_args(&args.src, &args.src_catalog).unwrap_or(Source::Catalog("Bell".into()));
            inputs.push(src.label());
            let resource = src.load()?;
            let dim = resource.dims()[0];
            let amps: Vec<C64> = if args.payload.is_empty() {
                let mut v = vec![C64::new(0.0, 0.0); dim];
                v[0] = C64::new(1.0, 0.0);
                v
            } else {
                args.payload.iter().map(|&x| C64::new(x, 0.0)).collect()
            };
            let payload = PureState::new(vec![amps.len()], amps)?;
            let trace = protocols::teleport(&resource, &payload)?;
            let trace = if args.dump_states { trace.with_states() } else { trace };
            trace_results(&trace, sample, seed)?
        }
        Protocol::BellExtract => {
            let src = optional_source(&args.src, &args.src_catalog, "src")?;
            inputs.push(src.label());
            let s = src.load()?;
            if args.pair.len() != 2 || args.pair.iter().any(|&k| k == 0 || k > s.parties()) {
                return Err(CliError::Input(format!("--pair needs two parties in 1..={}", s.parties())));
            }
            let (i, j) = (args.pair[0] - 1, args.pair[1] - 1);
            let budget = ExtractBudget { seed, ..ExtractBudget::default() };
            match protocols::bell_extract_pair(&s, i, j, &budget)? {
                Some((trace, _)) => {
                    let trace = if args.dump_states { trace.with_states() } else { trace };
                    let (mut r, ok) = trace_results(&trace, sample, seed)?;
                    r["pair"] = json!([i + 1, j + 1]);
                    (r, ok)
                }
                None => return Err(CliError::Protocol(format!("no Bell pair extracted between A{} and A{}", i + 1, j + 1))),
            }
        }
    };
    results["protocol"] = json!(args.protocol.to_possible_value().expect("named").get_name());
    results["mode"] = json!(if sample { "sample" } else { "exhaustive" });
    let mut report = Report::new("simulate", inputs, results, seed);
    report.success = success;
    Ok(report)
}

fn compare_sources(args: &CompareArgs, m: Option<&ArgMatches>) -> CliResult<(Source, Source)> {
    let mut tagged: Vec<(usize, Source)> = Vec::new();
    let file_idx: Vec<usize> = m.and_then(|m| m.indices_of("files")).map(|i| i.collect()).unwrap_or_default();
    let cat_idx: Vec<usize> = m.and_then(|m| m.indices_of("catalog")).map(|i| i.collect()).unwrap_or_default();
    for (k, f) in args.files.iter().enumerate() {
        tagged.push((file_idx.get(k).copied().unwrap_or(k), Source::File(f.clone())));
    }
    for (k, c) in args.catalog.iter().enumerate() {
        tagged.push((cat_idx.get(k).copied().unwrap_or(usize::MAX / 2 + k), Source::Catalog(c.clone())));
    }
    if tagged.len() != 2 {
        return Err(CliError::Input(format!("compare needs exactly two states, got {}", tagged.len())));
    }
    tagged.sort_by_key(|(i, _)| *i);
    let mut it = tagged.into_iter().map(|(_, s)| s);
    Ok((it.next().expect("two"), it.next().expect("two")))
}

/// Result of a command-line invocation.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn execute(cli: &Cli, matches: &ArgMatches) -> CliResult<Report> {
    let seed = cli.seed;
    let report = match &cli.command {
        Command::Analyze(s) => cmd_analyze(&Source::from_args(&s.file, &s.catalog)?, seed)?,
        Command::Compare(c) => {
            let (a, b) = compare_sources(c, matches.subcommand_matches("compare"))?;
            cmd_compare(&a, &b, &c.regime, seed)?
        }
        Command::Simulate(s) => cmd_simulate(s, seed)?,
        Command::Graph(g) => cmd_graph(&Source::from_args(&g.source.file, &g.source.catalog)?, g.dot.as_deref(), seed)?,
        Command::Rank(r) => cmd_rank(&Source::from_args(&r.source.file, &r.source.catalog)?, r.budget, seed, r.witness_out.as_deref())?,
        Command::Catalog => cmd_catalog(seed)?,
    };
    Ok(report)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let matches = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return Outcome { code: 2, stdout: String::new(), stderr: e.render().to_string() },
    };
    match execute(&cli, &matches) {
        Ok(mut report) => {
            report.command = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
            let text = report.render(cli.format);
            let code = if report.success { 0 } else { 3 };
            match &cli.out {
                Some(path) => match write_file(path, &text) {
                    Ok(()) => Outcome { code, ..Outcome::default() },
                    Err(e) => Outcome { code: e.exit_code(), stdout: String::new(), stderr: format!("error: {e}\n") },
                },
                None => Outcome { code, stdout: text, stderr: String::new() },
            }
        }
        Err(e) => Outcome { code: e.exit_code(), stdout: String::new(), stderr: format!("error: {e}\n") },
    }
}
