#![allow(clippy::neg_cmp_op_on_partial_ord)]

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use freeprobe::coulomb_mc::{fermionic_char, mc_char_rank1, ChainParams};
use freeprobe::equilibrium::{solve_equilibrium, Potential};
use freeprobe::nc_combinatorics::{
    classical_moments_from_cumulants, moments_from_free_cumulants, partition_counts, CumulantSeq,
};
use freeprobe::omega::{omega, omega_via_r_integral};
use freeprobe::scattering::{correlation_from_samples, draw_samples, matched_coupling, ScatteringModel};
use freeprobe::transforms::{BosonModel, OneCutModel};
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EQ_TOL: f64 = 1e-13;

/// Input problems that map to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Signals a completed comparison whose max |z| exceeded the threshold.
#[derive(Debug)]
struct ThresholdExceeded;

impl std::fmt::Display for ThresholdExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("max |z| exceeds the sigma threshold")
    }
}

impl std::error::Error for ThresholdExceeded {}

#[derive(Parser)]
#[command(name = "freeprobe", version, about = "Free-probability and random-matrix experiments")]
struct Cli {
    /// Master seed; required by stochastic subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary CSV path; the manifest goes next to it. Defaults to stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Validate and print the resolved plan without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker threads for independent chains.
    #[arg(long, global = true, env = "FREEPROBE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition counts and moment/cumulant conversion.
    Nc(NcArgs),
    /// R-transform on a k grid.
    Transform(TransformArgs),
    /// Equilibrium density of a convex potential.
    Equilibrium(EquilibriumArgs),
    /// Finite-N rank-one characteristic function (Monte Carlo or fermionic).
    Charfn(CharfnArgs),
    /// Large-N ω(k) with branch labels and saddle locations.
    Omega(OmegaArgs),
    /// S-matrix correlation C_{ab,cd} on an unfolded ε grid.
    Scattering(ScatteringArgs),
    /// Pointwise z-scores between two result CSVs.
    Compare(CompareArgs),
    /// Run an experiment from a JSON config file.
    Run(RunArgs),
}

fn default_potential() -> Vec<f64> {
    vec![0.0, 0.0, 0.5]
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct NcArgs {
    /// Enumerate partitions of {1..count}.
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Cumulants c_1, c_2, … as integers or fractions; switches to moment output.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    cumulants: Vec<String>,
}

impl Default for NcArgs {
    fn default() -> Self {
        NcArgs { count: 8, cumulants: Vec::new() }
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct Grid {
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    k_min: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    k_max: f64,
    #[arg(long, default_value_t = 61)]
    points: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { k_min: -3.0, k_max: 3.0, points: 61 }
    }
}

impl Grid {
    fn values(&self) -> Result<Vec<f64>> {
        linspace(self.k_min, self.k_max, self.points)
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || points == 0 || (points == 1 && lo != hi) || lo > hi {
        return Err(config_err(format!("grid: need finite lo <= hi and points >= 2 (got {lo}, {hi}, {points})")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect())
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct TransformArgs {
    /// `potential` or `boson`.
    #[arg(long, default_value = "potential")]
    model: String,
    /// Coefficients v_0, v_1, … of V.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = default_potential())]
    potential: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    grid: Grid,
}

impl Default for TransformArgs {
    fn default() -> Self {
        TransformArgs { model: "potential".into(), potential: default_potential(), grid: Grid::default() }
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct EquilibriumArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = default_potential())]
    potential: Vec<f64>,
    /// Grid points on [a, b], edges included.
    #[arg(long, default_value_t = 101)]
    points: usize,
}

impl Default for EquilibriumArgs {
    fn default() -> Self {
        EquilibriumArgs { potential: default_potential(), points: 101 }
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct OmegaArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = default_potential())]
    potential: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    grid: Grid,
}

impl Default for OmegaArgs {
    fn default() -> Self {
        OmegaArgs { potential: default_potential(), grid: Grid::default() }
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct ChainArgs {
    /// Recorded samples per chain.
    #[arg(long, default_value_t = 400)]
    samples: usize,
    /// Sweeps between samples.
    #[arg(long, default_value_t = 2)]
    thin: usize,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Burn-in sweeps (default 10·N).
    #[arg(long)]
    burn_in: Option<usize>,
}

impl Default for ChainArgs {
    fn default() -> Self {
        ChainArgs { samples: 400, thin: 2, chains: 4, burn_in: None }
    }
}

impl ChainArgs {
    fn params(&self, seed: u64) -> ChainParams {
        ChainParams { seed, samples: self.samples, thin: self.thin, chains: self.chains, burn_in: self.burn_in }
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct CharfnArgs {
    /// `mc` (Metropolis + DH sum) or `fermionic` (deterministic).
    #[arg(long, default_value = "mc")]
    method: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = default_potential())]
    potential: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![32usize])]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = vec![0.5])]
    k: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
}

impl Default for CharfnArgs {
    fn default() -> Self {
        CharfnArgs {
            method: "mc".into(),
            potential: default_potential(),
            n: vec![32],
            k: vec![0.5],
            chain: ChainArgs::default(),
        }
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields, default)]
struct ScatteringArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = default_potential())]
    potential: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Channel couplings γ_1..γ_M.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.6, 0.8])]
    couplings: Vec<f64>,
    /// Bulk energy z.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    energy: f64,
    /// Channel indices a,b,c,d of C_{ab,cd}.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0usize, 0, 0, 0])]
    channels: Vec<usize>,
    #[arg(long, default_value_t = 4.0)]
    eps_max: f64,
    #[arg(long, default_value_t = 12)]
    eps_points: usize,
    /// Rescale couplings so ⟨S_aa⟩ matches a Gaussian ensemble run at the given couplings.
    #[arg(long)]
    match_gaussian: bool,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
}

impl Default for ScatteringArgs {
    fn default() -> Self {
        ScatteringArgs {
            potential: default_potential(),
            n: 200,
            couplings: vec![0.6, 0.8],
            energy: 0.0,
            channels: vec![0, 0, 0, 0],
            eps_max: 4.0,
            eps_points: 12,
            match_gaussian: false,
            chain: ChainArgs { samples: 2500, thin: 10, chains: 4, burn_in: None },
        }
    }
}

#[derive(Args, Clone, Debug)]
struct CompareArgs {
    report_a: PathBuf,
    report_b: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
}

#[derive(Args, Clone, Debug)]
struct RunArgs {
    config: PathBuf,
}

/// A resolved experiment; serialized form is what the config hash covers.
#[derive(Serialize, Clone, Debug)]
#[serde(tag = "subcommand", content = "params", rename_all = "lowercase")]
enum Experiment {
    Nc(NcArgs),
    Transform(TransformArgs),
    Equilibrium(EquilibriumArgs),
    Charfn(CharfnArgs),
    Omega(OmegaArgs),
    Scattering(ScatteringArgs),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    subcommand: String,
    #[serde(default)]
    params: serde_json::Value,
    seed: Option<u64>,
    output_path: Option<PathBuf>,
}

impl Experiment {
    fn name(&self) -> &'static str {
        match self {
            Experiment::Nc(_) => "nc",
            Experiment::Transform(_) => "transform",
            Experiment::Equilibrium(_) => "equilibrium",
            Experiment::Charfn(_) => "charfn",
            Experiment::Omega(_) => "omega",
            Experiment::Scattering(_) => "scattering",
        }
    }

    fn is_stochastic(&self) -> bool {
        match self {
            Experiment::Charfn(a) => a.method == "mc",
            Experiment::Scattering(_) => true,
            _ => false,
        }
    }

    fn from_config(cfg: ExperimentConfig) -> Result<(Self, Option<u64>, Option<PathBuf>)> {
        fn params<T: for<'de> Deserialize<'de>>(v: serde_json::Value) -> Result<T> {
            let v = if v.is_null() { json!({}) } else { v };
            serde_json::from_value(v).map_err(|e| config_err(format!("params: {e}")))
        }
        let exp = match cfg.subcommand.as_str() {
            "nc" => Experiment::Nc(params(cfg.params)?),
            "transform" => Experiment::Transform(params(cfg.params)?),
            "equilibrium" => Experiment::Equilibrium(params(cfg.params)?),
            "charfn" => Experiment::Charfn(params(cfg.params)?),
            "omega" => Experiment::Omega(params(cfg.params)?),
            "scattering" => Experiment::Scattering(params(cfg.params)?),
            other => return Err(config_err(format!("subcommand: unknown value `{other}`"))),
        };
        Ok((exp, cfg.seed, cfg.output_path))
    }
}

/// Shortest round-trip decimal for binary64.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn potential(coeffs: &[f64]) -> Result<Potential> {
    Ok(Potential::new(coeffs.to_vec())?)
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let t = s.trim();
    let parsed = match t.split_once('/') {
        Some((n, d)) => n.trim().parse::<num_bigint::BigInt>().ok().zip(d.trim().parse::<num_bigint::BigInt>().ok()),
        None => t.parse::<num_bigint::BigInt>().ok().map(|n| (n, 1.into())),
    };
    match parsed {
        Some((_, d)) if d == 0.into() => Err(config_err(format!("cumulants: zero denominator in `{t}`"))),
        Some((n, d)) => Ok(BigRational::new(n, d)),
        None => Err(config_err(format!("cumulants: `{t}` is not an integer or fraction"))),
    }
}

/// Validates everything that does not require the main computation.
fn validate(exp: &Experiment, seed: Option<u64>) -> Result<()> {
    if exp.is_stochastic() && seed.is_none() {
        return Err(config_err(format!("seed: required for `{}`", exp.name())));
    }
    match exp {
        Experiment::Nc(a) => {
            if a.count == 0 || a.count > freeprobe::nc_combinatorics::MAX_PARTITION_N {
                return Err(config_err(format!("count: must be in 1..=12, got {}", a.count)));
            }
            for c in &a.cumulants {
                parse_rational(c)?;
            }
        }
        Experiment::Transform(a) => {
            if a.model != "potential" && a.model != "boson" {
                return Err(config_err(format!("model: expected `potential` or `boson`, got `{}`", a.model)));
            }
            if a.model == "potential" {
                potential(&a.potential)?;
            }
            a.grid.values()?;
        }
        Experiment::Equilibrium(a) => {
            potential(&a.potential)?;
            linspace(0.0, 1.0, a.points)?;
        }
        Experiment::Omega(a) => {
            potential(&a.potential)?;
            a.grid.values()?;
        }
        Experiment::Charfn(a) => {
            if a.method != "mc" && a.method != "fermionic" {
                return Err(config_err(format!("method: expected `mc` or `fermionic`, got `{}`", a.method)));
            }
            potential(&a.potential)?;
            if a.n.is_empty() || a.k.is_empty() || a.n.contains(&0) {
                return Err(config_err("n, k: need non-empty lists with n >= 1"));
            }
            if a.chain.samples == 0 || a.chain.chains == 0 {
                return Err(config_err("samples, chains: must be positive"));
            }
        }
        Experiment::Scattering(a) => {
            if a.channels.len() != 4 {
                return Err(config_err("channels: need exactly four indices a,b,c,d"));
            }
            if a.chain.samples == 0 || a.chain.chains == 0 {
                return Err(config_err("samples, chains: must be positive"));
            }
            let model = ScatteringModel::new(&potential(&a.potential)?, a.n, a.couplings.clone(), a.energy)?;
            if a.channels.iter().any(|&c| c >= model.m()) {
                return Err(config_err(format!("channels: indices must be below M = {}", model.m())));
            }
            linspace(0.0, a.eps_max, a.eps_points)?;
        }
    }
    Ok(())
}

struct Artifact {
    csv: String,
    summary: serde_json::Value,
}

fn run_nc(a: &NcArgs) -> Result<Artifact> {
    let mut csv = String::new();
    if a.cumulants.is_empty() {
        let (all, nc) = partition_counts(a.count)?;
        csv.push_str("n,partitions,noncrossing\n");
        writeln!(csv, "{},{all},{nc}", a.count)?;
        return Ok(Artifact { csv, summary: json!({ "bell": all, "catalan": nc }) });
    }
    let c: Vec<BigRational> = a.cumulants.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?;
    let seq = CumulantSeq::new(c);
    csv.push_str("n,free_moment,classical_moment\n");
    for n in 1..=seq.order() {
        let free = moments_from_free_cumulants(&seq, n)?;
        let classical = if n <= freeprobe::nc_combinatorics::MAX_CLASSICAL_N {
            classical_moments_from_cumulants(&seq, n)?.to_string()
        } else {
            String::new()
        };
        writeln!(csv, "{n},{free},{classical}")?;
    }
    Ok(Artifact { csv, summary: json!({ "order": seq.order() }) })
}

fn run_transform(a: &TransformArgs) -> Result<Artifact> {
    let ks = a.grid.values()?;
    let eval: Box<dyn Fn(f64) -> freeprobe::Result<f64>> = if a.model == "boson" {
        Box::new(|k| BosonModel.r_eval(k))
    } else {
        let sol = solve_equilibrium(&potential(&a.potential)?, EQ_TOL)?;
        Box::new(move |k| sol.r_eval(k))
    };
    let mut csv = String::from("k,r\n");
    for k in ks {
        writeln!(csv, "{},{}", fmt_f64(k), fmt_f64(eval(k)?))?;
    }
    Ok(Artifact { csv, summary: json!({ "model": a.model }) })
}

fn run_equilibrium(a: &EquilibriumArgs) -> Result<Artifact> {
    let sol = solve_equilibrium(&potential(&a.potential)?, EQ_TOL)?;
    let m = &sol.measure;
    let mut csv = String::from("x,density\n");
    for x in linspace(m.a, m.b, a.points)? {
        writeln!(csv, "{},{}", fmt_f64(x), fmt_f64(m.density(x)))?;
    }
    let summary = json!({
        "a": m.a,
        "b": m.b,
        "ell": sol.ell,
        "residual": sol.residual,
        "free_cumulants": sol.free_cumulants,
    });
    Ok(Artifact { csv, summary })
}

fn run_omega(a: &OmegaArgs) -> Result<Artifact> {
    let sol = solve_equilibrium(&potential(&a.potential)?, EQ_TOL)?;
    let mut csv = String::from("k,omega,branch,saddle_location\n");
    for k in a.grid.values()? {
        let e = omega(&sol, k)?;
        let saddle = e.saddle_location.map(fmt_f64).unwrap_or_default();
        writeln!(csv, "{},{},{},{saddle}", fmt_f64(k), fmt_f64(e.value), e.branch.as_str())?;
    }
    let bp = sol.branch_point();
    Ok(Artifact { csv, summary: json!({ "g_a": bp.g_a, "g_b": bp.g_b }) })
}

fn run_charfn(a: &CharfnArgs, seed: Option<u64>) -> Result<Artifact> {
    let v = potential(&a.potential)?;
    let sol = solve_equilibrium(&v, EQ_TOL)?;
    let mut csv = String::from("n,k,estimate,stderr,limit\n");
    for &n in &a.n {
        for &k in &a.k {
            let limit = omega_via_r_integral(&sol, k)?;
            let (est, se, limit) = if a.method == "mc" {
                let seed = seed.ok_or_else(|| config_err("seed: required for `charfn`"))?;
                let (e, s) = mc_char_rank1(&v, n, k, &a.chain.params(seed))?;
                (e, s, limit)
            } else {
                (fermionic_char(&v, n, k)?, 0.0, -limit)
            };
            writeln!(csv, "{n},{},{},{},{}", fmt_f64(k), fmt_f64(est), fmt_f64(se), fmt_f64(limit))?;
        }
    }
    Ok(Artifact { csv, summary: json!({ "method": a.method }) })
}

fn run_scattering(a: &ScatteringArgs, seed: Option<u64>) -> Result<Artifact> {
    let seed = seed.ok_or_else(|| config_err("seed: required for `scattering`"))?;
    let v = potential(&a.potential)?;
    let mut model = ScatteringModel::new(&v, a.n, a.couplings.clone(), a.energy)?;
    let params = a.chain.params(seed);
    let mut matching = serde_json::Value::Null;
    if a.match_gaussian {
        let reference = ScatteringModel::new(&Potential::gaussian(), a.n, a.couplings.clone(), a.energy)?;
        let m = matched_coupling(&reference, &model, &params)?;
        matching = serde_json::to_value(&m)?;
        model = model.with_couplings(m.couplings)?;
    }
    let grid = linspace(0.0, a.eps_max, a.eps_points)?;
    let ch = (a.channels[0], a.channels[1], a.channels[2], a.channels[3]);
    let samples = draw_samples(&model, &params)?;
    let run = correlation_from_samples(&model, &samples, ch, &grid)?;
    let mut csv = String::from("epsilon,re,im,stderr\n");
    for e in &run.estimates {
        writeln!(csv, "{},{},{},{}", fmt_f64(e.epsilon), fmt_f64(e.value.re), fmt_f64(e.value.im), fmt_f64(e.value.stderr))?;
    }
    let summary = json!({
        "couplings": model.couplings,
        "mean_s": run.mean_s,
        "samples": run.samples,
        "max_unitarity_error": run.max_unitarity_error,
        "matching": matching,
    });
    Ok(Artifact { csv, summary })
}

fn execute(exp: &Experiment, seed: Option<u64>) -> Result<Artifact> {
    match exp {
        Experiment::Nc(a) => run_nc(a),
        Experiment::Transform(a) => run_transform(a),
        Experiment::Equilibrium(a) => run_equilibrium(a),
        Experiment::Charfn(a) => run_charfn(a, seed),
        Experiment::Omega(a) => run_omega(a),
        Experiment::Scattering(a) => run_scattering(a, seed),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn run_experiment(exp: Experiment, seed: Option<u64>, out: Option<PathBuf>, dry_run: bool) -> Result<()> {
    validate(&exp, seed)?;
    let resolved = json!({ "experiment": &exp, "seed": seed });
    let canonical = serde_json::to_string(&resolved)?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    if dry_run {
        let plan = json!({
            "plan": resolved,
            "config_sha256": hash,
            "output_path": out,
            "threads": rayon::current_num_threads(),
        });
        println!("{}", serde_json::to_string_pretty(&plan)?);
        return Ok(());
    }
    let start = Instant::now();
    let artifact = execute(&exp, seed)?;
    let wall = start.elapsed().as_secs_f64();
    match &out {
        Some(path) => {
            std::fs::write(path, &artifact.csv).with_context(|| format!("writing {}", path.display()))?;
            let manifest = json!({
                "subcommand": exp.name(),
                "config": resolved,
                "config_sha256": hash,
                "seed": seed,
                "versions": { "freeprobe-cli": env!("CARGO_PKG_VERSION"), "freeprobe-core": freeprobe::VERSION },
                "threads": rayon::current_num_threads(),
                "wall_time_seconds": wall,
                "output": path,
                "summary": artifact.summary,
            });
            let mpath = manifest_path(path);
            std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")
                .with_context(|| format!("writing {}", mpath.display()))?;
        }
        None => print!("{}", artifact.csv),
    }
    Ok(())
}

/// A parsed result CSV: grid keys and (value, stderr) per row.
struct Report {
    key_names: Vec<String>,
    keys: Vec<Vec<String>>,
    values: Vec<(f64, f64, f64)>,
}

fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| config_err(format!("{}: empty file", path.display())))?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let se = col("stderr").ok_or_else(|| config_err(format!("{}: no stderr column", path.display())))?;
    let (re, im) = match (col("re"), col("im"), col("estimate")) {
        (Some(r), Some(i), _) => (r, Some(i)),
        (_, _, Some(e)) => (e, None),
        _ => return Err(config_err(format!("{}: need re/im or estimate columns", path.display()))),
    };
    let key_cols: Vec<usize> = ["epsilon", "n", "k"].iter().filter_map(|k| col(k)).collect();
    if key_cols.is_empty() {
        return Err(config_err(format!("{}: no grid column (epsilon, n or k)", path.display())));
    }
    let mut rep = Report { key_names: key_cols.iter().map(|&c| header[c].to_string()).collect(), keys: Vec::new(), values: Vec::new() };
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(config_err(format!("{}: row {} has {} fields, expected {}", path.display(), i + 2, f.len(), header.len())));
        }
        let num = |c: usize| -> Result<f64> {
            f[c].parse().map_err(|_| config_err(format!("{}: row {}: `{}` is not a number", path.display(), i + 2, f[c])))
        };
        rep.keys.push(key_cols.iter().map(|&c| f[c].to_string()).collect());
        rep.values.push((num(re)?, im.map(num).transpose()?.unwrap_or(0.0), num(se)?));
    }
    Ok(rep)
}

fn run_compare(a: &CompareArgs, out: Option<PathBuf>, dry_run: bool) -> Result<()> {
    if !(a.sigma > 0.0) {
        return Err(config_err("sigma: must be positive"));
    }
    let ra = read_report(&a.report_a)?;
    let rb = read_report(&a.report_b)?;
    if ra.key_names != rb.key_names || ra.keys != rb.keys {
        return Err(config_err("grid mismatch: the two reports do not share the same grid"));
    }
    if dry_run {
        println!("{}", serde_json::to_string_pretty(&json!({ "compare": [a.report_a, a.report_b], "rows": ra.keys.len(), "sigma": a.sigma }))?);
        return Ok(());
    }
    let mut csv = ra.key_names.join(",") + ",z\n";
    let mut max_z: f64 = 0.0;
    for (key, (x, y)) in ra.keys.iter().zip(ra.values.iter().zip(&rb.values)) {
        let diff = (x.0 - y.0).hypot(x.1 - y.1);
        let se = x.2.hypot(y.2);
        let z = if diff == 0.0 { 0.0 } else { diff / se };
        max_z = max_z.max(z);
        writeln!(csv, "{},{}", key.join(","), fmt_f64(z))?;
    }
    match out {
        Some(p) => std::fs::write(&p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    let pass = max_z <= a.sigma;
    eprintln!("max |z| = {} ({} at sigma = {})", fmt_f64(max_z), if pass { "PASS" } else { "FAIL" }, fmt_f64(a.sigma));
    if pass {
        Ok(())
    } else {
        Err(ThresholdExceeded.into())
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ThresholdExceeded>().is_some() {
        return 1;
    }
    if e.downcast_ref::<ConfigError>().is_some() || e.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    match e.downcast_ref::<freeprobe::Error>() {
        Some(fe) if fe.is_input_error() => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn real_main(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config_err("threads: must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| anyhow!(e))?;
    }
    let exp = match cli.command {
        Command::Nc(a) => Experiment::Nc(a),
        Command::Transform(a) => Experiment::Transform(a),
        Command::Equilibrium(a) => Experiment::Equilibrium(a),
        Command::Charfn(a) => Experiment::Charfn(a),
        Command::Omega(a) => Experiment::Omega(a),
        Command::Scattering(a) => Experiment::Scattering(a),
        Command::Compare(a) => return run_compare(&a, cli.out, cli.dry_run),
        Command::Run(r) => {
            let text = std::fs::read_to_string(&r.config).map_err(|e| config_err(format!("{}: {e}", r.config.display())))?;
            let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| config_err(format!("config: {e}")))?;
            let (exp, seed, out) = Experiment::from_config(cfg)?;
            return run_experiment(exp, cli.seed.or(seed), cli.out.or(out), cli.dry_run);
        }
    };
    run_experiment(exp, cli.seed, cli.out, cli.dry_run)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<ThresholdExceeded>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
