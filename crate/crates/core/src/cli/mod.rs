//! `cre-pps` command line.
//!
//! Symbols in the help text: s = clusters sampled, #T_1 = clusters treated,
//! s_c = units sampled in cluster c, π = inclusion probabilities.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_completely_random, assign_stratified};
use crate::design::{
    draw_within, joint_inclusion, DesignPlan, DesignSpec, InclusionProbs, PiMethod, Scheme, WithinPlan, WithinSize,
    DEFAULT_MC_REPLICATES,
};
use crate::error::{Error, Result};
use crate::estimators::{population_theta, EstimatorKind, Realization};
use crate::montecarlo::{enumerate_report, run_simulation, Experiment, SimConfig};
use crate::population::{read_frame_path, Population};
use crate::variance::{conservative_var_estimate, stratified_var_estimate};

#[derive(Debug, Parser)]
#[command(name = "cre-pps", version, about = "Cluster randomized experiments with PPS cluster sampling")]
pub struct Cli {
    /// Worker threads for replicate and π loops (0 = all cores). Output does
    /// not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First- and second-order inclusion probabilities π_c, π_cc' of a cluster design.
    Inclusion(InclusionArgs),
    /// Draw one cluster sample of size s.
    Sample(SampleArgs),
    /// Assign #T_1 sampled clusters to treatment, draw s_c units per cluster, record responses.
    Assign(AssignArgs),
    /// Point estimates of δ (and V̂_C for HT-PPS) from one realization.
    Estimate(EstimateArgs),
    /// Replicated experiments over a grid of s, from a JSON config.
    Simulate(SimulateArgs),
    /// Exact design distribution of the estimators on a small population.
    Enumerate(EnumerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PiMethodArg {
    /// Closed form (srs) or full subset enumeration (ppswor-exact).
    Exact,
    /// Empirical frequencies over R_π sampler draws; needs --seed.
    Mc,
    /// Hájek's closed-form approximation.
    Approx,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// DesignSpec JSON; replaces the design flags below.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Cluster sampling scheme.
    #[arg(long, value_enum, default_value = "srs")]
    pub scheme: Scheme,
    /// s, clusters sampled (per stratum with --stratified).
    #[arg(long)]
    pub s: Option<usize>,
    /// #T_1, sampled clusters treated (per stratum); default s/2.
    #[arg(long)]
    pub treated: Option<usize>,
    /// s_c rule: `census`, an integer s_u, `p0.3` for ceil(0.3 n_c), or a comma list per cluster.
    #[arg(long, default_value = "census")]
    pub within: String,
    /// Per-unit-stratum rule (census, integer or pX); switches on unit-stratified sampling.
    #[arg(long)]
    pub unit_within: Option<String>,
    /// Sample s clusters independently within each cluster stratum.
    #[arg(long)]
    pub stratified: bool,
}

impl DesignArgs {
    pub fn spec(&self) -> Result<DesignSpec> {
        if let Some(p) = &self.design {
            return read_json(p);
        }
        let s = self.s.ok_or_else(|| Error::validation("--s is required without --design"))?;
        Ok(DesignSpec {
            scheme: self.scheme,
            s,
            treated: self.treated.unwrap_or(s / 2),
            within: parse_within(&self.within)?,
            unit_within: self.unit_within.as_deref().map(parse_within).transpose()?,
            stratified: self.stratified,
        })
    }
}

#[derive(Debug, Args)]
pub struct InclusionArgs {
    /// Cluster frame CSV.
    #[arg(long)]
    pub frame: PathBuf,
    /// s, clusters sampled.
    #[arg(long)]
    pub s: usize,
    #[arg(long, value_enum)]
    pub scheme: Scheme,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: PiMethodArg,
    /// R_π for --method mc.
    #[arg(long, default_value_t = DEFAULT_MC_REPLICATES)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub frame: PathBuf,
    /// Sample JSON written by `sample`.
    #[arg(long)]
    pub sample: PathBuf,
    /// #T_1 per sampling group; default half of each group's sample.
    #[arg(long)]
    pub treated: Option<usize>,
    /// s_c rule, as for `sample`.
    #[arg(long, default_value = "census")]
    pub within: String,
    #[arg(long)]
    pub unit_within: Option<String>,
    #[arg(long)]
    pub seed: u64,
    /// Realization JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub frame: PathBuf,
    /// Realization JSON (from `assign`). Without it the full pipeline runs
    /// from the design flags and --seed.
    #[arg(long)]
    pub realization: Option<PathBuf>,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ht-pps")]
    pub estimators: Vec<EstimatorKind>,
    /// θ for the fixed-θ Des Raj estimator; default is the frame's own
    /// regression coefficient.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Add V̂_C for the HT-PPS estimator; needs --pi.
    #[arg(long)]
    pub variance: bool,
    /// Inclusion-probability JSON, one per cluster stratum.
    #[arg(long)]
    pub pi: Vec<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-(estimator, s) MSE series to plot_data.csv.
    #[arg(long)]
    pub plot_data: bool,
    /// Do not print the summary table.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ht-pps")]
    pub estimators: Vec<EstimatorKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Also report E[V̂_C] with exact π.
    #[arg(long)]
    pub variance: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Sample file: the drawn clusters, also split by sampling group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFile {
    pub indices: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub seed: u64,
}

pub fn parse_within(s: &str) -> Result<WithinSize> {
    let s = s.trim();
    let bad = || Error::validation(format!("cannot read within-size rule '{s}'"));
    if s == "census" {
        Ok(WithinSize::Census)
    } else if let Some(p) = s.strip_prefix('p') {
        Ok(WithinSize::Proportion(p.parse().map_err(|_| bad())?))
    } else if s.contains(',') {
        let v = s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<Vec<usize>>>()?;
        Ok(WithinSize::Explicit(v))
    } else {
        Ok(WithinSize::Constant(s.parse().map_err(|_| bad())?))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    emit(out, s.as_bytes())
}

fn load_frame(p: &Path) -> Result<Population> {
    read_frame_path(p)
}

pub fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    match cli.command {
        Command::Inclusion(a) => inclusion(a, workers),
        Command::Sample(a) => sample(a),
        Command::Assign(a) => assign(a),
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a, workers),
        Command::Enumerate(a) => enumerate(a),
    }
}

fn inclusion(a: InclusionArgs, workers: usize) -> Result<()> {
    let pop = load_frame(&a.frame)?;
    let method = match a.method {
        PiMethodArg::Exact => PiMethod::ExactEnum,
        PiMethodArg::Approx => PiMethod::HajekApprox,
        PiMethodArg::Mc => PiMethod::MonteCarlo {
            replicates: a.replicates,
            seed: a.seed.ok_or_else(|| Error::validation("--method mc needs --seed"))?,
        },
    };
    let pi = joint_inclusion(&pop.sizes(), a.s, a.scheme, &method, workers)?;
    let low = pi.lower_bound_violations(&pop.sizes());
    if !low.is_empty() {
        let ell = pi.len();
        let shown: Vec<String> = low.iter().take(5).map(|(c, d)| format!("({c},{d})")).collect();
        eprintln!(
            "note: {} of {} pairs have π_cc' < n_c n_c' s²/n², e.g. {}",
            low.len(),
            ell * (ell - 1) / 2,
            shown.join(" ")
        );
    }
    emit_json(a.out.as_deref(), &pi)
}

fn sample(a: SampleArgs) -> Result<()> {
    let pop = load_frame(&a.frame)?;
    let spec = a.design.spec()?;
    let plan = DesignPlan::new(&pop, &spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let groups = plan.draw_clusters(&mut rng);
    let mut indices = groups.concat();
    indices.sort_unstable();
    emit_json(a.out.as_deref(), &SampleFile { indices, groups, seed: a.seed })
}

fn assign(a: AssignArgs) -> Result<()> {
    let pop = load_frame(&a.frame)?;
    let sample: SampleFile = read_json(&a.sample)?;
    let mut all = sample.groups.concat();
    all.sort_unstable();
    if all != sample.indices || all.windows(2).any(|w| w[0] == w[1]) || all.iter().any(|&c| c >= pop.len()) {
        return Err(Error::validation("sample file is inconsistent with itself or the frame"));
    }
    let within = parse_within(&a.within)?;
    let unit_within = a.unit_within.as_deref().map(parse_within).transpose()?;
    let plan = WithinPlan::new(&pop, &within, unit_within.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let assignment = match sample.groups.as_slice() {
        [one] => assign_completely_random(one, a.treated.unwrap_or(one.len() / 2), &mut rng)?,
        groups => {
            let treated = match a.treated {
                Some(t) => t,
                None => groups.iter().map(Vec::len).min().unwrap_or(0) / 2,
            };
            assign_stratified(groups, treated, &mut rng)?
        }
    };
    let units = draw_within(&plan, &all, &mut rng);
    let r = Realization::observe(&pop, &all, &assignment, &units, plan.unit_stratified, Some(a.seed))?;
    emit_json(a.out.as_deref(), &r)
}

#[derive(Serialize)]
struct EstimateOutRow {
    estimator: String,
    delta_hat: f64,
    mu1_hat: f64,
    mu0_hat: f64,
    theta: Option<f64>,
    seed: Option<u64>,
    var_hat: Option<f64>,
    se: Option<f64>,
    negative_flag: Option<bool>,
    pi_source: Option<String>,
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let pop = load_frame(&a.frame)?;
    if a.variance && a.pi.is_empty() {
        return Err(Error::validation("--variance needs inclusion probabilities (--pi FILE)"));
    }
    let theta = a.theta.unwrap_or_else(|| population_theta(&pop));
    let r: Realization = match (&a.realization, a.seed) {
        (Some(p), _) => {
            let r: Realization = read_json(p)?;
            r.validate(&pop)?;
            r
        }
        (None, Some(seed)) => {
            let spec = a.design.spec()?;
            let ex = Experiment::new(&pop, &spec, a.estimators.clone(), theta)?;
            ex.run_replicate(seed, 0)?.realization
        }
        (None, None) => return Err(Error::validation("give --realization, or design flags with --seed")),
    };
    let variance = if a.variance {
        let pis = a.pi.iter().map(|p| read_json::<InclusionProbs>(p)).collect::<Result<Vec<_>>>()?;
        Some(if pis.len() == 1 {
            conservative_var_estimate(&pop, &r, &pis[0])?
        } else {
            stratified_var_estimate(&pop, &r, &pis)?
        })
    } else {
        None
    };
    let target = if a.pi.len() > 1 { EstimatorKind::CsHtPps } else { EstimatorKind::HtPps };
    let mut w = csv::Writer::from_writer(Vec::new());
    for k in &a.estimators {
        let e = k.estimate(&pop, &r, theta)?;
        let v = variance.as_ref().filter(|_| *k == target);
        w.serialize(EstimateOutRow {
            estimator: e.estimator.name().to_string(),
            delta_hat: e.delta_hat,
            mu1_hat: e.mu1_hat,
            mu0_hat: e.mu0_hat,
            theta: e.theta,
            seed: r.seed,
            var_hat: v.map(|v| v.var_hat),
            se: v.map(|v| v.se),
            negative_flag: v.map(|v| v.negative),
            pi_source: v.map(|v| v.pi_source.clone()),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    emit(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    created_unix: u64,
    workers: usize,
    config: &'a SimConfig,
    clusters: usize,
    units: usize,
    pate: f64,
    theta: f64,
    elapsed_seconds: f64,
    files: Vec<String>,
}

fn simulate(a: SimulateArgs, workers: usize) -> Result<()> {
    let cfg = SimConfig::from_path(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let start = std::time::Instant::now();
    let out = run_simulation(&cfg, base, workers)?;
    let files = out.write(&a.out, a.plot_data)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        workers,
        config: &cfg,
        clusters: out.clusters,
        units: out.units,
        pate: out.pate,
        theta: out.theta,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
    };
    emit_json(Some(&a.out.join("manifest.json")), &manifest)?;
    if !a.quiet {
        print!("{}", out.table());
    }
    Ok(())
}

fn enumerate(a: EnumerateArgs) -> Result<()> {
    let pop = load_frame(&a.frame)?;
    let spec = a.design.spec()?;
    let theta = a.theta.unwrap_or_else(|| population_theta(&pop));
    let pis = if a.variance {
        let pis = spec
            .groups(&pop)?
            .iter()
            .map(|g| {
                let sizes: Vec<usize> = g.iter().map(|&c| pop.cluster(c).size()).collect();
                joint_inclusion(&sizes, spec.s, spec.scheme, &PiMethod::ExactEnum, 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(pis)
    } else {
        None
    };
    let report = enumerate_report(&pop, &spec, &a.estimators, theta, pis)?;
    emit_json(a.out.as_deref(), &report)
}
