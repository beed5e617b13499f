use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{summarize, Experiment, ReplicateRecord};
use crate::design::{joint_inclusion, DesignSpec, InclusionProbs, PiMethod, Scheme, WithinSize, DEFAULT_MC_REPLICATES};
use crate::error::{Error, Result};
use crate::estimators::{population_theta, EstimatorKind};
use crate::population::{read_frame_path, SyntheticSpec};
use crate::population::Population;

pub const MIN_REPLICATES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSource {
    Synthetic(SyntheticSpec),
    /// CSV frame; relative paths resolve against the config's directory.
    Frame(PathBuf),
}

impl PopulationSource {
    pub fn load(&self, base_dir: &Path) -> Result<Population> {
        match self {
            PopulationSource::Synthetic(spec) => spec.generate(),
            PopulationSource::Frame(p) => read_frame_path(base_dir.join(p)),
        }
    }
}

/// An estimator, optionally pinned to a cluster sampling scheme:
/// `"dim"` or `"dim@ppswor_sunter"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub scheme: Option<Scheme>,
}

impl TryFrom<String> for EstimatorSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        match s.split_once('@') {
            Some((e, sch)) => Ok(EstimatorSpec { kind: EstimatorKind::parse(e.trim())?, scheme: Some(Scheme::parse(sch)?) }),
            None => Ok(EstimatorSpec { kind: EstimatorKind::parse(s.trim())?, scheme: None }),
        }
    }
}

impl From<EstimatorSpec> for String {
    fn from(e: EstimatorSpec) -> String {
        match e.scheme {
            Some(s) => format!("{}@{}", e.kind.name(), s.name()),
            None => e.kind.name().to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiMethodName {
    /// Exact for `ppswor_exact`, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
    Approx,
}

/// How V̂_C obtains its joint inclusion probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    #[serde(default)]
    pub method: PiMethodName,
    /// R_π for the Monte Carlo method.
    #[serde(default = "default_pi_replicates")]
    pub replicates: usize,
    /// Defaults to the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_pi_replicates() -> usize {
    DEFAULT_MC_REPLICATES
}

fn default_pps_scheme() -> Scheme {
    Scheme::PpsworSunter
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub population: PopulationSource,
    pub s_grid: Vec<usize>,
    /// #T_1 (per stratum when stratified); defaults to s / 2.
    #[serde(default)]
    pub treated: Option<usize>,
    #[serde(default)]
    pub within: WithinSize,
    #[serde(default)]
    pub unit_within: Option<WithinSize>,
    #[serde(default)]
    pub stratified: bool,
    pub estimators: Vec<EstimatorSpec>,
    /// Scheme for PPS-family estimators without an explicit `@scheme`.
    #[serde(default = "default_pps_scheme")]
    pub pps_scheme: Scheme,
    /// θ for the fixed-θ Des Raj estimator; defaults to the population
    /// regression coefficient.
    #[serde(default)]
    pub theta: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Compute V̂_C for HT-PPS cells.
    #[serde(default)]
    pub variance: Option<PiConfig>,
}

impl SimConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SimConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::validation(format!(
                "replicates must be at least {MIN_REPLICATES}, got {}",
                self.replicates
            )));
        }
        if self.s_grid.is_empty() {
            return Err(Error::validation("s_grid is empty"));
        }
        if self.estimators.is_empty() {
            return Err(Error::validation("no estimators listed"));
        }
        Ok(())
    }

    pub fn scheme_of(&self, e: &EstimatorSpec) -> Scheme {
        e.scheme
            .unwrap_or(if e.kind.is_pps_family() { self.pps_scheme } else { Scheme::Srs })
    }

    /// Estimators grouped by scheme, in order of first appearance.
    fn cells(&self) -> Vec<(Scheme, Vec<EstimatorKind>)> {
        let mut out: Vec<(Scheme, Vec<EstimatorKind>)> = Vec::new();
        for e in &self.estimators {
            let scheme = self.scheme_of(e);
            match out.iter_mut().find(|(s, _)| *s == scheme) {
                Some((_, v)) => {
                    if !v.contains(&e.kind) {
                        v.push(e.kind)
                    }
                }
                None => out.push((scheme, vec![e.kind])),
            }
        }
        out
    }

    fn design(&self, scheme: Scheme, s: usize) -> DesignSpec {
        DesignSpec {
            scheme,
            s,
            treated: self.treated.unwrap_or(s / 2),
            within: self.within.clone(),
            unit_within: self.unit_within.clone(),
            stratified: self.stratified,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub s: usize,
    pub estimator: String,
    pub delta_hat: f64,
    pub mu1_hat: f64,
    pub mu0_hat: f64,
    pub theta: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceOutRow {
    pub scheme: String,
    pub s: usize,
    pub estimator: String,
    pub replicate: usize,
    pub var_hat: f64,
    pub se: f64,
    pub negative_flag: bool,
    pub syg_treated: f64,
    pub syg_control: f64,
    pub cov_bound: f64,
    pub pi_source: String,
}

/// Column names carry the divisors: empirical variance over R − 1, MSE
/// over R.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub s: usize,
    pub estimator: String,
    pub replicates: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub mcse: f64,
    pub emp_var_div_r_minus_1: f64,
    pub mse_div_r: f64,
    pub mean_var_hat: Option<f64>,
    pub gap: Option<f64>,
    pub negative_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub series: String,
    pub s: usize,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub clusters: usize,
    pub units: usize,
    pub pate: f64,
    pub theta: f64,
    pub results: Vec<ResultRow>,
    pub variance: Vec<VarianceOutRow>,
    pub summary: Vec<SummaryRow>,
}

fn inclusion_for(
    pop: &Population,
    spec: &DesignSpec,
    cfg: &PiConfig,
    master: u64,
    workers: usize,
) -> Result<Vec<InclusionProbs>> {
    let method = match cfg.method {
        PiMethodName::Auto if spec.scheme == Scheme::PpsworSunter => PiMethodName::MonteCarlo,
        PiMethodName::Auto => PiMethodName::Exact,
        m => m,
    };
    let method = match method {
        PiMethodName::Exact => PiMethod::ExactEnum,
        PiMethodName::Approx => PiMethod::HajekApprox,
        _ => PiMethod::MonteCarlo { replicates: cfg.replicates, seed: cfg.seed.unwrap_or(master) },
    };
    spec.groups(pop)?
        .iter()
        .map(|g| {
            let sizes: Vec<usize> = g.iter().map(|&c| pop.cluster(c).size()).collect();
            joint_inclusion(&sizes, spec.s, spec.scheme, &method, workers)
        })
        .collect()
}

/// Runs every (s, scheme) cell of the grid. Replicate i of every cell uses
/// substream (seed, i).
pub fn run_simulation(cfg: &SimConfig, base_dir: &Path, workers: usize) -> Result<SimOutput> {
    cfg.validate()?;
    let pop = cfg.population.load(base_dir)?;
    let theta = cfg.theta.unwrap_or_else(|| population_theta(&pop));
    let truth = pop.pate();
    let mut out = SimOutput {
        clusters: pop.len(),
        units: pop.n(),
        pate: truth,
        theta,
        results: Vec::new(),
        variance: Vec::new(),
        summary: Vec::new(),
    };
    for &s in &cfg.s_grid {
        for (scheme, kinds) in cfg.cells() {
            let spec = cfg.design(scheme, s);
            let context = |e: Error| e.context(format_args!("s = {s}, scheme {}", scheme.name()));
            let mut ex = Experiment::new(&pop, &spec, kinds.clone(), theta).map_err(context)?;
            let var_target = [EstimatorKind::CsHtPps, EstimatorKind::HtPps, EstimatorKind::UsHtPps]
                .into_iter()
                .find(|k| kinds.contains(k) && (cfg.stratified || *k != EstimatorKind::CsHtPps));
            if let (Some(pc), true, Some(_)) = (&cfg.variance, scheme.is_pps(), var_target) {
                let pis = inclusion_for(&pop, &spec, pc, cfg.seed, workers).map_err(context)?;
                ex = ex.with_inclusion(pis).map_err(context)?;
            }
            let records = ex.run(cfg.seed, cfg.replicates, workers)?;
            collect_cell(&mut out, &records, scheme, s, &kinds, var_target, cfg.seed, truth)?;
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn collect_cell(
    out: &mut SimOutput,
    records: &[ReplicateRecord],
    scheme: Scheme,
    s: usize,
    kinds: &[EstimatorKind],
    var_target: Option<EstimatorKind>,
    seed: u64,
    truth: f64,
) -> Result<()> {
    let scheme_name = scheme.name().to_string();
    for rec in records {
        for e in &rec.estimates {
            out.results.push(ResultRow {
                scheme: scheme_name.clone(),
                s,
                estimator: e.estimator.name().to_string(),
                delta_hat: e.delta_hat,
                mu1_hat: e.mu1_hat,
                mu0_hat: e.mu0_hat,
                theta: e.theta,
                replicate: rec.index,
                seed,
            });
        }
        if let (Some(v), Some(k)) = (&rec.variance, var_target) {
            out.variance.push(VarianceOutRow {
                scheme: scheme_name.clone(),
                s,
                estimator: k.name().to_string(),
                replicate: rec.index,
                var_hat: v.var_hat,
                se: v.se,
                negative_flag: v.negative,
                syg_treated: v.syg_treated,
                syg_control: v.syg_control,
                cov_bound: v.cov_bound,
                pi_source: v.pi_source.clone(),
            });
        }
    }
    let variances: Vec<_> = records.iter().filter_map(|r| r.variance.clone()).collect();
    for (j, &k) in kinds.iter().enumerate() {
        let deltas: Vec<f64> = records.iter().map(|r| r.estimates[j].delta_hat).collect();
        let v = (Some(k) == var_target && variances.len() == records.len()).then_some(&variances[..]);
        let sm = summarize(&deltas, truth, v)?;
        out.summary.push(SummaryRow {
            scheme: scheme_name.clone(),
            s,
            estimator: k.name().to_string(),
            replicates: sm.replicates,
            truth: sm.truth,
            mean: sm.mean,
            bias: sm.bias,
            mcse: sm.mcse,
            emp_var_div_r_minus_1: sm.emp_var,
            mse_div_r: sm.mse,
            mean_var_hat: sm.mean_var_hat,
            gap: sm.gap,
            negative_count: sm.negative_count,
        });
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl SimOutput {
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        self.summary
            .iter()
            .map(|r| PlotRow { series: format!("{}@{}", r.estimator, r.scheme), s: r.s, mse: r.mse_div_r })
            .collect()
    }

    /// Writes results.csv, summary.csv, variance.csv (when any V̂ was
    /// computed) and plot_data.csv (when asked). Returns the paths.
    pub fn write(&self, dir: &Path, plot_data: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let results = dir.join("results.csv");
        write_csv(&results, &self.results)?;
        files.push(results);
        let summary = dir.join("summary.csv");
        write_csv(&summary, &self.summary)?;
        files.push(summary);
        if !self.variance.is_empty() {
            let p = dir.join("variance.csv");
            write_csv(&p, &self.variance)?;
            files.push(p);
        }
        if plot_data {
            let p = dir.join("plot_data.csv");
            write_csv(&p, &self.plot_rows())?;
            files.push(p);
        }
        Ok(files)
    }

    pub fn table(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "{:<14} {:>5} {:<10} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "scheme", "s", "estimator", "bias", "mcse", "emp_var", "mse", "mean_V"
        );
        for r in &self.summary {
            let mv = r.mean_var_hat.map_or_else(|| "-".to_string(), |v| format!("{v:.5e}"));
            let _ = writeln!(
                t,
                "{:<14} {:>5} {:<10} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12}",
                r.scheme, r.s, r.estimator, r.bias, r.mcse, r.emp_var_div_r_minus_1, r.mse_div_r, mv
            );
        }
        t
    }
}
