//! Replicated experiments, exact enumeration and summary statistics.

mod enumerate;
mod sim;
mod summarize;

pub use enumerate::{enumerate, enumerate_report, outcome_count, EnumeratedMoments, EnumerationReport, MAX_OUTCOMES};
pub use sim::{
    run_simulation, EstimatorSpec, PiConfig, PiMethodName, PlotRow, PopulationSource, ResultRow, SimConfig, SimOutput,
    SummaryRow, VarianceOutRow,
};
pub use summarize::{summarize, SimSummary};

use rand::Rng;

use crate::assignment::{assign_completely_random, assign_stratified};
use crate::design::{draw_within, DesignPlan, DesignSpec, InclusionProbs};
use crate::error::{Error, Result};
use crate::estimators::{Estimate, EstimatorKind, Realization};
use crate::par;
use crate::population::Population;
use crate::variance::{conservative_var_estimate, stratified_var_estimate, VarianceEstimate};

/// One design, a fixed estimator list, and optionally the inclusion
/// probabilities needed for V̂_C (one set per stratum).
#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    pub pop: &'a Population,
    pub plan: DesignPlan,
    pub estimators: Vec<EstimatorKind>,
    /// θ for the fixed-θ Des Raj estimator.
    pub theta: f64,
    pub pis: Option<Vec<InclusionProbs>>,
}

/// Output of one replicate.
#[derive(Clone, Debug)]
pub struct Replicate {
    pub index: usize,
    pub realization: Realization,
    pub estimates: Vec<Estimate>,
    pub variance: Option<VarianceEstimate>,
}

/// The compact part of a replicate that simulations keep.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub index: usize,
    pub estimates: Vec<Estimate>,
    pub variance: Option<VarianceEstimate>,
}

impl<'a> Experiment<'a> {
    pub fn new(pop: &'a Population, spec: &DesignSpec, estimators: Vec<EstimatorKind>, theta: f64) -> Result<Self> {
        if estimators.is_empty() {
            return Err(Error::validation("no estimators requested"));
        }
        let plan = DesignPlan::new(pop, spec)?;
        Ok(Experiment { pop, plan, estimators, theta, pis: None })
    }

    pub fn with_inclusion(mut self, pis: Vec<InclusionProbs>) -> Result<Self> {
        if pis.len() != self.plan.groups.len() {
            return Err(Error::validation(format!(
                "{} sampling groups but {} inclusion-probability sets",
                self.plan.groups.len(),
                pis.len()
            )));
        }
        for (g, pi) in self.plan.groups.iter().zip(&pis) {
            pi.validate(g.len())?;
        }
        self.pis = Some(pis);
        Ok(self)
    }

    /// Sample clusters, assign arms, sample units, observe.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R, seed: Option<u64>) -> Result<Realization> {
        let samples = self.plan.draw_clusters(rng);
        let treated = self.plan.spec.treated;
        let assignment = if samples.len() == 1 {
            assign_completely_random(&samples[0], treated, rng)?
        } else {
            assign_stratified(&samples, treated, rng)?
        };
        let mut all: Vec<usize> = samples.concat();
        all.sort_unstable();
        let units = draw_within(&self.plan.within, &all, rng);
        Realization::observe(self.pop, &all, &assignment, &units, self.plan.within.unit_stratified, seed)
    }

    pub fn evaluate(&self, r: &Realization) -> Result<(Vec<Estimate>, Option<VarianceEstimate>)> {
        let estimates = self
            .estimators
            .iter()
            .map(|e| e.estimate(self.pop, r, self.theta))
            .collect::<Result<Vec<_>>>()?;
        let variance = match &self.pis {
            Some(pis) if self.plan.spec.scheme.is_pps() => Some(if pis.len() == 1 {
                conservative_var_estimate(self.pop, r, &pis[0])?
            } else {
                stratified_var_estimate(self.pop, r, pis)?
            }),
            _ => None,
        };
        Ok((estimates, variance))
    }

    /// Replicate `index` under substream (master, index).
    pub fn run_replicate(&self, master: u64, index: usize) -> Result<Replicate> {
        let inner = || {
            let mut rng = par::substream(master, index as u64);
            let realization = self.realize(&mut rng, Some(master))?;
            let (estimates, variance) = self.evaluate(&realization)?;
            Ok(Replicate { index, realization, estimates, variance })
        };
        inner().map_err(|e: Error| e.context(format_args!("replicate {index} (master seed {master})")))
    }

    /// Replicates 0..count in index order, spread over `workers` threads.
    pub fn run(&self, master: u64, count: usize, workers: usize) -> Result<Vec<ReplicateRecord>> {
        par::try_map_indices(count, workers, |i| {
            self.run_replicate(master, i).map(|r| ReplicateRecord {
                index: r.index,
                estimates: r.estimates,
                variance: r.variance,
            })
        })
    }
}
