//! Exact variance oracles and data-driven variance estimators.

mod estimate;
mod theory;

pub use estimate::{
    conservative_var_estimate, covariance_bound_estimate, stratified_var_estimate, syg_var_estimate,
    within_variance_estimate, VarianceEstimate, VarianceRow,
};
pub use theory::{
    approx_var_dim, linear_variance, stratified_true_var, true_var_dr, true_var_ht_pps, true_var_ht_srs,
    within_mean_variance, TheoreticalVariance,
};
