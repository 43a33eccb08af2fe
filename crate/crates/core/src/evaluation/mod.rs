//! Post-processing of fitted chains and simulation of synthetic tracks.

mod icl;
mod simulate;
mod summaries;

pub use icl::{complete_loglik, icl, icl_free_parameters, IclReport};
pub use simulate::{simulate_dataset, simulate_with, SimScenario, SimulatedData};
pub use summaries::{
    logratio_report, match_components, predictive_densities, probability_timeseries, projected_normal_density,
    quantile, reflected_kde, LogratioSummary, PredictiveDensities, ProbSummary,
};
