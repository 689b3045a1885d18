//! Processing of binned photocount records: thinning, grouping by mode
//! count, conditioning on the subtraction total, and model comparison.

mod estimate;
mod fit;
mod gof;
mod trace;

pub use estimate::{estimate_moments, sample_g2, EstimateReport};
pub use fit::{fit_mu0, Mu0Fit, SearchBoundary};
pub use gof::{chi2_survival, chi2_test, GofReport, PooledCell, DEFAULT_MIN_EXPECTED, MIN_GOF_SAMPLES};
pub use trace::{
    bin_timestamps, condition_on, group_and_condition, group_records, thin_bins, Bin,
    BinnedTrace, GroupRecord, TimeTags, EVENTS_HEADER, TRACE_HEADER,
};
