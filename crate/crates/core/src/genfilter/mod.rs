//! Generative filters: per-step retrained maps, a single pre-trained
//! summary-conditioned map, and the moment-summary recursion.

mod output;
mod pretrained;
mod sequential;
mod summary;

pub use output::{FilterOutput, FilterWarning, StepDiagnostics};
pub use pretrained::{
    moment_summary_filter, pretrain_moment_map, pretrain_summary_map, pretrained_filter_run,
    MomentMap, MomentPrior, PretrainedMap,
};
pub use sequential::{gen_filter_run, GenFilterConfig};
pub use summary::{apply_summary, sample_moments, stationary_obs_mean, SummarySpec};
