//! Garden-path effects, bootstrap intervals, correlations, interaction
//! contrasts and the lexical/syntactic quadrant split.

mod contrasts;
mod correlation;
mod effects;
mod quadrant;

pub use contrasts::{fit_interaction_model, interaction_contrasts, write_contrasts_csv, Contrast, ContrastResult};
pub use correlation::{correlation_report, pearson, write_correlations_csv, Correlation};
pub use effects::{
    bootstrap_ci, effect_table, garden_path_effect, quantile, region_sums, surprisal_differences, write_effects_csv,
    write_surprisal_differences_csv, ConditionSums, EffectEstimate, Measure, Reading, Region, Source,
    SurprisalDifference, DEFAULT_RESAMPLES,
};
pub use quadrant::{quadrant_report, write_scatter_csv, Quadrant, QuadrantReport, QuadrantToken};
