//! Surprisal-to-reading-time conversion with linear mixed models.

mod conversion;
mod design;
mod lmm;

pub use conversion::{
    average_predictions, conversion_problem, fit_conversion_suite, fixed_names, load_predictions_csv, predict_rt,
    write_predictions_csv, ConversionFit, FitSummary, Prediction, ITEM, PARTICIPANT, PREDICTION_HEADER,
};
pub use design::{build_design, ColumnScale, Design, DesignRow, Standardizer, Variant, PREDICTORS};
pub use lmm::{
    fit_lmm, wald_p_value, FixedEffect, GroupModes, GroupingFactor, LmmFit, LmmOptions, LmmProblem, RandomEffects,
    RandomTerm, VarianceComponent,
};
