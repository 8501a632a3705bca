//! Success / outcome predictor and the planner's scoring primitives.

pub mod features;
pub mod label;
pub mod model;
pub mod perturb;
pub mod score;

pub use features::{cell_feature_index, wm_features, WM_FEATURE_DIM};
pub use label::OutcomeLabel;
pub use model::{
    calibration_report, train_wm, wm_loss, CalibrationBin, CalibrationReport, Example, WMParams,
    WMPrediction, WmTrainConfig, DEFAULT_LAMBDA_TEXT, DEFAULT_WM_HIDDEN,
};
pub use perturb::{
    action_distance, grid_neighbor_set, shot_neighbors, PerturbSpec, Shot, DEFAULT_NEIGHBORS,
};
pub use score::{
    lcb_at_temperatures, lcb_score, stability_score, strategy1_value, LcbScore, Stability,
    DEFAULT_LAMBDA_LCB, DEFAULT_LAMBDA_PUCT, DEFAULT_LCB_SAMPLES,
};
