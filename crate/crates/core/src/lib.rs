//! Split-door criterion for causal identification in time-series panels.
//!
//! Given daily traffic for (focal, target) pairs split into a treatment
//! series `x`, a referred outcome `y_r`, and a direct outcome `y_d`, the
//! criterion screens fixed-length time windows for statistical
//! independence of `x` and `y_d`. Windows that pass are free of shared
//! confounding (under connectedness and faithfulness assumptions), so the
//! observed click-through ratio on them estimates the causal effect of
//! `x` on `y_r`. The crate covers the whole workflow: ingestion and
//! slicing, the distance-correlation randomization test, discovery,
//! effect aggregation, multiple-testing error bounds, sensitivity
//! analysis for the connectedness assumption, and a synthetic generator
//! with known ground truth for verification.

pub mod discovery;
pub mod error;
pub mod estimation;
pub mod independence;
pub mod io;
pub mod multiplicity;
pub mod panel;
pub mod pipeline;
pub mod seed;
pub mod sensitivity;
pub mod synth;

pub use discovery::{discover, screen_periods, threshold, DiscoveryRun, SplitDoorInstance};
pub use error::{Error, Result};
pub use estimation::{
    aggregate_focal, group_breakdown, mean_effect, naive_ctr, EffectEstimate, FocalEstimate,
    GroupEffect,
};
pub use independence::{
    distance_correlation, randomization_pvalue, IndependenceResult, NullPool,
    PeriodIndependenceTest, ResamplingDcorTest,
};
pub use multiplicity::{
    effect_interval, fndr_bound, nettleton_pi_indep, storey_pi_indep, EffectInterval,
    IntervalMethod, MultiplicityReport, PiEstimator,
};
pub use panel::{
    apply_popularity_filter, filter_constant_direct, ingest_events, slice_periods, Channel,
    DailyPanel, PairKey, PairPeriod, VisitEvent,
};
pub use pipeline::{
    alpha_sweep, run_pipeline, write_outputs, InputFormat, PipelineReport, PipelineRun, RunConfig,
    SweepRow,
};
pub use sensitivity::{
    inject_confound, linear_bias_prediction, sensitivity_surface, SensitivityConfig,
    SensitivitySurface, SurfaceEstimator,
};
pub use synth::{generate_panel, GeneratorParams, GroundTruth};
