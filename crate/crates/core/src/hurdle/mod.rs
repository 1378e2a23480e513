//! Per-class, per-neuron hurdle models of layer-X activations and the rules
//! that flag a feature as exceptional.

mod dist;
mod fit;
mod ks;
mod model;
pub mod special;
mod table;

pub use dist::{Family, Location, Pdf};
pub use fit::{fit_pdf, fit_theta, gamma_mle, CandidateFit, PdfFit, CANDIDATES, LOCATION_OFFSET, MIN_POSITIVE_SAMPLES};
pub use ks::{kolmogorov_q, ks_p_value, ks_statistic};
pub use model::{
    classify_exceptional, rule_probabilities, rules_for, ExceptionalFeature, Exceptionality, FitOutcome,
    NeuronClassModel, Rule,
};
pub use table::{collect_latents, LatentPartition, StatsTable, DEFAULT_ALPHA};
