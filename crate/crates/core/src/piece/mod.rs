//! Counterfactual and semi-factual explanations by editing exceptional
//! layer-X features and rendering the result through the generator.

mod config;
mod explain;
mod invert;
mod latent;
mod modify;
mod select;
mod visualize;

pub use config::PieceConfig;
pub use explain::{
    explain, explain_from, ExplanationMode, ExplanationRequest, ExplanationResult, Models, PROPORTIONAL_FRACTIONS,
};
pub use invert::{invert_image, Inversion};
pub use latent::{LatentAdam, LatentEval, LatentModel, Objective, Terms};
pub use modify::{is_eligible, modify_features, Modification, ModificationStep, StopRule, Termination};
pub use select::{select_cf_class, ClassSelection};
pub use visualize::{visualize, Visualization};
