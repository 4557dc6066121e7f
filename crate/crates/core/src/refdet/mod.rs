//! Reference detectors the predict-and-compare scheme is benchmarked against.

pub mod bayes;
pub mod classic;
pub mod mosum;
pub mod ocd;
pub mod random;

pub use bayes::{BayesParams, NigPrior, RunLengthPosterior};
pub use classic::ClassicCusum;
pub use mosum::{MosumParams, TrendSeasonModel};
pub use ocd::{OcdParams, OcdState};
pub use random::random_baseline;
