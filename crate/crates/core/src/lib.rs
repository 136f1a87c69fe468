//! Learnersourced correction of IPA transcriptions for audio-aligned
//! Persian poetry.
//!
//! - [`phoneme`]: feature model and IPA tokenizer
//! - [`pwld`]: phonologically weighted Levenshtein distance
//! - [`task`]: task classes, distractors, scoring
//! - [`analytics`]: item error rates, weighted regression, CSV export
//! - [`store`]: aligned corpus, profiles, sessions, response log

pub mod analytics;
pub mod phoneme;
pub mod pwld;
pub mod store;
pub mod task;

pub use analytics::{ExistenceCode, ItemStats, RegressionModel};
pub use phoneme::{Phoneme, PhonemeInventory, PhonemeSequence};
pub use pwld::{CostConfig, PwldResult};
pub use store::Store;
pub use task::{Task, TaskClass};
