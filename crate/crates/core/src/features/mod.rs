//! Feature engineering: numeral embeddings, normalization, star power,
//! competition features, and the fixed-slot tokenization of movies.

mod competition;
mod layout;
mod normalize;
mod numeral;
mod person;
mod tokenize;
mod vocab;

pub use competition::{competition_features, CompetitionIndex, COMPETITION_WINDOW_DAYS};
pub use layout::{LayoutConfig, SlotKind, SlotLayout, SlotSpec, ACTOR_STRIDE, CREW_STRIDE, FIELD_GROUPS};
pub use normalize::{names, normalize_feature, FeatureStat, FeatureStats, NormalizerKind};
pub use numeral::{numeral_embed, NumeralEmbedder, NumeralEmbedderConfig};
pub use person::{person_stats, PersonHistory, PersonStats};
pub use tokenize::{FeatureContext, Slot, TokenizedMovie};
pub use vocab::{FieldGroup, TokenGroup, VocabConfig, Vocabulary, MASK, MONTHS, N_SPECIAL, NO_YES, OTHERS, PAD};
