//! Character and word n-gram language models, ARPA persistence, mixtures
//! and corpus selection.

pub mod arpa;
pub mod backoff;
pub mod char_lm;
pub mod corpus;
pub mod mixture;
pub mod select;
pub mod vocab;
pub mod word_lm;

pub use arpa::{read_arpa, write_arpa};
pub use backoff::{BackoffModel, Entry};
pub use char_lm::CharLm;
pub use corpus::Corpus;
pub use mixture::{Mixture, SentenceModel};
pub use select::{select_corpus, Selection, SelectionConfig};
pub use vocab::Vocab;
pub use word_lm::{Discounting, WordLm, WordLmConfig};
