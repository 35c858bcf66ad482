//! Topic-preserving text generation driven by a deep-Q agent.
//!
//! A small language model proposes its top-K next tokens at every step; a
//! DQN picks among them. The reward blends topic similarity (cosine over
//! model embeddings), n-gram overlap with reference articles (BLEU), and
//! an adversarial fake-news classifier whose confidence is penalized.
//! Every learned component (language model, the two state autoencoders,
//! the classifier, the Q-networks) trains on the bundled nnkit substrate
//! and runs at desk scale in minutes.

pub mod error;
pub mod nnkit;
pub mod weights;

pub mod corpus;
pub mod fixtures;
pub mod langmodel;
pub mod statecoder;

pub mod adversary;
pub mod reward;

pub mod agent;
pub mod decoder;

pub use error::{Error, Result};
