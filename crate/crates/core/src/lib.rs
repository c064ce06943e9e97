//! Dreaming Learning for recurrent next-token models.

pub mod corpus;
pub mod dreamtrain;
pub mod markov_env;
pub mod numcore;
pub mod rng;
pub mod seqmetrics;
pub mod seqmodel;
pub mod tokens;

pub use tokens::TokenSequence;
