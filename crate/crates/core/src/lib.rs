pub mod analysis;
pub mod corpus;
pub mod features;
pub mod lstm;
pub mod ngram;
pub mod ranker;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod variantgen;
pub mod vocab;
