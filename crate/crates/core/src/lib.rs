pub mod baselines;
pub mod conversation;
pub mod corpus;
pub mod embedding;
pub mod exec;
pub mod experiment;
pub mod hashing;
pub mod http;
pub mod ids;
pub mod llm;
pub mod matching;
pub mod metrics;
pub mod prompts;
pub mod relevancy;
pub mod synth;
pub mod text;

pub use ids::{ItemId, UserId};
