//! Masked language model pretraining under a fixed wall-clock budget.
//!
//! * [`corpus`] turns raw text into pre-masked, globally shuffled shards.
//! * [`schedule`] and [`optim`] hold the budget-synchronised linear schedule
//!   and AdamW.
//! * [`model`] is a transformer-encoder MLM with sparse prediction and
//!   gradient accumulation.
//! * [`sweep`] runs a hyperparameter grid under a shared budget with
//!   time-based pruning.
//! * [`cost`] covers GB-hour, dollar and days-to-cover arithmetic.

pub mod clock;
pub mod corpus;
pub mod cost;
pub mod model;
pub mod optim;
pub mod rng;
pub mod schedule;
pub mod sweep;
