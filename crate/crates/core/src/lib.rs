//! Counterexample-guided data augmentation for object detectors.
//!
//! A sampler proposes points of a semantic modification space, the generator
//! renders them into labeled road scenes, a detector is queried, and every
//! misclassified image is collected into an augmentation set and an error
//! table. Analyses of the error table bias subsequent sampling.

pub mod errortable;
pub mod generator;
pub mod jsonl;
pub mod metrics;
pub mod looper;
pub mod modspace;
pub mod oracle;
pub mod sampler;
