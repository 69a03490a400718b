//! Behavior-shift features from search and watch history exports, and the
//! group-difference statistics computed over them.

pub mod cohort;
pub mod features;
pub mod ingest;
pub mod lexicon;
pub mod report;
pub mod stats;
pub mod synth;
pub mod timeline;
