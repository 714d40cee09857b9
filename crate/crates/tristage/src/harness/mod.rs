//! Experiment harness (to be filled in).
