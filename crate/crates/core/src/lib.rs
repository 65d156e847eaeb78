//! Deterministic desk-scale toolkit for an autonomous 3D-printing agent:
//! G-code parsing and emission, a virtual printer plant, the closed-loop
//! flow-rate controller, caption synthesis and extraction, an embedding-backed
//! fact store, a primitive-composition geometry pipeline, and the evaluation
//! metric suite (MAE, recall, CIDEr, alignment, Elo).
//!
//! Everything that would normally need a camera, a model checkpoint, or a
//! remote LLM is behind a provider interface with a deterministic local
//! stand-in, so the whole crate tests hermetically.
//!
//! With the default `parallel` feature, the data-parallel inner loops
//! (benchmark episodes, retrieval scans, calibration draws, layer slicing)
//! run on rayon; disabling the feature falls back to equivalent sequential
//! code paths that produce identical results.

pub mod control;
pub mod gcode;
pub mod perception;
pub mod printer;
pub mod rag;
