//! Pseudo-annotation of signed video from an English sentence and 2-D pose
//! keypoints: LLM gloss candidates, CTC fingerspelling alignment, isolated
//! sign alignment, and candidate ranking.

pub mod ctc;
pub mod evaluation;
pub mod fingerspelling;
pub mod gloss;
pub mod isr;
pub mod llm;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod pose;
pub mod synth;
pub mod timeline;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
