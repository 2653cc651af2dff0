//! The recursive attack loop: expand, project, pick a decaying number of
//! candidates to verify against the victim, refit the alignment, re-score
//! everything and keep the best beams.

mod beam;
mod score;

pub use beam::{beam_step, run_attack, BeamState};
pub use score::{query_count, score_candidates, z_score};
