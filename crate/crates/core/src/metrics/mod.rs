//! Confusion matrices and the accuracy / F1 family, with text and PGM
//! rendering.

mod confusion;
mod render;

pub use confusion::{
    accuracy, confusion_from_pairs, f1_scores, load_cm, per_class_prf, ClassScores, ConfusionMatrix, F1Scores,
    MetricReport,
};
pub use render::{heatmap_pgm, render_heatmap, render_text, round3, CELL_PX};
