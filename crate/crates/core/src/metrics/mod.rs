//! Evaluation metrics: Dice and the centerline-based clDice family.

mod cldice;
mod skeleton;

pub use cldice::{cl_dice, ClDiceReport};
pub use skeleton::{skeletonize, Skeleton};

use crate::volume::ConfusionCounts;

/// `2tp / (2tp + fp + fn)`; two empty masks agree vacuously (1.0).
pub fn dice(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.true_pos + c.false_pos + c.false_neg;
    if denom == 0 {
        1.0
    } else {
        2.0 * c.true_pos as f64 / denom as f64
    }
}
