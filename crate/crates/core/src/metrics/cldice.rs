use serde::{Deserialize, Serialize};

use super::{dice, skeletonize};
use crate::error::{Error, Result};
use crate::volume::{confusion_counts, LabelVolume};

/// Topology precision/sensitivity, their harmonic mean, and plain Dice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClDiceReport {
    pub tprec: f64,
    pub tsens: f64,
    pub cldice: f64,
    pub dice: f64,
}

/// Fraction of `skeleton` voxels that fall inside `mask` (0 for an empty skeleton).
fn covered_fraction(skeleton: &LabelVolume, mask: &LabelVolume) -> f64 {
    let (mut inside, mut total) = (0u64, 0u64);
    for (&s, &m) in skeleton.data.iter().zip(&mask.data) {
        if s != 0 {
            total += 1;
            inside += (m != 0) as u64;
        }
    }
    if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    }
}

pub(crate) fn harmonic(tprec: f64, tsens: f64) -> f64 {
    if tprec + tsens > 0.0 {
        2.0 * tprec * tsens / (tprec + tsens)
    } else {
        0.0
    }
}

/// clDice of a prediction against a reference. Skeleton voxels are
/// intersected with the raw masks, not with the other skeleton.
pub fn cl_dice(pred: &LabelVolume, gt: &LabelVolume) -> Result<ClDiceReport> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(pred.shape(), gt.shape()));
    }
    if gt.is_empty_mask() {
        return Err(Error::InvalidInput("clDice needs a non-empty reference".into()));
    }
    let dice = dice(&confusion_counts(pred, gt)?);
    let skel_gt = skeletonize(gt);
    let tsens = covered_fraction(&skel_gt.mask, pred);
    let tprec = if pred.is_empty_mask() {
        0.0
    } else {
        covered_fraction(&skeletonize(pred).mask, gt)
    };
    Ok(ClDiceReport {
        tprec,
        tsens,
        cldice: harmonic(tprec, tsens),
        dice,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn line(geom: Geometry, j: usize, k: std::ops::Range<usize>) -> LabelVolume {
        LabelVolume::from_fn(geom, |c| c[0] == 2 && c[1] == j && k.contains(&c[2]))
    }

    #[test]
    fn identical_masks_score_one() {
        let geom = Geometry::isotropic([8, 8, 8]);
        let m = LabelVolume::from_fn(geom, |c| (2..6).contains(&c[0]) && (1..7).contains(&c[2]));
        let r = cl_dice(&m, &m).unwrap();
        assert_eq!((r.tprec, r.tsens, r.cldice, r.dice), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn missing_one_of_two_vessels_halves_sensitivity() {
        let geom = Geometry::isotropic([10, 10, 10]);
        let a = line(geom, 2, 1..9);
        let b = line(geom, 7, 1..9);
        let gt = a.with_data(a.data.iter().zip(&b.data).map(|(x, y)| x | y).collect());
        let r = cl_dice(&a, &gt).unwrap();
        assert_eq!(r.tprec, 1.0);
        assert_eq!(r.tsens, 0.5);
        assert!((r.cldice - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let geom = Geometry::isotropic([6, 6, 6]);
        let gt = line(geom, 3, 0..6);
        let r = cl_dice(&LabelVolume::empty(geom), &gt).unwrap();
        assert_eq!((r.tprec, r.tsens, r.cldice, r.dice), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn errors_on_shape_mismatch_and_empty_reference() {
        let g1 = Geometry::isotropic([4, 4, 4]);
        let g2 = Geometry::isotropic([4, 4, 5]);
        let m = line(g1, 1, 0..4);
        assert!(cl_dice(&m, &line(g2, 1, 0..4)).is_err());
        assert!(cl_dice(&m, &LabelVolume::empty(g1)).is_err());
    }

    #[test]
    fn report_is_not_symmetric_but_score_is() {
        // Swapping arguments exchanges tprec and tsens; the harmonic mean is unchanged.
        let geom = Geometry::isotropic([10, 10, 10]);
        let a = line(geom, 2, 1..9);
        let b = line(geom, 7, 1..9);
        let both = a.with_data(a.data.iter().zip(&b.data).map(|(x, y)| x | y).collect());
        let ab = cl_dice(&a, &both).unwrap();
        let ba = cl_dice(&both, &a).unwrap();
        assert_ne!(ab, ba);
        assert_eq!((ab.tprec, ab.tsens), (ba.tsens, ba.tprec));
        assert_eq!(ab.cldice, ba.cldice);
    }
}
