use super::ProbVolume;
use crate::edt::distance_to;
use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Signed distance map in [-1, 1]: negative inside the foreground, positive
/// outside, each side scaled by its own largest distance.
#[derive(Clone, Debug, PartialEq)]
pub struct SDMVolume {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl SDMVolume {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::InvalidInput("SDM length does not match shape".into()));
        }
        Ok(SDMVolume { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Voxel-unit distances: an inside voxel's distance to the nearest
/// background voxel and vice versa, so no voxel maps to exactly zero.
pub fn sdm_from_mask(label: &LabelVolume) -> Result<SDMVolume> {
    let fg: Vec<bool> = label.data.iter().map(|&v| v != 0).collect();
    let bg: Vec<bool> = fg.iter().map(|&f| !f).collect();
    let (Some(to_fg), Some(to_bg)) = (distance_to(&fg, &label.geom), distance_to(&bg, &label.geom)) else {
        return Err(Error::InvalidInput("signed distance map needs both foreground and background".into()));
    };
    let max_in = fg.iter().zip(&to_bg).filter(|(f, _)| **f).map(|(_, d)| *d).fold(0.0, f64::max);
    let max_out = fg.iter().zip(&to_fg).filter(|(f, _)| !**f).map(|(_, d)| *d).fold(0.0, f64::max);
    let data = (0..fg.len())
        .map(|i| if fg[i] { -to_bg[i] / max_in } else { to_fg[i] / max_out })
        .collect();
    Ok(SDMVolume { shape: label.shape(), data })
}

/// Logistic function without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1 + exp(-k z))^-1` per voxel. With negative `k` and negative-inside
/// maps, the foreground goes to ~1.
pub fn sdm_to_seg(z: &SDMVolume, k: f64) -> ProbVolume {
    ProbVolume::new(z.shape, z.data.iter().map(|&v| sigmoid(k * v)).collect())
        .expect("sigmoid output lies in [0, 1]")
}

/// Derivative of the transform with respect to `z`: `k T (1 - T)`.
pub fn sdm_to_seg_grad(z: f64, k: f64) -> f64 {
    let t = sigmoid(k * z);
    k * t * (1.0 - t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    #[test]
    fn half_space_sign_flip() {
        let geom = Geometry::isotropic([4, 4, 4]);
        let m = LabelVolume::from_fn(geom, |c| c[2] < 2);
        let s = sdm_from_mask(&m).unwrap();
        for i in 0..geom.len() {
            let k = geom.coords(i)[2];
            assert_eq!(s.data()[i] < 0.0, k < 2);
            assert!(s.data()[i] != 0.0 && s.data()[i].abs() <= 1.0);
        }
        assert_eq!(s.data().iter().cloned().fold(f64::MAX, f64::min), -1.0);
        assert_eq!(s.data().iter().cloned().fold(f64::MIN, f64::max), 1.0);
    }

    #[test]
    fn single_voxel_is_minus_one() {
        let geom = Geometry::isotropic([5, 5, 5]);
        let m = LabelVolume::from_fn(geom, |c| c == [2, 2, 2]);
        let s = sdm_from_mask(&m).unwrap();
        assert_eq!(s.data()[geom.index(2, 2, 2)], -1.0);
    }

    #[test]
    fn empty_or_full_is_an_error() {
        let geom = Geometry::isotropic([3, 3, 3]);
        assert!(sdm_from_mask(&LabelVolume::empty(geom)).is_err());
        assert!(sdm_from_mask(&LabelVolume::from_fn(geom, |_| true)).is_err());
    }

    #[test]
    fn transform_values() {
        let z = SDMVolume::new([1, 1, 3], vec![0.0, -0.01, 0.01]).unwrap();
        let p = sdm_to_seg(&z, -1500.0);
        assert_eq!(p.foreground()[0], 0.5);
        // 1 / (1 + e^-15) and 1 / (1 + e^15).
        assert!((p.foreground()[1] - 0.999_999_694_097_773).abs() < 1e-12);
        assert!((p.foreground()[2] - 3.059_022_269_256_247_6e-7).abs() < 1e-15);
        let extreme = SDMVolume::new([1, 1, 2], vec![-1.0, 1.0]).unwrap();
        let q = sdm_to_seg(&extreme, -1500.0);
        assert_eq!(q.foreground(), &[1.0, 0.0]);
        for z in [0.0, 0.3, -0.002] {
            for k in [2.0, -40.0] {
                let h = 1e-6;
                let fd = (sigmoid(k * (z + h)) - sigmoid(k * (z - h))) / (2.0 * h);
                assert!((fd - sdm_to_seg_grad(z, k)).abs() < 1e-4 * fd.abs().max(1e-8));
            }
        }
    }
}
