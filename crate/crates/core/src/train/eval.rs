use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{cl_dice, dice};
use crate::nn::{Graph, Tensor, UNet};
use crate::ssl::ProbVolume;
use crate::volume::{confusion_counts, LabelVolume, Volume3D};

use super::data::crop;

/// Window origins along one axis: every `stride`, plus one flush with the end.
pub fn window_starts(size: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + patch <= size).collect();
    if v.last() != Some(&(size - patch)) {
        v.push(size - patch);
    }
    v
}

/// Sliding-window foreground probability of a whole volume. Overlapping
/// windows are averaged, as are the decoders of a multi-decoder model.
/// `image` must already be scaled like the training data.
pub fn predict_volume(model: &UNet, image: &Volume3D, patch: [usize; 3], stride: [usize; 3]) -> Result<ProbVolume> {
    let shape = image.shape();
    if (0..3).any(|a| patch[a] > shape[a]) {
        return Err(Error::InvalidConfig(format!("patch {patch:?} larger than volume {shape:?}")));
    }
    let mut sum = vec![0f64; image.data.len()];
    let mut count = vec![0u32; image.data.len()];
    let starts: Vec<Vec<usize>> = (0..3).map(|a| window_starts(shape[a], patch[a], stride[a])).collect();
    for &i in &starts[0] {
        for &j in &starts[1] {
            for &k in &starts[2] {
                let x = Tensor::new(vec![1, 1, patch[0], patch[1], patch[2]], crop(&image.data, shape, [i, j, k], patch))?;
                let mut g = Graph::new(&model.params);
                let xv = g.input(x);
                let outs = model.forward(&mut g, xv, None)?;
                let scale = 1.0 / outs.len() as f64;
                for o in &outs {
                    let fg = g.value(o.seg_prob).channel(0, 1);
                    let mut q = 0;
                    for a in 0..patch[0] {
                        for b in 0..patch[1] {
                            let row = ((i + a) * shape[1] + j + b) * shape[2] + k;
                            for c in 0..patch[2] {
                                sum[row + c] += scale * fg[q] as f64;
                                q += 1;
                            }
                        }
                    }
                }
                for a in 0..patch[0] {
                    for b in 0..patch[1] {
                        let row = ((i + a) * shape[1] + j + b) * shape[2] + k;
                        count[row..row + patch[2]].iter_mut().for_each(|c| *c += 1);
                    }
                }
            }
        }
    }
    let probs = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    ProbVolume::new(shape, probs)
}

/// Binary segmentation at probability 0.5.
pub fn segment(model: &UNet, image: &Volume3D, patch: [usize; 3], stride: [usize; 3]) -> Result<LabelVolume> {
    let p = predict_volume(model, image, patch, stride)?;
    LabelVolume::new(image.geom, p.threshold())
}

/// Test-set scores of one volume.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeScores {
    pub dice: f64,
    pub cldice: f64,
    pub tprec: f64,
    pub tsens: f64,
}

pub fn score(pred: &LabelVolume, gt: &LabelVolume) -> Result<VolumeScores> {
    let r = cl_dice(pred, gt)?;
    Ok(VolumeScores { dice: dice(&confusion_counts(pred, gt)?), cldice: r.cldice, tprec: r.tprec, tsens: r.tsens })
}

/// Segments and scores every test pair; images are scaled here.
pub fn evaluate(model: &UNet, test: &[(Volume3D, LabelVolume)], patch: [usize; 3], stride: [usize; 3]) -> Result<Vec<VolumeScores>> {
    test.iter()
        .map(|(image, gt)| {
            let pred = segment(model, &image.min_max_scaled(), patch, stride)?;
            score(&pred, gt)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::UNetConfig;
    use crate::volume::Geometry;

    #[test]
    fn windows_cover_the_axis() {
        assert_eq!(window_starts(48, 32, 16), vec![0, 16]);
        assert_eq!(window_starts(50, 32, 16), vec![0, 16, 18]);
        assert_eq!(window_starts(32, 32, 16), vec![0]);
        assert_eq!(window_starts(40, 8, 16), vec![0, 16, 32]);
    }

    #[test]
    fn single_window_equals_direct_forward() {
        let net = UNet::new(UNetConfig::default(), 2).unwrap();
        let g = Geometry::isotropic([8, 8, 8]);
        let image = Volume3D::new(g, (0..512).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let p = predict_volume(&net, &image, [8, 8, 8], [4, 4, 4]).unwrap();
        let mut gr = Graph::new(&net.params);
        let x = gr.input(Tensor::new(vec![1, 1, 8, 8, 8], image.data.clone()).unwrap());
        let o = net.forward(&mut gr, x, None).unwrap();
        let direct = gr.value(o[0].seg_prob).channel(0, 1);
        for (a, b) in p.foreground().iter().zip(direct) {
            assert!((a - *b as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn overlapping_windows_stay_probabilities() {
        let net = UNet::new(UNetConfig { decoders: 2, ..Default::default() }, 2).unwrap();
        let g = Geometry::isotropic([12, 8, 10]);
        let image = Volume3D::new(g, (0..g.len()).map(|i| (i % 5) as f32 / 5.0).collect()).unwrap();
        let p = predict_volume(&net, &image, [8, 8, 8], [4, 4, 4]).unwrap();
        assert!(p.foreground().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(predict_volume(&net, &image, [16, 8, 8], [4, 4, 4]).is_err());
    }
}
