use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::volume::{LabelVolume, Volume3D};

/// A labeled training volume, intensities already scaled to [0, 1].
#[derive(Clone, Debug)]
pub struct LabeledVolume {
    pub image: Volume3D,
    pub label: LabelVolume,
}

/// Training pool of one run.
#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub labeled: Vec<LabeledVolume>,
    pub unlabeled: Vec<Volume3D>,
}

impl TrainData {
    /// Scales every image to [0, 1] and checks image/label shapes agree.
    pub fn new(labeled: Vec<(Volume3D, LabelVolume)>, unlabeled: Vec<Volume3D>) -> Result<Self> {
        let labeled = labeled
            .into_iter()
            .map(|(image, label)| {
                if image.shape() != label.shape() {
                    return Err(Error::ShapeMismatch(image.shape(), label.shape()));
                }
                Ok(LabeledVolume { image: image.min_max_scaled(), label })
            })
            .collect::<Result<_>>()?;
        let unlabeled = unlabeled.iter().map(Volume3D::min_max_scaled).collect();
        Ok(TrainData { labeled, unlabeled })
    }
}

/// One step's patches: labeled items first, then unlabeled.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[nl, 1, d, h, w]`.
    pub labeled: Tensor,
    /// Labels of the labeled items, concatenated.
    pub labels: Vec<u8>,
    /// `[nu, 1, d, h, w]`; `None` when the batch has no unlabeled items.
    pub unlabeled: Option<Tensor>,
}

impl Batch {
    pub fn num_labeled(&self) -> usize {
        self.labeled.batch()
    }

    pub fn num_unlabeled(&self) -> usize {
        self.unlabeled.as_ref().map_or(0, Tensor::batch)
    }

    pub fn patch_shape(&self) -> [usize; 3] {
        self.labeled.spatial()
    }

    pub fn labels_of(&self, item: usize) -> &[u8] {
        let v = self.labeled.item_len();
        &self.labels[item * v..(item + 1) * v]
    }

    /// The labeled-only sub-batch.
    pub fn labeled_only(&self) -> Batch {
        Batch { labeled: self.labeled.clone(), labels: self.labels.clone(), unlabeled: None }
    }
}

/// Copies the box at `origin` with extent `size` out of a volume.
pub fn crop<T: Copy>(data: &[T], shape: [usize; 3], origin: [usize; 3], size: [usize; 3]) -> Vec<T> {
    let mut out = Vec::with_capacity(size.iter().product());
    for i in 0..size[0] {
        for j in 0..size[1] {
            let row = ((origin[0] + i) * shape[1] + origin[1] + j) * shape[2] + origin[2];
            out.extend_from_slice(&data[row..row + size[2]]);
        }
    }
    out
}

/// Attempts at a uniform labeled patch before falling back to a
/// foreground-centred one.
const MAX_UNIFORM_TRIES: usize = 100;

/// Deterministic patch sampler: the batch sequence depends only on the seed.
/// Half of the labeled patches are centred on a random foreground voxel; the
/// rest are uniform but rejected until they contain foreground. Unlabeled
/// patches are uniform.
pub struct PatchSampler {
    rng: ChaCha8Rng,
    patch: [usize; 3],
    fg: Vec<Vec<usize>>,
}

impl PatchSampler {
    pub fn new(data: &TrainData, patch: [usize; 3], seed: u64) -> Result<Self> {
        if data.labeled.is_empty() {
            return Err(Error::InvalidInput("no labeled training volume".into()));
        }
        let shapes = data.labeled.iter().map(|l| l.image.shape()).chain(data.unlabeled.iter().map(Volume3D::shape));
        for s in shapes {
            if (0..3).any(|a| patch[a] > s[a]) {
                return Err(Error::InvalidConfig(format!("patch {patch:?} larger than volume {s:?}")));
            }
        }
        let fg: Vec<Vec<usize>> = data.labeled.iter().map(|l| l.label.foreground_indices().collect()).collect();
        if fg.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput("a labeled volume has no foreground".into()));
        }
        Ok(PatchSampler { rng: ChaCha8Rng::seed_from_u64(seed), patch, fg })
    }

    fn uniform_origin(&mut self, shape: [usize; 3]) -> [usize; 3] {
        let p = self.patch;
        [0, 1, 2].map(|a| self.rng.gen_range(0..=shape[a] - p[a]))
    }

    fn centred_origin(&mut self, vol: usize, l: &LabeledVolume) -> [usize; 3] {
        let idx = self.fg[vol][self.rng.gen_range(0..self.fg[vol].len())];
        let c = l.label.geom.coords(idx);
        let (p, s) = (self.patch, l.label.shape());
        [0, 1, 2].map(|a| c[a].saturating_sub(p[a] / 2).min(s[a] - p[a]))
    }

    fn labeled_patch(&mut self, data: &TrainData) -> (Vec<f32>, Vec<u8>) {
        let vol = self.rng.gen_range(0..data.labeled.len());
        let l = &data.labeled[vol];
        let shape = l.label.shape();
        let origin = if self.rng.gen_bool(0.5) {
            self.centred_origin(vol, l)
        } else {
            let mut found = None;
            for _ in 0..MAX_UNIFORM_TRIES {
                let o = self.uniform_origin(shape);
                if crop(&l.label.data, shape, o, self.patch).contains(&1) {
                    found = Some(o);
                    break;
                }
            }
            found.unwrap_or_else(|| self.centred_origin(vol, l))
        };
        (crop(&l.image.data, shape, origin, self.patch), crop(&l.label.data, shape, origin, self.patch))
    }

    pub fn sample(&mut self, data: &TrainData, labeled: usize, unlabeled: usize) -> Result<Batch> {
        let [d, h, w] = self.patch;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..labeled {
            let (im, lb) = self.labeled_patch(data);
            images.extend(im);
            labels.extend(lb);
        }
        let unl = if unlabeled > 0 {
            if data.unlabeled.is_empty() {
                return Err(Error::InvalidInput("batch needs unlabeled patches but the pool has none".into()));
            }
            let mut u = Vec::new();
            for _ in 0..unlabeled {
                let vol = &data.unlabeled[self.rng.gen_range(0..data.unlabeled.len())];
                let o = self.uniform_origin(vol.shape());
                u.extend(crop(&vol.data, vol.shape(), o, self.patch));
            }
            Some(Tensor::new(vec![unlabeled, 1, d, h, w], u)?)
        } else {
            None
        };
        Ok(Batch { labeled: Tensor::new(vec![labeled, 1, d, h, w], images)?, labels, unlabeled: unl })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn toy_data() -> TrainData {
        let g = Geometry::isotropic([12, 10, 16]);
        let label = LabelVolume::from_fn(g, |c| c == [2, 8, 13]);
        let image = Volume3D::new(g, (0..g.len()).map(|i| i as f32).collect()).unwrap();
        TrainData::new(vec![(image.clone(), label)], vec![image]).unwrap()
    }

    #[test]
    fn crop_reads_the_right_box() {
        let shape = [3, 4, 5];
        let data: Vec<usize> = (0..60).collect();
        assert_eq!(crop(&data, shape, [1, 2, 3], [2, 1, 2]), vec![33, 34, 53, 54]);
    }

    #[test]
    fn labeled_patches_always_hold_foreground() {
        let data = toy_data();
        let mut s = PatchSampler::new(&data, [4, 4, 4], 3).unwrap();
        for _ in 0..100 {
            let b = s.sample(&data, 1, 1).unwrap();
            assert!(b.labels.contains(&1));
            assert_eq!(b.num_unlabeled(), 1);
        }
    }

    #[test]
    fn same_seed_same_batches() {
        let data = toy_data();
        let draw = |seed| {
            let mut s = PatchSampler::new(&data, [4, 4, 8], seed).unwrap();
            (0..5).map(|_| s.sample(&data, 2, 2).unwrap().labeled.data).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
    }

    #[test]
    fn rejects_oversized_patches_and_empty_pools() {
        let data = toy_data();
        assert!(PatchSampler::new(&data, [16, 4, 4], 0).is_err());
        assert!(PatchSampler::new(&TrainData::default(), [4, 4, 4], 0).is_err());
        let mut s = PatchSampler::new(&data, [4, 4, 4], 0).unwrap();
        let no_unlabeled = TrainData { unlabeled: vec![], ..data };
        assert!(s.sample(&no_unlabeled, 1, 1).is_err());
    }
}
