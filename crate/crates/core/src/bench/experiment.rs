use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degrade::DegradationSpec;
use crate::error::{Error, Result};
use crate::io::{read_label, read_volume};
use crate::phantom::{generate_phantom, PhantomConfig};
use crate::train::{Composition, Method, TrainConfig, TrainData};
use crate::volume::{LabelVolume, Volume3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    CompositionSweep,
    SeedSweep,
    DegradationSweep,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::CompositionSweep => "composition_sweep",
            Protocol::SeedSweep => "seed_sweep",
            Protocol::DegradationSweep => "degradation_sweep",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where volumes come from.
///
/// A directory holds `train/images/*` and `test/images/*`, with labels of
/// the same file name under `train/labels/` and `test/labels/`. Training
/// images without a label can only be used as unlabeled data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Phantom {
        #[serde(default)]
        config: PhantomConfig,
        train_volumes: usize,
        test_volumes: usize,
        /// Phantom seeds are `seed..seed + train_volumes` for training and
        /// the next `test_volumes` values for testing.
        #[serde(default)]
        seed: u64,
    },
    Directory(PathBuf),
}

/// One benchmark sweep. Cells are the product of methods, compositions,
/// seeds and degradations; a `null` degradation trains on clean labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    pub methods: Vec<Method>,
    pub compositions: Vec<Composition>,
    pub seeds: Vec<u64>,
    #[serde(default = "clean_only")]
    pub degradations: Vec<Option<DegradationSpec>>,
    pub dataset: DatasetSpec,
    /// Template for every cell; `method`, `data_seed` and `weight_seed` are
    /// overwritten per cell.
    #[serde(default)]
    pub train: TrainConfig,
}

fn clean_only() -> Vec<Option<DegradationSpec>> {
    vec![None]
}

/// Everything needed to rerun one cell. Its hash is the cell key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub method: Method,
    pub composition: Composition,
    pub data_seed: u64,
    pub degradation: Option<DegradationSpec>,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
}

impl CellSpec {
    pub fn key(&self) -> String {
        let json = serde_json::to_vec(self).expect("cell spec serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn degradation_name(&self) -> String {
        scenario_name(&self.degradation)
    }
}

pub fn scenario_name(d: &Option<DegradationSpec>) -> String {
    d.as_ref().map_or_else(|| "reference".to_string(), |d| d.name())
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Checks what can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.methods.is_empty() || self.compositions.is_empty() || self.seeds.is_empty() || self.degradations.is_empty() {
            return bad("methods, compositions, seeds and degradations must be non-empty".into());
        }
        if self.protocol == Protocol::SeedSweep && self.seeds.len() < 2 {
            return bad("a seed sweep needs at least two seeds".into());
        }
        if let Some(c) = self.compositions.iter().find(|c| c.labeled == 0) {
            return bad(format!("composition {c:?} has no labeled volume"));
        }
        for d in self.degradations.iter().flatten() {
            d.validate()?;
        }
        if let DatasetSpec::Phantom { config, train_volumes, .. } = &self.dataset {
            config.validate()?;
            if let Some(c) = self.compositions.iter().find(|c| c.labeled + c.unlabeled > *train_volumes) {
                return bad(format!("composition {c:?} exceeds the pool of {train_volumes} training phantoms"));
            }
        }
        let mut probe = self.train.clone();
        for &m in &self.methods {
            probe.method = m;
            probe.validate()?;
        }
        Ok(())
    }

    /// All cells in sweep order: degradation, composition, method, seed.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for d in &self.degradations {
            for &composition in &self.compositions {
                for &method in &self.methods {
                    for &data_seed in &self.seeds {
                        let train = TrainConfig { method, data_seed, weight_seed: data_seed, ..self.train.clone() };
                        out.push(CellSpec {
                            method,
                            composition,
                            data_seed,
                            degradation: d.clone(),
                            train,
                            dataset: self.dataset.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

/// Loaded volumes. Training entries carry a label when one exists.
pub struct Dataset {
    pub train: Vec<(Volume3D, Option<LabelVolume>)>,
    pub test: Vec<(Volume3D, LabelVolume)>,
}

impl Dataset {
    pub fn load(spec: &DatasetSpec) -> Result<Self> {
        match spec {
            DatasetSpec::Phantom { config, train_volumes, test_volumes, seed } => {
                let gen = |s: u64| generate_phantom(&PhantomConfig { rng_seed: s, ..config.clone() });
                let train = (0..*train_volumes as u64)
                    .map(|i| gen(seed + i).map(|p| (p.image, Some(p.label))))
                    .collect::<Result<_>>()?;
                let test = (0..*test_volumes as u64)
                    .map(|i| gen(seed + *train_volumes as u64 + i).map(|p| (p.image, p.label)))
                    .collect::<Result<_>>()?;
                Ok(Dataset { train, test })
            }
            DatasetSpec::Directory(root) => {
                let train = list_images(&root.join("train"))?
                    .into_iter()
                    .map(|(img, lab)| Ok((read_volume(&img)?, lab.map(read_label).transpose()?)))
                    .collect::<Result<_>>()?;
                let test = list_images(&root.join("test"))?
                    .into_iter()
                    .map(|(img, lab)| {
                        let lab = lab.ok_or_else(|| Error::InvalidInput(format!("test image {} has no label", img.display())))?;
                        Ok((read_volume(&img)?, read_label(lab)?))
                    })
                    .collect::<Result<_>>()?;
                Ok(Dataset { train, test })
            }
        }
    }

    pub fn labeled_pool(&self) -> usize {
        self.train.iter().filter(|(_, l)| l.is_some()).count()
    }

    /// Fails when a test image also appears in the training pool, compared
    /// by content so renamed copies are caught too.
    pub fn check_disjoint(&self) -> Result<()> {
        let digest = |v: &Volume3D| {
            let mut h = Sha256::new();
            for s in v.shape() {
                h.update((s as u64).to_le_bytes());
            }
            for x in &v.data {
                h.update(x.to_le_bytes());
            }
            h.finalize()
        };
        let train: HashMap<_, usize> = self.train.iter().enumerate().map(|(i, (v, _))| (digest(v), i)).collect();
        for (j, (v, _)) in self.test.iter().enumerate() {
            if let Some(i) = train.get(&digest(v)) {
                return Err(Error::InvalidInput(format!("test volume {j} duplicates training volume {i}")));
            }
        }
        Ok(())
    }

    /// Training pool of one cell. The pool is shuffled by `data_seed`; the
    /// first labeled candidates become labeled, the next volumes (labels
    /// dropped) unlabeled, so no volume is drawn twice within a seed.
    pub fn select(&self, cell: &CellSpec) -> Result<TrainData> {
        let Composition { labeled, unlabeled } = cell.composition;
        if labeled > self.labeled_pool() || labeled + unlabeled > self.train.len() {
            return Err(Error::InvalidConfig(format!(
                "composition ({labeled}, {unlabeled}) exceeds the pool ({} volumes, {} labeled)",
                self.train.len(),
                self.labeled_pool()
            )));
        }
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cell.data_seed));
        let chosen: Vec<usize> = order.iter().copied().filter(|&i| self.train[i].1.is_some()).take(labeled).collect();
        let rest: Vec<usize> = order.iter().copied().filter(|i| !chosen.contains(i)).collect();
        let mut l = Vec::with_capacity(labeled);
        for &i in &chosen {
            let (img, lab) = &self.train[i];
            let lab = lab.as_ref().expect("labeled candidate");
            let lab = match &cell.degradation {
                Some(d) => d.apply(lab)?,
                None => lab.clone(),
            };
            l.push((img.clone(), lab));
        }
        let u = rest[..unlabeled].iter().map(|&i| self.train[i].0.clone()).collect();
        TrainData::new(l, u)
    }
}

fn is_volume_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".nii") || name.ends_with(".nii.gz") || name.ends_with(".bin")
}

fn list_images(dir: &Path) -> Result<Vec<(PathBuf, Option<PathBuf>)>> {
    let images = dir.join("images");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&images).map_err(|e| Error::io(&images, e))? {
        let path = entry.map_err(|e| Error::io(&images, e))?.path();
        if !is_volume_file(&path) {
            continue;
        }
        let label = dir.join("labels").join(path.file_name().expect("file entry"));
        out.push((path, label.exists().then_some(label)));
    }
    out.sort();
    Ok(out)
}
