//! One optimisation step per method. Every step forwards labeled items
//! first, computes its losses in f64 on the foreground channel and seeds
//! the tape with their gradients.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use super::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{Adam, Discriminator, Graph, HeadOutputs, Sgd, Tensor, UNet, Var};
use crate::ssl::{
    bce_with_logits, cross_entropy, ema_update, gaussian_rampup, masked_soft_dice, mse, sdm_from_mask, sdm_to_seg_grad,
    sharpen_value, sigmoid, soft_dice, uncertainty_map, uncertainty_threshold, ProbVolume, ScheduleState,
    UncertaintyVolume,
};
use crate::volume::{Geometry, LabelVolume};

/// Loss terms of one step, all evaluated before the parameter update.
/// Terms a method does not use are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub total: f64,
    /// Supervised objective, including the weighted distance term.
    pub supervised: f64,
    pub dice: f64,
    pub cross_entropy: f64,
    pub sdm: Option<f64>,
    pub consistency: Option<f64>,
    pub consistency_weight: Option<f64>,
    pub adversarial: Option<f64>,
    pub discriminator: Option<f64>,
    pub tau: Option<f64>,
    pub mask_fraction: Option<f64>,
}

impl LossReport {
    fn check_finite(&self) -> Result<()> {
        let terms = [Some(self.total), self.consistency, self.adversarial, self.discriminator, self.sdm];
        if terms.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("loss at step {}: {self:?}", self.step)))
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seeds for the random draws of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepSeed(pub u64);

impl StepSeed {
    pub fn for_step(base: u64, t: u64) -> Self {
        StepSeed(splitmix(base ^ splitmix(t)))
    }

    fn derive(self, k: u64) -> u64 {
        splitmix(self.0 ^ splitmix(k.wrapping_add(0x5151)))
    }

    pub fn student_dropout(self) -> u64 {
        self.derive(1)
    }

    fn noise(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(2))
    }

    fn mc_pass(self, i: usize) -> u64 {
        self.derive(100 + i as u64)
    }
}

/// Adds clipped Gaussian noise (std `std`, clipped to `±2 std`).
pub fn perturb(t: &Tensor, std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    if std <= 0.0 {
        return t.clone();
    }
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = t.data.iter().map(|&v| v + normal.sample(rng).clamp(-2.0 * std, 2.0 * std) as f32).collect();
    Tensor { shape: t.shape.clone(), data }
}

/// Labeled items followed by unlabeled ones.
fn join(labeled: &Tensor, unlabeled: Option<&Tensor>) -> Tensor {
    let Some(u) = unlabeled else { return labeled.clone() };
    let mut shape = labeled.shape.clone();
    shape[0] += u.batch();
    let mut data = labeled.data.clone();
    data.extend_from_slice(&u.data);
    Tensor { shape, data }
}

/// Channel `c` of items `items`, flattened, as f64.
fn channel_values(t: &Tensor, c: usize, items: Range<usize>) -> Vec<f64> {
    items.flat_map(|n| t.channel(n, c).iter().map(|&v| v as f64)).collect()
}

/// Gradient buffers keyed by tape variable.
struct Seeds(Vec<(Var, Vec<f32>)>);

impl Seeds {
    fn add(&mut self, g: &Graph, var: Var, c: usize, items: Range<usize>, grad: &[f64], scale: f64) {
        if scale == 0.0 {
            return;
        }
        let t = g.value(var);
        let pos = match self.0.iter().position(|(v, _)| *v == var) {
            Some(p) => p,
            None => {
                self.0.push((var, vec![0.0; t.data.len()]));
                self.0.len() - 1
            }
        };
        let buf = &mut self.0[pos].1;
        let v: usize = t.shape[2..].iter().product();
        let il = t.item_len();
        let mut k = 0;
        for n in items {
            let off = n * il + c * v;
            for b in &mut buf[off..off + v] {
                *b += (scale * grad[k]) as f32;
                k += 1;
            }
        }
    }

    fn backward(&self, g: &mut Graph) -> Vec<Vec<f32>> {
        let refs: Vec<(Var, &[f32])> = self.0.iter().map(|(v, b)| (*v, b.as_slice())).collect();
        g.backward(&refs).params
    }
}

/// Soft Dice plus cross-entropy of foreground probabilities against labels,
/// with the summed gradient.
pub fn supervised_loss(p: &[f64], labels: &[u8]) -> (f64, f64, Vec<f64>) {
    let g: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let (dice, dd) = soft_dice(p, &g);
    let (ce, dc) = cross_entropy(p, labels);
    (dice, ce, dd.iter().zip(&dc).map(|(a, b)| a + b).collect())
}

/// Regression target for the distance head. Patches without foreground or
/// without background map to the constant +1 or -1 respectively.
pub fn sdm_target(labels: &[u8], shape: [usize; 3]) -> Result<Vec<f64>> {
    let label = LabelVolume::new(Geometry::isotropic(shape), labels.to_vec())?;
    match label.count() {
        0 => Ok(vec![1.0; labels.len()]),
        n if n == labels.len() => Ok(vec![-1.0; labels.len()]),
        _ => Ok(sdm_from_mask(&label)?.data().to_vec()),
    }
}

/// Student-side consistency: soft Dice of `student` against a fixed
/// `target`, restricted to `mask`. Gradient is with respect to `student`.
pub fn consistency_loss(student: &[f64], target: &[f64], mask: Option<&[bool]>) -> (f64, Vec<f64>) {
    if mask.is_some_and(|m| !m.contains(&true)) {
        return (0.0, vec![0.0; student.len()]);
    }
    let (v, dp, _) = masked_soft_dice(student, target, mask);
    (v, dp)
}

/// Agreement between the segmentation head and the transformed distance
/// head: soft Dice of `p` against `sigmoid(k z)`, with gradients for both.
pub fn dtc_consistency(p: &[f64], z: &[f64], k: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let q: Vec<f64> = z.iter().map(|&v| sigmoid(k * v)).collect();
    let (v, dp, dq) = masked_soft_dice(p, &q, None);
    let dz = dq.iter().zip(z).map(|(g, &zi)| g * sdm_to_seg_grad(zi, k)).collect();
    (v, dp, dz)
}

/// Mutual supervision of two decoders: each is pulled towards the other's
/// sharpened (and gradient-free) prediction. Returns the summed term and
/// gradients with respect to `pa` and `pb`.
pub fn cross_sharpened_loss(pa: &[f64], pb: &[f64], temperature: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let sa: Vec<f64> = pa.iter().map(|&p| sharpen_value(p, temperature)).collect();
    let sb: Vec<f64> = pb.iter().map(|&p| sharpen_value(p, temperature)).collect();
    let (lb, db) = soft_dice(pb, &sa);
    let (la, da) = soft_dice(pa, &sb);
    (la + lb, da, db)
}

/// Supervised terms on the labeled items `0..nl` of every decoder, plus the
/// weighted distance regression when `alpha` is given and the model has that head.
fn add_supervised(g: &Graph, outs: &[HeadOutputs], batch: &Batch, alpha: Option<f64>, seeds: &mut Seeds, report: &mut LossReport) -> Result<()> {
    let nl = batch.num_labeled();
    for o in outs {
        let p = channel_values(g.value(o.seg_prob), 1, 0..nl);
        let (dice, ce, grad) = supervised_loss(&p, &batch.labels);
        report.dice += dice;
        report.cross_entropy += ce;
        seeds.add(g, o.seg_prob, 1, 0..nl, &grad, 1.0);
    }
    report.supervised = report.dice + report.cross_entropy;
    if let (Some(sdm), Some(alpha)) = (outs[0].sdm, alpha) {
        let shape = batch.patch_shape();
        let mut target = Vec::with_capacity(batch.labels.len());
        for n in 0..nl {
            target.extend(sdm_target(batch.labels_of(n), shape)?);
        }
        let (v, grad) = mse(&channel_values(g.value(sdm), 0, 0..nl), &target);
        seeds.add(g, sdm, 0, 0..nl, &grad, alpha);
        report.sdm = Some(v);
        report.supervised += alpha * v;
    }
    Ok(())
}

fn check_params(model: &UNet) -> Result<()> {
    if model.params.values.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("model parameters".into()))
    }
}

fn finish(g: &mut Graph, seeds: &Seeds, report: LossReport) -> Result<(Vec<Vec<f32>>, LossReport)> {
    report.check_finite()?;
    Ok((seeds.backward(g), report))
}

fn apply(model: &mut UNet, opt: &mut Sgd, grads: &[Vec<f32>]) -> Result<()> {
    opt.step(&mut model.params, grads);
    check_params(model)
}

fn require_unlabeled(batch: &Batch) -> Result<&Tensor> {
    batch.unlabeled.as_ref().filter(|u| u.batch() > 0).ok_or_else(|| Error::InvalidInput("batch has no unlabeled patches".into()))
}

fn require_labeled(batch: &Batch) -> Result<()> {
    if batch.num_labeled() == 0 {
        return Err(Error::InvalidInput("batch has no labeled patches".into()));
    }
    Ok(())
}

/// Soft Dice plus cross-entropy on the labeled patches only, summed over
/// decoders; unlabeled patches in `batch` are ignored.
pub fn step_supervised(batch: &Batch, model: &mut UNet, opt: &mut Sgd, seed: StepSeed) -> Result<LossReport> {
    require_labeled(batch)?;
    let (grads, report) = {
        let mut g = Graph::new(&model.params);
        let x = g.input(batch.labeled.clone());
        let outs = model.forward(&mut g, x, Some(seed.student_dropout()))?;
        let mut seeds = Seeds(Vec::new());
        let mut report = LossReport::default();
        add_supervised(&g, &outs, batch, None, &mut seeds, &mut report)?;
        report.total = report.supervised;
        finish(&mut g, &seeds, report)?
    };
    apply(model, opt, &grads)?;
    Ok(report)
}

/// Student forward on clean labeled and perturbed unlabeled patches.
struct StudentPass<'a> {
    g: Graph<'a>,
    outs: Vec<HeadOutputs>,
    seeds: Seeds,
    report: LossReport,
}

fn student_pass<'a>(batch: &Batch, student: &'a UNet, noisy_unlabeled: Option<Tensor>, alpha: f64, seed: StepSeed) -> Result<StudentPass<'a>> {
    require_labeled(batch)?;
    let unl = noisy_unlabeled.or_else(|| batch.unlabeled.clone());
    let mut g = Graph::new(&student.params);
    let x = g.input(join(&batch.labeled, unl.as_ref()));
    let outs = student.forward(&mut g, x, Some(seed.student_dropout()))?;
    let mut seeds = Seeds(Vec::new());
    let mut report = LossReport::default();
    add_supervised(&g, &outs, batch, Some(alpha), &mut seeds, &mut report)?;
    Ok(StudentPass { g, outs, seeds, report })
}

fn teacher_probs(teacher: &UNet, input: Tensor) -> Result<Vec<f64>> {
    let mut g = Graph::new(&teacher.params);
    let x = g.input(input);
    let outs = teacher.forward(&mut g, x, None)?;
    let n = g.value(x).batch();
    Ok(channel_values(g.value(outs[0].seg_prob), 1, 0..n))
}

/// Mean-teacher step: consistency between student and EMA teacher on
/// differently perturbed unlabeled patches, then the teacher update.
pub fn step_mt(batch: &Batch, student: &mut UNet, opt: &mut Sgd, teacher: &mut UNet, cfg: &TrainConfig, s: &ScheduleState, seed: StepSeed) -> Result<LossReport> {
    mean_teacher_step(batch, student, opt, teacher, cfg, s, seed, None)
}

/// Uncertainty-aware mean teacher with the threshold from the schedule.
pub fn step_uamt(batch: &Batch, student: &mut UNet, opt: &mut Sgd, teacher: &mut UNet, cfg: &TrainConfig, s: &ScheduleState, seed: StepSeed) -> Result<LossReport> {
    let tau = uncertainty_threshold(s)?;
    step_uamt_with_threshold(batch, student, opt, teacher, cfg, s, seed, tau)
}

/// Uncertainty-aware mean teacher with an explicit threshold `tau`.
#[allow(clippy::too_many_arguments)]
pub fn step_uamt_with_threshold(
    batch: &Batch,
    student: &mut UNet,
    opt: &mut Sgd,
    teacher: &mut UNet,
    cfg: &TrainConfig,
    s: &ScheduleState,
    seed: StepSeed,
    tau: f64,
) -> Result<LossReport> {
    if cfg.mc_passes == 0 {
        return Err(Error::InvalidConfig("mc_passes must be at least 1".into()));
    }
    mean_teacher_step(batch, student, opt, teacher, cfg, s, seed, Some(tau))
}

/// Entropy of the mean of `cfg.mc_passes` dropout passes of the teacher, plus
/// its deterministic foreground prediction. The input is treated as one
/// volume stacked along the first axis.
pub fn teacher_uncertainty(teacher: &UNet, input: &Tensor, mc_passes: usize, seed: StepSeed) -> Result<(Vec<f64>, UncertaintyVolume)> {
    let n = input.batch();
    let [d, h, w] = input.spatial();
    let shape = [n * d, h, w];
    let mut g = Graph::new(&teacher.params);
    let x = g.input(input.clone());
    let feats = teacher.features(&mut g, x)?;
    let det = teacher.heads(&mut g, &feats, None);
    let p_t = channel_values(g.value(det[0].seg_prob), 1, 0..n);
    let mut passes = Vec::with_capacity(mc_passes);
    for i in 0..mc_passes {
        let o = teacher.heads(&mut g, &feats, Some(seed.mc_pass(i)));
        passes.push(ProbVolume::new(shape, channel_values(g.value(o[0].seg_prob), 1, 0..n))?);
    }
    Ok((p_t, uncertainty_map(&passes)?))
}

#[allow(clippy::too_many_arguments)]
fn mean_teacher_step(
    batch: &Batch,
    student: &mut UNet,
    opt: &mut Sgd,
    teacher: &mut UNet,
    cfg: &TrainConfig,
    s: &ScheduleState,
    seed: StepSeed,
    tau: Option<f64>,
) -> Result<LossReport> {
    let unl = require_unlabeled(batch)?;
    let (nl, nu) = (batch.num_labeled(), unl.batch());
    let mut noise = seed.noise();
    let student_in = perturb(unl, cfg.noise_std, &mut noise);
    let teacher_in = perturb(unl, cfg.noise_std, &mut noise);
    let lambda = gaussian_rampup(s)?;
    let (grads, report) = {
        let mut sp = student_pass(batch, student, Some(student_in), 0.0, seed)?;
        let (target, mask) = match tau {
            None => (teacher_probs(teacher, teacher_in)?, None),
            Some(tau) => {
                let (p_t, u) = teacher_uncertainty(teacher, &teacher_in, cfg.mc_passes, seed)?;
                let mask: Vec<bool> = u.data().iter().map(|&v| v < tau).collect();
                sp.report.tau = Some(tau);
                sp.report.mask_fraction = Some(mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64);
                (p_t, Some(mask))
            }
        };
        let p_s = channel_values(sp.g.value(sp.outs[0].seg_prob), 1, nl..nl + nu);
        let (lc, grad) = consistency_loss(&p_s, &target, mask.as_deref());
        sp.seeds.add(&sp.g, sp.outs[0].seg_prob, 1, nl..nl + nu, &grad, lambda);
        sp.report.consistency = Some(lc);
        sp.report.consistency_weight = Some(lambda);
        sp.report.total = sp.report.supervised + lambda * lc;
        finish(&mut sp.g, &sp.seeds, sp.report)?
    };
    apply(student, opt, &grads)?;
    ema_update(&mut teacher.params.values, &student.params.values, cfg.ema_decay as f32)?;
    Ok(report)
}

/// `[n, 2, ...]` pairs of image and signed distance, item by item.
fn pair_tensor(images: &Tensor, sdm: &Tensor, items: Range<usize>) -> Tensor {
    let [d, h, w] = images.spatial();
    let n = items.len();
    let mut data = Vec::with_capacity(n * 2 * d * h * w);
    for i in items {
        data.extend_from_slice(images.item(i));
        data.extend_from_slice(sdm.item(i));
    }
    Tensor { shape: vec![n, 2, d, h, w], data }
}

/// One discriminator update towards `targets` (1 = labeled origin).
/// Returns the binary cross-entropy before the update.
pub fn discriminator_step(disc: &mut Discriminator, opt: &mut Adam, pairs: Tensor, targets: &[f64]) -> Result<f64> {
    let (loss, grads) = {
        let mut g = Graph::new(&disc.params);
        let x = g.input(pairs);
        let logits = disc.forward(&mut g, x)?;
        let z: Vec<f64> = g.value(logits).data.iter().map(|&v| v as f64).collect();
        let (loss, dz) = bce_with_logits(&z, targets);
        let seed: Vec<f32> = dz.iter().map(|&v| v as f32).collect();
        (loss, g.backward(&[(logits, &seed)]).params)
    };
    opt.step(&mut disc.params, &grads);
    Ok(loss)
}

/// Shape-aware adversarial step: supervised segmentation plus distance
/// regression, a discriminator update on (image, distance) pairs, then a
/// segmenter update that also tries to make unlabeled pairs look labeled.
#[allow(clippy::too_many_arguments)]
pub fn step_sassnet(
    batch: &Batch,
    model: &mut UNet,
    opt: &mut Sgd,
    disc: &mut Discriminator,
    disc_opt: &mut Adam,
    cfg: &TrainConfig,
    s: &ScheduleState,
    seed: StepSeed,
) -> Result<LossReport> {
    if !model.cfg.has_sdm() {
        return Err(Error::InvalidConfig("adversarial step needs a distance head".into()));
    }
    let unl = require_unlabeled(batch)?;
    let (nl, nu) = (batch.num_labeled(), unl.batch());
    let lambda = gaussian_rampup(s)?;
    let images = join(&batch.labeled, Some(unl));
    let (grads, report) = {
        let mut sp = student_pass(batch, model, None, cfg.alpha, seed)?;
        let sdm_var = sp.outs[0].sdm.expect("checked above");
        let sdm = sp.g.value(sdm_var).clone();
        let targets: Vec<f64> = (0..nl + nu).map(|i| if i < nl { 1.0 } else { 0.0 }).collect();
        sp.report.discriminator = Some(discriminator_step(disc, disc_opt, pair_tensor(&images, &sdm, 0..nl + nu), &targets)?);

        let mut dg = Graph::new(&disc.params);
        let x = dg.input_with_grad(pair_tensor(&images, &sdm, nl..nl + nu));
        let logits = disc.forward(&mut dg, x)?;
        let z: Vec<f64> = dg.value(logits).data.iter().map(|&v| v as f64).collect();
        let (adv, dz) = bce_with_logits(&z, &vec![1.0; nu]);
        let seed_z: Vec<f32> = dz.iter().map(|&v| v as f32).collect();
        let dgrads = dg.backward(&[(logits, &seed_z)]);
        let dpair = dgrads.input(x).expect("input registered for gradients");
        let v: usize = images.item_len();
        let dsdm: Vec<f64> = (0..nu).flat_map(|i| dpair[(2 * i + 1) * v..(2 * i + 2) * v].iter().map(|&g| g as f64)).collect();
        sp.seeds.add(&sp.g, sdm_var, 0, nl..nl + nu, &dsdm, lambda);
        sp.report.adversarial = Some(adv);
        sp.report.consistency_weight = Some(lambda);
        sp.report.total = sp.report.supervised + lambda * adv;
        finish(&mut sp.g, &sp.seeds, sp.report)?
    };
    apply(model, opt, &grads)?;
    Ok(report)
}

/// Dual-task consistency: the transformed distance head and the
/// segmentation head must agree on every patch.
pub fn step_dtc(batch: &Batch, model: &mut UNet, opt: &mut Sgd, cfg: &TrainConfig, s: &ScheduleState, seed: StepSeed) -> Result<LossReport> {
    if !model.cfg.has_sdm() {
        return Err(Error::InvalidConfig("dual-task step needs a distance head".into()));
    }
    let n = batch.num_labeled() + require_unlabeled(batch)?.batch();
    let lambda = gaussian_rampup(s)?;
    let (grads, report) = {
        let mut sp = student_pass(batch, model, None, cfg.alpha, seed)?;
        let o = sp.outs[0];
        let sdm_var = o.sdm.expect("checked above");
        let p = channel_values(sp.g.value(o.seg_prob), 1, 0..n);
        let z = channel_values(sp.g.value(sdm_var), 0, 0..n);
        let (lc, dp, dz) = dtc_consistency(&p, &z, cfg.k);
        sp.seeds.add(&sp.g, o.seg_prob, 1, 0..n, &dp, lambda);
        sp.seeds.add(&sp.g, sdm_var, 0, 0..n, &dz, lambda);
        sp.report.consistency = Some(lc);
        sp.report.consistency_weight = Some(lambda);
        sp.report.total = sp.report.supervised + lambda * lc;
        finish(&mut sp.g, &sp.seeds, sp.report)?
    };
    apply(model, opt, &grads)?;
    Ok(report)
}

/// Mutual consistency of two differently upsampling decoders via
/// sharpened pseudo-labels on every patch.
pub fn step_mcnet(batch: &Batch, model: &mut UNet, opt: &mut Sgd, cfg: &TrainConfig, s: &ScheduleState, seed: StepSeed) -> Result<LossReport> {
    if model.cfg.decoders < 2 {
        return Err(Error::InvalidConfig("mutual consistency needs two decoders".into()));
    }
    let n = batch.num_labeled() + require_unlabeled(batch)?.batch();
    let lambda = gaussian_rampup(s)?;
    let (grads, report) = {
        let mut sp = student_pass(batch, model, None, 0.0, seed)?;
        let (a, b) = (sp.outs[0].seg_prob, sp.outs[1].seg_prob);
        let pa = channel_values(sp.g.value(a), 1, 0..n);
        let pb = channel_values(sp.g.value(b), 1, 0..n);
        let (lc, da, db) = cross_sharpened_loss(&pa, &pb, cfg.sharpen_t);
        sp.seeds.add(&sp.g, a, 1, 0..n, &da, lambda);
        sp.seeds.add(&sp.g, b, 1, 0..n, &db, lambda);
        sp.report.consistency = Some(lc);
        sp.report.consistency_weight = Some(lambda);
        sp.report.total = sp.report.supervised + lambda * lc;
        finish(&mut sp.g, &sp.seeds, sp.report)?
    };
    apply(model, opt, &grads)?;
    Ok(report)
}

/// Everything one run optimises: the segmenter, its EMA teacher or
/// discriminator when the method has one, and their optimizers.
#[derive(Clone, Debug)]
pub struct Learner {
    pub cfg: TrainConfig,
    pub student: UNet,
    pub teacher: Option<UNet>,
    pub discriminator: Option<Discriminator>,
    opt: Sgd,
    disc_opt: Option<Adam>,
}

impl Learner {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let student = UNet::new(cfg.unet_config(), cfg.weight_seed)?;
        let teacher = cfg.method.has_teacher().then(|| student.clone());
        let discriminator = match cfg.method {
            Method::Sassnet => Some(Discriminator::new(cfg.discriminator.clone(), splitmix(cfg.weight_seed))?),
            _ => None,
        };
        let disc_opt = discriminator.as_ref().map(|d| Adam::new(&d.params, cfg.discriminator_lr as f32));
        let opt = Sgd::new(&student.params, cfg.lr as f32, cfg.momentum as f32, cfg.weight_decay as f32);
        Ok(Learner { cfg: cfg.clone(), student, teacher, discriminator, opt, disc_opt })
    }

    /// Runs the configured method's step for schedule position `s.t`.
    pub fn step(&mut self, batch: &Batch, s: &ScheduleState, seed: StepSeed) -> Result<LossReport> {
        let cfg = &self.cfg;
        let mut report = match cfg.method {
            Method::Supervised => step_supervised(batch, &mut self.student, &mut self.opt, seed),
            Method::Mt => step_mt(batch, &mut self.student, &mut self.opt, self.teacher.as_mut().expect("teacher"), cfg, s, seed),
            Method::Uamt => step_uamt(batch, &mut self.student, &mut self.opt, self.teacher.as_mut().expect("teacher"), cfg, s, seed),
            Method::Sassnet => step_sassnet(
                batch,
                &mut self.student,
                &mut self.opt,
                self.discriminator.as_mut().expect("discriminator"),
                self.disc_opt.as_mut().expect("discriminator optimizer"),
                cfg,
                s,
                seed,
            ),
            Method::Dtc => step_dtc(batch, &mut self.student, &mut self.opt, cfg, s, seed),
            Method::Mcnet => step_mcnet(batch, &mut self.student, &mut self.opt, cfg, s, seed),
        }?;
        report.step = s.t;
        Ok(report)
    }

    /// The network used for inference. Always the student: the EMA teacher
    /// only supplies consistency targets, and on short schedules it lags.
    pub fn inference_model(&self) -> &UNet {
        &self.student
    }
}
