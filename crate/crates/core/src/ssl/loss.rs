use super::{check_len, sigmoid, ProbVolume, UncertaintyVolume};
use crate::error::{Error, Result};
use crate::volume::LabelVolume;

pub const SOFT_DICE_EPS: f64 = 1e-5;
const PROB_CLAMP: f64 = 1e-7;

/// Soft Dice loss `1 - (2 Σ p g + ε) / (Σ p + Σ g + ε)` over the voxels where
/// `mask` is true (all voxels when `None`). Both inputs may be soft. Returns
/// the value and the gradients with respect to `p` and `g`; gradients are
/// zero outside the mask.
pub fn masked_soft_dice(p: &[f64], g: &[f64], mask: Option<&[bool]>) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(p.len(), g.len());
    let on = |i: usize| mask.is_none_or(|m| m[i]);
    let (mut inter, mut sum) = (0.0, 0.0);
    for i in 0..p.len() {
        if on(i) {
            inter += p[i] * g[i];
            sum += p[i] + g[i];
        }
    }
    let num = 2.0 * inter + SOFT_DICE_EPS;
    let den = sum + SOFT_DICE_EPS;
    let value = 1.0 - num / den;
    let den2 = den * den;
    let mut dp = vec![0.0; p.len()];
    let mut dg = vec![0.0; g.len()];
    for i in 0..p.len() {
        if on(i) {
            dp[i] = -(2.0 * g[i] * den - num) / den2;
            dg[i] = -(2.0 * p[i] * den - num) / den2;
        }
    }
    (value, dp, dg)
}

/// Soft Dice over all voxels; gradient with respect to `p` only.
pub fn soft_dice(p: &[f64], g: &[f64]) -> (f64, Vec<f64>) {
    let (v, dp, _) = masked_soft_dice(p, g, None);
    (v, dp)
}

/// Mean binary cross-entropy of foreground probabilities against 0/1 labels,
/// with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn cross_entropy(p: &[f64], labels: &[u8]) -> (f64, Vec<f64>) {
    assert_eq!(p.len(), labels.len());
    let n = p.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        let q = p[i].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let inside = p[i] > PROB_CLAMP && p[i] < 1.0 - PROB_CLAMP;
        if labels[i] != 0 {
            total -= q.ln();
            if inside {
                grad[i] = -1.0 / (q * n);
            }
        } else {
            total -= (1.0 - q).ln();
            if inside {
                grad[i] = 1.0 / ((1.0 - q) * n);
            }
        }
    }
    (total / n, grad)
}

/// Mean squared error and its gradient with respect to `a`.
pub fn mse(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut total = 0.0;
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            total += d * d;
            2.0 * d / n
        })
        .collect();
    (total / n, grad)
}

/// Mean binary cross-entropy on logits, `max(x,0) - x y + ln(1 + e^{-|x|})`.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), targets.len());
    let n = logits.len() as f64;
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| {
            total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
            (sigmoid(x) - y) / n
        })
        .collect();
    (total / n, grad)
}

pub fn soft_dice_loss(pred: &ProbVolume, gt: &LabelVolume) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(pred.shape(), gt.shape()));
    }
    let g: Vec<f64> = gt.data.iter().map(|&v| v as f64).collect();
    Ok(soft_dice(pred.foreground(), &g).0)
}

pub fn cross_entropy_loss(pred: &ProbVolume, gt: &LabelVolume) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(pred.shape(), gt.shape()));
    }
    Ok(cross_entropy(pred.foreground(), &gt.data).0)
}

/// Soft Dice between teacher and student restricted to voxels with
/// uncertainty below `tau`. Masked voxels leave both numerator and
/// denominator; an empty mask gives 0.
pub fn masked_consistency_loss(
    p_teacher: &ProbVolume,
    p_student: &ProbVolume,
    u: &UncertaintyVolume,
    tau: f64,
) -> Result<f64> {
    if p_teacher.shape() != p_student.shape() {
        return Err(Error::ShapeMismatch(p_teacher.shape(), p_student.shape()));
    }
    if u.shape() != p_student.shape() {
        return Err(Error::ShapeMismatch(u.shape(), p_student.shape()));
    }
    check_len(u.data().len(), p_student.len())?;
    let mask: Vec<bool> = u.data().iter().map(|&x| x < tau).collect();
    if !mask.iter().any(|&m| m) {
        return Ok(0.0);
    }
    Ok(masked_soft_dice(p_student.foreground(), p_teacher.foreground(), Some(&mask)).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(0.02..0.98)).collect()
    }

    /// Central differences of `f` along every coordinate, compared with `grad`.
    fn check_gradient(x: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((fd - grad[i]).abs() / scale < 1e-4, "coord {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn soft_dice_examples() {
        let hard: Vec<f64> = (0..512).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let (v, _) = soft_dice(&hard, &hard);
        assert!((0.0..=1e-4).contains(&v));
        let (v, _) = soft_dice(&[0.5, 0.5], &[1.0, 0.0]);
        assert!((v - (1.0 - (1.0 + 1e-5) / (2.0 + 1e-5))).abs() < 1e-15);
        assert!((v - 0.5).abs() < 1e-5);
    }

    #[test]
    fn losses_match_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_probs(&mut rng, 64);
        let labels: Vec<u8> = (0..64).map(|_| rng.gen_bool(0.4) as u8).collect();
        let g: Vec<f64> = labels.iter().map(|&l| l as f64).collect();

        let (mut pg, mut sp, mut sg) = (0.0, 0.0, 0.0);
        for i in 0..64 {
            pg += p[i] * g[i];
            sp += p[i];
            sg += g[i];
        }
        let dice_oracle = 1.0 - (2.0 * pg + 1e-5) / (sp + sg + 1e-5);
        assert!((soft_dice(&p, &g).0 - dice_oracle).abs() < 1e-9);

        let mut ce = 0.0;
        for i in 0..64 {
            ce += if labels[i] == 1 { -p[i].ln() } else { -(1.0 - p[i]).ln() };
        }
        assert!((cross_entropy(&p, &labels).0 - ce / 64.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_examples() {
        let labels = vec![1u8, 0, 1, 0];
        let confident: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 - 1e-7 } else { 1e-7 }).collect();
        let (v, _) = cross_entropy(&confident, &labels);
        assert!((v - 1e-7).abs() < 1e-12);
        let (v, _) = cross_entropy(&[0.5; 4], &labels);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        // Exactly 0 and 1 are clamped rather than producing infinities.
        let (v, g) = cross_entropy(&[0.0, 1.0], &[1, 0]);
        assert!((v - (-(1e-7f64).ln())).abs() < 1e-9);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 27;
        let p = random_probs(&mut rng, n);
        let g = random_probs(&mut rng, n);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.5) as u8).collect();
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();

        let (_, dp, dg) = masked_soft_dice(&p, &g, None);
        check_gradient(&p, &dp, |x| masked_soft_dice(x, &g, None).0);
        check_gradient(&g, &dg, |x| masked_soft_dice(&p, x, None).0);
        let (_, dp, _) = masked_soft_dice(&p, &g, Some(&mask));
        check_gradient(&p, &dp, |x| masked_soft_dice(x, &g, Some(&mask)).0);

        let (_, d) = cross_entropy(&p, &labels);
        check_gradient(&p, &d, |x| cross_entropy(x, &labels).0);

        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, d) = mse(&a, &g);
        check_gradient(&a, &d, |x| mse(x, &g).0);

        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let (_, d) = bce_with_logits(&logits, &g);
        check_gradient(&logits, &d, |x| bce_with_logits(x, &g).0);
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let (v, g) = bce_with_logits(&[800.0, -800.0], &[1.0, 0.0]);
        assert!(v.is_finite() && v < 1e-300);
        assert!(g.iter().all(|x| x.is_finite()));
        let (v, _) = bce_with_logits(&[-800.0], &[1.0]);
        assert!((v - 800.0).abs() < 1e-9);
    }

    #[test]
    fn masked_consistency_examples() {
        let shape = [2, 2, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = ProbVolume::new(shape, random_probs(&mut rng, 8)).unwrap();
        let s = ProbVolume::new(shape, random_probs(&mut rng, 8)).unwrap();
        let u_data: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 0.1 } else { 0.6 }).collect();
        let u = UncertaintyVolume::new(shape, u_data).unwrap();

        assert_eq!(masked_consistency_loss(&t, &s, &u, 0.0).unwrap(), 0.0);

        // Restricted-domain oracle: soft Dice over the even voxels only.
        let keep: Vec<usize> = (0..8).step_by(2).collect();
        let ps: Vec<f64> = keep.iter().map(|&i| s.foreground()[i]).collect();
        let pt: Vec<f64> = keep.iter().map(|&i| t.foreground()[i]).collect();
        let oracle = soft_dice(&ps, &pt).0;
        assert!((masked_consistency_loss(&t, &s, &u, 0.3).unwrap() - oracle).abs() < 1e-12);

        // Identical hard predictions agree exactly.
        let hard = ProbVolume::new(shape, (0..8).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let v = masked_consistency_loss(&hard, &hard, &u, ln2).unwrap();
        assert!(v < 1e-5);

        let wrong = UncertaintyVolume::new([1, 2, 4], vec![0.0; 8]).unwrap();
        assert!(masked_consistency_loss(&t, &s, &wrong, 1.0).is_err());
    }
}
