//! Shared fixtures for integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vesselbench::{Geometry, LabelVolume};

const DIRECTIONS: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [-1, 1, 1],
];

/// Adds a straight one-voxel-wide segment unless it would touch (26-adjacency)
/// anything already in `mask`.
fn try_add_segment(mask: &mut LabelVolume, rng: &mut impl Rng) -> bool {
    let geom = mask.geom;
    let s = geom.shape;
    let start = [rng.gen_range(0..s[0]), rng.gen_range(0..s[1]), rng.gen_range(0..s[2])];
    let d = DIRECTIONS[rng.gen_range(0..DIRECTIONS.len())];
    let len = rng.gen_range(1..=8);
    let mut pts = vec![start];
    for _ in 1..len {
        match geom.offset(*pts.last().unwrap(), d) {
            Some(n) => pts.push(geom.coords(n)),
            None => break,
        }
    }
    for &p in &pts {
        for a in -1..=1isize {
            for b in -1..=1isize {
                for c in -1..=1isize {
                    if let Some(n) = geom.offset(p, [a, b, c]) {
                        if mask.data[n] != 0 {
                            return false;
                        }
                    }
                }
            }
        }
    }
    for p in pts {
        mask.set(p, true);
    }
    true
}

fn segments(geom: Geometry, count: usize, rng: &mut impl Rng) -> LabelVolume {
    let mut m = LabelVolume::empty(geom);
    let mut placed = 0;
    for _ in 0..200 {
        if placed == count {
            break;
        }
        placed += try_add_segment(&mut m, rng) as usize;
    }
    m
}

/// A reference and a prediction built from separated straight thin
/// segments. Such masks are their own skeleton.
pub fn thin_segment_scene(seed: u64) -> (LabelVolume, LabelVolume) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(8..=12);
    let geom = Geometry::isotropic([n, n, rng.gen_range(8..=12)]);
    let gt = segments(geom, rng.gen_range(2..6), &mut rng);
    // Prediction: a copy of the reference, partly thinned out, plus extra segments.
    let mut pred = LabelVolume::empty(geom);
    let keep = rng.gen_bool(0.8);
    for i in gt.foreground_indices() {
        if keep && rng.gen_bool(0.7) {
            pred.data[i] = 1;
        }
    }
    for _ in 0..rng.gen_range(0..4) {
        try_add_segment(&mut pred, &mut rng);
    }
    (pred, gt)
}

/// clDice with skeleton(mask) = mask, counted voxel by voxel.
pub fn brute_cl_dice_thin(pred: &LabelVolume, gt: &LabelVolume) -> (f64, f64, f64) {
    let (mut p_in_g, mut p, mut g_in_p, mut g) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..pred.data.len() {
        let (a, b) = (pred.data[i] != 0, gt.data[i] != 0);
        if a {
            p += 1;
            if b {
                p_in_g += 1;
            }
        }
        if b {
            g += 1;
            if a {
                g_in_p += 1;
            }
        }
    }
    let tprec = if p == 0 { 0.0 } else { p_in_g as f64 / p as f64 };
    let tsens = if g == 0 { 0.0 } else { g_in_p as f64 / g as f64 };
    let cl = if tprec + tsens > 0.0 { 2.0 * tprec * tsens / (tprec + tsens) } else { 0.0 };
    (tprec, tsens, cl)
}
