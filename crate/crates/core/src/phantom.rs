//! Procedural vascular-tree phantoms: a binary bifurcating tree of tubes with
//! a noise-free label, a noisy intensity image and the exact centerlines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, LabelVolume, Volume3D};

/// Each generation is this fraction of its parent's length.
const LENGTH_RATIO: f64 = 0.8;
/// Thinnest radius the generator will emit.
const MIN_RADIUS: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub shape: [usize; 3],
    pub root_radius: f64,
    pub branching_depth: u32,
    pub radius_decay: f64,
    pub tortuosity: f64,
    pub noise_std: f64,
    pub vessel_intensity: f32,
    pub background_intensity: f32,
    pub rng_seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            shape: [48, 48, 48],
            root_radius: 3.0,
            branching_depth: 3,
            radius_decay: 0.7,
            tortuosity: 1.5,
            noise_std: 0.3,
            vessel_intensity: 1.0,
            background_intensity: 0.0,
            rng_seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.root_radius >= 1.0) {
            return Err(Error::InvalidConfig("root_radius must be >= 1 voxel".into()));
        }
        if !(self.radius_decay > 0.0 && self.radius_decay <= 1.0) {
            return Err(Error::InvalidConfig("radius_decay must lie in (0, 1]".into()));
        }
        if !(self.tortuosity >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(
                "tortuosity and noise_std must be non-negative".into(),
            ));
        }
        let need = 2 * self.root_radius.ceil() as usize + 1;
        if self.shape[0] < need || self.shape[1] < need || self.shape[2] < 2 {
            return Err(Error::InvalidConfig(format!(
                "shape {:?} too small to contain a tube of radius {}",
                self.shape, self.root_radius
            )));
        }
        Ok(())
    }

    /// Depth actually generated: reduced until the deepest radius is at
    /// least half a voxel.
    pub fn effective_depth(&self) -> u32 {
        let mut depth = self.branching_depth;
        while depth > 0 && self.radius_at(depth) < MIN_RADIUS {
            depth -= 1;
        }
        depth
    }

    pub fn radius_at(&self, depth: u32) -> f64 {
        self.root_radius * self.radius_decay.powi(depth as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub depth: u32,
    pub radius: f64,
    /// Index of the parent branch; `None` for the root.
    pub parent: Option<usize>,
    /// Ordered, 26-connected voxel path.
    pub centerline: Vec<[usize; 3]>,
}

#[derive(Clone, Debug)]
pub struct PhantomSample {
    pub image: Volume3D,
    pub label: LabelVolume,
    pub branches: Vec<Branch>,
}

impl PhantomSample {
    pub fn branch_depths(&self) -> Vec<u32> {
        self.branches.iter().map(|b| b.depth).collect()
    }

    /// Union of all branch centerlines as a mask.
    pub fn centerline_mask(&self) -> LabelVolume {
        let mut m = LabelVolume::empty(self.label.geom);
        for b in &self.branches {
            for &c in &b.centerline {
                m.set(c, true);
            }
        }
        m
    }
}

type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

/// Orthonormal pair perpendicular to unit vector `d`.
fn perpendicular_basis(d: Vec3) -> (Vec3, Vec3) {
    let helper = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalize(cross(d, helper));
    let v = cross(d, u);
    (u, v)
}

struct Pending {
    parent: Option<usize>,
    depth: u32,
    start: Vec3,
    dir: Vec3,
}

pub fn generate_phantom(cfg: &PhantomConfig) -> Result<PhantomSample> {
    cfg.validate()?;
    let geom = Geometry::isotropic(cfg.shape);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let depth = cfg.effective_depth();

    // Root enters the k = 0 face and runs along +k.
    let r0 = cfg.root_radius.ceil() as usize;
    let mut entry = [0.0; 3];
    for a in 0..2 {
        let n = cfg.shape[a];
        let lo = r0 as i64;
        let hi = (n - 1 - r0) as i64;
        let mid = (n as i64 - 1) / 2;
        let jitter = (n as i64 / 8).max(0);
        let c = mid + rng.gen_range(-jitter..=jitter);
        entry[a] = c.clamp(lo, hi) as f64;
    }
    let ratio_sum: f64 = (0..=depth).map(|d| LENGTH_RATIO.powi(d as i32)).sum();
    let root_len = (cfg.shape[2] - 1) as f64 / ratio_sum;

    let mut branches: Vec<Branch> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(Pending {
        parent: None,
        depth: 0,
        start: entry,
        dir: [0.0, 0.0, 1.0],
    });
    while let Some(p) = queue.pop_front() {
        let length = root_len * LENGTH_RATIO.powi(p.depth as i32);
        let phase_axis = {
            let (u, v) = perpendicular_basis(p.dir);
            let psi = rng.gen_range(0.0..std::f64::consts::TAU);
            add(scale(u, psi.cos()), scale(v, psi.sin()))
        };
        let (centerline, end) =
            trace_centerline(&geom, p.start, p.dir, length, cfg.tortuosity, phase_axis);
        let idx = branches.len();
        branches.push(Branch {
            depth: p.depth,
            radius: cfg.radius_at(p.depth),
            parent: p.parent,
            centerline,
        });
        if p.depth < depth {
            let (u, v) = perpendicular_basis(p.dir);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            for side in 0..2 {
                let theta = rng.gen_range(20f64..=50f64).to_radians();
                let az = phi + side as f64 * std::f64::consts::PI;
                let lateral = add(scale(u, az.cos()), scale(v, az.sin()));
                let dir = normalize(add(scale(p.dir, theta.cos()), scale(lateral, theta.sin())));
                queue.push_back(Pending {
                    parent: Some(idx),
                    depth: p.depth + 1,
                    start: end,
                    dir,
                });
            }
        }
    }

    let label = rasterize(&geom, &branches);
    let normal = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite std");
    let data = label
        .data
        .iter()
        .map(|&l| {
            let base = if l != 0 { cfg.vessel_intensity } else { cfg.background_intensity };
            if cfg.noise_std > 0.0 {
                base + normal.sample(&mut rng) as f32
            } else {
                base
            }
        })
        .collect();
    let image = Volume3D::new(geom, data)?;
    Ok(PhantomSample {
        image,
        label,
        branches,
    })
}

fn round_voxel(p: Vec3) -> [isize; 3] {
    [p[0].round() as isize, p[1].round() as isize, p[2].round() as isize]
}

/// Samples the (optionally sinusoidal) centerline, truncating where it leaves
/// the grid. Returns the voxel path and the last in-grid continuous point.
fn trace_centerline(
    geom: &Geometry,
    start: Vec3,
    dir: Vec3,
    length: f64,
    amplitude: f64,
    wobble: Vec3,
) -> (Vec<[usize; 3]>, Vec3) {
    let omega = std::f64::consts::TAU / length.max(1e-9);
    let speed = (1.0 + (amplitude * omega).powi(2)).sqrt();
    // Keeps consecutive rounded samples 26-adjacent.
    let step = 0.4 / speed;
    let n = (length / step).ceil().max(1.0) as usize;
    let mut path: Vec<[usize; 3]> = Vec::new();
    let mut last = start;
    for i in 0..=n {
        let s = (i as f64 * length / n as f64).min(length);
        let p = add(add(start, scale(dir, s)), scale(wobble, amplitude * (omega * s).sin()));
        let v = round_voxel(p);
        if !geom.contains(v) {
            break;
        }
        last = p;
        let v = [v[0] as usize, v[1] as usize, v[2] as usize];
        if path.last() != Some(&v) {
            path.push(v);
        }
    }
    if path.is_empty() {
        // Start point itself sits on the boundary; clamp it in.
        let v = round_voxel(start);
        let c = [0, 1, 2].map(|a| v[a].clamp(0, geom.shape[a] as isize - 1) as usize);
        path.push(c);
    }
    (path, last)
}

/// Squared distance from `p` to segment `[a, b]`.
pub(crate) fn point_segment_dist2(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(ap, ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = add(a, scale(ab, t));
    let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
    dot(d, d)
}

fn to_f(c: [usize; 3]) -> Vec3 {
    [c[0] as f64, c[1] as f64, c[2] as f64]
}

/// Marks every voxel whose centre lies within the branch radius of the
/// branch's voxel centerline polyline.
fn rasterize(geom: &Geometry, branches: &[Branch]) -> LabelVolume {
    let mut label = LabelVolume::empty(*geom);
    for b in branches {
        let r2 = b.radius * b.radius;
        let reach = b.radius.ceil() as isize;
        let segs: Vec<(Vec3, Vec3)> = if b.centerline.len() == 1 {
            vec![(to_f(b.centerline[0]), to_f(b.centerline[0]))]
        } else {
            b.centerline
                .windows(2)
                .map(|w| (to_f(w[0]), to_f(w[1])))
                .collect()
        };
        for (a, e) in segs {
            let lo: Vec<isize> = (0..3).map(|k| (a[k].min(e[k]) as isize - reach).max(0)).collect();
            let hi: Vec<isize> = (0..3)
                .map(|k| (a[k].max(e[k]) as isize + reach).min(geom.shape[k] as isize - 1))
                .collect();
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let p = [i as f64, j as f64, k as f64];
                        if point_segment_dist2(p, a, e) <= r2 + 1e-9 {
                            label.set([i as usize, j as usize, k as usize], true);
                        }
                    }
                }
            }
        }
    }
    label
}
