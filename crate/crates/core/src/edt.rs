//! Exact squared Euclidean distance transform (separable lower-envelope
//! algorithm of Felzenszwalb & Huttenlocher), in voxel units.

use crate::volume::Geometry;

const INF: f64 = 1e20;

/// Squared distance from every voxel to the nearest voxel where `feature`
/// is true. Returns `None` when there is no feature voxel.
pub fn squared_distance_to(feature: &[bool], geom: &Geometry) -> Option<Vec<f64>> {
    if !feature.iter().any(|&f| f) {
        return None;
    }
    let mut d: Vec<f64> = feature.iter().map(|&f| if f { 0.0 } else { INF }).collect();
    let [n0, n1, n2] = geom.shape;
    let longest = n0.max(n1).max(n2);
    let mut line = vec![0f64; longest];
    let mut out = vec![0f64; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0f64; longest + 1];
    let strides = [n1 * n2, n2, 1];
    for axis in [2usize, 1, 0] {
        let n = geom.shape[axis];
        let stride = strides[axis];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let (na, nb) = (geom.shape[others[0]], geom.shape[others[1]]);
        for a in 0..na {
            for b in 0..nb {
                let base = a * strides[others[0]] + b * strides[others[1]];
                for i in 0..n {
                    line[i] = d[base + i * stride];
                }
                envelope(&line[..n], &mut out[..n], &mut v, &mut z);
                for i in 0..n {
                    d[base + i * stride] = out[i];
                }
            }
        }
    }
    Some(d)
}

/// 1D squared distance transform of sampled function `f`.
fn envelope(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = meet(q, v[k]);
        // z[0] = -inf stops the scan.
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *o = dq * dq + f[p];
    }
}

/// Euclidean distance (not squared) to the nearest feature voxel.
pub fn distance_to(feature: &[bool], geom: &Geometry) -> Option<Vec<f64>> {
    squared_distance_to(feature, geom).map(|d| d.into_iter().map(f64::sqrt).collect())
}
