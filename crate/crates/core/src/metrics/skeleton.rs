//! Curve skeletons by directional thinning: border voxels that are simple
//! points and not curve ends are peeled one direction at a time, with a
//! sequential re-check so each deletion is topology preserving.

use crate::topology::{is_simple, neighbor_count, neighborhood};
use crate::volume::{Geometry, LabelVolume};

/// Centerline voxels of a binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub mask: LabelVolume,
}

impl Skeleton {
    pub fn source_shape(&self) -> [usize; 3] {
        self.mask.shape()
    }

    pub fn len(&self) -> usize {
        self.mask.count()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty_mask()
    }
}

const DIRECTIONS: [[isize; 3]; 6] = [
    [0, 0, 1],
    [0, 0, -1],
    [0, 1, 0],
    [0, -1, 0],
    [1, 0, 0],
    [-1, 0, 0],
];

fn is_border(data: &[u8], geom: &Geometry, c: [usize; 3], d: [isize; 3]) -> bool {
    match geom.offset(c, d) {
        Some(n) => data[n] == 0,
        None => true,
    }
}

fn deletable(data: &[u8], geom: &Geometry, c: [usize; 3]) -> bool {
    let cube = neighborhood(data, geom, c);
    // Curve ends (one neighbour) and isolated voxels stay.
    neighbor_count(cube) > 1 && is_simple(cube)
}

pub fn skeletonize(mask: &LabelVolume) -> Skeleton {
    let geom = mask.geom;
    let mut data = mask.data.clone();
    let mut active: Vec<usize> = mask.foreground_indices().collect();
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for d in DIRECTIONS {
            candidates.clear();
            for &idx in &active {
                if data[idx] == 0 {
                    continue;
                }
                let c = geom.coords(idx);
                if is_border(&data, &geom, c, d) && deletable(&data, &geom, c) {
                    candidates.push(idx);
                }
            }
            for &idx in &candidates {
                let c = geom.coords(idx);
                if deletable(&data, &geom, c) {
                    data[idx] = 0;
                    changed = true;
                }
            }
        }
        active.retain(|&i| data[i] != 0);
        if !changed {
            break;
        }
    }
    Skeleton {
        mask: mask.with_data(data),
    }
}
