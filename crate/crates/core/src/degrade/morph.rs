use crate::topology::{neighborhood, t26, Connectivity};
use crate::volume::{Geometry, LabelVolume};

const CROSS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Dilation by the radius-1 L1 ball (centre plus its six face neighbours).
pub fn dilate(label: &LabelVolume) -> LabelVolume {
    let geom = label.geom;
    let mut out = label.data.clone();
    for idx in label.foreground_indices() {
        let c = geom.coords(idx);
        for d in CROSS {
            if let Some(n) = geom.offset(c, d) {
                out[n] = 1;
            }
        }
    }
    label.with_data(out)
}

fn survives_erosion(data: &[u8], geom: &Geometry, c: [usize; 3]) -> bool {
    CROSS
        .iter()
        .all(|&d| geom.offset(c, d).is_some_and(|n| data[n] != 0))
}

/// Erosion by the radius-1 L1 ball that never changes the number of
/// 26-connected components. Voxels the plain erosion would drop are removed
/// one at a time in raster order; a removal that would delete or split a
/// component is undone.
pub fn erode_safe(label: &LabelVolume) -> LabelVolume {
    let geom = label.geom;
    let mut cur = label.data.clone();
    let mut search = Reach::new(geom.len());
    for idx in 0..geom.len() {
        if label.data[idx] == 0 {
            continue;
        }
        let c = geom.coords(idx);
        if survives_erosion(&label.data, &geom, c) {
            continue;
        }
        cur[idx] = 0;
        let keep_removed = match t26(neighborhood(&cur, &geom, c)) {
            0 => false,
            1 => true,
            // Locally split: the pieces may still meet elsewhere.
            _ => search.neighbours_stay_connected(&cur, &geom, c),
        };
        if !keep_removed {
            cur[idx] = 1;
        }
    }
    label.with_data(cur)
}

/// Reusable breadth-first search scratch space.
struct Reach {
    stamp: Vec<u32>,
    generation: u32,
    queue: Vec<usize>,
}

impl Reach {
    fn new(len: usize) -> Self {
        Reach {
            stamp: vec![0; len],
            generation: 0,
            queue: Vec::new(),
        }
    }

    /// Whether all foreground 26-neighbours of `c` lie in one component of `data`.
    fn neighbours_stay_connected(&mut self, data: &[u8], geom: &Geometry, c: [usize; 3]) -> bool {
        let targets: Vec<usize> = Connectivity::TwentySix
            .offsets()
            .iter()
            .filter_map(|&d| geom.offset(c, d))
            .filter(|&n| data[n] != 0)
            .collect();
        self.generation += 1;
        let g = self.generation;
        self.queue.clear();
        self.queue.push(targets[0]);
        self.stamp[targets[0]] = g;
        let mut pending = targets.len() - 1;
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            let vc = geom.coords(v);
            for &d in Connectivity::TwentySix.offsets() {
                if let Some(n) = geom.offset(vc, d) {
                    if data[n] != 0 && self.stamp[n] != g {
                        self.stamp[n] = g;
                        if targets.contains(&n) {
                            pending -= 1;
                            if pending == 0 {
                                return true;
                            }
                        }
                        self.queue.push(n);
                    }
                }
            }
        }
        pending == 0
    }
}
