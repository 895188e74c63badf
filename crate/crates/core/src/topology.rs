//! Digital-topology helpers on the cubic grid: neighbourhood offsets,
//! connected-component labelling and the local simple-point test used by
//! thinning and connectivity-preserving erosion.

use std::collections::VecDeque;
use std::sync::OnceLock;

use crate::volume::{Geometry, LabelVolume};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    fn admits(self, d: [isize; 3]) -> bool {
        let l1: isize = d.iter().map(|v| v.abs()).sum();
        match self {
            Connectivity::Six => l1 == 1,
            Connectivity::Eighteen => l1 == 1 || l1 == 2,
            Connectivity::TwentySix => l1 >= 1,
        }
    }

    pub fn offsets(self) -> &'static [[isize; 3]] {
        static TABLES: OnceLock<[Vec<[isize; 3]>; 3]> = OnceLock::new();
        let t = TABLES.get_or_init(|| {
            let build = |c: Connectivity| {
                let mut v = Vec::new();
                for a in -1..=1 {
                    for b in -1..=1 {
                        for d in -1..=1 {
                            if c.admits([a, b, d]) {
                                v.push([a, b, d]);
                            }
                        }
                    }
                }
                v
            };
            [
                build(Connectivity::Six),
                build(Connectivity::Eighteen),
                build(Connectivity::TwentySix),
            ]
        });
        match self {
            Connectivity::Six => &t[0],
            Connectivity::Eighteen => &t[1],
            Connectivity::TwentySix => &t[2],
        }
    }
}

/// Labels foreground components (1-based; background is 0).
pub fn label_components(mask: &LabelVolume, conn: Connectivity) -> (Vec<u32>, usize) {
    label_components_raw(&mask.data, &mask.geom, conn)
}

pub(crate) fn label_components_raw(
    data: &[u8],
    geom: &Geometry,
    conn: Connectivity,
) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; data.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let offs = conn.offsets();
    for start in 0..data.len() {
        if data[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let c = geom.coords(idx);
            for &d in offs {
                if let Some(n) = geom.offset(c, d) {
                    if data[n] != 0 && labels[n] == 0 {
                        labels[n] = next;
                        queue.push_back(n);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

pub fn count_components(mask: &LabelVolume, conn: Connectivity) -> usize {
    label_components(mask, conn).1
}

/// Bit position of offset `d` inside a 3×3×3 cube (centre = bit 13).
#[inline]
pub fn cube_bit(d: [isize; 3]) -> u32 {
    ((d[0] + 1) * 9 + (d[1] + 1) * 3 + (d[2] + 1)) as u32
}

pub const CENTER_BIT: u32 = 13;

/// 27-bit occupancy of the 3×3×3 cube around `c`; outside the grid reads as 0.
#[inline]
pub fn neighborhood(data: &[u8], geom: &Geometry, c: [usize; 3]) -> u32 {
    let mut bits = 0u32;
    let interior = (0..3).all(|a| c[a] >= 1 && c[a] + 1 < geom.shape[a]);
    if interior {
        let s1 = geom.shape[2];
        let s0 = geom.shape[1] * s1;
        let base = geom.index(c[0], c[1], c[2]);
        let mut bit = 0;
        for a in 0..3 {
            for b in 0..3 {
                let row = base + a * s0 + b * s1 - s0 - s1 - 1;
                for k in 0..3 {
                    if data[row + k] != 0 {
                        bits |= 1 << bit;
                    }
                    bit += 1;
                }
            }
        }
    } else {
        for a in -1..=1isize {
            for b in -1..=1isize {
                for k in -1..=1isize {
                    if let Some(n) = geom.offset(c, [a, b, k]) {
                        if data[n] != 0 {
                            bits |= 1 << cube_bit([a, b, k]);
                        }
                    }
                }
            }
        }
    }
    bits
}

struct CubeTables {
    adj26: [u32; 27],
    adj6: [u32; 27],
    n18: u32,
    n6: u32,
}

fn cube_tables() -> &'static CubeTables {
    static T: OnceLock<CubeTables> = OnceLock::new();
    T.get_or_init(|| {
        let mut adj26 = [0u32; 27];
        let mut adj6 = [0u32; 27];
        let coord = |b: u32| [(b / 9) as isize - 1, ((b / 3) % 3) as isize - 1, (b % 3) as isize - 1];
        for b in 0..27u32 {
            let p = coord(b);
            for q in 0..27u32 {
                if q == b {
                    continue;
                }
                let r = coord(q);
                let d = [r[0] - p[0], r[1] - p[1], r[2] - p[2]];
                if d.iter().all(|v| v.abs() <= 1) {
                    adj26[b as usize] |= 1 << q;
                    if d.iter().map(|v| v.abs()).sum::<isize>() == 1 {
                        adj6[b as usize] |= 1 << q;
                    }
                }
            }
        }
        let mut n18 = 0;
        let mut n6 = 0;
        for b in 0..27u32 {
            let l1: isize = coord(b).iter().map(|v| v.abs()).sum();
            if l1 == 1 || l1 == 2 {
                n18 |= 1 << b;
            }
            if l1 == 1 {
                n6 |= 1 << b;
            }
        }
        CubeTables {
            adj26,
            adj6,
            n18,
            n6,
        }
    })
}

/// Flood-fills components of `set` under `adj`; returns how many components
/// intersect `touching` (all components when `touching` covers `set`).
fn count_cube_components(set: u32, adj: &[u32; 27], touching: u32) -> u32 {
    let mut remaining = set;
    let mut count = 0;
    while remaining != 0 {
        let seed = remaining & remaining.wrapping_neg();
        let mut comp = seed;
        let mut frontier = seed;
        while frontier != 0 {
            let b = frontier.trailing_zeros();
            frontier &= frontier - 1;
            let grow = adj[b as usize] & set & !comp;
            comp |= grow;
            frontier |= grow;
        }
        remaining &= !comp;
        if comp & touching != 0 {
            count += 1;
        }
    }
    count
}

/// Number of 26-components of the foreground in the punctured 26-neighbourhood.
pub fn t26(cube: u32) -> u32 {
    let t = cube_tables();
    let fg = cube & !(1 << CENTER_BIT) & ((1 << 27) - 1);
    count_cube_components(fg, &t.adj26, fg)
}

/// Number of 6-components of the background in the punctured
/// 18-neighbourhood that are 6-adjacent to the centre.
pub fn t6(cube: u32) -> u32 {
    let t = cube_tables();
    let bg = !cube & t.n18;
    count_cube_components(bg, &t.adj6, t.n6)
}

/// A foreground voxel is simple (26/6 topology) iff deleting it changes
/// neither the foreground nor the background topology.
#[inline]
pub fn is_simple(cube: u32) -> bool {
    t26(cube) == 1 && t6(cube) == 1
}

/// Number of foreground 26-neighbours (centre excluded).
#[inline]
pub fn neighbor_count(cube: u32) -> u32 {
    (cube & !(1 << CENTER_BIT)).count_ones()
}
