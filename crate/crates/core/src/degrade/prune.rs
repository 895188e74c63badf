use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{BranchGraph, NodeKind};
use crate::edt::{distance_to, squared_distance_to};
use crate::error::{Error, Result};
use crate::metrics::skeletonize;
use crate::volume::LabelVolume;

/// Share of branches removed at severities 1, 2 and 3.
pub const DEFAULT_PRUNE_FRACTIONS: [f64; 3] = [0.15, 0.35, 0.55];

/// What a pruning pass did, for provenance records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub branches: usize,
    pub deleted: usize,
    pub fraction: f64,
    pub removed_voxels: usize,
}

/// Skeleton branch graph with thinning spurs removed. Returns the graph and
/// the skeleton voxels it was built from (spur voxels excluded).
fn branch_graph(label: &LabelVolume, radius: &[f64]) -> (BranchGraph, Vec<bool>) {
    let geom = label.geom;
    let mut skel: Vec<bool> = skeletonize(label).mask.data.iter().map(|&v| v != 0).collect();
    let mut g = BranchGraph::build(&skel, &geom);
    g.contract_short_links(radius);
    // A terminal edge no longer than the vessel radius at its junction is an
    // artefact of thinning a thick section, not a vessel. Each junction keeps
    // at least two edges.
    let mut spur_free = vec![0usize; g.nodes.len()];
    for (n, node) in g.nodes.iter().enumerate() {
        if node.kind == NodeKind::Junction {
            spur_free[n] = g.incident(n).count();
        }
    }
    let mut terminal: Vec<(usize, usize, usize)> = Vec::new();
    for (i, e) in g.edges.iter().enumerate() {
        for (end, junction) in [(e.a, e.b), (e.b, e.a)] {
            if g.nodes[end].kind == NodeKind::Endpoint && g.nodes[junction].kind == NodeKind::Junction {
                let r = g.nodes[junction].voxels.iter().map(|&v| radius[v]).fold(0.0, f64::max);
                let len = e.interior.len() + 1;
                if (len as f64) <= r + 1.0 {
                    terminal.push((len, i, junction));
                }
            }
        }
    }
    terminal.sort();
    let mut pruned = false;
    for (_, i, junction) in terminal {
        if spur_free[junction] > 2 {
            spur_free[junction] -= 1;
            let e = &g.edges[i];
            let end = e.other(junction);
            for &v in e.interior.iter().chain(&g.nodes[end].voxels) {
                skel[v] = false;
            }
            pruned = true;
        }
    }
    if pruned {
        let mut g = BranchGraph::build(&skel, &geom);
        g.contract_short_links(radius);
        (g, skel)
    } else {
        (g, skel)
    }
}

/// Number of skeleton branches found in `label`.
pub fn branch_count(label: &LabelVolume) -> usize {
    let radius = interior_radius(label);
    branch_graph(label, &radius).0.edges.len()
}

fn interior_radius(label: &LabelVolume) -> Vec<f64> {
    let background: Vec<bool> = label.data.iter().map(|&v| v == 0).collect();
    distance_to(&background, &label.geom).unwrap_or_else(|| vec![f64::INFINITY; label.data.len()])
}

/// Removes the most distal `level` severity of branches with the default fractions.
pub fn prune_distal(label: &LabelVolume, level: u8, seed: u64) -> Result<LabelVolume> {
    prune_distal_with(label, level, seed, DEFAULT_PRUNE_FRACTIONS).map(|(l, _)| l)
}

/// Deletes the `fractions[level-1]` most distal branches (by hop count from
/// the thickest endpoint, ties shuffled by `seed`) and every label voxel
/// strictly closer to a deleted branch centerline than to a kept one, except
/// inside the root vessel. For a
/// fixed seed the deleted sets are prefixes of one ordering, so higher
/// levels remove supersets of what lower levels remove.
pub fn prune_distal_with(
    label: &LabelVolume,
    level: u8,
    seed: u64,
    fractions: [f64; 3],
) -> Result<(LabelVolume, PruneReport)> {
    if !(1..=3).contains(&level) {
        return Err(Error::InvalidConfig(format!("prune level must be 1, 2 or 3, got {level}")));
    }
    let fraction = fractions[level as usize - 1];
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("prune fraction {fraction} outside [0, 1]")));
    }
    let radius = interior_radius(label);
    let (g, skel) = branch_graph(label, &radius);
    if g.edges.is_empty() {
        return Err(Error::InvalidInput("label has no skeleton branches".into()));
    }

    let max_radius = |n: usize| g.nodes[n].voxels.iter().map(|&v| radius[v]).fold(f64::MIN, f64::max);
    let root = (0..g.nodes.len())
        .filter(|&n| g.nodes[n].kind == NodeKind::Endpoint)
        .fold(None, |best: Option<usize>, n| match best {
            Some(b) if max_radius(b) >= max_radius(n) => Some(b),
            _ => Some(n),
        })
        .unwrap_or(g.edges[0].a);
    let hops = g.hops_from(root);
    let deepest = hops.iter().flatten().copied().max().unwrap_or(0);
    let depth = |n: usize| hops[n].unwrap_or(deepest + 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tie: Vec<u64> = g.edges.iter().map(|_| rng.gen()).collect();
    let mut order: Vec<usize> = (0..g.edges.len())
        .filter(|&i| g.edges[i].a != root && g.edges[i].b != root)
        .collect();
    order.sort_by_key(|&i| {
        let e = &g.edges[i];
        (std::cmp::Reverse(depth(e.a).max(depth(e.b))), tie[i])
    });

    let n = g.edges.len();
    let k = ((fraction * n as f64 + 1e-9).floor() as usize).min(order.len());
    let mut deleted = vec![false; skel.len()];
    for &i in &order[..k] {
        let e = &g.edges[i];
        for &v in &e.interior {
            deleted[v] = true;
        }
        // The far end goes with the branch only when it is a free end.
        let far = if depth(e.a) > depth(e.b) { e.a } else { e.b };
        if g.nodes[far].kind == NodeKind::Endpoint {
            for &v in &g.nodes[far].voxels {
                deleted[v] = true;
            }
        }
    }
    let all_skel: Vec<bool> = skeletonize(label).mask.data.iter().map(|&v| v != 0).collect();
    let kept: Vec<bool> = all_skel.iter().zip(&deleted).map(|(&s, &d)| s && !d).collect();

    // The root vessel is a tube around its centerline (including the
    // junction it ends in) as wide as its thickest cross-section.
    let mut root_axis = vec![false; skel.len()];
    let mut root_radius = 0.0f64;
    for e in g.edges.iter().filter(|e| e.a == root || e.b == root) {
        for &v in e.interior.iter().chain(&g.nodes[e.a].voxels).chain(&g.nodes[e.b].voxels) {
            root_axis[v] = true;
        }
        for &v in e.interior.iter().chain(&g.nodes[root].voxels) {
            root_radius = root_radius.max(radius[v]);
        }
    }
    let d_root = squared_distance_to(&root_axis, &label.geom);

    let mut out = label.data.clone();
    let mut removed = 0;
    if let (Some(d_del), Some(d_kept), Some(d_root)) = (
        squared_distance_to(&deleted, &label.geom),
        squared_distance_to(&kept, &label.geom),
        d_root,
    ) {
        for (i, o) in out.iter_mut().enumerate() {
            if *o != 0 && d_del[i] < d_kept[i] && d_root[i] > root_radius * root_radius {
                *o = 0;
                removed += 1;
            }
        }
    }
    Ok((
        label.with_data(out),
        PruneReport {
            branches: n,
            deleted: k,
            fraction,
            removed_voxels: removed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomConfig};
    use crate::volume::Geometry;

    fn tree(depth: u32, seed: u64) -> crate::phantom::PhantomSample {
        generate_phantom(&PhantomConfig {
            branching_depth: depth,
            rng_seed: seed,
            noise_std: 0.0,
            ..PhantomConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn single_branch_is_never_pruned() {
        let p = tree(0, 3);
        for level in 1..=3 {
            assert_eq!(prune_distal(&p.label, level, 0).unwrap(), p.label);
        }
    }

    #[test]
    fn full_tree_branch_counts_and_deletions() {
        // These trees have no touching branches, so the skeleton graph
        // recovers every emitted branch.
        for seed in [0, 3, 4, 5, 6] {
            let p = tree(3, seed);
            assert_eq!(p.branches.len(), 15);
            let (_, r1) = prune_distal_with(&p.label, 1, 0, DEFAULT_PRUNE_FRACTIONS).unwrap();
            let (_, r3) = prune_distal_with(&p.label, 3, 0, DEFAULT_PRUNE_FRACTIONS).unwrap();
            assert_eq!(r1.branches, 15, "seed {seed}");
            assert_eq!((r1.deleted, r3.deleted), (2, 8));
        }
        for seed in 0..10 {
            let p = tree(3, seed);
            for level in 1..=3u8 {
                let (_, r) = prune_distal_with(&p.label, level, 1, DEFAULT_PRUNE_FRACTIONS).unwrap();
                let f = DEFAULT_PRUNE_FRACTIONS[level as usize - 1];
                assert_eq!(r.deleted, (f * r.branches as f64).floor() as usize);
            }
        }
    }

    #[test]
    fn root_vessel_core_is_never_removed() {
        for depth in 1..=3 {
            for seed in 0..4 {
                let p = tree(depth, seed);
                let root = &p.branches[0];
                let cl: Vec<[f64; 3]> = root.centerline.iter().map(|c| c.map(|v| v as f64)).collect();
                for level in 1..=3 {
                    let out = prune_distal(&p.label, level, seed).unwrap();
                    for i in p.label.foreground_indices() {
                        let c = p.label.geom.coords(i).map(|v| v as f64);
                        let near = cl.windows(2).any(|w| {
                            crate::phantom::point_segment_dist2(c, w[0], w[1]) <= (root.radius - 1.0).powi(2)
                        });
                        if near {
                            assert!(out.data[i] != 0, "depth {depth} seed {seed} level {level}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn levels_are_nested_and_remove_voxels() {
        for seed in 0..3 {
            let p = tree(3, seed);
            let l1 = prune_distal(&p.label, 1, seed).unwrap();
            let l2 = prune_distal(&p.label, 2, seed).unwrap();
            let l3 = prune_distal(&p.label, 3, seed).unwrap();
            assert!(l3.is_subset_of(&l2) && l2.is_subset_of(&l1) && l1.is_subset_of(&p.label));
            assert!(l1.count() < p.label.count() && l3.count() < l2.count());
        }
    }

    #[test]
    fn rejects_labels_without_branches() {
        let geom = Geometry::isotropic([5, 5, 5]);
        assert!(prune_distal(&LabelVolume::empty(geom), 1, 0).is_err());
        let dot = LabelVolume::from_fn(geom, |c| c == [2, 2, 2]);
        assert!(prune_distal(&dot, 2, 0).is_err());
        let p = tree(1, 0);
        assert!(prune_distal(&p.label, 4, 0).is_err());
    }
}
