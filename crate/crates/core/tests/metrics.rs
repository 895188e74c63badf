mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vesselbench::degrade::dilate;
use vesselbench::metrics::{cl_dice, dice, skeletonize};
use vesselbench::phantom::{generate_phantom, PhantomConfig};
use vesselbench::topology::{count_components, Connectivity};
use vesselbench::{confusion_counts, Geometry, LabelVolume};

fn straight_tube() -> vesselbench::phantom::PhantomSample {
    generate_phantom(&PhantomConfig {
        shape: [24, 24, 32],
        root_radius: 3.0,
        branching_depth: 0,
        tortuosity: 0.0,
        noise_std: 0.0,
        rng_seed: 2,
        ..PhantomConfig::default()
    })
    .unwrap()
}

#[test]
fn tube_skeleton_follows_emitted_centerline() {
    let p = straight_tube();
    let s = skeletonize(&p.label);
    assert!(s.len() > 10);
    assert_eq!(count_components(&s.mask, Connectivity::TwentySix), 1);
    let cl = &p.branches[0].centerline;
    for i in s.mask.foreground_indices() {
        let c = s.mask.geom.coords(i);
        let near = cl.iter().any(|q| (0..3).map(|a| (c[a] as f64 - q[a] as f64).powi(2)).sum::<f64>() <= 1.0);
        assert!(near, "skeleton voxel {c:?} strays from centerline");
    }
}

#[test]
fn dilated_tube_keeps_full_topology_scores() {
    let gt = straight_tube().label;
    let r = cl_dice(&dilate(&gt), &gt).unwrap();
    assert_eq!(r.tprec, 1.0);
    assert_eq!(r.tsens, 1.0);
    assert!(r.dice < 1.0);
}

#[test]
fn one_of_two_tubes_by_skeleton_count() {
    let geom = Geometry::isotropic([10, 10, 10]);
    let tube = |cj: f64| {
        LabelVolume::from_fn(geom, move |c| {
            (c[0] as f64 - 3.0).powi(2) + (c[1] as f64 - cj).powi(2) <= 1.0 && (1..9).contains(&c[2])
        })
    };
    let (a, b) = (tube(2.0), tube(7.0));
    let gt = LabelVolume::new(geom, a.data.iter().zip(&b.data).map(|(x, y)| x | y).collect()).unwrap();
    let (sa, sb) = (skeletonize(&a).len(), skeletonize(&b).len());
    let r = cl_dice(&a, &gt).unwrap();
    assert_eq!(r.tprec, 1.0);
    assert_eq!(r.tsens, sa as f64 / (sa + sb) as f64);
    assert!((r.tsens - 0.5).abs() < 0.1);
}

#[test]
fn thin_segment_scenes_match_counting_oracle() {
    for seed in 0..20 {
        let (pred, gt) = common::thin_segment_scene(seed);
        assert_eq!(skeletonize(&gt).mask, gt, "scene {seed} is not its own skeleton");
        assert_eq!(skeletonize(&pred).mask, pred);
        let r = cl_dice(&pred, &gt).unwrap();
        let (tp, ts, cl) = common::brute_cl_dice_thin(&pred, &gt);
        assert_eq!((r.tprec, r.tsens, r.cldice), (tp, ts, cl), "scene {seed}");
    }
}

fn blobby(shape: [usize; 3], seed: u64) -> LabelVolume {
    // Union of a few random boxes: thick enough to thin non-trivially.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes: Vec<([usize; 3], [usize; 3])> = (0..rng.gen_range(1..4))
        .map(|_| {
            let lo = shape.map(|n| rng.gen_range(0..n - 1));
            let hi = [0, 1, 2].map(|a| (lo[a] + rng.gen_range(1..5)).min(shape[a]));
            (lo, hi)
        })
        .collect();
    LabelVolume::from_fn(Geometry::isotropic(shape), |c| {
        boxes.iter().any(|(lo, hi)| (0..3).all(|a| lo[a] <= c[a] && c[a] < hi[a]))
    })
}

fn translate(m: &LabelVolume, off: [usize; 3]) -> LabelVolume {
    let s = m.shape();
    let geom = Geometry::isotropic([s[0] + off[0] + 1, s[1] + off[1] + 1, s[2] + off[2] + 1]);
    LabelVolume::from_fn(geom, |c| {
        (0..3).all(|a| c[a] >= off[a] && c[a] - off[a] < s[a])
            && m.get([c[0] - off[0], c[1] - off[1], c[2] - off[2]])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_bounded_and_dice_symmetric(sa in any::<u64>(), sb in any::<u64>()) {
        let (p, g) = (blobby([8, 8, 8], sa), blobby([8, 8, 8], sb));
        let r = cl_dice(&p, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.cldice));
        prop_assert!(r.cldice <= 2.0 * r.tprec.min(r.tsens) + 1e-12);
        prop_assert_eq!(r.dice, dice(&confusion_counts(&g, &p).unwrap()));
        let perfect = skeletonize(&p).mask.is_subset_of(&g) && skeletonize(&g).mask.is_subset_of(&p);
        prop_assert_eq!(r.cldice == 1.0, perfect);
    }

    #[test]
    fn translation_leaves_scores_unchanged(sa in any::<u64>(), sb in any::<u64>(), off in prop::array::uniform3(0usize..4)) {
        let (p, g) = (blobby([7, 7, 7], sa), blobby([7, 7, 7], sb));
        let r0 = cl_dice(&p, &g).unwrap();
        let r1 = cl_dice(&translate(&p, off), &translate(&g, off)).unwrap();
        prop_assert_eq!(r0, r1);
    }
}
