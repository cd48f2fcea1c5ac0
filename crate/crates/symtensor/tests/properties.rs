use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symtensor::block_linalg::{truncate, BlockDiagMatrix};
use symtensor::charge::su2_system;
use symtensor::dense::{invariance_residual, DenseTensor};
use symtensor::fusion_tree::FusionTree;
use symtensor::gamma::{invert, GammaCache};
use symtensor::su2::{cg_coefficient, Spin, SpinProjection};
use symtensor::verify::{random_space, random_tensor, random_tree};
use symtensor::{Direction, RepSpace, SymTensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permute_is_unitary_and_invertible(seed in any::<u64>(), k in 2usize..=5) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, k, 300, false);
        let mut perm: Vec<usize> = (0..k).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let tau = random_tree(&mut r, k);
        let cache = GammaCache::new();
        let p = t.permute_with(&perm, &tau, &cache).unwrap();
        prop_assert!((p.norm() - t.norm()).abs() <= 1e-10 * t.norm().max(1.0));
        let back = p.permute_with(&invert(&perm), t.tree(), &cache).unwrap();
        prop_assert!(back.max_block_diff(&t.restored()) < 1e-10);
    }

    #[test]
    fn recoupling_preserves_overlaps(seed in any::<u64>(), k in 2usize..=5) {
        let mut r = rng(seed);
        let a = random_tensor(&mut r, k, 300, false);
        let b = SymTensor::random(a.spaces().to_vec(), a.dirs().to_vec(), a.tree().clone(), a.root(), &mut r).unwrap();
        let tau = random_tree(&mut r, k);
        let na = a.new_tree(&tau).unwrap();
        let nb = b.new_tree(&tau).unwrap();
        prop_assert!((na.dot(&nb) - a.dot(&b)).abs() < 1e-10 * (a.norm() * b.norm()).max(1.0));
    }

    #[test]
    fn fuse_then_split_is_identity(seed in any::<u64>(), k in 2usize..=5, cut in 1usize..5) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, k, 300, true);
        let cut = cut.min(k - 1);
        let groups = vec![(0..cut).collect::<Vec<_>>(), (cut..k).collect()];
        let (f, legs) = t.fuse(&groups, None, None).unwrap();
        prop_assert!((f.norm() - t.norm()).abs() < 1e-10 * t.norm().max(1.0));
        let s = f.split(1, &legs[1], None).unwrap().split(0, &legs[0], Some(t.tree())).unwrap();
        prop_assert!(s.max_block_diff(&t) < 1e-10);
    }

    #[test]
    fn dagger_preserves_norm_and_dense_array(seed in any::<u64>(), k in 1usize..=4) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, k, 300, true);
        let d = t.dagger().unwrap();
        prop_assert!((d.norm() - t.norm()).abs() < 1e-10 * t.norm().max(1.0));
        prop_assert!(d.to_dense().unwrap().max_diff(&t.to_dense().unwrap()) < 1e-10);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), k in 1usize..=4) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, k, 300, false);
        let back = SymTensor::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(back.max_block_diff(&t), 0.0);
    }

    #[test]
    fn dense_round_trip(seed in any::<u64>(), k in 1usize..=4) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, k, 300, false);
        let back = SymTensor::from_dense(&t.to_dense().unwrap(), t.spaces().to_vec(), t.dirs().to_vec(), t.tree().clone(), t.root(), 1e-9).unwrap();
        prop_assert!(back.max_block_diff(&t) < 1e-10);
    }

    #[test]
    fn dense_index_is_a_bijection(seed in any::<u64>()) {
        let v = random_space(&mut rng(seed), 6, 3, 4);
        let mut seen = vec![false; v.total_dim()];
        for &(c, d) in v.sectors() {
            for t in 0..d {
                for m in 0..(c as usize + 1) {
                    let i = v.dense_index(c, t, m);
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn truncation_keeps_at_most_chi(seed in any::<u64>(), chi in 1usize..20) {
        let mut r = rng(seed);
        let v = random_space(&mut r, 4, 4, 3);
        let a = BlockDiagMatrix::random(v.clone(), v, &mut r).unwrap();
        let svd = a.svd().unwrap();
        let smallest = svd.s.keys().map(|&c| c as usize + 1).min().unwrap();
        let Ok(tr) = truncate(&svd, chi) else {
            prop_assert!(chi < smallest);
            return Ok(());
        };
        let kept: usize = tr.s.iter().map(|(&c, s)| (c as usize + 1) * s.len()).sum();
        prop_assert!(kept <= chi);
        let total: f64 = svd.s.iter().map(|(&c, s)| (c as f64 + 1.0) * s.iter().map(|x| x * x).sum::<f64>()).sum();
        let held: f64 = tr.s.iter().map(|(&c, s)| (c as f64 + 1.0) * s.iter().map(|x| x * x).sum::<f64>()).sum();
        prop_assert!((total - held - tr.discarded_weight).abs() < 1e-9 * total.max(1.0));
    }
}

/// Two readings of the all-outgoing rank-3 phase: one with the projection
/// `m_c` in the sign (and the CG evaluated at `-m_c`), one with `j_c` in
/// its place (CG at `m_c`). Only the first is invariant.
#[test]
fn rank3_all_out_phase_readings() {
    let s = Spin::from_twice;
    let mut worst_m: f64 = 0.0;
    let mut best_j = f64::INFINITY;
    for (ta, tb, tc) in [(1, 1, 2), (2, 2, 2), (1, 2, 3), (2, 4, 4), (3, 3, 2)] {
        let sp = |t: u32| RepSpace::new(su2_system(), vec![(t as i32, 1)]).unwrap();
        let spaces = vec![sp(ta), sp(tb), sp(tc)];
        let dirs = vec![Direction::Out; 3];
        let m = |t: u32, i: usize| 2 * i as i32 - t as i32;
        let sign = |twice: i32| if (twice / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let norm = ((tc + 1) as f64).sqrt();
        let with_m = DenseTensor::from_fn(vec![ta as usize + 1, tb as usize + 1, tc as usize + 1], |ix| {
            let (ma, mb, mc) = (m(ta, ix[0]), m(tb, ix[1]), m(tc, ix[2]));
            let phase = sign(ta as i32 - tb as i32 + mc);
            phase * norm * cg_coefficient(s(ta), SpinProjection::from_twice(ma), s(tb), SpinProjection::from_twice(mb), s(tc), SpinProjection::from_twice(-mc))
        });
        let with_j = DenseTensor::from_fn(vec![ta as usize + 1, tb as usize + 1, tc as usize + 1], |ix| {
            let (ma, mb, mc) = (m(ta, ix[0]), m(tb, ix[1]), m(tc, ix[2]));
            let phase = sign(ta as i32 - tb as i32 + tc as i32);
            phase * norm * cg_coefficient(s(ta), SpinProjection::from_twice(ma), s(tb), SpinProjection::from_twice(mb), s(tc), SpinProjection::from_twice(mc))
        });
        assert!(with_m.norm() > 0.5);
        worst_m = worst_m.max(invariance_residual(&with_m, &spaces, &dirs).unwrap());
        best_j = best_j.min(invariance_residual(&with_j, &spaces, &dirs).unwrap());
    }
    assert!(worst_m < 1e-12, "m_c reading residual {worst_m}");
    assert!(best_j > 1e-3, "j_c reading residual {best_j}");
}

#[test]
fn engine_all_out_triple_is_invariant() {
    let v = RepSpace::new(su2_system(), vec![(1, 1), (2, 1)]).unwrap();
    let t = SymTensor::random(vec![v.clone(); 3], vec![Direction::Out; 3], FusionTree::left_comb(3), 0, &mut rng(9)).unwrap();
    assert!(t.invariance_residual().unwrap() < 1e-12);
}
