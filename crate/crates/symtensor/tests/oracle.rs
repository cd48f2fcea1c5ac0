use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symtensor::charge::{su2_system, u1_system};
use symtensor::dense::{dense_contract, dense_fuse, dense_permute, dense_split};
use symtensor::fusion_tree::{FusionTree, Shape};
use symtensor::{Charge, Direction, RepSpace, SymTensor};

use Direction::{In, InR, Out};

fn su2(s: &[(Charge, usize)]) -> RepSpace {
    RepSpace::new(su2_system(), s.to_vec()).unwrap()
}

fn u1(s: &[(Charge, usize)]) -> RepSpace {
    RepSpace::new(u1_system(), s.to_vec()).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn balanced4() -> FusionTree {
    FusionTree::from_shape(&Shape::pair(Shape::pair(Shape::Leaf(0), Shape::Leaf(1)), Shape::pair(Shape::Leaf(2), Shape::Leaf(3))))
}

#[test]
fn permute_matches_dense() {
    let v = su2(&[(0, 1), (1, 2), (2, 1)]);
    let w = su2(&[(1, 1), (3, 1)]);
    let spaces = vec![v.clone(), w.clone(), v.clone(), w];
    for (seed, root) in [(1, 0), (2, 2)] {
        let t = SymTensor::random(spaces.clone(), vec![Out, In, InR, Out], FusionTree::left_comb(4), root, &mut rng(seed)).unwrap();
        for perm in [[1, 0, 2, 3], [3, 1, 0, 2], [2, 3, 1, 0]] {
            for tau in [FusionTree::left_comb(4), FusionTree::right_comb(4), balanced4()] {
                let p = t.permute(&perm, &tau).unwrap();
                let mut full: Vec<usize> = perm.to_vec();
                if t.to_dense().unwrap().rank() > 4 {
                    full.push(4);
                }
                let want = dense_permute(&t.to_dense().unwrap(), &full).unwrap();
                assert!(p.to_dense().unwrap().max_diff(&want) < 1e-10, "perm {perm:?}");
                assert!(p.invariance_residual().unwrap() < 1e-10);
            }
        }
    }
}

#[test]
fn permute_matches_dense_u1() {
    let v = u1(&[(-1, 1), (0, 2), (2, 1)]);
    let t = SymTensor::random(vec![v.clone(), v.clone(), v], vec![Out, In, Out], FusionTree::left_comb(3), 1, &mut rng(3)).unwrap();
    let p = t.permute(&[2, 0, 1], &FusionTree::right_comb(3)).unwrap();
    let want = dense_permute(&t.to_dense().unwrap(), &[2, 0, 1]).unwrap();
    assert!(p.to_dense().unwrap().max_diff(&want) < 1e-12);
}

#[test]
fn fuse_matches_dense_fuser_and_splits_back() {
    let v = su2(&[(0, 1), (1, 2), (2, 1)]);
    let t = SymTensor::random(vec![v.clone(); 4], vec![Out, In, InR, In], FusionTree::left_comb(4), 0, &mut rng(4)).unwrap();
    let groups = vec![vec![0, 1], vec![2, 3]];
    let (f, legs) = t.fuse(&groups, None, None).unwrap();
    assert!(f.invariance_residual().unwrap() < 1e-10);
    let oracle: Vec<_> = legs.iter().map(|l| l.oracle_group()).collect();
    let want = dense_fuse(&t.to_dense().unwrap(), &oracle).unwrap();
    assert!(f.to_dense().unwrap().max_diff(&want) < 1e-10);
    let back = dense_split(&want, &oracle).unwrap();
    assert!(back.max_diff(&t.to_dense().unwrap()) < 1e-10);

    let s = f.split(1, &legs[1], None).unwrap();
    let s = s.split(0, &legs[0], Some(&FusionTree::left_comb(4))).unwrap();
    assert!(s.max_block_diff(&t) < 1e-10);
}

#[test]
fn fuse_three_groups_with_singleton() {
    let v = su2(&[(1, 1), (2, 2)]);
    let t = SymTensor::random(vec![v.clone(); 5], vec![In, Out, Out, InR, In], FusionTree::right_comb(5), 1, &mut rng(5)).unwrap();
    let groups = vec![vec![0], vec![1, 2, 3], vec![4]];
    let (f, legs) = t.fuse(&groups, None, Some(&FusionTree::right_comb(3))).unwrap();
    let back = f.split(1, &legs[1], Some(&FusionTree::right_comb(5))).unwrap();
    assert!(back.max_block_diff(&t) < 1e-10);
    assert!((f.norm() - t.norm()).abs() < 1e-9);
}

#[test]
fn contract_matches_dense() {
    let v = su2(&[(0, 1), (1, 2), (2, 1)]);
    let w = su2(&[(1, 2), (3, 1)]);
    let cases: Vec<(Vec<Direction>, Vec<Direction>, Vec<(usize, usize)>)> = vec![
        (vec![Out, Out, In], vec![In, Out, In], vec![(1, 0)]),
        (vec![Out, In, InR], vec![InR, Out, Out], vec![(1, 1), (2, 2)]),
        (vec![In, Out, Out], vec![Out, InR, In], vec![(0, 0)]),
        (vec![Out, Out, In], vec![In, In, Out], vec![(0, 0), (1, 1), (2, 2)]),
    ];
    for (i, (da, db, pairs)) in cases.into_iter().enumerate() {
        let sa = vec![v.clone(), w.clone(), v.clone()];
        let mut sb = vec![v.clone(), w.clone(), v.clone()];
        for &(x, y) in &pairs {
            sb[y] = sa[x].clone();
        }
        let a = SymTensor::random(sa, da, FusionTree::left_comb(3), 0, &mut rng(10 + i as u64)).unwrap();
        let b = SymTensor::random(sb, db, FusionTree::right_comb(3), 0, &mut rng(20 + i as u64)).unwrap();
        let c = a.contract(&b, &pairs).unwrap();
        let want = dense_contract(&a.to_dense().unwrap(), &b.to_dense().unwrap(), &pairs).unwrap();
        let got = c.to_dense().unwrap();
        assert!(got.max_diff(&want) < 1e-10, "case {i}: {}", got.max_diff(&want));
        assert!(c.invariance_residual().unwrap() < 1e-10);
    }
}

#[test]
fn contract_matches_dense_u1() {
    let v = u1(&[(-1, 1), (0, 2), (1, 1)]);
    let a = SymTensor::random(vec![v.clone(); 3], vec![Out, In, Out], FusionTree::left_comb(3), 0, &mut rng(30)).unwrap();
    let b = SymTensor::random(vec![v.clone(); 3], vec![In, Out, Out], FusionTree::left_comb(3), 0, &mut rng(31)).unwrap();
    let c = a.contract(&b, &[(2, 0), (1, 1)]).unwrap();
    let want = dense_contract(&a.to_dense().unwrap(), &b.to_dense().unwrap(), &[(2, 0), (1, 1)]).unwrap();
    assert!(c.to_dense().unwrap().max_diff(&want) < 1e-10);
}

#[test]
fn dagger_keeps_dense_array() {
    let v = su2(&[(0, 1), (1, 2), (2, 1)]);
    for dirs in [vec![Out, Out, Out], vec![In, Out, InR], vec![InR, InR, In], vec![In, In, Out]] {
        let t = SymTensor::random(vec![v.clone(); 3], dirs, FusionTree::left_comb(3), 0, &mut rng(40)).unwrap();
        let d = t.dagger().unwrap();
        assert!(d.to_dense().unwrap().max_diff(&t.to_dense().unwrap()) < 1e-10);
        // InR comes back as In, so compare dense arrays
        assert!(d.dagger().unwrap().to_dense().unwrap().max_diff(&t.to_dense().unwrap()) < 1e-10);
    }
}

#[test]
fn absorbed_then_permuted() {
    let v = su2(&[(1, 2), (2, 1)]);
    let t = SymTensor::random(vec![v.clone(); 4], vec![In, Out, InR, Out], FusionTree::left_comb(4), 0, &mut rng(50)).unwrap();
    let mut a = t.clone();
    a.absorb_bends();
    let p = a.permute(&[3, 2, 1, 0], &FusionTree::left_comb(4)).unwrap();
    let want = dense_permute(&t.to_dense().unwrap(), &[3, 2, 1, 0]).unwrap();
    assert!(p.to_dense().unwrap().max_diff(&want) < 1e-10);
}
