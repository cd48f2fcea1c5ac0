//! Property suites shared by the `verify` command and the acceptance run.
//!
//! Every suite compares the symmetric engine with an independent route
//! (explicit CG contractions, the dense oracle, or a second move order) on
//! seeded random instances and reports the worst residual it saw.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::block_linalg::{blockdiag_to_tree, dense_singular_values, tree_to_blockdiag, BlockDiagMatrix};
use crate::charge::{su2_system, Charge};
use crate::dense::{apply_on_axis, bend_matrix, dense_contract, dense_fuse, dense_permute, dense_split};
use crate::fusion_tree::{enumerate_paths, FusionTree, Shape};
use crate::gamma::{build_gamma, invert, CombOrder, GammaCache, MoveOrder, SwapOrder};
use crate::models::{exact_diag, exact_diag_dense, heisenberg_gate, with_multiplicities};
use crate::rep_space::RepSpace;
use crate::su2::{cg_block, cg_coefficient, recoupling_f, Spin, SpinProjection};
use crate::sym_tensor::{tree_space, Direction, SymTensor};
use crate::Error;

#[derive(Clone, Debug, Serialize)]
pub struct Property {
    pub name: String,
    pub instances: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
}

impl Property {
    fn new(name: &str, instances: usize, max_residual: f64, tolerance: f64, seconds: f64) -> Property {
        Property { name: name.into(), instances, max_residual, tolerance, passed: max_residual <= tolerance, seconds }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub suite: String,
    pub passed: bool,
    pub properties: Vec<Property>,
    pub warnings: Vec<String>,
}

/// Tracks the largest residual and the largest invariance residual of
/// every tensor an operation produced.
#[derive(Default)]
struct Tally {
    instances: usize,
    worst: f64,
}

impl Tally {
    fn record(&mut self, r: f64) {
        self.instances += 1;
        // NaN must not pass silently
        self.worst = if r.is_nan() { f64::INFINITY } else { self.worst.max(r) };
    }
}

/// Largest invariance residual seen by any suite in this process.
static PROTECTION: parking_lot::Mutex<(usize, f64)> = parking_lot::Mutex::new((0, 0.0));

fn protect(t: &SymTensor) -> Result<(), Error> {
    let r = t.invariance_residual()?;
    let mut p = PROTECTION.lock();
    p.0 += 1;
    p.1 = if r.is_nan() { f64::INFINITY } else { p.1.max(r) };
    Ok(())
}

/// `(tensors checked, worst invariance residual)` over every checked output.
pub fn protection_summary() -> (usize, f64) {
    *PROTECTION.lock()
}

fn s(tj: u32) -> Spin {
    Spin::from_twice(tj)
}

/// `F` from explicit CG contraction, normalized by `2J+1`.
pub fn cg_contraction_f(ta: u32, tb: u32, tc: u32, td: u32, te: u32, tf: u32) -> f64 {
    let (a, b, c, d, e, f) = (s(ta), s(tb), s(tc), s(td), s(te), s(tf));
    let mut acc = 0.0;
    for ma in a.projections() {
        for mb in b.projections() {
            for mc in c.projections() {
                let md = SpinProjection::from_twice(ma.twice_m + mb.twice_m + mc.twice_m);
                let me = SpinProjection::from_twice(ma.twice_m + mb.twice_m);
                let mf = SpinProjection::from_twice(mb.twice_m + mc.twice_m);
                if !d.contains(md) || !e.contains(me) || !f.contains(mf) {
                    continue;
                }
                acc += cg_coefficient(a, ma, b, mb, e, me)
                    * cg_coefficient(e, me, c, mc, d, md)
                    * cg_coefficient(b, mb, c, mc, f, mf)
                    * cg_coefficient(a, ma, f, mf, d, md);
            }
        }
    }
    acc / (td + 1) as f64
}

/// CG orthogonality for spins up to 3 and closed-form F against CG contraction up to spin 2.
pub fn kernel_properties() -> Vec<Property> {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for ta in 0..=6u32 {
        for tb in 0..=6u32 {
            let (a, b) = (s(ta), s(tb));
            let lo = ta.abs_diff(tb);
            // Σ_{c,mc} C C = δ and Σ_{ma,mb} C C = δ
            let mut full = DMatrix::<f64>::zeros(a.dim() * b.dim(), a.dim() * b.dim());
            let mut col = 0;
            for tc in (lo..=ta + tb).step_by(2) {
                let blk = cg_block(a, b, s(tc));
                for ic in 0..s(tc).dim() {
                    for ia in 0..a.dim() {
                        for ib in 0..b.dim() {
                            full[(ia * b.dim() + ib, col)] = blk.at(ia, ib, ic);
                        }
                    }
                    col += 1;
                }
            }
            let id = DMatrix::<f64>::identity(full.nrows(), full.ncols());
            worst = worst.max((full.transpose() * &full - &id).amax()).max((&full * full.transpose() - &id).amax());
            n += 1;
        }
    }
    let p1 = Property::new("cg_orthogonality_spin_le_3", n, worst, 1e-12, t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for ta in 0..=4 {
        for tb in 0..=4 {
            for tc in 0..=4 {
                for td in 0..=4 {
                    for te in 0..=4 {
                        for tf in 0..=4 {
                            let closed = recoupling_f(s(ta), s(tb), s(tc), s(td), s(te), s(tf));
                            let brute = cg_contraction_f(ta, tb, tc, td, te, tf);
                            if closed != 0.0 || brute != 0.0 {
                                n += 1;
                            }
                            worst = worst.max((closed - brute).abs());
                        }
                    }
                }
            }
        }
    }
    vec![p1, Property::new("f_closed_form_vs_cg_contraction_spin_le_2", n, worst, 1e-10, t0.elapsed().as_secs_f64())]
}

/// Random binary tree over `k` leaves.
pub fn random_tree(rng: &mut impl Rng, k: usize) -> FusionTree {
    fn build(rng: &mut impl Rng, lo: usize, hi: usize) -> Shape {
        if hi - lo == 1 {
            return Shape::Leaf(lo);
        }
        let cut = rng.gen_range(lo + 1..hi);
        Shape::pair(build(rng, lo, cut), build(rng, cut, hi))
    }
    if k == 0 {
        return FusionTree::left_comb(0);
    }
    FusionTree::from_shape(&build(rng, 0, k))
}

/// Random SU(2) space with spins up to `max_twice/2`.
pub fn random_space(rng: &mut impl Rng, max_twice: Charge, max_deg: usize, max_sectors: usize) -> RepSpace {
    let mut charges: Vec<Charge> = (0..=max_twice).collect();
    charges.shuffle(rng);
    let n = rng.gen_range(1..=max_sectors.min(charges.len()));
    let sectors: Vec<(Charge, usize)> = charges[..n].iter().map(|&c| (c, rng.gen_range(1..=max_deg))).collect();
    RepSpace::from_unsorted(su2_system(), sectors).unwrap()
}

fn random_dir(rng: &mut impl Rng) -> Direction {
    [Direction::Out, Direction::In, Direction::InR][rng.gen_range(0..3)]
}

/// Random invariant tensor of rank `k` with dense size at most `limit`;
/// `root_zero` forces the trivial root.
pub fn random_tensor(rng: &mut impl Rng, k: usize, limit: usize, root_zero: bool) -> SymTensor {
    loop {
        let spaces: Vec<RepSpace> = (0..k).map(|_| random_space(rng, 3, 2, 2)).collect();
        let dirs: Vec<Direction> = (0..k).map(|_| random_dir(rng)).collect();
        if let Some(t) = tensor_on(rng, spaces, dirs, limit, root_zero) {
            return t;
        }
    }
}

fn tensor_on(rng: &mut impl Rng, spaces: Vec<RepSpace>, dirs: Vec<Direction>, limit: usize, root_zero: bool) -> Option<SymTensor> {
    let tree = random_tree(rng, spaces.len());
    let tspaces: Vec<RepSpace> = spaces.iter().zip(&dirs).map(|(s, d)| tree_space(s, *d)).collect();
    let roots: Vec<Charge> = if root_zero { vec![0] } else { (0..=6).collect() };
    let roots: Vec<Charge> = roots.into_iter().filter(|&r| !enumerate_paths(&tree, &tspaces, r).unwrap().is_empty()).collect();
    let &root = roots.choose(rng)?;
    let t = SymTensor::random(spaces, dirs, tree, root, rng).ok()?;
    (t.dense_size() <= limit).then_some(t)
}

fn max_diff(a: &crate::dense::DenseTensor, b: &crate::dense::DenseTensor) -> f64 {
    a.max_diff(b)
}

/// Γ round trips and move-order independence on random trees.
pub fn gamma_properties(instances: usize, seed: u64) -> Result<Vec<Property>, Error> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut round = Tally::default();
    let mut orders = Tally::default();
    let mut done = 0;
    while done < instances {
        let k = rng.gen_range(2..=5);
        let spaces: Vec<RepSpace> = (0..k).map(|_| random_space(&mut rng, 3, 1, 2)).collect();
        let tau = random_tree(&mut rng, k);
        let tau2 = random_tree(&mut rng, k);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let roots: Vec<Charge> = (0..=15).filter(|&r| !enumerate_paths(&tau, &spaces, r).unwrap().is_empty()).collect();
        let Some(&root) = roots.choose(&mut rng) else { continue };
        let fwd = build_gamma(&tau, &perm, &tau2, &spaces, root, MoveOrder::default())?;
        let out_spaces: Vec<RepSpace> = perm.iter().map(|&p| spaces[p].clone()).collect();
        let back = build_gamma(&tau2, &invert(&perm), &tau, &out_spaces, root, MoveOrder::default())?;
        round.record(fwd.then(&back)?.identity_deviation());
        for (comb, swaps) in [
            (CombOrder::DeepestFirst, SwapOrder::Bubble),
            (CombOrder::RootFirst, SwapOrder::Selection),
            (CombOrder::DeepestFirst, SwapOrder::Padded(rng.gen())),
        ] {
            let other = build_gamma(&tau, &perm, &tau2, &spaces, root, MoveOrder { comb, swaps })?;
            orders.record(fwd.max_difference(&other));
        }
        done += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok(vec![
        Property::new("gamma_round_trip_identity", round.instances, round.worst, 1e-10, secs),
        Property::new("gamma_move_order_independence", orders.instances, orders.worst, 1e-10, secs),
    ])
}

/// Symmetric operations against the dense oracle.
pub fn tensor_properties(instances: usize, seed: u64, cache: &GammaCache) -> Result<Vec<Property>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let limit = 300;

    let t0 = Instant::now();
    let mut tally = Tally::default();
    for _ in 0..instances {
        let k = rng.gen_range(2..=5);
        let t = random_tensor(&mut rng, k, limit, false);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let tau = random_tree(&mut rng, k);
        let p = t.permute_with(&perm, &tau, cache)?;
        protect(&p)?;
        let dense = t.to_dense()?;
        let mut full = perm.clone();
        if dense.rank() > k {
            full.push(k);
        }
        tally.record(max_diff(&p.to_dense()?, &dense_permute(&dense, &full)?));
    }
    out.push(Property::new("permute_vs_dense", tally.instances, tally.worst, 1e-10, t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut fuse = Tally::default();
    let mut split = Tally::default();
    for _ in 0..instances {
        let k = rng.gen_range(2..=5);
        let t = random_tensor(&mut rng, k, limit, true);
        // random contiguous grouping
        let mut groups: Vec<Vec<usize>> = vec![vec![0]];
        for l in 1..k {
            if rng.gen_bool(0.5) {
                groups.last_mut().unwrap().push(l);
            } else {
                groups.push(vec![l]);
            }
        }
        let gtrees: Vec<FusionTree> = groups.iter().map(|g| random_tree(&mut rng, g.len())).collect();
        let outer = random_tree(&mut rng, groups.len());
        let (f, legs) = t.fuse_with(&groups, Some(&gtrees), Some(&outer), cache)?;
        protect(&f)?;
        let oracle: Vec<_> = legs.iter().map(|l| l.oracle_group()).collect();
        let dense = t.to_dense()?;
        let fused_dense = dense_fuse(&dense, &oracle)?;
        fuse.record(max_diff(&f.to_dense()?, &fused_dense));
        let mut back = f.clone();
        for (gi, leg) in legs.iter().enumerate().rev() {
            back = back.split_with(gi, leg, None, cache)?;
            protect(&back)?;
        }
        let back = back.new_tree_with(t.tree(), cache)?;
        split.record(back.max_block_diff(&t).max(max_diff(&dense_split(&fused_dense, &oracle)?, &dense)));
    }
    let secs = t0.elapsed().as_secs_f64();
    out.push(Property::new("fuse_vs_dense", fuse.instances, fuse.worst, 1e-10, secs));
    out.push(Property::new("split_vs_dense", split.instances, split.worst, 1e-10, secs));

    let t0 = Instant::now();
    let mut tally = Tally::default();
    for _ in 0..instances {
        let k = rng.gen_range(2..=5);
        let t = random_tensor(&mut rng, k, limit, false);
        let new_dirs: Vec<Direction> = t
            .dirs()
            .iter()
            .map(|&d| match (d, rng.gen_bool(0.5)) {
                (_, false) => d,
                (Direction::Out, true) => random_dir(&mut rng).max(Direction::In),
                (_, true) => Direction::Out,
            })
            .collect();
        let r = t.reverse(&new_dirs)?;
        let mut want = t.to_dense()?;
        for l in 0..k {
            if new_dirs[l] != t.dirs()[l] {
                let m = bend_matrix(&t.spaces()[l], t.dirs()[l]).transpose() * bend_matrix(&r.spaces()[l], new_dirs[l]);
                want = apply_on_axis(&want, l, &m)?;
            }
        }
        let mut a = r.clone();
        a.absorb_bends();
        protect(&a)?;
        tally.record(max_diff(&r.to_dense()?, &want).max(max_diff(&a.to_dense()?, &want)));
    }
    out.push(Property::new("reverse_and_absorb_vs_dense", tally.instances, tally.worst, 1e-10, t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut tally = Tally::default();
    while tally.instances < instances {
        let ka = rng.gen_range(1..=3);
        let kb = rng.gen_range(1..=3);
        let a = random_tensor(&mut rng, ka, limit, true);
        let nc = rng.gen_range(1..=ka.min(kb));
        let mut xs: Vec<usize> = (0..ka).collect();
        xs.shuffle(&mut rng);
        let mut ys: Vec<usize> = (0..kb).collect();
        ys.shuffle(&mut rng);
        let pairs: Vec<(usize, usize)> = xs[..nc].iter().zip(&ys[..nc]).map(|(&x, &y)| (x, y)).collect();
        let mut spaces: Vec<RepSpace> = (0..kb).map(|_| random_space(&mut rng, 3, 2, 2)).collect();
        let mut dirs: Vec<Direction> = (0..kb).map(|_| random_dir(&mut rng)).collect();
        for &(x, y) in &pairs {
            spaces[y] = a.spaces()[x].clone();
            dirs[y] = if a.dirs()[x].is_incoming() { Direction::Out } else { [Direction::In, Direction::InR][rng.gen_range(0..2)] };
        }
        let Some(b) = tensor_on(&mut rng, spaces, dirs, limit, true) else { continue };
        let c = a.contract_with(&b, &pairs, cache)?;
        protect(&c)?;
        let want = dense_contract(&a.to_dense()?, &b.to_dense()?, &pairs)?;
        let got = c.to_dense()?;
        let got = if got.rank() == 0 { got } else { got.reshape(want.dims().to_vec())? };
        tally.record(max_diff(&got, &want));
    }
    out.push(Property::new("contract_vs_dense", tally.instances, tally.worst, 1e-10, t0.elapsed().as_secs_f64()));
    Ok(out)
}

fn random_blockdiag(rng: &mut ChaCha8Rng, square: bool) -> BlockDiagMatrix {
    loop {
        let rows = random_space(rng, 4, 4, 3);
        let cols = if square { rows.clone() } else { random_space(rng, 4, 4, 3) };
        if rows.total_dim() * cols.total_dim() > 300 * 300 {
            continue;
        }
        let m = BlockDiagMatrix::random(rows, cols, rng).unwrap();
        if !m.blocks().is_empty() {
            return m;
        }
    }
}

/// Block-diagonal algebra against dense matrices, plus counter identities.
pub fn linalg_properties(instances: usize, seed: u64) -> Result<Vec<Property>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let t0 = Instant::now();
    let mut tally = Tally::default();
    for _ in 0..instances {
        let a = random_blockdiag(&mut rng, false);
        let b = BlockDiagMatrix::random(a.cols().clone(), random_space(&mut rng, 4, 4, 3), &mut rng)?;
        let c = a.matmul(&b)?;
        tally.record((c.to_dense()? - a.to_dense()? * b.to_dense()?).amax());
    }
    out.push(Property::new("matmul_vs_dense", tally.instances, tally.worst, 1e-10, t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut tally = Tally::default();
    for _ in 0..instances {
        let a = random_blockdiag(&mut rng, false);
        let svd = a.svd()?;
        let recon = svd.u.matmul(&BlockDiagMatrix::from_blocks(
            svd.u.cols().clone(),
            svd.v.rows().clone(),
            svd.s.iter().map(|(&c, v)| (c, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v.clone())))),
        )?)?;
        let recon = recon.matmul(&svd.v)?;
        let mut dense_s: Vec<f64> = a.to_dense()?.singular_values().iter().copied().collect();
        dense_s.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let mut block_s = dense_singular_values(&svd.s, a.system());
        block_s.resize(dense_s.len(), 0.0);
        let vals = dense_s.iter().zip(&block_s).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        tally.record(vals.max((recon.to_dense()? - a.to_dense()?).amax()));
    }
    out.push(Property::new("svd_vs_dense", tally.instances, tally.worst, 1e-10, t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut tally = Tally::default();
    for _ in 0..instances {
        let a = random_blockdiag(&mut rng, true);
        let h = a.add(&a.transpose())?;
        let e = h.eig(true)?;
        let mut block: Vec<f64> = e.values.iter().flat_map(|(&c, v)| v.iter().flat_map(move |&x| std::iter::repeat_n(x, c as usize + 1))).collect();
        block.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut dense: Vec<f64> = h.to_dense()?.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let r = if block.len() == dense.len() { block.iter().zip(&dense).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) } else { f64::INFINITY };
        tally.record(r);
    }
    out.push(Property::new("eig_vs_dense", tally.instances, tally.worst, 1e-10, t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut tally = Tally::default();
    for _ in 0..instances {
        let a = random_blockdiag(&mut rng, false);
        let dirs = [[Direction::Out, Direction::In], [Direction::In, Direction::Out], [Direction::Out, Direction::InR]][rng.gen_range(0..3)];
        let t = blockdiag_to_tree(&a, dirs)?;
        protect(&t)?;
        let back = tree_to_blockdiag(&t)?;
        let dense = t.to_dense()?.to_matrix();
        tally.record((back.to_dense()? - a.to_dense()?).amax().max((dense - a.to_dense()?).amax()));
    }
    out.push(Property::new("tree_blockdiag_round_trip", tally.instances, tally.worst, 1e-12, t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for q in 2..=4usize {
        for d in [1usize, 3, 8] {
            let (sym, dense) = flop_counts(q, d)?;
            let p = (q * q + q) as f64;
            let want = p.powi(3) / q as f64;
            worst = worst.max((dense as f64 / sym as f64 - want).abs() / want);
            worst = worst.max((sym as f64 - (q * d * d * d) as f64).abs());
        }
    }
    out.push(Property::new("flop_ratio_matches_q5_formula", 9, worst, 0.0, t0.elapsed().as_secs_f64()));
    Ok(out)
}

/// `(blockwise, dense)` multiply-add counts for `q` half-integer charges
/// `1/2 … q-1/2` with `d` states each.
pub fn flop_counts(q: usize, d: usize) -> Result<(u64, u64), Error> {
    let space = RepSpace::new(su2_system(), (0..q).map(|i| (2 * i as Charge + 1, d)).collect())?;
    let m = BlockDiagMatrix::identity(space.clone());
    let mut flops = 0;
    m.matmul_counted(&m, &mut flops)?;
    let n = space.total_dim() as u64;
    Ok((flops, n * n * n))
}

/// Gate spectrum and blocked versus dense exact diagonalization.
pub fn model_properties(max_spins: usize) -> Result<Vec<Property>, Error> {
    let mut out = Vec::new();
    let t0 = Instant::now();
    let g = heisenberg_gate(&RepSpace::new(su2_system(), vec![(1, 1)])?)?;
    protect(&g)?;
    out.push(Property::new("gate_invariance", 1, g.invariance_residual()?, 1e-12, t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut tally = Tally::default();
    let mut ground = Tally::default();
    for l in 2..=max_spins {
        for periodic in [false, true] {
            let spectra = exact_diag(l, periodic, None)?;
            let blocked = with_multiplicities(&spectra);
            let dense = exact_diag_dense(l, periodic)?;
            let r = if blocked.len() == dense.len() { blocked.iter().zip(&dense).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) } else { f64::INFINITY };
            tally.record(r);
            if periodic && l % 2 == 0 {
                let best = spectra.iter().filter_map(|s| s.energies.first().map(|&e| (e, s.twice_j))).min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()).unwrap();
                ground.record(if best.1 == 0 { 0.0 } else { 1.0 });
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    out.push(Property::new("blocked_vs_dense_spectra", tally.instances, tally.worst, 1e-9, secs));
    out.push(Property::new("even_ring_singlet_ground_state", ground.instances, ground.worst, 0.0, secs));
    Ok(out)
}

pub const SUITES: [&str; 5] = ["kernels", "gamma", "tensors", "linalg", "models"];

/// Runs one named suite (or `all`).
pub fn run_suite(name: &str, instances: usize, seed: u64, cache: &GammaCache) -> Result<Report, Error> {
    let names: Vec<&str> = if name == "all" { SUITES.to_vec() } else { vec![name] };
    let mut properties = Vec::new();
    for n in names {
        match n {
            "kernels" => properties.extend(kernel_properties()),
            "gamma" => properties.extend(gamma_properties(instances, seed)?),
            "tensors" => properties.extend(tensor_properties(instances, seed, cache)?),
            "linalg" => properties.extend(linalg_properties(instances, seed)?),
            "models" => properties.extend(model_properties(10)?),
            other => return Err(Error::Config { path: "suite".into(), message: format!("unknown suite {other}") }),
        }
    }
    let (n, worst) = protection_summary();
    if n > 0 {
        properties.push(Property::new("symmetry_protection", n, worst, 1e-9, 0.0));
    }
    let passed = properties.iter().all(|p| p.passed);
    let warnings = cache.load_warning().map(|w| vec![w.to_string()]).unwrap_or_default();
    Ok(Report { format_version: crate::FORMAT_VERSION, suite: name.into(), passed, properties, warnings })
}
