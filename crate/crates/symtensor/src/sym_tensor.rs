//! Symmetric tensors as degeneracy blocks over fusion-tree sector paths.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::charge::{Charge, ChargeSystem};
use crate::dense::{apply_on_axis, bend_matrix, dense_permute, for_each_index, structural_tensor_with, DenseTensor};
use crate::fusion_tree::{enumerate_with, FusionTree, SectorPath};
use crate::gamma::{check_permutation, reversal_factor, Bend, GammaCache, GammaKey, GammaKind};
use crate::rep_space::{fuse_spaces, FuseMap, RepSpace, DENSE_LIMIT};
use crate::Error;

/// Orientation of a leg. Incoming legs carry a bend: the cup for `In`, its
/// transpose (the cap) for `InR`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Out,
    In,
    InR,
}

impl Direction {
    pub fn is_incoming(self) -> bool {
        self != Direction::Out
    }

    fn bend(self) -> Bend {
        if self == Direction::InR {
            Bend::Cap
        } else {
            Bend::Cup
        }
    }
}

/// Charges a leg carries inside the tree.
pub fn tree_space(space: &RepSpace, dir: Direction) -> RepSpace {
    if dir == Direction::Out {
        space.clone()
    } else {
        space.dual()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor {
    system: ChargeSystem,
    spaces: Vec<RepSpace>,
    dirs: Vec<Direction>,
    tree: FusionTree,
    root: Charge,
    absorbed: Vec<bool>,
    blocks: BTreeMap<SectorPath, DenseTensor>,
}

/// Leaf ranges spanned by every id of a tree.
static TOUCHED: AtomicU64 = AtomicU64::new(0);

/// Degeneracy coefficients read or written by `permute` and `fuse` in this
/// process, counting one per block entry per recoupling coefficient applied.
pub fn coefficients_touched() -> u64 {
    TOUCHED.load(Ordering::Relaxed)
}

fn spans(tree: &FusionTree) -> Vec<(usize, usize)> {
    let mut s: Vec<(usize, usize)> = (0..tree.leaves()).map(|l| (l, l + 1)).collect();
    for &(l, r) in tree.nodes() {
        s.push((s[l].0, s[r].1));
    }
    s
}

fn span_index(tree: &FusionTree) -> HashMap<(usize, usize), usize> {
    spans(tree).into_iter().enumerate().map(|(i, s)| (s, i)).collect()
}

fn comb_pair(a: usize, b: usize) -> FusionTree {
    if a == 0 {
        FusionTree::left_comb(b)
    } else if b == 0 {
        FusionTree::left_comb(a)
    } else {
        FusionTree::left_comb(2).compose(&[FusionTree::left_comb(a), FusionTree::left_comb(b)]).unwrap()
    }
}

impl SymTensor {
    /// The zero tensor.
    pub fn zeros(spaces: Vec<RepSpace>, dirs: Vec<Direction>, tree: FusionTree, root: Charge) -> Result<SymTensor, Error> {
        let system = match spaces.first() {
            Some(s) => s.system(),
            None => ChargeSystem::Su2,
        };
        SymTensor::zeros_in(system, spaces, dirs, tree, root)
    }

    /// As [`SymTensor::zeros`], naming the charge system (needed for rank 0).
    pub fn zeros_in(system: ChargeSystem, spaces: Vec<RepSpace>, dirs: Vec<Direction>, tree: FusionTree, root: Charge) -> Result<SymTensor, Error> {
        if spaces.len() != dirs.len() || spaces.len() != tree.leaves() {
            return Err(Error::Structure(format!("{} spaces, {} directions, {} tree leaves", spaces.len(), dirs.len(), tree.leaves())));
        }
        for s in &spaces {
            if s.system() != system {
                return Err(Error::SystemMismatch(system, s.system()));
            }
        }
        if !system.is_valid(root) {
            return Err(Error::InvalidSpace(format!("root charge {root} is not a valid {system} charge")));
        }
        if spaces.is_empty() && root != system.identity() {
            return Err(Error::Structure("a rank-0 tensor has the trivial root".into()));
        }
        let absorbed = vec![false; spaces.len()];
        Ok(SymTensor { system, spaces, dirs, tree, root, absorbed, blocks: BTreeMap::new() })
    }

    /// Random Gaussian entries on every allowed path.
    pub fn random(spaces: Vec<RepSpace>, dirs: Vec<Direction>, tree: FusionTree, root: Charge, rng: &mut impl Rng) -> Result<SymTensor, Error> {
        let mut t = SymTensor::zeros(spaces, dirs, tree, root)?;
        for p in t.allowed_paths() {
            let shape = t.block_shape(&p);
            let n = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            t.blocks.insert(p, DenseTensor::from_vec(shape, data)?);
        }
        Ok(t)
    }

    /// Builds a tensor from explicit blocks, checking each path and shape.
    pub fn from_blocks(
        spaces: Vec<RepSpace>,
        dirs: Vec<Direction>,
        tree: FusionTree,
        root: Charge,
        blocks: impl IntoIterator<Item = (SectorPath, DenseTensor)>,
    ) -> Result<SymTensor, Error> {
        let mut t = SymTensor::zeros(spaces, dirs, tree, root)?;
        for (p, b) in blocks {
            t.set_block(p, b)?;
        }
        Ok(t)
    }

    pub fn set_block(&mut self, path: SectorPath, block: DenseTensor) -> Result<(), Error> {
        if !self.is_allowed(&path) {
            return Err(Error::Structure(format!("path {path:?} is not allowed")));
        }
        let shape = self.block_shape(&path);
        if block.dims() != shape.as_slice() {
            return Err(Error::Structure(format!("block for {path:?} has shape {:?}, expected {shape:?}", block.dims())));
        }
        self.blocks.insert(path, block);
        Ok(())
    }

    pub fn system(&self) -> ChargeSystem {
        self.system
    }

    pub fn rank(&self) -> usize {
        self.spaces.len()
    }

    pub fn spaces(&self) -> &[RepSpace] {
        &self.spaces
    }

    pub fn dirs(&self) -> &[Direction] {
        &self.dirs
    }

    pub fn tree(&self) -> &FusionTree {
        &self.tree
    }

    pub fn root(&self) -> Charge {
        self.root
    }

    pub fn absorbed(&self) -> &[bool] {
        &self.absorbed
    }

    pub fn blocks(&self) -> &BTreeMap<SectorPath, DenseTensor> {
        &self.blocks
    }

    pub fn block(&self, path: &SectorPath) -> Option<&DenseTensor> {
        self.blocks.get(path)
    }

    pub fn tree_spaces(&self) -> Vec<RepSpace> {
        self.spaces.iter().zip(&self.dirs).map(|(s, d)| tree_space(s, *d)).collect()
    }

    pub fn allowed_paths(&self) -> Vec<SectorPath> {
        if self.rank() == 0 {
            return vec![Vec::new()];
        }
        let options: Vec<Vec<Charge>> = self.tree_spaces().iter().map(|s| s.charges().collect()).collect();
        enumerate_with(self.system, &self.tree, &options, Some(self.root))
    }

    fn is_allowed(&self, path: &SectorPath) -> bool {
        self.allowed_paths().binary_search(path).is_ok()
    }

    pub fn block_shape(&self, path: &SectorPath) -> Vec<usize> {
        self.tree_spaces().iter().enumerate().map(|(l, s)| s.degeneracy(path[l])).collect()
    }

    /// Number of stored coefficients over all allowed paths.
    pub fn parameter_count(&self) -> usize {
        self.allowed_paths().iter().map(|p| self.block_shape(p).iter().product::<usize>()).sum()
    }

    /// Number of entries of the dense realization.
    pub fn dense_size(&self) -> usize {
        self.spaces.iter().map(|s| s.total_dim()).product::<usize>() * self.system.dim(self.root)
    }

    /// Spaces and directions of the dense realization's axes, including the
    /// root axis (treated as incoming) when the root is not trivial.
    pub fn dense_legs(&self) -> (Vec<RepSpace>, Vec<Direction>) {
        let mut s = self.spaces.clone();
        let mut d = self.dirs.clone();
        if self.root != self.system.identity() {
            s.push(RepSpace::new(self.system, vec![(self.root, 1)]).unwrap());
            d.push(Direction::In);
        }
        (s, d)
    }

    fn dense_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.spaces.iter().map(|s| s.total_dim()).collect();
        let rd = self.system.dim(self.root);
        if rd > 1 {
            dims.push(rd);
        }
        dims
    }

    /// The dense array `Σ_paths P ⊗ Q`, bends attached. A root axis is
    /// appended when the root is more than one-dimensional.
    pub fn to_dense(&self) -> Result<DenseTensor, Error> {
        let n = self.dense_size();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge(n));
        }
        let g = self.system;
        let k = self.rank();
        let dims = self.dense_dims();
        let mut out = DenseTensor::zeros(dims);
        let tspaces = self.tree_spaces();
        let absorbed_ids: Vec<usize> = (0..k).filter(|&l| self.absorbed[l]).collect();
        let root_axis = g.dim(self.root) > 1;
        let mut idx = vec![0; out.rank()];
        for (path, blk) in &self.blocks {
            let q = structural_tensor_with(g, &self.tree, path, &absorbed_ids);
            // absorbed leaves are already in the leg's own layout
            let layout: Vec<(&RepSpace, Charge)> = (0..k)
                .map(|l| if self.absorbed[l] { (&self.spaces[l], g.dual(path[l])) } else { (&tspaces[l], path[l]) })
                .collect();
            let qd = q.dims().to_vec();
            for_each_index(blk.dims(), |bf, ts| {
                let w = blk.data()[bf];
                if w == 0.0 {
                    return;
                }
                for_each_index(&qd, |qf, ms| {
                    let v = q.data()[qf];
                    if v == 0.0 {
                        return;
                    }
                    for l in 0..k {
                        idx[l] = layout[l].0.dense_index(layout[l].1, ts[l], ms[l]);
                    }
                    if root_axis {
                        idx[k] = ms[k];
                    }
                    out.add_at(&idx, w * v);
                });
            });
        }
        for l in 0..k {
            if self.dirs[l].is_incoming() && !self.absorbed[l] {
                out = apply_on_axis(&out, l, &bend_matrix(&self.spaces[l], self.dirs[l]))?;
            }
        }
        Ok(out)
    }

    /// Projects a dense array onto the allowed paths; fails when the
    /// relative reconstruction error exceeds `tol`.
    pub fn from_dense(
        dense: &DenseTensor,
        spaces: Vec<RepSpace>,
        dirs: Vec<Direction>,
        tree: FusionTree,
        root: Charge,
        tol: f64,
    ) -> Result<SymTensor, Error> {
        let mut t = SymTensor::zeros(spaces, dirs, tree, root)?;
        if dense.dims() != t.dense_dims().as_slice() {
            return Err(Error::Structure(format!("dense dims {:?}, expected {:?}", dense.dims(), t.dense_dims())));
        }
        let g = t.system;
        let k = t.rank();
        let mut ts_dense = dense.clone();
        for l in 0..k {
            if t.dirs[l].is_incoming() {
                ts_dense = apply_on_axis(&ts_dense, l, &bend_matrix(&t.spaces[l], t.dirs[l]).transpose())?;
            }
        }
        let tspaces = t.tree_spaces();
        let root_axis = g.dim(root) > 1;
        let mut idx = vec![0; ts_dense.rank()];
        for path in t.allowed_paths() {
            let q = structural_tensor_with(g, &t.tree, &path, &[]);
            let qn = q.dot(&q);
            let shape = t.block_shape(&path);
            let qd = q.dims().to_vec();
            let mut blk = DenseTensor::zeros(shape.clone());
            for_each_index(&shape, |bf, tsi| {
                let mut acc = 0.0;
                for_each_index(&qd, |qf, ms| {
                    let v = q.data()[qf];
                    if v == 0.0 {
                        return;
                    }
                    for l in 0..k {
                        idx[l] = tspaces[l].dense_index(path[l], tsi[l], ms[l]);
                    }
                    if root_axis {
                        idx[k] = ms[k];
                    }
                    acc += v * ts_dense.get(&idx);
                });
                blk.data_mut()[bf] = acc / qn;
            });
            t.blocks.insert(path, blk);
        }
        let back = t.to_dense()?;
        let norm = dense.norm();
        let diff = back.add(&dense.scale(-1.0))?.norm();
        let rel = if norm > 0.0 { diff / norm } else { diff };
        if rel > tol {
            return Err(Error::NotInvariant(rel));
        }
        Ok(t)
    }

    /// Invariance residual of the dense realization.
    pub fn invariance_residual(&self) -> Result<f64, Error> {
        let (s, d) = self.dense_legs();
        let mut dense = self.to_dense()?;
        if s.len() > dense.rank() {
            let mut dims = dense.dims().to_vec();
            dims.push(1);
            dense = dense.reshape(dims)?;
        }
        crate::dense::invariance_residual(&dense, &s, &d)
    }

    /// Frobenius norm, equal to the norm of the dense realization.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Inner product with a tensor of the same structure.
    pub fn dot(&self, other: &SymTensor) -> f64 {
        let a = self.restored();
        let b = other.restored();
        let w = self.system.dim(self.root) as f64;
        a.blocks.iter().map(|(p, x)| b.blocks.get(p).map_or(0.0, |y| x.dot(y))).sum::<f64>() * w
    }

    pub fn scale(&self, s: f64) -> SymTensor {
        let mut t = self.clone();
        for b in t.blocks.values_mut() {
            *b = b.scale(s);
        }
        t
    }

    fn same_structure(&self, other: &SymTensor) -> Result<(), Error> {
        if self.spaces != other.spaces || self.dirs != other.dirs || self.tree != other.tree || self.root != other.root {
            return Err(Error::Structure("tensors differ in legs, tree or root".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &SymTensor) -> Result<SymTensor, Error> {
        self.same_structure(other)?;
        let mut t = self.restored();
        for (p, b) in &other.restored().blocks {
            let e = t.blocks.entry(p.clone()).or_insert_with(|| DenseTensor::zeros(b.dims().to_vec()));
            *e = e.add(b)?;
        }
        Ok(t)
    }

    /// Largest blockwise entry difference between two tensors of equal structure.
    pub fn max_block_diff(&self, other: &SymTensor) -> f64 {
        if self.same_structure(other).is_err() {
            return f64::INFINITY;
        }
        let a = self.restored();
        let b = other.restored();
        let mut m: f64 = 0.0;
        for p in a.blocks.keys().chain(b.blocks.keys()) {
            match (a.blocks.get(p), b.blocks.get(p)) {
                (Some(x), Some(y)) => m = m.max(x.max_diff(y)),
                (Some(x), None) | (None, Some(x)) => m = m.max(x.max_abs()),
                _ => {}
            }
        }
        m
    }

    /// Flips leg orientations without touching the blocks. Only
    /// `Out ↔ In` and `Out ↔ InR` changes are allowed.
    pub fn reverse(&self, new_dirs: &[Direction]) -> Result<SymTensor, Error> {
        if new_dirs.len() != self.rank() {
            return Err(Error::Direction(format!("{} directions for rank {}", new_dirs.len(), self.rank())));
        }
        let mut t = self.restored();
        for (l, &d) in new_dirs.iter().enumerate() {
            let old = t.dirs[l];
            if old == d {
                continue;
            }
            if old.is_incoming() && d.is_incoming() {
                return Err(Error::Direction(format!("leg {l}: {old:?} to {d:?} is not a reversal")));
            }
            t.spaces[l] = t.spaces[l].dual();
            t.dirs[l] = d;
        }
        Ok(t)
    }

    /// Folds the bend of every incoming leg into its parent node where
    /// possible (at most one per node). Returns the number absorbed.
    pub fn absorb_bends(&mut self) -> usize {
        let g = self.system;
        let k = self.rank();
        let mut count = 0;
        for (n, &(l, r)) in self.tree.nodes().to_vec().iter().enumerate() {
            let id = k + n;
            let child_absorbed = |x: usize| x < k && self.absorbed[x];
            if child_absorbed(l) || child_absorbed(r) {
                continue;
            }
            let candidate = [(l, r, true), (r, l, false)].into_iter().find(|&(x, _, _)| x < k && self.dirs[x].is_incoming());
            let Some((leaf, sib, is_left)) = candidate else { continue };
            let bend = self.dirs[leaf].bend();
            for (p, b) in self.blocks.iter_mut() {
                let f = reversal_factor(g, p[leaf], p[sib], p[id], is_left, bend);
                *b = b.scale(f);
            }
            self.absorbed[leaf] = true;
            count += 1;
        }
        count
    }

    /// Undoes [`SymTensor::absorb_bends`].
    pub fn restore_bends(&mut self) {
        let g = self.system;
        let k = self.rank();
        for l in 0..k {
            if !self.absorbed[l] {
                continue;
            }
            let (id, is_left) = self.tree.parent(l).expect("absorbed leaf has a parent");
            let (a, b) = self.tree.children(id).unwrap();
            let sib = if is_left { b } else { a };
            let bend = self.dirs[l].bend();
            for (p, blk) in self.blocks.iter_mut() {
                let f = reversal_factor(g, p[l], p[sib], p[id], is_left, bend);
                *blk = blk.scale(1.0 / f);
            }
            self.absorbed[l] = false;
        }
    }

    pub fn restored(&self) -> SymTensor {
        let mut t = self.clone();
        t.restore_bends();
        t
    }

    /// Recouples to `tau_out` keeping the leg order.
    pub fn new_tree(&self, tau_out: &FusionTree) -> Result<SymTensor, Error> {
        self.new_tree_with(tau_out, GammaCache::global())
    }

    pub fn new_tree_with(&self, tau_out: &FusionTree, cache: &GammaCache) -> Result<SymTensor, Error> {
        let id: Vec<usize> = (0..self.rank()).collect();
        self.permute_with(&id, tau_out, cache)
    }

    /// New leg `k` is old leg `perm[k]`, coupled along `tau_out`.
    pub fn permute(&self, perm: &[usize], tau_out: &FusionTree) -> Result<SymTensor, Error> {
        self.permute_with(perm, tau_out, GammaCache::global())
    }

    pub fn permute_with(&self, perm: &[usize], tau_out: &FusionTree, cache: &GammaCache) -> Result<SymTensor, Error> {
        let k = self.rank();
        check_permutation(perm, k)?;
        if tau_out.leaves() != k {
            return Err(Error::InvalidTree(format!("target tree has {} leaves, tensor rank {k}", tau_out.leaves())));
        }
        let t = self.restored();
        let identity = perm.iter().enumerate().all(|(i, &p)| i == p);
        if identity && *tau_out == t.tree {
            return Ok(t);
        }
        let key = GammaKey {
            kind: if identity { GammaKind::Recouple } else { GammaKind::Permute },
            input_tree: t.tree.clone(),
            perm: perm.to_vec(),
            output_tree: tau_out.clone(),
            leaf_spaces: t.tree_spaces(),
            directions: t.dirs.clone(),
            root: t.root,
        };
        let gm = cache.get_or_build(&key)?;
        let mut out = SymTensor {
            system: t.system,
            spaces: perm.iter().map(|&p| t.spaces[p].clone()).collect(),
            dirs: perm.iter().map(|&p| t.dirs[p]).collect(),
            tree: tau_out.clone(),
            root: t.root,
            absorbed: vec![false; k],
            blocks: BTreeMap::new(),
        };
        for (path, blk) in &t.blocks {
            let Some(i) = gm.input_index(path) else {
                return Err(Error::Structure(format!("path {path:?} missing from the recoupling map")));
            };
            let pb = dense_permute(blk, perm)?;
            TOUCHED.fetch_add((pb.len() * (1 + gm.row(i).len())) as u64, Ordering::Relaxed);
            for &(_, o, c) in gm.row(i) {
                let e = out.blocks.entry(gm.outputs[o].clone()).or_insert_with(|| DenseTensor::zeros(pb.dims().to_vec()));
                *e = e.add(&pb.scale(c))?;
            }
        }
        Ok(out)
    }

    /// Fuses contiguous leg groups into single legs. Groups must list every
    /// leg once, in order. Group trees and the outer tree default to left combs.
    pub fn fuse(&self, groups: &[Vec<usize>], group_trees: Option<&[FusionTree]>, tau_out: Option<&FusionTree>) -> Result<(SymTensor, Vec<FusedLeg>), Error> {
        self.fuse_with(groups, group_trees, tau_out, GammaCache::global())
    }

    pub fn fuse_with(
        &self,
        groups: &[Vec<usize>],
        group_trees: Option<&[FusionTree]>,
        tau_out: Option<&FusionTree>,
        cache: &GammaCache,
    ) -> Result<(SymTensor, Vec<FusedLeg>), Error> {
        let k = self.rank();
        let flat: Vec<usize> = groups.iter().flatten().copied().collect();
        if groups.iter().any(|g| g.is_empty()) || flat != (0..k).collect::<Vec<_>>() {
            return Err(Error::Structure(format!("groups {groups:?} are not contiguous and ordered over {k} legs")));
        }
        let gtrees: Vec<FusionTree> = match group_trees {
            Some(t) => t.to_vec(),
            None => groups.iter().map(|g| FusionTree::left_comb(g.len())).collect(),
        };
        if gtrees.len() != groups.len() || gtrees.iter().zip(groups).any(|(t, g)| t.leaves() != g.len()) {
            return Err(Error::InvalidTree("group trees do not match the groups".into()));
        }
        let outer = tau_out.cloned().unwrap_or_else(|| FusionTree::left_comb(groups.len()));
        if outer.leaves() != groups.len() {
            return Err(Error::InvalidTree("outer tree does not match the number of groups".into()));
        }
        let composite = outer.compose(&gtrees)?;
        let t1 = self.new_tree_with(&composite, cache)?;
        let legs: Vec<FusedLeg> = groups
            .iter()
            .zip(&gtrees)
            .map(|(g, tr)| FusedLeg::new(g.iter().map(|&l| self.spaces[l].clone()).collect(), g.iter().map(|&l| self.dirs[l]).collect(), tr.clone()))
            .collect::<Result<_, _>>()?;

        // composite ids of every group id and of every outer internal node
        let cspan = span_index(&composite);
        let starts: Vec<usize> = groups.iter().map(|g| g[0]).collect();
        let group_ids: Vec<Vec<usize>> = gtrees
            .iter()
            .enumerate()
            .map(|(gi, tr)| spans(tr).iter().map(|&(a, b)| cspan[&(starts[gi] + a, starts[gi] + b)]).collect())
            .collect();
        let outer_ids: Vec<usize> = spans(&outer).iter().map(|&(a, b)| cspan[&(starts[a], starts[b - 1] + groups[b - 1].len())]).collect();

        let mut out = SymTensor {
            system: self.system,
            spaces: legs.iter().map(|l| l.space.clone()).collect(),
            dirs: legs.iter().map(|l| l.dir).collect(),
            tree: outer.clone(),
            root: self.root,
            absorbed: vec![false; groups.len()],
            blocks: BTreeMap::new(),
        };
        for (path, blk) in &t1.blocks {
            let np: SectorPath = outer_ids.iter().map(|&c| path[c]).collect();
            let gpaths: Vec<SectorPath> = group_ids.iter().map(|ids| ids.iter().map(|&c| path[c]).collect()).collect();
            let shape: Vec<usize> = (0..groups.len()).map(|g| legs[g].fused_tree_space.degeneracy(np[g])).collect();
            let e = out.blocks.entry(np).or_insert_with(|| DenseTensor::zeros(shape));
            let mut nidx = vec![0; groups.len()];
            TOUCHED.fetch_add(blk.len() as u64, Ordering::Relaxed);
            for_each_index(blk.dims(), |bf, ts| {
                for (g, grp) in groups.iter().enumerate() {
                    nidx[g] = legs[g].fuse_label(&gpaths[g], &ts[grp[0]..grp[0] + grp.len()]);
                }
                e.add_at(&nidx, blk.data()[bf]);
            });
        }
        Ok((out, legs))
    }

    /// Splits leg `leg` back into the constituents recorded in `rec`. The
    /// result is coupled along the composite tree unless `tau_out` is given.
    pub fn split(&self, leg: usize, rec: &FusedLeg, tau_out: Option<&FusionTree>) -> Result<SymTensor, Error> {
        self.split_with(leg, rec, tau_out, GammaCache::global())
    }

    pub fn split_with(&self, leg: usize, rec: &FusedLeg, tau_out: Option<&FusionTree>, cache: &GammaCache) -> Result<SymTensor, Error> {
        let k = self.rank();
        if leg >= k || self.spaces[leg] != rec.space || self.dirs[leg] != rec.dir {
            return Err(Error::Structure(format!("leg {leg} does not match the fused-leg record")));
        }
        let t = self.restored();
        let n = rec.spaces.len();
        let gtrees: Vec<FusionTree> = (0..k).map(|l| if l == leg { rec.tree.clone() } else { FusionTree::left_comb(1) }).collect();
        let composite = t.tree.compose(&gtrees)?;
        let cspan = span_index(&composite);
        // old leaf l starts at new leaf shift(l)
        let shift = |l: usize| if l <= leg { l } else { l + n - 1 };
        let end = |l: usize| if l == leg { leg + n } else { shift(l) + 1 };
        let old_ids: Vec<usize> = spans(&t.tree).iter().map(|&(a, b)| cspan[&(shift(a), end(b - 1))]).collect();
        let group_ids: Vec<usize> = spans(&rec.tree).iter().map(|&(a, b)| cspan[&(leg + a, leg + b)]).collect();

        let mut spaces = t.spaces.clone();
        spaces.splice(leg..=leg, rec.spaces.iter().cloned());
        let mut dirs = t.dirs.clone();
        dirs.splice(leg..=leg, rec.dirs.iter().copied());
        let mut out = SymTensor {
            system: t.system,
            spaces,
            dirs,
            tree: composite.clone(),
            root: t.root,
            absorbed: vec![false; k + n - 1],
            blocks: BTreeMap::new(),
        };
        let tspaces = out.tree_spaces();
        let mut labels: HashMap<(Charge, usize), (SectorPath, Vec<usize>)> = HashMap::new();
        for (path, blk) in &t.blocks {
            let c = path[leg];
            let mut np = vec![0; composite.path_len()];
            for (old, &cid) in old_ids.iter().enumerate() {
                np[cid] = path[old];
            }
            for_each_index(blk.dims(), |bf, ts| {
                let (gp, gts) = labels.entry((c, ts[leg])).or_insert_with(|| rec.split_label(c, ts[leg])).clone();
                for (j, &cid) in group_ids.iter().enumerate() {
                    np[cid] = gp[j];
                }
                let mut nts: Vec<usize> = ts[..leg].to_vec();
                nts.extend(&gts);
                nts.extend(&ts[leg + 1..]);
                let shape: Vec<usize> = (0..k + n - 1).map(|l| tspaces[l].degeneracy(np[l])).collect();
                let e = out.blocks.entry(np.clone()).or_insert_with(|| DenseTensor::zeros(shape));
                e.add_at(&nts, blk.data()[bf]);
            });
        }
        match tau_out {
            Some(tr) => out.new_tree_with(tr, cache),
            None => Ok(out),
        }
    }

    /// Contracts `self` leg `x` with `other` leg `y` for each `(x, y)`. Legs
    /// must carry equal spaces and opposite orientations; both roots must be
    /// trivial. Result legs are the free legs of `self`, then of `other`,
    /// coupled as `(comb(self free), comb(other free))`.
    pub fn contract(&self, other: &SymTensor, pairs: &[(usize, usize)]) -> Result<SymTensor, Error> {
        self.contract_with(other, pairs, GammaCache::global())
    }

    pub fn contract_with(&self, other: &SymTensor, pairs: &[(usize, usize)], cache: &GammaCache) -> Result<SymTensor, Error> {
        let g = self.system;
        if other.system != g {
            return Err(Error::SystemMismatch(g, other.system));
        }
        if self.root != g.identity() || other.root != g.identity() {
            return Err(Error::Structure("contraction needs trivial roots".into()));
        }
        let (ka, kb) = (self.rank(), other.rank());
        for (i, &(x, y)) in pairs.iter().enumerate() {
            if x >= ka || y >= kb || pairs[..i].iter().any(|p| p.0 == x || p.1 == y) {
                return Err(Error::Structure(format!("bad contraction pair ({x}, {y})")));
            }
            if self.spaces[x] != other.spaces[y] {
                return Err(Error::Structure(format!("legs {x} and {y} carry different spaces")));
            }
            if self.dirs[x].is_incoming() == other.dirs[y].is_incoming() {
                return Err(Error::Direction(format!("legs {x} and {y} have the same orientation")));
            }
        }
        let mut a = self.restored();
        let mut b = other.restored();
        // orient: contracted legs Out on the left, In on the right
        let mut adirs = a.dirs.clone();
        let mut bdirs = b.dirs.clone();
        for &(x, y) in pairs {
            match a.dirs[x] {
                Direction::In => {
                    adirs[x] = Direction::Out;
                    bdirs[y] = Direction::InR;
                }
                Direction::InR => {
                    adirs[x] = Direction::Out;
                    bdirs[y] = Direction::In;
                }
                Direction::Out => {}
            }
        }
        a = a.reverse(&adirs)?;
        b = b.reverse(&bdirs)?;
        for &(_, y) in pairs {
            if b.dirs[y] == Direction::InR {
                for (p, blk) in b.blocks.iter_mut() {
                    *blk = blk.scale(g.bend_sign(p[y]));
                }
                b.dirs[y] = Direction::In;
            }
        }
        let af: Vec<usize> = (0..ka).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
        let bf: Vec<usize> = (0..kb).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
        let nc = pairs.len();
        let pa: Vec<usize> = af.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
        let pb: Vec<usize> = pairs.iter().map(|p| p.1).chain(bf.iter().copied()).collect();
        let a = a.permute_with(&pa, &comb_pair(af.len(), nc), cache)?;
        let b = b.permute_with(&pb, &comb_pair(nc, bf.len()), cache)?;

        let split_groups = |n1: usize, n2: usize| -> Vec<Vec<usize>> {
            [(0..n1).collect::<Vec<_>>(), (n1..n1 + n2).collect()].into_iter().filter(|v| !v.is_empty()).collect()
        };
        let (af2, arec) = a.fuse_with(&split_groups(af.len(), nc), None, None, cache)?;
        let (bf2, brec) = b.fuse_with(&split_groups(nc, bf.len()), None, None, cache)?;
        let (ak, afree) = if af.is_empty() { (&arec[0], None) } else { (&arec[1], Some(&arec[0])) };
        let (bk, bfree) = if bf.is_empty() { (&brec[0], None) } else { (&brec[0], Some(&brec[1])) };

        // per contracted charge: (free charge, matrix)
        let a_mats: HashMap<Charge, (Charge, DMatrix<f64>)> = af2
            .blocks
            .iter()
            .map(|(p, blk)| {
                if af.is_empty() {
                    (p[0], (g.identity(), DMatrix::from_row_slice(1, blk.dims()[0], blk.data())))
                } else {
                    (p[1], (p[0], DMatrix::from_row_slice(blk.dims()[0], blk.dims()[1], blk.data())))
                }
            })
            .collect();
        let b_mats: HashMap<Charge, (Charge, DMatrix<f64>)> = bf2
            .blocks
            .iter()
            .map(|(p, blk)| {
                if bf.is_empty() {
                    (p[0], (g.identity(), DMatrix::from_row_slice(blk.dims()[0], 1, blk.data())))
                } else {
                    (p[0], (p[1], DMatrix::from_row_slice(blk.dims()[0], blk.dims()[1], blk.data())))
                }
            })
            .collect();

        let mut result_blocks: Vec<(SectorPath, DenseTensor)> = Vec::new();
        for (&ck, (cf, am)) in &a_mats {
            let ckb = g.dual(ck);
            let Some((cfb, bm)) = b_mats.get(&ckb) else { continue };
            // align the degeneracy orderings of the two fused contracted legs
            let da = ak.fused_tree_space.degeneracy(ck);
            let db = bk.fused_tree_space.degeneracy(ckb);
            let mut align = DMatrix::zeros(da, db);
            for ta in 0..da {
                let (gp, ts) = ak.split_label(ck, ta);
                let gpb: SectorPath = gp.iter().map(|&c| g.dual(c)).collect();
                align[(ta, bk.fuse_label(&gpb, &ts))] = 1.0;
            }
            let r = am * align * bm / (g.dim(ck) as f64).sqrt();
            let path: SectorPath = match (afree.is_some(), bfree.is_some()) {
                (true, true) => vec![*cf, *cfb, g.identity()],
                (true, false) => vec![*cf],
                (false, true) => vec![*cfb],
                (false, false) => vec![],
            };
            let dims: Vec<usize> = match (afree.is_some(), bfree.is_some()) {
                (true, true) => vec![r.nrows(), r.ncols()],
                (true, false) => vec![r.nrows()],
                (false, true) => vec![r.ncols()],
                (false, false) => vec![],
            };
            let mut data = Vec::with_capacity(r.len());
            for i in 0..r.nrows() {
                for j in 0..r.ncols() {
                    data.push(r[(i, j)]);
                }
            }
            result_blocks.push((path, DenseTensor::from_vec(dims, data)?));
        }
        let mut spaces = Vec::new();
        let mut dirs = Vec::new();
        for rec in [afree, bfree].into_iter().flatten() {
            spaces.push(rec.space.clone());
            dirs.push(rec.dir);
        }
        let n = spaces.len();
        let mut r = SymTensor::zeros_in(g, spaces, dirs, FusionTree::left_comb(n), g.identity())?;
        for (p, blk) in result_blocks {
            r.blocks.insert(p, blk);
        }
        if let Some(rec) = bfree {
            r = r.split_with(n - 1, rec, None, cache)?;
        }
        if let Some(rec) = afree {
            r = r.split_with(0, rec, None, cache)?;
        }
        Ok(r)
    }

    /// Hermitian conjugate of a real tensor with trivial root: every leg
    /// reverses and the spaces stay put.
    pub fn dagger(&self) -> Result<SymTensor, Error> {
        let g = self.system;
        if self.root != g.identity() {
            return Err(Error::Structure("dagger is defined for trivial roots".into()));
        }
        let t = self.restored();
        let k = t.rank();
        let dirs: Vec<Direction> = t.dirs.iter().map(|d| if d.is_incoming() { Direction::Out } else { Direction::In }).collect();
        let mut blocks = BTreeMap::new();
        for (p, b) in &t.blocks {
            let phase: f64 = (0..k).filter(|&l| t.dirs[l] == Direction::In).map(|l| g.bend_sign(p[l])).product();
            let np: SectorPath = p.iter().map(|&c| g.dual(c)).collect();
            blocks.insert(np, b.scale(phase));
        }
        Ok(SymTensor { system: g, spaces: t.spaces.clone(), dirs, tree: t.tree.clone(), root: t.root, absorbed: vec![false; k], blocks })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = TensorDoc {
            format_version: crate::FORMAT_VERSION,
            system: self.system.name().to_string(),
            spaces: self.spaces.clone(),
            directions: self.dirs.clone(),
            tree: self.tree.to_nested(),
            root: self.root,
            absorbed: self.absorbed.clone(),
            blocks: self.blocks.iter().map(|(p, b)| BlockDoc { path: p.clone(), shape: b.dims().to_vec(), data: b.data().to_vec() }).collect(),
        };
        serde_json::to_value(doc).expect("tensor document serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<SymTensor, Error> {
        let doc: TensorDoc = serde_json::from_value(v.clone())?;
        if doc.format_version != crate::FORMAT_VERSION {
            return Err(Error::Structure(format!("unsupported format_version {}", doc.format_version)));
        }
        let system = ChargeSystem::from_name(&doc.system).map_err(|e| Error::InvalidSpace(e.0))?;
        let tree = FusionTree::from_nested(&doc.tree)?;
        let mut t = SymTensor::zeros_in(system, doc.spaces, doc.directions, tree, doc.root)?;
        for b in doc.blocks {
            t.set_block(b.path, DenseTensor::from_vec(b.shape, b.data)?)?;
        }
        if !doc.absorbed.is_empty() {
            if doc.absorbed.len() != t.rank() {
                return Err(Error::Structure("absorbed flags do not match the rank".into()));
            }
            t.absorbed = doc.absorbed;
        }
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    format_version: u32,
    system: String,
    spaces: Vec<RepSpace>,
    directions: Vec<Direction>,
    tree: serde_json::Value,
    root: Charge,
    #[serde(default)]
    absorbed: Vec<bool>,
    blocks: Vec<BlockDoc>,
}

#[derive(Serialize, Deserialize)]
struct BlockDoc {
    path: SectorPath,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Everything needed to split a fused leg back into its constituents.
#[derive(Clone, Debug)]
pub struct FusedLeg {
    pub tree: FusionTree,
    pub spaces: Vec<RepSpace>,
    pub dirs: Vec<Direction>,
    /// Fusion map of each internal node, in node order.
    pub maps: Vec<FuseMap>,
    /// Tree space carried by every id of the group tree.
    pub node_spaces: Vec<RepSpace>,
    pub fused_tree_space: RepSpace,
    pub dir: Direction,
    pub space: RepSpace,
}

impl FusedLeg {
    pub fn new(spaces: Vec<RepSpace>, dirs: Vec<Direction>, tree: FusionTree) -> Result<FusedLeg, Error> {
        if spaces.is_empty() || spaces.len() != dirs.len() || tree.leaves() != spaces.len() {
            return Err(Error::Structure("fused leg needs matching spaces, directions and tree".into()));
        }
        let mut node_spaces: Vec<RepSpace> = spaces.iter().zip(&dirs).map(|(s, d)| tree_space(s, *d)).collect();
        let mut maps = Vec::new();
        for &(l, r) in tree.nodes() {
            let (p, m) = fuse_spaces(&node_spaces[l], &node_spaces[r])?;
            node_spaces.push(p);
            maps.push(m);
        }
        let fused_tree_space = node_spaces.last().unwrap().clone();
        let dir = if dirs.iter().all(|&d| d == dirs[0]) { dirs[0] } else { Direction::Out };
        let space = tree_space(&fused_tree_space, dir);
        Ok(FusedLeg { tree, spaces, dirs, maps, node_spaces, fused_tree_space, dir, space })
    }

    /// Fused degeneracy index of constituent labels `ts` along group path `gp`.
    pub fn fuse_label(&self, gp: &[Charge], ts: &[usize]) -> usize {
        let k = self.tree.leaves();
        let mut lab: Vec<usize> = ts.to_vec();
        for (n, &(l, r)) in self.tree.nodes().iter().enumerate() {
            let t = self.maps[n].target(gp[l], lab[l], gp[r], lab[r], gp[k + n]);
            lab.push(t);
        }
        lab[self.tree.root_id()]
    }

    /// Group path and constituent labels behind fused label `(c, t)`.
    pub fn split_label(&self, c: Charge, t: usize) -> (SectorPath, Vec<usize>) {
        let k = self.tree.leaves();
        let len = self.tree.path_len();
        let mut gp = vec![0; len];
        let mut lab = vec![0; len];
        gp[len - 1] = c;
        lab[len - 1] = t;
        for n in (0..self.tree.nodes().len()).rev() {
            let id = k + n;
            let (l, r) = self.tree.nodes()[n];
            let (a, b) = self.maps[n].source(gp[id], lab[id]);
            gp[l] = a.charge;
            lab[l] = a.t;
            gp[r] = b.charge;
            lab[r] = b.t;
        }
        (gp, lab[..k].to_vec())
    }

    /// Arguments for the dense oracle's fuse of this group.
    pub fn oracle_group(&self) -> (Vec<RepSpace>, Vec<Direction>, FusionTree, Direction) {
        (self.spaces.clone(), self.dirs.clone(), self.tree.clone(), self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::{su2_system, u1_system};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn su2(s: &[(Charge, usize)]) -> RepSpace {
        RepSpace::new(su2_system(), s.to_vec()).unwrap()
    }

    #[test]
    fn rank2_storage_counts() {
        let v = su2(&[(0, 1), (2, 3), (4, 1)]);
        let t = SymTensor::zeros(vec![v.clone(), v], vec![Direction::Out; 2], FusionTree::left_comb(2), 0).unwrap();
        assert_eq!(t.parameter_count(), 11);
        assert_eq!(t.dense_size(), 225);
    }

    #[test]
    fn dense_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = su2(&[(0, 1), (1, 2), (2, 1)]);
        let t = SymTensor::random(vec![v.clone(), v.clone(), v], vec![Direction::Out, Direction::In, Direction::InR], FusionTree::left_comb(3), 1, &mut rng).unwrap();
        let d = t.to_dense().unwrap();
        assert!(t.invariance_residual().unwrap() < 1e-12);
        assert!((d.norm() - t.norm()).abs() < 1e-10);
        let back = SymTensor::from_dense(&d, t.spaces.clone(), t.dirs.clone(), t.tree.clone(), 1, 1e-10).unwrap();
        assert!(back.max_block_diff(&t) < 1e-12);
    }

    #[test]
    fn absorbed_bends_keep_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = su2(&[(1, 2), (2, 1)]);
        let t = SymTensor::random(vec![v.clone(), v.clone(), v.clone(), v], vec![Direction::In, Direction::Out, Direction::InR, Direction::In], FusionTree::left_comb(4), 0, &mut rng).unwrap();
        let mut a = t.clone();
        assert!(a.absorb_bends() > 0);
        assert!(a.to_dense().unwrap().max_diff(&t.to_dense().unwrap()) < 1e-12);
        a.restore_bends();
        assert!(a.max_block_diff(&t) < 1e-12);
    }

    #[test]
    fn u1_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = RepSpace::new(u1_system(), vec![(-1, 1), (0, 2), (1, 1)]).unwrap();
        let t = SymTensor::random(vec![v.clone(), v.clone(), v], vec![Direction::Out, Direction::In, Direction::Out], FusionTree::left_comb(3), 1, &mut rng).unwrap();
        assert!(t.invariance_residual().unwrap() < 1e-12);
        let json = t.to_json();
        assert_eq!(SymTensor::from_json(&json).unwrap(), t);
    }
}
