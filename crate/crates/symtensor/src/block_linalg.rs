//! Invariant matrices as per-charge degeneracy blocks.
//!
//! The dense realization of a [`BlockDiagMatrix`] is `⊕_c T_c ⊗ I_dim(c)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::charge::{Charge, ChargeSystem};
use crate::dense::DenseTensor;
use crate::fusion_tree::FusionTree;
use crate::rep_space::{RepSpace, DENSE_LIMIT};
use crate::sym_tensor::{Direction, SymTensor};
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagMatrix {
    rows: RepSpace,
    cols: RepSpace,
    blocks: BTreeMap<Charge, DMatrix<f64>>,
}

/// Per-charge singular value decomposition `T = U S V`.
#[derive(Clone, Debug)]
pub struct BlockSvd {
    pub u: BlockDiagMatrix,
    pub s: BTreeMap<Charge, Vec<f64>>,
    pub v: BlockDiagMatrix,
}

/// Per-charge eigendecomposition; eigenvalues ascending within each charge.
#[derive(Clone, Debug)]
pub struct BlockEig {
    pub values: BTreeMap<Charge, Vec<f64>>,
    pub vectors: BlockDiagMatrix,
}

fn shared(a: &RepSpace, b: &RepSpace) -> Vec<(Charge, usize, usize)> {
    a.sectors().iter().filter_map(|&(c, d)| b.sector_index(c).map(|_| (c, d, b.degeneracy(c)))).collect()
}

impl BlockDiagMatrix {
    pub fn zeros(rows: RepSpace, cols: RepSpace) -> Result<BlockDiagMatrix, Error> {
        if rows.system() != cols.system() {
            return Err(Error::SystemMismatch(rows.system(), cols.system()));
        }
        let blocks = shared(&rows, &cols).into_iter().map(|(c, r, k)| (c, DMatrix::zeros(r, k))).collect();
        Ok(BlockDiagMatrix { rows, cols, blocks })
    }

    pub fn identity(space: RepSpace) -> BlockDiagMatrix {
        let blocks = space.sectors().iter().map(|&(c, d)| (c, DMatrix::identity(d, d))).collect();
        BlockDiagMatrix { rows: space.clone(), cols: space, blocks }
    }

    pub fn random(rows: RepSpace, cols: RepSpace, rng: &mut impl Rng) -> Result<BlockDiagMatrix, Error> {
        let mut m = BlockDiagMatrix::zeros(rows, cols)?;
        for b in m.blocks.values_mut() {
            for x in b.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
        }
        Ok(m)
    }

    /// Builds from explicit blocks; each must sit on a charge of both spaces
    /// with the matching shape. Missing charges are zero.
    pub fn from_blocks(rows: RepSpace, cols: RepSpace, blocks: impl IntoIterator<Item = (Charge, DMatrix<f64>)>) -> Result<BlockDiagMatrix, Error> {
        let mut m = BlockDiagMatrix::zeros(rows, cols)?;
        for (c, b) in blocks {
            let Some(slot) = m.blocks.get_mut(&c) else {
                return Err(Error::Structure(format!("charge {c} is not shared by row and column spaces")));
            };
            if slot.shape() != b.shape() {
                return Err(Error::Structure(format!("block {c} has shape {:?}, expected {:?}", b.shape(), slot.shape())));
            }
            *slot = b;
        }
        Ok(m)
    }

    pub fn system(&self) -> ChargeSystem {
        self.rows.system()
    }

    pub fn rows(&self) -> &RepSpace {
        &self.rows
    }

    pub fn cols(&self) -> &RepSpace {
        &self.cols
    }

    pub fn blocks(&self) -> &BTreeMap<Charge, DMatrix<f64>> {
        &self.blocks
    }

    pub fn block(&self, c: Charge) -> Option<&DMatrix<f64>> {
        self.blocks.get(&c)
    }

    pub fn block_mut(&mut self, c: Charge) -> Option<&mut DMatrix<f64>> {
        self.blocks.get_mut(&c)
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>, Error> {
        let (r, c) = (self.rows.total_dim(), self.cols.total_dim());
        if r * c > DENSE_LIMIT {
            return Err(Error::TooLarge(r * c));
        }
        let g = self.system();
        let mut m = DMatrix::zeros(r, c);
        for (&q, b) in &self.blocks {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    for mm in 0..g.dim(q) {
                        m[(self.rows.dense_index(q, i, mm), self.cols.dense_index(q, j, mm))] = b[(i, j)];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Frobenius norm of the dense realization.
    pub fn norm(&self) -> f64 {
        let g = self.system();
        self.blocks.iter().map(|(&c, b)| g.dim(c) as f64 * b.norm_squared()).sum::<f64>().sqrt()
    }

    /// Trace of the dense realization.
    pub fn trace(&self) -> f64 {
        let g = self.system();
        self.blocks.iter().map(|(&c, b)| g.dim(c) as f64 * b.trace()).sum()
    }

    pub fn transpose(&self) -> BlockDiagMatrix {
        BlockDiagMatrix {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            blocks: self.blocks.iter().map(|(&c, b)| (c, b.transpose())).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> BlockDiagMatrix {
        let mut m = self.clone();
        for b in m.blocks.values_mut() {
            *b *= s;
        }
        m
    }

    pub fn add(&self, other: &BlockDiagMatrix) -> Result<BlockDiagMatrix, Error> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Structure("block-diagonal matrices act on different spaces".into()));
        }
        let mut m = self.clone();
        for (c, b) in m.blocks.iter_mut() {
            *b += &other.blocks[c];
        }
        Ok(m)
    }

    /// Product `self · other`.
    pub fn matmul(&self, other: &BlockDiagMatrix) -> Result<BlockDiagMatrix, Error> {
        let mut flops = 0;
        self.matmul_counted(other, &mut flops)
    }

    /// Product, adding `rows · inner · cols` per block to `flops`.
    pub fn matmul_counted(&self, other: &BlockDiagMatrix, flops: &mut u64) -> Result<BlockDiagMatrix, Error> {
        if self.cols != other.rows {
            return Err(Error::Structure("inner spaces of the product differ".into()));
        }
        let mut out = BlockDiagMatrix::zeros(self.rows.clone(), other.cols.clone())?;
        for (c, slot) in out.blocks.iter_mut() {
            if let (Some(a), Some(b)) = (self.blocks.get(c), other.blocks.get(c)) {
                *flops += (a.nrows() * a.ncols() * b.ncols()) as u64;
                *slot = a * b;
            }
        }
        Ok(out)
    }

    /// Per-charge SVD. The middle space has `min(rows, cols)` states per charge.
    pub fn svd(&self) -> Result<BlockSvd, Error> {
        let parts: Vec<(Charge, DMatrix<f64>, Vec<f64>, DMatrix<f64>)> = self
            .blocks
            .par_iter()
            .map(|(&c, b)| {
                let svd = b.clone().svd(true, true);
                let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
                order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
                let u = svd.u.unwrap();
                let vt = svd.v_t.unwrap();
                let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
                let u = DMatrix::from_fn(u.nrows(), order.len(), |r, k| u[(r, order[k])]);
                let vt = DMatrix::from_fn(order.len(), vt.ncols(), |k, col| vt[(order[k], col)]);
                (c, u, s, vt)
            })
            .collect();
        let g = self.system();
        let mid = RepSpace::new(g, parts.iter().filter(|p| !p.2.is_empty()).map(|p| (p.0, p.2.len())).collect())?;
        let mut u = BlockDiagMatrix::zeros(self.rows.clone(), mid.clone())?;
        let mut v = BlockDiagMatrix::zeros(mid, self.cols.clone())?;
        let mut s = BTreeMap::new();
        for (c, uu, ss, vv) in parts {
            if ss.is_empty() {
                continue;
            }
            u.blocks.insert(c, uu);
            v.blocks.insert(c, vv);
            s.insert(c, ss);
        }
        Ok(BlockSvd { u, s, v })
    }

    /// Per-charge eigendecomposition of symmetric blocks.
    pub fn eig(&self, hermitian: bool) -> Result<BlockEig, Error> {
        if self.rows != self.cols {
            return Err(Error::Structure("eigendecomposition needs a square matrix".into()));
        }
        if !hermitian {
            return Err(Error::Numerical("only the hermitian eigendecomposition is supported".into()));
        }
        let parts: Vec<(Charge, Vec<f64>, DMatrix<f64>)> = self
            .blocks
            .par_iter()
            .map(|(&c, b)| {
                let sym = (b + b.transpose()) * 0.5;
                let e = sym.symmetric_eigen();
                let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
                order.sort_by(|&i, &j| e.eigenvalues[i].partial_cmp(&e.eigenvalues[j]).unwrap());
                let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
                let vecs = DMatrix::from_fn(b.nrows(), order.len(), |r, k| e.eigenvectors[(r, order[k])]);
                (c, vals, vecs)
            })
            .collect();
        let mut vectors = BlockDiagMatrix::identity(self.rows.clone());
        let mut values = BTreeMap::new();
        for (c, vals, vecs) in parts {
            vectors.blocks.insert(c, vecs);
            values.insert(c, vals);
        }
        Ok(BlockEig { values, vectors })
    }

    /// Closest isometry `U Vᵀ` per block.
    pub fn polar(&self) -> Result<BlockDiagMatrix, Error> {
        let svd = self.svd()?;
        let mut out = BlockDiagMatrix::zeros(self.rows.clone(), self.cols.clone())?;
        for (c, slot) in out.blocks.iter_mut() {
            if let (Some(u), Some(v)) = (svd.u.blocks.get(c), svd.v.blocks.get(c)) {
                *slot = u * v;
            }
        }
        Ok(out)
    }
}

/// Singular values of the dense realization, from the blocks: each value of
/// charge `c` repeated `dim(c)` times, sorted descending.
pub fn dense_singular_values(s: &BTreeMap<Charge, Vec<f64>>, g: ChargeSystem) -> Vec<f64> {
    let mut out: Vec<f64> = s.iter().flat_map(|(&c, v)| v.iter().flat_map(move |&x| std::iter::repeat_n(x, g.dim(c)))).collect();
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    out
}

/// Result of [`truncate`].
#[derive(Clone, Debug)]
pub struct Truncation {
    pub u: BlockDiagMatrix,
    pub s: BTreeMap<Charge, Vec<f64>>,
    pub v: BlockDiagMatrix,
    pub kept: RepSpace,
    /// Sum of squared discarded values, weighted by multiplet size.
    pub discarded_weight: f64,
}

/// Keeps whole multiplets, largest singular values first. A value of charge
/// `c` costs `dim(c)`; values that no longer fit are skipped. Ties go to the
/// larger charge, then the lower index.
pub fn truncate(svd: &BlockSvd, chi: usize) -> Result<Truncation, Error> {
    if chi == 0 {
        return Err(Error::Structure("truncation target must be positive".into()));
    }
    let g = svd.u.system();
    let smallest = svd.s.keys().map(|&c| g.dim(c)).min().unwrap_or(1);
    if chi < smallest {
        return Err(Error::Structure(format!("target {chi} is below the smallest multiplet size {smallest}")));
    }
    let mut cand: Vec<(f64, Charge, usize)> = svd.s.iter().flat_map(|(&c, v)| v.iter().enumerate().map(move |(i, &x)| (x, c, i))).collect();
    cand.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut used = 0;
    let mut keep: BTreeMap<Charge, usize> = BTreeMap::new();
    let mut discarded = 0.0;
    for (x, c, _) in cand {
        let cost = g.dim(c);
        if used + cost <= chi {
            used += cost;
            *keep.entry(c).or_insert(0) += 1;
        } else {
            discarded += cost as f64 * x * x;
        }
    }
    let kept = RepSpace::new(g, keep.iter().map(|(&c, &n)| (c, n)).collect())?;
    let mut u = BlockDiagMatrix::zeros(svd.u.rows.clone(), kept.clone())?;
    let mut v = BlockDiagMatrix::zeros(kept.clone(), svd.v.cols.clone())?;
    let mut s = BTreeMap::new();
    for (&c, &n) in &keep {
        u.blocks.insert(c, svd.u.blocks[&c].columns(0, n).into_owned());
        v.blocks.insert(c, svd.v.blocks[&c].rows(0, n).into_owned());
        s.insert(c, svd.s[&c][..n].to_vec());
    }
    Ok(Truncation { u, s, v, kept, discarded_weight: discarded })
}

fn rank2_dirs(t: &SymTensor) -> Result<[Direction; 2], Error> {
    if t.rank() != 2 {
        return Err(Error::Structure(format!("expected a rank-2 tensor, got rank {}", t.rank())));
    }
    if t.root() != t.system().identity() {
        return Err(Error::Structure("matrix form needs a trivial root".into()));
    }
    let d = [t.dirs()[0], t.dirs()[1]];
    if d[0].is_incoming() == d[1].is_incoming() {
        return Err(Error::Direction("matrix form needs one outgoing and one incoming leg".into()));
    }
    Ok(d)
}

/// Scalar `f` with dense realization of a unit path equal to `f · I_dim(c)`,
/// read off the dense oracle.
fn block_factor(g: ChargeSystem, c: Charge, dirs: [Direction; 2]) -> Result<f64, Error> {
    let s = RepSpace::new(g, vec![(c, 1)])?;
    let t0 = if dirs[0] == Direction::Out { c } else { g.dual(c) };
    let t1 = if dirs[1] == Direction::Out { c } else { g.dual(c) };
    let t = SymTensor::from_blocks(
        vec![s.clone(), s],
        dirs.to_vec(),
        FusionTree::left_comb(2),
        g.identity(),
        [(vec![t0, t1, g.identity()], DenseTensor::from_vec(vec![1, 1], vec![1.0])?)],
    )?;
    Ok(t.to_dense()?.get(&[0, 0]))
}

/// Rank-2 tensor (one outgoing, one incoming leg) to its block-diagonal form.
pub fn tree_to_blockdiag(t: &SymTensor) -> Result<BlockDiagMatrix, Error> {
    let dirs = rank2_dirs(t)?;
    let g = t.system();
    let t = t.restored();
    let mut m = BlockDiagMatrix::zeros(t.spaces()[0].clone(), t.spaces()[1].clone())?;
    for (p, blk) in t.blocks() {
        let c = if dirs[0] == Direction::Out { p[0] } else { g.dual(p[0]) };
        let f = block_factor(g, c, dirs)?;
        let b = DMatrix::from_row_slice(blk.dims()[0], blk.dims()[1], blk.data()) * f;
        m.blocks.insert(c, b);
    }
    Ok(m)
}

/// Inverse of [`tree_to_blockdiag`] for the given leg orientations.
pub fn blockdiag_to_tree(m: &BlockDiagMatrix, dirs: [Direction; 2]) -> Result<SymTensor, Error> {
    let g = m.system();
    let mut t = SymTensor::zeros(vec![m.rows.clone(), m.cols.clone()], dirs.to_vec(), FusionTree::left_comb(2), g.identity())?;
    rank2_dirs(&t)?;
    for (&c, b) in &m.blocks {
        let f = block_factor(g, c, dirs)?;
        let t0 = if dirs[0] == Direction::Out { c } else { g.dual(c) };
        let t1 = if dirs[1] == Direction::Out { c } else { g.dual(c) };
        let mut data = Vec::with_capacity(b.len());
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                data.push(b[(i, j)] / f);
            }
        }
        t.set_block(vec![t0, t1, g.identity()], DenseTensor::from_vec(vec![b.nrows(), b.ncols()], data)?)?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::su2_system;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn su2(s: &[(Charge, usize)]) -> RepSpace {
        RepSpace::new(su2_system(), s.to_vec()).unwrap()
    }

    #[test]
    fn matmul_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = su2(&[(0, 8), (1, 8), (2, 8)]);
        let a = BlockDiagMatrix::random(v.clone(), v.clone(), &mut rng).unwrap();
        let b = BlockDiagMatrix::random(v.clone(), v, &mut rng).unwrap();
        let c = a.matmul(&b).unwrap();
        let want = a.to_dense().unwrap() * b.to_dense().unwrap();
        assert!((c.to_dense().unwrap() - want).amax() < 1e-10);
    }

    #[test]
    fn greedy_truncation_policy() {
        let v = su2(&[(0, 1), (2, 1)]);
        let m = BlockDiagMatrix::from_blocks(v.clone(), v, [(0, DMatrix::from_element(1, 1, 0.9)), (2, DMatrix::from_element(1, 1, 0.8))]).unwrap();
        let tr = truncate(&m.svd().unwrap(), 3).unwrap();
        assert_eq!(tr.kept.sectors(), &[(0, 1)]);
        assert!(tr.kept.total_dim() <= 3);
        assert!(truncate(&m.svd().unwrap(), 0).is_err());
    }

    #[test]
    fn swap_matrix_eigenvalues() {
        let v = su2(&[(2, 2)]);
        let m = BlockDiagMatrix::from_blocks(v.clone(), v, [(2, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))]).unwrap();
        let e = m.eig(true).unwrap();
        assert!((e.values[&2][0] + 1.0).abs() < 1e-14 && (e.values[&2][1] - 1.0).abs() < 1e-14);
        assert!(m.eig(false).is_err());
    }

    #[test]
    fn unit_block_factor_at_spin_one() {
        // (Out, In) at j = 1 divides the path data by √3
        let f = block_factor(su2_system(), 2, [Direction::Out, Direction::In]).unwrap();
        assert!((f.abs() - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }
}
