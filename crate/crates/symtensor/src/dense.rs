//! Plain dense tensors and naive implementations of every primitive.
//!
//! Nothing here knows about fusion trees beyond building one structural
//! tensor from Clebsch-Gordan blocks; this is the reference the symmetric
//! engine is checked against.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::charge::{Charge, ChargeSystem};
use crate::fusion_tree::{enumerate_with, FusionTree, SectorPath};
use crate::rep_space::{fuse_spaces, space_generators, FuseMap, RepSpace, DENSE_LIMIT};
use crate::su2::{self, Spin};
use crate::sym_tensor::Direction;
use crate::Error;

/// Row-major real array.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Iterates all multi-indices of `dims` in row-major order.
pub fn for_each_index(dims: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let n: usize = dims.iter().product();
    if n == 0 {
        return;
    }
    let mut idx = vec![0; dims.len()];
    for flat in 0..n {
        f(flat, &idx);
        for a in (0..dims.len()).rev() {
            idx[a] += 1;
            if idx[a] < dims[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl DenseTensor {
    pub fn zeros(dims: Vec<usize>) -> DenseTensor {
        let n = dims.iter().product();
        DenseTensor { dims, data: vec![0.0; n] }
    }

    pub fn from_vec(dims: Vec<usize>, data: Vec<f64>) -> Result<DenseTensor, Error> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::Structure(format!("{} values for dims {dims:?}", data.len())));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> DenseTensor {
        let mut t = DenseTensor::zeros(dims);
        let dims = t.dims.clone();
        for_each_index(&dims, |flat, idx| t.data[flat] = f(idx));
        t
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> DenseTensor {
        DenseTensor::from_fn(vec![m.nrows(), m.ncols()], |i| m[(i[0], i[1])])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank(), 2);
        DMatrix::from_row_slice(self.dims[0], self.dims[1], &self.data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(strides(&self.dims)).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn add_at(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] += v;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> DenseTensor {
        DenseTensor { dims: self.dims.clone(), data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor, Error> {
        if self.dims != other.dims {
            return Err(Error::Structure(format!("dims {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(DenseTensor { dims: self.dims.clone(), data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() })
    }

    /// Largest entrywise difference; infinite when the shapes differ.
    pub fn max_diff(&self, other: &DenseTensor) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn dot(&self, other: &DenseTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Appends or removes trailing unit axes, or any other reshape with equal size.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<DenseTensor, Error> {
        DenseTensor::from_vec(dims, self.data.clone())
    }
}

fn check_size(n: usize) -> Result<(), Error> {
    if n > DENSE_LIMIT {
        Err(Error::TooLarge(n))
    } else {
        Ok(())
    }
}

/// New axis `k` is old axis `perm[k]`.
pub fn dense_permute(t: &DenseTensor, perm: &[usize]) -> Result<DenseTensor, Error> {
    crate::gamma::check_permutation(perm, t.rank())?;
    let new_dims: Vec<usize> = perm.iter().map(|&p| t.dims[p]).collect();
    let old_strides = strides(&t.dims);
    let mut out = DenseTensor::zeros(new_dims.clone());
    for_each_index(&new_dims, |flat, idx| {
        let src: usize = idx.iter().enumerate().map(|(k, &i)| i * old_strides[perm[k]]).sum();
        out.data[flat] = t.data[src];
    });
    Ok(out)
}

/// Merges contiguous axis groups (given by their sizes) by row-major index arithmetic.
pub fn dense_reshape(t: &DenseTensor, group_sizes: &[usize]) -> Result<DenseTensor, Error> {
    if group_sizes.iter().sum::<usize>() != t.rank() {
        return Err(Error::Structure(format!("groups {group_sizes:?} do not cover rank {}", t.rank())));
    }
    let mut dims = Vec::new();
    let mut a = 0;
    for &g in group_sizes {
        dims.push(t.dims[a..a + g].iter().product());
        a += g;
    }
    t.reshape(dims)
}

/// `T'[.., i', ..] = Σ_i T[.., i, ..] M[i, i']` on one axis.
pub fn apply_on_axis(t: &DenseTensor, axis: usize, m: &DMatrix<f64>) -> Result<DenseTensor, Error> {
    if m.nrows() != t.dims[axis] {
        return Err(Error::Structure(format!("matrix with {} rows on axis of size {}", m.nrows(), t.dims[axis])));
    }
    let mut dims = t.dims.clone();
    dims[axis] = m.ncols();
    let outer: usize = t.dims[..axis].iter().product();
    let inner: usize = t.dims[axis + 1..].iter().product();
    let (n, n2) = (t.dims[axis], m.ncols());
    let mut out = DenseTensor::zeros(dims);
    for o in 0..outer {
        for i in 0..n {
            let base = (o * n + i) * inner;
            for j in 0..n2 {
                let w = m[(i, j)];
                if w == 0.0 {
                    continue;
                }
                let dst = (o * n2 + j) * inner;
                for r in 0..inner {
                    out.data[dst + r] += w * t.data[base + r];
                }
            }
        }
    }
    Ok(out)
}

/// Direct nested-loop contraction; result axes are A's free axes then B's.
pub fn dense_contract_naive(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor, Error> {
    for &(x, y) in pairs {
        if a.dims[x] != b.dims[y] {
            return Err(Error::Structure(format!("contracted axes {x} and {y} differ in size")));
        }
    }
    let af: Vec<usize> = (0..a.rank()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let bf: Vec<usize> = (0..b.rank()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
    let cd: Vec<usize> = pairs.iter().map(|p| a.dims[p.0]).collect();
    let dims: Vec<usize> = af.iter().map(|&i| a.dims[i]).chain(bf.iter().map(|&i| b.dims[i])).collect();
    check_size(dims.iter().product())?;
    let mut out = DenseTensor::zeros(dims.clone());
    let mut ia = vec![0; a.rank()];
    let mut ib = vec![0; b.rank()];
    for_each_index(&dims, |flat, idx| {
        for (k, &i) in af.iter().enumerate() {
            ia[i] = idx[k];
        }
        for (k, &i) in bf.iter().enumerate() {
            ib[i] = idx[af.len() + k];
        }
        let mut acc = 0.0;
        for_each_index(&cd, |_, c| {
            for (k, &(x, y)) in pairs.iter().enumerate() {
                ia[x] = c[k];
                ib[y] = c[k];
            }
            acc += a.get(&ia) * b.get(&ib);
        });
        out.data[flat] = acc;
    });
    Ok(out)
}

/// Five-step contraction: permute, reshape to matrices, multiply, reshape back.
pub fn dense_contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor, Error> {
    let af: Vec<usize> = (0..a.rank()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let bf: Vec<usize> = (0..b.rank()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
    let pa: Vec<usize> = af.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
    let pb: Vec<usize> = pairs.iter().map(|p| p.1).chain(bf.iter().copied()).collect();
    let ap = dense_permute(a, &pa)?;
    let bp = dense_permute(b, &pb)?;
    let rows: usize = af.iter().map(|&i| a.dims[i]).product();
    let inner: usize = pairs.iter().map(|p| a.dims[p.0]).product();
    let inner_b: usize = pairs.iter().map(|p| b.dims[p.1]).product();
    if inner != inner_b {
        return Err(Error::Structure("contracted axes differ in size".into()));
    }
    let cols: usize = bf.iter().map(|&i| b.dims[i]).product();
    check_size(rows * cols)?;
    let am = DMatrix::from_row_slice(rows, inner, &ap.data);
    let bm = DMatrix::from_row_slice(inner, cols, &bp.data);
    let cm = am * bm;
    let dims: Vec<usize> = af.iter().map(|&i| a.dims[i]).chain(bf.iter().map(|&i| b.dims[i])).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(cm[(r, c)]);
        }
    }
    DenseTensor::from_vec(dims, data)
}

/// Singular values and factors of a matrix-shaped tensor.
pub fn dense_svd(t: &DenseTensor) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let m = t.to_matrix();
    let svd = m.svd(true, true);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (svd.u.unwrap(), s, svd.v_t.unwrap())
}

/// Bend matrix for a leg: rows index the tree space `dual(space)`, columns
/// the leg's own space; the cup for `In`, its transpose for `InR`, identity
/// for `Out`.
pub fn bend_matrix(space: &RepSpace, dir: Direction) -> DMatrix<f64> {
    let n = space.total_dim();
    if dir == Direction::Out {
        return DMatrix::identity(n, n);
    }
    let g = space.system();
    let tree = space.dual();
    let mut m = DMatrix::zeros(n, n);
    for &(c, d) in tree.sectors() {
        let q = g.dual(c);
        let block = match g {
            ChargeSystem::Su2 => {
                let s = Spin::from_twice(c as u32);
                if dir == Direction::In {
                    su2::cup(s)
                } else {
                    su2::cap(s)
                }
            }
            _ => DMatrix::from_element(1, 1, 1.0),
        };
        let dim = g.dim(c);
        for t in 0..d {
            let r0 = tree.dense_index(c, t, 0);
            let c0 = space.dense_index(q, t, 0);
            for i in 0..dim {
                for j in 0..dim {
                    m[(r0 + i, c0 + j)] = block[(i, j)];
                }
            }
        }
    }
    m
}

/// Structural tensor of one path: axes are the leaves' magnetic indices,
/// followed by the root's (kept even when one-dimensional).
pub fn structural_tensor(g: ChargeSystem, tree: &FusionTree, path: &SectorPath) -> DenseTensor {
    structural_tensor_with(g, tree, path, &[])
}

/// As [`structural_tensor`], with the bends on `absorbed` leaves folded into
/// their parent node: a left leaf `l` under `(l, s → p)` becomes
/// `C(p, l → s)`, a right leaf `C(l, p → s)`.
pub fn structural_tensor_with(g: ChargeSystem, tree: &FusionTree, path: &SectorPath, absorbed: &[usize]) -> DenseTensor {
    if tree.leaves() == 0 {
        return DenseTensor::from_vec(vec![1], vec![1.0]).unwrap();
    }
    if tree.leaves() == 1 {
        let d = g.dim(path[0]);
        return DenseTensor::from_fn(vec![d, d], |i| if i[0] == i[1] { 1.0 } else { 0.0 });
    }
    let cg = |a: Charge, b: Charge, c: Charge| -> DenseTensor {
        match g {
            ChargeSystem::Su2 => {
                let blk = su2::cg_block(Spin::from_twice(a as u32), Spin::from_twice(b as u32), Spin::from_twice(c as u32));
                let (x, y, z) = blk.shape();
                DenseTensor::from_fn(vec![x, y, z], |i| blk.at(i[0], i[1], i[2]))
            }
            _ => DenseTensor::from_vec(vec![1, 1, 1], vec![if g.allowed(a, b, c) { 1.0 } else { 0.0 }]).unwrap(),
        }
    };
    // node tensor with axes (left, right, parent)
    let node = |l: usize, r: usize, n: usize| -> DenseTensor {
        let (cl, cr, cn) = (path[l], path[r], path[n]);
        if absorbed.contains(&l) {
            // C(p, l → s): axes (p, l, s) → (l, s, p)
            let t = cg(cn, g.dual(cl), cr);
            dense_permute(&t, &[1, 2, 0]).unwrap()
        } else if absorbed.contains(&r) {
            // C(l, p → s): axes (l, p, s) → (s, l, p)
            let t = cg(g.dual(cr), cn, cl);
            dense_permute(&t, &[2, 0, 1]).unwrap()
        } else {
            cg(cl, cr, cn)
        }
    };
    fn build(tree: &FusionTree, id: usize, node: &dyn Fn(usize, usize, usize) -> DenseTensor) -> Option<DenseTensor> {
        let (l, r) = tree.children(id)?;
        let nt = node(l, r, id);
        let lt = build(tree, l, node);
        let rt = build(tree, r, node);
        // contract children into the node's left and right axes
        let mut acc = nt;
        if let Some(rt) = rt {
            let ax = rt.rank() - 1;
            let c = dense_contract(&rt, &acc, &[(ax, 1)]).unwrap();
            // axes: right leaves..., left, parent → left, right leaves..., parent
            let nr = rt.rank() - 1;
            let mut p = vec![nr];
            p.extend(0..nr);
            p.push(nr + 1);
            acc = dense_permute(&c, &p).unwrap();
        }
        if let Some(lt) = lt {
            let ax = lt.rank() - 1;
            acc = dense_contract(&lt, &acc, &[(ax, 0)]).unwrap();
        }
        Some(acc)
    }
    build(tree, tree.root_id(), &node).expect("tree with at least two leaves")
}

/// Υ for one group of legs: rows are the product of the constituent spaces
/// (row-major), columns the fused space. Bends on the constituents are
/// removed first and the bend of `fused_dir` attached to the result.
pub struct Fuser {
    pub matrix: DMatrix<f64>,
    pub fused_space: RepSpace,
}

/// Builds the fusion matrix for constituents `spaces`/`dirs` fused along `tree`.
pub fn fuser(spaces: &[RepSpace], dirs: &[Direction], tree: &FusionTree, fused_dir: Direction) -> Result<Fuser, Error> {
    let g = spaces[0].system();
    let tree_spaces: Vec<RepSpace> = spaces.iter().zip(dirs).map(|(s, d)| if *d == Direction::Out { s.clone() } else { s.dual() }).collect();
    // iterated fusion of tree spaces along the group tree
    let mut fused: Vec<RepSpace> = tree_spaces.clone();
    let mut maps: Vec<Option<FuseMap>> = vec![None; tree.leaves()];
    for &(l, r) in tree.nodes() {
        let (p, m) = fuse_spaces(&fused[l], &fused[r])?;
        fused.push(p);
        maps.push(Some(m));
    }
    let top = fused.last().unwrap().clone();
    let rows: usize = spaces.iter().map(|s| s.total_dim()).product();
    check_size(rows * top.total_dim())?;
    let mut u = DMatrix::zeros(rows, top.total_dim());
    let options: Vec<Vec<Charge>> = tree_spaces.iter().map(|s| s.charges().collect()).collect();
    let row_dims: Vec<usize> = spaces.iter().map(|s| s.total_dim()).collect();
    let row_strides = strides(&row_dims);
    for path in enumerate_with(g, tree, &options, None) {
        let q = structural_tensor(g, tree, &path);
        let degs: Vec<usize> = (0..tree.leaves()).map(|l| tree_spaces[l].degeneracy(path[l])).collect();
        for_each_index(&degs, |_, ts| {
            // fused degeneracy label through the per-node maps
            let mut label: Vec<usize> = ts.to_vec();
            label.resize(tree.path_len(), 0);
            for (n, &(l, r)) in tree.nodes().iter().enumerate() {
                let id = tree.leaves() + n;
                label[id] = maps[id].as_ref().unwrap().target(path[l], label[l], path[r], label[r], path[id]);
            }
            let c = *path.last().unwrap();
            let col0 = top.dense_index(c, label[tree.root_id()], 0);
            for_each_index(q.dims(), |qf, ms| {
                let w = q.data[qf];
                if w == 0.0 {
                    return;
                }
                let row: usize = (0..tree.leaves()).map(|l| tree_spaces[l].dense_index(path[l], ts[l], ms[l]) * row_strides[l]).sum();
                u[(row, col0 + ms[tree.leaves()])] = w;
            });
        });
    }
    // detach constituent bends: rows are in space layout, u in tree layout
    let mut detach = DMatrix::<f64>::identity(1, 1);
    for (s, d) in spaces.iter().zip(dirs) {
        detach = detach.kronecker(&bend_matrix(s, *d).transpose());
    }
    let fused_space = if fused_dir == Direction::Out { top.clone() } else { top.dual() };
    let attach = bend_matrix(&fused_space, fused_dir);
    Ok(Fuser { matrix: detach * u * attach, fused_space })
}

/// Fuses contiguous axis groups with Υ; groups of one axis with the same
/// direction are left untouched.
pub fn dense_fuse(t: &DenseTensor, groups: &[(Vec<RepSpace>, Vec<Direction>, FusionTree, Direction)]) -> Result<DenseTensor, Error> {
    let sizes: Vec<usize> = groups.iter().map(|g| g.0.len()).collect();
    let mut out = dense_reshape(t, &sizes)?;
    for (axis, (spaces, dirs, tree, fd)) in groups.iter().enumerate() {
        let f = fuser(spaces, dirs, tree, *fd)?;
        out = apply_on_axis(&out, axis, &f.matrix)?;
    }
    Ok(out)
}

/// Inverse of [`dense_fuse`].
pub fn dense_split(t: &DenseTensor, groups: &[(Vec<RepSpace>, Vec<Direction>, FusionTree, Direction)]) -> Result<DenseTensor, Error> {
    let mut out = t.clone();
    for (axis, (spaces, dirs, tree, fd)) in groups.iter().enumerate() {
        let f = fuser(spaces, dirs, tree, *fd)?;
        out = apply_on_axis(&out, axis, &f.matrix.transpose())?;
    }
    let mut dims = Vec::new();
    for (spaces, ..) in groups {
        dims.extend(spaces.iter().map(|s| s.total_dim()));
    }
    out.reshape(dims)
}

fn apply_complex(t: &[Complex64], dims: &[usize], axis: usize, m: &DMatrix<Complex64>) -> Vec<Complex64> {
    // out[.., i, ..] = Σ_j m[i, j] t[.., j, ..]
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let n = dims[axis];
    let mut out = vec![Complex64::new(0.0, 0.0); t.len()];
    for o in 0..outer {
        for i in 0..n {
            for j in 0..n {
                let w = m[(i, j)];
                if w == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for r in 0..inner {
                    out[(o * n + i) * inner + r] += w * t[(o * n + j) * inner + r];
                }
            }
        }
    }
    out
}

/// `max_α ‖Σ_l ρ_α^{(l)} T‖ / ‖T‖`, with `ρ = J_α` on outgoing legs and
/// `−J_αᵀ` on incoming ones. For Abelian systems the weight of entries
/// violating charge conservation is returned instead. Zero for `T = 0`.
pub fn invariance_residual(t: &DenseTensor, spaces: &[RepSpace], dirs: &[Direction]) -> Result<f64, Error> {
    if spaces.len() != t.rank() || dirs.len() != t.rank() {
        return Err(Error::Structure(format!("{} spaces for a rank-{} tensor", spaces.len(), t.rank())));
    }
    for (s, &d) in spaces.iter().zip(t.dims()) {
        if s.total_dim() != d {
            return Err(Error::Structure(format!("space of dimension {} on an axis of size {d}", s.total_dim())));
        }
    }
    let norm = t.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    if t.rank() == 0 {
        return Ok(0.0);
    }
    let g = spaces[0].system();
    if g.is_abelian() {
        let labels: Vec<Vec<Charge>> = spaces
            .iter()
            .map(|s| s.sectors().iter().flat_map(|&(c, d)| std::iter::repeat_n(c, d * g.dim(c))).collect())
            .collect();
        let mut bad = 0.0;
        for_each_index(t.dims(), |flat, idx| {
            let mut total = g.identity();
            for (l, &i) in idx.iter().enumerate() {
                let q = if dirs[l] == Direction::Out { labels[l][i] } else { g.dual(labels[l][i]) };
                total = g.fuse(total, q)[0];
            }
            if total != g.identity() {
                bad += t.data[flat] * t.data[flat];
            }
        });
        return Ok(bad.sqrt() / norm);
    }
    let data: Vec<Complex64> = t.data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let gens: Vec<[DMatrix<Complex64>; 3]> = spaces.iter().map(space_generators).collect::<Result<_, _>>()?;
    let mut worst: f64 = 0.0;
    for alpha in 0..3 {
        let mut acc = vec![Complex64::new(0.0, 0.0); data.len()];
        for (l, gl) in gens.iter().enumerate() {
            let rho = if dirs[l] == Direction::Out { gl[alpha].clone() } else { -gl[alpha].transpose() };
            for (a, b) in acc.iter_mut().zip(apply_complex(&data, t.dims(), l, &rho)) {
                *a += b;
            }
        }
        let r = acc.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(r / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::su2_system;

    fn half() -> RepSpace {
        RepSpace::new(su2_system(), vec![(1, 1)]).unwrap()
    }

    #[test]
    fn permute_round_trip() {
        let t = DenseTensor::from_fn(vec![2, 3, 4], |i| (i[0] * 12 + i[1] * 4 + i[2]) as f64);
        let p = dense_permute(&t, &[2, 0, 1]).unwrap();
        assert_eq!(p.dims(), &[4, 2, 3]);
        let back = dense_permute(&p, &crate::gamma::invert(&[2, 0, 1])).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn five_step_matches_loops() {
        let a = DenseTensor::from_fn(vec![2, 3, 4], |i| (i[0] as f64) - 0.5 * i[1] as f64 + 0.25 * i[2] as f64);
        let b = DenseTensor::from_fn(vec![4, 2, 3], |i| (i[0] * i[1]) as f64 + 1.0 - i[2] as f64);
        let x = dense_contract(&a, &b, &[(2, 0), (1, 2)]).unwrap();
        let y = dense_contract_naive(&a, &b, &[(2, 0), (1, 2)]).unwrap();
        assert!(x.max_diff(&y) < 1e-12);
    }

    #[test]
    fn singlet_and_triplet_residuals() {
        let s = 1.0 / 2f64.sqrt();
        // basis order m = -1/2, +1/2
        let singlet = DenseTensor::from_vec(vec![2, 2], vec![0.0, -s, s, 0.0]).unwrap();
        let triplet = DenseTensor::from_vec(vec![2, 2], vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let sp = [half(), half()];
        let dirs = [Direction::Out, Direction::Out];
        assert!(invariance_residual(&singlet, &sp, &dirs).unwrap() < 1e-14);
        assert!(invariance_residual(&triplet, &sp, &dirs).unwrap() > 0.5);
    }

    #[test]
    fn cup_turns_singlet_into_identity() {
        // singlet with the first leg bent is I/√2
        let s = 1.0 / 2f64.sqrt();
        let singlet = DenseTensor::from_vec(vec![2, 2], vec![0.0, -s, s, 0.0]).unwrap();
        let bent = apply_on_axis(&singlet, 0, &bend_matrix(&half(), Direction::In)).unwrap();
        assert!((bent.get(&[0, 0]) - s).abs() < 1e-15 && (bent.get(&[1, 1]) - s).abs() < 1e-15);
        assert!(invariance_residual(&bent, &[half(), half()], &[Direction::In, Direction::Out]).unwrap() < 1e-14);
    }

    #[test]
    fn fuser_is_orthogonal() {
        let v = RepSpace::new(su2_system(), vec![(0, 1), (1, 2)]).unwrap();
        let f = fuser(&[v.clone(), v.clone(), v], &[Direction::Out, Direction::In, Direction::InR], &FusionTree::left_comb(3), Direction::Out).unwrap();
        let m = &f.matrix;
        let id = m.transpose() * m;
        assert!((id - DMatrix::<f64>::identity(m.ncols(), m.ncols())).amax() < 1e-12);
    }
}
