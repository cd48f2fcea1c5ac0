//! Representation spaces as direct sums of degenerate charge sectors, and the
//! degeneracy-level fusion map between a product space and its coupled basis.
//!
//! Dense basis layout: sectors in ascending charge order; inside sector `c`
//! the state `(c, t, m)` sits at `offset(c) + t * dim(c) + m_index`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charge::{Charge, ChargeSystem};
use crate::su2::{self, Spin};
use crate::Error;

/// Largest number of entries a dense realization may have.
pub const DENSE_LIMIT: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RepSpace {
    system: ChargeSystem,
    sectors: Vec<(Charge, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RepSpaceJson {
    system: ChargeSystem,
    sectors: Vec<(Charge, usize)>,
}

impl Serialize for RepSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RepSpaceJson { system: self.system, sectors: self.sectors.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RepSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RepSpaceJson::deserialize(d)?;
        RepSpace::new(raw.system, raw.sectors).map_err(serde::de::Error::custom)
    }
}

impl RepSpace {
    /// Sectors must have strictly ascending charges and positive degeneracies.
    pub fn new(system: ChargeSystem, sectors: Vec<(Charge, usize)>) -> Result<Self, Error> {
        for w in sectors.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidSpace(format!("charges not strictly ascending: {:?}", sectors)));
            }
        }
        for &(c, d) in &sectors {
            if d == 0 {
                return Err(Error::InvalidSpace(format!("sector {c} has zero degeneracy")));
            }
            if !system.is_valid(c) {
                return Err(Error::InvalidSpace(format!("charge {c} is not valid for {system}")));
            }
        }
        Ok(RepSpace { system, sectors })
    }

    /// Builds from unordered `(charge, degeneracy)` pairs, merging duplicates.
    pub fn from_unsorted(system: ChargeSystem, pairs: impl IntoIterator<Item = (Charge, usize)>) -> Result<Self, Error> {
        let mut map = std::collections::BTreeMap::new();
        for (c, d) in pairs {
            *map.entry(c).or_insert(0) += d;
        }
        RepSpace::new(system, map.into_iter().filter(|&(_, d)| d > 0).collect())
    }

    pub fn trivial(system: ChargeSystem) -> Self {
        RepSpace { system, sectors: vec![(system.identity(), 1)] }
    }

    pub fn system(&self) -> ChargeSystem {
        self.system
    }

    pub fn sectors(&self) -> &[(Charge, usize)] {
        &self.sectors
    }

    pub fn charges(&self) -> impl Iterator<Item = Charge> + '_ {
        self.sectors.iter().map(|s| s.0)
    }

    pub fn sector_index(&self, c: Charge) -> Option<usize> {
        self.sectors.binary_search_by_key(&c, |s| s.0).ok()
    }

    /// Degeneracy of charge `c` (0 if absent).
    pub fn degeneracy(&self, c: Charge) -> usize {
        self.sector_index(c).map_or(0, |i| self.sectors[i].1)
    }

    pub fn total_dim(&self) -> usize {
        self.sectors.iter().map(|&(c, d)| d * self.system.dim(c)).sum()
    }

    /// Number of multiplets, Σ d_c.
    pub fn total_degeneracy(&self) -> usize {
        self.sectors.iter().map(|s| s.1).sum()
    }

    /// Dense offset of the first state of sector `c`.
    pub fn offset(&self, c: Charge) -> usize {
        let mut off = 0;
        for &(q, d) in &self.sectors {
            if q == c {
                return off;
            }
            off += d * self.system.dim(q);
        }
        panic!("charge {c} not present in space");
    }

    /// Dense index of `(c, t, m_index)`.
    pub fn dense_index(&self, c: Charge, t: usize, m: usize) -> usize {
        self.offset(c) + t * self.system.dim(c) + m
    }

    /// The dual space: each charge replaced by its conjugate.
    pub fn dual(&self) -> RepSpace {
        let mut sectors: Vec<_> = self.sectors.iter().map(|&(c, d)| (self.system.dual(c), d)).collect();
        sectors.sort();
        RepSpace { system: self.system, sectors }
    }

    pub fn is_trivial(&self) -> bool {
        self.sectors == [(self.system.identity(), 1)]
    }
}

/// A single degeneracy label inside a space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub charge: Charge,
    pub t: usize,
}

/// The degeneracy-level fusion map `X^fuse` of `left ⊗ right → product`.
///
/// Pairs of labels are enumerated lexicographically by (sector index of the
/// left charge, left t, sector index of the right charge, right t) and then
/// grouped stably by total charge, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct FuseMap {
    pub left: RepSpace,
    pub right: RepSpace,
    pub product: RepSpace,
    sources: HashMap<Charge, Vec<(Label, Label)>>,
    // (left charge, right charge, total charge) -> coupled t for each (ta, tb), row-major
    targets: HashMap<(Charge, Charge, Charge), Vec<usize>>,
}

impl FuseMap {
    /// The pair of input labels behind the coupled label `(c, t)`.
    pub fn source(&self, c: Charge, t: usize) -> (Label, Label) {
        self.sources[&c][t]
    }

    /// Coupled degeneracy index of the pair `(a, ta) ⊗ (b, tb)` inside charge `c`.
    pub fn target(&self, a: Charge, ta: usize, b: Charge, tb: usize, c: Charge) -> usize {
        let db = self.right.degeneracy(b);
        self.targets[&(a, b, c)][ta * db + tb]
    }

    /// Row-major table of coupled indices for a whole `(a, b → c)` channel.
    pub fn channel(&self, a: Charge, b: Charge, c: Charge) -> &[usize] {
        &self.targets[&(a, b, c)]
    }

    pub fn has_channel(&self, a: Charge, b: Charge, c: Charge) -> bool {
        self.targets.contains_key(&(a, b, c))
    }

    /// Inverse view: the same bijection read from coupled to product labels.
    pub fn split_map(&self) -> SplitMap<'_> {
        SplitMap { fuse: self }
    }
}

/// `X^split`, the inverse of a [`FuseMap`].
pub struct SplitMap<'a> {
    fuse: &'a FuseMap,
}

impl SplitMap<'_> {
    pub fn split(&self, c: Charge, t: usize) -> (Label, Label) {
        self.fuse.source(c, t)
    }

    /// All labelled pairs inside the coupled sector `c`, in coupled order.
    pub fn sector(&self, c: Charge) -> &[(Label, Label)] {
        &self.fuse.sources[&c]
    }
}

/// Coupled space and `X^fuse` for `a ⊗ b`.
pub fn fuse_spaces(a: &RepSpace, b: &RepSpace) -> Result<(RepSpace, FuseMap), Error> {
    if a.system != b.system {
        return Err(Error::SystemMismatch(a.system, b.system));
    }
    let g = a.system;
    let mut sources: std::collections::BTreeMap<Charge, Vec<(Label, Label)>> = Default::default();
    let mut targets: HashMap<(Charge, Charge, Charge), Vec<usize>> = HashMap::new();
    for &(ca, da) in &a.sectors {
        for ta in 0..da {
            for &(cb, db) in &b.sectors {
                for tb in 0..db {
                    for c in g.fuse(ca, cb) {
                        let list = sources.entry(c).or_default();
                        let t = list.len();
                        list.push((Label { charge: ca, t: ta }, Label { charge: cb, t: tb }));
                        targets.entry((ca, cb, c)).or_insert_with(|| vec![0; da * db])[ta * db + tb] = t;
                    }
                }
            }
        }
    }
    let product = RepSpace::new(g, sources.iter().map(|(&c, v)| (c, v.len())).collect())?;
    let map = FuseMap { left: a.clone(), right: b.clone(), product: product.clone(), sources: sources.into_iter().collect(), targets };
    Ok((product, map))
}

/// Dense `(J_x, J_y, J_z)` of a single SU(2) space: ⊕_j I_{d_j} ⊗ J(j).
pub fn space_generators(space: &RepSpace) -> Result<[DMatrix<Complex64>; 3], Error> {
    if space.system != ChargeSystem::Su2 {
        return Err(Error::NotSu2);
    }
    let n = space.total_dim();
    let mut out = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    for &(c, d) in &space.sectors {
        let gens = su2::generators(Spin::from_twice(c as u32));
        let dim = c as usize + 1;
        for t in 0..d {
            let off = space.dense_index(c, t, 0);
            for (k, g) in gens.iter().enumerate() {
                out[k].view_mut((off, off), (dim, dim)).copy_from(g);
            }
        }
    }
    Ok(out)
}

/// Total spin operators `Σ_l I ⊗ … ⊗ J_α^{(l)} ⊗ … ⊗ I` on the product space.
pub fn total_spin_operators(spaces: &[RepSpace]) -> Result<[DMatrix<Complex64>; 3], Error> {
    let dims: Vec<usize> = spaces.iter().map(|s| s.total_dim()).collect();
    let n: usize = dims.iter().product();
    if n.saturating_mul(n) > DENSE_LIMIT {
        return Err(Error::TooLarge(n * n));
    }
    let mut out = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    for (l, space) in spaces.iter().enumerate() {
        let local = space_generators(space)?;
        let left: usize = dims[..l].iter().product();
        let right: usize = dims[l + 1..].iter().product();
        for (k, g) in local.iter().enumerate() {
            let op = DMatrix::<Complex64>::identity(left, left)
                .kronecker(g)
                .kronecker(&DMatrix::<Complex64>::identity(right, right));
            out[k] += op;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::{su2_system, u1_system};

    fn su2(sectors: &[(Charge, usize)]) -> RepSpace {
        RepSpace::new(su2_system(), sectors.to_vec()).unwrap()
    }

    #[test]
    fn two_halves() {
        let h = su2(&[(1, 1)]);
        let (p, _) = fuse_spaces(&h, &h).unwrap();
        assert_eq!(p.sectors(), &[(0, 1), (2, 1)]);
    }

    #[test]
    fn degenerate_halves() {
        let h = su2(&[(1, 3)]);
        let (p, map) = fuse_spaces(&h, &h).unwrap();
        assert_eq!(p.sectors(), &[(0, 9), (2, 9)]);
        for c in [0, 2] {
            assert_eq!(map.target(1, 0, 1, 0, c), 0);
            for t in 0..9 {
                let (a, b) = map.source(c, t);
                assert_eq!(map.target(a.charge, a.t, b.charge, b.t, c), t);
            }
        }
    }

    #[test]
    fn spin_one_times_mixed_space() {
        let a = su2(&[(2, 1)]);
        let b = su2(&[(0, 2), (2, 1)]);
        let (p, map) = fuse_spaces(&a, &b).unwrap();
        assert_eq!(p.sectors(), &[(0, 1), (2, 3), (4, 1)]);
        let l = |charge, t| Label { charge, t };
        assert_eq!(map.source(2, 0), (l(2, 0), l(0, 0)));
        assert_eq!(map.source(2, 1), (l(2, 0), l(0, 1)));
        assert_eq!(map.source(2, 2), (l(2, 0), l(2, 0)));
        assert_eq!(map.split_map().split(0, 0), (l(2, 0), l(2, 0)));
        assert_eq!(map.split_map().split(4, 0), (l(2, 0), l(2, 0)));
    }

    #[test]
    fn u1_split_enumerates_sum() {
        let s = RepSpace::new(u1_system(), vec![(-1, 1), (0, 2), (1, 1)]).unwrap();
        let (p, map) = fuse_spaces(&s, &s).unwrap();
        for &(n, d) in p.sectors() {
            let pairs = map.split_map().sector(n).to_vec();
            assert_eq!(pairs.len(), d);
            for (a, b) in pairs {
                assert_eq!(a.charge + b.charge, n);
            }
        }
        assert_eq!(p.total_dim(), 16);
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(RepSpace::new(su2_system(), vec![(2, 1), (0, 1)]).is_err());
        assert!(RepSpace::new(su2_system(), vec![(0, 0)]).is_err());
        assert!(RepSpace::new(su2_system(), vec![(-2, 1)]).is_err());
    }

    #[test]
    fn reducible_generators() {
        let s = su2(&[(1, 3)]);
        let [jx, _, _] = space_generators(&s).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let want = if r / 2 == c / 2 && r != c { 0.5 } else { 0.0 };
                assert!((jx[(r, c)].re - want).abs() < 1e-15 && jx[(r, c)].im == 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = su2(&[(0, 1), (2, 3), (4, 1)]);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"system":"su2","sectors":[[0,1],[2,3],[4,1]]}"#);
        let back: RepSpace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<RepSpace>(r#"{"system":"su2","sectors":[[0,0]]}"#).is_err());
    }
}
