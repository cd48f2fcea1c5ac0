//! Binary fusion trees over an ordered row of leaves and their sector paths.
//!
//! Ids `0..k` are the leaves, ids `k..2k-1` the internal nodes. Nodes are kept
//! in post-order, so the root is always the last node and every child id is
//! smaller than its parent's. A sector path assigns a charge to every id; the
//! root charge is its last entry.

use serde::{Deserialize, Serialize};

use crate::charge::{Charge, ChargeSystem};
use crate::rep_space::RepSpace;
use crate::Error;

pub type SectorPath = Vec<Charge>;

/// Recursive view of a tree, used for construction and rewriting.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Leaf(usize),
    Node(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn pair(l: Shape, r: Shape) -> Shape {
        Shape::Node(Box::new(l), Box::new(r))
    }

    fn leaves_in_order(&self, out: &mut Vec<usize>) {
        match self {
            Shape::Leaf(i) => out.push(*i),
            Shape::Node(l, r) => {
                l.leaves_in_order(out);
                r.leaves_in_order(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FusionTree {
    leaves: usize,
    nodes: Vec<(usize, usize)>,
}

impl FusionTree {
    /// Validates adjacency and post-order.
    pub fn new(leaves: usize, nodes: Vec<(usize, usize)>) -> Result<Self, Error> {
        let expect = leaves.saturating_sub(1);
        if nodes.len() != expect {
            return Err(Error::InvalidTree(format!("{leaves} leaves need {expect} nodes, got {}", nodes.len())));
        }
        let mut span: Vec<Option<(usize, usize)>> = (0..leaves).map(|i| Some((i, i + 1))).collect();
        let mut used = vec![false; leaves + nodes.len()];
        for (n, &(l, r)) in nodes.iter().enumerate() {
            let id = leaves + n;
            if l >= id || r >= id {
                return Err(Error::InvalidTree(format!("node {id} refers forward ({l}, {r})")));
            }
            if used[l] || used[r] {
                return Err(Error::InvalidTree(format!("node {id} reuses a subtree")));
            }
            used[l] = true;
            used[r] = true;
            let (a, b) = span[l].unwrap();
            let (c, d) = span[r].unwrap();
            if b != c {
                return Err(Error::InvalidTree(format!("node {id} fuses non-adjacent spans {a}..{b} and {c}..{d}")));
            }
            span.push(Some((a, d)));
        }
        let tree = FusionTree { leaves, nodes };
        if leaves > 1 && FusionTree::from_shape(&tree.shape()) != tree {
            return Err(Error::InvalidTree("nodes are not in post-order".into()));
        }
        Ok(tree)
    }

    /// Canonical tree for a shape whose leaves read `0..k` left to right.
    pub fn from_shape(shape: &Shape) -> FusionTree {
        fn walk(s: &Shape, leaves: &mut usize, nodes: &mut Vec<(usize, usize)>, k: usize) -> usize {
            match s {
                Shape::Leaf(_) => {
                    *leaves += 1;
                    *leaves - 1
                }
                Shape::Node(l, r) => {
                    let a = walk(l, leaves, nodes, k);
                    let b = walk(r, leaves, nodes, k);
                    nodes.push((a, b));
                    k + nodes.len() - 1
                }
            }
        }
        let mut order = Vec::new();
        shape.leaves_in_order(&mut order);
        let k = order.len();
        let mut nodes = Vec::new();
        let mut count = 0;
        walk(shape, &mut count, &mut nodes, k);
        FusionTree { leaves: k, nodes }
    }

    pub fn shape(&self) -> Shape {
        self.shape_of(self.root_id())
    }

    fn shape_of(&self, id: usize) -> Shape {
        if id < self.leaves {
            Shape::Leaf(id)
        } else {
            let (l, r) = self.nodes[id - self.leaves];
            Shape::pair(self.shape_of(l), self.shape_of(r))
        }
    }

    /// `((…((0,1),2)…),k-1)`.
    pub fn left_comb(k: usize) -> FusionTree {
        let mut nodes = Vec::new();
        for i in 1..k {
            let left = if i == 1 { 0 } else { k + i - 2 };
            nodes.push((left, i));
        }
        FusionTree { leaves: k, nodes }
    }

    /// `(0,(1,(…,(k-2,k-1))))`.
    pub fn right_comb(k: usize) -> FusionTree {
        if k < 2 {
            return FusionTree::left_comb(k);
        }
        let mut shape = Shape::Leaf(k - 1);
        for i in (0..k - 1).rev() {
            shape = Shape::pair(Shape::Leaf(i), shape);
        }
        FusionTree::from_shape(&shape)
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    /// Number of ids, i.e. the length of a sector path.
    pub fn path_len(&self) -> usize {
        self.leaves + self.nodes.len()
    }

    pub fn root_id(&self) -> usize {
        self.path_len().saturating_sub(1)
    }

    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        (id >= self.leaves).then(|| self.nodes[id - self.leaves])
    }

    /// Parent node of `id` and whether `id` is its left child.
    pub fn parent(&self, id: usize) -> Option<(usize, bool)> {
        self.nodes.iter().enumerate().find_map(|(n, &(l, r))| {
            if l == id {
                Some((self.leaves + n, true))
            } else if r == id {
                Some((self.leaves + n, false))
            } else {
                None
            }
        })
    }

    pub fn is_left_comb(&self) -> bool {
        *self == FusionTree::left_comb(self.leaves)
    }

    /// Replaces each leaf `g` of `self` by `groups[g]`.
    pub fn compose(&self, groups: &[FusionTree]) -> Result<FusionTree, Error> {
        if groups.len() != self.leaves {
            return Err(Error::InvalidTree(format!("{} groups for {} leaves", groups.len(), self.leaves)));
        }
        if groups.iter().any(|g| g.leaves == 0) {
            return Err(Error::InvalidTree("empty group".into()));
        }
        if self.leaves == 0 {
            return Ok(self.clone());
        }
        fn expand(s: &Shape, groups: &[FusionTree]) -> Shape {
            match s {
                Shape::Leaf(i) => groups[*i].shape(),
                Shape::Node(l, r) => Shape::pair(expand(l, groups), expand(r, groups)),
            }
        }
        Ok(FusionTree::from_shape(&expand(&self.shape(), groups)))
    }

    /// Subtree rooted at `id` as a standalone tree, plus the leaf range it spans.
    pub fn subtree(&self, id: usize) -> (FusionTree, std::ops::Range<usize>) {
        let shape = self.shape_of(id);
        let mut order = Vec::new();
        shape.leaves_in_order(&mut order);
        let start = order[0];
        (FusionTree::from_shape(&shape), start..start + order.len())
    }

    /// Ids of the subtree rooted at `id`, in post-order.
    pub fn subtree_ids(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_ids(id, &mut out);
        out
    }

    fn collect_ids(&self, id: usize, out: &mut Vec<usize>) {
        if let Some((l, r)) = self.children(id) {
            self.collect_ids(l, out);
            self.collect_ids(r, out);
        }
        out.push(id);
    }

    /// Nested JSON-friendly form: leaves as integers, nodes as two-element arrays.
    pub fn to_nested(&self) -> serde_json::Value {
        fn walk(s: &Shape) -> serde_json::Value {
            match s {
                Shape::Leaf(i) => serde_json::json!(i),
                Shape::Node(l, r) => serde_json::json!([walk(l), walk(r)]),
            }
        }
        if self.leaves == 0 {
            return serde_json::json!(null);
        }
        walk(&self.shape())
    }

    pub fn from_nested(v: &serde_json::Value) -> Result<FusionTree, Error> {
        fn walk(v: &serde_json::Value) -> Result<Shape, Error> {
            if let Some(i) = v.as_u64() {
                return Ok(Shape::Leaf(i as usize));
            }
            match v.as_array().map(|a| a.as_slice()) {
                Some([l, r]) => Ok(Shape::pair(walk(l)?, walk(r)?)),
                _ => Err(Error::InvalidTree(format!("bad nested tree element {v}"))),
            }
        }
        if v.is_null() {
            return Ok(FusionTree::left_comb(0));
        }
        let shape = walk(v)?;
        let mut order = Vec::new();
        shape.leaves_in_order(&mut order);
        if order != (0..order.len()).collect::<Vec<_>>() {
            return Err(Error::InvalidTree(format!("leaves must read 0..k in order, got {order:?}")));
        }
        Ok(FusionTree::from_shape(&shape))
    }
}

/// All fusion-consistent paths of `tree` over the given leaf spaces with the
/// requested root charge, sorted lexicographically.
pub fn enumerate_paths(tree: &FusionTree, leaf_spaces: &[RepSpace], root: Charge) -> Result<Vec<SectorPath>, Error> {
    if leaf_spaces.len() != tree.leaves() {
        return Err(Error::Structure(format!("{} spaces for {} leaves", leaf_spaces.len(), tree.leaves())));
    }
    if tree.leaves() == 0 {
        return Ok(if root == 0 { vec![vec![]] } else { vec![] });
    }
    let g = leaf_spaces[0].system();
    if let Some(s) = leaf_spaces.iter().find(|s| s.system() != g) {
        return Err(Error::SystemMismatch(g, s.system()));
    }
    let options: Vec<Vec<Charge>> = leaf_spaces.iter().map(|s| s.charges().collect()).collect();
    Ok(enumerate_with(g, tree, &options, Some(root)))
}

/// Enumeration over explicit per-leaf charge lists; `root: None` keeps every root.
pub fn enumerate_with(g: ChargeSystem, tree: &FusionTree, options: &[Vec<Charge>], root: Option<Charge>) -> Vec<SectorPath> {
    let k = tree.leaves();
    if k == 0 {
        return if root.is_none_or(|r| r == g.identity()) { vec![vec![]] } else { vec![] };
    }
    // reachable charge sets per id for pruning against the root
    let mut reach: Vec<Vec<Charge>> = options.to_vec();
    for &(l, r) in tree.nodes() {
        let mut set: Vec<Charge> = reach[l].iter().flat_map(|&a| reach[r].iter().flat_map(move |&b| g.fuse(a, b))).collect();
        set.sort();
        set.dedup();
        reach.push(set);
    }
    let mut out = Vec::new();
    let mut path = vec![0; tree.path_len()];
    fill(g, tree, tree.root_id(), root, &reach, &mut path, &mut out);
    out.sort();
    out
}

// Assigns charges top-down: the root (or a fixed charge) first, then the
// children consistent with it.
fn fill(
    g: ChargeSystem,
    tree: &FusionTree,
    id: usize,
    fixed: Option<Charge>,
    reach: &[Vec<Charge>],
    path: &mut SectorPath,
    out: &mut Vec<SectorPath>,
) {
    // Work list of ids still to assign, processed in reverse post-order.
    fn rec(
        g: ChargeSystem,
        tree: &FusionTree,
        todo: &[usize],
        reach: &[Vec<Charge>],
        path: &mut SectorPath,
        assigned: &mut Vec<bool>,
        out: &mut Vec<SectorPath>,
    ) {
        let Some((&id, rest)) = todo.split_first() else {
            out.push(path.clone());
            return;
        };
        let (parent, _) = tree.parent(id).expect("non-root id has a parent");
        let (l, r) = tree.children(parent).unwrap();
        let sibling = if l == id { r } else { l };
        let pc = path[parent];
        for &c in &reach[id] {
            let ok = if assigned[sibling] {
                let (a, b) = if l == id { (c, path[sibling]) } else { (path[sibling], c) };
                g.allowed(a, b, pc)
            } else {
                reach[sibling].iter().any(|&s| {
                    let (a, b) = if l == id { (c, s) } else { (s, c) };
                    g.allowed(a, b, pc)
                })
            };
            if !ok {
                continue;
            }
            path[id] = c;
            assigned[id] = true;
            rec(g, tree, rest, reach, path, assigned, out);
            assigned[id] = false;
        }
    }
    let roots: Vec<Charge> = match fixed {
        Some(c) if reach[id].contains(&c) => vec![c],
        Some(_) => vec![],
        None => reach[id].clone(),
    };
    let mut todo: Vec<usize> = tree.subtree_ids(id);
    todo.pop();
    todo.reverse();
    for c in roots {
        path[id] = c;
        let mut assigned = vec![false; tree.path_len()];
        assigned[id] = true;
        rec(g, tree, &todo, reach, path, &mut assigned, out);
    }
}

/// Π_l d_{c_l}: the number of entries of the block stored for `path`.
pub fn path_degeneracy(path: &SectorPath, leaf_spaces: &[RepSpace]) -> usize {
    leaf_spaces.iter().enumerate().map(|(l, s)| s.degeneracy(path[l])).product()
}

/// Leaf degeneracies of `path`, i.e. the block shape.
pub fn block_shape(path: &SectorPath, leaf_spaces: &[RepSpace]) -> Vec<usize> {
    leaf_spaces.iter().enumerate().map(|(l, s)| s.degeneracy(path[l])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::{su2_system, u1_system};

    fn su2(sectors: &[(Charge, usize)]) -> RepSpace {
        RepSpace::new(su2_system(), sectors.to_vec()).unwrap()
    }

    #[test]
    fn comb_constructors() {
        assert_eq!(FusionTree::left_comb(1).nodes(), &[]);
        assert_eq!(FusionTree::left_comb(2).nodes(), &[(0, 1)]);
        assert_eq!(FusionTree::left_comb(3).nodes(), &[(0, 1), (3, 2)]);
        assert_eq!(FusionTree::right_comb(3).nodes(), &[(1, 2), (0, 3)]);
        assert!(FusionTree::new(3, vec![(0, 2), (3, 1)]).is_err());
        assert!(FusionTree::new(4, vec![(0, 1), (2, 3), (4, 5)]).is_ok());
    }

    #[test]
    fn nested_round_trip() {
        let t = FusionTree::new(4, vec![(0, 1), (2, 3), (4, 5)]).unwrap();
        assert_eq!(t.to_nested(), serde_json::json!([[0, 1], [2, 3]]));
        assert_eq!(FusionTree::from_nested(&t.to_nested()).unwrap(), t);
        assert!(FusionTree::from_nested(&serde_json::json!([1, 0])).is_err());
    }

    #[test]
    fn two_halves_to_singlet() {
        let h = su2(&[(1, 1)]);
        let paths = enumerate_paths(&FusionTree::left_comb(2), &[h.clone(), h], 0).unwrap();
        assert_eq!(paths, vec![vec![1, 1, 0]]);
    }

    #[test]
    fn four_halves_comb() {
        let h = su2(&[(1, 1)]);
        let paths = enumerate_paths(&FusionTree::left_comb(4), &vec![h; 4], 0).unwrap();
        let internal: Vec<(Charge, Charge)> = paths.iter().map(|p| (p[4], p[5])).collect();
        assert_eq!(internal, vec![(0, 1), (2, 1)]);
    }

    #[test]
    fn u1_three_leaves() {
        let s = RepSpace::new(u1_system(), vec![(0, 1), (1, 1)]).unwrap();
        let paths = enumerate_paths(&FusionTree::left_comb(3), &vec![s; 3], 2).unwrap();
        assert_eq!(paths.len(), 3);
    }

    #[test]
    fn degeneracies() {
        let h3 = su2(&[(1, 3)]);
        let p = vec![1, 1, 0];
        assert_eq!(path_degeneracy(&p, &[h3.clone(), h3]), 9);
    }

    #[test]
    fn compose_groups() {
        let outer = FusionTree::left_comb(2);
        let t = outer.compose(&[FusionTree::left_comb(2), FusionTree::left_comb(3)]).unwrap();
        assert_eq!(t.to_nested(), serde_json::json!([[0, 1], [[2, 3], 4]]));
        let (sub, range) = t.subtree(t.nodes()[3].1);
        assert_eq!(range, 2..5);
        assert_eq!(sub, FusionTree::left_comb(3));
    }
}
