//! Sparse maps between tree decompositions.
//!
//! A structural tensor `Q` of a fusion tree is rewritten with two local moves:
//! the F-move `|a (b c)_f⟩ = Σ_e F^{ef}_{abcd} |(a b)_e c⟩` and the exchange of
//! the two subtrees under a node, which costs `R(a, b, c)`. Every map is built
//! by normalizing the input tree to the left comb, reordering leaves by
//! adjacent exchanges at the comb, and then reading off the overlap with the
//! comb decomposition of each output path. No magnetic indices are ever
//! touched.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use once_cell::sync::Lazy;
use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::charge::{Charge, ChargeSystem};
use crate::fusion_tree::{enumerate_with, FusionTree, SectorPath, Shape};
use crate::rep_space::RepSpace;
use crate::sym_tensor::Direction;
use crate::Error;

static NETWORKS_EVALUATED: AtomicU64 = AtomicU64::new(0);

/// Spin networks evaluated by all map builds in this process.
pub fn networks_evaluated() -> u64 {
    NETWORKS_EVALUATED.load(Ordering::Relaxed)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum LTree {
    Leaf { slot: usize, charge: Charge },
    Node { l: Box<LTree>, r: Box<LTree>, charge: Charge },
}

impl LTree {
    fn charge(&self) -> Charge {
        match self {
            LTree::Leaf { charge, .. } | LTree::Node { charge, .. } => *charge,
        }
    }

    fn from_path(tree: &FusionTree, path: &SectorPath) -> LTree {
        fn build(tree: &FusionTree, path: &SectorPath, id: usize) -> LTree {
            match tree.children(id) {
                None => LTree::Leaf { slot: id, charge: path[id] },
                Some((l, r)) => LTree::Node {
                    l: Box::new(build(tree, path, l)),
                    r: Box::new(build(tree, path, r)),
                    charge: path[id],
                },
            }
        }
        build(tree, path, tree.root_id())
    }

    /// In-order slots, the shape as a tree over positions, and the path.
    fn flatten(&self) -> (Vec<usize>, FusionTree, SectorPath) {
        fn shape(t: &LTree, slots: &mut Vec<usize>) -> Shape {
            match t {
                LTree::Leaf { slot, .. } => {
                    slots.push(*slot);
                    Shape::Leaf(slots.len() - 1)
                }
                LTree::Node { l, r, .. } => {
                    let a = shape(l, slots);
                    let b = shape(r, slots);
                    Shape::pair(a, b)
                }
            }
        }
        fn charges(t: &LTree, leaves: &mut Vec<Charge>, nodes: &mut Vec<Charge>) {
            match t {
                LTree::Leaf { charge, .. } => leaves.push(*charge),
                LTree::Node { l, r, charge } => {
                    charges(l, leaves, nodes);
                    charges(r, leaves, nodes);
                    nodes.push(*charge);
                }
            }
        }
        let mut slots = Vec::new();
        let s = shape(self, &mut slots);
        let mut leaves = Vec::new();
        let mut nodes = Vec::new();
        charges(self, &mut leaves, &mut nodes);
        leaves.extend(nodes);
        (slots, FusionTree::from_shape(&s), leaves)
    }

    fn at(&self, addr: &[bool]) -> &LTree {
        match (addr.split_first(), self) {
            (None, t) => t,
            (Some((&right, rest)), LTree::Node { l, r, .. }) => {
                if right {
                    r.at(rest)
                } else {
                    l.at(rest)
                }
            }
            _ => panic!("address runs past a leaf"),
        }
    }

    /// Replaces the subtree at `addr` by each rewrite produced by `f`.
    fn rewrite(&self, addr: &[bool], f: &dyn Fn(&LTree) -> Vec<(LTree, f64)>) -> Vec<(LTree, f64)> {
        match addr.split_first() {
            None => f(self),
            Some((&right, rest)) => {
                let LTree::Node { l, r, charge } = self else { panic!("address runs past a leaf") };
                if right {
                    r.rewrite(rest, f)
                        .into_iter()
                        .map(|(nr, c)| (LTree::Node { l: l.clone(), r: Box::new(nr), charge: *charge }, c))
                        .collect()
                } else {
                    l.rewrite(rest, f)
                        .into_iter()
                        .map(|(nl, c)| (LTree::Node { l: Box::new(nl), r: r.clone(), charge: *charge }, c))
                        .collect()
                }
            }
        }
    }
}

/// A superposition of labelled trees sharing one shape.
#[derive(Clone, Debug)]
struct State {
    g: ChargeSystem,
    // ordered so that accumulation, and hence every coefficient, is reproducible
    terms: BTreeMap<LTree, f64>,
}

impl State {
    fn single(g: ChargeSystem, t: LTree) -> State {
        State { g, terms: BTreeMap::from([(t, 1.0)]) }
    }

    fn shape_tree(&self) -> &LTree {
        self.terms.keys().next().expect("state is never empty")
    }

    fn apply(&mut self, addr: &[bool], f: &dyn Fn(ChargeSystem, &LTree) -> Vec<(LTree, f64)>) {
        let g = self.g;
        let mut next: BTreeMap<LTree, f64> = BTreeMap::new();
        for (t, c) in std::mem::take(&mut self.terms) {
            for (nt, w) in t.rewrite(addr, &|sub| f(g, sub)) {
                *next.entry(nt).or_insert(0.0) += c * w;
            }
        }
        // a move never empties the state unless the input was inconsistent
        next.retain(|_, v| *v != 0.0);
        if next.is_empty() {
            panic!("recoupling produced an empty state");
        }
        self.terms = next;
    }

    /// `A (B C)_f → Σ_e F^{ef} (A B)_e C`.
    fn f_left(&mut self, addr: &[bool]) {
        self.apply(addr, &|g, t| {
            let LTree::Node { l: a, r, charge: d } = t else { panic!("F-move at a leaf") };
            let LTree::Node { l: b, r: c, charge: f } = r.as_ref() else { panic!("F-move needs a right node") };
            let (ca, cb, cc) = (a.charge(), b.charge(), c.charge());
            g.fuse(ca, cb)
                .into_iter()
                .filter_map(|e| {
                    let w = g.f_coeff(ca, cb, cc, *d, e, *f);
                    (w != 0.0).then(|| {
                        let ab = LTree::Node { l: a.clone(), r: b.clone(), charge: e };
                        (LTree::Node { l: Box::new(ab), r: c.clone(), charge: *d }, w)
                    })
                })
                .collect()
        });
    }

    /// `(A B)_e C → Σ_f F^{ef} A (B C)_f`.
    fn f_right(&mut self, addr: &[bool]) {
        self.apply(addr, &|g, t| {
            let LTree::Node { l, r: c, charge: d } = t else { panic!("F-move at a leaf") };
            let LTree::Node { l: a, r: b, charge: e } = l.as_ref() else { panic!("F-move needs a left node") };
            let (ca, cb, cc) = (a.charge(), b.charge(), c.charge());
            g.fuse(cb, cc)
                .into_iter()
                .filter_map(|f| {
                    let w = g.f_coeff(ca, cb, cc, *d, *e, f);
                    (w != 0.0).then(|| {
                        let bc = LTree::Node { l: b.clone(), r: c.clone(), charge: f };
                        (LTree::Node { l: a.clone(), r: Box::new(bc), charge: *d }, w)
                    })
                })
                .collect()
        });
    }

    /// `(A B)_c → R(a, b, c) (B A)_c`.
    fn exchange(&mut self, addr: &[bool]) {
        self.apply(addr, &|g, t| {
            let LTree::Node { l, r, charge } = t else { panic!("exchange at a leaf") };
            let w = g.r_coeff(l.charge(), r.charge(), *charge);
            vec![(LTree::Node { l: r.clone(), r: l.clone(), charge: *charge }, w)]
        });
    }
}

/// Order in which a tree is rotated into the left comb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CombOrder {
    /// Rotate at the root until its right child is a leaf, then descend.
    #[default]
    RootFirst,
    /// Normalize both subtrees first, then rotate at the root.
    DeepestFirst,
}

/// How a permutation is written as adjacent exchanges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SwapOrder {
    #[default]
    Bubble,
    Selection,
    /// Bubble sort with random cancelling pairs of exchanges inserted.
    Padded(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct MoveOrder {
    pub comb: CombOrder,
    pub swaps: SwapOrder,
}

fn to_comb(state: &mut State, order: CombOrder) {
    fn is_leaf(t: &LTree) -> bool {
        matches!(t, LTree::Leaf { .. })
    }
    fn right_is_node(state: &State, addr: &[bool]) -> bool {
        match state.shape_tree().at(addr) {
            LTree::Node { r, .. } => !is_leaf(r),
            LTree::Leaf { .. } => false,
        }
    }
    fn root_first(state: &mut State) {
        let mut addr: Vec<bool> = Vec::new();
        while !is_leaf(state.shape_tree().at(&addr)) {
            while right_is_node(state, &addr) {
                state.f_left(&addr);
            }
            addr.push(false);
        }
    }
    fn deepest_first(state: &mut State, addr: &mut Vec<bool>) {
        if is_leaf(state.shape_tree().at(addr)) {
            return;
        }
        addr.push(false);
        deepest_first(state, addr);
        addr.pop();
        addr.push(true);
        deepest_first(state, addr);
        addr.pop();
        while right_is_node(state, addr) {
            state.f_left(addr);
            addr.push(false);
            deepest_first(state, addr);
            addr.pop();
        }
    }
    match order {
        CombOrder::RootFirst => root_first(state),
        CombOrder::DeepestFirst => deepest_first(state, &mut Vec::new()),
    }
}

/// Exchanges comb positions `i` and `i+1` of a `k`-leaf left comb.
fn comb_exchange(state: &mut State, k: usize, i: usize) {
    let node = |j: usize| vec![false; k - 1 - j];
    if i == 0 {
        state.exchange(&node(1));
    } else {
        let a = node(i + 1);
        state.f_right(&a);
        let mut inner = a.clone();
        inner.push(true);
        state.exchange(&inner);
        state.f_left(&a);
    }
}

/// Adjacent exchanges turning `current` into `target` (both lists of slots).
fn exchange_sequence(current: &[usize], target: &[usize], order: SwapOrder) -> Vec<usize> {
    let rank: HashMap<usize, usize> = target.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut cur: Vec<usize> = current.iter().map(|s| rank[s]).collect();
    let mut seq = Vec::new();
    let k = cur.len();
    match order {
        SwapOrder::Bubble | SwapOrder::Padded(_) => {
            let mut rng = match order {
                SwapOrder::Padded(seed) => Some(rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
                _ => None,
            };
            loop {
                let mut changed = false;
                for i in 0..k.saturating_sub(1) {
                    if let Some(rng) = rng.as_mut() {
                        if rng.gen_bool(0.3) {
                            let j = rng.gen_range(0..k - 1);
                            seq.push(j);
                            seq.push(j);
                        }
                    }
                    if cur[i] > cur[i + 1] {
                        cur.swap(i, i + 1);
                        seq.push(i);
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        SwapOrder::Selection => {
            for pos in 0..k {
                let j = cur.iter().position(|&x| x == pos).unwrap();
                for i in (pos..j).rev() {
                    cur.swap(i, i + 1);
                    seq.push(i);
                }
            }
        }
    }
    seq
}

/// Comb coefficients of one labelled tree, with leaves reordered to `target`.
fn comb_expansion(g: ChargeSystem, start: LTree, target: &[usize], order: MoveOrder) -> Vec<(SectorPath, f64)> {
    let mut state = State::single(g, start);
    to_comb(&mut state, order.comb);
    let (slots, _, _) = state.shape_tree().flatten();
    let k = slots.len();
    for i in exchange_sequence(&slots, target, order.swaps) {
        comb_exchange(&mut state, k, i);
    }
    let mut out: Vec<(SectorPath, f64)> = state
        .terms
        .into_iter()
        .map(|(t, c)| {
            let (slots, tree, path) = t.flatten();
            debug_assert_eq!(slots, target);
            debug_assert!(tree.is_left_comb());
            (path, c)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// The sparse map `P'_{p'} = Σ_p Γ[p, p'] P_p` between two tree decompositions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMap {
    pub system: ChargeSystem,
    pub input_tree: FusionTree,
    pub output_tree: FusionTree,
    /// New leaf `k` is old leaf `perm[k]`.
    pub perm: Vec<usize>,
    pub root: Charge,
    pub inputs: Vec<SectorPath>,
    pub outputs: Vec<SectorPath>,
    /// `(input index, output index, coefficient)`, sorted by input.
    pub entries: Vec<(usize, usize, f64)>,
}

impl GammaMap {
    pub fn input_index(&self, p: &SectorPath) -> Option<usize> {
        self.inputs.binary_search(p).ok()
    }

    /// Output paths and coefficients reached from input `i`.
    pub fn row(&self, i: usize) -> &[(usize, usize, f64)] {
        let start = self.entries.partition_point(|e| e.0 < i);
        let end = self.entries.partition_point(|e| e.0 <= i);
        &self.entries[start..end]
    }

    /// Coefficient between two paths (0 if absent).
    pub fn coefficient(&self, input: &SectorPath, output: &SectorPath) -> f64 {
        let (Some(i), Ok(o)) = (self.input_index(input), self.outputs.binary_search(output)) else { return 0.0 };
        self.row(i).iter().find(|e| e.1 == o).map_or(0.0, |e| e.2)
    }

    /// Applies the map to a vector of path amplitudes indexed like `inputs`.
    pub fn apply_vector(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs.len()];
        for &(i, o, c) in &self.entries {
            out[o] += c * v[i];
        }
        out
    }

    /// The transposed map, read from outputs back to inputs.
    pub fn transpose(&self) -> GammaMap {
        let inv = invert(&self.perm);
        let mut entries: Vec<_> = self.entries.iter().map(|&(i, o, c)| (o, i, c)).collect();
        entries.sort_by_key(|a| (a.0, a.1));
        GammaMap {
            system: self.system,
            input_tree: self.output_tree.clone(),
            output_tree: self.input_tree.clone(),
            perm: inv,
            root: self.root,
            inputs: self.outputs.clone(),
            outputs: self.inputs.clone(),
            entries,
        }
    }

    /// Composition `other ∘ self`.
    pub fn then(&self, other: &GammaMap) -> Result<GammaMap, Error> {
        if self.outputs != other.inputs {
            return Err(Error::Structure("composed maps do not share a path space".into()));
        }
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, m, c) in &self.entries {
            for &(_, o, d) in other.row(m) {
                *acc.entry((i, o)).or_insert(0.0) += c * d;
            }
        }
        Ok(GammaMap {
            system: self.system,
            input_tree: self.input_tree.clone(),
            output_tree: other.output_tree.clone(),
            perm: other.perm.iter().map(|&k| self.perm[k]).collect(),
            root: self.root,
            inputs: self.inputs.clone(),
            outputs: other.outputs.clone(),
            entries: acc.into_iter().filter(|(_, c)| c.abs() > 1e-15).map(|((i, o), c)| (i, o, c)).collect(),
        })
    }

    /// Largest deviation of this map from the identity.
    pub fn identity_deviation(&self) -> f64 {
        if self.inputs != self.outputs {
            return f64::INFINITY;
        }
        let mut dense: HashMap<(usize, usize), f64> = HashMap::new();
        for &(i, o, c) in &self.entries {
            *dense.entry((i, o)).or_insert(0.0) += c;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.inputs.len() {
            worst = worst.max((dense.get(&(i, i)).copied().unwrap_or(0.0) - 1.0).abs());
        }
        for (&(i, o), &c) in &dense {
            if i != o {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// Largest entrywise difference to another map over the same paths.
    pub fn max_difference(&self, other: &GammaMap) -> f64 {
        if self.inputs != other.inputs || self.outputs != other.outputs {
            return f64::INFINITY;
        }
        let mut diff: HashMap<(usize, usize), f64> = HashMap::new();
        for &(i, o, c) in &self.entries {
            *diff.entry((i, o)).or_insert(0.0) += c;
        }
        for &(i, o, c) in &other.entries {
            *diff.entry((i, o)).or_insert(0.0) -= c;
        }
        diff.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (k, &x) in p.iter().enumerate() {
        inv[x] = k;
    }
    inv
}

pub fn check_permutation(p: &[usize], k: usize) -> Result<(), Error> {
    let mut seen = vec![false; k];
    if p.len() != k {
        return Err(Error::InvalidPermutation(format!("{p:?} has length {} but there are {k} legs", p.len())));
    }
    for &x in p {
        if x >= k || seen[x] {
            return Err(Error::InvalidPermutation(format!("{p:?} is not a permutation of 0..{k}")));
        }
        seen[x] = true;
    }
    Ok(())
}

fn leaf_options(leaf_spaces: &[RepSpace]) -> Vec<Vec<Charge>> {
    leaf_spaces.iter().map(|s| s.charges().collect()).collect()
}

/// `Γ(τ, p, τ')` restricted to root `root`, built with an explicit move order.
pub fn build_gamma(
    tau: &FusionTree,
    perm: &[usize],
    tau_out: &FusionTree,
    leaf_spaces: &[RepSpace],
    root: Charge,
    order: MoveOrder,
) -> Result<GammaMap, Error> {
    let k = tau.leaves();
    if tau_out.leaves() != k {
        return Err(Error::InvalidTree(format!("trees over {k} and {} leaves", tau_out.leaves())));
    }
    if leaf_spaces.len() != k {
        return Err(Error::Structure(format!("{} leaf spaces for {k} leaves", leaf_spaces.len())));
    }
    check_permutation(perm, k)?;
    let g = leaf_spaces.first().map_or(ChargeSystem::Su2, |s| s.system());
    let options = leaf_options(leaf_spaces);
    let inputs = enumerate_with(g, tau, &options, Some(root));
    let out_options: Vec<Vec<Charge>> = perm.iter().map(|&x| options[x].clone()).collect();
    let outputs = enumerate_with(g, tau_out, &out_options, Some(root));
    let mut map = GammaMap {
        system: g,
        input_tree: tau.clone(),
        output_tree: tau_out.clone(),
        perm: perm.to_vec(),
        root,
        inputs,
        outputs,
        entries: Vec::new(),
    };
    if k <= 1 {
        // a single leaf (or none) has nothing to recouple
        map.entries = (0..map.inputs.len()).map(|i| (i, i, 1.0)).collect();
        NETWORKS_EVALUATED.fetch_add(map.entries.len() as u64, Ordering::Relaxed);
        return Ok(map);
    }

    // comb expansion of every output path, slots relabelled to new positions
    let identity: Vec<usize> = (0..k).collect();
    let mut by_comb: HashMap<SectorPath, Vec<(usize, f64)>> = HashMap::new();
    for (o, p) in map.outputs.iter().enumerate() {
        let expansion = if tau_out.is_left_comb() {
            vec![(p.clone(), 1.0)]
        } else {
            comb_expansion(g, LTree::from_path(tau_out, p), &identity, MoveOrder { comb: order.comb, swaps: SwapOrder::Bubble })
        };
        for (c, w) in expansion {
            by_comb.entry(c).or_default().push((o, w));
        }
    }

    let mut entries = Vec::new();
    for (i, p) in map.inputs.iter().enumerate() {
        let lt = LTree::from_path(tau, p);
        let expansion = if tau.is_left_comb() && perm == identity.as_slice() {
            vec![(p.clone(), 1.0)]
        } else {
            comb_expansion(g, lt, perm, order)
        };
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for (c, v) in expansion {
            if let Some(targets) = by_comb.get(&c) {
                for &(o, w) in targets {
                    *row.entry(o).or_insert(0.0) += v * w;
                }
            }
        }
        for (o, c) in row {
            if c.abs() > 1e-14 {
                entries.push((i, o, c));
            }
        }
    }
    NETWORKS_EVALUATED.fetch_add(entries.len() as u64, Ordering::Relaxed);
    map.entries = entries;
    Ok(map)
}

/// Pure recoupling `Γ(τ, τ')` for every root reachable from the leaves.
pub fn gamma_recouple(tau: &FusionTree, tau_out: &FusionTree, leaf_spaces: &[RepSpace], root: Charge) -> Result<GammaMap, Error> {
    let id: Vec<usize> = (0..tau.leaves()).collect();
    build_gamma(tau, &id, tau_out, leaf_spaces, root, MoveOrder::default())
}

/// Permuting recoupling `Γ(τ, p, τ')`.
pub fn gamma_permute(
    tau: &FusionTree,
    perm: &[usize],
    tau_out: &FusionTree,
    leaf_spaces: &[RepSpace],
    root: Charge,
) -> Result<GammaMap, Error> {
    build_gamma(tau, perm, tau_out, leaf_spaces, root, MoveOrder::default())
}

/// How the bend on a reversed leg was attached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bend {
    Cup,
    Cap,
}

/// Factor picked up when the bend on leaf charge `leaf` is absorbed into the
/// node `(leaf, sibling → parent)` (or `(sibling, leaf → parent)` when the
/// leaf is a right child). The new node couples `parent` and the reversed
/// leaf into `sibling`.
pub fn reversal_factor(g: ChargeSystem, leaf: Charge, sibling: Charge, parent: Charge, leaf_is_left: bool, bend: Bend) -> f64 {
    if g.is_abelian() {
        return 1.0;
    }
    let mut f = ((g.dim(parent) as f64) / (g.dim(sibling) as f64)).sqrt();
    if !leaf_is_left {
        f *= g.bend_sign(leaf);
    }
    if bend == Bend::Cap {
        f *= g.bend_sign(leaf);
    }
    f
}

/// Two trees joined at their leaves, optionally with crossings in between.
#[derive(Clone, Debug)]
pub struct SpinNetwork {
    pub lower_tree: FusionTree,
    pub lower_path: SectorPath,
    /// Upper leaf `k` attaches to lower leaf `perm[k]`.
    pub perm: Vec<usize>,
    pub upper_tree: FusionTree,
    pub upper_path: SectorPath,
}

/// Value of the network divided by the identity on the root, computed by
/// F-moves and exchanges only.
pub fn evaluate_spin_network(g: ChargeSystem, net: &SpinNetwork) -> Result<f64, Error> {
    let k = net.lower_tree.leaves();
    if net.upper_tree.leaves() != k || net.lower_path.len() != net.lower_tree.path_len() || net.upper_path.len() != net.upper_tree.path_len() {
        return Err(Error::UnsupportedNetwork("trees and paths do not match".into()));
    }
    check_permutation(&net.perm, k).map_err(|e| Error::UnsupportedNetwork(e.to_string()))?;
    for (kk, &x) in net.perm.iter().enumerate() {
        if net.upper_path[kk] != net.lower_path[x] {
            return Err(Error::UnsupportedNetwork(format!("leaf {kk} carries different charges above and below")));
        }
    }
    if net.lower_path.last() != net.upper_path.last() {
        return Ok(0.0);
    }
    if k <= 1 {
        return Ok(1.0);
    }
    let identity: Vec<usize> = (0..k).collect();
    let lower = comb_expansion(g, LTree::from_path(&net.lower_tree, &net.lower_path), &net.perm, MoveOrder::default());
    let upper = comb_expansion(g, LTree::from_path(&net.upper_tree, &net.upper_path), &identity, MoveOrder::default());
    let upper: HashMap<SectorPath, f64> = upper.into_iter().collect();
    NETWORKS_EVALUATED.fetch_add(1, Ordering::Relaxed);
    Ok(lower.iter().map(|(c, v)| v * upper.get(c).copied().unwrap_or(0.0)).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GammaKind {
    Recouple,
    Permute,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GammaKey {
    pub kind: GammaKind,
    pub input_tree: FusionTree,
    pub perm: Vec<usize>,
    pub output_tree: FusionTree,
    pub leaf_spaces: Vec<RepSpace>,
    pub directions: Vec<Direction>,
    pub root: Charge,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub networks_evaluated: u64,
    pub stored_maps: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format_version: u32,
    maps: Vec<(GammaKey, GammaMap)>,
}

const CACHE_FILE: &str = "gamma_cache.json";

/// Precomputed Γ maps keyed by everything that determines their layout.
pub struct GammaCache {
    maps: RwLock<HashMap<GammaKey, Arc<GammaMap>>>,
    enabled: AtomicBool,
    hits: AtomicU64,
    misses: AtomicU64,
    networks: AtomicU64,
    dir: Option<PathBuf>,
    load_warning: Option<String>,
}

impl Default for GammaCache {
    fn default() -> Self {
        GammaCache::new()
    }
}

static GLOBAL: Lazy<GammaCache> = Lazy::new(GammaCache::new);

impl GammaCache {
    pub fn new() -> GammaCache {
        GammaCache {
            maps: RwLock::new(HashMap::new()),
            enabled: AtomicBool::new(true),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            networks: AtomicU64::new(0),
            dir: None,
            load_warning: None,
        }
    }

    /// Process-wide default cache.
    pub fn global() -> &'static GammaCache {
        &GLOBAL
    }

    /// A cache persisted under `dir`. A file that cannot be read is ignored
    /// (the maps are rebuilt on demand) and the reason kept as a warning.
    pub fn with_dir(dir: impl AsRef<Path>) -> GammaCache {
        let mut cache = GammaCache::new();
        let dir = dir.as_ref().to_path_buf();
        let file = dir.join(CACHE_FILE);
        if file.exists() {
            match std::fs::read_to_string(&file).map_err(Error::from).and_then(|s| Ok(serde_json::from_str::<CacheFile>(&s)?)) {
                Ok(cf) if cf.format_version == crate::FORMAT_VERSION => {
                    let mut maps = cache.maps.write();
                    for (k, v) in cf.maps {
                        maps.insert(k, Arc::new(v));
                    }
                }
                Ok(cf) => cache.load_warning = Some(format!("cache format {} is not {}; rebuilding", cf.format_version, crate::FORMAT_VERSION)),
                Err(e) => cache.load_warning = Some(format!("corrupt gamma cache {}: {e}; rebuilding", file.display())),
            }
        }
        cache.dir = Some(dir);
        cache
    }

    pub fn load_warning(&self) -> Option<&str> {
        self.load_warning.as_deref()
    }

    pub fn set_enabled(&self, on: bool) {
        self.enabled.store(on, Ordering::Relaxed);
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled.load(Ordering::Relaxed)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            networks_evaluated: self.networks.load(Ordering::Relaxed),
            stored_maps: self.maps.read().len() as u64,
        }
    }

    pub fn clear(&self) {
        self.maps.write().clear();
    }

    /// Returns the stored map or builds, stores and returns it.
    pub fn get_or_build(&self, key: &GammaKey) -> Result<Arc<GammaMap>, Error> {
        if self.is_enabled() {
            if let Some(m) = self.maps.read().get(key) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(m.clone());
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let map = Arc::new(build_gamma(&key.input_tree, &key.perm, &key.output_tree, &key.leaf_spaces, key.root, MoveOrder::default())?);
        self.networks.fetch_add(map.entries.len() as u64, Ordering::Relaxed);
        if self.is_enabled() {
            self.maps.write().insert(key.clone(), map.clone());
        }
        Ok(map)
    }

    /// Writes the cache to its directory (no-op without one).
    pub fn save(&self) -> Result<(), Error> {
        let Some(dir) = &self.dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let maps = self.maps.read();
        let mut list: Vec<(GammaKey, GammaMap)> = maps.iter().map(|(k, v)| (k.clone(), (**v).clone())).collect();
        list.sort_by_key(|a| serde_json::to_string(&a.0).unwrap());
        let file = CacheFile { format_version: crate::FORMAT_VERSION, maps: list };
        let tmp = dir.join(format!("{CACHE_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_string(&file)?)?;
        std::fs::rename(tmp, dir.join(CACHE_FILE))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::su2_system;

    fn su2(sectors: &[(Charge, usize)]) -> RepSpace {
        RepSpace::new(su2_system(), sectors.to_vec()).unwrap()
    }

    #[test]
    fn identity_recoupling() {
        let h = su2(&[(1, 1), (2, 1)]);
        let t = FusionTree::left_comb(4);
        let m = gamma_recouple(&t, &t, &vec![h; 4], 0).unwrap();
        assert!(m.identity_deviation() < 1e-14);
    }

    #[test]
    fn three_halves_is_f() {
        let g = su2_system();
        let h = su2(&[(1, 1)]);
        let left = FusionTree::left_comb(3);
        let right = FusionTree::right_comb(3);
        let m = gamma_recouple(&left, &right, &vec![h; 3], 1).unwrap();
        // left path (½ ½ ½; e; ½), right path (½ ½ ½; f; ½)
        for e in [0, 2] {
            for f in [0, 2] {
                let c = m.coefficient(&vec![1, 1, 1, e, 1], &vec![1, 1, 1, f, 1]);
                assert!((c - g.f_coeff(1, 1, 1, 1, e, f)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exchange_of_two_halves() {
        let h = su2(&[(1, 1)]);
        let t = FusionTree::left_comb(2);
        let m0 = gamma_permute(&t, &[1, 0], &t, &[h.clone(), h.clone()], 0).unwrap();
        assert_eq!(m0.entries, vec![(0, 0, -1.0)]);
        let m1 = gamma_permute(&t, &[1, 0], &t, &[h.clone(), h], 2).unwrap();
        assert_eq!(m1.entries, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn move_orders_agree() {
        let s = su2(&[(1, 1), (2, 1)]);
        let spaces = vec![s; 4];
        let tau = FusionTree::new(4, vec![(1, 2), (0, 4), (5, 3)]).unwrap();
        let out = FusionTree::new(4, vec![(0, 1), (2, 3), (4, 5)]).unwrap();
        let p = [0, 2, 1, 3];
        let a = build_gamma(&tau, &p, &out, &spaces, 2, MoveOrder::default()).unwrap();
        for comb in [CombOrder::RootFirst, CombOrder::DeepestFirst] {
            for swaps in [SwapOrder::Bubble, SwapOrder::Selection, SwapOrder::Padded(7)] {
                let b = build_gamma(&tau, &p, &out, &spaces, 2, MoveOrder { comb, swaps }).unwrap();
                assert!(a.max_difference(&b) < 1e-12);
            }
        }
    }

    #[test]
    fn loop_network_is_one() {
        let t = FusionTree::left_comb(2);
        let net = SpinNetwork { lower_tree: t.clone(), lower_path: vec![2, 2, 2], perm: vec![0, 1], upper_tree: t, upper_path: vec![2, 2, 2] };
        assert!((evaluate_spin_network(su2_system(), &net).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reversal_factor_rank_two() {
        let g = su2_system();
        for c in 0..5 {
            let f = reversal_factor(g, c, c, 0, true, Bend::Cup);
            assert!((f - 1.0 / ((c + 1) as f64).sqrt()).abs() < 1e-15);
        }
        assert_eq!(reversal_factor(g, 0, 2, 2, true, Bend::Cup), 1.0);
    }
}
