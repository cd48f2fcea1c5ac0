//! Heisenberg chain: gates, exact diagonalization and a one-layer SU(2) MERA.
//!
//! The Hamiltonian throughout is `H = Σ_i 4 S_i·S_{i+1}` on spin-½ sites.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block_linalg::{blockdiag_to_tree, tree_to_blockdiag, BlockDiagMatrix};
use crate::charge::{su2_system, Charge, ChargeSystem};
use crate::dense::{fuser, DenseTensor};
use crate::fusion_tree::{FusionTree, Shape};
use crate::gamma::{build_gamma, GammaCache, GammaMap, MoveOrder};
use crate::rep_space::{space_generators, RepSpace};
use crate::sym_tensor::{Direction, FusedLeg, SymTensor};
use crate::Error;

use Direction::{In, Out};

fn spin_half() -> RepSpace {
    RepSpace::new(su2_system(), vec![(1, 1)]).unwrap()
}

/// Site of two spin-½: total spin 0 and 1, once each.
pub fn blocked_site() -> RepSpace {
    RepSpace::new(su2_system(), vec![(0, 1), (2, 1)]).unwrap()
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

fn dot_ops(a: &[DMatrix<Complex64>; 3], b: &[DMatrix<Complex64>; 3]) -> DMatrix<Complex64> {
    (0..3).map(|k| kron(&a[k], &b[k])).fold(DMatrix::zeros(a[0].nrows() * b[0].nrows(), a[0].ncols() * b[0].ncols()), |acc, m| acc + m)
}

fn real_part(m: &DMatrix<Complex64>) -> Result<DMatrix<f64>, Error> {
    let imag = m.iter().fold(0.0f64, |x, z| x.max(z.im.abs()));
    if imag > 1e-12 {
        return Err(Error::Numerical(format!("operator has imaginary part {imag:.2e}")));
    }
    Ok(m.map(|z| z.re))
}

/// Two-site gate `[out, out, in, in]` from a dense `(out pair) × (in pair)` matrix.
fn gate_from_matrix(site: &RepSpace, h: &DMatrix<f64>, tol: f64) -> Result<SymTensor, Error> {
    let n = site.total_dim();
    let dense = DenseTensor::from_fn(vec![n, n, n, n], |i| h[(i[0] * n + i[1], i[2] * n + i[3])]);
    SymTensor::from_dense(&dense, vec![site.clone(); 4], vec![Out, Out, In, In], FusionTree::left_comb(4), 0, tol)
}

/// `ĥ = 4 (Jx⊗Jx + Jy⊗Jy + Jz⊗Jz)` on two copies of `site`.
pub fn heisenberg_gate(site: &RepSpace) -> Result<SymTensor, Error> {
    if site.system() != ChargeSystem::Su2 {
        return Err(Error::NotSu2);
    }
    let j = space_generators(site)?;
    let h = real_part(&dot_ops(&j, &j))? * 4.0;
    gate_from_matrix(site, &h, 1e-12)
}

/// Spin operators of the two constituent spins of a blocked site, in the
/// blocked site's basis.
pub fn blocked_site_spins() -> Result<[[DMatrix<Complex64>; 3]; 2], Error> {
    let half = spin_half();
    let f = fuser(&[half.clone(), half.clone()], &[Out, Out], &FusionTree::left_comb(2), Out)?;
    let u = f.matrix.map(|x| Complex64::new(x, 0.0));
    let s = space_generators(&half)?;
    let id = DMatrix::<Complex64>::identity(2, 2);
    let conj = |m: DMatrix<Complex64>| u.transpose() * m * &u;
    let first = [conj(kron(&s[0], &id)), conj(kron(&s[1], &id)), conj(kron(&s[2], &id))];
    let second = [conj(kron(&id, &s[0])), conj(kron(&id, &s[1])), conj(kron(&id, &s[2]))];
    Ok([first, second])
}

/// Gate between two blocked sites `(1 2)(3 4)` so that summing it over the
/// bonds of a ring of blocked sites gives the spin-½ ring Hamiltonian:
/// `4 S2·S3 + 2 S1·S2 + 2 S3·S4`.
pub fn blocked_chain_gate() -> Result<SymTensor, Error> {
    let [a, b] = blocked_site_spins()?;
    let id = DMatrix::<Complex64>::identity(4, 4);
    let inner = |x: &[DMatrix<Complex64>; 3], y: &[DMatrix<Complex64>; 3]| -> DMatrix<Complex64> {
        (0..3).map(|k| &x[k] * &y[k]).fold(DMatrix::zeros(4, 4), |acc, m| acc + m)
    };
    let intra = inner(&a, &b);
    let h = dot_ops(&b, &a) * Complex64::new(4.0, 0.0) + (kron(&intra, &id) + kron(&id, &intra)) * Complex64::new(2.0, 0.0);
    gate_from_matrix(&blocked_site(), &real_part(&h)?, 1e-12)
}

/// Energies of one total-spin sector, ascending; each is `2J+1`-fold degenerate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSpectrum {
    pub twice_j: Charge,
    pub energies: Vec<f64>,
}

/// Left comb over `l` leaves with leaves `i, i+1` fused first.
fn paired_tree(l: usize, i: usize) -> FusionTree {
    let mut s = if i == 0 { Shape::pair(Shape::Leaf(0), Shape::Leaf(1)) } else { Shape::Leaf(0) };
    let mut next = if i == 0 { 2 } else { 1 };
    while next < l {
        if next == i {
            s = Shape::pair(s, Shape::pair(Shape::Leaf(i), Shape::Leaf(i + 1)));
            next += 2;
        } else {
            s = Shape::pair(s, Shape::Leaf(next));
            next += 1;
        }
    }
    FusionTree::from_shape(&s)
}

/// Adds `Γ D Γᵀ` to `h`, with `D` the spin-½ pair energy on node `pair_id`.
fn add_bond(h: &mut DMatrix<f64>, gm: &GammaMap, pair_id: usize) {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); gm.outputs.len()];
    for &(i, o, c) in &gm.entries {
        cols[o].push((i, c));
    }
    for (o, col) in cols.iter().enumerate() {
        let j = gm.outputs[o][pair_id] as f64 / 2.0;
        let d = 2.0 * j * (j + 1.0) - 3.0;
        for &(i, a) in col {
            for &(k, b) in col {
                h[(i, k)] += a * d * b;
            }
        }
    }
}

/// Hamiltonian of the spin-½ chain in the left-comb coupled basis with total spin `twice_j/2`.
pub fn blocked_hamiltonian(l: usize, periodic: bool, twice_j: Charge) -> Result<(Vec<Vec<Charge>>, DMatrix<f64>), Error> {
    if l < 2 {
        return Err(Error::Structure("the chain needs at least two spins".into()));
    }
    let spaces = vec![spin_half(); l];
    let comb = FusionTree::left_comb(l);
    let id: Vec<usize> = (0..l).collect();
    let base = build_gamma(&comb, &id, &comb, &spaces, twice_j, MoveOrder::default())?;
    let n = base.inputs.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..l - 1 {
        let tau = paired_tree(l, i);
        let gm = build_gamma(&comb, &id, &tau, &spaces, twice_j, MoveOrder::default())?;
        // the pair node is the one spanning leaves i, i+1
        let pair_id = (0..tau.nodes().len()).map(|k| l + k).find(|&nid| tau.nodes()[nid - l] == (i, i + 1)).unwrap();
        add_bond(&mut h, &gm, pair_id);
    }
    if periodic && l > 2 {
        let mut perm = vec![l - 1];
        perm.extend(0..l - 1);
        let gm = build_gamma(&comb, &perm, &comb, &spaces, twice_j, MoveOrder::default())?;
        add_bond(&mut h, &gm, l);
    }
    Ok((base.inputs, h))
}

/// Sector-resolved spectrum from the coupled basis. `sectors` lists
/// `2J` values; `None` means every reachable sector.
pub fn exact_diag(l: usize, periodic: bool, sectors: Option<&[Charge]>) -> Result<Vec<SectorSpectrum>, Error> {
    if l > 24 {
        return Err(Error::TooLarge(1 << l.min(62)));
    }
    let all: Vec<Charge> = ((l % 2) as Charge..=l as Charge).step_by(2).collect();
    let wanted: Vec<Charge> = sectors.map_or(all.clone(), |s| s.to_vec());
    let mut out = Vec::new();
    for tj in wanted {
        if !all.contains(&tj) {
            out.push(SectorSpectrum { twice_j: tj, energies: Vec::new() });
            continue;
        }
        let (_, h) = blocked_hamiltonian(l, periodic, tj)?;
        let mut e: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(SectorSpectrum { twice_j: tj, energies: e });
    }
    Ok(out)
}

/// Full spectrum with every multiplet repeated `2J+1` times, ascending.
pub fn with_multiplicities(spectra: &[SectorSpectrum]) -> Vec<f64> {
    let mut v: Vec<f64> = spectra.iter().flat_map(|s| s.energies.iter().flat_map(move |&e| std::iter::repeat_n(e, s.twice_j as usize + 1))).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Dense diagonalization in the product basis of `l` spins.
pub fn exact_diag_dense(l: usize, periodic: bool) -> Result<Vec<f64>, Error> {
    let n = 1usize << l;
    if n * n > crate::rep_space::DENSE_LIMIT * 2 {
        return Err(Error::TooLarge(n * n));
    }
    let mut h = DMatrix::<f64>::zeros(n, n);
    let bonds: Vec<(usize, usize)> = (0..l - 1).map(|i| (i, i + 1)).chain((periodic && l > 2).then_some((l - 1, 0))).collect();
    for s in 0..n {
        for &(a, b) in &bonds {
            let (x, y) = ((s >> a) & 1, (s >> b) & 1);
            if x == y {
                h[(s, s)] += 1.0;
            } else {
                h[(s, s)] -= 1.0;
                h[(s ^ (1 << a) ^ (1 << b), s)] += 2.0;
            }
        }
    }
    let mut e: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(e)
}

// ---------------------------------------------------------------- MERA

/// Run configuration shared by the MERA solver and the command line.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeraConfig {
    /// Number of layers; the chain has `2·3^q` blocked sites.
    pub q: usize,
    /// Bond space above each layer as `[twice_j, d]` pairs; a single entry is reused.
    pub levels: Vec<Vec<(Charge, usize)>>,
    pub twice_j: Charge,
    pub chi_top: usize,
    pub sweeps: usize,
    pub seed: u64,
    #[serde(default)]
    pub cache_dir: Option<String>,
    /// Stop early once a sweep lowers the energy by less than this.
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    /// Independent starts from `seed, seed+1, …`; the lowest energy is kept.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-11
}

impl MeraConfig {
    /// Bond spaces of the χ = 4 and χ = 17 assignments.
    pub fn chi4() -> Vec<(Charge, usize)> {
        vec![(0, 1), (2, 1)]
    }

    pub fn chi17() -> Vec<(Charge, usize)> {
        vec![(0, 3), (2, 3), (4, 1)]
    }
}

#[derive(Clone, Debug)]
pub struct MeraLayer {
    /// Disentangler `[out, out, in, in]`.
    pub u: SymTensor,
    /// Isometry `[out, out, out, in]` from one upper site to three lower ones.
    pub w: SymTensor,
}

#[derive(Clone, Debug)]
pub struct MeraState {
    pub site: RepSpace,
    pub bonds: Vec<RepSpace>,
    pub layers: Vec<MeraLayer>,
    /// Top tensor `[out, out, in]`; the last leg carries `(J, χ_top)`.
    pub top: SymTensor,
    pub twice_j: Charge,
    pub chi_top: usize,
}

fn random_isometry(m: &BlockDiagMatrix, rng: &mut ChaCha8Rng, warnings: &mut Vec<String>) -> BlockDiagMatrix {
    let mut out = m.clone();
    for (&c, blk) in m.blocks() {
        let (r, k) = blk.shape();
        if r < k {
            warnings.push(format!("charge {c}: {r} states cannot hold an isometry onto {k}"));
        }
        let a = DMatrix::from_fn(r, k, |_, _| StandardNormal.sample(rng));
        let q = a.qr().q();
        let mut b = DMatrix::zeros(r, k);
        let cols = q.ncols().min(k);
        b.columns_mut(0, cols).copy_from(&q.columns(0, cols));
        *out.block_mut(c).unwrap() = b;
    }
    out
}

/// Splits a tensor's legs into `(rows, cols)`, returning its matrix form.
fn matrix_form(t: &SymTensor, rows: usize, cache: &GammaCache) -> Result<(BlockDiagMatrix, Vec<FusedLeg>), Error> {
    let groups = vec![(0..rows).collect::<Vec<_>>(), (rows..t.rank()).collect()];
    let (f, legs) = t.fuse_with(&groups, None, None, cache)?;
    Ok((tree_to_blockdiag(&f)?, legs))
}

fn from_matrix_form(m: &BlockDiagMatrix, legs: &[FusedLeg], tree: &FusionTree, cache: &GammaCache) -> Result<SymTensor, Error> {
    let t = blockdiag_to_tree(m, [legs[0].dir, legs[1].dir])?;
    let t = t.split_with(1, &legs[1], None, cache)?;
    t.split_with(0, &legs[0], Some(tree), cache)
}

fn isometric(template: &SymTensor, rows: usize, rng: &mut ChaCha8Rng, warnings: &mut Vec<String>, cache: &GammaCache) -> Result<SymTensor, Error> {
    let (m, legs) = matrix_form(template, rows, cache)?;
    from_matrix_form(&random_isometry(&m, rng, warnings), &legs, template.tree(), cache)
}

/// Largest deviation of `XᵀX` from the identity, with `X` the matrix form.
pub fn isometry_residual(t: &SymTensor, rows: usize, cache: &GammaCache) -> Result<f64, Error> {
    let (m, _) = matrix_form(t, rows, cache)?;
    let p = m.transpose().matmul(&m)?;
    let id = BlockDiagMatrix::identity(m.cols().clone());
    let mut worst: f64 = 0.0;
    for (c, b) in p.blocks() {
        worst = worst.max((b - id.block(*c).unwrap()).amax());
    }
    Ok(worst)
}

/// Random isometric state for the given layer bond spaces.
pub fn mera_build(q: usize, levels: &[Vec<(Charge, usize)>], twice_j: Charge, chi_top: usize, seed: u64) -> Result<(MeraState, Vec<String>), Error> {
    let cache = GammaCache::global();
    if q == 0 || levels.is_empty() || chi_top == 0 {
        return Err(Error::Structure("need at least one layer, one bond assignment and χ_top ≥ 1".into()));
    }
    let g = su2_system();
    let site = blocked_site();
    let bonds: Vec<RepSpace> = (0..q).map(|i| RepSpace::from_unsorted(g, levels[i.min(levels.len() - 1)].clone())).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut layers = Vec::new();
    let mut below = site.clone();
    for bond in &bonds {
        let ut = SymTensor::zeros(vec![below.clone(); 4], vec![Out, Out, In, In], FusionTree::left_comb(4), 0)?;
        let wt = SymTensor::zeros(vec![below.clone(), below.clone(), below.clone(), bond.clone()], vec![Out, Out, Out, In], FusionTree::left_comb(4), 0)?;
        let u = isometric(&ut, 2, &mut rng, &mut warnings, cache)?;
        let w = isometric(&wt, 3, &mut rng, &mut warnings, cache)?;
        layers.push(MeraLayer { u, w });
        below = bond.clone();
    }
    let top_space = RepSpace::new(g, vec![(twice_j, chi_top)])?;
    let tt = SymTensor::zeros(vec![below.clone(), below, top_space], vec![Out, Out, In], FusionTree::left_comb(3), 0)?;
    let top = isometric(&tt, 2, &mut rng, &mut warnings, cache)?;
    Ok((MeraState { site, bonds, layers, top, twice_j, chi_top }, warnings))
}

type Labeled = (SymTensor, Vec<&'static str>);

/// Contracts every label shared by the two operands.
fn contract_labeled(a: &Labeled, b: &Labeled, cache: &GammaCache) -> Result<Labeled, Error> {
    let pairs: Vec<(usize, usize)> = a.1.iter().enumerate().filter_map(|(i, l)| b.1.iter().position(|m| m == l).map(|j| (i, j))).collect();
    let t = a.0.contract_with(&b.0, &pairs, cache)?;
    let labels = a.1.iter().filter(|l| !b.1.contains(l)).chain(b.1.iter().filter(|l| !a.1.contains(l))).copied().collect();
    Ok((t, labels))
}

fn arrange(t: &Labeled, order: &[&'static str], cache: &GammaCache) -> Result<SymTensor, Error> {
    let perm: Vec<usize> = order.iter().map(|l| t.1.iter().position(|m| m == l).expect("label present")).collect();
    t.0.permute_with(&perm, &FusionTree::left_comb(order.len()), cache)
}

const SITES: [&str; 6] = ["s0", "s1", "s2", "s3", "s4", "s5"];
const PSI: [&str; 7] = ["s0", "s1", "s2", "s3", "s4", "s5", "T"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Top,
    WA,
    WB,
    U1,
    U2,
}

fn labeled(state: &MeraState, slot: Slot) -> Labeled {
    let l = &state.layers[0];
    match slot {
        Slot::Top => (state.top.clone(), vec!["a", "b", "T"]),
        Slot::WA => (l.w.clone(), vec!["x0", "s1", "x2", "a"]),
        Slot::WB => (l.w.clone(), vec!["x3", "s4", "x5", "b"]),
        Slot::U1 => (l.u.clone(), vec!["s2", "s3", "x2", "x3"]),
        Slot::U2 => (l.u.clone(), vec!["s5", "s0", "x5", "x0"]),
    }
}

/// Contracts all tensors but `skip`, in an order that keeps every step connected.
fn network_without(state: &MeraState, skip: Option<Slot>, cache: &GammaCache) -> Result<Labeled, Error> {
    let order = [Slot::Top, Slot::WA, Slot::WB, Slot::U1, Slot::U2];
    let order: Vec<Slot> = match skip {
        Some(Slot::Top) => vec![Slot::WA, Slot::U1, Slot::WB, Slot::U2],
        Some(s) => order.into_iter().filter(|&x| x != s).collect(),
        None => order.to_vec(),
    };
    let mut acc = labeled(state, order[0]);
    for &s in &order[1..] {
        acc = contract_labeled(&acc, &labeled(state, s), cache)?;
    }
    Ok(acc)
}

fn apply_hamiltonian(psi: &SymTensor, gate: &SymTensor, shift: f64, cache: &GammaCache) -> Result<SymTensor, Error> {
    let mut out = psi.scale(-shift * 6.0);
    for b in 0..6 {
        let (x, y) = (b, (b + 1) % 6);
        let h = contract_labeled(&(gate.clone(), vec!["o1", "o2", SITES[x], SITES[y]]), &(psi.clone(), PSI.to_vec()), cache)?;
        let mut labels = h.1.clone();
        labels[0] = SITES[x];
        labels[1] = SITES[y];
        out = out.add(&arrange(&(h.0, labels), &PSI, cache)?)?;
    }
    Ok(out)
}

struct Evaluation {
    psi: SymTensor,
    hpsi: SymTensor,
    energy: f64,
}

fn evaluate(state: &MeraState, gate: &SymTensor, shift: f64, cache: &GammaCache) -> Result<Evaluation, Error> {
    let psi = arrange(&network_without(state, None, cache)?, &PSI, cache)?;
    let hpsi = apply_hamiltonian(&psi, gate, shift, cache)?;
    let energy = psi.dot(&hpsi) / psi.dot(&psi) + 6.0 * shift;
    if !energy.is_finite() {
        return Err(Error::Numerical("energy is not finite".into()));
    }
    Ok(Evaluation { psi, hpsi, energy })
}

/// Derivative of `⟨ψ|H|ψ⟩` with respect to the ket copies of `slots`,
/// shaped like the tensor in those slots.
fn environment(state: &MeraState, slots: &[Slot], hpsi: &SymTensor, cache: &GammaCache) -> Result<SymTensor, Error> {
    let bra: Labeled = (hpsi.dagger()?, PSI.to_vec());
    let mut total: Option<SymTensor> = None;
    for &s in slots {
        let rest = network_without(state, Some(s), cache)?;
        let env = contract_labeled(&bra, &rest, cache)?;
        let env = (env.0.dagger()?, env.1);
        let own = labeled(state, s);
        let e = arrange(&env, &own.1, cache)?;
        total = Some(match total {
            Some(t) => t.add(&e)?,
            None => e,
        });
    }
    Ok(total.unwrap())
}

/// One energy evaluation per sweep, plus constraint and cache diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub energy: f64,
    pub isometry_residual: f64,
    pub invariance_residual: f64,
    pub new_networks: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeraResult {
    /// Mean energy per state of the top multiplets.
    pub energy: f64,
    /// Energies of the top multiplets (each `2J+1`-fold degenerate).
    pub top_energies: Vec<f64>,
    pub trace: Vec<SweepRecord>,
    pub warnings: Vec<String>,
}

fn set_slot(state: &mut MeraState, slot: Slot, t: SymTensor) {
    match slot {
        Slot::Top => state.top = t,
        Slot::WA | Slot::WB => state.layers[0].w = t,
        Slot::U1 | Slot::U2 => state.layers[0].u = t,
    }
}

/// Polar step for a shared tensor, shrinking the step until the energy does
/// not rise. Returns the new energy.
fn update_isometry(
    state: &mut MeraState,
    slots: &[Slot],
    rows: usize,
    gate: &SymTensor,
    shift: f64,
    current: &Evaluation,
    cache: &GammaCache,
) -> Result<Evaluation, Error> {
    let env = environment(state, slots, &current.hpsi, cache)?;
    let old = labeled(state, slots[0]).0;
    let (g, legs) = matrix_form(&env, rows, cache)?;
    let (x, _) = matrix_form(&old, rows, cache)?;
    let target = g.polar()?.scale(-1.0);
    let mut beta = 1.0;
    for _ in 0..12 {
        let mix = x.scale(1.0 - beta).add(&target.scale(beta))?.polar()?;
        let cand = from_matrix_form(&mix, &legs, old.tree(), cache)?;
        let mut trial = state.clone();
        set_slot(&mut trial, slots[0], cand);
        let ev = evaluate(&trial, gate, shift, cache)?;
        if ev.energy <= current.energy + 1e-13 {
            *state = trial;
            return Ok(ev);
        }
        beta *= 0.5;
    }
    Ok(Evaluation { psi: current.psi.clone(), hpsi: current.hpsi.clone(), energy: current.energy })
}

/// Lowest `χ_top` multiplets of the effective Hamiltonian on the top tensor.
fn update_top(state: &mut MeraState, gate: &SymTensor, shift: f64, cache: &GammaCache) -> Result<(Evaluation, Vec<f64>), Error> {
    let (m, legs) = matrix_form(&state.top, 2, cache)?;
    let tj = state.twice_j;
    let Some(blk) = m.block(tj) else {
        return Err(Error::Structure(format!("top bonds cannot couple to total spin {}", tj as f64 / 2.0)));
    };
    let n = blk.nrows();
    let one = RepSpace::new(su2_system(), vec![(tj, 1)])?;
    let legs1 = {
        let mut l = legs.clone();
        l[1] = FusedLeg::new(vec![one.clone()], vec![In], FusionTree::left_comb(1))?;
        l
    };
    let mut probe = state.clone();
    let mut psis = Vec::with_capacity(n);
    let mut hpsis = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = BlockDiagMatrix::zeros(m.rows().clone(), one.clone())?;
        e.block_mut(tj).unwrap()[(i, 0)] = 1.0;
        probe.top = from_matrix_form(&e, &legs1, state.top.tree(), cache)?;
        let ev = evaluate(&probe, gate, shift, cache)?;
        psis.push(ev.psi);
        hpsis.push(ev.hpsi);
    }
    let gram = DMatrix::from_fn(n, n, |i, j| psis[i].dot(&psis[j]));
    let heff = DMatrix::from_fn(n, n, |i, j| psis[i].dot(&hpsis[j]));
    let scale = gram[(0, 0)];
    let heff = (&heff + heff.transpose()) * (0.5 / scale);
    let eig = heff.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let k = state.chi_top.min(n);
    let mut top = m.clone();
    let tb = top.block_mut(tj).unwrap();
    tb.fill(0.0);
    for (col, &o) in order.iter().take(k).enumerate() {
        tb.set_column(col, &eig.eigenvectors.column(o));
    }
    state.top = from_matrix_form(&top, &legs, state.top.tree(), cache)?;
    let energies = order.iter().take(k).map(|&o| eig.eigenvalues[o] + 6.0 * shift).collect();
    Ok((evaluate(state, gate, shift, cache)?, energies))
}

fn residuals(state: &MeraState, cache: &GammaCache) -> Result<(f64, f64), Error> {
    let l = &state.layers[0];
    let iso = isometry_residual(&l.u, 2, cache)?.max(isometry_residual(&l.w, 3, cache)?).max(isometry_residual(&state.top, 2, cache)?);
    let inv = l.u.invariance_residual()?.max(l.w.invariance_residual()?).max(state.top.invariance_residual()?);
    Ok((iso, inv))
}

/// Optimizes a one-layer state for the ring of six blocked sites with
/// `gate` on every bond. Each sweep updates the disentangler, the isometry
/// and the top tensor; the energy never increases.
pub fn mera_optimize(state: &mut MeraState, gate: &SymTensor, sweeps: usize, tolerance: f64, cache: &GammaCache) -> Result<MeraResult, Error> {
    if state.layers.len() != 1 {
        return Err(Error::UnsupportedNetwork("optimization is implemented for one layer (12 spins)".into()));
    }
    let lam = tree_to_blockdiag(&{
        let (f, _) = gate.fuse_with(&[vec![0, 1], vec![2, 3]], None, None, cache)?;
        f
    })?
    .eig(true)?;
    let shift = lam.values.values().flat_map(|v| v.iter().copied()).fold(0.0f64, f64::max);
    let mut warnings = Vec::new();
    let mut trace: Vec<SweepRecord> = Vec::new();
    let mut top_energies = Vec::new();
    let mut current = evaluate(state, gate, shift, cache)?;
    for sweep in 1..=sweeps {
        let before = cache.stats().networks_evaluated;
        let start = current.energy;
        current = update_isometry(state, &[Slot::U1, Slot::U2], 2, gate, shift, &current, cache)?;
        current = update_isometry(state, &[Slot::WA, Slot::WB], 3, gate, shift, &current, cache)?;
        let (ev, te) = update_top(state, gate, shift, cache)?;
        if ev.energy > current.energy + 1e-8 {
            warnings.push(format!("sweep {sweep}: top update raised the energy by {:.3e}", ev.energy - current.energy));
        }
        current = ev;
        top_energies = te;
        let (iso, inv) = residuals(state, cache)?;
        let new_networks = cache.stats().networks_evaluated - before;
        if start < current.energy - 1e-8 {
            warnings.push(format!("sweep {sweep}: energy rose by {:.3e}", current.energy - start));
        }
        trace.push(SweepRecord { sweep, energy: current.energy, isometry_residual: iso, invariance_residual: inv, new_networks });
        if sweep > 1 && (start - current.energy).abs() < tolerance {
            break;
        }
    }
    Ok(MeraResult { energy: current.energy, top_energies, trace, warnings })
}

/// Outcome of one start of [`mera_solve`].
#[derive(Clone, Debug, Serialize)]
pub struct MeraStart {
    pub seed: u64,
    pub energy: f64,
    pub sweeps: usize,
    /// Spin networks evaluated during the first sweep and during all later ones.
    pub first_sweep_networks: u64,
    pub later_sweep_networks: u64,
}

/// Builds and optimizes the state described by `config`, restarting from
/// fresh seeds, and returns the best result with a summary of every start.
pub fn mera_solve(config: &MeraConfig, gate: &SymTensor, cache: &GammaCache) -> Result<(MeraState, MeraResult, Vec<MeraStart>), Error> {
    let mut best: Option<(MeraState, MeraResult)> = None;
    let mut starts = Vec::new();
    for r in 0..config.restarts.max(1) {
        let seed = config.seed.wrapping_add(r as u64);
        let (mut state, mut warnings) = mera_build(config.q, &config.levels, config.twice_j, config.chi_top, seed)?;
        let mut result = mera_optimize(&mut state, gate, config.sweeps, config.tolerance, cache)?;
        warnings.append(&mut result.warnings);
        result.warnings = warnings;
        starts.push(MeraStart {
            seed,
            energy: result.energy,
            sweeps: result.trace.len(),
            first_sweep_networks: result.trace.first().map_or(0, |r| r.new_networks),
            later_sweep_networks: result.trace.iter().skip(1).map(|r| r.new_networks).sum(),
        });
        if best.as_ref().is_none_or(|(_, b)| result.energy < b.energy) {
            best = Some((state, result));
        }
    }
    let (state, result) = best.unwrap();
    Ok((state, result, starts))
}

/// Energy of a state without optimizing it.
pub fn mera_energy(state: &MeraState, gate: &SymTensor) -> Result<f64, Error> {
    if state.layers.len() != 1 {
        return Err(Error::UnsupportedNetwork("energy is implemented for one layer (12 spins)".into()));
    }
    Ok(evaluate(state, gate, 0.0, GammaCache::global())?.energy)
}

/// Dense state `ψ[s0..s5, M]` of a one-layer MERA.
pub fn mera_dense_state(state: &MeraState) -> Result<DenseTensor, Error> {
    let cache = GammaCache::global();
    arrange(&network_without(state, None, cache)?, &PSI, cache)?.to_dense()
}

/// Configuration of an exact diagonalization run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdConfig {
    pub spins: usize,
    #[serde(default = "yes")]
    pub periodic: bool,
    /// Sectors as `2J`; all reachable sectors when absent.
    #[serde(default)]
    pub sectors: Option<Vec<Charge>>,
    /// Number of lowest energies reported per sector.
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default)]
    pub dense_check: bool,
}

fn yes() -> bool {
    true
}

/// Ground energies per sector, keyed by `2J`.
pub fn sector_minima(spectra: &[SectorSpectrum]) -> BTreeMap<Charge, f64> {
    spectra.iter().filter_map(|s| s.energies.first().map(|&e| (s.twice_j, e))).collect()
}
