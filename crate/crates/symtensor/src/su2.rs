//! Scalar kernels of SU(2) representation theory.
//!
//! Spins are stored doubled (`twice_j`), so half-integers are exact and can
//! be used as cache keys.  Projections are stored the same way.  Inside a
//! spin multiplet the basis is ordered by ascending `m`, i.e. index
//! `(twice_m + twice_j) / 2`.
//!
//! Clebsch-Gordan coefficients use the Condon-Shortley phase and are computed
//! from the Racah closed form.  Recoupling coefficients are built from 6-j
//! symbols, also via Racah's sum.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use parking_lot::RwLock;

/// A spin label, `j = twice_j / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Spin {
    pub twice_j: u32,
}

/// A projection label `m = twice_m / 2` of some spin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinProjection {
    pub twice_m: i32,
}

impl Spin {
    pub const ZERO: Spin = Spin { twice_j: 0 };
    pub const HALF: Spin = Spin { twice_j: 1 };
    pub const ONE: Spin = Spin { twice_j: 2 };

    pub fn from_twice(twice_j: u32) -> Spin {
        Spin { twice_j }
    }

    pub fn j(self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn dim(self) -> usize {
        self.twice_j as usize + 1
    }

    /// Projections in basis order (ascending m).
    pub fn projections(self) -> impl Iterator<Item = SpinProjection> {
        let tj = self.twice_j as i32;
        (0..=self.twice_j as i32).map(move |k| SpinProjection { twice_m: 2 * k - tj })
    }

    pub fn contains(self, m: SpinProjection) -> bool {
        m.twice_m.unsigned_abs() <= self.twice_j && (m.twice_m - self.twice_j as i32) % 2 == 0
    }
}

impl SpinProjection {
    pub fn from_twice(twice_m: i32) -> SpinProjection {
        SpinProjection { twice_m }
    }

    pub fn m(self) -> f64 {
        self.twice_m as f64 / 2.0
    }
}

/// Basis index of projection `twice_m` inside the multiplet `twice_j`.
pub fn m_index(twice_j: u32, twice_m: i32) -> usize {
    ((twice_m + twice_j as i32) / 2) as usize
}

/// Whether `c` appears in `a ⊗ b` (all arguments doubled).
pub fn triangle(ta: u32, tb: u32, tc: u32) -> bool {
    tc <= ta + tb && ta <= tb + tc && tb <= tc + ta && (ta + tb + tc).is_multiple_of(2)
}

static FACTORIALS: Lazy<Vec<f64>> = Lazy::new(|| {
    let mut f = vec![1.0f64; 171];
    for n in 1..171 {
        f[n] = f[n - 1] * n as f64;
    }
    f
});

fn fact(n: i64) -> f64 {
    debug_assert!(n >= 0);
    FACTORIALS[n as usize]
}

fn parity_sign(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

static KERNEL_EVALS: AtomicU64 = AtomicU64::new(0);

/// Number of uncached CG/6-j evaluations performed by this process.
pub fn kernel_evaluations() -> u64 {
    KERNEL_EVALS.load(Ordering::Relaxed)
}

fn racah_cg(ta: u32, tma: i32, tb: u32, tmb: i32, tc: u32, tmc: i32) -> f64 {
    if tma + tmb != tmc || !triangle(ta, tb, tc) {
        return 0.0;
    }
    if tma.unsigned_abs() > ta || tmb.unsigned_abs() > tb || tmc.unsigned_abs() > tc {
        return 0.0;
    }
    let (ta, tb, tc) = (ta as i64, tb as i64, tc as i64);
    let (tma, tmb, tmc) = (tma as i64, tmb as i64, tmc as i64);
    // all of these are integers by the parity rules
    let abc = (ta + tb - tc) / 2;
    let acb = (ta - tb + tc) / 2;
    let bca = (-ta + tb + tc) / 2;
    let s = (ta + tb + tc) / 2 + 1;
    let pref = ((tc + 1) as f64 * fact(abc) * fact(acb) * fact(bca) / fact(s)).sqrt();
    let am = (ta - tma) / 2;
    let ap = (ta + tma) / 2;
    let bm = (tb - tmb) / 2;
    let bp = (tb + tmb) / 2;
    let cm = (tc - tmc) / 2;
    let cp = (tc + tmc) / 2;
    let norm = (fact(ap) * fact(am) * fact(bp) * fact(bm) * fact(cp) * fact(cm)).sqrt();
    let k1 = (tc - tb + tma) / 2;
    let k2 = (tc - ta - tmb) / 2;
    let kmin = 0.max(-k1).max(-k2);
    let kmax = abc.min(am).min(bp);
    let mut terms = Vec::new();
    for k in kmin..=kmax {
        let den = fact(k) * fact(abc - k) * fact(am - k) * fact(bp - k) * fact(k1 + k) * fact(k2 + k);
        terms.push(parity_sign(k) / den);
    }
    pref * norm * pairwise_sum(&terms)
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// `⟨j_a m_a; j_b m_b | j_c m_c⟩`, zero when a selection rule fails.
pub fn cg_coefficient(
    ja: Spin,
    ma: SpinProjection,
    jb: Spin,
    mb: SpinProjection,
    jc: Spin,
    mc: SpinProjection,
) -> f64 {
    debug_assert!(ja.contains(ma) && jb.contains(mb));
    if !jc.contains(mc) {
        return 0.0;
    }
    if tma_ok(ma, mb, mc) && triangle(ja.twice_j, jb.twice_j, jc.twice_j) {
        let block = cg_block(ja, jb, jc);
        block.get(ma.twice_m, mb.twice_m, mc.twice_m)
    } else {
        0.0
    }
}

fn tma_ok(ma: SpinProjection, mb: SpinProjection, mc: SpinProjection) -> bool {
    ma.twice_m + mb.twice_m == mc.twice_m
}

/// All coefficients `⟨a m_a; b m_b | c m_c⟩` of one spin triple, stored densely
/// with index order `(m_a, m_b, m_c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CgBlock {
    pub ja: Spin,
    pub jb: Spin,
    pub jc: Spin,
    pub data: Vec<f64>,
}

impl CgBlock {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.ja.dim(), self.jb.dim(), self.jc.dim())
    }

    pub fn at(&self, ia: usize, ib: usize, ic: usize) -> f64 {
        let (_, db, dc) = self.shape();
        self.data[(ia * db + ib) * dc + ic]
    }

    pub fn get(&self, tma: i32, tmb: i32, tmc: i32) -> f64 {
        self.at(
            m_index(self.ja.twice_j, tma),
            m_index(self.jb.twice_j, tmb),
            m_index(self.jc.twice_j, tmc),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}

type CgKey = (u32, u32, u32);
static CG_CACHE: Lazy<RwLock<HashMap<CgKey, std::sync::Arc<CgBlock>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// Dense CG block for `(j_a, j_b → j_c)`, memoized.
pub fn cg_block(ja: Spin, jb: Spin, jc: Spin) -> std::sync::Arc<CgBlock> {
    let key = (ja.twice_j, jb.twice_j, jc.twice_j);
    if let Some(b) = CG_CACHE.read().get(&key) {
        return b.clone();
    }
    let (da, db, dc) = (ja.dim(), jb.dim(), jc.dim());
    let mut data = vec![0.0; da * db * dc];
    if triangle(ja.twice_j, jb.twice_j, jc.twice_j) {
        KERNEL_EVALS.fetch_add(1, Ordering::Relaxed);
        for (ia, ma) in ja.projections().enumerate() {
            for (ib, mb) in jb.projections().enumerate() {
                let tmc = ma.twice_m + mb.twice_m;
                if tmc.unsigned_abs() > jc.twice_j {
                    continue;
                }
                let ic = m_index(jc.twice_j, tmc);
                data[(ia * db + ib) * dc + ic] =
                    racah_cg(ja.twice_j, ma.twice_m, jb.twice_j, mb.twice_m, jc.twice_j, tmc);
            }
        }
    }
    let block = std::sync::Arc::new(CgBlock { ja, jb, jc, data });
    CG_CACHE.write().entry(key).or_insert(block).clone()
}

/// The singlet matrix `ω_j`, `(ω_j)_{m,−m} = (−1)^{j−m}/√(2j+1)`.
pub fn omega(j: Spin) -> DMatrix<f64> {
    let d = j.dim();
    let mut w = DMatrix::zeros(d, d);
    let norm = (d as f64).sqrt();
    for (i, m) in j.projections().enumerate() {
        let k = (j.twice_j as i64 - m.twice_m as i64) / 2;
        w[(i, d - 1 - i)] = parity_sign(k) / norm;
    }
    w
}

pub fn cup(j: Spin) -> DMatrix<f64> {
    omega(j) * (j.dim() as f64).sqrt()
}

pub fn cap(j: Spin) -> DMatrix<f64> {
    omega(j) * ((j.dim() as f64).sqrt() * parity_sign(j.twice_j as i64))
}

/// Racah's formula for the 6-j symbol `{a b c; d e f}` (doubled arguments).
pub fn six_j(ta: u32, tb: u32, tc: u32, td: u32, te: u32, tf: u32) -> f64 {
    if !(triangle(ta, tb, tc) && triangle(ta, te, tf) && triangle(td, tb, tf) && triangle(td, te, tc)) {
        return 0.0;
    }
    let [a, b, c, d, e, f] = [ta, tb, tc, td, te, tf].map(|x| x as i64);
    let delta = |x: i64, y: i64, z: i64| -> f64 {
        (fact((x + y - z) / 2) * fact((x - y + z) / 2) * fact((-x + y + z) / 2) / fact((x + y + z) / 2 + 1)).sqrt()
    };
    let pre = delta(a, b, c) * delta(a, e, f) * delta(d, b, f) * delta(d, e, c);
    let s1 = (a + b + c) / 2;
    let s2 = (a + e + f) / 2;
    let s3 = (d + b + f) / 2;
    let s4 = (d + e + c) / 2;
    let p1 = (a + b + d + e) / 2;
    let p2 = (a + c + d + f) / 2;
    let p3 = (b + c + e + f) / 2;
    let tmin = s1.max(s2).max(s3).max(s4);
    let tmax = p1.min(p2).min(p3);
    let mut terms = Vec::new();
    for t in tmin..=tmax {
        let den = fact(t - s1) * fact(t - s2) * fact(t - s3) * fact(t - s4) * fact(p1 - t) * fact(p2 - t) * fact(p3 - t);
        terms.push(parity_sign(t) * fact(t + 1) / den);
    }
    pre * pairwise_sum(&terms)
}

type FKey = [u32; 6];
static F_CACHE: Lazy<RwLock<HashMap<FKey, f64>>> = Lazy::new(|| RwLock::new(HashMap::new()));

/// Recoupling coefficient `F^{e f}_{a b c d}` relating `((a b)_e c)_d` to
/// `(a (b c)_f)_d`: `|a(bc)_f⟩ = Σ_e F^{ef}_{abcd} |(ab)_e c⟩`.
pub fn recoupling_f(ja: Spin, jb: Spin, jc: Spin, jd: Spin, je: Spin, jf: Spin) -> f64 {
    let key = [ja.twice_j, jb.twice_j, jc.twice_j, jd.twice_j, je.twice_j, jf.twice_j];
    if let Some(&v) = F_CACHE.read().get(&key) {
        return v;
    }
    let [ta, tb, tc, td, te, tf] = key;
    let value = if triangle(ta, tb, te) && triangle(te, tc, td) && triangle(tb, tc, tf) && triangle(ta, tf, td) {
        KERNEL_EVALS.fetch_add(1, Ordering::Relaxed);
        let phase = parity_sign(((ta + tb + tc + td) / 2) as i64);
        phase * (((te + 1) * (tf + 1)) as f64).sqrt() * six_j(ta, tb, te, tc, td, tf)
    } else {
        0.0
    };
    F_CACHE.write().insert(key, value);
    value
}

/// Phase picked up when the two fused spins of `(a b → c)` are exchanged.
pub fn swap_r(ja: Spin, jb: Spin, jc: Spin) -> f64 {
    debug_assert!(triangle(ja.twice_j, jb.twice_j, jc.twice_j));
    parity_sign(((ja.twice_j + jb.twice_j - jc.twice_j) / 2) as i64)
}

/// Spin matrices `(J_x, J_y, J_z)` of the irrep `j` in the ascending-m basis.
pub fn generators(j: Spin) -> [DMatrix<Complex64>; 3] {
    let d = j.dim();
    let jj = j.j();
    let mut jp = DMatrix::<Complex64>::zeros(d, d);
    let mut jz = DMatrix::<Complex64>::zeros(d, d);
    for (i, m) in j.projections().enumerate() {
        let mm = m.m();
        jz[(i, i)] = Complex64::new(mm, 0.0);
        if i + 1 < d {
            // ⟨m+1| J+ |m⟩
            jp[(i + 1, i)] = Complex64::new((jj * (jj + 1.0) - mm * (mm + 1.0)).sqrt(), 0.0);
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * Complex64::new(0.5, 0.0);
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    [jx, jy, jz]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(tj: u32) -> Spin {
        Spin::from_twice(tj)
    }
    fn m(tm: i32) -> SpinProjection {
        SpinProjection::from_twice(tm)
    }

    #[test]
    fn singlet_coefficients() {
        let r = 1.0 / 2f64.sqrt();
        assert!((cg_coefficient(s(1), m(1), s(1), m(-1), s(0), m(0)) - r).abs() < 1e-15);
        assert!((cg_coefficient(s(1), m(-1), s(1), m(1), s(0), m(0)) + r).abs() < 1e-15);
        assert!((cg_coefficient(s(1), m(1), s(1), m(1), s(2), m(2)) - 1.0).abs() < 1e-15);
        assert!((cg_coefficient(s(1), m(1), s(1), m(-1), s(2), m(0)) - r).abs() < 1e-15);
    }

    #[test]
    fn identity_fusion_and_selection() {
        for tj in 0..7u32 {
            for mm in s(tj).projections() {
                assert!((cg_coefficient(s(tj), mm, s(0), m(0), s(tj), mm) - 1.0).abs() < 1e-14);
            }
        }
        assert_eq!(cg_coefficient(s(2), m(2), s(2), m(2), s(2), m(2)), 0.0);
        assert!(cg_block(s(1), s(1), s(4)).is_zero());
        assert_eq!(cg_block(s(0), s(0), s(0)).data, vec![1.0]);
    }

    #[test]
    fn omega_cup_cap() {
        let w1 = omega(s(2));
        let r = 1.0 / 3f64.sqrt();
        // rows/cols ordered m = -1, 0, 1
        assert!((w1[(2, 0)] - r).abs() < 1e-15);
        assert!((w1[(1, 1)] + r).abs() < 1e-15);
        assert!((w1[(0, 2)] - r).abs() < 1e-15);
        let c1 = cup(s(2));
        assert!((c1[(2, 0)] - 1.0).abs() < 1e-15 && (c1[(1, 1)] + 1.0).abs() < 1e-15);
        for tj in 0..7 {
            let p = cup(s(tj)) * cap(s(tj));
            let q = cap(s(tj)) * cup(s(tj));
            let id = DMatrix::<f64>::identity(tj as usize + 1, tj as usize + 1);
            assert!((p - &id).amax() < 1e-14 && (q - id).amax() < 1e-14);
        }
        assert_eq!(omega(s(0))[(0, 0)], 1.0);
    }

    #[test]
    fn swap_phases() {
        assert_eq!(swap_r(s(1), s(1), s(0)), -1.0);
        assert_eq!(swap_r(s(1), s(1), s(2)), 1.0);
        assert_eq!(swap_r(s(2), s(2), s(2)), -1.0);
    }

    #[test]
    fn spin_half_and_one_generators() {
        let [jx, _, jz] = generators(s(1));
        assert!((jx[(0, 1)].re - 0.5).abs() < 1e-15 && (jx[(1, 0)].re - 0.5).abs() < 1e-15);
        assert!((jz[(0, 0)].re + 0.5).abs() < 1e-15 && (jz[(1, 1)].re - 0.5).abs() < 1e-15);
        let [jx, jy, _] = generators(s(2));
        let r = 1.0 / 2f64.sqrt();
        assert!((jx[(0, 1)].re - r).abs() < 1e-15 && (jx[(1, 2)].re - r).abs() < 1e-15);
        assert!((jy[(0, 1)].im - r).abs() < 1e-15);
        for g in generators(s(0)) {
            assert_eq!(g.shape(), (1, 1));
            assert_eq!(g[(0, 0)], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn zero_spin_recoupling_is_one() {
        assert!((recoupling_f(s(0), s(0), s(0), s(0), s(0), s(0)) - 1.0).abs() < 1e-15);
    }
}
