//! Charge systems: fusion rules, recoupling and exchange coefficients.
//!
//! Charges are plain integers whose meaning depends on the system:
//! SU(2) stores `2j`, U(1) stores the particle number `n`, and fermion parity
//! stores `p ∈ {0, 1}`.  Within each system charges are totally ordered by
//! the integer order, which fixes every downstream enumeration.

use serde::{Deserialize, Serialize};

use crate::su2::{self, Spin};

pub type Charge = i32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChargeSystem {
    #[serde(rename = "su2")]
    Su2,
    #[serde(rename = "u1")]
    U1,
    #[serde(rename = "z2f")]
    Z2f,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown charge system `{0}` (expected su2, u1 or z2f)")]
pub struct UnknownSystem(pub String);

pub fn su2_system() -> ChargeSystem {
    ChargeSystem::Su2
}

pub fn u1_system() -> ChargeSystem {
    ChargeSystem::U1
}

pub fn z2_fermion_system() -> ChargeSystem {
    ChargeSystem::Z2f
}

fn spin(c: Charge) -> Spin {
    Spin::from_twice(c as u32)
}

impl ChargeSystem {
    pub fn name(self) -> &'static str {
        match self {
            ChargeSystem::Su2 => "su2",
            ChargeSystem::U1 => "u1",
            ChargeSystem::Z2f => "z2f",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, UnknownSystem> {
        match name {
            "su2" => Ok(ChargeSystem::Su2),
            "u1" => Ok(ChargeSystem::U1),
            "z2f" => Ok(ChargeSystem::Z2f),
            other => Err(UnknownSystem(other.to_string())),
        }
    }

    pub fn is_abelian(self) -> bool {
        !matches!(self, ChargeSystem::Su2)
    }

    pub fn identity(self) -> Charge {
        0
    }

    pub fn is_valid(self, c: Charge) -> bool {
        match self {
            ChargeSystem::Su2 => c >= 0,
            ChargeSystem::U1 => true,
            ChargeSystem::Z2f => c == 0 || c == 1,
        }
    }

    /// Dimension of the irrep carrying charge `c`.
    pub fn dim(self, c: Charge) -> usize {
        match self {
            ChargeSystem::Su2 => c as usize + 1,
            _ => 1,
        }
    }

    /// The charge of the dual (contragredient) irrep.
    pub fn dual(self, c: Charge) -> Charge {
        match self {
            ChargeSystem::U1 => -c,
            _ => c,
        }
    }

    /// Outcomes of `a ⊗ b`, ascending, each at most once.
    pub fn fuse(self, a: Charge, b: Charge) -> Vec<Charge> {
        match self {
            ChargeSystem::Su2 => ((a - b).abs()..=a + b).step_by(2).collect(),
            ChargeSystem::U1 => vec![a + b],
            ChargeSystem::Z2f => vec![(a + b).rem_euclid(2)],
        }
    }

    pub fn allowed(self, a: Charge, b: Charge, c: Charge) -> bool {
        match self {
            ChargeSystem::Su2 => a >= 0 && b >= 0 && c >= 0 && su2::triangle(a as u32, b as u32, c as u32),
            ChargeSystem::U1 => a + b == c,
            ChargeSystem::Z2f => (a + b).rem_euclid(2) == c,
        }
    }

    /// `F^{e f}_{a b c d}`: `|a (b c)_f; d⟩ = Σ_e F^{ef}_{abcd} |(a b)_e c; d⟩`.
    pub fn f_coeff(self, a: Charge, b: Charge, c: Charge, d: Charge, e: Charge, f: Charge) -> f64 {
        if !(self.allowed(a, b, e) && self.allowed(e, c, d) && self.allowed(b, c, f) && self.allowed(a, f, d)) {
            return 0.0;
        }
        match self {
            ChargeSystem::Su2 => su2::recoupling_f(spin(a), spin(b), spin(c), spin(d), spin(e), spin(f)),
            _ => 1.0,
        }
    }

    /// Exchange factor for the two fused charges of `(a b → c)`.
    pub fn r_coeff(self, a: Charge, b: Charge, c: Charge) -> f64 {
        if !self.allowed(a, b, c) {
            return 0.0;
        }
        match self {
            ChargeSystem::Su2 => su2::swap_r(spin(a), spin(b), spin(c)),
            ChargeSystem::U1 => 1.0,
            ChargeSystem::Z2f => {
                if a == 1 && b == 1 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Sign relating the two ways of bending a leg: `cap = sign · cup`.
    pub fn bend_sign(self, c: Charge) -> f64 {
        match self {
            ChargeSystem::Su2 if c % 2 == 1 => -1.0,
            _ => 1.0,
        }
    }

    /// Human-readable label (`1/2`, `3`, `-2`, ...).
    pub fn label(self, c: Charge) -> String {
        match self {
            ChargeSystem::Su2 if c % 2 == 1 => format!("{c}/2"),
            ChargeSystem::Su2 => format!("{}", c / 2),
            _ => format!("{c}"),
        }
    }
}

impl std::fmt::Display for ChargeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn su2_fusion_rules() {
        let g = su2_system();
        assert_eq!(g.fuse(1, 1), vec![0, 2]);
        assert_eq!(g.fuse(2, 2), vec![0, 2, 4]);
        for c in 0..6 {
            assert_eq!(g.fuse(c, 0), vec![c]);
        }
        assert_eq!(g.dim(3), 4);
    }

    #[test]
    fn u1_is_trivial() {
        let g = u1_system();
        assert_eq!(g.fuse(2, -3), vec![-1]);
        assert_eq!(g.f_coeff(1, 2, -1, 2, 3, 1), 1.0);
        for n in -4..5 {
            assert_eq!(g.dim(n), 1);
        }
    }

    #[test]
    fn fermion_parity_rules() {
        let g = z2_fermion_system();
        assert_eq!(g.fuse(1, 1), vec![0]);
        assert_eq!(g.r_coeff(1, 1, 0), -1.0);
        assert_eq!(g.r_coeff(0, 1, 1), 1.0);
        assert_eq!(g.r_coeff(1, 0, 1), 1.0);
        assert_eq!(g.r_coeff(0, 0, 0), 1.0);
        for p in 0..2 {
            for q in 0..2 {
                let r = g.fuse(p, q)[0];
                assert_eq!(g.r_coeff(p, q, r) * g.r_coeff(q, p, r), 1.0);
                for s in 0..2 {
                    let d = g.fuse(r, s)[0];
                    let f = g.fuse(q, s)[0];
                    assert_eq!(g.f_coeff(p, q, s, d, r, f), 1.0);
                }
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for g in [su2_system(), u1_system(), z2_fermion_system()] {
            assert_eq!(ChargeSystem::from_name(g.name()).unwrap(), g);
        }
        assert!(ChargeSystem::from_name("so3").is_err());
    }

    fn reachable(g: ChargeSystem, first: &[Charge], b: Charge) -> Vec<Charge> {
        let mut out: Vec<Charge> = first.iter().flat_map(|&x| g.fuse(x, b)).collect();
        out.sort();
        out.dedup();
        out
    }

    proptest! {
        #[test]
        fn fusion_is_associative(a in 0i32..7, b in 0i32..7, c in 0i32..7, n1 in -5i32..5, n2 in -5i32..5, n3 in -5i32..5) {
            for (g, (x, y, z)) in [(su2_system(), (a, b, c)), (u1_system(), (n1, n2, n3)), (z2_fermion_system(), (a % 2, b % 2, c % 2))] {
                let left = reachable(g, &g.fuse(x, y), z);
                let bc = g.fuse(y, z);
                let mut right: Vec<Charge> = bc.iter().flat_map(|&w| g.fuse(x, w)).collect();
                right.sort();
                right.dedup();
                prop_assert_eq!(left, right);
                let once = g.fuse(x, y);
                let mut dedup = once.clone();
                dedup.dedup();
                prop_assert_eq!(once, dedup);
            }
        }

        #[test]
        fn su2_f_is_orthogonal(a in 0i32..5, b in 0i32..5, c in 0i32..5, d in 0i32..13) {
            let g = su2_system();
            let es: Vec<Charge> = (0..=8).filter(|&e| g.allowed(a, b, e) && g.allowed(e, c, d)).collect();
            let fs: Vec<Charge> = (0..=8).filter(|&f| g.allowed(b, c, f) && g.allowed(a, f, d)).collect();
            for &f1 in &fs {
                for &f2 in &fs {
                    let s: f64 = es.iter().map(|&e| g.f_coeff(a, b, c, d, e, f1) * g.f_coeff(a, b, c, d, e, f2)).sum();
                    let want = if f1 == f2 { 1.0 } else { 0.0 };
                    prop_assert!((s - want).abs() < 1e-12);
                }
            }
        }
    }
}
