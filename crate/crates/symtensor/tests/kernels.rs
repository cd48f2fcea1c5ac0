use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use symtensor::su2::*;

fn s(tj: u32) -> Spin {
    Spin::from_twice(tj)
}

/// F from explicit CG contraction:
/// (1/(2J+1)) Σ_m C(a,b→e) C(e,c→J) C(b,c→f) C(a,f→J).
fn brute_force_f(ta: u32, tb: u32, tc: u32, td: u32, te: u32, tf: u32) -> f64 {
    let (a, b, c, d, e, f) = (s(ta), s(tb), s(tc), s(td), s(te), s(tf));
    let mut acc = 0.0;
    for ma in a.projections() {
        for mb in b.projections() {
            for mc in c.projections() {
                let md = SpinProjection::from_twice(ma.twice_m + mb.twice_m + mc.twice_m);
                if !d.contains(md) {
                    continue;
                }
                let me = SpinProjection::from_twice(ma.twice_m + mb.twice_m);
                let mf = SpinProjection::from_twice(mb.twice_m + mc.twice_m);
                if !e.contains(me) || !f.contains(mf) {
                    continue;
                }
                let left = cg_coefficient(a, ma, b, mb, e, me) * cg_coefficient(e, me, c, mc, d, md);
                let right = cg_coefficient(b, mb, c, mc, f, mf) * cg_coefficient(a, ma, f, mf, d, md);
                acc += left * right;
            }
        }
    }
    acc / (td + 1) as f64
}

#[test]
fn recoupling_matches_cg_contraction_up_to_spin_two() {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for ta in 0..=4 {
        for tb in 0..=4 {
            for tc in 0..=4 {
                for td in 0..=4 {
                    for te in 0..=4 {
                        for tf in 0..=4 {
                            let closed = recoupling_f(s(ta), s(tb), s(tc), s(td), s(te), s(tf));
                            let brute = brute_force_f(ta, tb, tc, td, te, tf);
                            worst = worst.max((closed - brute).abs());
                            if closed != 0.0 {
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(count > 100);
    assert!(worst < 1e-10, "worst deviation {worst}");
}

#[test]
fn reversal_recoupling_value_for_two_halves() {
    // F^{½ ½}_{0 ½ ½ 1}, evaluated both ways
    let v = recoupling_f(s(0), s(1), s(1), s(2), s(1), s(1));
    assert!((v - brute_force_f(0, 1, 1, 2, 1, 1)).abs() < 1e-14);
}

#[test]
fn four_halves_unitarity() {
    for tf in [0, 2] {
        for tf2 in [0, 2] {
            let mut acc = 0.0;
            for te in [0, 2] {
                acc += recoupling_f(s(1), s(1), s(1), s(1), s(te), s(tf))
                    * recoupling_f(s(1), s(1), s(1), s(1), s(te), s(tf2));
            }
            let want = if tf == tf2 { 1.0 } else { 0.0 };
            assert!((acc - want).abs() < 1e-14);
        }
    }
}

#[test]
fn cg_orthogonality_up_to_spin_three() {
    let mut worst: f64 = 0.0;
    for ta in 0..=6u32 {
        for tb in 0..=6u32 {
            // Σ_{c,mc} C(a ma b mb|c mc) C(a ma' b mb'|c mc) = δ δ
            let (a, b) = (s(ta), s(tb));
            let cs: Vec<u32> = (0..=ta + tb).filter(|&tc| triangle(ta, tb, tc)).collect();
            for ma in a.projections() {
                for mb in b.projections() {
                    for ma2 in a.projections() {
                        for mb2 in b.projections() {
                            let mut acc = 0.0;
                            for &tc in &cs {
                                for mc in s(tc).projections() {
                                    acc += cg_coefficient(a, ma, b, mb, s(tc), mc)
                                        * cg_coefficient(a, ma2, b, mb2, s(tc), mc);
                                }
                            }
                            let want = if ma == ma2 && mb == mb2 { 1.0 } else { 0.0 };
                            worst = worst.max((acc - want).abs());
                        }
                    }
                }
            }
            // Σ_{ma,mb} C(..|c mc) C(..|c' mc') = δ δ
            for &tc in &cs {
                for &tc2 in &cs {
                    for mc in s(tc).projections() {
                        for mc2 in s(tc2).projections() {
                            let mut acc = 0.0;
                            for ma in a.projections() {
                                for mb in b.projections() {
                                    acc += cg_coefficient(a, ma, b, mb, s(tc), mc)
                                        * cg_coefficient(a, ma, b, mb, s(tc2), mc2);
                                }
                            }
                            let want = if tc == tc2 && mc == mc2 { 1.0 } else { 0.0 };
                            worst = worst.max((acc - want).abs());
                        }
                    }
                }
            }
        }
    }
    assert!(worst < 1e-12, "worst {worst}");
}

#[test]
fn split_then_fuse_is_identity_for_two_ones() {
    for tc in [0u32, 2, 4] {
        for tc2 in [0u32, 2, 4] {
            let b1 = cg_block(s(2), s(2), s(tc));
            let b2 = cg_block(s(2), s(2), s(tc2));
            for ic in 0..tc as usize + 1 {
                for ic2 in 0..tc2 as usize + 1 {
                    let mut acc = 0.0;
                    for ia in 0..3 {
                        for ib in 0..3 {
                            acc += b1.at(ia, ib, ic) * b2.at(ia, ib, ic2);
                        }
                    }
                    let want = if tc == tc2 && ic == ic2 { 1.0 } else { 0.0 };
                    assert!((acc - want).abs() < 1e-13);
                }
            }
        }
    }
}

#[test]
fn cg_swap_symmetry_up_to_spin_two() {
    for ta in 0..=4u32 {
        for tb in 0..=4u32 {
            for tc in 0..=8u32 {
                if !triangle(ta, tb, tc) {
                    continue;
                }
                let r = swap_r(s(ta), s(tb), s(tc));
                for ma in s(ta).projections() {
                    for mb in s(tb).projections() {
                        for mc in s(tc).projections() {
                            let ab = cg_coefficient(s(ta), ma, s(tb), mb, s(tc), mc);
                            let ba = cg_coefficient(s(tb), mb, s(ta), ma, s(tc), mc);
                            assert!((ba - r * ab).abs() < 1e-13);
                        }
                    }
                }
            }
        }
    }
}

fn commutator(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a * b - b * a
}

#[test]
fn lie_algebra_and_casimir_up_to_spin_three() {
    let i = Complex64::new(0.0, 1.0);
    for tj in 0..=6u32 {
        let [jx, jy, jz] = generators(s(tj));
        let d = tj as usize + 1;
        assert!((commutator(&jx, &jy) - &jz * i).camax() < 1e-12);
        assert!((commutator(&jy, &jz) - &jx * i).camax() < 1e-12);
        assert!((commutator(&jz, &jx) - &jy * i).camax() < 1e-12);
        let jj = s(tj).j();
        let cas = &jx * &jx + &jy * &jy + &jz * &jz;
        let want = DMatrix::<Complex64>::identity(d, d) * Complex64::new(jj * (jj + 1.0), 0.0);
        assert!((cas - want).camax() < 1e-12);
    }
}

#[test]
fn omega_is_the_singlet_cg() {
    for tj in 0..=6u32 {
        let w = omega(s(tj));
        for (i, ma) in s(tj).projections().enumerate() {
            for (k, mb) in s(tj).projections().enumerate() {
                let c = cg_coefficient(s(tj), ma, s(tj), mb, s(0), SpinProjection::from_twice(0));
                assert!((w[(i, k)] - c).abs() < 1e-14);
            }
        }
    }
}

proptest! {
    #[test]
    fn recoupling_is_orthogonal(ta in 0u32..=4, tb in 0u32..=4, tc in 0u32..=4, td in 0u32..=8) {
        let es: Vec<u32> = (0..=8).filter(|&te| triangle(ta, tb, te) && triangle(te, tc, td)).collect();
        let fs: Vec<u32> = (0..=8).filter(|&tf| triangle(tb, tc, tf) && triangle(ta, tf, td)).collect();
        prop_assert_eq!(es.len(), fs.len());
        for &f1 in &fs {
            for &f2 in &fs {
                let acc: f64 = es.iter().map(|&te| {
                    recoupling_f(s(ta), s(tb), s(tc), s(td), s(te), s(f1))
                        * recoupling_f(s(ta), s(tb), s(tc), s(td), s(te), s(f2))
                }).sum();
                let want = if f1 == f2 { 1.0 } else { 0.0 };
                prop_assert!((acc - want).abs() < 1e-12);
            }
        }
    }
}
