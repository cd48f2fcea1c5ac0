//! Benchmark rows for the `bench` command. Timings are informative; the
//! `flops` column is a deterministic counter.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::block_linalg::BlockDiagMatrix;
use crate::charge::{su2_system, Charge};
use crate::dense::{dense_permute, dense_reshape};
use crate::fusion_tree::FusionTree;
use crate::gamma::GammaCache;
use crate::rep_space::RepSpace;
use crate::sym_tensor::{coefficients_touched, Direction, SymTensor};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Matmul,
    Svd,
    Permute,
    Fuse,
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Op, Error> {
        match s {
            "matmul" => Ok(Op::Matmul),
            "svd" => Ok(Op::Svd),
            "permute" => Ok(Op::Permute),
            "fuse" => Ok(Op::Fuse),
            _ => Err(Error::Config { path: "op".into(), message: format!("unknown op {s}") }),
        }
    }
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Matmul => "matmul",
            Op::Svd => "svd",
            Op::Permute => "permute",
            Op::Fuse => "fuse",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub op: String,
    pub mode: String,
    pub q: usize,
    pub d: usize,
    pub seconds: f64,
    pub flops: u64,
}

/// Integer spins `0 … q-1`, `d` states each.
pub fn bench_space(q: usize, d: usize) -> Result<RepSpace, Error> {
    RepSpace::new(su2_system(), (0..q).map(|j| (2 * j as Charge, d)).collect())
}

fn row(op: Op, mode: &str, q: usize, d: usize, seconds: f64, flops: u64) -> BenchRow {
    BenchRow { op: op.name().into(), mode: mode.into(), q, d, seconds, flops }
}

fn timed<T>(reps: usize, mut f: impl FnMut() -> Result<T, Error>) -> Result<(f64, T), Error> {
    let t0 = Instant::now();
    let mut last = f()?;
    for _ in 1..reps {
        last = f()?;
    }
    Ok((t0.elapsed().as_secs_f64() / reps.max(1) as f64, last))
}

fn rank4(q: usize, d: usize) -> Result<SymTensor, Error> {
    let v = bench_space(q, d)?;
    let dirs = vec![Direction::Out, Direction::Out, Direction::In, Direction::In];
    SymTensor::random(vec![v; 4], dirs, FusionTree::left_comb(4), 0, &mut ChaCha8Rng::seed_from_u64(7))
}

/// Runs `op` in the requested modes. Matrix ops use `q` blocks of `d×d`
/// degeneracy; tensor ops use a rank-4 tensor with that space on every leg.
pub fn run(op: Op, q: usize, d: usize, reps: usize, sym: bool, dense: bool, cache: &GammaCache) -> Result<Vec<BenchRow>, Error> {
    let reps = reps.max(1);
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    match op {
        Op::Matmul | Op::Svd => {
            let v = bench_space(q, d)?;
            let n = v.total_dim();
            if sym {
                let a = BlockDiagMatrix::random(v.clone(), v.clone(), &mut rng)?;
                let (secs, flops) = timed(reps, || {
                    let mut flops = 0;
                    if op == Op::Matmul {
                        a.matmul_counted(&a, &mut flops)?;
                    } else {
                        a.svd()?;
                        flops = a.blocks().values().map(|b| (b.nrows() * b.ncols() * b.nrows().min(b.ncols())) as u64).sum();
                    }
                    Ok(flops)
                })?;
                rows.push(row(op, "sym", q, d, secs, flops));
            }
            if dense {
                let a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
                let (secs, _) = timed(reps, || {
                    if op == Op::Matmul {
                        std::hint::black_box(&a * &a);
                    } else {
                        std::hint::black_box(a.clone().svd(true, true));
                    }
                    Ok(())
                })?;
                rows.push(row(op, "dense", q, d, secs, (n * n * n) as u64));
            }
        }
        Op::Permute | Op::Fuse => {
            let t = rank4(q, d)?;
            if sym {
                let perm = [2, 3, 0, 1];
                let tau = FusionTree::left_comb(4);
                let groups = vec![vec![0, 1], vec![2, 3]];
                // the first call builds Γ; only the cached application is timed
                if op == Op::Permute {
                    t.permute_with(&perm, &tau, cache)?;
                } else {
                    t.fuse_with(&groups, None, None, cache)?;
                }
                let before = coefficients_touched();
                let (secs, _) = timed(reps, || {
                    if op == Op::Permute {
                        t.permute_with(&perm, &tau, cache)?;
                    } else {
                        t.fuse_with(&groups, None, None, cache)?;
                    }
                    Ok(())
                })?;
                let touched = (coefficients_touched() - before) / reps as u64;
                rows.push(row(op, "sym", q, d, secs, touched));
            }
            if dense {
                let dt = t.to_dense()?;
                let (secs, _) = timed(reps, || {
                    if op == Op::Permute {
                        std::hint::black_box(dense_permute(&dt, &[2, 3, 0, 1])?);
                    } else {
                        std::hint::black_box(dense_reshape(&dt, &[2, 2])?);
                    }
                    Ok(())
                })?;
                rows.push(row(op, "dense", q, d, secs, dt.len() as u64));
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_blocks_cost_three_d_cubed() {
        for d in [4, 16, 40] {
            let rows = run(Op::Matmul, 3, d, 1, true, false, &GammaCache::new()).unwrap();
            assert_eq!(rows[0].flops, 3 * (d * d * d) as u64);
        }
    }

    #[test]
    fn permute_counters_scale_as_d_to_the_fourth() {
        let cache = GammaCache::new();
        let at = |d| {
            let r = run(Op::Permute, 3, d, 1, true, true, &cache).unwrap();
            (r[0].flops, r[1].flops)
        };
        let (s1, d1) = at(1);
        let (s2, d2) = at(2);
        let (s3, d3) = at(3);
        assert_eq!((s2, s3), (16 * s1, 81 * s1));
        assert_eq!((d2, d3), (16 * d1, 81 * d1));
    }
}
