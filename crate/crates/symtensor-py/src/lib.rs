//! Python bindings. Spins are passed as twice their value, spaces as lists
//! of `(twice_j, degeneracy)` pairs and directions as `"out"`, `"in"` or `"in_r"`.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symtensor::charge::su2_system;
use symtensor::fusion_tree::FusionTree;
use symtensor::gamma::GammaCache;
use symtensor::models::{blocked_chain_gate, exact_diag as ed, mera_solve, MeraConfig};
use symtensor::su2::{cg_coefficient, recoupling_f, Spin, SpinProjection};
use symtensor::verify::run_suite;
use symtensor::{Direction, RepSpace, SymTensor};

fn err(e: symtensor::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn direction(s: &str) -> PyResult<Direction> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| PyValueError::new_err(format!("unknown direction {s:?}")))
}

/// `<ja ma; jb mb | jc mc>` with every argument doubled.
#[pyfunction]
fn clebsch_gordan(ja: u32, ma: i32, jb: u32, mb: i32, jc: u32, mc: i32) -> f64 {
    let p = SpinProjection::from_twice;
    cg_coefficient(Spin::from_twice(ja), p(ma), Spin::from_twice(jb), p(mb), Spin::from_twice(jc), p(mc))
}

/// Recoupling coefficient `F` with every spin doubled.
#[pyfunction]
fn recoupling(a: u32, b: u32, c: u32, d: u32, e: u32, f: u32) -> f64 {
    let s = Spin::from_twice;
    recoupling_f(s(a), s(b), s(c), s(d), s(e), s(f))
}

/// Heisenberg ring or chain spectrum per sector, keyed by `2J`.
#[pyfunction]
#[pyo3(signature = (spins, periodic = true))]
fn exact_diag(spins: usize, periodic: bool) -> PyResult<BTreeMap<i32, Vec<f64>>> {
    Ok(ed(spins, periodic, None).map_err(err)?.into_iter().map(|s| (s.twice_j, s.energies)).collect())
}

/// Runs a verification suite and returns its JSON report.
#[pyfunction]
#[pyo3(signature = (suite = "all", instances = 20, seed = 1))]
fn verify(suite: &str, instances: usize, seed: u64) -> PyResult<String> {
    let report = run_suite(suite, instances, seed, &GammaCache::new()).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Optimizes a MERA from a JSON config and returns a JSON summary.
#[pyfunction]
fn solve_mera(config: &str) -> PyResult<String> {
    let cfg: MeraConfig = serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let gate = blocked_chain_gate().map_err(err)?;
    let (_, result, starts) = mera_solve(&cfg, &gate, &GammaCache::new()).map_err(err)?;
    let out = serde_json::json!({
        "format_version": symtensor::FORMAT_VERSION,
        "energy": result.energy,
        "starts": starts,
        "trace": result.trace,
        "warnings": result.warnings,
    });
    Ok(out.to_string())
}

#[pyclass(name = "SymTensor", module = "symtensor_py")]
struct PySymTensor {
    inner: SymTensor,
}

#[pymethods]
impl PySymTensor {
    /// Random invariant SU(2) tensor coupled along a left comb.
    #[staticmethod]
    #[pyo3(signature = (spaces, dirs, root = 0, seed = 0))]
    fn random(spaces: Vec<Vec<(i32, usize)>>, dirs: Vec<String>, root: i32, seed: u64) -> PyResult<Self> {
        let spaces: Vec<RepSpace> = spaces.into_iter().map(|s| RepSpace::from_unsorted(su2_system(), s)).collect::<Result<_, _>>().map_err(err)?;
        let dirs: Vec<Direction> = dirs.iter().map(|d| direction(d)).collect::<PyResult<_>>()?;
        let tree = FusionTree::left_comb(spaces.len());
        let inner = SymTensor::random(spaces, dirs, tree, root, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
        Ok(PySymTensor { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PySymTensor { inner: SymTensor::from_json(&v).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    fn dense_size(&self) -> usize {
        self.inner.dense_size()
    }

    fn invariance_residual(&self) -> PyResult<f64> {
        self.inner.invariance_residual().map_err(err)
    }

    /// New leg `k` is old leg `perm[k]`; the result is coupled along a left comb.
    fn permute(&self, perm: Vec<usize>) -> PyResult<Self> {
        let tau = FusionTree::left_comb(perm.len());
        Ok(PySymTensor { inner: self.inner.permute(&perm, &tau).map_err(err)? })
    }

    fn dagger(&self) -> PyResult<Self> {
        Ok(PySymTensor { inner: self.inner.dagger().map_err(err)? })
    }

    fn contract(&self, other: &PySymTensor, pairs: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(PySymTensor { inner: self.inner.contract(&other.inner, &pairs).map_err(err)? })
    }

    /// `(dims, row-major data)` of the dense realization.
    fn to_dense(&self) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let d = self.inner.to_dense().map_err(err)?;
        Ok((d.dims().to_vec(), d.data().to_vec()))
    }

    fn __repr__(&self) -> String {
        format!("SymTensor(rank={}, root={}, parameters={})", self.inner.rank(), self.inner.root(), self.inner.parameter_count())
    }
}

#[pymodule]
fn symtensor_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FORMAT_VERSION", symtensor::FORMAT_VERSION)?;
    m.add_class::<PySymTensor>()?;
    m.add_function(wrap_pyfunction!(clebsch_gordan, m)?)?;
    m.add_function(wrap_pyfunction!(recoupling, m)?)?;
    m.add_function(wrap_pyfunction!(exact_diag, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mera, m)?)?;
    Ok(())
}
