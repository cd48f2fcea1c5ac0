"""Smoke test for the Python bindings; run after `pip install -e crates/symtensor-py`."""

import json
import math

import symtensor_py as st


def test_kernels():
    # <1/2 1/2; 1/2 -1/2 | 0 0> = 1/sqrt(2)
    assert math.isclose(st.clebsch_gordan(1, 1, 1, -1, 0, 0), 1 / math.sqrt(2), rel_tol=1e-12)
    assert math.isclose(st.recoupling(0, 0, 0, 0, 0, 0), 1.0)


def test_tensor_round_trips():
    v = [(0, 1), (2, 2)]
    t = st.SymTensor.random([v, v, v], ["out", "in", "in_r"], root=0, seed=3)
    assert t.invariance_residual() < 1e-10
    assert t.parameter_count() < t.dense_size()
    back = st.SymTensor.from_json(t.to_json())
    assert math.isclose(back.norm(), t.norm(), rel_tol=1e-14)
    p = t.permute([2, 0, 1]).permute([1, 2, 0])
    dims, a = t.to_dense()
    _, b = p.to_dense()
    assert dims == [7, 7, 7]
    assert max(abs(x - y) for x, y in zip(a, b)) < 1e-10
    d = t.dagger()
    assert math.isclose(d.norm(), t.norm(), rel_tol=1e-12)


def test_contract_scalar():
    v = [(1, 2)]
    a = st.SymTensor.random([v, v], ["out", "in"], seed=1)
    b = st.SymTensor.random([v, v], ["in", "out"], seed=2)
    c = a.contract(b, [(0, 0), (1, 1)])
    _, da = a.to_dense()
    _, db = b.to_dense()
    _, dc = c.to_dense()
    assert math.isclose(dc[0], sum(x * y for x, y in zip(da, db)), rel_tol=1e-10, abs_tol=1e-12)


def test_models():
    spectra = st.exact_diag(4, periodic=True)
    ground = min((e[0], j) for j, e in spectra.items())
    assert ground[1] == 0
    assert math.isclose(ground[0], -8.0, abs_tol=1e-10)
    report = json.loads(st.verify("kernels"))
    assert report["passed"] and report["format_version"] == st.FORMAT_VERSION
    cfg = {"q": 1, "levels": [[[0, 1], [2, 1]]], "twice_j": 0, "chi_top": 1, "sweeps": 3, "seed": 1}
    out = json.loads(st.solve_mera(json.dumps(cfg)))
    energies = [r["energy"] for r in out["trace"]]
    assert all(b <= a + 1e-8 for a, b in zip(energies, energies[1:]))


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"{name}: ok")
