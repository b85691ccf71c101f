import io

import numpy as np
import pytest

from xxz_torus.exact_diag import (
    ClusterNotFoundError,
    SpectrumResult,
    build_hamiltonian,
    dense_spectrum,
    iterative_lowest,
    low_cluster,
    lowest_eigenvalues,
    operator_norm_estimate,
    parity_check,
    sector_spectra,
    spectrum_to_csv,
)
from xxz_torus.model import ModelParams, gap_formula, ground_energy_formula


@pytest.mark.parametrize("eta", [0.3, 0.5, 1.0, 2.5, 7.0])
def test_n2_spectrum_is_universal(eta):
    # the y and z bond terms cancel between the bulk and twisted bonds,
    # leaving H = -2 sx sx with eigenvalues {-2, -2, 2, 2}
    w = dense_spectrum(ModelParams(2, eta)).energies
    assert np.allclose(w, [-2, -2, 2, 2], atol=1e-12)


def test_size_limits():
    with pytest.raises(ValueError):
        build_hamiltonian(ModelParams(15, 1.0), mode="dense")
    with pytest.raises(ValueError):
        build_hamiltonian(ModelParams(27, 1.0), mode="matrix-free")
    with pytest.raises(ValueError):
        build_hamiltonian(ModelParams(6, 1.0), mode="banana")


def test_dense_matrix_real_symmetric():
    for n, eta in [(3, 0.5), (6, 1.3)]:
        H = build_hamiltonian(ModelParams(n, eta), mode="dense").dense_matrix()
        assert H.dtype == np.float64
        assert np.array_equal(H, H.T)


def test_apply_matches_dense():
    rng = np.random.default_rng(3)
    for n, eta in [(4, 0.8), (10, 1.0), (12, 2.0)]:
        p = ModelParams(n, eta)
        mf = build_hamiltonian(p, mode="matrix-free")
        if n <= 10:
            H = build_hamiltonian(p, mode="dense").dense_matrix()
        else:
            H = None
        for _ in range(20 if n <= 10 else 5):
            v = rng.standard_normal(mf.dimension)
            y = mf.apply(v)
            if H is not None:
                ref = H @ v
                assert np.linalg.norm(y - ref) <= 1e-12 * np.linalg.norm(ref)


def test_apply_symmetric_quadratic_form():
    rng = np.random.default_rng(5)
    p = ModelParams(10, 1.0)
    op = build_hamiltonian(p, mode="matrix-free")
    bound = operator_norm_estimate(p)
    for _ in range(10):
        x = rng.standard_normal(op.dimension)
        y = rng.standard_normal(op.dimension)
        a = np.dot(x, op.apply(y))
        b = np.dot(op.apply(x), y)
        assert abs(a - b) <= 1e-12 * (abs(a) + 1)
        # |<v, H v>| <= (2 + cosh eta) N ||v||^2
        q = np.dot(x, op.apply(x))
        assert abs(q) <= bound * np.dot(x, x) * (1 + 1e-12)


@pytest.mark.parametrize("n,eta,table_delta", [
    (3, 1.0, 0.3716389985),
    (10, 1.0, 0.0007405552),
    (5, 2.0, 0.0089281224),
])
def test_ground_energy_against_printed_delta(n, eta, table_delta, dense_cache):
    e0 = dense_cache(n, eta)[0]
    delta = ground_energy_formula(ModelParams(n, eta)) - e0
    assert delta == pytest.approx(table_delta, abs=1e-9)


def test_parity_sector_union_matches_full(dense_cache):
    for n, eta in [(6, 0.7), (10, 1.0)]:
        p = ModelParams(n, eta)
        even, odd = sector_spectra(p)
        union = np.sort(np.concatenate([even, odd]))
        H = build_hamiltonian(p, mode="dense").dense_matrix()
        full = np.linalg.eigvalsh(H)
        assert np.allclose(union, full, atol=1e-10)


def test_parity_check_is_exact():
    for n, eta, mode in [(2, 1.0, "dense"), (6, 1.0, "dense"),
                         (12, 2.0, "matrix-free")]:
        op = build_hamiltonian(ModelParams(n, eta), mode=mode)
        assert parity_check(op) <= 1e-12


def test_dense_vs_iterative_agreement(dense_cache):
    # cross-oracle: restarted Lanczos against the dense solver
    for n, eta in [(8, 0.5), (10, 1.0), (12, 0.5)]:
        ref = dense_cache(n, eta)
        it = iterative_lowest(ModelParams(n, eta), k=4, tol=1e-11)
        assert np.allclose(it.energies, ref[:4], atol=1e-9)


def test_lowest_eigenvalues_dispatch(dense_cache):
    p = ModelParams(8, 1.0)
    dense_op = build_hamiltonian(p, mode="dense")
    res = lowest_eigenvalues(dense_op, k=3)
    assert res.count == 2 ** 8  # dense mode reports the full spectrum
    mf_op = build_hamiltonian(p, mode="matrix-free")
    res_it = lowest_eigenvalues(mf_op, k=3, tol=1e-11)
    assert res_it.count == 3
    assert np.allclose(res_it.energies, dense_cache(8, 1.0)[:3], atol=1e-9)


def test_scipy_cross_check():
    # independent iterative oracle for one mid-size case; only the lowest
    # value is compared because single-vector Lanczos cannot see both copies
    # of the nearly degenerate ground pair
    from scipy.sparse.linalg import LinearOperator, eigsh
    p = ModelParams(11, 1.0)
    op = build_hamiltonian(p, mode="matrix-free")
    lo = LinearOperator((op.dimension, op.dimension), matvec=op.apply)
    rng = np.random.default_rng(0)
    ref = np.sort(eigsh(lo, k=3, which="SA", tol=1e-12,
                        v0=rng.standard_normal(op.dimension),
                        return_eigenvectors=False))
    mine = iterative_lowest(p, k=3, tol=1e-11).energies
    assert mine[0] == pytest.approx(ref[0], abs=1e-8)


class TestLowCluster:
    def test_cluster_size_eta2(self, dense_cache):
        p = ModelParams(8, 2.0)
        spec = SpectrumResult(p, dense_cache(8, 2.0), 2 ** 8, "dense", 0.0)
        rep = low_cluster(spec, p)
        assert rep.size == 16
        assert rep.span <= 1e-3
        assert rep.gap_to_next == pytest.approx(gap_formula(p), rel=0.05)

    def test_separating_gap_eta1(self, dense_cache):
        p = ModelParams(10, 1.0)
        spec = SpectrumResult(p, dense_cache(10, 1.0), 2 ** 10, "dense", 0.0)
        rep = low_cluster(spec, p)
        assert rep.size == 20
        assert rep.gap_to_next == pytest.approx(gap_formula(p), rel=0.05)

    def test_requires_enough_levels(self):
        p = ModelParams(10, 1.0)
        spec = SpectrumResult(p, np.arange(10.0), 10, "iterative", 1e-9)
        with pytest.raises(ValueError):
            low_cluster(spec, p)

    def test_no_gap_found(self):
        p = ModelParams(4, 1.0)
        spec = SpectrumResult(p, np.linspace(0, 1e-6, 12), 12, "dense", 0.0)
        with pytest.raises(ClusterNotFoundError):
            low_cluster(spec, p)


def test_spectrum_csv_roundtrip(tmp_path):
    p = ModelParams(4, 1.5)
    spec = dense_spectrum(p)
    buf = io.StringIO()
    spectrum_to_csv(spec, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "n_sites,eta,index,energy,method,tolerance"
    assert len(lines) == 1 + 16
    first = lines[1].split(",")
    assert first[0] == "4" and first[2] == "0"
    assert float(first[3]) == pytest.approx(spec.energies[0])
    path = tmp_path / "spec.csv"
    spectrum_to_csv(spec, str(path))
    assert path.read_text().splitlines()[0].startswith("n_sites")
