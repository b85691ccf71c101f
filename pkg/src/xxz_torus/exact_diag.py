"""Twisted-boundary Hamiltonian on the full 2^N space and its low spectrum.

Basis conventions: sigma^z product basis, bit b_{j-1} of the basis index is 1
for spin up at site j (site 1 is the lowest-order bit).  In this basis every
matrix element is real:

    H = - sum_{j=1}^{N-1} [ xx + yy + cosh(eta) zz ]_{j,j+1}
        - [ xx - yy - cosh(eta) zz ]_{N,1}

Bulk bonds flip anti-aligned spin pairs (element -2); the twisted bond flips
aligned pairs.  Spin-flip parity (the product of all sigma^z) is conserved,
which splits the space into two popcount-parity sectors of dimension 2^(N-1);
the dense solver diagonalizes the sectors separately and merges.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .model import ModelParams, gap_formula

DENSE_MAX_SITES = 14
MATRIX_FREE_MAX_SITES = 26
DEFAULT_SEED = 12345

MODE_DENSE = "dense"
MODE_MATRIX_FREE = "matrix-free"


class EigensolverError(RuntimeError):
    """Iterative eigensolver failed to converge within its budget."""


class ClusterNotFoundError(RuntimeError):
    """No gap exceeding the cluster threshold inside the converged window."""


def _bonds(n):
    """(bit_p, bit_q, twisted) for the N-1 bulk bonds plus the boundary bond.

    The twisted flag doubles as the flip condition: bulk bonds couple
    anti-aligned pairs, the twisted bond couples aligned ones (and its zz
    sign is reversed).
    """
    out = [(p, p + 1, False) for p in range(n - 1)]
    out.append((n - 1, 0, True))
    return out


def _bit_parity(a):
    a = a ^ (a >> 16)
    a = a ^ (a >> 8)
    a = a ^ (a >> 4)
    a = a ^ (a >> 2)
    a = a ^ (a >> 1)
    return a & 1


def _diagonal(states, n, eta):
    ch = np.cosh(eta)
    diag = np.zeros(len(states))
    for p, q, twisted in _bonds(n):
        sp = 2.0 * ((states >> p) & 1) - 1.0
        sq = 2.0 * ((states >> q) & 1) - 1.0
        sign = 1.0 if twisted else -1.0
        diag += sign * ch * sp * sq
    return diag


class _Sector:
    """One popcount-parity sector: index tables and a matvec closure."""

    def __init__(self, n, eta, parity):
        dim = 1 << n
        states = np.arange(dim, dtype=np.int64)
        sec = states[_bit_parity(states) == parity]
        pos = np.full(dim, -1, dtype=np.int32)
        pos[sec] = np.arange(len(sec), dtype=np.int32)
        self.states = sec
        self.dim = len(sec)
        self.diag = _diagonal(sec, n, eta)
        self.pairs = []
        for p, q, want_equal in _bonds(n):
            mask = (1 << p) | (1 << q)
            equal = (((sec >> p) ^ (sec >> q)) & 1) == 0
            dst = np.nonzero(equal == want_equal)[0].astype(np.int32)
            src = pos[sec[dst] ^ mask]
            self.pairs.append((dst, src))

    def matvec(self, x):
        x = np.asarray(x).ravel()
        y = self.diag * x
        for dst, src in self.pairs:
            y[dst] -= 2.0 * x[src]
        return y

    def dense_matrix(self):
        H = np.zeros((self.dim, self.dim))
        H[np.arange(self.dim), np.arange(self.dim)] = self.diag
        for dst, src in self.pairs:
            H[dst, src] -= 2.0
        return H


@dataclass
class OperatorHandle:
    """Real-symmetric Hamiltonian exposed as a linear map on 2^N vectors."""

    params: ModelParams
    mode: str
    dimension: int
    _diag: np.ndarray = field(repr=False)
    _flip_pairs: list = field(repr=False)

    def apply(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != (self.dimension,):
            raise ValueError(f"expected vector of length {self.dimension}")
        y = self._diag * x
        for dst, src in self._flip_pairs:
            y[dst] -= 2.0 * x[src]
        return y

    def dense_matrix(self):
        """Materialize the full matrix (dense mode only; memory 8*4^N bytes)."""
        if self.mode != MODE_DENSE:
            raise ValueError("dense_matrix requires a dense-mode handle")
        H = np.zeros((self.dimension, self.dimension))
        idx = np.arange(self.dimension)
        H[idx, idx] = self._diag
        for dst, src in self._flip_pairs:
            H[dst, src] -= 2.0
        return H


def build_hamiltonian(params: ModelParams, mode: str = MODE_DENSE) -> OperatorHandle:
    """Assemble the twisted-boundary Hamiltonian stencil for the given mode."""
    n = params.n_sites
    if mode == MODE_DENSE:
        if n > DENSE_MAX_SITES:
            raise ValueError(f"dense mode supports n_sites <= {DENSE_MAX_SITES}")
    elif mode == MODE_MATRIX_FREE:
        if n > MATRIX_FREE_MAX_SITES:
            raise ValueError(
                f"matrix-free mode supports n_sites <= {MATRIX_FREE_MAX_SITES}")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    dim = 1 << n
    states = np.arange(dim, dtype=np.int64)
    diag = _diagonal(states, n, params.eta)
    pairs = []
    for p, q, want_equal in _bonds(n):
        mask = (1 << p) | (1 << q)
        equal = (((states >> p) ^ (states >> q)) & 1) == 0
        dst = np.nonzero(equal == want_equal)[0].astype(np.int64)
        pairs.append((dst, dst ^ mask))
    return OperatorHandle(params, mode, dim, diag, pairs)


@dataclass
class SpectrumResult:
    """Sorted low-lying eigenvalues with method metadata."""

    params: ModelParams
    energies: np.ndarray
    count: int
    method: str
    tolerance: float

    def __post_init__(self):
        self.energies = np.sort(np.asarray(self.energies, dtype=float))
        if self.count < 1:
            raise ValueError("count must be >= 1")


def operator_norm_estimate(params: ModelParams) -> float:
    """Triangle-inequality bound (2 + cosh eta) * N on the operator norm."""
    return (2.0 + np.cosh(params.eta)) * params.n_sites


# ---------------------------------------------------------------------------
# Dense path: per-sector diagonalization
# ---------------------------------------------------------------------------

def sector_spectra(params: ModelParams):
    """Full spectrum of each parity sector (even, odd), each sorted."""
    if params.n_sites > DENSE_MAX_SITES:
        raise ValueError(f"dense path supports n_sites <= {DENSE_MAX_SITES}")
    out = []
    for parity in (0, 1):
        sec = _Sector(params.n_sites, params.eta, parity)
        w = eigh(sec.dense_matrix(), eigvals_only=True, driver="evd",
                 overwrite_a=True, check_finite=False)
        out.append(w)
    return out


def dense_spectrum(params: ModelParams) -> SpectrumResult:
    """All 2^N eigenvalues via the two parity sectors."""
    even, odd = sector_spectra(params)
    energies = np.sort(np.concatenate([even, odd]))
    return SpectrumResult(params, energies, len(energies), MODE_DENSE, 0.0)


# ---------------------------------------------------------------------------
# Iterative path: thick-restart Lanczos with full reorthogonalization
# ---------------------------------------------------------------------------

def _thick_restart_lanczos(matvec, dim, k, ncv, tol_abs, v0, max_restarts=600):
    """Smallest k eigenvalues of a symmetric operator.

    Thick-restart Lanczos keeping ~1.5k Ritz vectors per restart; the basis
    is fully reorthogonalized (two Gram-Schmidt passes), which keeps copies
    of nearly degenerate eigenvalues from being lost.  Convergence is on the
    standard residual estimate |beta * s_last| <= tol_abs per wanted pair.
    """
    if not (1 <= k <= dim):
        raise ValueError("need 1 <= k <= dim")
    if k == dim or ncv >= dim:
        # space small enough to diagonalize directly
        H = np.column_stack([matvec(col) for col in np.eye(dim)])
        return np.linalg.eigvalsh(H)[:k], 0
    ncv = max(ncv, k + 2)
    V = np.zeros((ncv + 1, dim))
    V[0] = v0 / np.linalg.norm(v0)
    T = np.zeros((ncv + 1, ncv + 1))
    nlock = 0
    n_mv = 0
    rng = np.random.default_rng(DEFAULT_SEED + 1)
    for _ in range(max_restarts):
        j = nlock
        while j < ncv:
            w = matvec(V[j])
            n_mv += 1
            h = V[: j + 1] @ w
            w = w - V[: j + 1].T @ h
            h2 = V[: j + 1] @ w
            w = w - V[: j + 1].T @ h2
            h += h2
            T[: j + 1, j] = h
            T[j, : j + 1] = h
            beta = np.linalg.norm(w)
            T[j + 1, j] = beta
            T[j, j + 1] = beta
            if beta < 1e-13:
                # invariant subspace hit; continue in a fresh direction
                w = rng.standard_normal(dim)
                w -= V[: j + 1].T @ (V[: j + 1] @ w)
                beta = np.linalg.norm(w)
            V[j + 1] = w / beta
            j += 1
        theta, S = np.linalg.eigh(T[:ncv, :ncv])
        resid = np.abs(T[ncv, ncv - 1] * S[ncv - 1, :])
        if np.all(resid[:k] <= tol_abs):
            return theta[:k], n_mv
        m = min(ncv - 2, max(k + 10, (3 * k) // 2))
        Y = V[:ncv].T @ S[:, :m]
        beta_k = T[ncv, ncv - 1]
        V_new = np.zeros_like(V)
        V_new[:m] = Y.T
        V_new[m] = V[ncv]
        V = V_new
        T = np.zeros((ncv + 1, ncv + 1))
        T[np.arange(m), np.arange(m)] = theta[:m]
        T[m, :m] = beta_k * S[ncv - 1, :m]
        T[:m, m] = T[m, :m]
        nlock = m
    raise EigensolverError(
        f"Lanczos did not converge {k} eigenvalues to {tol_abs:.1e} "
        f"within {max_restarts} restarts (ncv={ncv}, dim={dim})")


def iterative_lowest(params: ModelParams, k, tol=1e-9, seed=DEFAULT_SEED,
                     ncv=None) -> SpectrumResult:
    """k smallest eigenvalues by per-sector thick-restart Lanczos.

    Each parity sector is solved for k eigenvalues and the union is merged,
    so degenerate pairs straddling the sectors are never missed.  tol is
    relative to the operator-norm estimate.
    """
    n = params.n_sites
    if n > MATRIX_FREE_MAX_SITES:
        raise ValueError(f"matrix-free path supports n_sites <= {MATRIX_FREE_MAX_SITES}")
    tol_abs = tol * operator_norm_estimate(params)
    merged = []
    for parity in (0, 1):
        sec = _Sector(n, params.eta, parity)
        k_sec = min(k, sec.dim)
        if ncv is None:
            ncv_sec = min(sec.dim, max(2 * k_sec + 2, 6 * n + 40))
        else:
            ncv_sec = min(sec.dim, ncv)
        rng = np.random.default_rng(seed + parity)
        v0 = rng.standard_normal(sec.dim)
        vals, _ = _thick_restart_lanczos(sec.matvec, sec.dim, k_sec, ncv_sec,
                                         tol_abs, v0)
        merged.append(vals)
    energies = np.sort(np.concatenate(merged))[:k]
    return SpectrumResult(params, energies, len(energies), "iterative", tol)


def lowest_eigenvalues(op: OperatorHandle, k: int, tol: float = 1e-9,
                       seed: int = DEFAULT_SEED) -> SpectrumResult:
    """k smallest eigenvalues; dense mode returns the full spectrum."""
    if not (1 <= k <= op.dimension):
        raise ValueError(f"need 1 <= k <= {op.dimension}")
    if op.mode == MODE_DENSE:
        return dense_spectrum(op.params)
    return iterative_lowest(op.params, k, tol=tol, seed=seed)


# ---------------------------------------------------------------------------
# Spectrum analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterReport:
    """Low-energy cluster: its size, energy span, and the gap above it."""

    size: int
    span: float
    gap_to_next: float
    threshold: float
    energies: np.ndarray


def low_cluster(spectrum: SpectrumResult, params: ModelParams,
                threshold_factor: float = 0.5) -> ClusterReport:
    """Split the low spectrum at the first gap above threshold_factor * gap.

    The expected cluster holds 2N states: the twofold ground multiplet plus
    the 2N - 2 nearly degenerate states.
    """
    need = 2 * params.n_sites + 2
    if spectrum.count < need:
        raise ValueError(f"need at least {need} converged eigenvalues, "
                         f"have {spectrum.count}")
    e = spectrum.energies
    threshold = threshold_factor * gap_formula(params)
    gaps = np.diff(e)
    idx = np.nonzero(gaps > threshold)[0]
    if len(idx) == 0:
        raise ClusterNotFoundError(
            f"no gap above {threshold:.3e} within the converged window")
    cut = int(idx[0])
    return ClusterReport(
        size=cut + 1,
        span=float(e[cut] - e[0]),
        gap_to_next=float(e[cut + 1] - e[cut]),
        threshold=float(threshold),
        energies=e[: cut + 1].copy(),
    )


def parity_check(op: OperatorHandle, n_vectors: int = 10,
                 seed: int = DEFAULT_SEED) -> float:
    """max ||[H, P] v|| / ||v|| over random v, P = product of all sigma^z.

    P is diagonal here; the commutator vanishes identically because every
    flip term preserves popcount parity, so this measures pure roundoff.
    """
    n = op.params.n_sites
    states = np.arange(op.dimension, dtype=np.int64)
    n_down = n - _popcount(states, n)
    pvec = np.where(n_down % 2 == 1, -1.0, 1.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_vectors):
        v = rng.standard_normal(op.dimension)
        comm = op.apply(pvec * v) - pvec * op.apply(v)
        worst = max(worst, np.linalg.norm(comm) / np.linalg.norm(v))
    return worst


def _popcount(a, nbits):
    out = np.zeros_like(a)
    for p in range(nbits):
        out += (a >> p) & 1
    return out


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def spectrum_to_csv(spectrum: SpectrumResult, fh) -> None:
    """CSV columns: n_sites, eta, index, energy, method, tolerance."""
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "w")
        close = True
    try:
        fh.write("n_sites,eta,index,energy,method,tolerance\n")
        p = spectrum.params
        for i, e in enumerate(spectrum.energies):
            fh.write(f"{p.n_sites},{p.eta:.10g},{i},{e:.15e},"
                     f"{spectrum.method},{spectrum.tolerance:.3e}\n")
    finally:
        if close:
            fh.close()
