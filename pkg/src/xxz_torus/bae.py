"""Inhomogeneous Bethe equations: overflow-safe residuals, Newton solver, energies.

For each root u_j the equation is L_j = R_j + I_j with

    L_j = e^{ i u_j} prod_l sin(u_j - u_l + i eta) / sin(u_j + i eta/2)^N
    R_j = e^{-i u_j} prod_l sin(u_j - u_l - i eta) / sin(u_j - i eta/2)^N
    I_j = 2 i e^{-N eta / 2} sin(u_j - sum_l u_l)

Imaginary parts of string roots reach N*eta/2, so naive products overflow
double range; every factor is accumulated as a complex logarithm and the
three terms are recombined only after subtracting a shared log scale.

The reported residual is r_j = (L_j - R_j - I_j) / S_j with
S_j = max(|L_j|, |R_j|, |I_j|, 1).

Near a string solution the system is extremely stiff (inner pair spacings
deviate from i*eta by exponentially small amounts), which puts a floor of
roughly eps / spacing-deviation on any double-precision residual.  The
solver therefore runs a damped Newton iteration in doubles first and, when
the requested tolerance lies below that floor, finishes with a few Newton
steps in extended precision; the certified residual of the polished roots is
what enters the convergence decision.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .model import (
    BetheRootSet,
    EnergyValue,
    LABEL_NEAR_DEGENERATE,
    ModelParams,
    canonical_order,
    ground_string_seed,
    periodic_distance,
)

LN2 = float(np.log(2.0))
_POLE_TOL = 1e-12
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200
_FD_STEP = 1e-7
_MAX_BACKTRACK = 30
_POLISH_DPS = 60


class PoleProximityError(ValueError):
    """A root sits on (or too close to) a zero of its equation's denominator."""

    def __init__(self, index, value):
        self.index = index
        super().__init__(
            f"root {index} too close to a denominator zero "
            f"(|sin(u +/- i eta/2)| = {value:.2e} <= {_POLE_TOL:.0e})")


class SingularJacobianError(RuntimeError):
    """Newton system singular; usually a seed coincidence, retry with jitter."""


class IterationBudgetError(RuntimeError):
    """Newton ran out of iterations or the line search found no descent."""


# ---------------------------------------------------------------------------
# Log-domain primitives
# ---------------------------------------------------------------------------

def log_sin(z):
    """Complex log of sin(z), overflow-safe for any imaginary part.

    Uses sin z = (i/2) e^{-iz} (1 - e^{2iz}) for Im z >= 0 and oddness below
    the axis; |e^{2iz}| <= 1 on the chosen branch so nothing overflows.  The
    imaginary part is meaningful modulo 2*pi only.
    """
    z = np.asarray(z, dtype=complex)
    flip = z.imag < 0
    w = np.where(flip, -z, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        ls = -1j * w + np.log(1.0 - np.exp(2j * w)) + (-LN2 + 0.5j * np.pi)
    return np.where(flip, ls + 1j * np.pi, ls)


def cot(z):
    """cot(z) through e^{2iz} on the branch where it never overflows."""
    z = np.asarray(z, dtype=complex)
    pos = z.imag >= 0
    w = np.exp(2j * np.where(pos, z, -z))   # |w| <= 1 by construction
    upper = 1j * (w + 1) / (w - 1)
    return np.where(pos, upper, -upper)      # cot is odd


def _log_terms(u, eta):
    """(logL, logR, logI) for all N equations; complex log per term."""
    u = np.asarray(u, dtype=complex)
    n = len(u)
    total = u.sum()
    diff = u[:, None] - u[None, :]
    logL = 1j * u + log_sin(diff + 1j * eta).sum(axis=1) - n * log_sin(u + 0.5j * eta)
    logR = -1j * u + log_sin(diff - 1j * eta).sum(axis=1) - n * log_sin(u - 0.5j * eta)
    logI = LN2 + 0.5j * np.pi - n * eta / 2 + log_sin(u - total)
    return logL, logR, logI


def _check_poles(u, eta):
    lo = np.minimum(log_sin(u + 0.5j * eta).real, log_sin(u - 0.5j * eta).real)
    bad = np.nonzero(lo <= np.log(_POLE_TOL))[0]
    if len(bad):
        j = int(bad[0])
        raise PoleProximityError(j, float(np.exp(lo[j])))


def _scaled_residual(u, eta, frozen_scale_log=None):
    """Residual vector r and the per-equation log scale actually used.

    With frozen_scale_log the terms are divided by a fixed e^{scale} instead
    of the current one; that version is holomorphic in the roots and is what
    the Newton linearization differentiates.
    """
    logL, logR, logI = _log_terms(u, eta)
    c = np.maximum(np.maximum(logL.real, logR.real), logI.real)
    finite = np.isfinite(c)
    scale_log = np.where(finite, np.maximum(c, 0.0), 0.0)
    if frozen_scale_log is not None:
        scale_log = frozen_scale_log
    with np.errstate(invalid="ignore", over="ignore"):
        r = (np.exp(logL - scale_log) - np.exp(logR - scale_log)
             - np.exp(logI - scale_log))
    # all three terms exactly zero: the equation is satisfied as 0 = 0
    r = np.where(np.isnan(r), 0.0, r)
    return r, scale_log


@dataclass(frozen=True)
class BaeResidual:
    """Per-equation scaled residuals r_j and the normalizers S_j >= 1."""

    values: np.ndarray
    scale_factors: np.ndarray

    @property
    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def bae_residual(root_set: BetheRootSet) -> BaeResidual:
    """Scaled residual of the equations at the set's roots."""
    u = np.asarray(root_set.roots, dtype=complex)
    eta = root_set.params.eta
    _check_poles(u, eta)
    r, scale_log = _scaled_residual(u, eta)
    return BaeResidual(values=r, scale_factors=np.exp(scale_log))


# ---------------------------------------------------------------------------
# Damped Newton in doubles
# ---------------------------------------------------------------------------

def _merit(u, eta):
    r, _ = _scaled_residual(u, eta)
    m = np.max(np.abs(r))
    return np.inf if not np.isfinite(m) else float(m)


def _newton_double(u0, eta, tol, max_iter):
    """Backtracking Newton on the 2N real unknowns via the complex system.

    The unscaled equations are holomorphic in the roots, so the 2N x 2N real
    Jacobian is the Cauchy-Riemann embedding of the complex N x N one; a
    forward difference along the real axis of each root (scale held frozen)
    recovers it with N evaluations.  The line search backtracks on the scaled
    residual inf-norm.
    """
    u = np.asarray(u0, dtype=complex).copy()
    n = len(u)
    fn = _merit(u, eta)
    cond = np.nan
    it = 0
    for it in range(max_iter):
        if fn <= tol:
            return u, fn, it, cond, True
        g0, frozen = _scaled_residual(u, eta)
        A = np.empty((n, n), dtype=complex)
        for l in range(n):
            h = _FD_STEP * (1.0 + abs(u[l]))
            up = u.copy()
            up[l] += h
            gl, _ = _scaled_residual(up, eta, frozen_scale_log=frozen)
            A[:, l] = (gl - g0) / h
        if not np.all(np.isfinite(A)):
            raise SingularJacobianError("non-finite Jacobian entries")
        try:
            cond = float(np.linalg.cond(A))
            step = np.linalg.solve(A, -g0)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(
                "singular Newton system; seed roots may coincide -- "
                "retry with jitter") from exc
        lam = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACK):
            un = u + lam * step
            fnw = _merit(un, eta)
            if fnw < fn:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            # progress exhausted at the double-precision floor
            return u, fn, it, cond, False
        u, fn = un, fnw
    return u, fn, max_iter, cond, fn <= tol


# ---------------------------------------------------------------------------
# Extended-precision polish
# ---------------------------------------------------------------------------

def _mp_terms(u, eta, n):
    total = mp.fsum(u)
    L, R, I = [], [], []
    for j in range(n):
        uj = u[j]
        pl = mp.mpf(1)
        pr = mp.mpf(1)
        for l in range(n):
            pl *= mp.sin(uj - u[l] + 1j * eta)
            pr *= mp.sin(uj - u[l] - 1j * eta)
        L.append(mp.expj(uj) * pl / mp.sin(uj + 0.5j * eta) ** n)
        R.append(mp.expj(-uj) * pr / mp.sin(uj - 0.5j * eta) ** n)
        I.append(2j * mp.exp(-n * eta / 2) * mp.sin(uj - total))
    return L, R, I


def _mp_scales(u, eta, n):
    L, R, I = _mp_terms(u, eta, n)
    return [max(abs(L[j]), abs(R[j]), abs(I[j]), mp.mpf(1)) for j in range(n)]


def _mp_residual(u, eta, n, scales):
    L, R, I = _mp_terms(u, eta, n)
    return [(L[j] - R[j] - I[j]) / scales[j] for j in range(n)]


def _polish_mp(u0, eta_f, tol, max_iter=40, dps=_POLISH_DPS):
    """Newton at dps decimal digits; returns (roots, residual, iters, ok)."""
    with mp.workdps(dps):
        n = len(u0)
        eta = mp.mpf(eta_f)
        u = [mp.mpc(z) for z in u0]
        h = mp.mpf(10) ** (-(2 * dps) // 5)
        for it in range(max_iter):
            scales = _mp_scales(u, eta, n)
            r = _mp_residual(u, eta, n, scales)
            fn = max(abs(x) for x in r)
            if fn <= tol:
                return np.array([complex(z) for z in u]), float(fn), it, True
            A = mp.zeros(n, n)
            for l in range(n):
                up = list(u)
                up[l] = up[l] + h
                rp = _mp_residual(up, eta, n, scales)
                for j in range(n):
                    A[j, l] = (rp[j] - r[j]) / h
            try:
                delta = mp.lu_solve(A, mp.matrix([-x for x in r]))
            except ZeroDivisionError:
                return np.array([complex(z) for z in u]), float(fn), it, False
            lam = mp.mpf(1)
            ok = False
            for _ in range(_MAX_BACKTRACK):
                un = [u[j] + lam * delta[j] for j in range(n)]
                rn = _mp_residual(un, eta, n, _mp_scales(un, eta, n))
                fnn = max(abs(x) for x in rn)
                if fnn < fn:
                    ok = True
                    break
                lam /= 2
            if not ok:
                return np.array([complex(z) for z in u]), float(fn), it, False
            u = un
        scales = _mp_scales(u, eta, n)
        fn = max(abs(x) for x in _mp_residual(u, eta, n, scales))
        return np.array([complex(z) for z in u]), float(fn), max_iter, fn <= tol


# ---------------------------------------------------------------------------
# Public solver
# ---------------------------------------------------------------------------

@dataclass
class SolveReport:
    """Outcome of one Newton solve, with solver configuration echo."""

    converged: bool
    iterations: int
    final_residual: float
    root_set: BetheRootSet
    jacobian_condition_estimate: float
    conjugation_gap: float = np.nan
    double_residual: float = np.nan
    polished: bool = False
    config: dict = field(default_factory=dict)


def solve(seed: BetheRootSet, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER, polish: str = "auto") -> SolveReport:
    """Damped Newton from a seed root set.

    polish: 'auto' runs the extended-precision finish only when doubles stall
    above tol; 'never' stays in doubles; 'always' forces the finish.  The
    reported final_residual is the certified one (extended-precision when the
    polish ran); re-evaluating bae_residual on the returned double-rounded
    roots can sit far above it for stiff strings -- that floor is intrinsic.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if polish not in ("auto", "never", "always"):
        raise ValueError("polish must be 'auto', 'never', or 'always'")
    params = seed.params
    eta = params.eta
    _check_poles(seed.roots, eta)
    u, fn, iters, cond, _ = _newton_double(seed.roots, eta, tol, max_iter)
    double_residual = fn
    final = fn
    polished = False
    if polish == "always" or (polish == "auto" and final > tol):
        u_mp, fn_mp, it_mp, _ = _polish_mp(u, eta, tol)
        iters += it_mp
        polished = True
        if fn_mp < final:
            u, final = u_mp, fn_mp
    converged = final <= tol
    u = canonical_order(u)
    _check_poles(u, eta)
    root_set = BetheRootSet(params, u, seed.label,
                            residual_inf_norm=final, seed_kind=seed.seed_kind)
    return SolveReport(
        converged=converged,
        iterations=iters,
        final_residual=final,
        root_set=root_set,
        jacobian_condition_estimate=cond,
        conjugation_gap=root_set.conjugation_gap(),
        double_residual=double_residual,
        polished=polished,
        config={"tol": tol, "max_iter": max_iter, "polish": polish},
    )


# ---------------------------------------------------------------------------
# Energy from roots
# ---------------------------------------------------------------------------

def energy_from_roots(root_set: BetheRootSet) -> EnergyValue:
    """E = 2 i sinh(eta) sum_j [cot(u_j + i eta/2) - cot(u_j - i eta/2)]
           - N cosh(eta) - 2 sinh(eta)."""
    u = np.asarray(root_set.roots, dtype=complex)
    params = root_set.params
    n, eta = params.n_sites, params.eta
    _check_poles(u, eta)
    s = np.sum(cot(u + 0.5j * eta) - cot(u - 0.5j * eta))
    e = 2j * np.sinh(eta) * s - n * np.cosh(eta) - 2 * np.sinh(eta)
    return EnergyValue(value=float(e.real), imag_leakage=float(abs(e.imag)))


# ---------------------------------------------------------------------------
# Near-degenerate search
# ---------------------------------------------------------------------------

DEDUP_TOL = 1e-6
# near-string basins can stall around 1e-2 in doubles; anything below this
# is worth certifying with the extended-precision finish
_PROBE_RESIDUAL = 1e-1
_PROBE_DEDUP = 1e-3


def multi_start_near_degenerate(params: ModelParams, n_starts: int,
                                tol: float = 1e-10, seed: int = 12345,
                                jitter: float = 0.005,
                                cluster_levels=None,
                                rescue_budget: int = 24) -> list:
    """Newton solves from randomly displaced ground-string seeds.

    Each start shifts the whole string by a random real offset and jitters
    every root, then runs a fast double-precision probe.  Probe endpoints
    below the stall threshold are certified at full tolerance; stiff systems
    (large eta) stall high in doubles even inside a basin, so up to
    rescue_budget of the lowest-residual stalls get a certification attempt
    as well.  Results are deduplicated modulo the pi period and root
    permutation.  When cluster_levels (sorted exact-diag energies) is given,
    each report's config records the distance to the nearest level.
    """
    if n_starts < 0:
        raise ValueError("n_starts must be >= 0")
    rng = np.random.default_rng(seed)
    base = ground_string_seed(params).roots
    survivors, stalled = [], []
    for _ in range(n_starts):
        offset = rng.uniform(-np.pi, np.pi)
        noise = jitter * (rng.standard_normal(params.n_sites)
                          + 1j * rng.standard_normal(params.n_sites))
        start = BetheRootSet(params, base + offset + noise,
                             LABEL_NEAR_DEGENERATE, seed_kind="ground-string-displaced")
        try:
            probe = solve(start, tol=tol, max_iter=100, polish="never")
        except (SingularJacobianError, PoleProximityError):
            continue
        if probe.final_residual <= _PROBE_RESIDUAL:
            survivors.append(probe)
        else:
            stalled.append(probe)
    stalled.sort(key=lambda p: p.final_residual)
    found = []
    for probe in survivors + stalled[:rescue_budget]:
        u_probe = probe.root_set.roots
        if any(np.max(periodic_distance(u_probe, other.root_set.roots)) < _PROBE_DEDUP
               for other in found):
            continue
        try:
            report = solve(probe.root_set, tol=tol, max_iter=60)
        except (SingularJacobianError, PoleProximityError):
            continue
        if not report.converged:
            continue
        roots = report.root_set.roots
        if any(np.max(periodic_distance(roots, other.root_set.roots)) < DEDUP_TOL
               for other in found):
            continue
        energy = energy_from_roots(report.root_set)
        report.config["energy"] = energy.value
        if cluster_levels is not None:
            levels = np.asarray(cluster_levels, dtype=float)
            report.config["nearest_cluster_level_distance"] = float(
                np.min(np.abs(levels - energy.value)))
        found.append(report)
    return found


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def root_set_to_csv(root_set: BetheRootSet, fh) -> None:
    """CSV: n_sites, eta, label, index_j, re_u, im_u, residual_abs, seed_kind."""
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "w")
        close = True
    try:
        try:
            per_root = np.abs(bae_residual(root_set).values)
        except PoleProximityError:
            per_root = np.full(root_set.params.n_sites, np.nan)
        fh.write("n_sites,eta,label,index_j,re_u,im_u,residual_abs,seed_kind\n")
        p = root_set.params
        for j, (u, r) in enumerate(zip(root_set.roots, per_root), start=1):
            fh.write(f"{p.n_sites},{p.eta:.10g},{root_set.label},{j},"
                     f"{u.real:.15e},{u.imag:.15e},{r:.6e},{root_set.seed_kind}\n")
    finally:
        if close:
            fh.close()


def solve_report_to_json(report: SolveReport) -> str:
    """JSON document with all report fields plus the configuration echo."""
    rs = report.root_set
    doc = {
        "converged": bool(report.converged),
        "iterations": int(report.iterations),
        "final_residual": float(report.final_residual),
        "double_residual": float(report.double_residual),
        "polished": bool(report.polished),
        "jacobian_condition_estimate": _json_float(report.jacobian_condition_estimate),
        "conjugation_gap": _json_float(report.conjugation_gap),
        "root_set": {
            "n_sites": rs.params.n_sites,
            "eta": rs.params.eta,
            "label": rs.label,
            "seed_kind": rs.seed_kind,
            "residual_inf_norm": _json_float(rs.residual_inf_norm),
            "roots": [[z.real, z.imag] for z in rs.roots],
        },
        "config": report.config,
    }
    return json.dumps(doc, indent=2)


def _json_float(x):
    x = float(x)
    return x if np.isfinite(x) else None
