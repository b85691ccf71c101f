"""Model parameters, closed-form energies, and string-hypothesis seed generators.

Everything here is a pure function of the lattice size N and the anisotropy
eta > 0 (gapped ferromagnetic regime, twisted boundary).  Energies are in
units of the exchange coupling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Labels a BetheRootSet can carry.
LABEL_GROUND = "ground"
LABEL_GROUND_ALT = "ground-alt-string"
LABEL_EXCITED = "excited"
LABEL_NEAR_DEGENERATE = "near-degenerate"

_VALID_LABELS = (LABEL_GROUND, LABEL_GROUND_ALT, LABEL_EXCITED, LABEL_NEAR_DEGENERATE)

HALF_PI = np.pi / 2.0


@dataclass(frozen=True)
class ModelParams:
    """Lattice size and anisotropy; the coordinate of every computation."""

    n_sites: int
    eta: float

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"n_sites must be an integer >= 2, got {self.n_sites}")
        if not (self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        object.__setattr__(self, "eta", float(self.eta))


@dataclass(frozen=True)
class EnergyValue:
    """Real energy plus the magnitude of any discarded imaginary part."""

    value: float
    imag_leakage: float = 0.0


@dataclass
class BetheRootSet:
    """N complex spectral parameters with state label and provenance.

    Real parts live in [-pi/2, pi/2); the roots are pi-periodic so values on
    either side of the boundary +/-pi/2 denote the same point.
    """

    params: ModelParams
    roots: np.ndarray
    label: str
    residual_inf_norm: float = np.inf
    seed_kind: str = "unspecified"

    def __post_init__(self):
        self.roots = np.asarray(self.roots, dtype=complex)
        if self.roots.shape != (self.params.n_sites,):
            raise ValueError(
                f"expected {self.params.n_sites} roots, got shape {self.roots.shape}"
            )
        if self.label not in _VALID_LABELS:
            raise ValueError(f"unknown label {self.label!r}")

    def conjugation_gap(self) -> float:
        """Distance between the root multiset and its complex conjugate."""
        a = canonical_order(self.roots)
        b = canonical_order(np.conj(self.roots))
        return float(np.max(periodic_distance(a, b)))


def wrap_real(u):
    """Wrap real parts into [-pi/2, pi/2); imaginary parts untouched."""
    u = np.asarray(u, dtype=complex)
    re = np.mod(u.real + HALF_PI, np.pi) - HALF_PI
    return re + 1j * u.imag


def canonical_order(u):
    """Wrap and sort by descending imaginary part (ties by real part)."""
    u = wrap_real(u)
    return u[np.lexsort((u.real, -u.imag))]


def periodic_distance(a, b):
    """Per-element distance, pi-periodic in the real direction."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    dre = np.abs(np.mod(a.real - b.real + HALF_PI, np.pi) - HALF_PI)
    return np.hypot(dre, a.imag - b.imag)


# ---------------------------------------------------------------------------
# Closed-form energies
# ---------------------------------------------------------------------------

def ground_energy_formula(params: ModelParams) -> float:
    """Ground energy: -N cosh(eta) - 2 sinh(eta) + 4 sinh(eta) tanh(N eta / 2)."""
    n, eta = params.n_sites, params.eta
    return -n * np.cosh(eta) - 2 * np.sinh(eta) + 4 * np.sinh(eta) * np.tanh(n * eta / 2)


def periodic_ground_energy(params: ModelParams) -> float:
    """Ground energy of the periodic chain: -N cosh(eta)."""
    return -params.n_sites * np.cosh(params.eta)


def twisted_boundary_energy(params: ModelParams) -> float:
    """Finite-size boundary energy: -2 sinh(eta) + 4 sinh(eta) tanh(N eta / 2)."""
    n, eta = params.n_sites, params.eta
    return -2 * np.sinh(eta) + 4 * np.sinh(eta) * np.tanh(n * eta / 2)


def twisted_boundary_energy_limit(eta: float) -> float:
    """Large-N limit of the boundary energy: 2 sinh(eta)."""
    if not (eta > 0):
        raise ValueError("eta must be positive")
    return 2 * np.sinh(eta)


def excited_energy_formula(params: ModelParams) -> float:
    """Lowest excitation energy:

    -N cosh(eta) - 2 sinh(eta) + 4 sinh(eta) tanh((N-1) eta / 2)
                                + 4 sinh(eta) tanh(eta / 2).
    """
    n, eta = params.n_sites, params.eta
    sh = np.sinh(eta)
    return (-n * np.cosh(eta) - 2 * sh
            + 4 * sh * np.tanh((n - 1) * eta / 2)
            + 4 * sh * np.tanh(eta / 2))


def gap_formula(params: ModelParams) -> float:
    """Finite-size gap E1 - E0 (difference of the two closed forms)."""
    n, eta = params.n_sites, params.eta
    sh = np.sinh(eta)
    return (4 * sh * np.tanh(eta / 2)
            + 4 * sh * np.tanh((n - 1) * eta / 2)
            - 4 * sh * np.tanh(n * eta / 2))


def gap_limit(eta: float) -> float:
    """Large-N gap: 4 sinh(eta) tanh(eta / 2)."""
    if not (eta > 0):
        raise ValueError("eta must be positive")
    return 4 * np.sinh(eta) * np.tanh(eta / 2)


def ising_limit_ground(params: ModelParams) -> float:
    """Large-eta ground energy over cosh(eta): -N + 2."""
    return float(-params.n_sites + 2)


def ising_limit_excited(params: ModelParams) -> float:
    """Large-eta lowest excitation over cosh(eta): -N + 6."""
    return float(-params.n_sites + 6)


# ---------------------------------------------------------------------------
# String-hypothesis seeds
# ---------------------------------------------------------------------------

BRANCH_BOUNDARY = "boundary"
BRANCH_IMAGINARY_AXIS = "imaginary_axis"


def ground_string_seed(params: ModelParams, branch: str = BRANCH_BOUNDARY,
                       jitter: float = 0.0, rng=None) -> BetheRootSet:
    """Ideal N-string seed u_j = x0 + ((N+1)/2 - j) * eta * i.

    branch 'boundary' centers real parts at -pi/2; 'imaginary_axis' (odd N
    only) centers them at 0.  Optional uniform complex jitter of the given
    magnitude breaks seed-level coincidences.
    """
    n, eta = params.n_sites, params.eta
    if branch == BRANCH_BOUNDARY:
        x0 = -HALF_PI
        label, kind = LABEL_GROUND, "ground-string-boundary"
    elif branch == BRANCH_IMAGINARY_AXIS:
        if n % 2 == 0:
            raise ValueError("imaginary_axis branch requires odd n_sites")
        x0 = 0.0
        label, kind = LABEL_GROUND_ALT, "ground-string-axis"
    else:
        raise ValueError(f"unknown branch {branch!r}")
    j = np.arange(1, n + 1)
    roots = x0 + ((n + 1) / 2 - j) * eta * 1j
    roots = _apply_jitter(roots, jitter, rng)
    return BetheRootSet(params, wrap_real(roots), label, seed_kind=kind)


def excited_string_seed(params: ModelParams, jitter: float = 1e-3) -> BetheRootSet:
    """(N-1)-string plus a real root, all at the boundary -pi/2.

    u_1 = -pi/2;  u_j = -pi/2 + (N/2 - j + 1) * eta * i for j = 2..N.
    For even N the j = N/2 + 1 member coincides with u_1, so u_1 is shifted
    by `jitter` along the real axis to keep the Jacobian nonsingular.
    """
    n, eta = params.n_sites, params.eta
    if n < 3:
        raise ValueError("excited seed requires n_sites >= 3")
    roots = np.empty(n, dtype=complex)
    roots[0] = -HALF_PI
    j = np.arange(2, n + 1)
    roots[1:] = -HALF_PI + (n / 2 - j + 1) * eta * 1j
    if n % 2 == 0:
        roots[0] = -HALF_PI + jitter
    return BetheRootSet(params, wrap_real(roots), LABEL_EXCITED,
                        seed_kind="excited-string")


def _apply_jitter(roots, jitter, rng):
    if not jitter:
        return roots
    if rng is None:
        rng = np.random.default_rng(0)
    noise = rng.uniform(-1, 1, roots.shape) + 1j * rng.uniform(-1, 1, roots.shape)
    return roots + jitter * noise


def ideal_positions(root_set: BetheRootSet) -> np.ndarray:
    """Zero-deviation string positions matching the set's label/seed kind."""
    params = root_set.params
    if root_set.label == LABEL_GROUND:
        return ground_string_seed(params, BRANCH_BOUNDARY).roots
    if root_set.label == LABEL_GROUND_ALT:
        return ground_string_seed(params, BRANCH_IMAGINARY_AXIS).roots
    if root_set.label == LABEL_EXCITED:
        return excited_string_seed(params, jitter=0.0).roots
    raise ValueError(
        f"no ideal string reference defined for label {root_set.label!r}")


def string_deviations(root_set: BetheRootSet) -> np.ndarray:
    """Per-root difference (converged - ideal), greedily matched.

    Ideal positions are visited in order of descending imaginary part; each
    takes its nearest unused root (pi-periodic metric).  Not defined for
    near-degenerate sets.
    """
    ideal = ideal_positions(root_set)
    order = np.argsort(-ideal.imag, kind="stable")
    roots = wrap_real(root_set.roots)
    used = np.zeros(len(roots), dtype=bool)
    dev = np.empty(len(roots), dtype=complex)
    for idx in order:
        d = periodic_distance(roots, np.full_like(roots, ideal[idx]))
        d[used] = np.inf
        pick = int(np.argmin(d))
        used[pick] = True
        diff = roots[pick] - ideal[idx]
        # report the wrapped (nearest-image) real difference
        dre = np.mod(diff.real + HALF_PI, np.pi) - HALF_PI
        dev[idx] = dre + 1j * diff.imag
    return dev
