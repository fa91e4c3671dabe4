"""
Spectra, baths, rate matrices and Pauli generators.

Conventions
-----------
* Energies are measured from the ground level: ``energies[0] == 0``.
* ``gamma[n, m]`` is the rate of the jump ``n -> m``.
* The population generator ``M`` acts on column vectors, ``dp/dt = M @ p``,
  so ``M[m, n] = gamma[n, m]`` off the diagonal and every column sums to zero.
* The reduced generator ``G`` acts on ``p[1:]`` after eliminating
  ``p[0] = 1 - sum(p[1:])``; it obeys ``d p[1:]/dt = G @ (p_eq[1:] - p[1:])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInputError

FERMIONIC = "fermionic-flat"
BOSONIC = "bosonic-ohmic"
FIXED_RATE = "fixed-rate"
PEAKED = "peaked"
FAMILIES = (FERMIONIC, BOSONIC, FIXED_RATE, PEAKED)

DEFAULT_MATCH_TOL = 1e-9


def _finite_array(values, name):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite, got {values!r}")
    return arr


@dataclass(frozen=True)
class Spectrum:
    """Energies of a ``d``-level working fluid, ground level pinned at zero."""

    energies: tuple

    def __post_init__(self):
        e = _finite_array(self.energies, "energies")
        if e.ndim != 1 or e.size < 2:
            raise InvalidInputError("a spectrum needs at least two levels")
        if e[0] != 0.0:
            raise InvalidInputError("energies[0] must be exactly 0 (ground-level gauge)")
        object.__setattr__(self, "energies", tuple(float(x) for x in e))

    @classmethod
    def from_control(cls, control) -> "Spectrum":
        """Full-Hamiltonian control: the control vector lists the d-1 excited energies."""
        return cls((0.0, *np.asarray(control, dtype=float).ravel()))

    @property
    def dim(self) -> int:
        return len(self.energies)

    def array(self) -> np.ndarray:
        return np.array(self.energies)


@dataclass(frozen=True)
class BathModel:
    """A thermal bath: inverse temperature plus a rate family.

    ``params`` by family:

    ``fermionic-flat`` / ``bosonic-ohmic``
        ``{"gamma": coupling}``
    ``fixed-rate``
        ``{"rate": Gamma}``, a single thermalization rate for every observable
    ``peaked``
        ``{"targets": (eps_2, ..., eps_d), "gammas": {(n, m): rate}, "tol": float}``
        with 0-based level labels; ``gammas[(n, m)]`` is the ``n -> m`` rate at the
        target control, the reverse rate follows from detailed balance.
    """

    beta: float
    family: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        beta = float(self.beta)
        if not np.isfinite(beta) or beta <= 0:
            raise InvalidInputError(f"beta must be positive and finite, got {self.beta!r}")
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown bath family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "beta", beta)
        params = dict(self.params)
        if self.family in (FERMIONIC, BOSONIC):
            rates = [float(params.get("gamma", np.nan))]
        elif self.family == FIXED_RATE:
            rates = [float(params.get("rate", np.nan))]
        else:
            gammas = {tuple(int(i) for i in k): float(v) for k, v in dict(params.get("gammas", {})).items()}
            if not gammas:
                raise InvalidInputError("peaked bath needs per-pair constants 'gammas'")
            for n, m in gammas:
                if n == m or n < 0 or m < 0:
                    raise InvalidInputError(f"bad level pair {(n, m)} in peaked bath")
            params["gammas"] = gammas
            params["targets"] = tuple(float(x) for x in _finite_array(params.get("targets", ()), "targets"))
            params["tol"] = float(params.get("tol", DEFAULT_MATCH_TOL))
            rates = list(gammas.values())
        rates = np.asarray(rates)
        if not np.all(np.isfinite(rates)) or np.any(rates < 0) or not np.any(rates > 0):
            raise InvalidInputError(f"{self.family} bath needs non-negative rates with at least one positive")
        object.__setattr__(self, "params", params)

    @classmethod
    def fermionic(cls, beta, gamma=1.0):
        return cls(beta, FERMIONIC, {"gamma": gamma})

    @classmethod
    def bosonic(cls, beta, gamma=1.0):
        return cls(beta, BOSONIC, {"gamma": gamma})

    @classmethod
    def fixed_rate(cls, beta, rate=1.0):
        return cls(beta, FIXED_RATE, {"rate": rate})

    @classmethod
    def peaked(cls, beta, targets, gammas, tol=DEFAULT_MATCH_TOL):
        return cls(beta, PEAKED, {"targets": tuple(targets), "gammas": dict(gammas), "tol": tol})

    def matches(self, control) -> bool:
        """True if ``control`` sits on the target of a peaked bath (always True otherwise)."""
        if self.family != PEAKED:
            return True
        targets = np.array(self.params["targets"])
        control = np.asarray(control, dtype=float)
        return control.shape == targets.shape and bool(np.all(np.abs(control - targets) <= self.params["tol"]))


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Transition rates ``gamma[n, m]`` (n -> m) induced by one bath at one control."""

    gamma: np.ndarray
    beta: float
    energies: np.ndarray

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    def detailed_balance_residual(self) -> float:
        """max |G_nm - exp(beta (e_n - e_m)) G_mn| over all pairs."""
        e = self.energies
        boltz = np.exp(self.beta * (e[:, None] - e[None, :]))
        return float(np.max(np.abs(self.gamma - boltz * self.gamma.T)))


@dataclass(frozen=True, eq=False)
class PauliGenerator:
    """Full (d x d) and reduced ((d-1) x (d-1)) population generators of one bath."""

    full: np.ndarray
    reduced: np.ndarray
    gibbs: np.ndarray
    energies: np.ndarray

    @property
    def dim(self) -> int:
        return self.full.shape[0]

    @property
    def max_rate(self) -> float:
        return float(np.max(np.abs(self.full))) if self.full.size else 0.0


def gibbs_populations(beta, energies) -> np.ndarray:
    """Boltzmann populations ``exp(-beta e_n) / Z``.

    Parameters
    ----------
    beta : float
        Inverse temperature, ``beta >= 0``.
    energies : array_like or Spectrum
        Level energies.

    Returns
    -------
    numpy.ndarray
        Strictly positive populations summing to one.
    """
    if isinstance(energies, Spectrum):
        energies = energies.energies
    e = _finite_array(energies, "energies")
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise InvalidInputError(f"beta must be finite and >= 0, got {beta!r}")
    w = np.exp(-beta * (e - e.min()))
    return w / w.sum()


def rate_array(bath: BathModel, energies, control=None) -> np.ndarray:
    """Rates ``gamma[n, m]`` (n -> m) of ``bath`` for level energies ``energies``.

    The downhill rate of every pair is evaluated from the family formula and the
    uphill one is derived from detailed balance, so the ratio holds to rounding.
    For a ``peaked`` bath the given constant fixes one direction and the other
    is derived; all rates vanish unless ``control`` matches the bath target.

    ``fixed-rate`` baths are realised by ``gamma[n, m] = Gamma * p_eq[m]``, the
    unique pairwise-rate generator with ``dp/dt = Gamma (p_eq - p)``.
    """
    e = np.asarray(energies, dtype=float)
    d = e.size
    beta = bath.beta
    family = bath.family
    if family == FIXED_RATE:
        w = np.exp(-beta * (e - e.min()))
        gamma = np.broadcast_to(bath.params["rate"] * w / w.sum(), (d, d)).copy()
        np.fill_diagonal(gamma, 0.0)
        return gamma
    if family == PEAKED:
        gamma = np.zeros((d, d))
        if not bath.matches(e[1:] if control is None else control):
            return gamma
        for (n, m), g in bath.params["gammas"].items():
            if n >= d or m >= d:
                raise InvalidInputError(f"peaked pair {(n, m)} outside a {d}-level spectrum")
            gamma[n, m] = g
            gamma[m, n] = g * np.exp(beta * (e[m] - e[n]))
        return gamma
    de = e[:, None] - e[None, :]  # energy released by the jump n -> m
    gap = np.abs(de)
    if family == FERMIONIC:
        # f(-beta de) = 1 / (exp(-beta de) + 1)
        down = bath.params["gamma"] / (np.exp(-beta * gap) + 1.0)
    else:
        x = beta * gap
        with np.errstate(invalid="ignore", divide="ignore"):
            down = bath.params["gamma"] * gap / -np.expm1(-x)
        down = np.where(x == 0.0, bath.params["gamma"] / beta, down)
    gamma = np.where(de >= 0, down, down * np.exp(-beta * gap))
    np.fill_diagonal(gamma, 0.0)
    return gamma


def build_rate_matrix(spectrum, bath: BathModel, control=None) -> RateMatrix:
    """Rates of ``bath`` for a working fluid with the given spectrum (see ``rate_array``)."""
    if not isinstance(spectrum, Spectrum):
        spectrum = Spectrum(tuple(spectrum))
    e = spectrum.array()
    return RateMatrix(rate_array(bath, e, control), bath.beta, e)


def build_generator(rates: RateMatrix) -> PauliGenerator:
    """Pauli generator ``M`` and its reduced form ``G`` from a rate matrix."""
    g = rates.gamma
    full = g.T.copy()
    np.fill_diagonal(full, -g.sum(axis=1))
    reduced = full[1:, :1] - full[1:, 1:]
    gibbs = gibbs_populations(rates.beta, rates.energies)
    return PauliGenerator(full, reduced, gibbs, np.asarray(rates.energies, dtype=float))


@dataclass(frozen=True)
class GapWeights:
    """Coefficients ``c_alpha`` of the generalized average power, one per bath."""

    c: tuple

    def __post_init__(self):
        c = _finite_array(self.c, "weights")
        if c.ndim != 1 or c.size == 0:
            raise InvalidInputError("weights must be a non-empty vector")
        object.__setattr__(self, "c", tuple(float(x) for x in c))

    @property
    def is_positive(self) -> bool:
        return all(x >= 0 for x in self.c)

    def array(self) -> np.ndarray:
        return np.array(self.c)

    def __len__(self):
        return len(self.c)

    @classmethod
    def engine(cls, n_baths):
        return cls((1.0,) * n_baths)

    @classmethod
    def heater(cls, n_baths):
        return cls((-1.0,) * n_baths)

    @classmethod
    def refrigerator(cls, betas):
        """Cooling power of the coldest bath (largest beta)."""
        betas = list(betas)
        cold = int(np.argmax(betas))
        return cls(tuple(1.0 if i == cold else 0.0 for i in range(len(betas))))


@dataclass(frozen=True)
class MachineModel:
    """A working fluid under full spectral control coupled to a set of baths.

    Controls are the ``d - 1`` excited energies, each confined to a box.
    """

    baths: tuple
    bounds: tuple

    def __post_init__(self):
        baths = tuple(self.baths)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not baths:
            raise InvalidInputError("a model needs at least one bath")
        if not bounds:
            raise InvalidInputError("a model needs at least two levels")
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InvalidInputError(f"control box must satisfy lo < hi, got {(lo, hi)}")
        for b in baths:
            if b.family == PEAKED and len(b.params["targets"]) != len(bounds):
                raise InvalidInputError("peaked bath targets must list every excited energy")
        object.__setattr__(self, "baths", baths)
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return len(self.bounds) + 1

    @property
    def n_baths(self) -> int:
        return len(self.baths)

    @property
    def betas(self) -> np.ndarray:
        return np.array([b.beta for b in self.baths])

    def energies(self, control) -> np.ndarray:
        return np.concatenate(([0.0], np.asarray(control, dtype=float)))

    def rate_matrix(self, control, bath_index: int) -> RateMatrix:
        return build_rate_matrix(Spectrum.from_control(control), self.baths[bath_index], control)

    def generator(self, control, bath_index: int) -> PauliGenerator:
        return build_generator(self.rate_matrix(control, bath_index))

    def in_bounds(self, control) -> bool:
        c = np.asarray(control, dtype=float)
        lo, hi = np.array(self.bounds).T
        return bool(np.all(c >= lo) and np.all(c <= hi))


@dataclass
class ValidationReport:
    detailed_balance_residual: float
    column_sum_residual: float
    connected: bool
    components: list
    unreachable: list
    rate_scale: float = 1.0

    @property
    def ok(self) -> bool:
        return self.connected and self.detailed_balance_residual <= 1e-12 * max(1.0, self.rate_scale)

    def as_dict(self):
        return {
            "detailed_balance_residual": self.detailed_balance_residual,
            "column_sum_residual": self.column_sum_residual,
            "connected": self.connected,
            "components": self.components,
            "unreachable": self.unreachable,
        }


def transition_graph_components(rate_matrices: Sequence[RateMatrix]) -> list:
    """Strongly connected components of the union transition graph (0-based levels)."""
    d = rate_matrices[0].dim
    adj = np.zeros((d, d), dtype=bool)
    for r in rate_matrices:
        adj |= r.gamma > 0
    np.fill_diagonal(adj, False)
    _, labels = connected_components(adj.astype(int), directed=True, connection="strong")
    comps = {}
    for level, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(level)
    return sorted(comps.values())


def validate_model(rate_matrices: Sequence[RateMatrix]) -> ValidationReport:
    """Diagnostics for the rate matrices active along a protocol.

    Reports the worst detailed-balance residual, the worst generator column-sum
    residual and whether the union transition graph is strongly connected (the
    operational stand-in for a unique stationary / limit-cycle state). When it
    is not, ``unreachable`` lists every component not containing the ground level.
    """
    if not rate_matrices:
        raise InvalidInputError("nothing to validate")
    db = max(r.detailed_balance_residual() for r in rate_matrices)
    cs = 0.0
    scale = 0.0
    for r in rate_matrices:
        m = build_generator(r).full
        cs = max(cs, float(np.max(np.abs(m.sum(axis=0)))))
        scale = max(scale, float(np.max(r.gamma)))
    comps = transition_graph_components(rate_matrices)
    unreachable = [c for c in comps if 0 not in c]
    return ValidationReport(db, cs, len(comps) == 1, comps, unreachable, scale)
