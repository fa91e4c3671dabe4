"""
Fast-driving limit of periodically driven rate equations.

For a generalized Otto cycle (legs of constant control held for time
fractions ``mu_j``) the limit cycle collapses, as the period goes to zero, to a
constant state ``p0`` solving

    sum_j mu_j G_j (p_eq_j - p0) = 0            (reduced coordinates)

and the generalized average power is ``sum_j mu_j c_j e_j . (M_j p0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateCycleError, InvalidInputError
from .model import (
    BOSONIC,
    FERMIONIC,
    FIXED_RATE,
    GapWeights,
    MachineModel,
    PauliGenerator,
    rate_array,
    transition_graph_components,
)

COND_LIMIT = 1e12
FAST_REGIME_THRESHOLD = 1e-2


@dataclass(frozen=True)
class Leg:
    """Constant control ``control`` held in contact with bath ``bath`` for a fraction ``mu``."""

    control: tuple
    bath: int
    mu: float

    def __post_init__(self):
        object.__setattr__(self, "control", tuple(float(x) for x in np.atleast_1d(self.control)))
        object.__setattr__(self, "bath", int(self.bath))
        object.__setattr__(self, "mu", float(self.mu))


@dataclass(frozen=True)
class GeneralizedOttoCycle:
    """An infinitesimal-period protocol: ``L`` legs joined by quenches."""

    legs: tuple

    def __post_init__(self):
        legs = tuple(self.legs)
        if not legs:
            raise InvalidInputError("a cycle needs at least one leg")
        mus = np.array([leg.mu for leg in legs])
        if not np.all(np.isfinite(mus)) or np.any(mus < 0):
            raise InvalidInputError("time fractions must be finite and non-negative")
        if abs(mus.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"time fractions must sum to 1, got {mus.sum()!r}")
        object.__setattr__(self, "legs", legs)

    @classmethod
    def from_arrays(cls, controls, baths, mus, normalize=False):
        mus = np.asarray(mus, dtype=float)
        if normalize:
            mus = mus / mus.sum()
        return cls(tuple(Leg(c, b, m) for c, b, m in zip(controls, baths, mus)))

    @property
    def n_legs(self) -> int:
        return len(self.legs)

    @property
    def mus(self) -> np.ndarray:
        return np.array([leg.mu for leg in self.legs])

    @property
    def baths(self) -> tuple:
        return tuple(leg.bath for leg in self.legs)

    @property
    def controls(self) -> np.ndarray:
        return np.array([leg.control for leg in self.legs])

    def permuted(self, order) -> "GeneralizedOttoCycle":
        return GeneralizedOttoCycle(tuple(self.legs[i] for i in order))


@dataclass(frozen=True, eq=False)
class FastSteadyState:
    p0: np.ndarray
    residual: float


def leg_generators(cycle, model: MachineModel) -> list:
    return [model.generator(leg.control, leg.bath) for leg in cycle.legs]


def _check_model(cycle, model):
    for leg in cycle.legs:
        if not 0 <= leg.bath < model.n_baths:
            raise InvalidInputError(f"bath index {leg.bath} out of range")
        if len(leg.control) != model.dim - 1:
            raise InvalidInputError(f"control of length {len(leg.control)} for a {model.dim}-level model")


def generators_connected(mus, fulls) -> bool:
    """True if the legs with ``mu > 0`` jointly connect every level (strongly)."""
    fulls = [f for mu, f in zip(mus, fulls) if mu > 0]
    if not fulls:
        return False
    adj = np.zeros(fulls[0].shape, dtype=bool)
    for f in fulls:
        adj |= f.T > 0  # full[m, n] is the n -> m rate
    np.fill_diagonal(adj, False)
    n_comp, _ = connected_components(adj.astype(int), directed=True, connection="strong")
    return n_comp == 1


def _steady_state(mus, gens: Sequence[PauliGenerator], cond_limit=COND_LIMIT):
    agg = sum(mu * g.reduced for mu, g in zip(mus, gens))
    rhs = sum(mu * g.reduced @ g.gibbs[1:] for mu, g in zip(mus, gens))
    scale = max(g.max_rate for g in gens)
    singular = DegenerateCycleError(
        "aggregate generator is singular: the union transition graph of the legs "
        "is not connected (or every rate vanishes)"
    )
    if scale == 0.0:
        raise singular
    # a large condition number alone may just reflect rates spanning many decades
    # (large beta * gap); only a disconnected transition graph is truly degenerate
    if np.linalg.cond(agg) > cond_limit and not generators_connected(mus, [g.full for g in gens]):
        raise singular
    try:
        p_hat = np.linalg.solve(agg, rhs)
    except np.linalg.LinAlgError:
        raise singular from None
    p0 = np.concatenate(([1.0 - p_hat.sum()], p_hat))
    if not np.all(np.isfinite(p0)) or np.min(p0) < -1e-9 or np.max(p0) > 1 + 1e-9:
        raise singular
    residual = float(np.linalg.norm(rhs - agg @ p_hat))
    return p0, residual


def fast_steady_state(cycle: GeneralizedOttoCycle, model: MachineModel) -> FastSteadyState:
    """Zeroth-order (constant) limit-cycle populations of a generalized Otto cycle.

    Raises
    ------
    DegenerateCycleError
        If the legs (those with ``mu > 0``) do not jointly connect all levels,
        detected by a condition number above ``1e12`` of the time-weighted
        aggregate reduced generator confirmed on the transition graph.
    """
    _check_model(cycle, model)
    gens = leg_generators(cycle, model)
    try:
        p0, res = _steady_state(cycle.mus, gens)
    except DegenerateCycleError as exc:
        comps = transition_graph_components([model.rate_matrix(l.control, l.bath) for l in cycle.legs])
        raise DegenerateCycleError(f"{exc}; level components: {comps}") from None
    return FastSteadyState(p0, res)


def leg_heat_rates(cycle, model, p0=None) -> np.ndarray:
    """Heat flowing into the working fluid during each leg, per unit cycle time.

    Entry ``j`` is ``mu_j e_j . (M_j p0)``.
    """
    gens = leg_generators(cycle, model)
    if p0 is None:
        p0, _ = _steady_state(cycle.mus, gens)
    return np.array([leg.mu * g.energies @ (g.full @ p0) for leg, g in zip(cycle.legs, gens)])


def fast_gap(cycle: GeneralizedOttoCycle, weights: GapWeights, model: MachineModel) -> float:
    """Generalized average power of a cycle in the fast-driving limit."""
    if len(weights) != model.n_baths:
        raise InvalidInputError("one weight per bath is required")
    _check_model(cycle, model)
    c = weights.array()
    heats = leg_heat_rates(cycle, model, fast_steady_state(cycle, model).p0)
    return float(sum(c[leg.bath] * q for leg, q in zip(cycle.legs, heats)))


def _thermal_rates_batch(family, betas, coef, energies):
    """Fermionic / bosonic rates for a stack of legs; ``(L, d)`` energies -> ``(L, d, d)``."""
    de = energies[:, :, None] - energies[:, None, :]
    gap = np.abs(de)
    beta = betas[:, None, None]
    if family == FERMIONIC:
        down = coef[:, None, None] / (np.exp(-beta * gap) + 1.0)
    else:
        x = beta * gap
        with np.errstate(invalid="ignore", divide="ignore"):
            down = coef[:, None, None] * gap / -np.expm1(-x)
        down = np.where(x == 0.0, (coef / betas)[:, None, None], down)
    return np.where(de >= 0, down, down * np.exp(-beta * gap))


def _leg_rates(energies, baths):
    families = {b.family for b in baths}
    if len(families) == 1 and families <= {FERMIONIC, BOSONIC}:
        betas = np.array([b.beta for b in baths])
        coef = np.array([b.params["gamma"] for b in baths])
        return _thermal_rates_batch(families.pop(), betas, coef, energies)
    return np.array([rate_array(b, e) for b, e in zip(baths, energies)])


def _solve_small(a, b):
    n = b.size
    if n == 1:
        return b / a[0, 0] if a[0, 0] != 0 else None
    if n == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if det == 0:
            return None
        return np.array([a[1, 1] * b[0] - a[0, 1] * b[1], a[0, 0] * b[1] - a[1, 0] * b[0]]) / det
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return None


def gap_kernel(energies, baths, mus, c):
    """Fast GAP from raw arrays, skipping validation; for inner optimization loops.

    ``energies`` is ``(L, d)`` with ``energies[:, 0] == 0``, ``baths`` lists the
    ``BathModel`` of each leg and ``c`` the weight of each leg. Returns
    ``(gap, p0)``; ``gap`` is ``-inf`` when the aggregate generator is singular.
    """
    n_legs, d = energies.shape
    gamma = _leg_rates(energies, baths)
    idx = np.arange(d)
    gamma[:, idx, idx] = 0.0
    fulls = gamma.transpose(0, 2, 1).copy()
    fulls[:, idx, idx] = -gamma.sum(axis=2)
    betas = np.array([b.beta for b in baths])
    w = np.exp(-betas[:, None] * (energies - energies.min(axis=1, keepdims=True)))
    gibbs = w / w.sum(axis=1, keepdims=True)
    reduced = fulls[:, 1:, :1] - fulls[:, 1:, 1:]
    weighted = mus[:, None, None] * reduced
    agg = weighted.sum(axis=0)
    rhs = (weighted @ gibbs[:, 1:, None]).sum(axis=0)[:, 0]
    p_hat = _solve_small(agg, rhs)
    if p_hat is None:
        return -np.inf, None
    p0 = np.concatenate(([1.0 - p_hat.sum()], p_hat))
    if not np.all(np.isfinite(p0)) or np.min(p0) < -1e-9 or np.max(p0) > 1 + 1e-9:
        return -np.inf, None
    heats = mus * ((fulls @ p0) * energies).sum(axis=1)
    return float(np.dot(c, heats)), p0


def fixed_rate_gap(mus, energies, betas, rates, c):
    """Closed-form fast GAP when every bath relaxes at a single rate.

    ``energies`` is ``(L, d)``, the others have length ``L`` (per leg). With
    ``pi_j = mu_j Gamma_j`` the steady state is the ``pi``-weighted mean of the
    leg Gibbs states and leg ``j`` absorbs ``pi_j e_j . (p_eq_j - p0)``.
    """
    e = np.asarray(energies, dtype=float)
    w = np.exp(-np.asarray(betas)[:, None] * (e - e.min(axis=1, keepdims=True)))
    peq = w / w.sum(axis=1, keepdims=True)
    pi = np.asarray(mus) * np.asarray(rates)
    p0 = pi @ peq / pi.sum()
    return float(np.sum(np.asarray(c) * pi * np.einsum("jd,jd->j", e, peq - p0)))


def relaxation_rate_eta(cycle, model: MachineModel) -> float:
    """Fastest relaxation rate along a protocol.

    Largest spectral norm of the reduced generator over the legs. Accepts a
    ``GeneralizedOttoCycle`` or anything with a ``legs`` attribute of ``Leg``.
    The constant relating this norm to a trace-norm definition is not fixed,
    so ``eta * T < threshold`` is a heuristic regime indicator.
    """
    return max(float(np.linalg.norm(model.generator(l.control, l.bath).reduced, 2)) for l in cycle.legs)


def is_fast_regime(eta: float, period: float, threshold: float = FAST_REGIME_THRESHOLD) -> bool:
    return eta * period < threshold


def leg_vectors(cycle, model, p0=None) -> np.ndarray:
    """Rows ``v_j = G_j (p_eq_j - p0)`` in reduced coordinates."""
    gens = leg_generators(cycle, model)
    if p0 is None:
        p0, _ = _steady_state(cycle.mus, gens)
    return np.array([g.reduced @ (g.gibbs[1:] - p0[1:]) for g in gens])


def center_of_mass_residual(cycle, model, p0=None) -> float:
    """Norm of ``sum_j mu_j G_j (p_eq_j - p0)``; zero at the fast steady state."""
    return float(np.linalg.norm(cycle.mus @ leg_vectors(cycle, model, p0)))


def _null_affine_combination(points):
    """A nonzero ``xi`` with ``sum xi_i v_i = 0`` and ``sum xi_i = 0``."""
    k = points.shape[0]
    a = np.vstack([points.T, np.ones((1, k))])
    # column-pivoted QR on A^T exposes a basis for the kernel of A
    _, r, piv = scipy.linalg.qr(a, pivoting=True)
    tol = max(a.shape) * np.finfo(float).eps * (abs(r[0, 0]) if r.size else 1.0)
    rank = int(np.sum(np.abs(np.diag(r)) > tol))
    # solve R11 x = -R12 e_1 for the first free (pivoted) column
    free = rank
    x = np.zeros(k)
    x[piv[free]] = 1.0
    if rank:
        sol = scipy.linalg.solve_triangular(r[:rank, :rank], -r[:rank, free])
        x[piv[:rank]] = sol
    return x / np.max(np.abs(x))


def caratheodory_reduce(points, weights, tol=1e-10):
    """Shrink a zero-mean convex combination to at most ``D + 1`` points.

    Parameters
    ----------
    points : array_like, shape (k, D)
    weights : array_like, shape (k,)
        Strictly positive, summing to one, with ``sum w_i v_i = 0``.
    tol : float
        Admissible relative size of the input center of mass.

    Returns
    -------
    points : numpy.ndarray
        The retained rows of the input, in input order.
    weights : numpy.ndarray
        New strictly positive weights, summing to one, still with zero weighted sum.
    index : numpy.ndarray
        Row indices of the retained points in the input.

    Notes
    -----
    Each step finds an affine null combination ``xi`` of the current points and
    moves along it by ``c = min(w_i / xi_i : xi_i > 0)``, which zeroes at least
    one weight and keeps the others non-negative. Ties go to the lowest index.
    """
    v = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float).copy()
    if v.shape[0] != w.size:
        raise InvalidInputError("one weight per point is required")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("weights must be strictly positive")
    w = w / w.sum()
    scale = float(np.max(np.linalg.norm(v, axis=1))) if v.size else 0.0
    if np.linalg.norm(w @ v) > tol * max(scale, np.finfo(float).tiny):
        raise InvalidInputError("weighted center of mass of the input is not zero")
    k, dim = v.shape
    idx = np.arange(k)
    while idx.size > dim + 1:
        xi = _null_affine_combination(v[idx])
        if not np.any(xi > 0):
            xi = -xi
        pos = xi > 0
        ratios = np.full(idx.size, np.inf)
        ratios[pos] = w[idx][pos] / xi[pos]
        drop = int(np.argmin(ratios))
        c = ratios[drop]
        new_w = w[idx] - c * xi
        new_w[drop] = 0.0
        new_w[new_w < 0] = 0.0
        w[idx] = new_w
        idx = idx[new_w > 0]
    out_w = w[idx] / w[idx].sum()
    return v[idx], out_w, idx


def reduce_cycle(cycle: GeneralizedOttoCycle, model: MachineModel) -> GeneralizedOttoCycle:
    """Drop legs of a cycle by Caratheodory reduction of its leg vectors at fixed ``p0``.

    The result keeps ``p0`` unchanged and has at most ``d`` legs.
    """
    keep = [j for j, leg in enumerate(cycle.legs) if leg.mu > 0]
    sub = GeneralizedOttoCycle(tuple(cycle.legs[j] for j in keep))
    p0 = fast_steady_state(sub, model).p0
    vecs = leg_vectors(sub, model, p0)
    scale = max(float(np.max(np.linalg.norm(vecs, axis=1))), 1e-300)
    # the steady state is solved to rounding; tolerate that much center-of-mass drift
    tol = max(1e-10, 1e3 * center_of_mass_residual(sub, model, p0) / scale)
    _, w, idx = caratheodory_reduce(vecs, sub.mus, tol=tol)
    return GeneralizedOttoCycle(tuple(Leg(sub.legs[i].control, sub.legs[i].bath, wi) for i, wi in zip(idx, w)))


def all_fixed_rate(model: MachineModel) -> bool:
    return all(b.family == FIXED_RATE for b in model.baths)
