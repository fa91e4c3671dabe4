"""
Closed-form machines for the single-timescale ("simple relaxation") model.

Every observable relaxes toward the bath Gibbs state at a single rate
``Gamma_alpha``. For a two-stroke Otto cycle between a hot bath 1 and a cold
bath 2 the optimal time split and the optimal power are explicit:

    mu_1 = sqrt(G2) / (sqrt(G2) + sqrt(G1))
    P    = Tr[(H1 - H2)(rho1 - rho2)] / (1/sqrt(G1) + 1/sqrt(G2))**2

With a non-degenerate ground level and a ``(d-1)``-fold degenerate excited
level, ``x_i = beta_i eps_i`` and the ground populations
``s_i = sigmoid(x_i - ln(d-1))``, the engine maximizes

    f(x1, x2) = (x1 beta2 - x2 beta1) (s2 - s1)

and the refrigerator ``f(x) = x (1 - s(x))``, whose optimum is a Lambert W.
All large-``d`` quantities are evaluated through ``ln(d-1)`` so that
``d = 2**n`` with thousands of qubits never overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import InvalidInputError, NotApplicableError, OptimizationFailedError
from .lambertw import lambert_w, lambert_w_ln
from .model import gibbs_populations

ENGINE = "engine"
REFRIGERATOR = "refrigerator"
INFINITE = "infinite"

STATIONARITY_TOL = 1e-9
_SMALL_DEGENERACY = 3.0  # below this ln(d-1) the ansatz is poor: scan a grid instead


@dataclass(frozen=True)
class SimpleRelaxModel:
    """Two baths with scalar thermalization rates and a ``d``-level working fluid.

    Give either ``d`` or ``n_qubits`` (``d = 2**n_qubits``, log-domain). Bath 1
    is the hot one: ``beta1 <= beta2``.
    """

    beta1: float
    beta2: float
    gamma1: float = 1.0
    gamma2: float = 1.0
    d: Optional[int] = None
    n_qubits: Optional[int] = None

    def __post_init__(self):
        for name in ("beta1", "beta2", "gamma1", "gamma2"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.beta1 > self.beta2:
            raise InvalidInputError("bath 1 must be the hot bath (beta1 <= beta2)")
        if (self.d is None) == (self.n_qubits is None):
            raise InvalidInputError("give exactly one of d and n_qubits")
        if self.d is not None and int(self.d) < 2:
            raise InvalidInputError("d must be at least 2")
        if self.n_qubits is not None and int(self.n_qubits) < 1:
            raise InvalidInputError("n_qubits must be at least 1")

    @classmethod
    def qubits(cls, n, beta1, beta2, gamma1=1.0, gamma2=1.0):
        return cls(beta1, beta2, gamma1, gamma2, n_qubits=int(n))

    def with_qubits(self, n) -> "SimpleRelaxModel":
        return replace(self, d=None, n_qubits=int(n))

    def with_dim(self, d) -> "SimpleRelaxModel":
        return replace(self, d=int(d), n_qubits=None)

    @property
    def ln_dm1(self) -> float:
        """``ln(d - 1)``, exact for arbitrarily large ``d = 2**n``."""
        d = int(self.d) if self.d is not None else 2 ** int(self.n_qubits)
        return math.log(d - 1)

    @property
    def ln_d(self) -> float:
        if self.d is not None:
            return math.log(int(self.d))
        return int(self.n_qubits) * math.log(2.0)

    @property
    def rate_factor(self) -> float:
        """``1 / (1/sqrt(G1) + 1/sqrt(G2))**2``, the optimal-split rate prefactor."""
        return 1.0 / (self.gamma1 ** -0.5 + self.gamma2 ** -0.5) ** 2


@dataclass(frozen=True)
class MachineOptimum:
    kind: str
    eps1: object  # float, or INFINITE for the refrigerator
    eps2: float
    x1: object
    x2: float
    mu1: float
    power: float
    efficiency: Optional[float] = None
    carnot_gap: Optional[float] = None
    cop: Optional[float] = None
    residual: float = 0.0
    trace: list = field(default_factory=list, compare=False)


def optimal_split(gamma1: float, gamma2: float) -> float:
    """Time fraction on bath 1 maximizing ``mu1 mu2 G1 G2 / (mu1 G1 + mu2 G2)``."""
    g1, g2 = float(gamma1), float(gamma2)
    if not (g1 > 0 and g2 > 0 and math.isfinite(g1) and math.isfinite(g2)):
        raise InvalidInputError("rates must be positive and finite")
    return math.sqrt(g2) / (math.sqrt(g2) + math.sqrt(g1))


def split_objective(mu1, gamma1, gamma2):
    """``mu1 mu2 G1 G2 / (mu1 G1 + mu2 G2)``; vectorized over ``mu1``."""
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = 1.0 - mu1
    return mu1 * mu2 * gamma1 * gamma2 / (mu1 * gamma1 + mu2 * gamma2)


def _excited(z):
    """Total excited population ``1 - s`` at ``z = x - ln(d-1)``."""
    return expit(-np.asarray(z, dtype=float))


def engine_objective(x1, x2, beta1, beta2, ln_dm1):
    """``f(x1, x2) = (x1 beta2 - x2 beta1) (s2 - s1)``; vectorized."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (x1 * beta2 - x2 * beta1) * (_excited(x1 - ln_dm1) - _excited(x2 - ln_dm1))


def fridge_objective(x, ln_dm1):
    """``f(x) = x (d-1) e^{-x} / (1 + (d-1) e^{-x})``; vectorized."""
    x = np.asarray(x, dtype=float)
    return x * _excited(x - ln_dm1)


def max_engine_power(model: SimpleRelaxModel, eps1, eps2) -> float:
    """Optimal-split power of the degenerate-spectrum Otto engine at gaps ``eps1``, ``eps2``."""
    e1, e2 = float(eps1), float(eps2)
    if not (math.isfinite(e1) and math.isfinite(e2)):
        raise InvalidInputError("energies must be finite")
    z1 = model.beta1 * e1 - model.ln_dm1
    z2 = model.beta2 * e2 - model.ln_dm1
    return float((e1 - e2) * (_excited(z1) - _excited(z2)) * model.rate_factor)


def max_engine_power_spectrum(model: SimpleRelaxModel, energies1, energies2) -> float:
    """Optimal-split power for arbitrary spectra ``H1`` (hot leg) and ``H2`` (cold leg)."""
    e1 = np.asarray(energies1, dtype=float)
    e2 = np.asarray(energies2, dtype=float)
    if e1.shape != e2.shape or e1.ndim != 1:
        raise InvalidInputError("both spectra must list the same number of levels")
    p1 = gibbs_populations(model.beta1, e1)
    p2 = gibbs_populations(model.beta2, e2)
    return float((e1 - e2) @ (p1 - p2) * model.rate_factor)


def _engine_derivatives(z, b1, b2, ln_dm1):
    """Value, gradient and Hessian of ``f`` in ``z = x - ln(d-1)``."""
    z1, z2 = z
    s1, s2 = expit(z1), expit(z2)
    ds1, ds2 = s1 * expit(-z1), s2 * expit(-z2)
    k = ln_dm1 * (b2 - b1) + z1 * b2 - z2 * b1
    gap = expit(-z1) - expit(-z2)  # s2 - s1
    val = k * gap
    g1_terms = (b2 * gap, -k * ds1)
    g2_terms = (-b1 * gap, k * ds2)
    grad = np.array([sum(g1_terms), sum(g2_terms)])
    hess = np.array(
        [
            [-2 * b2 * ds1 - k * ds1 * (1 - 2 * s1), b2 * ds2 + b1 * ds1],
            [b2 * ds2 + b1 * ds1, -2 * b1 * ds2 + k * ds2 * (1 - 2 * s2)],
        ]
    )
    scale = np.array([sum(map(abs, g1_terms)), sum(map(abs, g2_terms))])
    return val, grad, hess, scale


def engine_stationarity_residual(x1, x2, beta1, beta2, ln_dm1) -> float:
    """Relative residual of the stationarity system of the engine objective.

    The system is the gradient of ``f``; each component is divided by the sum of
    the magnitudes of its two terms, so the value is scale free.
    """
    _, grad, _, scale = _engine_derivatives((x1 - ln_dm1, x2 - ln_dm1), beta1, beta2, ln_dm1)
    return float(np.max(np.abs(grad) / np.maximum(scale, np.finfo(float).tiny)))


def _engine_start(b1, b2, ln_dm1):
    if ln_dm1 >= _SMALL_DEGENERACY:
        big_l = ln_dm1
        a1 = (b2 - b1) / b2
        a2 = (b2 - b1) / b1
        return np.array([-math.log(big_l) - math.log(a1), math.log(big_l) + math.log(a2)]), "ansatz"
    # positive power needs 1 < x2/x1 < beta2/beta1; scan that wedge on a relative grid
    x1 = np.linspace(1e-3, ln_dm1 + 40.0, 401)[:, None]
    r = np.linspace(0.005, 0.995, 199)[None, :]
    x2 = x1 * (1.0 + r * (b2 / b1 - 1.0))
    f = engine_objective(x1, x2, b1, b2, ln_dm1)
    i, j = np.unravel_index(int(np.argmax(f)), f.shape)
    return np.array([x1[i, 0], x2[i, j]]) - ln_dm1, "grid"


def _newton(z, b1, b2, ln_dm1, max_iter=200):
    val, grad, hess, scale = _engine_derivatives(z, b1, b2, ln_dm1)
    for it in range(max_iter):
        res = float(np.max(np.abs(grad) / np.maximum(scale, np.finfo(float).tiny)))
        if res < 1e-13:
            break
        try:
            eig = np.linalg.eigvalsh(hess)
            step = -np.linalg.solve(hess, grad) if np.all(eig < 0) else grad / max(np.max(np.abs(eig)), 1e-300)
        except np.linalg.LinAlgError:
            step = grad / max(np.max(np.abs(hess)), 1e-300)
        t = 1.0
        while t > 1e-12:
            trial = z + t * step
            v_new, g_new, h_new, s_new = _engine_derivatives(trial, b1, b2, ln_dm1)
            if v_new >= val - 1e-12 * abs(val):  # allow rounding noise near the flat top
                break
            t *= 0.5
        else:
            break
        if np.all(trial == z):
            break
        z, val, grad, hess, scale = trial, v_new, g_new, h_new, s_new
    res = float(np.max(np.abs(grad) / np.maximum(scale, np.finfo(float).tiny)))
    return z, val, res, it


def optimize_engine_spectrum(model: SimpleRelaxModel) -> MachineOptimum:
    """Maximum-power degenerate-spectrum engine.

    Damped Newton on the stationarity system, started from the large-``d``
    ansatz (or a grid scan for small ``d``), with a Nelder-Mead fallback.

    Raises
    ------
    NotApplicableError
        If the baths have equal temperatures (no positive power exists).
    OptimizationFailedError
        If the stationarity residual stays above ``1e-9`` after the fallback.
    """
    b1, b2, big_l = model.beta1, model.beta2, model.ln_dm1
    if not b1 < b2:
        raise NotApplicableError("an engine needs beta1 < beta2")
    z0, how = _engine_start(b1, b2, big_l)
    trace = []
    z, val, res, its = _newton(z0, b1, b2, big_l)
    trace.append({"start": how, "z0": z0.tolist(), "value": float(val), "residual": res, "iterations": its})
    if res > STATIONARITY_TOL or val <= 0:
        nm = minimize(
            lambda zz: -_engine_derivatives(zz, b1, b2, big_l)[0],
            z0,
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-300, "maxfev": 20000},
        )
        z, val, res, its = _newton(nm.x, b1, b2, big_l)
        trace.append({"start": "nelder-mead", "z0": nm.x.tolist(), "value": float(val), "residual": res, "iterations": its})
    if res > STATIONARITY_TOL or val <= 0:
        raise OptimizationFailedError(f"engine stationarity residual {res:.3g} after fallback", trace)
    z1, z2 = float(z[0]), float(z[1])
    x1, x2 = big_l + z1, big_l + z2
    carnot_gap = (b1 / b2) * (z2 - z1) / x1
    return MachineOptimum(
        kind=ENGINE,
        eps1=x1 / b1,
        eps2=x2 / b2,
        x1=x1,
        x2=x2,
        mu1=optimal_split(model.gamma1, model.gamma2),
        power=float(val) / (b1 * b2) * model.rate_factor,
        efficiency=(1.0 - b1 / b2) - carnot_gap,
        carnot_gap=carnot_gap,
        residual=res,
        trace=trace,
    )


def optimize_fridge_spectrum(model: SimpleRelaxModel) -> MachineOptimum:
    """Maximum cooling power of the cold bath 2.

    The hot-leg gap is sent to infinity (the hot-bath Gibbs state becomes the
    ground state), leaving ``x2* = 1 + W((d-1)/e)`` and ``f* = W((d-1)/e)``.
    The coefficient of performance at this optimum is zero.
    """
    big_l = model.ln_dm1
    w = lambert_w(math.exp(-1.0)) if big_l == 0.0 else lambert_w_ln(big_l - 1.0)
    x2 = 1.0 + w
    return MachineOptimum(
        kind=REFRIGERATOR,
        eps1=INFINITE,
        eps2=x2 / model.beta2,
        x1=INFINITE,
        x2=x2,
        mu1=optimal_split(model.gamma1, model.gamma2),
        power=w / model.beta2 * model.rate_factor,
        cop=0.0,
    )


def optimize_machine(model: SimpleRelaxModel, kind: str) -> MachineOptimum:
    if kind == ENGINE:
        return optimize_engine_spectrum(model)
    if kind == REFRIGERATOR:
        return optimize_fridge_spectrum(model)
    raise InvalidInputError(f"machine kind must be {ENGINE!r} or {REFRIGERATOR!r}, got {kind!r}")


def power_asymptote(model: SimpleRelaxModel, kind: str) -> float:
    """Leading large-``d`` maximum power, proportional to ``ln d``."""
    if kind == ENGINE:
        return (model.beta2 - model.beta1) * model.ln_d / (model.beta1 * model.beta2) * model.rate_factor
    return model.ln_d / model.beta2 * model.rate_factor


@dataclass(frozen=True)
class ManyQubitComparison:
    n: int
    gap_interacting: float
    gap_noninteracting: float
    ratio: float
    asymptote: float


def many_qubit_compare(n: int, model: SimpleRelaxModel, kind: str) -> ManyQubitComparison:
    """Interacting (one ``2**n``-level system) versus ``n`` independent qubits.

    ``model`` supplies temperatures and rates; its dimension is ignored.
    """
    n = int(n)
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    single = optimize_machine(model.with_dim(2), kind).power
    many = model.with_qubits(n)
    gap_i = optimize_machine(many, kind).power
    gap_ni = n * single
    return ManyQubitComparison(n, gap_i, gap_ni, gap_i / gap_ni, power_asymptote(many, kind))


@dataclass(frozen=True)
class EfficiencyAtMaxPower:
    efficiency: float
    carnot_gap: float
    predicted_gap: float

    @property
    def ratio(self) -> float:
        return self.carnot_gap / self.predicted_gap


def efficiency_at_max_power(n, beta1, beta2, gamma1=1.0, gamma2=1.0) -> EfficiencyAtMaxPower:
    """Efficiency of the maximum-power ``n``-qubit engine and its distance to Carnot.

    The prediction is ``(2/ln 2)(beta1/beta2) ln(n)/n``.
    """
    opt = optimize_engine_spectrum(SimpleRelaxModel.qubits(n, beta1, beta2, gamma1, gamma2))
    predicted = (2.0 / math.log(2.0)) * (beta1 / beta2) * math.log(n) / n
    return EfficiencyAtMaxPower(opt.efficiency, opt.carnot_gap, predicted)


@dataclass(frozen=True)
class SmallGradientFit:
    coefficient: float
    exponent: float
    relative_dt: np.ndarray
    scaled_power: np.ndarray


def fit_small_dt_power(d=2, relative_dt=None, mean_temperature=1.0, gamma1=1.0, gamma2=1.0) -> SmallGradientFit:
    """Quadratic coefficient of the maximum engine power at small temperature gaps.

    With ``T1,2 = Tbar (1 +- r/2)`` the power is written ``c0 dT**2 / Tbar``
    times the rate factor. ``c0`` is the least-squares intercept of
    ``log P - 2 log dT``; the free-slope fit of ``log P`` versus ``log dT`` is
    returned as ``exponent``.
    """
    r = np.geomspace(1e-3, 1e-2, 9) if relative_dt is None else np.asarray(relative_dt, dtype=float)
    t_bar = float(mean_temperature)
    scaled = []
    for ri in r:
        t1, t2 = t_bar * (1 + ri / 2), t_bar * (1 - ri / 2)
        m = SimpleRelaxModel(1 / t1, 1 / t2, gamma1, gamma2, d=d)
        scaled.append(optimize_engine_spectrum(m).power / m.rate_factor)
    scaled = np.array(scaled)
    log_dt = np.log(r * t_bar)
    log_p = np.log(scaled * t_bar)
    exponent = float(np.polyfit(log_dt, log_p, 1)[0])
    coefficient = float(np.exp(np.mean(log_p - 2 * log_dt)))
    return SmallGradientFit(coefficient, exponent, r, scaled)
