"""Principal branch of the Lambert W function, including a log-domain variant."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import lambertw as _scipy_lambertw

from .errors import InvalidInputError

_BRANCH_POINT = -math.exp(-1.0)
# 1/e as an unevaluated double-double sum, so that z + 1/e keeps its digits near the branch point
_INV_E_HI = 0.36787944117144233
_INV_E_LO = -1.2428753672788363e-17
_SERIES_LIMIT = 1e-5  # use the branch-point series when z + 1/e is below this
# W = sum_k a_k p^k with p = sqrt(2 (e z + 1))
_BRANCH_SERIES = (
    -1.0,
    1.0,
    -1.0 / 3.0,
    11.0 / 72.0,
    -43.0 / 540.0,
    769.0 / 17280.0,
    -221.0 / 8505.0,
    680863.0 / 43545600.0,
    -1963.0 / 204120.0,
    226287557.0 / 37623398400.0,
)


def _halley(w, z):
    """One Halley step on ``w e^w - z``."""
    ew = math.exp(w)
    f = w * ew - z
    wp1 = w + 1.0
    if wp1 == 0.0:
        return w
    return w - f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))


def lambert_w(z: float) -> float:
    """Principal branch ``W0(z)`` for real ``z >= -1/e``.

    Starts from scipy's value and applies Halley polishing so that
    ``|W e^W - z| <= 1e-14 max(1, |z|)``. Within ``1e-5`` of the branch point
    the series in ``sqrt(2 (e z + 1))`` is used instead.
    """
    z = float(z)
    if not math.isfinite(z):
        raise InvalidInputError(f"lambert_w needs a finite argument, got {z!r}")
    offset = (z + _INV_E_HI) + _INV_E_LO  # z + 1/e
    if offset < 0.0:
        if offset > -1e-15:
            return -1.0
        raise InvalidInputError(f"lambert_w is real only for z >= -1/e, got {z!r}")
    if z == 0.0:
        return 0.0
    if offset < _SERIES_LIMIT:
        # the residual w e^w - z cancels here, so Halley cannot polish; the series is exact to rounding
        p = math.sqrt(2.0 * math.e * offset)
        w = 0.0
        for a in reversed(_BRANCH_SERIES):
            w = w * p + a
        return w
    w = float(_scipy_lambertw(z, 0).real)
    for _ in range(2):
        w_new = _halley(w, z)
        if w_new == w:
            break
        w = w_new
    return w


def lambert_w_ln(ln_z: float) -> float:
    """``W0(exp(ln_z))`` without forming ``exp(ln_z)``.

    Solves ``w + ln w = ln_z`` by Halley iteration; usable for ``ln_z`` far
    beyond the floating-point range of ``z`` itself.
    """
    ln_z = float(ln_z)
    if not math.isfinite(ln_z):
        raise InvalidInputError(f"lambert_w_ln needs a finite argument, got {ln_z!r}")
    if ln_z < 1.0:
        return lambert_w(math.exp(ln_z))
    # asymptotic initial guess W ~ L - ln L + ln L / L
    ln_ln = math.log(ln_z)
    w = ln_z - ln_ln + ln_ln / ln_z
    for _ in range(50):
        g = w + math.log(w) - ln_z
        gp = 1.0 + 1.0 / w
        gpp = -1.0 / (w * w)
        step = g / (gp - 0.5 * g * gpp / gp)
        w_new = w - step
        if w_new <= 0:
            w_new = 0.5 * w
        if abs(w_new - w) <= 4 * np.finfo(float).eps * abs(w_new):
            return w_new
        w = w_new
    return w


def lambert_w_residual(w: float, z: float) -> float:
    return abs(w * math.exp(w) - z)
