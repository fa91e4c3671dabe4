import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ottoforge.errors import InvalidInputError
from ottoforge.lambertw import lambert_w, lambert_w_ln, lambert_w_residual


@given(st.floats(-1 / math.e + 1e-5, 1e6))
def test_defining_identity(z):
    w = lambert_w(z)
    assert lambert_w_residual(w, z) <= 1e-14 * max(1.0, abs(z))


@pytest.mark.parametrize("z", [-1 / math.e + 1e-16, -1 / math.e + 1e-12, -1 / math.e + 2e-5, -0.36, -0.3, -0.1, 1e-300, 0.5, 1 / math.e, 1.0, 10.0, 1e100])
def test_against_mpmath(z):
    mpmath.mp.dps = 40
    assert lambert_w(z) == pytest.approx(float(mpmath.re(mpmath.lambertw(z))), rel=1e-14, abs=1e-16)


def test_special_values():
    assert lambert_w(0.0) == 0.0
    assert lambert_w(math.e) == pytest.approx(1.0, rel=1e-15)
    assert lambert_w(-1 / math.e) == -1.0  # the float lies within rounding of the branch point
    w = lambert_w(math.exp(-1.0))
    assert abs(w * math.exp(w) - math.exp(-1.0)) <= 1e-14


def test_domain():
    with pytest.raises(InvalidInputError):
        lambert_w(-0.5)
    with pytest.raises(InvalidInputError):
        lambert_w(float("nan"))


@pytest.mark.parametrize("ln_z", [-30.0, -1.0, 0.5, 1.0, 3.0, 50.0, 700.0, 1e4, 1e8])
def test_log_domain_variant(ln_z):
    mpmath.mp.dps = 50
    expected = float(mpmath.lambertw(mpmath.exp(ln_z)))
    assert lambert_w_ln(ln_z) == pytest.approx(expected, rel=1e-14)


@given(st.floats(1.0, 1e12))
def test_log_domain_identity(ln_z):
    w = lambert_w_ln(ln_z)
    assert abs(w + math.log(w) - ln_z) <= 4e-16 * ln_z + 1e-15
