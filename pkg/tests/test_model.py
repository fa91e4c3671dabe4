import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ottoforge.errors import InvalidInputError
from ottoforge.model import (
    BOSONIC,
    FERMIONIC,
    BathModel,
    GapWeights,
    MachineModel,
    Spectrum,
    build_generator,
    build_rate_matrix,
    gibbs_populations,
    rate_array,
    transition_graph_components,
    validate_model,
)

energies_st = st.lists(st.floats(-20, 20, allow_nan=False), min_size=2, max_size=6)
beta_st = st.floats(0.05, 5.0)


def mp_gibbs(beta, energies):
    mpmath.mp.dps = 40
    w = [mpmath.exp(-mpmath.mpf(beta) * mpmath.mpf(e)) for e in energies]
    z = mpmath.fsum(w)
    return np.array([float(x / z) for x in w])


@given(beta_st, energies_st)
def test_gibbs_matches_high_precision(beta, energies):
    p = gibbs_populations(beta, energies)
    assert np.allclose(p, mp_gibbs(beta, energies), rtol=1e-12, atol=1e-300)
    assert p.sum() == pytest.approx(1.0, abs=1e-14)


def test_gibbs_is_shift_invariant():
    e = np.array([0.0, 1.3, 2.2])
    assert np.allclose(gibbs_populations(0.7, e), gibbs_populations(0.7, e + 500.0), rtol=1e-13)


def test_gibbs_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        gibbs_populations(-1.0, [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        gibbs_populations(1.0, [0.0, np.nan])


@pytest.mark.parametrize("family", [FERMIONIC, BOSONIC, "fixed-rate"])
@given(beta=beta_st, energies=energies_st)
@settings(max_examples=40)
def test_detailed_balance_and_column_sums(family, beta, energies):
    params = {"rate": 1.3} if family == "fixed-rate" else {"gamma": 0.8}
    bath = BathModel(beta, family, params)
    rates = build_rate_matrix(Spectrum((0.0, *energies[1:])), bath)
    gen = build_generator(rates)
    scale = max(1.0, float(np.max(rates.gamma)))
    assert rates.detailed_balance_residual() <= 1e-12 * scale
    assert np.max(np.abs(gen.full.sum(axis=0))) <= 1e-12 * scale
    assert np.all(rates.gamma >= 0)
    # the Gibbs state is stationary
    assert np.max(np.abs(gen.full @ gen.gibbs)) <= 1e-12 * scale


def test_fermionic_downhill_rate_is_flat():
    bath = BathModel.fermionic(1.0, gamma=2.0)
    g = rate_array(bath, np.array([0.0, 3.0]))
    # downhill 1 -> 0: gamma (1 - f(-de)) with Fermi factor f
    de = 3.0
    assert g[1, 0] == pytest.approx(2.0 / (1 + math.exp(-de)), rel=1e-14)
    assert g[0, 1] == pytest.approx(g[1, 0] * math.exp(-de), rel=1e-14)


@pytest.mark.parametrize("de", [1e-8, 1e-4, 0.3, 5.0, 40.0])
def test_bosonic_rate_against_mpmath(de):
    """Ohmic Bose rate ``gamma de (1 + n(de))`` with ``n = 1/(e^{beta de} - 1)``; finite as ``de -> 0``."""
    beta, gamma = 0.9, 1.1
    g = rate_array(BathModel.bosonic(beta, gamma), np.array([0.0, de]))
    mpmath.mp.dps = 40
    x = mpmath.mpf(beta) * mpmath.mpf(de)
    down = float(mpmath.mpf(gamma) * mpmath.mpf(de) * (1 + 1 / mpmath.expm1(x)))
    assert g[1, 0] == pytest.approx(down, rel=1e-12)
    assert g[0, 1] == pytest.approx(down * math.exp(-beta * de), rel=1e-12)


def test_bosonic_degenerate_limit():
    g = rate_array(BathModel.bosonic(2.0, 1.5), np.array([0.0, 0.0]))
    assert g[0, 1] == pytest.approx(1.5 / 2.0, rel=1e-12)  # gamma / beta


def test_fixed_rate_generator_relaxes_every_observable_at_one_rate():
    gen = build_generator(build_rate_matrix(Spectrum((0.0, 0.7, 2.1)), BathModel.fixed_rate(1.2, 0.9)))
    assert np.allclose(gen.reduced, 0.9 * np.eye(2), atol=1e-14)


def test_peaked_bath_is_inert_away_from_its_target():
    bath = BathModel.peaked(1.0, (1.0, 2.0), {(0, 1): 1.0, (1, 2): 0.5})
    assert bath.matches((1.0, 2.0))
    assert not bath.matches((1.0, 2.1))
    on = rate_array(bath, np.array([0.0, 1.0, 2.0]), (1.0, 2.0))
    off = rate_array(bath, np.array([0.0, 1.1, 2.0]), (1.1, 2.0))
    assert on[0, 1] == 1.0 and on[1, 2] == 0.5 and on[0, 2] == 0.0
    assert on[1, 0] == pytest.approx(math.exp(1.0), rel=1e-14)
    assert not np.any(off)


@pytest.mark.parametrize(
    "args",
    [
        (0.0, FERMIONIC, {"gamma": 1.0}),
        (1.0, "weird", {"gamma": 1.0}),
        (1.0, FERMIONIC, {"gamma": -1.0}),
        (1.0, "peaked", {"targets": (1.0,), "gammas": {}}),
        (1.0, "peaked", {"targets": (1.0,), "gammas": {(0, 0): 1.0}}),
    ],
)
def test_bath_validation(args):
    with pytest.raises(InvalidInputError):
        BathModel(*args)


def test_machine_model_bounds_and_weights():
    with pytest.raises(InvalidInputError):
        MachineModel((BathModel.fermionic(1.0),), ((1.0, 0.0),))
    model = MachineModel((BathModel.fermionic(0.5), BathModel.fermionic(1.0)), ((0.0, 5.0),))
    assert model.dim == 2 and model.n_baths == 2
    assert GapWeights.refrigerator(model.betas).c == (0.0, 1.0)
    assert GapWeights.engine(2).is_positive and not GapWeights.heater(2).is_positive


def test_validate_model_reports_unreachable_levels():
    bath = BathModel.peaked(1.0, (1.0, 2.0), {(0, 1): 1.0})
    rm = build_rate_matrix(Spectrum((0.0, 1.0, 2.0)), bath, (1.0, 2.0))
    report = validate_model([rm])
    assert not report.ok and report.unreachable == [[2]]
    assert transition_graph_components([rm]) == [[0, 1], [2]]
    full = build_rate_matrix(Spectrum((0.0, 1.0, 2.0)), BathModel.fermionic(1.0))
    assert validate_model([full]).ok
