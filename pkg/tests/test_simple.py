import math

import numpy as np
import pytest

from ottoforge.errors import InvalidInputError, NotApplicableError
from ottoforge.lambertw import lambert_w
from ottoforge.simple import (
    ENGINE,
    INFINITE,
    REFRIGERATOR,
    SimpleRelaxModel,
    engine_objective,
    engine_stationarity_residual,
    fridge_objective,
    many_qubit_compare,
    max_engine_power,
    max_engine_power_spectrum,
    optimal_split,
    optimize_engine_spectrum,
    optimize_fridge_spectrum,
    optimize_machine,
    split_objective,
)


@pytest.mark.parametrize("g1,g2", [(1.0, 1.0), (0.3, 2.0), (5.0, 0.2)])
def test_optimal_split_beats_a_fine_grid(g1, g2):
    mu = np.linspace(1e-6, 1 - 1e-6, 200001)
    best = mu[np.argmax(split_objective(mu, g1, g2))]
    assert optimal_split(g1, g2) == pytest.approx(best, abs=1e-5)
    assert split_objective(optimal_split(g1, g2), g1, g2) >= split_objective(mu, g1, g2).max() - 1e-15


def test_optimal_split_rejects_bad_rates():
    with pytest.raises(InvalidInputError):
        optimal_split(0.0, 1.0)


@pytest.mark.parametrize("d", [2, 3, 10, 1000])
def test_fridge_optimum_beats_a_fine_grid(d):
    model = SimpleRelaxModel(0.5, 1.0, d=d)
    opt = optimize_fridge_spectrum(model)
    x = np.linspace(0.01, 40.0, 400001)
    assert fridge_objective(opt.x2, model.ln_dm1) >= fridge_objective(x, model.ln_dm1).max() - 1e-12
    assert opt.eps1 == INFINITE and opt.cop == 0.0
    assert opt.x2 == pytest.approx(1 + lambert_w((d - 1) / math.e), rel=1e-14)


@pytest.mark.parametrize("beta1,d", [(0.5, 2), (0.2, 3), (0.9, 8), (0.5, 2**20)])
def test_engine_optimum_beats_a_grid(beta1, d):
    model = SimpleRelaxModel(beta1, 1.0, d=d)
    opt = optimize_engine_spectrum(model)
    big_l = model.ln_dm1
    x1 = np.linspace(max(0.0, opt.x1 - 3), opt.x1 + 3, 801)
    x2 = np.linspace(max(0.0, opt.x2 - 3), opt.x2 + 3, 801)
    grid = engine_objective(x1[:, None], x2[None, :], beta1, 1.0, big_l)
    best = float(engine_objective(opt.x1, opt.x2, beta1, 1.0, big_l))
    assert best >= grid.max() - 1e-12 * abs(best)
    assert engine_stationarity_residual(opt.x1, opt.x2, beta1, 1.0, big_l) <= 1e-9
    assert opt.power == pytest.approx(max_engine_power(model, opt.eps1, opt.eps2), rel=1e-12)
    assert 0 < opt.efficiency < 1 - beta1


def test_engine_power_from_explicit_spectra_matches_degenerate_formula():
    model = SimpleRelaxModel(0.4, 1.0, 2.0, 0.5, d=4)
    e1, e2 = 3.0, 1.5
    spectra = (np.array([0.0, e1, e1, e1]), np.array([0.0, e2, e2, e2]))
    assert max_engine_power_spectrum(model, *spectra) == pytest.approx(max_engine_power(model, e1, e2), rel=1e-13)


def test_engine_needs_a_temperature_difference():
    with pytest.raises(NotApplicableError):
        optimize_engine_spectrum(SimpleRelaxModel(1.0, 1.0, d=2))


def test_model_validation():
    with pytest.raises(InvalidInputError):
        SimpleRelaxModel(1.0, 0.5, d=2)
    with pytest.raises(InvalidInputError):
        SimpleRelaxModel(0.5, 1.0, d=2, n_qubits=1)
    with pytest.raises(InvalidInputError):
        optimize_machine(SimpleRelaxModel(0.5, 1.0, d=2), "heat pump")


def test_qubit_count_uses_log_domain():
    model = SimpleRelaxModel.qubits(5000, 0.5, 1.0)
    assert model.ln_dm1 == pytest.approx(5000 * math.log(2), rel=1e-12)
    assert optimize_fridge_spectrum(model).power > 0


@pytest.mark.parametrize("kind", [ENGINE, REFRIGERATOR])
def test_single_qubit_comparison_is_trivial(kind):
    c = many_qubit_compare(1, SimpleRelaxModel(0.5, 1.0, d=2), kind)
    assert c.ratio == pytest.approx(1.0, rel=1e-14)
