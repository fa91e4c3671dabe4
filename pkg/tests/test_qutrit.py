import numpy as np
import pytest

from ottoforge.errors import InvalidInputError
from ottoforge.model import GapWeights
from ottoforge.qutrit import PeakedScenario, build_qutrit_model, contour_xy, peaked_gap, xy_to_mu


def test_xy_map_covers_the_simplex():
    mus = xy_to_mu([0.0, 1.0, 0.3, 0.5], [0.2, 0.7, 1.0, 0.0])
    assert np.allclose(mus.sum(axis=1), 1.0)
    assert np.all(mus >= 0)
    assert mus[0, 0] == 0.0 and np.all(mus[1, 1:] == 0.0) and mus[2, 2] == 0.0 and mus[3, 1] == 0.0


def test_qutrit_model_kinds():
    m = build_qutrit_model("bosonic", 0.5, 1.0)
    assert m.dim == 3 and m.n_baths == 2
    with pytest.raises(InvalidInputError):
        build_qutrit_model("classical", 0.5, 1.0)


def test_peaked_scenario_constants():
    sc = PeakedScenario.fig5()
    assert sc.betas == (8.12, 1.0, 7.81)
    assert sc.targets[1] == (10.07, 9.58)
    model = sc.model()
    for a, target in enumerate(sc.targets):
        assert model.baths[a].matches(target)
        assert not model.baths[a].matches(np.add(target, 0.01))
    with pytest.raises(InvalidInputError):
        PeakedScenario(sc.betas, (sc.targets[0],) * 3, sc.gammas)


def test_contour_grid_matches_direct_evaluation():
    sc = PeakedScenario.fig5()
    res = contour_xy(sc, resolution=64)
    i, j = 10, 40
    direct = peaked_gap(sc, xy_to_mu(res.x[i], res.y[j]))
    assert res.power[i, j] == pytest.approx(direct, rel=1e-10)
    assert res.peak >= np.nanmax(res.power) - 1e-12
    assert res.boundary_max <= res.peak + 1e-9 * abs(res.peak)


def test_contour_resolution_guard():
    with pytest.raises(InvalidInputError):
        contour_xy(PeakedScenario.fig5(), resolution=8)


def test_single_bath_vertices_produce_no_power():
    sc = PeakedScenario.fig5()
    res = contour_xy(sc, resolution=64, weights=GapWeights.engine(3))
    # x = 1 keeps only bath 0: a single bath cannot run an engine
    assert np.allclose(res.power[-1, :], 0.0, atol=1e-12)
