import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from ottoforge.errors import DegenerateCycleError, InvalidInputError
from ottoforge.fast import (
    GeneralizedOttoCycle,
    Leg,
    caratheodory_reduce,
    center_of_mass_residual,
    fast_gap,
    fast_steady_state,
    fixed_rate_gap,
    is_fast_regime,
    leg_heat_rates,
    reduce_cycle,
    relaxation_rate_eta,
)
from ottoforge.model import FIXED_RATE, BathModel, GapWeights, MachineModel

from conftest import random_cycle, random_model

seed_st = st.integers(0, 2**32 - 1)


def _instance(seed, max_d=5, max_baths=3, max_legs=4, families=None):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, max_d + 1))
    n_baths = int(rng.integers(1, max_baths + 1))
    kwargs = {"families": families} if families else {}
    model = random_model(rng, d, n_baths, **kwargs)
    cycle = random_cycle(rng, model, int(rng.integers(1, max_legs + 1)))
    weights = GapWeights(tuple(rng.uniform(-1, 1, n_baths)))
    return rng, model, cycle, weights


def _scaled(model, k):
    baths = []
    for b in model.baths:
        params = dict(b.params)
        for key in ("gamma", "rate"):
            if key in params:
                params[key] *= k
        baths.append(BathModel(b.beta, b.family, params))
    return MachineModel(tuple(baths), model.bounds)


@given(seed_st)
@settings(max_examples=60, deadline=None)
def test_steady_state_is_null_vector_of_aggregate_generator(seed):
    _, model, cycle, _ = _instance(seed)
    p0 = fast_steady_state(cycle, model).p0
    agg = sum(leg.mu * model.generator(leg.control, leg.bath).full for leg in cycle.legs)
    null = scipy.linalg.null_space(agg)
    assert null.shape[1] == 1
    oracle = null[:, 0] / null[:, 0].sum()
    assert np.allclose(p0, oracle, atol=1e-10)
    assert p0.sum() == pytest.approx(1.0, abs=1e-14)


@given(seed_st, st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_gap_is_invariant_under_leg_permutation(seed, rnd):
    _, model, cycle, weights = _instance(seed)
    order = list(range(cycle.n_legs))
    rnd.shuffle(order)
    a = fast_gap(cycle, weights, model)
    b = fast_gap(cycle.permuted(order), weights, model)
    assert b == pytest.approx(a, rel=1e-10, abs=1e-13)


@given(seed_st, st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_gap_scales_linearly_with_rates(seed, k):
    _, model, cycle, weights = _instance(seed)
    a = fast_gap(cycle, weights, model)
    b = fast_gap(cycle, weights, _scaled(model, k))
    assert b == pytest.approx(k * a, rel=1e-9, abs=1e-12)
    assert np.allclose(fast_steady_state(cycle, model).p0, fast_steady_state(cycle, _scaled(model, k)).p0, atol=1e-12)


@given(seed_st, st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_splitting_a_leg_leaves_gap_unchanged(seed, share):
    _, model, cycle, weights = _instance(seed)
    first = cycle.legs[0]
    split = (Leg(first.control, first.bath, share * first.mu), Leg(first.control, first.bath, (1 - share) * first.mu))
    longer = GeneralizedOttoCycle(split + cycle.legs[1:])
    assert fast_gap(longer, weights, model) == pytest.approx(fast_gap(cycle, weights, model), rel=1e-10, abs=1e-13)


@given(seed_st)
@settings(max_examples=40, deadline=None)
def test_leg_heat_rates_add_up_to_gap(seed):
    _, model, cycle, weights = _instance(seed)
    heats = leg_heat_rates(cycle, model)
    c = weights.array()[list(cycle.baths)]
    assert float(c @ heats) == pytest.approx(fast_gap(cycle, weights, model), rel=1e-10, abs=1e-13)


@given(seed_st)
@settings(max_examples=40, deadline=None)
def test_fixed_rate_closed_form_matches_generic_path(seed):
    rng, model, cycle, weights = _instance(seed, families=(FIXED_RATE,))
    energies = np.hstack([np.zeros((cycle.n_legs, 1)), cycle.controls])
    betas = np.array([model.baths[a].beta for a in cycle.baths])
    rates = np.array([model.baths[a].params["rate"] for a in cycle.baths])
    c = weights.array()[list(cycle.baths)]
    closed = fixed_rate_gap(cycle.mus, energies, betas, rates, c)
    assert closed == pytest.approx(fast_gap(cycle, weights, model), rel=1e-10, abs=1e-13)


def test_disconnected_cycle_is_degenerate():
    bath = BathModel.peaked(1.0, (1.0, 2.0), {(0, 1): 1.0})
    model = MachineModel((bath,), ((0.0, 5.0), (0.0, 5.0)))
    cycle = GeneralizedOttoCycle((Leg((1.0, 2.0), 0, 1.0),))
    with pytest.raises(DegenerateCycleError, match=r"\[2\]"):
        fast_steady_state(cycle, model)


def test_cycle_validation():
    with pytest.raises(InvalidInputError):
        GeneralizedOttoCycle((Leg((1.0,), 0, 0.4), Leg((2.0,), 0, 0.4)))
    with pytest.raises(InvalidInputError):
        GeneralizedOttoCycle((Leg((1.0,), 0, -0.1), Leg((2.0,), 0, 1.1)))
    with pytest.raises(InvalidInputError):
        GeneralizedOttoCycle(())


def test_fast_regime_indicator():
    model = MachineModel((BathModel.fixed_rate(1.0, 2.0),), ((0.0, 1.0),))
    cycle = GeneralizedOttoCycle((Leg((0.5,), 0, 1.0),))
    eta = relaxation_rate_eta(cycle, model)
    assert eta == pytest.approx(2.0)
    assert is_fast_regime(eta, 1e-3) and not is_fast_regime(eta, 1.0)


# ---------------------------------------------------------------- Caratheodory


def _zero_mean_points(rng, k, dim):
    v = rng.normal(size=(k, dim))
    w = rng.dirichlet(np.ones(k))
    return v - w @ v, w


@given(seed_st, st.integers(1, 5), st.integers(2, 12))
@settings(max_examples=80, deadline=None)
def test_caratheodory_output_is_a_valid_small_combination(seed, dim, k):
    rng = np.random.default_rng(seed)
    v, w = _zero_mean_points(rng, k, dim)
    pts, new_w, idx = caratheodory_reduce(v, w)
    assert len(idx) <= dim + 1
    assert np.all(new_w > 0) and new_w.sum() == pytest.approx(1.0)
    assert np.allclose(pts, v[idx])
    assert np.linalg.norm(new_w @ pts) <= 1e-9 * np.max(np.linalg.norm(v, axis=1))
    assert list(idx) == sorted(idx)


def test_caratheodory_is_deterministic():
    rng = np.random.default_rng(3)
    v, w = _zero_mean_points(rng, 9, 3)
    first = caratheodory_reduce(v, w)
    second = caratheodory_reduce(v, w)
    assert np.array_equal(first[2], second[2]) and np.array_equal(first[1], second[1])


def test_caratheodory_rejects_off_center_input():
    with pytest.raises(InvalidInputError):
        caratheodory_reduce([[1.0], [2.0]], [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        caratheodory_reduce([[1.0], [-1.0]], [1.0, 0.0])


@given(seed_st)
@settings(max_examples=30, deadline=None)
def test_reduce_cycle_keeps_the_steady_state(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 4))
    model = random_model(rng, d, 2)
    cycle = random_cycle(rng, model, int(rng.integers(d + 1, d + 5)))
    reduced = reduce_cycle(cycle, model)
    assert reduced.n_legs <= d
    p0 = fast_steady_state(cycle, model).p0
    assert np.allclose(fast_steady_state(reduced, model).p0, p0, atol=1e-9)
    assert center_of_mass_residual(reduced, model, p0) <= 1e-9
