import numpy as np
import pytest

from ottoforge.fast import GeneralizedOttoCycle
from ottoforge.model import BOSONIC, FERMIONIC, FIXED_RATE, BathModel, MachineModel

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record ``(number, ok, detail)`` for the acceptance summary printed at the end of the run."""

    def record(number, ok, detail):
        _CRITERIA.append((number, bool(ok), detail))
        print(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_bath(rng, families=(FERMIONIC, BOSONIC, FIXED_RATE)):
    family = families[int(rng.integers(len(families)))]
    beta = float(rng.uniform(0.2, 3.0))
    if family == FIXED_RATE:
        return BathModel.fixed_rate(beta, float(rng.uniform(0.2, 2.0)))
    return BathModel(beta, family, {"gamma": float(rng.uniform(0.2, 2.0))})


def random_model(rng, d, n_baths, box=(0.0, 5.0), families=(FERMIONIC, BOSONIC, FIXED_RATE)):
    return MachineModel(tuple(random_bath(rng, families) for _ in range(n_baths)), (tuple(box),) * (d - 1))


def random_cycle(rng, model, n_legs):
    lo, hi = model.bounds[0]
    controls = rng.uniform(lo, hi, (n_legs, model.dim - 1))
    baths = rng.integers(0, model.n_baths, n_legs)
    mus = rng.dirichlet(np.ones(n_legs))
    return GeneralizedOttoCycle.from_arrays(controls, baths, mus, normalize=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240615)
