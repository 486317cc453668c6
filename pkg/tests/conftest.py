from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from caus.dispatch import Unit, UcInstance, WindFarm
from caus.gmm import ConditionalComponent, ConditionalGmm, GaussianComponent, JointGmm

settings.register_profile(
    "caus", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("caus")


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return Path(str(resources.files("caus") / "data"))


def random_spd(rng, m, scale=1.0, floor=0.1):
    a = rng.normal(size=(m, m))
    return scale * (a @ a.T) + floor * np.eye(m)


def random_conditional(rng, k, m, spread=3.0) -> ConditionalGmm:
    w = rng.dirichlet(np.ones(k))
    comps = [ConditionalComponent(float(w[i]), rng.normal(scale=spread, size=m), random_spd(rng, m))
             for i in range(k)]
    return ConditionalGmm(tuple(comps))


def random_joint(rng, k, n, m) -> JointGmm:
    w = rng.dirichlet(np.ones(k))
    comps = [GaussianComponent(float(w[i]), rng.normal(scale=2.0, size=n + m), random_spd(rng, n + m))
             for i in range(k)]
    return JointGmm(tuple(comps), n, m)


def gaussian(mean, cov, weight=1.0) -> ConditionalGmm:
    return ConditionalGmm((ConditionalComponent(weight, np.asarray(mean, float), np.asarray(cov, float)),))


def one_unit_instance(load=50.0, p_max=100.0, farms=0, energy=10.0, commit=0.0, startup=0.0,
                      shed=1000.0, spill=500.0, periods=1) -> UcInstance:
    unit = Unit("g1", "bus1", 0.0, p_max, p_max, p_max, cost_commit=commit, cost_startup=startup,
                cost_energy=energy)
    wind = tuple(WindFarm(f"w{i + 1}", "bus1") for i in range(farms))
    return UcInstance(tuple([load] * periods), (unit,), wind, shed_penalty=shed, spill_penalty=spill)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
