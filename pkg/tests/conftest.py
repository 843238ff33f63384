import pytest
from hypothesis import HealthCheck, settings

from drlab.evolve import EvolveConfig, evolve
from drlab.laws import ModelParams, stable_critical_init, two_point_critical

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def m2() -> ModelParams:
    return ModelParams(2)


@pytest.fixture(scope="session")
def m3() -> ModelParams:
    return ModelParams(3)


@pytest.fixture(scope="session")
def two_point_trace_512(m2):
    """Critical two-atom run used by the finite-variance experiments."""
    law = two_point_critical(2, m2)
    config = EvolveConfig(
        n_max=512, tail_epsilon=1e-16, k_derivatives=8, record_laws=True
    )
    return evolve(law, m2, config, initial_descriptor="two_point(a=2)")


@pytest.fixture(scope="session")
def stable3_trace_512(m2):
    """Heavy-tailed critical run (alpha=3, K=1e5) at the default truncation."""
    law, _fam = stable_critical_init(2, 3.0, 100_000)
    config = EvolveConfig(n_max=512, tail_epsilon=1e-14, k_derivatives=1)
    return evolve(law, m2, config, initial_descriptor="stable(alpha=3,K=100000)")
