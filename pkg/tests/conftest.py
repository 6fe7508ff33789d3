import numpy as np
import pytest

from milinterp.datasets import GeneratorConfig, generate_fourclass, generate_single_positive, generate_smil
from milinterp.models import OracleModel


def small_config(seed=11, **kw):
    return GeneratorConfig(num_train=40, num_val=20, num_test=60, seed=seed, **kw)


@pytest.fixture(scope="session")
def fourclass():
    return generate_fourclass(small_config())


@pytest.fixture(scope="session")
def oracle4(fourclass):
    return OracleModel.from_dataset(fourclass)


@pytest.fixture(scope="session")
def single_positive():
    return generate_single_positive(small_config(seed=5), 3)


@pytest.fixture(scope="session")
def smil():
    return generate_smil(small_config(seed=7), 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
