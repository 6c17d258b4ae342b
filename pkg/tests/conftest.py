import sys

import numpy as np
import pytest

from errcal.error_models import get_scenario


def zero_error(spec):
    """Same scenario with every measurement-error component switched off."""
    p = spec.p
    return spec.with_overrides({
        "error.sigma_T": np.zeros((p, p)).tolist(),
        "error.sigma_Ttilde": 0.0,
        "error.rho_TTtilde": [0.0] * p,
        "error.bio_sigma_eta": np.zeros((p, p)).tolist(),
        "error.bio_sigma_nu": 0.0,
        "error.systematic_x": {"alpha0": [0.0] * p, "alpha1": None},
        "error.systematic_y": {"gamma0": 0.0, "gamma1": None},
    })


@pytest.fixture
def reliability_spec():
    return get_scenario("scenario2")


@pytest.fixture
def validation_spec():
    return get_scenario("scenario2").with_overrides({"design": "validation"})


@pytest.fixture
def biomarker_spec():
    return get_scenario("whi").with_overrides({"cohort_n": 3000, "subset_n": 300})


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
