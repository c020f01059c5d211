import warnings

import pytest
from hypothesis import settings

from snls_horseshoe.global_map import CANONICAL_ETA, canonical_model, canonical_rates
from snls_horseshoe.horseshoe import (AffineTestProblem, compute_slices, model_problem,
                                      verify_conley_moser)

settings.register_profile("repo", max_examples=40, deadline=None)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def canonical():
    return canonical_model(), canonical_rates(), CANONICAL_ETA


@pytest.fixture(scope="session")
def canonical_slices(canonical):
    """Slices and Conley-Moser report of the canonical instance at l = 2."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        problem, slabs, fixed = model_problem(*canonical, l=2)
        ss = compute_slices(problem)
        report = verify_conley_moser(ss)
    return ss, report, slabs, fixed


@pytest.fixture(scope="session")
def affine_slices():
    ss = compute_slices(AffineTestProblem())
    return ss, verify_conley_moser(ss)


def pytest_terminal_summary(terminalreporter):
    from support import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
