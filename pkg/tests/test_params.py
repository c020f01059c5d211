import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snls_horseshoe.params import (ModelParams, ParameterError, SearchBudgetError,
                                   check_nonresonance, check_silnikov_conditions, compute_saddle,
                                   compute_spectrum)
from support import resonant_ladder

PHYS = dict(alpha=1.0, beta=2.0, omega=0.8)


def test_saddle_at_zero_eps_is_omega_squared():
    s = compute_saddle(ModelParams(**PHYS, epsilon=0.0))
    assert s.I == pytest.approx(0.64, abs=1e-15)
    # cos(theta) = alpha sqrt(I) / beta = 0.4
    assert math.cos(s.theta) == pytest.approx(0.4, abs=1e-15)
    assert abs(s.q_value) == pytest.approx(0.8, abs=1e-15)


def test_saddle_first_order_shift():
    # I = w^2 - eps sqrt(beta^2 - alpha^2 w^2) / (2 w) = 0.64 - 0.01 sqrt(3.36) / 1.6
    s = compute_saddle(ModelParams(**PHYS, epsilon=0.01))
    assert s.I == pytest.approx(0.64 - 0.01 * math.sqrt(3.36) / 1.6, abs=1e-15)
    assert 0 < s.theta < math.pi / 2


def test_spectrum_zero_eps_values():
    lad = compute_spectrum(ModelParams(**PHYS, epsilon=0.0))
    # lambda_1^+ = 2 sqrt(0.5 * 0.78), lambda_2^+ = 2 sqrt(2 * -0.72) = 2.4 i
    assert lad.lambda_plus[1] == pytest.approx(2 * math.sqrt(0.39), abs=1e-14)
    assert abs(lad.lambda_plus[1] - 1.24900) < 1e-5
    assert abs(lad.lambda_plus[2] - 2.4j) < 1e-10
    assert lad.lambda_plus[0] == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.0, 0.05), st.integers(0, 16))
def test_spectrum_pairs_share_real_shift(eps, n):
    lad = compute_spectrum(ModelParams(**PHYS, epsilon=eps))
    s = compute_saddle(ModelParams(**PHYS, epsilon=eps))
    shift = -eps * (1.0 + n * n)
    p, m = lad.lambda_plus[n], lad.lambda_minus[n]
    assert (p + m) / 2 == pytest.approx(shift, abs=1e-12)
    rad = (n * n / 2 + 0.64 - s.I) * (3 * s.I - 0.64 - n * n / 2)
    assert ((p - m) / 2) ** 2 == pytest.approx(4 * rad, abs=1e-10)


def test_lambda_relabelling():
    lad = compute_spectrum(ModelParams(**PHYS, epsilon=0.01))
    assert lad.Lambda(3) == lad.lambda_plus[3]
    assert lad.Lambda(-1) == lad.lambda_minus[0]
    assert lad.Lambda(-4) == lad.lambda_minus[3]


def test_silnikov_holds_at_eps_001():
    lad = compute_spectrum(ModelParams(**PHYS, epsilon=0.01))
    rep = check_silnikov_conditions(lad)
    assert rep.c1 and rep.c2 and rep.c3 and rep.all_hold
    assert rep.rates.a == pytest.approx(0.05, abs=1e-12)
    assert rep.rates.gamma1 < rep.rates.gamma2


def test_silnikov_indeterminate_at_zero_eps():
    # lambda_0^+ = 0 when eps = 0
    rep = check_silnikov_conditions(compute_spectrum(ModelParams(**PHYS, epsilon=0.0)))
    assert rep.indeterminate and not rep.all_hold


def test_resonant_ladder_witness():
    res = check_nonresonance(resonant_ladder())
    assert not res.holds
    assert res.witness["n"] == 2 and sorted(res.witness["l"]) == [0, 1]
    assert res.witness["distance"] == pytest.approx(0.0, abs=1e-15)
    assert res.worst_margin == pytest.approx(-0.25 ** 2, abs=1e-15)


def test_physical_ladder_nonresonant():
    lad = compute_spectrum(ModelParams(**PHYS, epsilon=0.01))
    res = check_nonresonance(lad, s=4, n_max=6, r_max=4, l_bound=6)
    assert res.holds and res.worst_margin > 0


def test_nonresonance_budget():
    lad = compute_spectrum(ModelParams(**PHYS, epsilon=0.01), 12)
    with pytest.raises(SearchBudgetError):
        check_nonresonance(lad, n_max=12, r_max=6, l_bound=12, budget=1000)


@pytest.mark.parametrize("kw", [dict(omega=0.4), dict(omega=1.0), dict(alpha=-1.0),
                                dict(alpha=3.0), dict(epsilon=-0.1)])
def test_parameter_validation(kw):
    base = dict(PHYS, epsilon=0.01)
    base.update(kw)
    with pytest.raises(ParameterError):
        ModelParams(**base)


def test_eps_too_large_rejected():
    with pytest.raises(ParameterError):
        compute_saddle(ModelParams(**PHYS, epsilon=2.0))


def test_spectrum_needs_three_modes():
    with pytest.raises(ValueError):
        compute_spectrum(ModelParams(**PHYS), n_max=2)


def test_ladder_entries_listing():
    lad = compute_spectrum(ModelParams(**PHYS, epsilon=0.01), 4)
    ent = lad.entries()
    assert len(ent) == 5 and ent[2][0] == 2
    assert np.isclose(ent[2][1], lad.lambda_plus[2])
