import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from snls_horseshoe.params import ModelParams, compute_saddle
from snls_horseshoe.solver import (SCHEMES, BlowupError, FieldState, L_block, L_block_mp,
                                   SolverConfig, apply_L, evolve, from_grid, mass, rhs,
                                   shift_half_period, smooth_even_state, tangency_diagnostic,
                                   to_grid, trajectory)
from support import linear_normal_form_trajectory, near_saddle

P0 = ModelParams(1.0, 2.0, 0.8, 0.0)
P1 = ModelParams(1.0, 2.0, 0.8, 0.01)


@given(st.integers(0, 10**6))
def test_grid_round_trip(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    assert np.allclose(from_grid(to_grid(m, 33), 16), m, atol=1e-13)


def test_to_grid_matches_direct_cosine_sum():
    s = smooth_even_state(16, seed=1)
    z = np.pi * np.arange(21) / 20
    assert np.allclose(to_grid(s.modes, 21), s.sample(z), atol=1e-13)


def test_mass_parseval():
    s = smooth_even_state(32, seed=2)
    z = np.linspace(0, 2 * np.pi, 4001)
    q = s.sample(z)
    assert mass(s) == pytest.approx(trapezoid(np.abs(q) ** 2, z), rel=1e-9)


def test_saddle_rhs_is_second_order_in_eps():
    # the saddle is first-order accurate, so the residual scales like eps^2
    res = []
    for eps in (0.01, 0.005):
        p = ModelParams(1.0, 2.0, 0.8, eps)
        s = FieldState.constant(compute_saddle(p).q_value, 16)
        res.append(np.max(np.abs(rhs(s, p))))
    assert res[0] < 1e-3
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)


def test_mass_conserved_without_damping():
    s = near_saddle(P0)
    e = evolve(s, P0, SolverConfig(64, 1e-3, 2.0))
    assert abs(mass(e) - mass(s)) < 1e-9


def test_semigroup():
    s = near_saddle(P1, seed=4)
    cfg = SolverConfig(64, 1e-3, 1.0)
    direct = evolve(s, P1, cfg)
    split = evolve(evolve(s, P1, SolverConfig(64, 1e-3, 0.4)), P1, cfg)
    assert np.max(np.abs(direct.modes - split.modes)) < 1e-7


def test_sigma_equivariance():
    s = near_saddle(P1, seed=5)
    cfg = SolverConfig(64, 1e-3, 1.0)
    a = evolve(shift_half_period(s), P1, cfg)
    b = shift_half_period(evolve(s, P1, cfg))
    assert np.max(np.abs(a.modes - b.modes)) < 1e-9


def test_shift_half_period_is_involution():
    s = smooth_even_state(32, seed=3)
    assert np.array_equal(shift_half_period(shift_half_period(s)).modes, s.modes)
    z = np.linspace(0, np.pi, 7)
    assert np.allclose(shift_half_period(s).sample(z), s.sample(z + np.pi), atol=1e-13)


def test_schemes_agree_to_their_order():
    s = near_saddle(P1, seed=6)
    a = evolve(s, P1, SolverConfig(64, 1e-3, 0.5, scheme="etdrk4"))
    b = evolve(s, P1, SolverConfig(64, 1e-4, 0.5, scheme="split-step"))
    assert np.max(np.abs(a.modes - b.modes)) < 1e-5


def test_etdrk4_fourth_order():
    s = near_saddle(P1, K=32, seed=7, amplitude=0.3)
    ref = evolve(s, P1, SolverConfig(32, 2.5e-4, 0.5))
    e1 = np.max(np.abs(evolve(s, P1, SolverConfig(32, 4e-3, 0.5)).modes - ref.modes))
    e2 = np.max(np.abs(evolve(s, P1, SolverConfig(32, 2e-3, 0.5)).modes - ref.modes))
    assert 10 < e1 / e2 < 22


def test_trajectory_records_endpoints():
    s = near_saddle(P1, K=16)
    tr = trajectory(s, P1, SolverConfig(16, 1e-2, 0.35), record_every=10)
    assert tr[0].time == 0.0 and tr[-1].time == pytest.approx(0.35)
    assert [round(x.time, 10) for x in tr] == [0.0, 0.1, 0.2, 0.3, 0.35]


def test_backward_time_rejected():
    s = FieldState(near_saddle(P1, K=16).modes, 1.0)
    with pytest.raises(ValueError):
        evolve(s, P1, SolverConfig(16, 1e-2, 0.5))


def test_blowup_detected():
    s = FieldState.constant(1.0, 16)
    with pytest.raises(BlowupError):
        evolve(s, P1, SolverConfig(16, 1e-2, 5.0, blowup=0.5))


@pytest.mark.parametrize("kw", [dict(K=48), dict(K=8), dict(dt=0.0), dict(scheme="rk4")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_schemes_listed():
    assert set(SCHEMES) == {"etdrk4", "split-step"}


def test_apply_L_is_linearisation_of_rhs():
    p = P1
    base = FieldState.constant(compute_saddle(p).q_value, 16)
    d = smooth_even_state(16, seed=8, amplitude=1.0, base=0.0).modes
    h = 1e-6
    # central difference of rhs around the saddle, with the O(eps^2) offset cancelling
    fd = (rhs(FieldState(base.modes + h * d), p, dealias=False)
          - rhs(FieldState(base.modes - h * d), p, dealias=False)) / (2 * h)
    assert np.allclose(apply_L(FieldState(d), p), fd, atol=1e-7)


def test_tangency_exponent_on_linear_flow():
    states, frame, a, g = linear_normal_form_trajectory(P1)
    rep = tangency_diagnostic(states, frame)
    assert rep.fit_decay(t_min=20) == pytest.approx(g - a, rel=0.05)


def test_L_block_extended_precision_agrees():
    for n in (0, 3, 16):
        M = np.array(L_block_mp(n, P1).tolist(), dtype=float)
        assert np.allclose(M, L_block(n, P1), rtol=1e-14, atol=1e-14)


def test_jordan_block_at_zero_eps():
    # mode 0 at eps = 0 has a double zero eigenvalue; doubles resolve it only to ~sqrt(eps)
    assert np.max(np.abs(np.linalg.eigvals(L_block(0, P0)))) > 1e-9
    ev = mpmath.eig(L_block_mp(0, P0, dps=40))[0]
    assert max(abs(complex(v)) for v in ev) < 1e-15


def test_apply_L_extended_matches_double():
    d = smooth_even_state(16, seed=9, base=0.1)
    hi = np.array([complex(v) for v in apply_L(d, P1, dps=30)])
    assert np.allclose(hi, apply_L(d, P1), atol=1e-13)
