"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline; they
are also collected in the terminal summary.
"""

import json
import math
import warnings

import mpmath
import numpy as np

from snls_horseshoe.cli import run_command
from snls_horseshoe.global_map import (CANONICAL_ETA, PoincareMap, affine_flow, canonical_model,
                                       canonical_rates, estimate_C)
from snls_horseshoe.horseshoe import (SymbolSequence, asymptotic_point, auto_select_l,
                                      conjugacy_residual, count_periodic_orbits,
                                      fixed_point_family, hat_coordinates, hat_distance,
                                      refine_fixed_point, verify_conley_moser)
from snls_horseshoe.normal_form import (flow_to_sigma1_by_events, local_map_P01,
                                        random_sigma0_points)
from snls_horseshoe.params import (ModelParams, check_nonresonance, check_silnikov_conditions,
                                   compute_spectrum)
from snls_horseshoe.solver import (FieldState, SolverConfig, apply_L, evolve, mass,
                                   shift_half_period, tangency_diagnostic)
from support import Criterion, linear_normal_form_trajectory, near_saddle, resonant_ladder

PHYS = dict(alpha=1.0, beta=2.0, omega=0.8)


def galerkin_blocks(params, K, dps=None):
    """2x2 blocks of apply_L on (Re, Im) of each cosine mode, built column by column."""
    cols = []
    for j in range(2 * K):
        e = np.zeros(K, dtype=complex)
        e[j // 2] = 1.0 if j % 2 == 0 else 1j
        cols.append(apply_L(FieldState(e), params, dps=dps))
    if dps is None:
        return [np.array([[cols[2 * n][n].real, cols[2 * n + 1][n].real],
                          [cols[2 * n][n].imag, cols[2 * n + 1][n].imag]]) for n in range(K)]
    return [mpmath.matrix([[cols[2 * n][n].real, cols[2 * n + 1][n].real],
                           [cols[2 * n][n].imag, cols[2 * n + 1][n].imag]]) for n in range(K)]


def pair_error(ev, ref):
    ev, ref = np.asarray(ev, dtype=complex), np.asarray(ref, dtype=complex)
    return min(np.max(np.abs(ev - ref)), np.max(np.abs(ev[::-1] - ref)))


def test_criterion_1_spectrum():
    with Criterion(1, "Galerkin spectrum of apply_L vs closed form", limit=1.0) as c:
        worst_mp, worst_dp = 0.0, {}
        for eps in (0.0, 1e-3, 1e-2):
            p = ModelParams(**PHYS, epsilon=eps)
            lad = compute_spectrum(p, 16)
            with mpmath.workdps(40):
                for n, B in enumerate(galerkin_blocks(p, 17, dps=40)):
                    ev = [complex(v) for v in mpmath.eig(B)[0]]
                    worst_mp = max(worst_mp, pair_error(ev, [lad.lambda_plus[n],
                                                             lad.lambda_minus[n]]))
            for n, B in enumerate(galerkin_blocks(p, 17)):
                err = pair_error(np.linalg.eigvals(B), [lad.lambda_plus[n], lad.lambda_minus[n]])
                worst_dp[(eps, n)] = err
        c.check("n<=16, eps in {0,1e-3,1e-2}", worst_mp < 1e-8, f"max error {worst_mp:.1e} (40 digits)")
        # in doubles only the eps = 0 Jordan block of mode 0 is limited by sqrt(machine eps)
        regular = max(v for k, v in worst_dp.items() if k != (0.0, 0))
        c.check("double precision, regular blocks", regular < 1e-8, f"{regular:.1e}")
        c.check("double precision, eps=0 mode 0", worst_dp[(0.0, 0)] < 1e-7,
                f"{worst_dp[(0.0, 0)]:.1e} (defective)")
        lad0 = compute_spectrum(ModelParams(**PHYS, epsilon=0.0), 16)
        l1, l2 = lad0.lambda_plus[1], lad0.lambda_plus[2]
        c.check("lambda_1^+", abs(l1 - 1.24900) < 1e-5, f"{l1.real:.6f}")
        c.check("lambda_2^+", abs(l2 - 2.4j) < 1e-10, f"|l2 - 2.4i| = {abs(l2 - 2.4j):.1e}")


def test_criterion_2_silnikov():
    with Criterion(2, "Silnikov ordering at eps = 1e-2", limit=1.0) as c:
        rep = check_silnikov_conditions(compute_spectrum(ModelParams(**PHYS, epsilon=0.01)))
        r = rep.rates
        c.check("conditions", rep.c1 and rep.c2 and rep.c3 and not rep.indeterminate,
                f"a={r.a:.4f} gamma1={r.gamma1:.4f} gamma2={r.gamma2:.4f}")


def test_criterion_3_solver():
    with Criterion(3, "solver physics at K=64, dt=1e-3", limit=60.0) as c:
        p0 = ModelParams(**PHYS, epsilon=0.0)
        p1 = ModelParams(**PHYS, epsilon=0.01)
        s = near_saddle(p0, amplitude=0.3, seed=1)
        drift = abs(mass(evolve(s, p0, SolverConfig(64, 1e-3, 10.0))) - mass(s))
        c.check("mass eps=0, t=10", drift < 1e-8, f"{drift:.1e}")
        s = near_saddle(p1, amplitude=0.3, seed=2)
        full = evolve(s, p1, SolverConfig(64, 1e-3, 2.0))
        split = evolve(evolve(s, p1, SolverConfig(64, 1e-3, 0.7)), p1, SolverConfig(64, 1e-3, 2.0))
        e = np.max(np.abs(full.modes - split.modes))
        c.check("semigroup", e < 1e-7, f"{e:.1e}")
        shifted = evolve(shift_half_period(s), p1, SolverConfig(64, 1e-3, 2.0))
        e = np.max(np.abs(shifted.modes - shift_half_period(full).modes))
        c.check("sigma-equivariance", e < 1e-9, f"{e:.1e}")
        fine = evolve(s.resized(128), p1, SolverConfig(128, 1e-3, 2.0))
        e = np.max(np.abs(fine.modes[:64] - full.modes))
        c.check("K-doubling", e < 1e-9, f"{e:.1e}")


def test_criterion_4_local_map():
    with Criterion(4, "closed-form local map vs event detection", limit=5.0) as c:
        rates = canonical_rates()
        worst = 0.0
        for p in random_sigma0_points(100, CANONICAL_ETA, rates, seed=0):
            q = local_map_P01(p, CANONICAL_ETA, rates)
            _, r = flow_to_sigma1_by_events(p, CANONICAL_ETA, rates)
            worst = max(worst, float(np.max(np.abs(q.to_array() - r.to_array()))))
        c.check("100 points", worst < 1e-9, f"max difference {worst:.1e}")


def test_criterion_5_global_map():
    with Criterion(5, "estimate_C round trip on the affine model", limit=5.0) as c:
        model = canonical_model()
        est = estimate_C(affine_flow(model, 1.0), model.q1_star, 1.0)
        err = float(np.max(np.abs(est.C - model.C)))
        c.check("entries", err < 1e-6, f"{err:.1e}")
        c.check("y-row", est.y_row_residual < 1e-6, f"{est.y_row_residual:.1e}")


def test_criterion_6_fixed_points():
    with Criterion(6, "fixed-point family and refinement", limit=30.0) as c:
        model, rates, eta = canonical_model(), canonical_rates(), CANONICAL_ETA
        fam = fixed_point_family(model, rates, l_range=range(0, 18), eta=eta)
        e0 = fam.entry(0)
        res = float(np.max(np.abs(e0.leading_order_residual(model, 1.0, rates.b))))
        c.check("l=0 entry", abs(e0.t0 - math.pi / 4) < 1e-12 and abs(e0.z_hat12 + 0.70711) < 1e-5,
                f"t0={e0.t0:.6f} z2={e0.z_hat12:.5f}")
        c.check("l=0 residual", res < 1e-10, f"{res:.1e}")
        P = PoincareMap(model, eta, rates)
        dist, t_ref = [], []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for l in range(6, 16):
                q = refine_fixed_point(P, asymptotic_point(fam, l, model, eta, rates))
                dist.append(hat_distance(q, fam.entry(l), model, eta, rates))
                t_ref.append(hat_coordinates(q, model, eta, rates)[0])
        c.check("converged l=6..15", len(dist) == 10, "10 labels")
        c.check("distance decreasing", all(b < a for a, b in zip(dist, dist[1:])),
                f"{dist[0]:.1e} -> {dist[-1]:.1e}")
        gap = (t_ref[-1] - t_ref[-2]) * rates.b / math.pi
        c.check("gap -> pi/b", abs(gap - 1) < 0.01, f"gap b/pi = {gap:.6f}")


def test_criterion_7_horseshoe():
    with Criterion(7, "horseshoe certificate at auto-selected l", limit=300.0) as c:
        model, rates, eta = canonical_model(), canonical_rates(), CANONICAL_ETA
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            l, problem, ss, attempts = auto_select_l(model, rates, eta, grid=64)
        geo = ss.diagnostics
        c.check("four disjoint slices", sorted(ss.labels) == [-2, -1, 1, 2],
                f"l={l}, rejected {sorted(attempts)}")
        sep = min(geo["stable_separation"].values())
        c.check("disjoint", sep > 0, f"min separation {sep:.3f}")
        c.check("avoid stable boundary", geo["stable_extent"] < 1,
                f"max |s| {geo['stable_extent']:.3f}")
        rep = verify_conley_moser(ss)
        c.check("nu < 1", rep.nu < 1 and rep.cond_i, f"nu={rep.nu:.4f}")
        counts = {p: count_periodic_orbits(ss, p, rep).count for p in (1, 2, 3)}
        c.check("counts", counts == {1: 4, 2: 16, 3: 64}, str(counts))
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(50):
            seq = SymbolSequence.centered(rng.choice(ss.labels, 2 * 8 + 5))
            r, bound = conjugacy_residual(ss, seq, 8, rep)
            worst = max(worst, r / bound)
        c.check("conjugacy k=8, 50 words", worst < 2, f"max residual/bound {worst:.2f}")


def test_criterion_8_nonresonance():
    with Criterion(8, "nonresonance witness and physical ladder", limit=60.0) as c:
        res = check_nonresonance(resonant_ladder())
        w = res.witness or {}
        c.check("resonant ladder rejected",
                not res.holds and w.get("n") == 2 and sorted(w.get("l", [])) == [0, 1],
                f"witness n={w.get('n')} l={w.get('l')}")
        phys = check_nonresonance(compute_spectrum(ModelParams(**PHYS, epsilon=0.01)),
                                  s=4, n_max=6, r_max=4, l_bound=6)
        c.check("physical ladder", phys.holds, f"margin {phys.worst_margin:.4f}")


def test_criterion_9_tangency():
    with Criterion(9, "tangency exponent on linear normal-form flow", limit=5.0) as c:
        states, frame, a, g = linear_normal_form_trajectory(ModelParams(**PHYS, epsilon=0.01))
        fit = tangency_diagnostic(states, frame).fit_decay(t_min=20)
        c.check("exponent", abs(fit / (g - a) - 1) < 0.05, f"fit {fit:.6f} vs {g - a:.6f}")


SUBCOMMANDS = [
    ["saddle"],
    ["spectrum"],
    ["nonres"],
    ["evolve", "--tend", "0.5", "--modes", "32", "--seed", "7"],
    ["local-map", "--n", "30", "--seed", "7"],
    ["global-map", "estimate"],
    ["global-map", "check"],
    ["fixed-points", "--l-min", "6", "--l-max", "10"],
    ["horseshoe", "run", "--l", "2", "--period", "2"],
]


def test_criterion_10_reproducibility(tmp_path):
    with Criterion(10, "byte-identical artifacts on repeated runs") as c:
        for argv in SUBCOMMANDS:
            outs = []
            for rep in ("a", "b"):
                out = tmp_path / rep / "-".join(argv)
                assert run_command([*argv, "--out", str(out)]) == 0
                outs.append(out)
            arts = json.loads((outs[0] / "manifest.json").read_text())["artifacts"] + ["manifest.json"]
            same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in arts)
            c.check(" ".join(argv[:2]), same, f"{len(arts)} files")
        run_command(["report", str(tmp_path / "a"), "--out", str(tmp_path / "ra")])
        run_command(["report", str(tmp_path / "a"), "--out", str(tmp_path / "rb")])
        same = all((tmp_path / "ra" / f).read_bytes() == (tmp_path / "rb" / f).read_bytes()
                   for f in ("summary.csv", "manifest.json"))
        c.check("report", same, "")
        c.check("all subcommands", all(ok for _, ok, _ in c.checks), f"{len(SUBCOMMANDS) + 1} runs")
