"""Conley-Moser checks: boundary mapping on samples and measured slice contraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import branch_of_symbol
from .shooting import ShootingError, solve_segment
from .slices import SliceSet, shoot_targets


class InconclusiveError(RuntimeError):
    """The sample budget ran out before the width ratios could be measured."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class ConleyMoserReport:
    cond_i: bool
    nu: float
    nu_stable: float
    nu_unstable: float
    levels: int
    widths: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.cond_i and self.nu < 1

    def to_dict(self) -> dict:
        return {"cond_i": self.cond_i, "nu": self.nu, "nu_stable": self.nu_stable,
                "nu_unstable": self.nu_unstable, "levels": self.levels,
                "widths": self.widths, "boundary": self.boundary}


def orbit_guess(ss: SliceSet, symbols, s_first, u_last) -> np.ndarray:
    """Initial points for a segment following the given symbols."""
    n_s = ss.problem.n_s
    rows = []
    for i in range(len(symbols) + 1):
        u = ss.H[symbols[i]].center[:2] if i < len(symbols) else np.asarray(u_last, float)
        s = ss.V[symbols[i - 1]].center[2:] if i > 0 else np.asarray(s_first, float)
        rows.append(np.concatenate([u, s[:n_s]]))
    return np.array(rows)


def shoot_word(ss: SliceSet, symbols, s_first, u_last, steps: int = 4) -> np.ndarray:
    """Orbit segment with itinerary ``symbols``, s(q_0) = s_first, u(q_m) = u_last.

    Solved first with boundary values taken at the slice centers, then moved
    to the requested values by continuation.
    """
    branches = [branch_of_symbol(a) for a in symbols]
    s_first = np.asarray(s_first, float)
    u_last = np.asarray(u_last, float)
    s_c = ss.H[symbols[0]].center[2:]
    u_c = np.zeros(2)
    Q = orbit_guess(ss, symbols, s_c, u_c)
    Q, _ = solve_segment(ss.problem, branches, s_c, u_c, Q)
    t, dt = 0.0, 1.0 / steps
    while t < 1:
        tt = min(1.0, t + dt)
        try:
            Qn, _ = solve_segment(ss.problem, branches, s_c + tt * (s_first - s_c),
                                  u_c + tt * (u_last - u_c), Q)
        except ShootingError:
            dt /= 2
            if dt < 1e-3:
                raise
            continue
        Q, t = Qn, tt
        dt *= 1.5
    return Q


def stable_width(ss: SliceSet, symbols) -> float:
    """Stable-direction diameter of V with backward itinerary ``symbols`` (last applied last).

    Sum over stable axes of the spread of s at the end of the segment when
    s at the start runs from -e_i to +e_i; u at the end is pinned to 0.
    """
    key = ("stable", tuple(symbols))
    if key in ss.cache:
        return ss.cache[key]
    n_s = ss.problem.n_s
    total = 0.0
    for i in range(n_s):
        e = np.zeros(n_s)
        e[i] = 1.0
        hi = shoot_word(ss, symbols, e, np.zeros(2))[-1, 2:]
        lo = shoot_word(ss, symbols, -e, np.zeros(2))[-1, 2:]
        total += float(np.linalg.norm(hi - lo))
    ss.cache[key] = total
    return total


def unstable_width(ss: SliceSet, symbols) -> float:
    """Unstable-direction diameter of H with forward itinerary ``symbols``."""
    key = ("unstable", tuple(symbols))
    if key in ss.cache:
        return ss.cache[key]
    n_s = ss.problem.n_s
    total = 0.0
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1.0
        hi = shoot_word(ss, symbols, np.zeros(n_s), e)[0, :2]
        lo = shoot_word(ss, symbols, np.zeros(n_s), -e)[0, :2]
        total += float(np.linalg.norm(hi - lo))
    ss.cache[key] = total
    return total


def default_words(labels, levels: int) -> list[tuple]:
    words = [tuple([a] * (levels + 1)) for a in labels]
    cyc = list(labels)
    words.append(tuple(cyc[i % len(cyc)] for i in range(levels + 1)))
    words.append(tuple(cyc[(len(cyc) - 1 - i) % len(cyc)] for i in range(levels + 1)))
    return words


def check_boundary_mapping(ss: SliceSet, n_samples: int = 16, tol: float = 1e-8) -> dict:
    """Condition (i) on samples.

    Unstable-boundary points of H_j (shot so that their image has max|u| = 1)
    must land on the unstable boundary of the box with stable part inside
    V_j's bounding box; stable-boundary points of H_j (max|s| = 1) must map
    strictly inside the box in s.
    """
    problem = ss.problem
    rng = np.random.default_rng(1)
    out = {"unstable_boundary_error": 0.0, "stable_boundary_margin": np.inf, "ok": True}
    for lab, h in ss.H.items():
        img = problem.step(h.boundary, h.branch)
        err = float(np.max(np.abs(np.max(np.abs(img[:, :2]), axis=1) - 1.0)))
        v = ss.V[lab]
        inside = bool(np.all(v.contains(img, tol=tol)))
        out["unstable_boundary_error"] = max(out["unstable_boundary_error"], err)
        # stable boundary: one stable coordinate at +-1, the rest random
        S = rng.uniform(-1, 1, size=(n_samples, problem.n_s))
        axis = rng.integers(0, problem.n_s, n_samples)
        S[np.arange(n_samples), axis] = rng.choice([-1.0, 1.0], n_samples)
        U = rng.uniform(-0.95, 0.95, size=(n_samples, 2))
        W, ok = shoot_targets(problem, h.branch, h.center, U, S)
        img_s = problem.step(W[ok], h.branch)
        margin = float(1.0 - np.max(np.abs(img_s[:, 2:]))) if ok.any() else -np.inf
        out["stable_boundary_margin"] = min(out["stable_boundary_margin"], margin)
        out["ok"] &= bool(err < tol and inside and ok.all() and margin > 0)
    return out


def verify_conley_moser(ss: SliceSet, levels: int = 3, words=None,
                        sample_budget: int = 2000) -> ConleyMoserReport:
    """Condition (i) on boundary samples and the empirical contraction factor nu.

    nu is the largest ratio d(level k) / d(level k-1) over the tested words,
    for stable widths (nested V) and unstable widths (nested H), k = 1..levels.
    """
    if levels < 3:
        raise ValueError("at least three nesting levels are required")
    words = words or default_words(ss.labels, levels)
    per_width = 2 * max(ss.problem.n_s, 2)
    needed = len(words) * (2 * levels + 1) * per_width
    if needed > sample_budget:
        raise InconclusiveError(f"{needed} shootings exceed the budget {sample_budget}",
                                {"needed": needed, "budget": sample_budget})
    boundary = check_boundary_mapping(ss)
    ratios_s, ratios_u = [], []
    widths = {}
    try:
        for w in words:
            ds = [stable_width(ss, w[-(k + 1):]) for k in range(levels + 1)]
            du = [unstable_width(ss, w[:k + 1]) for k in range(levels + 1)]
            widths[",".join(map(str, w))] = {"stable": ds, "unstable": du}
            ratios_s += [ds[k] / ds[k - 1] for k in range(1, levels + 1)]
            ratios_u += [du[k] / du[k - 1] for k in range(1, levels + 1)]
    except ShootingError as exc:
        raise InconclusiveError(f"width measurement failed: {exc}",
                                {"words_done": list(widths)}) from exc
    nu_s, nu_u = max(ratios_s), max(ratios_u)
    return ConleyMoserReport(boundary["ok"], max(nu_s, nu_u), nu_s, nu_u, levels, widths, boundary)
