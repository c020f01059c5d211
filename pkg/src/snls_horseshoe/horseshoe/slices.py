"""Stable slices V_j and their preimages H_j, found by forward shooting only."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .problem import BoxProblem
from .shooting import preimage


class SliceError(RuntimeError):
    """Fewer than four usable slices; ``diagnostics`` says what went wrong."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class Slice:
    orientation: str
    label: int
    branch: int
    center: np.ndarray
    boundary: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, w, tol: float = 0.0) -> np.ndarray:
        """Bounding-box membership in the coordinates the slice is thin in."""
        w = np.atleast_2d(w)
        cols = w[:, 2:] if self.orientation == "stable" else w[:, :2]
        return np.all((cols >= self.lo - tol) & (cols <= self.hi + tol), axis=1)


@dataclass
class SliceSet:
    problem: BoxProblem
    V: dict
    H: dict
    grid: int
    diagnostics: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def labels(self) -> list[int]:
        return sorted(self.V, key=lambda s: (s < 0, abs(s)))


def _u1_prime_zero(problem, branch, u1, s, lo, hi, n_scan):
    """u2 in [lo, hi] on the line u1 = const where u1' = 0, or NaN."""
    u2 = np.linspace(lo, hi, n_scan)
    rows = np.column_stack([np.full(n_scan, u1), u2, np.tile(s, (n_scan, 1))])
    f = problem.step(rows, branch)[:, 0]
    fin = np.isfinite(f)

    def h(v):
        return problem.step(np.concatenate([[u1, v], s])[None, :], branch)[0, 0]

    idx = np.flatnonzero(fin[:-1] & fin[1:] & (np.sign(f[:-1]) != np.sign(f[1:])))
    if len(idx):
        i = idx[0]
        return brentq(h, u2[i], u2[i + 1], xtol=1e-15, rtol=1e-15)
    # the root may hide between the domain edge and the first finite sample
    for i in np.flatnonzero(fin[:-1] != fin[1:]):
        good, bad = (u2[i], u2[i + 1]) if fin[i] else (u2[i + 1], u2[i])
        for _ in range(60):
            mid = 0.5 * (good + bad)
            if np.isfinite(h(mid)):
                good = mid
            else:
                bad = mid
        far = u2[i] if fin[i] else u2[i + 1]
        if np.sign(h(good)) != np.sign(h(far)) and good != far:
            return brentq(h, min(good, far), max(good, far), xtol=1e-15, rtol=1e-15)
    return np.nan


def _centers(problem, branch, grid, n_scan):
    s = problem.stable_center(branch)
    lo, hi = problem.source_u2(branch)
    u1s = np.linspace(-1.0, 1.0, grid)
    curve = np.array([_u1_prime_zero(problem, branch, u, s, lo, hi, n_scan) for u in u1s])

    def g(u1):
        v = _u1_prime_zero(problem, branch, u1, s, lo, hi, n_scan)
        if not np.isfinite(v):
            return np.nan
        return problem.step(np.concatenate([[u1, v], s])[None, :], branch)[0, 1]

    gv = np.array([g(u) if np.isfinite(c) else np.nan for u, c in zip(u1s, curve)])
    fin = np.isfinite(gv)
    out = []
    for i in np.flatnonzero(fin[:-1] & fin[1:] & (np.sign(gv[:-1]) != np.sign(gv[1:]))):
        u1c = brentq(g, u1s[i], u1s[i + 1], xtol=1e-15, rtol=1e-15)
        out.append(np.concatenate([[u1c, _u1_prime_zero(problem, branch, u1c, s, lo, hi, n_scan)], s]))
    diag = {"branch": branch, "lines": int(fin.sum()),
            "max_abs_u2_prime": float(np.nanmax(np.abs(gv))) if fin.any() else 0.0}
    return out, diag


def _square_boundary(n_side: int) -> np.ndarray:
    t = np.linspace(-1.0, 1.0, n_side, endpoint=False)
    return np.concatenate([np.column_stack([t, -np.ones_like(t)]),
                           np.column_stack([np.ones_like(t), t]),
                           np.column_stack([-t, np.ones_like(t)]),
                           np.column_stack([-np.ones_like(t), -t])])


def shoot_targets(problem, branch, center, targets_u, s_rows=None, n_homotopy: int = 8,
                  min_dt: float = 1e-4):
    """Preimages of target u-values by continuation from the component center.

    Target and stable part move together from the center values to the
    requested ones. Each row has its own step in the homotopy parameter,
    halved on failure and enlarged after a success.
    """
    targets_u = np.atleast_2d(targets_u)
    m = len(targets_u)
    s0 = center[2:]
    s_rows = np.tile(s0, (m, 1)) if s_rows is None else np.atleast_2d(s_rows)
    guess = np.tile(center[:2], (m, 1))
    t = np.zeros(m)
    dt = np.full(m, 1.0 / n_homotopy)
    failed = np.zeros(m, dtype=bool)
    while True:
        act = np.flatnonzero((t < 1) & ~failed)
        if len(act) == 0:
            break
        tt = np.minimum(t[act] + dt[act], 1.0)[:, None]
        W, conv = preimage(problem, branch, s0 + tt * (s_rows[act] - s0), tt * targets_u[act],
                           guess[act])
        ok, bad = act[conv], act[~conv]
        guess[ok] = W[conv, :2]
        t[ok] = tt[conv, 0]
        dt[ok] *= 1.5
        dt[bad] *= 0.5
        failed[bad[dt[bad] < min_dt]] = True
    W = np.column_stack([guess, s_rows])
    lo, hi = problem.source_u2(branch)
    ok = ~failed & (np.abs(W[:, 0]) <= 1) & (W[:, 1] >= lo) & (W[:, 1] <= hi)
    return W, ok


def compute_slices(problem: BoxProblem, grid: int = 64, n_scan: int | None = None,
                   stable_samples: int = 32) -> SliceSet:
    """Four stable slices V_j = P(H_j) crossing the box, with their preimages H_j.

    Component centers are the points mapped to the box center: on each line
    u1 = const the zero of u1' is bracketed and refined, and sign changes of
    u2' along that curve are refined by root finding. H_j is the preimage of
    the box, traced by shooting the boundary of the unstable square.
    """
    n_scan = n_scan or 8 * grid
    diags = {"grid": grid, "branches": []}
    found = {}
    for branch in (1, 2):
        centers, d = _centers(problem, branch, grid, n_scan)
        d["components"] = len(centers)
        diags["branches"].append(d)
        found[branch] = sorted(centers, key=lambda c: c[0])
    counts = [len(found[1]), len(found[2])]
    if counts != [2, 2]:
        raise SliceError(f"expected 2 components per branch, found {counts}", diags)

    targets = _square_boundary(max(4, grid // 4))
    rng = np.random.default_rng(0)
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=problem.n_s)))
    if len(corners) > stable_samples:
        corners = corners[rng.choice(len(corners), stable_samples, replace=False)]
    probe_u = np.array([[0, 0], [0.9, 0.9], [-0.9, 0.9], [0.9, -0.9], [-0.9, -0.9]])
    V, H = {}, {}
    for branch in (1, 2):
        for k, c in enumerate(found[branch]):
            label = (k + 1) * (1 if branch == 1 else -1)
            Wb, ok = shoot_targets(problem, branch, c, targets)
            if not ok.all():
                diags["failed_label"] = label
                diags["failed_targets"] = targets[~ok].tolist()
                raise SliceError(f"image of component {label} does not cross the box", diags)
            img = problem.step(Wb, branch)
            err = float(np.max(np.abs(img[:, :2] - targets)))
            # stable extent: shoot stable corners at several image positions
            su = np.repeat(probe_u, len(corners), axis=0)
            ss = np.tile(corners, (len(probe_u), 1))
            Ws, oks = shoot_targets(problem, branch, c, su, ss)
            if not oks.all():
                diags["failed_label"] = label
                raise SliceError(f"stable corners of component {label} not reachable", diags)
            img_s = problem.step(Ws, branch)
            lo_u = np.minimum(Wb[:, :2].min(axis=0), Ws[:, :2].min(axis=0))
            hi_u = np.maximum(Wb[:, :2].max(axis=0), Ws[:, :2].max(axis=0))
            H[label] = Slice("unstable", label, branch, c, Wb, lo_u, hi_u)
            V[label] = Slice("stable", label, branch, problem.step(c[None, :], branch)[0], img,
                             img_s[:, 2:].min(axis=0), img_s[:, 2:].max(axis=0))
            diags.setdefault("image_error", {})[label] = err
    out = SliceSet(problem, V, H, grid, diags)
    _check_geometry(out)
    return out


def _check_geometry(ss: SliceSet):
    problem, d = ss.problem, ss.diagnostics
    labels = ss.labels
    sep = {}
    for i, j in itertools.combinations(labels, 2):
        a, b = ss.V[i], ss.V[j]
        gap = np.maximum(a.lo - b.hi, b.lo - a.hi)
        sep[f"{i},{j}"] = float(gap.max())
    d["stable_separation"] = sep
    d["stable_extent"] = float(max(np.max(np.abs(np.concatenate([v.lo, v.hi]))) for v in ss.V.values()))
    ok_u = {}
    for lab, h in ss.H.items():
        lo2, hi2 = problem.source_u2(h.branch)
        ok_u[lab] = bool(h.lo[0] > -1 and h.hi[0] < 1 and h.lo[1] > lo2 and h.hi[1] < hi2)
    d["H_inside_source"] = ok_u
    if min(sep.values()) <= 0:
        raise SliceError("stable slices overlap", d)
    if d["stable_extent"] >= 1:
        raise SliceError("a stable slice meets the stable boundary of the box", d)
    if not all(ok_u.values()):
        raise SliceError("a preimage slice meets the boundary of its source slab", d)
    if problem.sigma(ss.V[1].center[None, :]) is not None:
        sym = max(float(np.max(np.abs(problem.sigma(ss.V[k].center[None, :])[0] - ss.V[-k].center)))
                  for k in (1, 2))
        d["sigma_symmetry_error"] = sym
