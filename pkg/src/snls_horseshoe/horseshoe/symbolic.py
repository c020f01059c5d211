"""Four-symbol sequences, the shift, and finite-depth points with a given itinerary."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .conley_moser import ConleyMoserReport, shoot_word, stable_width, unstable_width
from .problem import SYMBOLS, BoxProblem, branch_of_symbol
from .shooting import ShootingError, fd_jacobian_rows, polish_mp, solve_cycle
from .slices import SliceSet

ROUNDING = 64 * np.finfo(float).eps


class ItineraryError(RuntimeError):
    """No point with the requested itinerary was found at this depth."""


@dataclass(frozen=True)
class SymbolSequence:
    """Symbols a_k for k in [-zero, len(symbols) - zero); periodic if ``period`` is set.

    A periodic sequence stores one period a_0..a_{p-1} and ``zero`` is its phase.
    """

    symbols: tuple
    zero: int = 0
    period: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(a) for a in self.symbols))
        bad = [a for a in self.symbols if a not in SYMBOLS]
        if bad:
            raise ValueError(f"symbols must come from {SYMBOLS}, got {bad}")
        if self.period is not None and self.period != len(self.symbols):
            raise ValueError("a periodic sequence stores exactly one period")

    @classmethod
    def periodic(cls, word) -> "SymbolSequence":
        return cls(tuple(word), 0, len(word))

    @classmethod
    def centered(cls, window) -> "SymbolSequence":
        """Window a_{-m}..a_m of odd length 2m+1."""
        if len(window) % 2 != 1:
            raise ValueError("a centered window has odd length")
        return cls(tuple(window), len(window) // 2)

    def __getitem__(self, k: int) -> int:
        if self.period is not None:
            return self.symbols[(k + self.zero) % self.period]
        i = k + self.zero
        if not 0 <= i < len(self.symbols):
            raise IndexError(f"a_{k} lies outside the stored window")
        return self.symbols[i]

    @property
    def window(self) -> tuple[int, int]:
        if self.period is not None:
            return (-np.inf, np.inf)
        return (-self.zero, len(self.symbols) - 1 - self.zero)

    def slice(self, lo: int, hi: int) -> list[int]:
        return [self[k] for k in range(lo, hi + 1)]


def shift_map(seq: SymbolSequence) -> SymbolSequence:
    """chi(a)_k = a_{k+1}."""
    if seq.period is not None:
        return SymbolSequence(seq.symbols, (seq.zero + 1) % seq.period, seq.period)
    return SymbolSequence(seq.symbols, seq.zero + 1)


@dataclass
class ItineraryPoint:
    point: np.ndarray
    bound: float
    depth: int
    floor: float
    orbit: np.ndarray = field(repr=False)
    s_first: np.ndarray | None = field(default=None, repr=False)
    u_last: np.ndarray | None = field(default=None, repr=False)

    @property
    def tolerance(self) -> float:
        """Depth bound, floored at the forward rounding error of one step."""
        return max(self.bound, self.floor)


def step_symbol(ss: SliceSet, w, symbol: int) -> np.ndarray:
    return ss.problem.step(np.atleast_2d(w), branch_of_symbol(symbol))[0]


def rounding_floor(ss: SliceSet, w, symbols) -> float:
    """Forward error of evaluating the map along ``symbols`` from w.

    A point known to machine precision is moved by the composed map with
    error about eps |D(P^p)(w)| max(1, |w|); the Jacobian of the composition
    is the product of finite-difference Jacobians along the orbit.
    """
    x = np.atleast_2d(w)
    D = np.eye(ss.problem.dim)
    for a in symbols:
        J = fd_jacobian_rows(lambda X, a=a: ss.problem.step(X, branch_of_symbol(a)), x)[0]
        D = J @ D
        x = ss.problem.step(x, branch_of_symbol(a))
    return float(ROUNDING * np.linalg.norm(D, 2) * max(1.0, np.linalg.norm(w)))


def follows_itinerary(ss: SliceSet, orbit, symbols, tol: float = 1e-9) -> bool:
    """Every orbit point lies in the box and in the preimage slice of its symbol."""
    orbit = np.atleast_2d(orbit)
    for q, a in zip(orbit, symbols):
        if np.max(np.abs(q)) > 1 + tol or not ss.H[a].contains(q, tol=tol)[0]:
            return False
    return True


def depth_bound(ss: SliceSet, seq: SymbolSequence, k: int, nu: float) -> float:
    """nu^(k-1) d(V_{a0 a-1}) + nu^k d(H_{a0})."""
    dv = stable_width(ss, (seq[-1], seq[0]))
    dh = unstable_width(ss, (seq[0],))
    return float(nu ** (k - 1) * dv + nu ** k * dh)


def itinerary_to_point(ss: SliceSet, seq: SymbolSequence, k: int, report: ConleyMoserReport,
                       closed: bool = True) -> ItineraryPoint:
    """Point of V_{a0 a-1 .. a-k} intersected with H_{a0 a1 .. ak}.

    Found as the middle point of an orbit segment q_{-k}..q_{k+1} that follows
    a_{-k}..a_k. The stable part of q_{-k} is pinned to the center of
    V_{a_{-k-1}} and the unstable part of q_{k+1} to the center of
    H_{a_{k+1}} when the window holds those symbols, otherwise to the box
    center. For a periodic sequence with ``closed`` the periodic orbit itself
    is solved for, which is the limit of the nested construction.
    """
    if k < 1:
        raise ValueError("depth must be at least 1")
    if not report.nu < 1:
        raise ItineraryError(f"nu = {report.nu:.3g} >= 1: no contraction")
    lo, hi = seq.window
    if lo > -k or hi < k:
        raise ValueError(f"window {seq.window} shorter than depth {k}")
    bound = depth_bound(ss, seq, k, report.nu)
    s_first, u_last = _segment_pins(ss, seq, k)
    try:
        if seq.period is not None and closed:
            word = seq.slice(0, seq.period - 1)
            branches = [branch_of_symbol(a) for a in word]
            guess = np.array([np.concatenate([ss.H[word[i]].center[:2],
                                              ss.V[word[i - 1]].center[2:]])
                              for i in range(len(word))])
            orbit, _ = solve_cycle(ss.problem, branches, guess)
            point = orbit[0]
        else:
            symbols = seq.slice(-k, k)
            orbit = shoot_word(ss, symbols, s_first, u_last)
            point = orbit[k]
    except ShootingError as exc:
        raise ItineraryError(f"no orbit with itinerary at depth {k}: {exc}") from exc
    return ItineraryPoint(point, bound, k, rounding_floor(ss, point, [seq[0]]), orbit,
                          s_first, u_last)


def _segment_pins(ss: SliceSet, seq: SymbolSequence, k: int):
    lo, hi = seq.window
    s_first = ss.V[seq[-k - 1]].center[2:] if lo <= -k - 1 else np.zeros(ss.problem.n_s)
    u_last = ss.H[seq[k + 1]].center[:2] if hi >= k + 1 else np.zeros(2)
    return s_first, u_last


def conjugacy_residual(ss: SliceSet, seq: SymbolSequence, k: int, report: ConleyMoserReport,
                       extended: bool = True, dps: int = 40) -> tuple[float, float]:
    """(|P(phi_k(a)) - phi_k(chi(a))|, the tolerance it is compared with).

    In double precision one step of P already carries a rounding error of
    eps |DP| |w|, far above the depth bound at k = 8, so the tolerance is the
    bound floored at that error. With ``extended`` both orbit segments are
    polished and P is applied in ``dps``-digit arithmetic; the tolerance is
    then the plain depth bound.
    """
    pa = itinerary_to_point(ss, seq, k, report, closed=False)
    pb = itinerary_to_point(ss, shift_map(seq), k, report, closed=False)
    if not extended:
        img = step_symbol(ss, pa.point, seq[0])
        return float(np.linalg.norm(img - pb.point)), max(pa.tolerance, pb.tolerance)
    sb = shift_map(seq)
    with mpmath.workdps(dps):
        qa, _ = polish_mp(ss.problem, pa.orbit, [branch_of_symbol(a) for a in seq.slice(-k, k)],
                          False, pa.s_first, pa.u_last, dps)
        qb, _ = polish_mp(ss.problem, pb.orbit, [branch_of_symbol(a) for a in sb.slice(-k, k)],
                          False, pb.s_first, pb.u_last, dps)
        img = ss.problem.step_mp(qa[k], branch_of_symbol(seq[0]))
        r = mpmath.sqrt(mpmath.fsum((x - y) ** 2 for x, y in zip(img, qb[k])))
    return float(r), max(pa.bound, pb.bound)


@dataclass
class PeriodicCount:
    period: int
    count: int
    words: list
    points: np.ndarray
    residuals: list
    tolerances: list
    dedup_tol: float
    failures: list
    step_residuals: list = field(default_factory=list)


def _has_mp(problem) -> bool:
    return type(problem).step_mp is not BoxProblem.step_mp


def _cycle_residual_mp(ss: SliceSet, orbit, word, dps: int) -> tuple[float, float, np.ndarray]:
    """Polish a periodic orbit in extended precision; return (|P^p(q) - q|, step residual, q)."""
    branches = [branch_of_symbol(a) for a in word]
    with mpmath.workdps(dps):
        Q, _ = polish_mp(ss.problem, orbit, branches, closed=True, dps=dps)
        x = Q[0]
        steps = 0
        for i, b in enumerate(branches):
            img = ss.problem.step_mp(Q[i], b)
            nxt = Q[(i + 1) % len(Q)]
            steps = max(steps, mpmath.sqrt(mpmath.fsum((u - v) ** 2 for u, v in zip(img, nxt))))
            x = ss.problem.step_mp(x, b)
        r = mpmath.sqrt(mpmath.fsum((u - v) ** 2 for u, v in zip(x, Q[0])))
        return float(r), float(steps), np.array([float(v) for v in Q[0]])


def count_periodic_orbits(ss: SliceSet, p: int, report: ConleyMoserReport, depth: int = 8,
                          extended: bool = True, dps: int = 40) -> PeriodicCount:
    """Distinct period-p points over all 4^p words, each checked by |P^p(q) - q|.

    With ``extended`` (and a problem that offers step_mp) each cycle is
    polished and P^p evaluated in ``dps``-digit arithmetic, and the residual
    must lie below the depth bound itself. Otherwise the bound is floored at
    the double-precision rounding error of P^p, which grows like |D(P^p)|,
    and the one-step closure of the orbit is checked as well.
    """
    if p < 1:
        raise ValueError("period must be positive")
    extended = extended and _has_mp(ss.problem)
    words, pts, res, tols, bounds, failures, steps = [], [], [], [], [], [], []
    for word in itertools.product(ss.labels, repeat=p):
        seq = SymbolSequence.periodic(word)
        try:
            ip = itinerary_to_point(ss, seq, depth, report)
        except ItineraryError as exc:
            failures.append({"word": list(word), "error": str(exc)})
            continue
        if extended:
            r, step_res, point = _cycle_residual_mp(ss, ip.orbit, word, dps)
            tol = step_tol = ip.bound
        else:
            x = ip.point[None, :]
            for a in word:
                x = ss.problem.step(x, branch_of_symbol(a))
            point = ip.point
            r = float(np.linalg.norm(x[0] - point))
            tol = max(ip.bound, rounding_floor(ss, point, word))
            # one-step closure along the orbit is well conditioned, unlike P^p
            imgs = np.array([step_symbol(ss, q, a) for q, a in zip(ip.orbit, word)])
            step_res = float(np.max(np.linalg.norm(imgs - np.roll(ip.orbit, -1, axis=0), axis=1)))
            step_tol = max(ip.bound, max(rounding_floor(ss, q, [a]) for q, a in zip(ip.orbit, word)))
        steps.append(step_res)
        if not r <= tol:
            failures.append({"word": list(word), "residual": r, "tolerance": tol})
        elif not step_res <= step_tol:
            failures.append({"word": list(word), "step_residual": step_res, "tolerance": step_tol})
        elif not follows_itinerary(ss, ip.orbit, word):
            failures.append({"word": list(word), "error": "orbit leaves its slices"})
        words.append(list(word))
        pts.append(point)
        res.append(r)
        tols.append(tol)
        bounds.append(ip.bound)
    pts = np.array(pts)
    if len(pts) > 1:
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        dmin = float(np.min(d[np.triu_indices(len(pts), 1)]))
    else:
        dmin = np.inf
    dedup = max(0.5 * dmin if np.isfinite(dmin) else 0.0, 10 * max(bounds, default=0.0))
    bad = {tuple(f["word"]) for f in failures}
    distinct = []
    for i in range(len(pts)):
        if tuple(words[i]) in bad:
            continue
        if all(np.linalg.norm(pts[i] - pts[j]) > dedup for j in distinct):
            distinct.append(i)
    return PeriodicCount(p, len(distinct), words, pts, res, tols, dedup, failures, steps)
