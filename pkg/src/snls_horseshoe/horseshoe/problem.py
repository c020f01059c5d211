"""Box-coordinate views of a two-branch return map.

The horseshoe engine never looks at the NLS model directly. It works with a
``BoxProblem``: rows w = (u, s) where u holds the expanding coordinates and
s the contracting ones, the target box is max|u| <= 1, max|s| <= 1, and
``step(w, branch)`` applies one branch of the map (NaN rows on exit).
"""

from __future__ import annotations

import mpmath
import numpy as np

from ..global_map import PoincareMap
from .slabs import SlabSpec

SYMBOLS = (1, 2, -1, -2)


def branch_of_symbol(symbol: int) -> int:
    return 1 if symbol > 0 else 2


class BoxProblem:
    n_u = 2
    n_s: int

    @property
    def dim(self) -> int:
        return self.n_u + self.n_s

    def step(self, w: np.ndarray, branch: int) -> np.ndarray:
        raise NotImplementedError

    def step_mp(self, w, branch: int) -> list:
        """One step of a single row in mpmath arithmetic at the working precision.

        Problems without an extended-precision evaluator raise NotImplementedError.
        """
        raise NotImplementedError

    def source_u2(self, branch: int) -> tuple[float, float]:
        """u2-interval of the source slab of a branch (u1 always spans [-1, 1])."""
        raise NotImplementedError

    def stable_center(self, branch: int) -> np.ndarray:
        return np.zeros(self.n_s)

    def sigma(self, w: np.ndarray) -> np.ndarray | None:
        return None

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class NLSBoxProblem(BoxProblem):
    """P in flight-time chart rows rescaled to the box S_hat_l.

    u1 = affine image of the tau-window onto [-1, 1], u2 = zeta / (|z2*| + w),
    s = ((x - x0*) / w, tail / w) with w the slab half-width.
    """

    def __init__(self, P: PoincareMap, S_hat: SlabSpec, S: SlabSpec):
        self.P = P
        self.S_hat = S_hat
        self.S = S
        self.n_s = 1 + P.model.tail_dim
        self.tau_lo, self.tau_hi = S_hat.bounds["tau"]
        self.zeta_scale = S_hat.bounds["zeta"][1]
        x_lo, x_hi = S_hat.bounds["x"]
        self.x_center = 0.5 * (x_lo + x_hi)
        self.x_half = 0.5 * (x_hi - x_lo)
        self.tail_half = np.asarray(S_hat.bounds["tail"][1], dtype=float)

    def to_box(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        mid, half = 0.5 * (self.tau_lo + self.tau_hi), 0.5 * (self.tau_hi - self.tau_lo)
        return np.column_stack([(u[:, 1] - mid) / half, u[:, 2] / self.zeta_scale,
                                (u[:, 0] - self.x_center) / self.x_half, u[:, 3:] / self.tail_half])

    def from_box(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(w)
        mid, half = 0.5 * (self.tau_lo + self.tau_hi), 0.5 * (self.tau_hi - self.tau_lo)
        return np.column_stack([self.x_center + self.x_half * w[:, 2], mid + half * w[:, 0],
                                self.zeta_scale * w[:, 1], w[:, 3:] * self.tail_half])

    def step(self, w, branch):
        return self.to_box(self.P.chart_map(self.from_box(w), branch=branch))

    def step_mp(self, w, branch):
        P, mp = self.P, mpmath.mp
        if P.with_remainder:
            raise NotImplementedError("the quadratic remainder has no extended-precision form")
        w = [mp.mpf(v) for v in w]
        rates, model = P.rates, P.model
        mid = (mp.mpf(self.tau_lo) + mp.mpf(self.tau_hi)) / 2
        half = (mp.mpf(self.tau_hi) - mp.mpf(self.tau_lo)) / 2
        x = self.x_center + self.x_half * w[2]
        tau = mid + half * w[0]
        zeta = self.zeta_scale * w[1]
        tail = [v * h for v, h in zip(w[3:], self.tail_half)]
        flip = [1] * len(tail) if branch == 1 else [int(p) for p in P.parity]
        if branch != 1:
            zeta = -zeta
            tail = [v * f for v, f in zip(tail, flip)]
        decay = mp.exp(-rates.a * tau)
        x1 = x * decay * mp.cos(rates.b * tau)
        y1 = x * decay * mp.sin(rates.b * tau)
        tail1 = []
        for j, G in enumerate(rates.tail_blocks):
            E = mp.expm(mp.matrix(G.tolist()) * tau)
            v = E * mp.matrix(tail[2 * j:2 * j + 2])
            tail1 += [v[0], v[1]]
        q0, q1 = model.q0_star, model.q1_star
        dev = [x1 - q1.x, y1 - q1.y, zeta - q1.z2] + [a - b for a, b in zip(tail1, q1.tail.reshape(-1))]
        C = model.C
        out = [mp.fsum(C[i, k] * dev[k] for k in range(len(dev))) for i in range(len(dev))]
        base = [q0.x, q0.z1, q0.z2] + list(q0.tail.reshape(-1))
        x2, z1, z2, *tail2 = [o + b for o, b in zip(out, base)]
        if z1 <= 0:
            raise ValueError("image misses Sigma0")
        tau2 = mp.log(P.eta / z1) / rates.gamma1
        zeta2 = z2 * mp.exp(rates.gamma2 * tau2)
        if branch != 1:
            zeta2 = -zeta2
            tail2 = [v * f for v, f in zip(tail2, flip)]
        return [(tau2 - mid) / half, zeta2 / self.zeta_scale, (x2 - self.x_center) / self.x_half] \
            + [v / h for v, h in zip(tail2, self.tail_half)]

    def source_u2(self, branch):
        lo, hi = self.S.bounds["zeta"]
        lo, hi = lo / self.zeta_scale, hi / self.zeta_scale
        return (lo, hi) if branch == 1 else (-hi, -lo)

    def sigma(self, w):
        return self.to_box(self.P.sigma_chart(self.from_box(w)))

    def to_points(self, w):
        """Box rows -> NormalFormPoints on Sigma0."""
        raw = self.P.from_chart(self.from_box(w))
        return [self.P.row_to_point(r) for r in raw]

    def from_point(self, p) -> np.ndarray:
        return self.to_box(self.P.to_chart(self.P.point_to_row(p)))[0]

    def describe(self):
        return {"kind": "nls", "l": self.S_hat.l, "tau_window": [self.tau_lo, self.tau_hi],
                "zeta_scale": self.zeta_scale, "half_width": self.x_half}


class AffineTestProblem(BoxProblem):
    """Explicit two-branch horseshoe with designed contraction.

    Branch b takes u2 in [m_b - 1/4, m_b + 1/4] (m_1 = 3/4, m_2 = -3/4) and maps
    u1' = expansion (u2 - m_b), u2' = expansion cos(pi u1),
    s' = contraction s + offset, with one offset per (branch, sign of u1).
    """

    def __init__(self, expansion: float = 10.0, contraction: float = 0.1, n_s: int = 2):
        self.expansion = expansion
        self.contraction = contraction
        self.n_s = n_s
        base = np.zeros(n_s)
        self.offsets = {}
        for b, sb in ((1, 1.0), (2, -1.0)):
            for sc in (1.0, -1.0):
                off = base.copy()
                off[0] = 0.5 * sc
                if n_s > 1:
                    off[1] = 0.5 * sb
                self.offsets[(b, sc)] = off

    def step(self, w, branch):
        w = np.atleast_2d(np.asarray(w, dtype=float))
        m = 0.75 if branch == 1 else -0.75
        lo, hi = m - 0.25, m + 0.25
        c = np.cos(np.pi * w[:, 0])
        out = np.empty_like(w)
        out[:, 0] = self.expansion * (w[:, 1] - m)
        out[:, 1] = self.expansion * c
        sc = np.where(w[:, 0] >= 0, 1.0, -1.0)
        off = np.where((sc > 0)[:, None], self.offsets[(branch, 1.0)], self.offsets[(branch, -1.0)])
        out[:, 2:] = self.contraction * w[:, 2:] + off
        bad = (w[:, 1] < lo - 0.25) | (w[:, 1] > hi + 0.25)
        out[bad] = np.nan
        return out

    def step_mp(self, w, branch):
        mp = mpmath.mp
        w = [mp.mpf(v) for v in w]
        m = mp.mpf(3) / 4 if branch == 1 else -mp.mpf(3) / 4
        off = self.offsets[(branch, 1.0 if w[0] >= 0 else -1.0)]
        return [self.expansion * (w[1] - m), self.expansion * mp.cos(mp.pi * w[0])] \
            + [self.contraction * v + o for v, o in zip(w[2:], off)]

    def source_u2(self, branch):
        return (0.5, 1.0) if branch == 1 else (-1.0, -0.5)

    def describe(self):
        return {"kind": "affine", "expansion": self.expansion, "contraction": self.contraction,
                "n_s": self.n_s}
