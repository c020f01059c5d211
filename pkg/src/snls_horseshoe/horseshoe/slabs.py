"""Slabs S_l, sigma(S_l) and the enclosing box S_hat_l in flight-time chart rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..normal_form import NormalFormPoint, NormalFormRates


class SlabError(ValueError):
    """The requested slab is inconsistent with the fixed-point family."""


@dataclass
class SlabSpec:
    """Coordinate windows of a slab.

    bounds maps "tau", "x", "zeta" to (lo, hi) and "tail" to (lo, hi) arrays.
    tau is the flight time to Sigma1, i.e. z1 = eta exp(-gamma1 tau).
    """

    l: int
    kind: str
    bounds: dict
    eta: float
    gamma1: float
    gamma2: float

    def contains_chart(self, rows, tol: float = 0.0) -> np.ndarray:
        rows = np.atleast_2d(rows)
        ok = np.ones(len(rows), dtype=bool)
        for col, key in ((1, "tau"), (0, "x"), (2, "zeta")):
            lo, hi = self.bounds[key]
            ok &= (rows[:, col] >= lo - tol) & (rows[:, col] <= hi + tol)
        lo, hi = self.bounds["tail"]
        ok &= np.all((rows[:, 3:] >= lo - tol) & (rows[:, 3:] <= hi + tol), axis=1)
        return ok

    def contains(self, p: NormalFormPoint, tol: float = 0.0) -> bool:
        if p.z1 <= 0:
            return False
        tau = np.log(self.eta / p.z1) / self.gamma1
        zeta = p.z2 * np.exp(self.gamma2 * tau)
        row = np.concatenate([[p.x, tau, zeta], p.tail.reshape(-1)])
        return bool(self.contains_chart(row, tol)[0])

    def z1_window(self) -> tuple[float, float]:
        lo, hi = self.bounds["tau"]
        return self.eta * np.exp(-self.gamma1 * hi), self.eta * np.exp(-self.gamma1 * lo)

    def to_dict(self) -> dict:
        b = {k: [np.asarray(v[0]).tolist(), np.asarray(v[1]).tolist()] for k, v in self.bounds.items()}
        return {"l": self.l, "kind": self.kind, "bounds": b}


def slab_half_width(family, eta: float, rates: NormalFormRates, l: int) -> float:
    return float(eta * np.exp(-rates.a * family.t0(2 * l) / 2))


def build_slabs(family, rates: NormalFormRates, eta: float, l: int,
                fixed_points=None) -> tuple[SlabSpec, SlabSpec, SlabSpec]:
    """(S_l, sigma S_l, S_hat_l) for labels 2l, 2l+1.

    The tau-window runs from t0(2l) - pi/2b to t0(2l+2) - pi/2b. x and zeta
    get half-width w = eta exp(-a t0(2l)/2) around x0* and z2*. The tail
    window is |Q_i| <= |Q*_i| + w, the sigma-invariant hull of Q* +- w.
    fixed_points, when given, are the refined points of labels 2l and 2l+1
    and must lie in S_l.
    """
    try:
        t_lo = family.t0(2 * l) - np.pi / (2 * rates.b)
        t_hi = family.t0(2 * l + 2) - np.pi / (2 * rates.b)
    except KeyError as exc:
        raise SlabError(f"family lacks labels {2 * l} and {2 * l + 2}") from exc
    if t_lo <= 0:
        raise SlabError("tau-window starts at a nonpositive flight time")
    w = slab_half_width(family, eta, rates, l)
    z2 = family.z2_star
    m = 2 * rates.n_pairs
    q0 = np.zeros(m) if family.q0_tail is None else np.abs(family.q0_tail)
    tail = (-(q0 + w), q0 + w)
    common = dict(eta=eta, gamma1=rates.gamma1, gamma2=rates.gamma2)
    S = SlabSpec(l, "S_l", {"tau": (t_lo, t_hi), "x": (family.x0_star - w, family.x0_star + w),
                            "zeta": (z2 - w, z2 + w), "tail": tail}, **common)
    S_sig = SlabSpec(l, "S_l_sigma", {"tau": (t_lo, t_hi), "x": S.bounds["x"],
                                      "zeta": (-z2 - w, -z2 + w), "tail": tail}, **common)
    zmax = abs(z2) + w
    S_hat = SlabSpec(l, "S_hat_l", {"tau": (t_lo, t_hi), "x": S.bounds["x"],
                                    "zeta": (-zmax, zmax), "tail": tail}, **common)
    if w >= abs(z2):
        raise SlabError(f"half-width {w:.3g} >= |z2*| = {abs(z2):.3g}: S_l and sigma S_l overlap")
    for p in fixed_points or ():
        if not S.contains(p):
            raise SlabError(f"fixed point {p} lies outside S_{l}")
    return S, S_sig, S_hat
