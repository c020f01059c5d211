"""Asymptotic fixed points of P and their Newton refinement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..global_map import GlobalMapModel, PoincareMap
from ..normal_form import DomainExitError, NormalFormPoint, NormalFormRates


class GenericityError(ValueError):
    """The excursion matrix violates a nondegeneracy assumption."""


class RefinementError(RuntimeError):
    """Newton iteration on P(q) - q failed to converge."""


@dataclass
class FixedPointEntry:
    l: int
    t0: float
    x_hat0: float
    z_hat12: float
    q_hat0: np.ndarray

    def leading_order_residual(self, model: GlobalMapModel, x0_star: float, b: float) -> np.ndarray:
        """Both leading-order equations for (t0, z_hat) evaluated at this entry."""
        c = model.c
        cs, sn = np.cos(b * self.t0), np.sin(b * self.t0)
        return np.array([x0_star * (c[1, 0] * cs + c[1, 1] * sn) + c[1, 2] * self.z_hat12,
                         x0_star * (c[2, 0] * cs + c[2, 1] * sn) + c[2, 2] * self.z_hat12])


@dataclass
class FixedPointFamily:
    entries: list[FixedPointEntry]
    phi1: float
    l0: int
    x0_star: float = 1.0
    rates: NormalFormRates | None = field(default=None, repr=False)
    eta: float | None = None
    z2_star: float = 0.0
    q0_tail: np.ndarray | None = None

    def entry(self, l: int) -> FixedPointEntry:
        for e in self.entries:
            if e.l == l:
                return e
        raise KeyError(f"label {l} not in family")

    def t0(self, l: int) -> float:
        return self.entry(l).t0


def fixed_point_family(model: GlobalMapModel, rates: NormalFormRates, x0_star: float | None = None,
                       l_range=range(0, 20), eta: float | None = None) -> FixedPointFamily:
    """Leading-order fixed points labelled by l: t0 = (l pi - phi1)/b.

    Entries with t0 <= 0 are dropped. When eta is given, l0 is the first label
    whose asymptotic point lies in Sigma0; otherwise l0 is the first kept label.
    """
    if x0_star is None:
        x0_star = model.x0_star
    c = model.c
    if abs(c[1, 2]) == 0 and abs(c[2, 2]) == 0:
        raise GenericityError("c23 = c33 = 0 contradicts the transversality of W^u")
    if model.delta1 == 0 and model.delta2 == 0:
        raise GenericityError("delta1 = delta2 = 0: assumption A2 fails")
    phi1 = model.phi1
    b = rates.b
    entries = []
    for l in l_range:
        t0 = (l * np.pi - phi1) / b
        if t0 <= 0:
            continue
        cs, sn = np.cos(b * t0), np.sin(b * t0)
        if c[1, 2] != 0:
            zh = -x0_star * (c[1, 0] * cs + c[1, 1] * sn) / c[1, 2]
        else:
            zh = -x0_star * (c[2, 0] * cs + c[2, 1] * sn) / c[2, 2]
        xh = x0_star * (c[0, 0] * cs + c[0, 1] * sn) + c[0, 2] * zh
        qh = x0_star * (model.C41[:, 0] * cs + model.C41[:, 1] * sn) + model.C41[:, 2] * zh
        entries.append(FixedPointEntry(l, t0, xh, zh, qh))
    fam = FixedPointFamily(entries, phi1, entries[0].l if entries else 0, x0_star, rates, eta,
                           model.z2_star, model.q0_star.tail.reshape(-1).copy())
    if eta is not None:
        for e in entries:
            p = asymptotic_point(fam, e.l, model, eta, rates)
            if _in_sigma0(p, eta, rates):
                fam.l0 = e.l
                break
        fam.entries = [e for e in entries if e.l >= fam.l0]
    return fam


def _in_sigma0(p: NormalFormPoint, eta: float, rates: NormalFormRates) -> bool:
    lo = eta * np.exp(-2 * np.pi * rates.a / rates.b)
    return bool(lo < p.x < eta and 0 < p.z1 < eta and abs(p.z2) < eta and p.tail_norm() < eta)


def asymptotic_point(family: FixedPointFamily, l: int, model: GlobalMapModel, eta: float,
                     rates: NormalFormRates) -> NormalFormPoint:
    """Sigma0 point built from the hat variables of entry l."""
    e = family.entry(l)
    s = np.exp(-rates.a * e.t0)
    z2_1 = model.z2_star + s * e.z_hat12
    return NormalFormPoint(family.x0_star + s * e.x_hat0, 0.0, eta * np.exp(-rates.gamma1 * e.t0),
                           z2_1 * np.exp(-rates.gamma2 * e.t0),
                           model.q0_star.tail + s * e.q_hat0.reshape(-1, 2))


def hat_coordinates(p: NormalFormPoint, model: GlobalMapModel, eta: float,
                    rates: NormalFormRates) -> tuple[float, float, float, np.ndarray]:
    """(t0, x_hat, z_hat, Q_hat) of a Sigma0 point, inverting the e^{a t0} scalings."""
    t0 = np.log(eta / p.z1) / rates.gamma1
    s = np.exp(-rates.a * t0)
    z2_1 = p.z2 * np.exp(rates.gamma2 * t0)
    return (float(t0), (p.x - model.x0_star) / s, (z2_1 - model.z2_star) / s,
            (p.tail - model.q0_star.tail).reshape(-1) / s)


def hat_distance(p: NormalFormPoint, entry: FixedPointEntry, model: GlobalMapModel, eta: float,
                 rates: NormalFormRates) -> float:
    t0, xh, zh, qh = hat_coordinates(p, model, eta, rates)
    return float(abs(t0 - entry.t0) + abs(xh - entry.x_hat0) + abs(zh - entry.z_hat12)
                 + np.linalg.norm(qh - entry.q_hat0))


@dataclass
class RefinementInfo:
    iterations: int
    residual: float
    jacobian_condition: float


def _fd_jacobian(F, u, h):
    n = len(u)
    E = np.eye(n) * h[:, None] if np.ndim(h) else np.eye(n) * h
    plus = F(u[None, :] + E)
    minus = F(u[None, :] - E)
    return ((plus - minus) / (2 * np.diag(E))[:, None]).T


def refine_fixed_point(P, guess, tol: float = 1e-10, max_iter: int = 50, full_output: bool = False):
    """Newton iteration on P(q) - q with a central-difference Jacobian.

    P is either a PoincareMap (iterates in its flight-time chart, returns a
    NormalFormPoint) or a callable on 1-D arrays (returns an array). Only
    forward evaluations of P are used.
    """
    if isinstance(P, PoincareMap):
        if not isinstance(guess, NormalFormPoint):
            guess = P.row_to_point(guess)
        if guess.z1 <= 0:
            raise DomainExitError("guess has z1 <= 0")
        u = P.to_chart(P.point_to_row(guess))[0]

        def G(rows):
            # smooth scaled residual; avoids the log in the chart of the image
            rows = np.atleast_2d(rows)
            img = P.chart_to_raw_image(rows, branch=_branch(P, u))
            z1 = P.eta * np.exp(-P.rates.gamma1 * rows[:, 1])
            return np.column_stack([img[:, 0] - rows[:, 0], img[:, 1] / z1 - 1.0,
                                    img[:, 2] * np.exp(P.rates.gamma2 * rows[:, 1]) - rows[:, 2],
                                    img[:, 3:] - rows[:, 3:]])

        def residual(v):
            q = P.row_to_point(P.from_chart(v)[0])
            img = P(q, branch=_branch(P, v))
            return float(np.linalg.norm(P.point_to_row(img) - P.point_to_row(q)))
    else:
        u = np.asarray(guess, dtype=float).copy()

        def G(rows):
            rows = np.atleast_2d(rows)
            return np.array([np.asarray(P(r), dtype=float) for r in rows]) - rows

        def residual(v):
            return float(np.linalg.norm(np.asarray(P(v), dtype=float) - v))

    cond = np.nan
    for it in range(1, max_iter + 1):
        g = G(u[None, :])[0]
        if not np.all(np.isfinite(g)):
            raise DomainExitError(f"P undefined at Newton iterate {it - 1}")
        h = 1e-7 * np.maximum(1.0, np.abs(u))
        J = _fd_jacobian(G, u, h)
        if not np.all(np.isfinite(J)):
            raise DomainExitError("P undefined in the finite-difference stencil")
        cond = float(np.linalg.cond(J))
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError as exc:
            raise RefinementError(f"singular Jacobian at iterate {it - 1}") from exc
        u = u + step
        if np.linalg.norm(step) <= 1e-15 * max(1.0, np.linalg.norm(u)) or \
                (np.linalg.norm(step) < 1e-13 * max(1.0, np.linalg.norm(u)) and residual(u) < tol):
            break
    else:
        raise RefinementError(f"no convergence after {max_iter} iterations")
    res = residual(u)
    if not res < tol:
        raise RefinementError(f"residual {res:.3e} above tolerance {tol:.1e}")
    info = RefinementInfo(it, res, cond)
    if isinstance(P, PoincareMap):
        out = P.row_to_point(P.from_chart(u)[0])
    else:
        out = u
    return (out, info) if full_output else out


def _branch(P: PoincareMap, u) -> int:
    return int(P.branch_of(np.asarray(u)[..., 2]).reshape(-1)[0])


def refine_family(P: PoincareMap, family: FixedPointFamily, labels) -> dict[int, NormalFormPoint]:
    out = {}
    for l in labels:
        guess = asymptotic_point(family, l, P.model, P.eta, P.rates)
        out[l] = refine_fixed_point(P, guess)
    return out
