"""Affine model of the excursion map P_1^0, estimation of its matrix, and P = P_1^0 o P_0^1.

Deviation orderings follow the section coordinates:
    input  (on Sigma1):  (x1, y1, z2^1, tail^1) minus the homoclinic point q1_star
    output (on Sigma0):  (x0, z1^0, z2^0, tail^0) minus q0_star
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .normal_form import (DomainExitError, NormalFormPoint, NormalFormRates,
                          local_map_P01, tail_flow)


class TransversalityError(RuntimeError):
    """The return time is not a smooth function near the homoclinic point."""


class ConsistencyError(RuntimeError):
    """A self-consistency check on an estimated Jacobian failed."""


@dataclass
class GlobalMapModel:
    q0_star: NormalFormPoint
    q1_star: NormalFormPoint
    c: np.ndarray
    C14: np.ndarray | None = None
    C41: np.ndarray | None = None
    C44: np.ndarray | None = None
    quad_bound: float = 0.0
    validity_radius: float = 1.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(3, 3)
        m = 2 * len(self.q0_star.tail)
        if len(self.q1_star.tail) * 2 != m:
            raise ValueError("q0_star and q1_star must carry the same tail length")
        self.C14 = np.zeros((3, m)) if self.C14 is None else np.asarray(self.C14, float).reshape(3, m)
        self.C41 = np.zeros((m, 3)) if self.C41 is None else np.asarray(self.C41, float).reshape(m, 3)
        self.C44 = np.eye(m) if self.C44 is None else np.asarray(self.C44, float).reshape(m, m)

    @property
    def tail_dim(self) -> int:
        return self.C44.shape[0]

    @property
    def C(self) -> np.ndarray:
        return np.block([[self.c, self.C14], [self.C41, self.C44]])

    @property
    def delta1(self) -> float:
        c = self.c
        return c[1, 0] * c[2, 2] - c[2, 0] * c[1, 2]

    @property
    def delta2(self) -> float:
        c = self.c
        return c[1, 1] * c[2, 2] - c[2, 1] * c[1, 2]

    @property
    def phi1(self) -> float:
        """arctan(delta1/delta2) on the branch (-pi/2, pi/2]."""
        phi = np.arctan2(self.delta1, self.delta2)
        phi = (phi + np.pi / 2) % np.pi - np.pi / 2
        if np.isclose(phi, -np.pi / 2, atol=1e-15):
            phi = np.pi / 2
        return float(phi)

    @property
    def x0_star(self) -> float:
        return self.q0_star.x

    @property
    def z2_star(self) -> float:
        return self.q1_star.z2

    def to_dict(self) -> dict:
        return {"q0_star": self.q0_star.to_array().tolist(),
                "q1_star": self.q1_star.to_array().tolist(),
                "C": {"c": self.c.tolist(), "C14": self.C14.tolist(),
                      "C41": self.C41.tolist(), "C44": self.C44.tolist()},
                "quad_bound": self.quad_bound,
                "validity_radius": self.validity_radius}

    @classmethod
    def from_dict(cls, d: dict) -> "GlobalMapModel":
        C = d["C"]
        return cls(NormalFormPoint.from_array(d["q0_star"]),
                   NormalFormPoint.from_array(d["q1_star"]),
                   np.array(C["c"]),
                   np.array(C["C14"]) if "C14" in C else None,
                   np.array(C["C41"]) if "C41" in C else None,
                   np.array(C["C44"]) if "C44" in C else None,
                   quad_bound=float(d.get("quad_bound", 0.0)),
                   validity_radius=float(d.get("validity_radius", 1.0)))

    @classmethod
    def from_matrix(cls, C: np.ndarray, q0_star, q1_star, **kw) -> "GlobalMapModel":
        C = np.asarray(C, dtype=float)
        return cls(q0_star, q1_star, C[:3, :3], C[:3, 3:], C[3:, :3], C[3:, 3:], **kw)


def canonical_rates() -> NormalFormRates:
    return NormalFormRates(
        a=0.25, b=1.0, gamma1=0.5, gamma2=0.75,
        tail_blocks=(np.diag([-0.6, -1.2]), np.array([[-1.0, -3.0], [3.0, -1.0]])),
        tail_parity=((1.0, -1.0), (-1.0, -1.0)),
    )


CANONICAL_ETA = 2.0


def canonical_model() -> GlobalMapModel:
    """Synthetic homoclinic data with the reference matrix used throughout the tests."""
    c = np.array([[1.0, 0.0, 0.0],
                  [1.0, 0.0, 1.0],
                  [0.0, 1.0, 1.0]])
    q0 = NormalFormPoint(1.0, 0.0, 0.0, 0.0, [[0.0, 0.1], [0.0, 0.0]])
    q1 = NormalFormPoint(0.0, 0.0, CANONICAL_ETA, 0.5, np.zeros((2, 2)))
    return GlobalMapModel(q0, q1, c)


def _sigma1_deviation(model: GlobalMapModel, p1: NormalFormPoint) -> np.ndarray:
    q = model.q1_star
    return np.concatenate([[p1.x - q.x, p1.y - q.y, p1.z2 - q.z2],
                           (p1.tail - q.tail).reshape(-1)])


def _remainder(model: GlobalMapModel, dev: np.ndarray) -> np.ndarray:
    n = dev.shape[-1]
    u = np.ones(n) / np.sqrt(n)
    return model.quad_bound * np.sum(dev**2, axis=-1, keepdims=True) * u


def apply_P10(model: GlobalMapModel, p1: NormalFormPoint,
              with_remainder: bool = False) -> NormalFormPoint:
    dev = _sigma1_deviation(model, p1)
    r = np.linalg.norm(dev)
    if r > model.validity_radius:
        raise DomainExitError(f"|Q1 - Q1*| = {r:.3g} exceeds validity radius {model.validity_radius}")
    out = model.C @ dev
    if with_remainder:
        out = out + _remainder(model, dev)
    q = model.q0_star
    return NormalFormPoint(q.x + out[0], 0.0, q.z1 + out[1], q.z2 + out[2],
                           q.tail + out[3:].reshape(-1, 2))


# -- estimation of C from a flow ----------------------------------------------

@dataclass
class CEstimate:
    C: np.ndarray
    y_row_residual: float
    dFy_dt: float
    jacobian: np.ndarray = field(repr=False, default=None)


def affine_flow(model: GlobalMapModel, t1_star: float = 1.0, y_speed: float = 1.0,
                drift: float = 0.3, y_tilt: float = 0.2):
    """Exact affine flow whose section-corrected Jacobian at q1_star is model.C.

    F_y = y_speed (t - t1*) + y_tilt sum(dev), and every other row carries a
    time drift that the section-time correction removes again. Useful as a
    round-trip oracle for estimate_C.
    """
    C = model.C
    n = C.shape[0]
    d = np.full(n, drift)
    r = np.full(n, y_tilt)
    A = C + np.outer(d, r) / y_speed
    q1 = model.q1_star.to_array()
    q0 = model.q0_star.to_array()
    idx = _sigma1_indices(len(q1))
    rows = [0, 2, 3] + list(range(4, len(q1)))

    def flowF(v, t):
        dev = np.asarray(v, dtype=float)[idx] - q1[idx]
        out = np.empty(len(q1))
        out[rows] = q0[rows] + A @ dev + d * (t - t1_star)
        out[1] = y_speed * (t - t1_star) + r @ dev
        return out

    return flowF


def _sigma1_indices(n_full: int) -> list[int]:
    # full state = (x, y, z1, z2, tail...); z1 is pinned to eta on Sigma1
    return [0, 1, 3] + list(range(4, n_full))


def estimate_C(flowF, q1_star: NormalFormPoint, t1_star: float, y_tol: float = 1e-8,
               transversality_tol: float = 1e-8, consistency_tol: float = 1e-6) -> CEstimate:
    """Jacobian of the section-to-section map at q1_star by central differences.

    flowF(v, t) advances a full normal-form state vector v by time t. The
    derivative of F^{t1} is corrected for the variation of the return time
    t1(Q), defined by F_y^{t1}(Q) = 0.
    """
    v0 = q1_star.to_array()
    n = len(v0)
    idx = _sigma1_indices(n)
    F0 = np.asarray(flowF(v0, t1_star), dtype=float)
    if abs(F0[1]) > y_tol:
        raise ConsistencyError(f"F_y(q1*, t1*) = {F0[1]:.3e} is not on Sigma0")
    h = 1e-5 * max(1.0, np.linalg.norm(v0))
    ht = 1e-5 * max(1.0, abs(t1_star))
    J = np.empty((n, len(idx)))
    for j, i in enumerate(idx):
        e = np.zeros(n)
        e[i] = h
        J[:, j] = (np.asarray(flowF(v0 + e, t1_star)) - np.asarray(flowF(v0 - e, t1_star))) / (2 * h)
    dFdt = (np.asarray(flowF(v0, t1_star + ht)) - np.asarray(flowF(v0, t1_star - ht))) / (2 * ht)
    if abs(dFdt[1]) < transversality_tol:
        raise TransversalityError(f"|dF_y/dt| = {abs(dFdt[1]):.3e} below {transversality_tol}")
    dt1 = -J[1] / dFdt[1]
    Jc = J + np.outer(dFdt, dt1)
    resid = float(np.max(np.abs(Jc[1])))
    if resid > consistency_tol:
        raise ConsistencyError(f"corrected y-row residual {resid:.3e}")
    rows = [0, 2, 3] + list(range(4, n))
    return CEstimate(C=Jc[rows], y_row_residual=resid, dFy_dt=float(dFdt[1]), jacobian=Jc)


# -- the composed return map --------------------------------------------------

def _return_h1(model: GlobalMapModel, eta: float, rates: NormalFormRates,
               x, tau, zeta, tail, with_remainder: bool):
    """Vectorised h1-branch return in flight-time coordinates.

    Returns (x', z1', z2', tail', ok) where ok flags rows that stayed admissible.
    """
    decay = np.exp(-rates.a * tau)
    x1 = x * decay * np.cos(rates.b * tau)
    y1 = x * decay * np.sin(rates.b * tau)
    tail1 = tail_flow(tail.reshape(len(x), -1, 2), tau, rates).reshape(len(x), -1)
    q1 = model.q1_star
    dev = np.column_stack([x1 - q1.x, y1 - q1.y, zeta - q1.z2, tail1 - q1.tail.reshape(-1)])
    out = dev @ model.C.T
    if with_remainder:
        out = out + _remainder(model, dev)
    q0 = model.q0_star
    ok = (np.abs(zeta) < eta) & (np.linalg.norm(tail1, axis=1) < eta) & (tau >= 0)
    ok &= np.linalg.norm(dev, axis=1) <= model.validity_radius
    return (q0.x + out[:, 0], q0.z1 + out[:, 1], q0.z2 + out[:, 2],
            q0.tail.reshape(-1) + out[:, 3:], ok)


class PoincareMap:
    """P = P_1^0 o P_0^1 on Sigma0, optionally with the sigma-symmetric second excursion.

    Two coordinate systems are offered. Raw points are NormalFormPoints on
    Sigma0. Chart rows are (x, tau, zeta, tail...) with tau the flight time to
    Sigma1 (z1 = eta exp(-gamma1 tau)) and zeta = z2 on arrival at Sigma1;
    the chart resolves the exponentially thin structures near the saddle.
    """

    def __init__(self, model: GlobalMapModel, eta: float, rates: NormalFormRates,
                 symmetric: bool = True, with_remainder: bool = False):
        if rates.n_pairs * 2 != model.tail_dim:
            raise ValueError("rates tail blocks and model tail dimension disagree")
        self.model = model
        self.eta = eta
        self.rates = rates
        self.symmetric = symmetric
        self.with_remainder = with_remainder
        self.parity = rates.parity_vector

    @property
    def dim(self) -> int:
        return 3 + self.model.tail_dim

    # chart conversions (rows)
    def to_chart(self, v: np.ndarray) -> np.ndarray:
        """Raw Sigma0 rows (x, z1, z2, tail...) -> chart rows."""
        v = np.atleast_2d(v)
        tau = np.log(self.eta / v[:, 1]) / self.rates.gamma1
        zeta = v[:, 2] * np.exp(self.rates.gamma2 * tau)
        return np.column_stack([v[:, 0], tau, zeta, v[:, 3:]])

    def from_chart(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        z1 = self.eta * np.exp(-self.rates.gamma1 * u[:, 1])
        z2 = u[:, 2] * np.exp(-self.rates.gamma2 * u[:, 1])
        return np.column_stack([u[:, 0], z1, z2, u[:, 3:]])

    def sigma_chart(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float, copy=True)
        u[..., 2] *= -1
        u[..., 3:] *= self.parity
        return u

    def branch_of(self, zeta) -> np.ndarray:
        if not self.symmetric:
            return np.ones(np.shape(zeta), dtype=int)
        return np.where(np.asarray(zeta) >= 0, 1, 2)

    def chart_map(self, u: np.ndarray, branch: int | str = "auto") -> np.ndarray:
        """Vectorised P in chart rows; rows that exit the domain become NaN."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if branch == "auto":
            br = self.branch_of(u[:, 2])
        else:
            br = np.full(len(u), int(branch))
        src = np.where((br == 2)[:, None], self.sigma_chart(u), u)
        # rows far outside the domain overflow on the way; they are masked below
        with np.errstate(all="ignore"):
            x, z1, z2, tail, ok = _return_h1(self.model, self.eta, self.rates, src[:, 0],
                                             src[:, 1], src[:, 2], src[:, 3:], self.with_remainder)
        ok &= z1 > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.log(self.eta / z1) / self.rates.gamma1
            zeta = z2 * np.exp(self.rates.gamma2 * tau)
        out = np.column_stack([x, tau, zeta, tail])
        out = np.where((br == 2)[:, None], self.sigma_chart(out), out)
        out[~ok] = np.nan
        return out

    def chart_to_raw_image(self, u: np.ndarray, branch: int | str = "auto") -> np.ndarray:
        """Raw image rows (x', z1', z2', tail') of chart rows, z1' <= 0 kept as is.

        Rows leaving through |zeta| = eta or the tail bound are NaN. Keeping
        negative z1' makes the result smooth across the Sigma0 boundary, which
        Newton iterations need.
        """
        u = np.atleast_2d(np.asarray(u, dtype=float))
        br = self.branch_of(u[:, 2]) if branch == "auto" else np.full(len(u), int(branch))
        src = np.where((br == 2)[:, None], self.sigma_chart(u), u)
        x, z1, z2, tail, ok = _return_h1(self.model, self.eta, self.rates, src[:, 0], src[:, 1],
                                         src[:, 2], src[:, 3:], self.with_remainder)
        res = np.column_stack([x, z1, z2, tail])
        flip = np.concatenate([[1.0, 1.0, -1.0], self.parity])
        res = np.where((br == 2)[:, None], res * flip, res)
        res[~ok] = np.nan
        return res

    def raw_map(self, v: np.ndarray, branch: int | str = "auto") -> np.ndarray:
        """Vectorised P on raw rows (x, z1, z2, tail...); NaN rows on exit."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        out = np.full_like(v, np.nan)
        good = (v[:, 1] > 0) & (v[:, 1] <= self.eta)
        if not np.any(good):
            return out
        u = self.to_chart(v[good])
        br = self.branch_of(u[:, 2]) if branch == "auto" else np.full(len(u), int(branch))
        src = np.where((br == 2)[:, None], self.sigma_chart(u), u)
        x, z1, z2, tail, ok = _return_h1(self.model, self.eta, self.rates, src[:, 0], src[:, 1],
                                         src[:, 2], src[:, 3:], self.with_remainder)
        ok &= z1 > 0
        res = np.column_stack([x, z1, z2, tail])
        flip = np.concatenate([[1.0, 1.0, -1.0], self.parity])
        res = np.where((br == 2)[:, None], res * flip, res)
        res[~ok] = np.nan
        out[good] = res
        return out

    def __call__(self, p: NormalFormPoint, branch: int | str = "auto") -> NormalFormPoint:
        """P on a single Sigma0 point; raises DomainExitError when undefined."""
        if branch == "auto":
            b = 1
            if self.symmetric:
                # branch chosen by the sign of z2 on arrival at Sigma1
                b = 1 if p.z2 >= 0 else 2
        else:
            b = int(branch)
        q = p if b == 1 else _sigma_point(p, self.rates)
        p1 = local_map_P01(q, self.eta, self.rates)
        img = apply_P10(self.model, p1, self.with_remainder)
        if img.z1 <= 0:
            raise DomainExitError(f"image has z1 = {img.z1:.3g} <= 0 and misses Sigma0")
        return img if b == 1 else _sigma_point(img, self.rates)

    @staticmethod
    def point_to_row(p: NormalFormPoint) -> np.ndarray:
        return np.concatenate([[p.x, p.z1, p.z2], p.tail.reshape(-1)])

    @staticmethod
    def row_to_point(v) -> NormalFormPoint:
        v = np.asarray(v, dtype=float)
        return NormalFormPoint(v[0], 0.0, v[1], v[2], v[3:].reshape(-1, 2))


def _sigma_point(p: NormalFormPoint, rates: NormalFormRates) -> NormalFormPoint:
    par = rates.parity_vector.reshape(-1, 2)
    return NormalFormPoint(p.x, p.y, p.z1, -p.z2, p.tail * par)


def compose_P(model: GlobalMapModel, eta: float, rates: NormalFormRates,
              symmetric: bool = True, with_remainder: bool = False) -> PoincareMap:
    return PoincareMap(model, eta, rates, symmetric=symmetric, with_remainder=with_remainder)


@dataclass
class GenericityReport:
    A2: bool
    A3: bool
    span_conditioning: float
    delta1: float
    delta2: float
    c23_or_c33_nonzero: bool


def check_A2_A3(model: GlobalMapModel, rates: NormalFormRates, l: int = 0,
                tol: float = 1e-10) -> GenericityReport:
    """Genericity checks on the excursion matrix.

    A3 assembles e_x, the tail unit vectors, E_theta = C e_theta at the
    passage image of the fixed point with label l, and C e_z2, and tests rank.
    """
    d1, d2 = model.delta1, model.delta2
    A2 = bool(d1 * d1 + d2 * d2 > tol * tol)
    n = 3 + model.tail_dim
    phase = l * np.pi - model.phi1
    e_theta = np.zeros(n)
    e_theta[0], e_theta[1] = -np.sin(phase), np.cos(phase)
    e_z2 = np.zeros(n)
    e_z2[2] = 1.0
    C = model.C
    cols = [np.eye(n)[0], C @ e_theta, C @ e_z2] + [np.eye(n)[3 + j] for j in range(model.tail_dim)]
    M = np.column_stack(cols)
    smin = float(np.linalg.svd(M, compute_uv=False)[-1])
    c = model.c
    c23_or_c33_nonzero = bool(abs(c[1, 2]) > tol or abs(c[2, 2]) > tol)
    return GenericityReport(A2, bool(smin > tol), smin, float(d1), float(d2), c23_or_c33_nonzero)
