"""Linear normal-form flow near the saddle, the sections Sigma0/Sigma1 and P_0^1."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .params import EigenLadder


class DomainExitError(RuntimeError):
    """A point leaves the region where a local or composed map is defined."""


@dataclass(frozen=True)
class NormalFormRates:
    a: float
    b: float
    gamma1: float
    gamma2: float
    tail_blocks: tuple = ()
    tail_parity: tuple = ()

    def __post_init__(self):
        blocks = tuple(np.asarray(G, dtype=float).reshape(2, 2) for G in self.tail_blocks)
        object.__setattr__(self, "tail_blocks", blocks)
        parity = tuple(tuple(float(s) for s in p) for p in self.tail_parity)
        if not parity:
            parity = tuple((1.0, 1.0) for _ in blocks)
        if len(parity) != len(blocks):
            raise ValueError("tail_parity must match tail_blocks")
        object.__setattr__(self, "tail_parity", parity)
        if not (self.a > 0 and self.b > 0 and self.gamma1 > 0 and self.gamma2 > 0):
            raise ValueError("a, b, gamma1, gamma2 must be positive")

    @property
    def n_pairs(self) -> int:
        return len(self.tail_blocks)

    @property
    def parity_vector(self) -> np.ndarray:
        return np.array(self.tail_parity, dtype=float).reshape(-1)

    @classmethod
    def from_ladder(cls, ladder: EigenLadder, n_pairs: int = 2) -> "NormalFormRates":
        """Tail pairs: (lambda_0^-, lambda_1^-) first, then modes n = 3, 4, ..."""
        r = ladder.rates
        blocks = [np.diag([ladder.lambda_minus[0].real, ladder.lambda_minus[1].real])]
        parity = [(1.0, -1.0)]
        n = 3
        while len(blocks) < n_pairs:
            lp, lm = ladder.lambda_plus[n], ladder.lambda_minus[n]
            if abs(lp.imag) > 0:
                p, q = lp.real, abs(lp.imag)
                blocks.append(np.array([[p, -q], [q, p]]))
            else:
                blocks.append(np.diag([lp.real, lm.real]))
            s = (-1.0) ** n
            parity.append((s, s))
            n += 1
        return cls(r.a, r.b, r.gamma1, r.gamma2, tuple(blocks[:n_pairs]), tuple(parity[:n_pairs]))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "gamma1": self.gamma1, "gamma2": self.gamma2,
                "tail_blocks": [G.tolist() for G in self.tail_blocks],
                "tail_parity": [list(p) for p in self.tail_parity]}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalFormRates":
        return cls(d["a"], d["b"], d["gamma1"], d["gamma2"],
                   tuple(d.get("tail_blocks", ())), tuple(d.get("tail_parity", ())))


@dataclass
class NormalFormPoint:
    x: float
    y: float
    z1: float
    z2: float
    tail: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        self.tail = np.asarray(self.tail, dtype=float).reshape(-1, 2)

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.x, self.y, self.z1, self.z2], self.tail.reshape(-1)])

    @classmethod
    def from_array(cls, v) -> "NormalFormPoint":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1], v[2], v[3], v[4:].reshape(-1, 2))

    def tail_norm(self) -> float:
        return float(np.linalg.norm(self.tail))


def expm2(G: np.ndarray, t) -> np.ndarray:
    """exp(t G) for a 2x2 real G, vectorised over t; returns shape t.shape + (2, 2)."""
    t = np.asarray(t, dtype=float)
    mu = 0.5 * (G[0, 0] + G[1, 1])
    delta = np.sqrt(complex(0.25 * (G[0, 0] - G[1, 1]) ** 2 + G[0, 1] * G[1, 0]))
    A = G - mu * np.eye(2)
    # fold exp(t mu) into the eigenvalue exponentials so large t cannot overflow
    ep, em = np.exp(t * (mu + delta)), np.exp(t * (mu - delta))
    ch = 0.5 * (ep + em)
    sh = t * np.exp(t * mu) if abs(delta) < 1e-14 else 0.5 * (ep - em) / delta
    out = np.multiply.outer(ch, np.eye(2)) + np.multiply.outer(sh, A)
    return out.real


def tail_flow(tail: np.ndarray, t, rates: NormalFormRates) -> np.ndarray:
    """Apply exp(t L_tail) blockwise; tail has shape (..., n_pairs, 2), t broadcasts."""
    tail = np.asarray(tail, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.empty(np.broadcast_shapes(tail.shape, t.shape + (rates.n_pairs, 2)))
    for j, G in enumerate(rates.tail_blocks):
        E = expm2(G, t)
        out[..., j, :] = np.einsum("...ik,...k->...i", E, tail[..., j, :])
    return out


def local_flow(p: NormalFormPoint, t: float, rates: NormalFormRates,
               eta_omega: float | None = None) -> NormalFormPoint:
    """Exact linear flow of the normal form for time t >= 0."""
    if t < 0:
        raise ValueError("the local flow is forward-only (t >= 0)")
    if eta_omega is not None:
        r = max(abs(p.x), abs(p.y), abs(p.z1), abs(p.z2), p.tail_norm())
        if r >= eta_omega:
            raise DomainExitError(f"point at radius {r:.3g} outside linearisation box {eta_omega}")
    c, s = np.cos(rates.b * t), np.sin(rates.b * t)
    decay = np.exp(-rates.a * t)
    return NormalFormPoint(
        decay * (c * p.x - s * p.y),
        decay * (s * p.x + c * p.y),
        p.z1 * np.exp(rates.gamma1 * t),
        p.z2 * np.exp(rates.gamma2 * t),
        tail_flow(p.tail, t, rates),
    )


def flight_time_to_sigma1(p: NormalFormPoint, eta: float, gamma1: float) -> float:
    """t0 = ln(eta / z1) / gamma1: first time z1(t) reaches eta."""
    if p.z1 <= 0:
        raise DomainExitError("z1 <= 0: the orbit never reaches Sigma1")
    if p.z1 > eta:
        raise DomainExitError("z1 > eta: already beyond Sigma1")
    return float(np.log(eta / p.z1) / gamma1)


def local_map_P01(p0: NormalFormPoint, eta: float, rates: NormalFormRates) -> NormalFormPoint:
    """Closed-form passage map Sigma0 -> Sigma1."""
    if abs(p0.y) > 1e-12:
        raise ValueError("P_0^1 expects a point on Sigma0 (y = 0)")
    t0 = flight_time_to_sigma1(p0, eta, rates.gamma1)
    ratio = p0.z1 / eta
    amp = ratio ** (rates.a / rates.gamma1) * p0.x
    phase = rates.b / rates.gamma1 * np.log(eta / p0.z1)
    z2 = (eta / p0.z1) ** (rates.gamma2 / rates.gamma1) * p0.z2
    tail = tail_flow(p0.tail, t0, rates)
    if abs(z2) >= eta:
        raise DomainExitError(f"|z2| reaches eta before Sigma1 (|z2^1| = {abs(z2):.3g})")
    if np.linalg.norm(tail) >= eta or np.linalg.norm(p0.tail) >= eta:
        raise DomainExitError("tail leaves the eta-ball before Sigma1")
    return NormalFormPoint(amp * np.cos(phase), amp * np.sin(phase), eta, z2, tail)


def flow_to_sigma1_by_events(p0: NormalFormPoint, eta: float, rates: NormalFormRates,
                             xtol: float = 1e-14) -> tuple[float, NormalFormPoint]:
    """Independent route to P_0^1: root-find z1(t) = eta along local_flow."""
    if p0.z1 <= 0:
        raise DomainExitError("z1 <= 0: the orbit never reaches Sigma1")

    def g(t):
        return local_flow(p0, t, rates).z1 - eta

    if g(0.0) >= 0:
        return 0.0, local_flow(p0, 0.0, rates)
    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
    t0 = brentq(g, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return t0, local_flow(p0, t0, rates)


def sigma(p: NormalFormPoint, rates: NormalFormRates) -> NormalFormPoint:
    """Half-period shift in normal-form coordinates: z2 -> -z2, tail by mode parity."""
    parity = np.array(rates.tail_parity, dtype=float).reshape(-1, 2) if rates.n_pairs else np.ones((0, 2))
    return NormalFormPoint(p.x, p.y, p.z1, -p.z2, p.tail * parity)


@dataclass(frozen=True)
class SectionSpec:
    kind: str
    eta: float

    def __post_init__(self):
        if self.kind not in ("Sigma0", "Sigma1"):
            raise ValueError("kind must be Sigma0 or Sigma1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


def in_section(p: NormalFormPoint, spec: SectionSpec, rates: NormalFormRates,
               tol: float = 1e-12) -> bool:
    eta = spec.eta
    if spec.kind == "Sigma0":
        return bool(abs(p.y) <= tol
                    and eta * np.exp(-2 * np.pi * rates.a / rates.b) < p.x < eta
                    and 0 < p.z1 < eta and -eta < p.z2 < eta and p.tail_norm() < eta)
    return bool(abs(p.z1 - eta) <= tol and -eta < p.z2 < eta
                and np.hypot(p.x, p.y) < eta and p.tail_norm() < eta)


def random_sigma0_points(n: int, eta: float, rates: NormalFormRates, seed: int = 0,
                         z2_scale: float = 1.0) -> list[NormalFormPoint]:
    """Uniform samples of Sigma0 whose passage to Sigma1 stays admissible.

    z2 is drawn from |z2| < z2_scale * eta * (z1/eta)^(gamma2/gamma1), so the
    passage does not exit through |z2| = eta.
    """
    rng = np.random.default_rng(seed)
    lo = eta * np.exp(-2 * np.pi * rates.a / rates.b)
    pts = []
    while len(pts) < n:
        z1 = rng.uniform(0.0, eta)
        if z1 <= 0:
            continue
        zmax = z2_scale * eta * (z1 / eta) ** (rates.gamma2 / rates.gamma1)
        tail = rng.uniform(-1, 1, size=(rates.n_pairs, 2))
        tail *= 0.5 * eta * rng.uniform() / max(np.linalg.norm(tail), 1e-300)
        pts.append(NormalFormPoint(rng.uniform(lo, eta), 0.0, z1,
                                   rng.uniform(-0.99, 0.99) * zmax, tail))
    return pts
