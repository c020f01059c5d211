"""Pseudo-spectral integrator for even, 2*pi-periodic NLS fields.

Fields are stored as complex cosine coefficients, q(z) = sum_k c_k cos(k z).
The stiff part i(k^2 + 2 w^2) - eps(k^2 + alpha) is diagonal in this basis
and is integrated exactly; the cubic term is evaluated on a DCT-I grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import mpmath
import numpy as np
from scipy import fft as sfft

from .params import ModelParams, compute_saddle

SCHEMES = ("etdrk4", "split-step")


class BlowupError(RuntimeError):
    """Raised when a mode amplitude exceeds the configured bound."""


@dataclass(frozen=True)
class FieldState:
    modes: np.ndarray
    time: float = 0.0

    @property
    def K(self) -> int:
        return len(self.modes)

    @classmethod
    def constant(cls, value: complex, K: int, time: float = 0.0) -> "FieldState":
        modes = np.zeros(K, dtype=complex)
        modes[0] = value
        return cls(modes, time)

    def sample(self, zeta) -> np.ndarray:
        """Evaluate q at arbitrary points (direct cosine sum)."""
        zeta = np.asarray(zeta, dtype=float)
        k = np.arange(self.K)
        return np.cos(np.multiply.outer(zeta, k)) @ self.modes

    def resized(self, K: int) -> "FieldState":
        modes = np.zeros(K, dtype=complex)
        n = min(K, self.K)
        modes[:n] = self.modes[:n]
        return FieldState(modes, self.time)


@dataclass(frozen=True)
class SolverConfig:
    K: int = 64
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "etdrk4"
    dealias: bool = True
    blowup: float = 1e3

    def __post_init__(self):
        if self.K < 16 or self.K & (self.K - 1):
            raise ValueError(f"K must be a power of two >= 16, got {self.K}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


# -- transforms ---------------------------------------------------------------

def to_grid(modes: np.ndarray, n_points: int) -> np.ndarray:
    """Cosine coefficients -> samples at z_j = pi j / (n_points - 1)."""
    x = np.zeros(n_points, dtype=complex)
    K = min(len(modes), n_points)
    x[:K] = modes[:K]
    x[1:n_points - 1] *= 0.5
    return sfft.dct(x.real, type=1) + 1j * sfft.dct(x.imag, type=1)


def from_grid(values: np.ndarray, K: int) -> np.ndarray:
    n_points = len(values)
    x = (sfft.dct(values.real, type=1) + 1j * sfft.dct(values.imag, type=1)) / (2 * (n_points - 1))
    x[1:n_points - 1] *= 2.0
    out = np.zeros(K, dtype=complex)
    m = min(K, n_points)
    out[:m] = x[:m]
    return out


def mass(state: FieldState) -> float:
    """Integral of |q|^2 over one period, from Parseval in the cosine basis."""
    c = state.modes
    return float(2 * np.pi * abs(c[0]) ** 2 + np.pi * np.sum(np.abs(c[1:]) ** 2))


# -- right-hand side ----------------------------------------------------------

def linear_symbol(K: int, params: ModelParams) -> np.ndarray:
    k2 = np.arange(K, dtype=float) ** 2
    return 1j * (k2 + 2 * params.omega**2) - params.epsilon * (k2 + params.alpha)


def _dealias_mask(K: int) -> np.ndarray:
    return np.arange(K) < int(np.ceil(2 * K / 3))


def nonlinear_term(modes: np.ndarray, params: ModelParams, dealias: bool = True) -> np.ndarray:
    K = len(modes)
    n_points = 2 * K if dealias else K
    q = to_grid(modes, n_points)
    out = -2j * from_grid(np.abs(q) ** 2 * q, K)
    if dealias:
        out[~_dealias_mask(K)] = 0.0
    out[0] += params.epsilon * params.beta
    return out


def rhs(state: FieldState, params: ModelParams, dealias: bool = True) -> np.ndarray:
    """q_t = -i q_zz - 2i(|q|^2 - w^2) q + eps (q_zz - alpha q + beta), in modes."""
    return linear_symbol(state.K, params) * state.modes + nonlinear_term(state.modes, params, dealias)


# -- time stepping ------------------------------------------------------------

@lru_cache(maxsize=32)
def _etd_coefficients(lin_key: bytes, K: int, h: float, n_roots: int = 32):
    lin = np.frombuffer(lin_key, dtype=complex)
    roots = np.exp(2j * np.pi * (np.arange(n_roots) + 0.5) / n_roots)
    lr = h * lin[:, None] + roots[None, :]
    e2 = np.exp(h * lin / 2)
    e = np.exp(h * lin)
    q = h * ((np.exp(lr / 2) - 1) / lr).mean(axis=1)
    f1 = h * ((-4 - lr + np.exp(lr) * (4 - 3 * lr + lr**2)) / lr**3).mean(axis=1)
    f2 = h * ((2 + lr + np.exp(lr) * (lr - 2)) / lr**3).mean(axis=1)
    f3 = h * ((-4 - 3 * lr - lr**2 + np.exp(lr) * (4 - lr)) / lr**3).mean(axis=1)
    return e, e2, q, f1, f2, f3


def _etdrk4_step(c, lin, h, N):
    e, e2, q, f1, f2, f3 = _etd_coefficients(lin.tobytes(), len(c), h)
    Nc = N(c)
    a = e2 * c + q * Nc
    Na = N(a)
    b = e2 * c + q * Na
    Nb = N(b)
    cc = e2 * a + q * (2 * Nb - Nc)
    Ncc = N(cc)
    return e * c + f1 * Nc + 2 * f2 * (Na + Nb) + f3 * Ncc


def _split_step(c, lin, h, params, dealias):
    K = len(c)
    half = np.exp(0.5 * h * lin)
    c = half * c
    c[0] += 0.5 * h * params.epsilon * params.beta
    n_points = 2 * K if dealias else K
    q = to_grid(c, n_points)
    c = from_grid(q * np.exp(-2j * np.abs(q) ** 2 * h), K)
    if dealias:
        c[~_dealias_mask(K)] = 0.0
    c[0] += 0.5 * h * params.epsilon * params.beta
    return half * c


def _steps(t_span: float, dt: float) -> tuple[int, float]:
    n = max(1, int(np.ceil(t_span / dt - 1e-9)))
    return n, t_span / n


def trajectory(state: FieldState, params: ModelParams, config: SolverConfig,
               record_every: int = 1) -> list[FieldState]:
    """States at every `record_every` steps from state.time to config.t_end (inclusive)."""
    if config.t_end < state.time:
        raise ValueError("t_end precedes the state time; the flow is forward-only")
    if state.K != config.K:
        state = state.resized(config.K)
    out = [state]
    span = config.t_end - state.time
    if span == 0:
        return out
    n, h = _steps(span, config.dt)
    lin = linear_symbol(config.K, params)
    c = state.modes.astype(complex).copy()

    def N(m):
        return nonlinear_term(m, params, config.dealias)

    for i in range(1, n + 1):
        if config.scheme == "etdrk4":
            c = _etdrk4_step(c, lin, h, N)
        else:
            c = _split_step(c, lin, h, params, config.dealias)
        amp = np.max(np.abs(c))
        if not np.isfinite(amp) or amp > config.blowup:
            raise BlowupError(f"max|c_k| = {amp:.3e} at t = {state.time + i * h:.6g}")
        if i % record_every == 0 or i == n:
            t = config.t_end if i == n else state.time + i * h
            out.append(FieldState(c.copy(), t))
    return out


def evolve(state: FieldState, params: ModelParams, config: SolverConfig) -> FieldState:
    return trajectory(state, params, config, record_every=10**12)[-1]


# -- linearisation and symmetry -----------------------------------------------

def L_block(n: int, params: ModelParams) -> np.ndarray:
    """2x2 real matrix of L on (Re Q_n, Im Q_n) for cosine mode n."""
    saddle = compute_saddle(params)
    qe = saddle.q_value

    def L(Q):
        return (1j * n * n * Q
                - 2j * ((2 * saddle.I - params.omega**2) * Q + qe**2 * np.conj(Q))
                - params.epsilon * (params.alpha + n * n) * Q)

    cols = [L(1.0 + 0j), L(1j)]
    return np.array([[cols[0].real, cols[1].real], [cols[0].imag, cols[1].imag]])


def _saddle_mp(params: ModelParams):
    """(I, q_e) of the first-order saddle in the current mpmath precision."""
    mp = mpmath.mp
    alpha, beta, omega, eps = (mp.mpf(v) for v in (params.alpha, params.beta, params.omega,
                                                     params.epsilon))
    I = omega**2 - eps / (2 * omega) * mp.sqrt(beta**2 - alpha**2 * omega**2)
    theta = mp.acos(alpha * mp.sqrt(I) / beta)
    return I, mp.sqrt(I) * mp.expj(theta)


def L_block_mp(n: int, params: ModelParams, dps: int = 40) -> "mpmath.matrix":
    """L_block evaluated in ``dps``-digit arithmetic, saddle included."""
    with mpmath.workdps(dps):
        mp = mpmath.mp
        I, qe = _saddle_mp(params)
        om, eps, alpha = mp.mpf(params.omega), mp.mpf(params.epsilon), mp.mpf(params.alpha)

        def L(Q):
            return (1j * n * n * Q - 2j * ((2 * I - om**2) * Q + qe**2 * mp.conj(Q))
                    - eps * (alpha + n * n) * Q)

        c0, c1 = L(mp.mpc(1)), L(mp.mpc(0, 1))
        return mpmath.matrix([[c0.real, c1.real], [c0.imag, c1.imag]])


def apply_L(state: FieldState, params: ModelParams, dps: int | None = None):
    """Linearised operator at the saddle applied to a deviation field.

    With ``dps`` the operator is evaluated in mpmath and a list of mpc is
    returned. This matters at eps = 0, where mode 0 is a Jordan block and
    double rounding moves its eigenvalues by about sqrt(machine eps).
    """
    if dps is not None:
        out = []
        with mpmath.workdps(dps):
            for n, Q in enumerate(state.modes):
                M = L_block_mp(n, params, dps)
                re, im = mpmath.mpf(complex(Q).real), mpmath.mpf(complex(Q).imag)
                out.append(mpmath.mpc(M[0, 0] * re + M[0, 1] * im, M[1, 0] * re + M[1, 1] * im))
        return out
    out = np.empty(state.K, dtype=complex)
    for n, Q in enumerate(state.modes):
        M = L_block(n, params)
        v = M @ np.array([Q.real, Q.imag])
        out[n] = v[0] + 1j * v[1]
    return out


def shift_half_period(state: FieldState) -> FieldState:
    sign = np.where(np.arange(state.K) % 2 == 0, 1.0, -1.0)
    return FieldState(state.modes * sign, state.time)


# -- tangency diagnostic ------------------------------------------------------

@dataclass
class TangencyReport:
    samples: list[tuple[float, float]]

    def fit_decay(self, t_min: float = -np.inf, t_max: float = np.inf) -> float:
        """Exponent r in tan(angle) ~ C exp(-r t), by least squares on the log."""
        t = np.array([s[0] for s in self.samples])
        ang = np.array([s[1] for s in self.samples])
        ok = np.isfinite(ang) & (ang > 0) & (t >= t_min) & (t <= t_max)
        if ok.sum() < 2:
            raise ValueError("not enough defined samples to fit")
        slope = np.polyfit(t[ok], np.log(np.tan(ang[ok])), 1)[0]
        return float(-slope)


class NormalFormFrame:
    """Per-mode eigenbases of L at the saddle.

    Mode 2 carries the (x, y) focus; mode 0 carries z1 (lambda_0^+) and mode 1
    carries z2 (lambda_1^+). Complex pairs p +/- iq use the real basis
    (Re v, -Im v) of the eigenvector v for p + iq, so the flow on the
    coordinates is p*I + q*[[0, -1], [1, 0]].
    """

    def __init__(self, params: ModelParams, K: int):
        self.params = params
        self.K = K
        self.saddle = compute_saddle(params)
        self.bases = []
        self.eigenvalues = []
        for n in range(K):
            M = L_block(n, params)
            w, V = np.linalg.eig(M)
            if abs(w[0].imag) > 1e-14:
                j = 0 if w[0].imag > 0 else 1
                v = V[:, j]
                B = np.column_stack([v.real, -v.imag])
                lam = (w[j], np.conj(w[j]))
            else:
                order = np.argsort(-w.real)
                B = V[:, order].real
                lam = (w[order[0]].real, w[order[1]].real)
            if abs(np.linalg.det(B)) < 1e-12:
                B = np.eye(2)
            self.bases.append(B)
            self.eigenvalues.append(lam)

    def coordinates(self, deviation: np.ndarray) -> np.ndarray:
        """Deviation cosine modes -> (K, 2) array of eigen-coordinates."""
        out = np.empty((self.K, 2))
        for n in range(self.K):
            d = deviation[n] if n < len(deviation) else 0.0
            out[n] = np.linalg.solve(self.bases[n], [d.real, d.imag])
        return out

    def field(self, coords: np.ndarray) -> np.ndarray:
        """Inverse of coordinates(): (K, 2) eigen-coordinates -> deviation modes."""
        out = np.empty(self.K, dtype=complex)
        for n in range(self.K):
            v = self.bases[n] @ coords[n]
            out[n] = v[0] + 1j * v[1]
        return out


def tangency_diagnostic(trajectory: list[FieldState], frame: NormalFormFrame,
                        floor: float = 1e-12) -> TangencyReport:
    """Angle between each deviation q - Q_eps and the (x, y) eigenplane."""
    qe = frame.saddle.q_value
    samples = []
    for st in trajectory:
        dev = st.modes.astype(complex).copy()
        dev[0] -= qe
        c = frame.coordinates(dev)
        inplane = np.linalg.norm(c[2])
        off = np.sqrt(max(np.sum(c**2) - inplane**2, 0.0))
        if np.hypot(inplane, off) < floor:
            samples.append((st.time, float("nan")))
        else:
            samples.append((st.time, float(np.arctan2(off, inplane))))
    return TangencyReport(samples)


def smooth_even_state(K: int, seed: int = 0, amplitude: float = 0.3,
                      decay: float = 1.0, base: complex = 0.8) -> FieldState:
    """Random analytic even field with modes decaying like exp(-decay k)."""
    rng = np.random.default_rng(seed)
    k = np.arange(K)
    c = amplitude * np.exp(-decay * k) * (rng.standard_normal(K) + 1j * rng.standard_normal(K))
    c[0] += base
    c[k >= int(np.ceil(2 * K / 3))] = 0.0
    return FieldState(c, 0.0)


def with_time(state: FieldState, t: float) -> FieldState:
    return replace(state, time=t)
