"""Saddle, eigenvalue ladder, Silnikov ordering and Siegel nonresonance.

All quantities refer to the damped/driven NLS

    i q_t = q_zz + 2(|q|^2 - w^2) q + i eps (q_zz - alpha q + beta)

on even 2*pi-periodic fields. The saddle is kept to first order in eps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-10


class ParameterError(ValueError):
    """Raised when model parameters fall outside the admissible region."""


class SearchBudgetError(ValueError):
    """Raised when an exhaustive search would exceed its combination budget."""


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float
    omega: float
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if not 0.5 < self.omega < 1.0:
            raise ParameterError(f"omega must lie in (1/2, 1), got {self.omega}")
        if not self.epsilon >= 0:
            raise ParameterError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.alpha * self.omega >= self.beta:
            raise ParameterError(
                f"alpha*omega = {self.alpha * self.omega:g} must be < beta = {self.beta:g}"
            )

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "omega": self.omega,
                "epsilon": self.epsilon}


@dataclass(frozen=True)
class SaddleState:
    I: float
    theta: float

    @property
    def q_value(self) -> complex:
        return math.sqrt(self.I) * complex(math.cos(self.theta), math.sin(self.theta))


@dataclass(frozen=True)
class Rates:
    """Normal-form rates: (x, y) focus -a +/- ib, expansions gamma1 < gamma2."""

    a: float
    b: float
    gamma1: float
    gamma2: float

    def as_tuple(self):
        return (self.a, self.b, self.gamma1, self.gamma2)


@dataclass
class EigenLadder:
    """lambda_n^+ and lambda_n^- for n = 0..n_max, plus the focus/saddle rates."""

    n: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    epsilon: float = 0.0
    alpha: float = 0.0
    rates: Rates | None = None

    @property
    def n_max(self) -> int:
        return int(self.n[-1])

    def Lambda(self, k: int) -> complex:
        """Relabelled eigenvalue: lambda_k^+ for k >= 0, lambda_{-k-1}^- for k < 0."""
        if k >= 0:
            return complex(self.lambda_plus[k])
        return complex(self.lambda_minus[-k - 1])

    def entries(self):
        return list(zip(self.n.tolist(), self.lambda_plus.tolist(),
                        self.lambda_minus.tolist()))


@dataclass
class SilnikovReport:
    c1: bool
    c2: bool
    c3: bool
    indeterminate: bool
    rates: Rates
    notes: list[str] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return self.c1 and self.c2 and self.c3 and not self.indeterminate


@dataclass
class NonresonanceResult:
    holds: bool
    worst_margin: float
    witness: dict
    combinations: int


def compute_saddle(params: ModelParams) -> SaddleState:
    """First-order (in eps) saddle; the O(eps^2) remainder is not represented."""
    alpha, beta, omega, eps = params.alpha, params.beta, params.omega, params.epsilon
    disc = beta**2 - alpha**2 * omega**2
    if disc <= 0:
        raise ParameterError("beta^2 - alpha^2 omega^2 must be positive")
    I = omega**2 - eps / (2.0 * omega) * math.sqrt(disc)
    if I <= 0:
        raise ParameterError(f"epsilon={eps} too large: first-order I={I:g} <= 0")
    c = alpha * math.sqrt(I) / beta
    if not 0 < c < 1:
        raise ParameterError(f"cos(theta)={c:g} outside (0, 1)")
    return SaddleState(I=I, theta=math.acos(c))


def _branch_pair(shift: float, root: complex) -> tuple[complex, complex]:
    p, m = shift + root, shift - root
    # larger real part first, larger imaginary part on ties
    if (m.real, m.imag) > (p.real, p.imag):
        p, m = m, p
    return p, m


def compute_spectrum(params: ModelParams, n_max: int = 16) -> EigenLadder:
    if n_max < 3:
        raise ValueError("n_max must be at least 3")
    saddle = compute_saddle(params)
    I, omega, eps, alpha = saddle.I, params.omega, params.epsilon, params.alpha
    ns = np.arange(n_max + 1)
    plus = np.empty(n_max + 1, dtype=complex)
    minus = np.empty(n_max + 1, dtype=complex)
    for n in ns:
        radicand = (n * n / 2.0 + omega**2 - I) * (3.0 * I - omega**2 - n * n / 2.0)
        root = 2.0 * np.sqrt(complex(radicand))
        plus[n], minus[n] = _branch_pair(-eps * (alpha + n * n), root)
    ladder = EigenLadder(ns, plus, minus, epsilon=eps, alpha=alpha)
    ladder.rates = Rates(a=-plus[2].real, b=plus[2].imag,
                         gamma1=plus[0].real, gamma2=plus[1].real)
    return ladder


def check_silnikov_conditions(ladder: EigenLadder, tol: float = DEFAULT_TOL) -> SilnikovReport:
    """The three orderings that make the homoclinic orbit of Silnikov type.

    (1) only lambda_0^+ and lambda_1^+ are unstable, Re lambda_0^+ < Re lambda_1^+;
    (2) lambda_2^{+-} is the weakest attracting pair;
    (3) |Re lambda_2^+| < Re lambda_0^+.
    """
    if ladder.n_max < 3:
        raise ValueError("ladder must reach n = 3")
    re_p = ladder.lambda_plus.real
    re_m = ladder.lambda_minus.real
    notes: list[str] = []
    indeterminate = False

    def close(u, v, what):
        nonlocal indeterminate
        if abs(u - v) < tol:
            indeterminate = True
            notes.append(f"{what}: |{u:.3e} - {v:.3e}| < tol")

    close(re_p[0], 0.0, "Re lambda_0^+ vs 0")
    close(re_p[1], 0.0, "Re lambda_1^+ vs 0")
    close(re_p[0], re_p[1], "Re lambda_0^+ vs Re lambda_1^+")

    others = np.concatenate([re_p[2:], re_m])
    c1 = bool(re_p[0] > tol and re_p[1] > tol and re_p[0] < re_p[1]
               and np.all(others < -tol))

    weakest = -re_p[2]
    rest = np.concatenate([re_p[3:], re_m[[0, 1]], re_m[3:]])
    c2 = bool(np.all(re_p[2:] < 0) and np.all(re_m < 0)
              and abs(re_p[2] - re_m[2]) < max(tol, 1e-12)
              and np.all(-rest > weakest + tol))
    close(weakest, float(np.min(-rest)), "|Re lambda_2| vs next attracting rate")

    c3 = bool(abs(re_p[2]) < re_p[0] - tol)
    close(abs(re_p[2]), re_p[0], "|Re lambda_2^+| vs Re lambda_0^+")

    rates = ladder.rates or Rates(-re_p[2], ladder.lambda_plus[2].imag, re_p[0], re_p[1])
    return SilnikovReport(c1, c2, c3, indeterminate, rates, notes)


def check_nonresonance(ladder: EigenLadder, s: int = 4, n_max: int = 6, r_max: int = 4,
                       l_bound: int = 6, budget: int = 10**7) -> NonresonanceResult:
    """Exhaustive Siegel-type small-divisor test on a finite truncation.

    Checks |Lambda_n - sum_j Lambda_{l_j}| >= r^-s for 2 <= n <= n_max,
    2 <= r <= min(n, r_max) and every multiset {l_j} with |l_j| <= l_bound.
    """
    if n_max < 2 or r_max < 2 or l_bound < 1 or s < 1:
        raise ValueError("need n_max >= 2, r_max >= 2, l_bound >= 1, s >= 1")
    if ladder.n_max < max(n_max, l_bound):
        raise ValueError(f"ladder must reach n = {max(n_max, l_bound)}")
    labels = list(range(-l_bound, l_bound + 1))
    values = np.array([ladder.Lambda(k) for k in labels])
    total = sum(math.comb(len(labels) + r - 1, r)
                for n in range(2, n_max + 1) for r in range(2, min(n, r_max) + 1))
    if total > budget:
        raise SearchBudgetError(f"{total} combinations exceed budget {budget}")

    worst = math.inf
    witness: dict = {}
    for r in range(2, min(n_max, r_max) + 1):
        combos = np.array(list(itertools.combinations_with_replacement(range(len(labels)), r)))
        sums = values[combos].sum(axis=1)
        for n in range(max(2, r), n_max + 1):
            margins = np.abs(ladder.Lambda(n) - sums) - float(r) ** (-s)
            i = int(np.argmin(margins))
            if margins[i] < worst:
                worst = float(margins[i])
                witness = {"n": n, "r": r, "l": [labels[j] for j in combos[i]],
                           "distance": float(margins[i] + float(r) ** (-s))}
    return NonresonanceResult(holds=worst >= 0, worst_margin=worst, witness=witness,
                              combinations=total)


def ladder_from_values(plus, minus, epsilon: float = 0.0, alpha: float = 0.0) -> EigenLadder:
    """Build a ladder from explicit eigenvalues (used for constructed test cases)."""
    plus = np.asarray(plus, dtype=complex)
    minus = np.asarray(minus, dtype=complex)
    ladder = EigenLadder(np.arange(len(plus)), plus, minus, epsilon=epsilon, alpha=alpha)
    if len(plus) > 2:
        ladder.rates = Rates(-plus[2].real, plus[2].imag, plus[0].real, plus[1].real)
    return ladder
