"""Helpers shared by the unit tests and the acceptance suite."""

import time

import numpy as np

from snls_horseshoe.params import compute_saddle, ladder_from_values
from snls_horseshoe.solver import FieldState, NormalFormFrame, smooth_even_state

RESULTS = []


def resonant_ladder():
    """Lambda_0..2 = 1, 2, 3, so 1 + 2 = 3 is an exact resonance."""
    plus = [1, 2, 3, -10 + 0.5j, -20 + 0.7j, -30 + 0.9j, -40 + 1.1j]
    minus = [-1.5 + 0.3j, -2.7 + 0.2j, -5.1 + 0.1j, -11.3 + 0.4j, -21.7 + 0.6j, -31.9 + 0.8j,
             -41.3 + 1.0j]
    return ladder_from_values(plus, minus)


def near_saddle(params, K=64, seed=0, amplitude=0.1):
    return smooth_even_state(K, seed=seed, amplitude=amplitude,
                             base=compute_saddle(params).q_value)


def linear_normal_form_trajectory(params, K=16, t_end=200.0, n=401):
    """Exact linear flow in the eigen-coordinates of L, lifted back to fields."""
    frame = NormalFormFrame(params, K)

    def block(lam, t):
        l0, l1 = complex(lam[0]), complex(lam[1])
        if abs(l0.imag) > 0:
            c, s = np.cos(l0.imag * t), np.sin(l0.imag * t)
            return np.exp(l0.real * t) * np.array([[c, -s], [s, c]])
        return np.diag([np.exp(l0.real * t), np.exp(l1.real * t)])

    c0 = np.zeros((K, 2))
    c0[2] = [0.01, 0.0]
    c0[3] = [0.01, 0.005]
    states = []
    for t in np.linspace(0.0, t_end, n):
        c = np.array([block(frame.eigenvalues[k], t) @ c0[k] for k in range(K)])
        modes = frame.field(c)
        modes[0] += frame.saddle.q_value
        states.append(FieldState(modes, t))
    a = -complex(frame.eigenvalues[2][0]).real
    g = -complex(frame.eigenvalues[3][0]).real
    return states, frame, a, g


class Criterion:
    """Collects named checks and prints one PASS/FAIL line on exit.

    The runtime limit counts as a check of its own.
    """

    def __init__(self, number, title, limit=None):
        self.number, self.title, self.limit = number, title, limit
        self.checks = []

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))
        return ok

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        if self.limit is not None:
            self.check("runtime", dt < self.limit, f"{dt:.1f}s < {self.limit:g}s")
        failed = [c for c in self.checks if not c[1]]
        ok = exc_type is None and not failed
        parts = [f"{lab}: {det}" for lab, _, det in (failed or self.checks) if det]
        if exc_type is not None:
            parts.insert(0, f"{exc_type.__name__}: {exc}")
        line = (f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'} [{dt:6.1f}s] {self.title}"
                + (" | " + "; ".join(parts) if parts else ""))
        RESULTS.append(line)
        print(line)
        if exc_type is None and failed:
            raise AssertionError(line)
        return False
