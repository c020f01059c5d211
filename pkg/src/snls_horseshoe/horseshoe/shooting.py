"""Forward-only shooting: batched Newton solves and orbit segments of a BoxProblem."""

from __future__ import annotations

import mpmath
import numpy as np

from .problem import BoxProblem

FD_STEP = 1e-7


class ShootingError(RuntimeError):
    """A shooting problem did not converge or left the domain of the map."""


def fd_jacobian_rows(f, X: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobians of a row map, one per row: shape (m, n_out, n)."""
    X = np.atleast_2d(X)
    m, n = X.shape
    E = h * np.eye(n)
    plus = f((X[:, None, :] + E).reshape(m * n, n))
    minus = f((X[:, None, :] - E).reshape(m * n, n))
    d = (plus - minus).reshape(m, n, -1) / (2 * h)
    return np.transpose(d, (0, 2, 1))


def newton_rows(F, X0: np.ndarray, tol: float = 1e-13, max_iter: int = 40,
                h: float = FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Independent damped Newton solves F(x_i, i) = 0, one per row of X0.

    F receives a stack of rows and the matching row indices, so per-row data
    (targets, fixed coordinates) can be looked up. Returns (X, converged).
    """
    X = np.array(X0, dtype=float, copy=True)
    m, n = X.shape
    done = np.zeros(m, dtype=bool)
    E = h * np.eye(n)
    for _ in range(max_iter):
        act = np.flatnonzero(~done)
        if len(act) == 0:
            break
        Xa = X[act]
        Fa = F(Xa, act)
        rep = np.repeat(act, n)
        plus = F((Xa[:, None, :] + E).reshape(-1, n), rep)
        minus = F((Xa[:, None, :] - E).reshape(-1, n), rep)
        J = np.transpose((plus - minus).reshape(len(act), n, -1) / (2 * h), (0, 2, 1))
        ok = np.all(np.isfinite(Fa), axis=1) & np.all(np.isfinite(J), axis=(1, 2))
        step = np.zeros_like(Xa)
        for i in np.flatnonzero(ok):
            try:
                step[i] = np.linalg.solve(J[i], -Fa[i])
            except np.linalg.LinAlgError:
                ok[i] = False
        # damping: shrink updates that leave the domain or blow up the residual
        lam = np.ones(len(act))
        n0 = np.linalg.norm(np.where(np.isfinite(Fa), Fa, 0.0), axis=1)
        for _ in range(30):
            Ft = F(Xa + lam[:, None] * step, act)
            bad = ok & ~(np.all(np.isfinite(Ft), axis=1)
                         & (np.linalg.norm(Ft, axis=1) <= (1 - 1e-4 * lam) * n0 + 1e-13))
            if not bad.any():
                break
            lam[bad] *= 0.5
        Xa = Xa + lam[:, None] * step
        X[act] = Xa
        size = np.linalg.norm(lam[:, None] * step, axis=1)
        conv = ok & (size <= tol * np.maximum(1.0, np.linalg.norm(Xa, axis=1)))
        done[act[conv]] = True
        if not ok.any():
            break
    res = F(X, np.arange(m))
    return X, done & np.all(np.isfinite(res), axis=1)


def preimage(problem: BoxProblem, branch: int, s: np.ndarray, target_u: np.ndarray,
             guess_u: np.ndarray, tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Solve u(step((u, s))) = target_u for u with the stable part s held fixed.

    Returns full rows (u, s) and a convergence mask. Only forward steps are used.
    """
    nu = problem.n_u
    m = max(len(np.atleast_2d(s)), len(np.atleast_2d(target_u)), len(np.atleast_2d(guess_u)))
    s = np.broadcast_to(np.atleast_2d(s), (m, problem.n_s))
    target_u = np.broadcast_to(np.atleast_2d(target_u), (m, nu))
    guess = np.broadcast_to(np.atleast_2d(guess_u), (m, nu)).copy()

    def G(U, idx):
        return problem.step(np.column_stack([U, s[idx]]), branch)[:, :nu] - target_u[idx]

    U, conv = newton_rows(G, guess, tol)
    W = np.column_stack([U, s])
    res = G(U, np.arange(m))
    conv &= np.linalg.norm(res, axis=1) < 1e-8
    return W, conv


def _assemble(problem: BoxProblem, Q: np.ndarray, branches, closed: bool,
              s_first=None, u_last=None):
    """Residual and Jacobian of a shooting system; rows of Q are the orbit points."""
    n, nu, ns = problem.dim, problem.n_u, problem.n_s
    m = len(branches)
    npts = len(Q)
    images = np.empty((m, n))
    blocks = np.empty((m, n, n))
    for b in set(branches):
        idx = [i for i, bb in enumerate(branches) if bb == b]
        images[idx] = problem.step(Q[idx], b)
        blocks[idx] = fd_jacobian_rows(lambda X, b=b: problem.step(X, b), Q[idx])
    N = npts * n
    R = np.zeros(N)
    J = np.zeros((N, N))
    r = 0
    if not closed:
        R[:ns] = Q[0, nu:] - s_first
        J[:ns, nu:n] = np.eye(ns)
        r = ns
    for i in range(m):
        j = (i + 1) % npts
        R[r:r + n] = images[i] - Q[j]
        J[r:r + n, i * n:(i + 1) * n] += blocks[i]
        J[r:r + n, j * n:(j + 1) * n] -= np.eye(n)
        r += n
    if not closed:
        R[r:r + nu] = Q[-1, :nu] - u_last
        J[r:r + nu, (npts - 1) * n:(npts - 1) * n + nu] = np.eye(nu)
    return R, J


def _newton_system(problem, Q0, branches, closed, s_first=None, u_last=None,
                   tol=1e-13, max_iter=40):
    Q = np.array(Q0, dtype=float, copy=True)
    shape = Q.shape
    for it in range(max_iter):
        R, J = _assemble(problem, Q, branches, closed, s_first, u_last)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(J))):
            raise ShootingError(f"orbit segment left the domain at iteration {it}")
        try:
            dq = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError as exc:
            raise ShootingError("singular shooting Jacobian") from exc
        lam = 1.0
        r0 = np.linalg.norm(R)
        for _ in range(30):
            trial = Q + lam * dq.reshape(shape)
            Rt, _ = _residual_only(problem, trial, branches, closed, s_first, u_last)
            if np.all(np.isfinite(Rt)) and np.linalg.norm(Rt) <= max(2 * r0, 1e-14):
                break
            lam *= 0.5
        else:
            raise ShootingError("line search failed")
        Q = Q + lam * dq.reshape(shape)
        if lam * np.linalg.norm(dq) <= tol * max(1.0, np.linalg.norm(Q)):
            R, _ = _residual_only(problem, Q, branches, closed, s_first, u_last)
            return Q, float(np.linalg.norm(R))
    raise ShootingError(f"no convergence after {max_iter} iterations")


def _residual_only(problem, Q, branches, closed, s_first, u_last):
    n, nu, ns = problem.dim, problem.n_u, problem.n_s
    npts = len(Q)
    parts = []
    if not closed:
        parts.append(Q[0, nu:] - s_first)
    images = np.empty((len(branches), n))
    for b in set(branches):
        idx = [i for i, bb in enumerate(branches) if bb == b]
        images[idx] = problem.step(Q[idx], b)
    for i in range(len(branches)):
        parts.append(images[i] - Q[(i + 1) % npts])
    if not closed:
        parts.append(Q[-1, :nu] - u_last)
    return np.concatenate(parts), None


def solve_segment(problem: BoxProblem, branches, s_first, u_last, guess,
                  tol: float = 1e-13, max_iter: int = 40) -> tuple[np.ndarray, float]:
    """Orbit q_0..q_m with q_{i+1} = step(q_i, branches[i]), s(q_0) = s_first, u(q_m) = u_last."""
    guess = np.atleast_2d(guess)
    if len(guess) != len(branches) + 1:
        raise ValueError("guess must hold len(branches) + 1 points")
    return _newton_system(problem, guess, list(branches), False, np.asarray(s_first, float),
                          np.asarray(u_last, float), tol, max_iter)


def solve_cycle(problem: BoxProblem, branches, guess, tol: float = 1e-13,
                max_iter: int = 40) -> tuple[np.ndarray, float]:
    """Periodic orbit q_0..q_{p-1} with q_{i+1 mod p} = step(q_i, branches[i])."""
    guess = np.atleast_2d(guess)
    if len(guess) != len(branches):
        raise ValueError("guess must hold one point per branch")
    return _newton_system(problem, guess, list(branches), True, None, None, tol, max_iter)


def _residual_mp(problem, Q, branches, closed, s_first, u_last) -> list:
    nu = problem.n_u
    npts = len(Q)
    parts = []
    if not closed:
        parts += [a - b for a, b in zip(Q[0][nu:], s_first)]
    for i, b in enumerate(branches):
        img = problem.step_mp(Q[i], b)
        parts += [a - c for a, c in zip(img, Q[(i + 1) % npts])]
    if not closed:
        parts += [a - b for a, b in zip(Q[-1][:nu], u_last)]
    return parts


def polish_mp(problem: BoxProblem, Q, branches, closed: bool = False, s_first=None, u_last=None,
              dps: int = 40, iters: int = 6) -> tuple[list, float]:
    """Newton corrections of a converged shooting solution in mpmath arithmetic.

    The Jacobian stays in double precision; only the residual and the
    iterate carry ``dps`` digits, which is enough because each correction is
    tiny. Returns (rows as lists of mpf, final residual norm).
    """
    with mpmath.workdps(dps):
        mp = mpmath.mp
        Qm = [[mp.mpf(float(v)) for v in row] for row in np.atleast_2d(Q)]
        sf = None if s_first is None else [mp.mpf(float(v)) for v in s_first]
        ul = None if u_last is None else [mp.mpf(float(v)) for v in u_last]
        branches = list(branches)
        norm = np.inf
        for _ in range(iters):
            R = _residual_mp(problem, Qm, branches, closed, sf, ul)
            norm = float(mp.sqrt(mp.fsum(r * r for r in R)))
            if norm < mp.mpf(10) ** (-(dps - 8)):
                break
            Qf = np.array([[float(v) for v in row] for row in Qm])
            _, J = _assemble(problem, Qf, branches, closed,
                             None if sf is None else np.array(s_first, float),
                             None if ul is None else np.array(u_last, float))
            dq = np.linalg.solve(J, -np.array([float(r) for r in R])).reshape(Qf.shape)
            Qm = [[v + mp.mpf(float(d)) for v, d in zip(row, drow)] for row, drow in zip(Qm, dq)]
        return Qm, norm
