"""Space-time reenactment of the Yosida-approximation existence argument.

The fractional derivative becomes a causal Toeplitz matrix ``Lambda`` acting on
space-time arrays of shape ``(n_time, n_dof)`` (rows are the nodes
``t_1 .. t_n``, the zero initial row is implicit). Its resolvent
``V_alpha = (alpha - Lambda)^{-1}`` gives the bounded approximation
``Lambda_alpha = alpha (alpha V_alpha - I)``; the regularized equations
``Acal u - Lambda_alpha u = f`` are solved for increasing ``alpha`` and compared
with a direct solve of ``Acal u - Lambda u = f``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .kernels import grunwald_weights
from .operators import Operator, TripleSpec


@dataclass(frozen=True)
class DiscreteLambda:
    """``Lambda = -d^beta`` as the lower-triangular Toeplitz matrix of GL weights."""

    beta: float
    dt: float
    n_time: int
    matrix: np.ndarray = field(repr=False)

    def apply(self, u) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float)

    def pairing(self, u) -> float:
        """Flattened Euclidean ``<Lambda u, u>``."""
        u = np.asarray(u, dtype=float)
        return float(np.sum(self.apply(u) * u))


def build_discrete_lambda(beta: float, dt: float, n_time: int) -> DiscreteLambda:
    if n_time < 1:
        raise ValueError("n_time must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    col = -dt ** (-beta) * grunwald_weights(beta, n_time - 1)
    return DiscreteLambda(beta, dt, n_time, linalg.toeplitz(col, np.zeros(n_time)))


CONTRACTION_TOL = 1e-10


def resolvent(lam: DiscreteLambda, alpha: float, v, triple: Optional[TripleSpec] = None) -> np.ndarray:
    """``V_alpha v``: forward substitution for ``(alpha - Lambda) w = v``.

    Since ``-Lambda`` is accretive, ``alpha V_alpha`` is a contraction; this is
    checked on every call, in the space-time ``H`` norm when ``triple`` is given
    (rows of ``v`` are states) and in the Frobenius norm otherwise.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    v = np.asarray(v, dtype=float)
    m = alpha * np.eye(lam.n_time) - lam.matrix
    w = linalg.solve_triangular(m, v, lower=True)
    if triple is None or v.ndim == 1:
        nv, nw = np.linalg.norm(v), alpha * np.linalg.norm(w)
    else:
        nv = math.sqrt(sum(triple.h_inner(r, r) for r in v))
        nw = alpha * math.sqrt(sum(triple.h_inner(r, r) for r in w))
    if nw > (1.0 + CONTRACTION_TOL) * nv + 1e-300:
        raise ArithmeticError(f"resolvent contraction violated: |alpha V v| = {nw:.6e} > |v| = {nv:.6e}")
    return w


def yosida_matrix(lam: DiscreteLambda, alpha: float) -> np.ndarray:
    """``Lambda_alpha = alpha (alpha V_alpha - I)`` as a dense lower-triangular matrix."""
    eye = np.eye(lam.n_time)
    return alpha * (alpha * resolvent(lam, alpha, eye) - eye)


def resolvent_norm(lam: DiscreteLambda, alpha: float, iters: int = 200, seed: int = 0) -> float:
    """Operator 2-norm of ``alpha V_alpha`` by power iteration on its normal matrix."""
    m = alpha * resolvent(lam, alpha, np.eye(lam.n_time))
    x = np.random.default_rng(seed).normal(size=lam.n_time)
    sigma = 0.0
    for _ in range(iters):
        y = m.T @ (m @ x)
        sigma = math.sqrt(np.linalg.norm(y) / np.linalg.norm(x))
        x = y / np.linalg.norm(y)
    return sigma


@dataclass(frozen=True)
class SpaceTimeOperator:
    """``(Acal u)(t_i) = A(t_i, u_i)`` for rows ``u_i`` of a space-time array."""

    op: Operator
    triple: TripleSpec
    times: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.times), self.triple.n)

    def apply(self, u) -> np.ndarray:
        return np.array([self.op.apply(self.triple, row, t) for row, t in zip(u, self.times)])

    def jacobian(self, u) -> np.ndarray:
        return linalg.block_diag(*[self.op.jacobian(self.triple, row, t) for row, t in zip(u, self.times)])

    def v_norm(self, u, dt: float) -> float:
        """Discrete ``L^p(0, T; V)`` norm."""
        p = self.triple.p
        return float((dt * sum(self.triple.v_norm(r) ** p for r in u)) ** (1.0 / p))

    def dual_norm(self, a, dt: float) -> float:
        """Hölder-dual ``L^{p'}(0, T; V*)`` estimate."""
        q = self.triple.conjugate
        return float((dt * sum(self.triple.dual_norm(r) ** q for r in a)) ** (1.0 / q))


class NonConvergence(RuntimeError):
    pass


def _newton(a_st: SpaceTimeOperator, time_matrix: np.ndarray, f: np.ndarray, tol: float,
            max_iter: int, guess: Optional[np.ndarray] = None) -> tuple[np.ndarray, float, int]:
    """Solve ``Acal u - (time_matrix ⊗ I) u = f`` by damped Newton."""
    nt, nd = a_st.shape
    big = np.kron(time_matrix, np.eye(nd))
    u = np.zeros((nt, nd)) if guess is None else np.array(guess, dtype=float)

    def resid(u):
        return a_st.apply(u) - time_matrix @ u - f

    r = resid(u)
    rn = float(np.linalg.norm(r))
    scale = max(1.0, float(np.linalg.norm(f)))
    it = 0
    while rn > tol * scale and it < max_iter:
        it += 1
        jac = a_st.jacobian(u) - big
        step = np.linalg.solve(jac, -r.ravel()).reshape(nt, nd)
        lam = 1.0
        while True:
            trial = u + lam * step
            tr = resid(trial)
            tn = float(np.linalg.norm(tr))
            if tn < rn or lam < 1e-10:
                break
            lam *= 0.5
        u, r, rn = trial, tr, tn
    if rn > tol * scale:
        raise NonConvergence(f"space-time Newton stalled at residual {rn:.3e}")
    return u, rn, it


@dataclass
class YosidaState:
    alpha: float
    u_alpha: np.ndarray
    residual: float
    norm_u: float
    norm_Au: float
    norm_lambda_u: float
    iterations: int


def solve_regularized(a_st: SpaceTimeOperator, lam: DiscreteLambda, alpha: float, f,
                      tol: float = 1e-11, max_iter: int = 60, guess=None) -> YosidaState:
    """Solve ``Acal u - Lambda_alpha u = f``."""
    f = np.asarray(f, dtype=float)
    y = yosida_matrix(lam, alpha)
    try:
        u, rn, it = _newton(a_st, y, f, tol, max_iter, guess)
    except NonConvergence as exc:
        raise NonConvergence(f"alpha={alpha}: {exc}") from exc
    dt = lam.dt
    return YosidaState(alpha, u, rn, a_st.v_norm(u, dt), a_st.dual_norm(a_st.apply(u), dt),
                       a_st.dual_norm(y @ u, dt), it)


def solve_limit(a_st: SpaceTimeOperator, lam: DiscreteLambda, f, tol: float = 1e-11,
                max_iter: int = 60) -> np.ndarray:
    """Direct solve of ``Acal u - Lambda u = f`` with the full triangular ``Lambda``."""
    return _newton(a_st, lam.matrix, np.asarray(f, dtype=float), tol, max_iter)[0]


@dataclass
class YosidaStudy:
    alphas: np.ndarray
    states: list
    reference: np.ndarray
    reference_norm: float
    errors: np.ndarray
    sup_norm_u: float
    sup_norm_Au: float
    rate: float
    monotone_from: Optional[int]
    resolvent_constant: float
    """Observed ``max |alpha V_alpha u_alpha| / |u_alpha|`` in the space-time norm."""

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.sup_norm_u) and np.isfinite(self.sup_norm_Au))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["alpha", "residual", "norm_u", "norm_Au", "err_vs_reference"])
        for s, e in zip(self.states, self.errors):
            writer.writerow([repr(float(s.alpha)), repr(s.residual), repr(s.norm_u), repr(s.norm_Au), repr(float(e))])
        return buf.getvalue()


def yosida_convergence_study(a_st: SpaceTimeOperator, lam: DiscreteLambda, f,
                             alphas: Sequence[float]) -> YosidaStudy:
    """Solve for each ``alpha`` and compare with the direct solution.

    ``rate`` is the least-squares slope of ``log error`` against ``log alpha``
    over the last three values; ``monotone_from`` is the first index from
    which the error decreases strictly (``None`` if it never settles).
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size < 3 or np.any(np.diff(alphas) <= 0):
        raise ValueError("need at least three increasing alpha values")
    f = np.asarray(f, dtype=float)
    ref = solve_limit(a_st, lam, f)
    dt = lam.dt
    states, errors, consts = [], [], []
    guess = None
    for a in alphas:
        st = solve_regularized(a_st, lam, a, f, guess=guess)
        guess = st.u_alpha
        states.append(st)
        errors.append(a_st.v_norm(st.u_alpha - ref, dt))
        if st.norm_u > 0:
            consts.append(a_st.v_norm(a * resolvent(lam, a, st.u_alpha), dt) / st.norm_u)
    errors = np.array(errors)
    tail = slice(-3, None)
    positive = errors[tail] > 0
    if np.all(positive):
        rate = float(np.polyfit(np.log(alphas[tail]), np.log(errors[tail]), 1)[0])
    else:
        rate = float("nan")
    monotone_from = None
    for i in range(len(errors)):
        if np.all(np.diff(errors[i:]) < 0):
            monotone_from = i
            break
    return YosidaStudy(alphas, states, ref, a_st.v_norm(ref, dt), errors,
                       max(s.norm_u for s in states), max(s.norm_Au for s in states),
                       rate, monotone_from, max(consts, default=0.0))


def continuous_symbol(beta: float, omega) -> np.ndarray:
    """``-(i omega)^beta = -|omega|^beta (cos(beta pi/2 sgn) + i sin(beta pi/2 sgn))``."""
    if math.cos(beta * math.pi / 2.0) < 0.0:
        raise ValueError("symbol real part must be nonnegative; beta out of range")
    omega = np.asarray(omega, dtype=float)
    phase = beta * math.pi / 2.0 * np.sign(omega)
    return -np.abs(omega) ** beta * (np.cos(phase) + 1j * np.sin(phase))


def discrete_symbol(beta: float, dt: float, omega) -> np.ndarray:
    """Symbol ``-(1 - exp(-i omega dt))^beta / dt^beta`` of the GL matrix."""
    omega = np.asarray(omega, dtype=float)
    return -((1.0 - np.exp(-1j * omega * dt)) ** beta) / dt**beta


def symbol_error(beta: float, dt: float, omegas: Sequence[float]) -> float:
    """Max relative deviation of the discrete from the continuous symbol (0 at ``omega = 0``)."""
    omegas = np.asarray(omegas, dtype=float)
    if np.any(np.abs(omegas) * dt >= math.pi):
        raise ValueError("frequency beyond Nyquist: need |omega| dt < pi")
    cont = continuous_symbol(beta, omegas)
    disc = discrete_symbol(beta, dt, omegas)
    nz = omegas != 0.0
    if not np.any(nz):
        return 0.0
    return float(np.max(np.abs(disc[nz] - cont[nz]) / np.abs(cont[nz])))
