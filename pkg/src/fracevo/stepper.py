"""Implicit time-fractional marching for ``d^beta (u - x) + A(t, u) = f``.

Each time node reduces to one resolvent equation ``u + c A(u) = r`` whose
right-hand side carries the memory of all previous nodes.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .kernels import Scheme
from .operators import Operator, TripleSpec


class NonConvergence(RuntimeError):
    """Newton iteration for a resolvent step did not reach tolerance."""

    def __init__(self, message: str, residual: float, node: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.node = node


@dataclass(frozen=True)
class SolverConfig:
    scheme: Scheme = Scheme.L1
    dt: float = 1.0 / 128
    nonlinear_tol: float = 1e-10
    max_newton: int = 50
    damping: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_newton < 1:
            raise ValueError("max_newton must be >= 1")


@dataclass(frozen=True)
class ProblemSpec:
    """Deterministic problem on ``[0, T]``.

    ``forcing`` is either ``None`` (zero), a callable ``f(t) -> vector``, or an
    array of shape ``(n_steps + 1, n)`` sampled on the solver grid.
    """

    beta: float
    T: float
    x0: np.ndarray
    op: Operator
    triple: TripleSpec
    forcing: object = None

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        x0 = self.triple.grid.check(self.x0)
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        object.__setattr__(self, "x0", x0)
        self.op.check_triple(self.triple)

    def n_steps(self, dt: float) -> int:
        n = self.T / dt
        steps = int(round(n))
        if abs(n - steps) > 1e-9 * max(1.0, n):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={dt}")
        return steps

    def forcing_at(self, n: int, t: float) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(self.triple.n)
        if callable(self.forcing):
            return np.asarray(self.forcing(t), dtype=float)
        return np.asarray(self.forcing[n], dtype=float)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    newton_iters: np.ndarray
    step_residual: np.ndarray
    norm_h: np.ndarray
    norm_v: np.ndarray
    beta: float
    dt: float
    # max increment of the discrete g_{1-beta} * (u - x) history, a continuity diagnostic
    memory_increment: float = float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "norm_H", "norm_V", "newton_iters", "residual"])
        for row in zip(self.times, self.norm_h, self.norm_v, self.newton_iters, self.step_residual):
            writer.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                             int(row[3]), repr(float(row[4]))])
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        """Little-endian dump: int64 n_nodes, int64 n_dof, float64 beta, float64 dt, then states row-major."""
        n_nodes, n_dof = self.states.shape
        header = struct.pack("<qqdd", n_nodes, n_dof, self.beta, self.dt)
        return header + np.ascontiguousarray(self.states, dtype="<f8").tobytes()

    @staticmethod
    def read_states(blob: bytes) -> tuple[int, int, float, float, np.ndarray]:
        n_nodes, n_dof, beta, dt = struct.unpack_from("<qqdd", blob)
        states = np.frombuffer(blob, dtype="<f8", offset=32).reshape(n_nodes, n_dof)
        return n_nodes, n_dof, beta, dt, states


def resolvent_step(op: Operator, triple: TripleSpec, c: float, r, t: float = 0.0,
                   cfg: SolverConfig = SolverConfig(), guess=None,
                   shift: Optional[np.ndarray] = None) -> tuple[np.ndarray, int, float]:
    """Solve ``u + c A(t, u + shift) = r`` by damped Newton.

    Returns ``(u, iterations, residual)`` with the residual measured in the
    H-norm of ``triple``. Falls back to a backtracked residual-descent step
    when the linearized system cannot be solved.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    r = np.asarray(r, dtype=float)
    s = np.zeros_like(r) if shift is None else shift
    # w = u + shift solves w + c A(w) = r + shift
    rs = r + s
    w = (rs.copy() if guess is None else np.asarray(guess, dtype=float) + s)

    def residual(w):
        return w + c * op.apply(triple, w, t) - rs

    def hnorm(x):
        return triple.h_norm(x)

    res = residual(w)
    rn = hnorm(res)
    it = 0
    while rn > cfg.nonlinear_tol and it < cfg.max_newton:
        it += 1
        try:
            step = op.solve_shifted(triple, w, c, -res)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError("non-finite Newton step")
        except (np.linalg.LinAlgError, ValueError):
            step = -res
        lam = cfg.damping
        while True:
            trial = w + lam * step
            tres = residual(trial)
            tn = hnorm(tres)
            if tn < rn or lam < 1e-8:
                break
            lam *= 0.5
        w, res, rn = trial, tres, tn
    if rn > cfg.nonlinear_tol:
        raise NonConvergence(f"resolvent step stalled at residual {rn:.3e} after {it} iterations", rn)
    return w - s, it, rn


def _history_weights(problem: ProblemSpec, cfg: SolverConfig, n_steps: int):
    scheme = cfg.scheme
    if problem.beta == 1.0:
        scheme = Scheme.GL
    mw = kernels.MemoryWeights.build(scheme, problem.beta, n_steps, cfg.dt)
    return mw


def solve_deterministic(problem: ProblemSpec, cfg: SolverConfig = SolverConfig(),
                        shift: Optional[np.ndarray] = None) -> TrajectoryRecord:
    """March the implicit scheme from ``u_0 = x0`` to ``T``.

    L1: ``a sum_{j<n} b_{n-1-j} (u_{j+1} - u_j) + A(t_n, u_n) = f(t_n)`` with
    ``a = dt^-beta / Gamma(2 - beta)``. GL (and every beta = 1 run):
    ``dt^-beta sum_k w_k (u_{n-k} - x0) + A(t_n, u_n) = f(t_n)``.

    ``shift`` (shape ``(n_steps + 1, n)``) replaces ``A(t, u)`` by
    ``A(t, u + shift_n)``; this is how the stochastic convolution enters.
    """
    dt = cfg.dt
    n_steps = problem.n_steps(dt)
    triple, op = problem.triple, problem.op
    x0 = problem.x0
    mw = _history_weights(problem, cfg, n_steps)
    coeffs = mw.coeffs
    c = 1.0 / mw.scale

    n = triple.n
    states = np.empty((n_steps + 1, n))
    states[0] = x0
    iters = np.zeros(n_steps + 1, dtype=int)
    resid = np.zeros(n_steps + 1)
    incr = np.zeros((n_steps, n))
    times = dt * np.arange(n_steps + 1)

    for k in range(1, n_steps + 1):
        fk = problem.forcing_at(k, times[k])
        if mw.scheme is Scheme.L1:
            # sum_{j < k-1} b_{k-1-j} (u_{j+1} - u_j)
            hist = coeffs[k - 1:0:-1] @ incr[:k - 1] if k > 1 else 0.0
            r = states[k - 1] - hist + c * fk
        else:
            dev = states[k - 1::-1] - x0  # u_{k-1} - x0, ..., u_0 - x0
            r = x0 - coeffs[1:k + 1] @ dev + c * fk
        sk = None if shift is None else shift[k]
        try:
            u, it, rn = resolvent_step(op, triple, c, r, times[k], cfg,
                                       guess=states[k - 1], shift=sk)
        except NonConvergence as exc:
            raise NonConvergence(f"node {k}: {exc}", exc.residual, node=k) from exc
        states[k] = u
        incr[k - 1] = u - states[k - 1]
        iters[k] = it
        resid[k] = rn

    norm_h = np.array([triple.h_norm(s) for s in states])
    norm_v = np.array([triple.v_norm(s) for s in states])
    rec = TrajectoryRecord(times, states, iters, resid, norm_h, norm_v, problem.beta, dt)
    if problem.beta < 1.0:
        mem = kernels.fractional_integral(np.vstack([np.zeros(n), states[1:] - x0]), 1.0 - problem.beta, dt)
        rec.memory_increment = float(max((triple.h_norm(d) for d in np.diff(mem, axis=0)), default=0.0))
    return rec


def integral_equation_residual(trajectory: TrajectoryRecord, problem: ProblemSpec) -> float:
    """``max_n |u_n - x0 + (g_beta * A(u))_n - (g_beta * f)_n|_H``.

    Cross-checks the differential form solved by the stepper against the
    integral form, using the product-rectangle quadrature of :mod:`kernels`.
    """
    triple, op = problem.triple, problem.op
    states, times, dt = trajectory.states, trajectory.times, trajectory.dt
    a = np.array([op.apply(triple, s, t) for s, t in zip(states, times)])
    f = np.array([problem.forcing_at(k, t) for k, t in enumerate(times)])
    ia = kernels.fractional_integral(a, problem.beta, dt)
    fi = kernels.fractional_integral(f, problem.beta, dt)
    res = states - problem.x0 + ia - fi
    return float(max(triple.h_norm(r) for r in res))


@dataclass
class OrderEstimate:
    order: float
    dts: np.ndarray
    errors: np.ndarray
    monotone: bool


def estimate_order(problem: ProblemSpec, dts: Sequence[float], cfg: SolverConfig = SolverConfig(),
                   reference: Optional[Callable[[float], np.ndarray] | np.ndarray] = None) -> OrderEstimate:
    """Least-squares slope of ``log |u_N - u_ref|_H`` against ``log dt`` at ``t = T``.

    ``reference`` is the exact final state (array) or a callable of ``T``.
    Without one, the solution at ``min(dts) / 4`` serves as the reference
    (self-convergence).
    """
    dts = np.asarray(sorted(dts, reverse=True), dtype=float)
    if dts.size < 3:
        raise ValueError("need at least three step sizes")

    def final(dt):
        c = SolverConfig(cfg.scheme, dt, cfg.nonlinear_tol, cfg.max_newton, cfg.damping)
        return solve_deterministic(problem, c).states[-1]

    if reference is None:
        ref = final(dts[-1] / 4.0)
    elif callable(reference):
        ref = np.asarray(reference(problem.T), dtype=float)
    else:
        ref = np.asarray(reference, dtype=float)
    errors = np.array([problem.triple.h_norm(final(dt) - ref) for dt in dts])
    slope = np.polyfit(np.log(dts), np.log(errors), 1)[0]
    return OrderEstimate(float(slope), dts, errors, bool(np.all(np.diff(errors) < 0)))


@dataclass
class DecayEstimate:
    exponent: float
    algebraic: bool
    """False when the log-log slope steepens across the window (exponential decay)."""


def estimate_decay_exponent(trajectory: TrajectoryRecord, window: float = 0.5) -> DecayEstimate:
    """Slope of ``log |u|_H`` against ``log t`` over the last ``window`` fraction of nodes."""
    if not 0.0 < window <= 1.0:
        raise ValueError("window must lie in (0, 1]")
    n = trajectory.times.size
    start = max(1, int(round((1.0 - window) * (n - 1))))
    t = trajectory.times[start:]
    y = trajectory.norm_h[start:]
    if t.size < 4 or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("decay exponent undefined: zero or degenerate norm on the window")
    lt, ly = np.log(t), np.log(y)
    slope = float(np.polyfit(lt, ly, 1)[0])
    half = t.size // 2
    s1 = np.polyfit(lt[:half], ly[:half], 1)[0]
    s2 = np.polyfit(lt[half:], ly[half:], 1)[0]
    # algebraic decay keeps a steady slope; exponential decay steepens markedly
    algebraic = bool(abs(s2 - s1) <= 0.25 * max(abs(slope), 1e-12) + 0.05)
    return DecayEstimate(slope, algebraic)
