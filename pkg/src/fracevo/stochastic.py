"""Additive fractional noise: stochastic convolution, admissibility, shifted solves.

The noisy equation ``d^beta (X - x) + A(t, X) = d^gamma int_0^t B dW`` is solved
by subtracting ``F(t) = int_0^t (t - s)^{beta - gamma} B(s) dW(s) / Gamma(1 + beta - gamma)``
and solving the deterministic problem for ``u = X - F`` with ``A(t, u + F(t))``.

Gaussian increments come from numpy's Philox counter-based generator
(``Generator(Philox(seed)).standard_normal``), so a seed fixes a path on
every platform numpy supports.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .kernels import causal_convolve
from .stepper import NonConvergence, ProblemSpec, SolverConfig, TrajectoryRecord, solve_deterministic


class Regularity(str, enum.Enum):
    BOUNDED = "bounded"
    SQUARE_INTEGRABLE = "square_integrable"


@dataclass(frozen=True)
class NoiseSpec:
    """Noise ``B`` mapping ``R^m`` driving modes to the state space.

    ``B`` is an ``(n, m)`` matrix, or an ``(n_steps + 1, n, m)`` array sampled
    on the time grid.
    """

    gamma: float
    B: np.ndarray
    regularity: Regularity = Regularity.BOUNDED

    def __post_init__(self):
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float))
        object.__setattr__(self, "regularity", Regularity(self.regularity))
        if self.B.ndim not in (2, 3):
            raise ValueError("B must be an (n, m) matrix or an (n_steps+1, n, m) array")

    @property
    def n_modes(self) -> int:
        return self.B.shape[-1]

    @property
    def n_dof(self) -> int:
        return self.B.shape[-2]

    def at(self, j: int) -> np.ndarray:
        return self.B if self.B.ndim == 2 else self.B[j]


def validate_noise(beta: float, noise: NoiseSpec) -> Optional[str]:
    """``None`` when ``(beta, gamma, regularity)`` is admissible, else the violated condition."""
    g = noise.gamma
    if not 0.0 < g <= 1.0:
        return f"gamma in (0, 1] violated: gamma={g}"
    if noise.regularity is Regularity.BOUNDED:
        # the exponent test mirrors convolution_variance so acceptance implies a finite variance
        if not (g < beta + 0.5 and 2.0 * (beta - g) > -1.0):
            return f"gamma < beta + 1/2 violated: gamma={g} >= beta + 1/2 = {beta + 0.5}"
        return None
    if not g <= beta:
        return f"gamma <= beta violated for square-integrable B: gamma={g} > beta={beta}"
    return None


def require_admissible(beta: float, noise: NoiseSpec) -> None:
    reason = validate_noise(beta, noise)
    if reason is not None:
        raise ValueError(reason)


def convolution_weights(beta: float, gamma: float, dt: float, n_steps: int) -> np.ndarray:
    """Cell averages of ``(t_n - s)^{beta - gamma}``: entry ``m - 1`` covers ``[t_{n-m}, t_{n-m+1}]``."""
    e = beta - gamma
    m = np.arange(n_steps + 1, dtype=float)
    return dt**e * np.diff(m ** (e + 1.0)) / (e + 1.0)


def convolution_variance(beta: float, gamma: float, t: float, hs_norm_sq: float = 1.0) -> float:
    """``E|F(t)|^2`` for constant ``B``: ``|B|_HS^2 t^{2e+1} / ((2e + 1) Gamma(1 + e)^2)``, ``e = beta - gamma``."""
    e = beta - gamma
    if 2.0 * e <= -1.0:
        return math.inf
    return hs_norm_sq * t ** (2.0 * e + 1.0) / ((2.0 * e + 1.0) * math.gamma(1.0 + e) ** 2)


def gaussian_increments(seed: int, n_steps: int, n_modes: int, dt: float) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    return math.sqrt(dt) * rng.standard_normal((n_steps, n_modes))


def fractional_convolution_path(noise: NoiseSpec, beta: float, dt: float, n_steps: int,
                                seed: int, increments: Optional[np.ndarray] = None) -> np.ndarray:
    """Discrete ``F(t_0), ..., F(t_N)`` driven by i.i.d. ``N(0, dt I_m)`` increments.

    ``F(t_n)`` only uses increments ``dW_0 .. dW_{n-1}``; ``F(0) = 0``.
    """
    require_admissible(beta, noise)
    dw = gaussian_increments(seed, n_steps, noise.n_modes, dt) if increments is None else increments
    if noise.B.ndim == 2:
        y = dw @ noise.B.T
    else:
        y = np.einsum("jnm,jm->jn", noise.B[:n_steps], dw)
    k = convolution_weights(beta, noise.gamma, dt, n_steps)
    out = np.zeros((n_steps + 1, noise.n_dof))
    if n_steps:
        out[1:] = causal_convolve(k, y) / math.gamma(1.0 + beta - noise.gamma)
    return out


def solve_spde(problem: ProblemSpec, noise: NoiseSpec, cfg: SolverConfig, seed: int,
               x0_sampler: Optional[Callable[[np.random.Generator], np.ndarray]] = None) -> TrajectoryRecord:
    """One path of ``X = u + F`` where ``u`` solves the problem with ``A(t, u + F(t))``.

    ``x0_sampler`` draws a random initial state from a generator seeded by
    ``seed`` (independent of the noise stream).
    """
    require_admissible(problem.beta, noise)
    if noise.n_dof != problem.triple.n:
        raise ValueError("noise B rows must match the state dimension")
    n_steps = problem.n_steps(cfg.dt)
    if x0_sampler is not None:
        rng = np.random.Generator(np.random.Philox(seed).jumped())
        problem = replace(problem, x0=x0_sampler(rng))
    F = fractional_convolution_path(noise, problem.beta, cfg.dt, n_steps, seed)
    try:
        rec = solve_deterministic(problem, cfg, shift=F)
    except NonConvergence as exc:
        raise NonConvergence(f"path seed {seed}: {exc}", exc.residual, exc.node) from exc
    states = rec.states + F
    triple = problem.triple
    return TrajectoryRecord(rec.times, states, rec.newton_iters, rec.step_residual,
                            np.array([triple.h_norm(s) for s in states]),
                            np.array([triple.v_norm(s) for s in states]),
                            rec.beta, rec.dt, rec.memory_increment)


@dataclass
class PathStatistics:
    times: np.ndarray
    n_paths: int
    n_ok: int
    n_fail: int
    seed: int
    mean_state: np.ndarray
    mean_norm_h: np.ndarray
    var_norm_h: np.ndarray
    mean_functional: np.ndarray
    var_functional: np.ndarray
    stderr_functional: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={self.seed} n_paths={self.n_paths}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "mean_normH", "var_functional", "stderr", "n_ok", "n_fail"])
        for t, m, v, s in zip(self.times, self.mean_norm_h, self.var_functional, self.stderr_functional):
            writer.writerow([repr(float(t)), repr(float(m)), repr(float(v)), repr(float(s)),
                             self.n_ok, self.n_fail])
        return buf.getvalue()


def monte_carlo_moments(problem: ProblemSpec, noise: NoiseSpec, cfg: SolverConfig, n_paths: int,
                        base_seed: int, functional: Optional[np.ndarray] = None,
                        threads: int = 1) -> PathStatistics:
    """Moments over ``n_paths`` paths with seeds ``base_seed + i``.

    ``functional`` is a weight vector ``phi``; the tracked functional is
    ``phi . X(t)``. It defaults to the grid-weighted sum ``h * sum X``.
    Paths that fail to converge are counted and excluded.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2 for a variance")
    n = problem.triple.n
    phi = np.full(n, problem.triple.grid.h) if functional is None else np.asarray(functional, float)

    def one(i):
        try:
            rec = solve_spde(problem, noise, cfg, base_seed + i)
        except NonConvergence:
            return None
        return rec.times, rec.states, rec.norm_h

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_paths)))
    else:
        results = [one(i) for i in range(n_paths)]

    ok = [r for r in results if r is not None]
    n_ok = len(ok)
    if n_ok < 2:
        raise RuntimeError(f"only {n_ok} of {n_paths} paths converged")
    times = ok[0][0]
    states = np.stack([r[1] for r in ok])
    norms = np.stack([r[2] for r in ok])
    fvals = states @ phi
    var_f = fvals.var(axis=0, ddof=1)
    return PathStatistics(times, n_paths, n_ok, n_paths - n_ok, base_seed,
                          states.mean(axis=0), norms.mean(axis=0), norms.var(axis=0, ddof=1),
                          fvals.mean(axis=0), var_f, np.sqrt(var_f / n_ok))
