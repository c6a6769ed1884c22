"""Fractional-calculus primitives on uniform time grids.

Contains the power kernels ``g_beta(t) = t**(beta - 1) / Gamma(beta)``, the
Grünwald-Letnikov and L1 memory weights, a product-rectangle quadrature for
the Riemann-Liouville integral, discrete Caputo derivatives, a real-argument
Mittag-Leffler evaluator and an exact sampler for one-sided stable
subordinators.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special


class Scheme(str, enum.Enum):
    """Discretization of the fractional time derivative."""

    L1 = "L1"
    GL = "GL"


def _check_beta(beta: float, upper_closed: bool = True) -> None:
    ok = 0.0 < beta <= 1.0 if upper_closed else 0.0 < beta < 1.0
    if not ok:
        interval = "(0, 1]" if upper_closed else "(0, 1)"
        raise ValueError(f"beta must lie in {interval}, got {beta}")


def _check_dt(dt: float) -> None:
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")


def g_kernel(beta: float, t) -> np.ndarray:
    """Riemann-Liouville kernel ``t**(beta-1)/Gamma(beta)``; ``inf`` at ``t=0`` for beta < 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.power(t, beta - 1.0) / math.gamma(beta)


def grunwald_weights(beta: float, n: int) -> np.ndarray:
    """Grünwald-Letnikov weights ``w_k = (-1)**k * binom(beta, k)``, ``k = 0..n``.

    Uses the recurrence ``w_k = w_{k-1} * (1 - (beta + 1) / k)``.
    """
    _check_beta(beta)
    if n < 0:
        raise ValueError("n must be nonnegative")
    w = np.empty(n + 1)
    w[0] = 1.0
    for k in range(1, n + 1):
        w[k] = w[k - 1] * (1.0 - (beta + 1.0) / k)
    return w


def l1_coefficients(beta: float, n: int) -> np.ndarray:
    """L1 coefficients ``b_j = (j+1)**(1-beta) - j**(1-beta)``, ``j = 0..n``.

    ``beta = 1`` is rejected: the coefficients degenerate, use the GL scheme.
    """
    if beta == 1.0:
        raise ValueError("L1 coefficients degenerate at beta=1; use the GL scheme")
    _check_beta(beta, upper_closed=False)
    if n < 0:
        raise ValueError("n must be nonnegative")
    j = np.arange(n + 2, dtype=float)
    p = np.power(j, 1.0 - beta)
    return np.diff(p)


def rl_integral_weights(beta: float, n: int, dt: float) -> np.ndarray:
    """Product-rectangle weights for ``g_beta * f`` with right-endpoint sampling.

    ``(I^beta f)(t_n) ~ sum_{k=0}^{n-1} q_k f(t_{n-k})`` where ``q_k`` is the exact
    integral of ``g_beta(t_n - s)`` over the k-th cell counted back from ``t_n``.
    """
    j = np.arange(n + 1, dtype=float)
    return dt**beta / math.gamma(1.0 + beta) * np.diff(np.power(j, beta))


@dataclass(frozen=True)
class MemoryWeights:
    """Convolution coefficients of a discrete fractional derivative."""

    scheme: Scheme
    beta: float
    dt: float
    coeffs: np.ndarray

    @classmethod
    def build(cls, scheme: Scheme | str, beta: float, n: int, dt: float) -> "MemoryWeights":
        scheme = Scheme(scheme)
        _check_dt(dt)
        if scheme is Scheme.L1:
            coeffs = l1_coefficients(beta, n)
        else:
            coeffs = grunwald_weights(beta, n)
        return cls(scheme, beta, dt, coeffs)

    @property
    def scale(self) -> float:
        """Prefactor multiplying the weighted history sum."""
        if self.scheme is Scheme.L1:
            return self.dt ** (-self.beta) / math.gamma(2.0 - self.beta)
        return self.dt ** (-self.beta)


def causal_convolve(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``y_n = sum_{k<=n} weights[k] * x[n-k]`` along axis 0."""
    n = x.shape[0]
    if x.ndim == 1:
        return np.convolve(weights[:n], x)[:n]
    out = np.empty_like(x, dtype=float)
    for col in range(x.shape[1]):
        out[:, col] = np.convolve(weights[:n], x[:, col])[:n]
    return out


def fractional_integral(samples, beta: float, dt: float) -> np.ndarray:
    """Riemann-Liouville integral ``g_beta * f`` on the grid ``t_k = k*dt``.

    ``samples[0]`` (the value at ``t=0``) never enters the right-endpoint rule,
    so it may be ``inf`` as for a sampled weakly singular kernel. Row 0 of the
    result is zero.
    """
    _check_beta(beta)
    _check_dt(dt)
    f = np.asarray(samples, dtype=float)
    n = f.shape[0] - 1
    out = np.zeros_like(f, dtype=float)
    if n < 1:
        return out
    q = rl_integral_weights(beta, n, dt)
    # out[m] = sum_{k=0}^{m-1} q_k f[m-k] for m >= 1
    out[1:] = causal_convolve(q, f[1:])
    return out


def caputo_derivative(samples, x0, beta: float, dt: float,
                      scheme: Scheme | str = Scheme.L1) -> np.ndarray:
    """Discrete ``d^beta (u - x0)`` on the grid ``t_k = k*dt``.

    ``beta = 1`` is always evaluated by the backward difference. With the L1
    scheme a mismatch ``u[0] != x0`` contributes the Riemann-Liouville term
    ``(u[0] - x0) * g_{1-beta}(t_n)``. Row 0 of the L1 result is zero.
    """
    _check_beta(beta)
    _check_dt(dt)
    u = np.asarray(samples, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != u.shape[1:]:
        raise ValueError(f"x0 shape {x0.shape} does not match sample shape {u.shape[1:]}")
    n = u.shape[0] - 1
    scheme = Scheme(scheme)
    if beta == 1.0:
        scheme = Scheme.GL
    mw = MemoryWeights.build(scheme, beta, max(n, 0), dt)
    v = u - x0
    if scheme is Scheme.GL:
        return mw.scale * causal_convolve(mw.coeffs, v)
    out = np.zeros_like(u)
    if n < 1:
        return out
    out[1:] = causal_convolve(mw.coeffs, np.diff(v, axis=0))
    jump = (1.0 - beta) * np.power(np.arange(1, n + 1, dtype=float), -beta)
    out[1:] += np.multiply.outer(jump, v[0])
    return mw.scale * out


# --- Mittag-Leffler -------------------------------------------------------

_ML_SERIES_RADIUS = 10.0
_ML_CANCELLATION_LIMIT = 1e5


def _ml_series(beta: float, z: float) -> tuple[float, float]:
    """Power series; returns (value, largest |term| / |value|)."""
    if z == 0.0:
        return 1.0, 1.0
    logz = math.log(abs(z))
    total = 0.0
    biggest = 0.0
    prev = -math.inf
    for k in range(100000):
        logterm = k * logz - math.lgamma(beta * k + 1.0)
        if logterm > 700.0:
            raise OverflowError(f"Mittag-Leffler series overflows at z={z}")
        term = math.exp(logterm)
        if z < 0 and k % 2:
            term = -term
        total += term
        biggest = max(biggest, abs(term))
        if logterm < prev and abs(term) < 1e-17 * max(abs(total), 1e-300):
            break
        prev = logterm
    return total, biggest / max(abs(total), 1e-300)


def _ml_asymptotic(beta: float, z: float) -> tuple[float, float]:
    """Algebraic asymptotic tail ``-sum z**-k / Gamma(1 - beta*k)``, optimally truncated.

    For ``beta in (1, 2)`` the two oscillating exponential contributions on the
    negative axis are added. Returns (value, estimated relative error).
    """
    total = 0.0
    last = math.inf
    err = math.inf
    logz = math.log(-z)
    for k in range(1, 400):
        arg = 1.0 - beta * k
        if arg <= 0.0 and arg == math.floor(arg):
            continue  # 1/Gamma vanishes at the poles
        mag = math.exp(-math.lgamma(arg) - k * logz)
        if mag > last:
            break
        total += special.gammasgn(arg) * (-1.0) ** (k + 1) * mag
        last = err = mag
    if beta > 1.0:
        x = -z
        root = x ** (1.0 / beta) * complex(math.cos(math.pi / beta), math.sin(math.pi / beta))
        total += 2.0 / beta * (np.exp(root)).real
    scale = abs(total) if total != 0.0 else 1.0
    return total, (err if math.isfinite(err) else 0.0) / scale


def _ml_laplace(beta: float, z: float) -> float:
    """Laplace-type integral for ``z < 0`` and ``beta in (0, 1) U (1, 2)``.

    ``E_beta(-t**beta) = int_0^inf exp(-r t) K(r) dr + osc`` with
    ``K(r) = sin(beta pi) r**(beta-1) / (pi (r**(2 beta) + 2 r**beta cos(beta pi) + 1))``
    and ``osc = (2/beta) Re exp(t exp(i pi/beta))`` for ``beta > 1`` (zero otherwise).
    Substituting ``s = r**beta`` removes the endpoint singularity.
    """
    t = (-z) ** (1.0 / beta)
    sn, cs = math.sin(beta * math.pi), math.cos(beta * math.pi)

    def integrand(s):
        return math.exp(-(s ** (1.0 / beta)) * t) / (s * s + 2.0 * s * cs + 1.0)

    head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(integrand, 1.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    value = sn / (math.pi * beta) * (head + tail)
    if beta > 1.0:
        root = t * complex(math.cos(math.pi / beta), math.sin(math.pi / beta))
        value += 2.0 / beta * (np.exp(root)).real
    return value


def mittag_leffler(beta: float, z: float) -> float:
    """One-parameter Mittag-Leffler function ``E_beta(z)`` for real ``z``.

    Power series wherever its estimated cancellation error stays below
    ``1e-11`` (always for ``z >= 0``), asymptotic
    expansion for ``z < -10`` when that is more accurate. When neither is
    accurate enough, a Laplace-type integral representation is evaluated by
    adaptive quadrature.

    Raises
    ------
    OverflowError
        If ``z`` is so large and positive that the result exceeds float range.
    """
    if not 0.0 < beta <= 2.0:
        raise ValueError(f"beta must lie in (0, 2], got {beta}")
    z = float(z)
    if beta == 1.0:
        if z > 709.0:
            raise OverflowError(f"E_1({z}) overflows")
        return math.exp(z)
    if beta == 2.0:
        if z < 0:
            return math.cos(math.sqrt(-z))
        if math.sqrt(z) > 709.0:
            raise OverflowError(f"E_2({z}) overflows")
        return math.cosh(math.sqrt(z))
    if z >= 0.0:
        if z ** (1.0 / beta) > 705.0:
            raise OverflowError(f"E_{beta}({z}) overflows")
        return _ml_series(beta, z)[0]
    candidates = []
    try:
        value, cancellation = _ml_series(beta, z)
        # lgamma roundoff in each term is amplified too, so allow ~100 ulp per unit of cancellation
        candidates.append((cancellation * 1e-14, value))
    except OverflowError:
        pass
    if z < -_ML_SERIES_RADIUS:
        value, relerr = _ml_asymptotic(beta, z)
        candidates.append((relerr, value))
    if candidates:
        err, value = min(candidates, key=lambda c: c[0])
        if err < 1e-11:
            return value
    return _ml_laplace(beta, z)


# --- one-sided stable subordinator -----------------------------------------

@dataclass(frozen=True)
class SubordinatorSample:
    """I.i.d. draws of ``S_t`` with ``E exp(-lam S_t) = exp(-t lam**beta)``."""

    beta: float
    t: float
    values: np.ndarray

    def laplace_transform(self, lam: float) -> tuple[float, float]:
        """Empirical ``E exp(-lam S_t)`` and its standard error."""
        e = np.exp(-lam * self.values)
        return float(e.mean()), float(e.std(ddof=1) / math.sqrt(e.size))


def sample_stable_subordinator(beta: float, t: float, count: int, seed: int) -> SubordinatorSample:
    """Kanter's exact representation of a positive ``beta``-stable variable.

    ``S_1 = (A(U) / E)**((1 - beta) / beta)`` with ``U`` uniform on (0, 1),
    ``E`` standard exponential and
    ``A(u) = sin(beta pi u)**(beta/(1-beta)) sin((1-beta) pi u) / sin(pi u)**(1/(1-beta))``;
    self-similarity gives ``S_t = t**(1/beta) S_1``.
    """
    _check_beta(beta, upper_closed=False)
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, count)
    while np.any(u == 0.0):
        u[u == 0.0] = rng.uniform(0.0, 1.0, int(np.sum(u == 0.0)))
    e = rng.standard_exponential(count)
    # log form keeps small beta from underflowing
    log_a = (beta / (1.0 - beta) * np.log(np.sin(beta * np.pi * u))
             + np.log(np.sin((1.0 - beta) * np.pi * u))
             - np.log(np.sin(np.pi * u)) / (1.0 - beta))
    log_s = (1.0 - beta) / beta * (log_a - np.log(e)) + math.log(t) / beta
    return SubordinatorSample(beta, t, np.exp(log_s))
