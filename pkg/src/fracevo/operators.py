"""Discrete Gelfand triples on a 1D Dirichlet grid and monotone spatial operators.

Every operator here returns the *monotone* representative, i.e. the term that
enters as ``+A(u)`` on the left of ``d^beta (u - x) + A(u) = f``. For the
porous medium equation this is ``-Delta Psi(u)``, for the p-Laplacian
``-div(|grad u|^{p-2} grad u)``.

Vectors of interior values represent both states and dual elements; the
triple decides the pairings:

* ``PME``: ``V = L^p``, ``H = H^{-1}`` with ``<u, v>_H = h u . K^{-1} v``
  where ``K`` is the (possibly fractional) Dirichlet Laplacian.
* ``PLAPLACE``: ``V = W^{1,p}_0`` normed by ``|grad u|_{L^p}``, ``H = L^2``.

In both cases the ``V*``-``V`` pairing of a dual vector ``a`` with ``v``
coincides with ``<a, v>_H``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import fft, linalg, optimize

# regularization of |grad u|^{p-2} inside Jacobians only
JACOBIAN_EPS = 1e-12


@dataclass(frozen=True)
class Grid1D:
    """Uniform interior grid on ``(0, length)`` with homogeneous Dirichlet ends."""

    n_interior: int
    length: float = 1.0

    def __post_init__(self):
        if self.n_interior < 1:
            raise ValueError("n_interior must be at least 1")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def h(self) -> float:
        return self.length / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_interior + 1)

    def laplacian_eigenvalues(self) -> np.ndarray:
        """Eigenvalues ``(2 - 2 cos(k pi h / L)) / h^2`` of the positive Dirichlet matrix."""
        k = np.arange(1, self.n_interior + 1)
        return (2.0 - 2.0 * np.cos(k * np.pi * self.h / self.length)) / self.h**2

    def sine_mode(self, k: int) -> np.ndarray:
        return np.sin(k * np.pi * self.nodes / self.length)

    def laplacian_matrix(self) -> np.ndarray:
        n, h2 = self.n_interior, self.h**2
        return (2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h2

    def check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_interior,):
            raise ValueError(f"expected vector of length {self.n_interior}, got shape {u.shape}")
        return u


def apply_dirichlet_laplacian(grid: Grid1D, u) -> np.ndarray:
    """``L u`` with ``L = tridiag(-1, 2, -1) / h^2`` (positive definite)."""
    u = grid.check(u)
    padded = np.concatenate(([0.0], u, [0.0]))
    return (2.0 * u - padded[:-2] - padded[2:]) / grid.h**2


def _solve_sym_tridiagonal(ab: np.ndarray, rhs) -> np.ndarray:
    # LAPACK ptsv inside solveh_banded mishandles 1x1 systems
    if ab.shape[1] == 1:
        return np.asarray(rhs, dtype=float) / ab[1, 0]
    return linalg.solveh_banded(ab, rhs)


def invert_dirichlet_laplacian(grid: Grid1D, v) -> np.ndarray:
    """Solve ``L w = v`` for the tridiagonal Dirichlet matrix in O(n)."""
    v = grid.check(v)
    n, h2 = grid.n_interior, grid.h**2
    ab = np.empty((2, n))
    ab[0, :] = -1.0 / h2
    ab[1, :] = 2.0 / h2
    return _solve_sym_tridiagonal(ab, v)


def spectral_fractional_laplacian(grid: Grid1D, alpha_frac: float, u, inverse: bool = False) -> np.ndarray:
    """``(-Delta_h)^alpha u`` via the discrete sine transform.

    The DST-I diagonalizes the Dirichlet matrix; eigenvalues are raised to
    ``alpha_frac`` (or ``-alpha_frac`` when ``inverse``).
    """
    if not 0.0 < alpha_frac <= 1.0:
        raise ValueError(f"alpha_frac must lie in (0, 1], got {alpha_frac}")
    u = grid.check(u)
    power = -alpha_frac if inverse else alpha_frac
    coeffs = fft.dst(u, type=1, norm="ortho")
    return fft.idst(coeffs * grid.laplacian_eigenvalues() ** power, type=1, norm="ortho")


def _forward_diff(grid: Grid1D, u: np.ndarray) -> np.ndarray:
    """Edge gradients, ``n+1`` values, ghost zeros at both ends."""
    return np.diff(np.concatenate(([0.0], u, [0.0]))) / grid.h


def _diff_transpose(grid: Grid1D, q: np.ndarray) -> np.ndarray:
    """Adjoint of ``_forward_diff`` in the h-weighted pairings."""
    return -np.diff(q) / grid.h


class TripleKind(str, enum.Enum):
    PME = "pme"
    PLAPLACE = "plaplace"


@dataclass(frozen=True)
class TripleSpec:
    """A discretized Gelfand triple ``V ⊆ H ⊆ V*``.

    ``alpha_frac`` selects the fractional Laplacian defining the ``H^{-alpha}``
    pivot of the porous-medium triple; it must match the operator's.
    """

    grid: Grid1D
    kind: TripleKind
    p: float = 2.0
    alpha_frac: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", TripleKind(self.kind))
        if self.p < 2.0:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not 0.0 < self.alpha_frac <= 1.0:
            raise ValueError("alpha_frac must lie in (0, 1]")
        if self.kind is TripleKind.PLAPLACE and self.alpha_frac != 1.0:
            raise ValueError("alpha_frac only applies to the porous-medium triple")

    @property
    def n(self) -> int:
        return self.grid.n_interior

    @property
    def conjugate(self) -> float:
        return self.p / (self.p - 1.0)

    def _lp(self, x: np.ndarray, q: float) -> float:
        return float((self.grid.h * np.sum(np.abs(x) ** q)) ** (1.0 / q))

    def riesz(self, a) -> np.ndarray:
        """The function representing dual vector ``a`` in the pivot pairing."""
        a = self.grid.check(a)
        if self.kind is TripleKind.PLAPLACE:
            return a
        if self.alpha_frac == 1.0:
            return invert_dirichlet_laplacian(self.grid, a)
        return spectral_fractional_laplacian(self.grid, self.alpha_frac, a, inverse=True)

    def stiffness(self, u) -> np.ndarray:
        """Inverse of :meth:`riesz`."""
        u = self.grid.check(u)
        if self.kind is TripleKind.PLAPLACE:
            return u
        if self.alpha_frac == 1.0:
            return apply_dirichlet_laplacian(self.grid, u)
        return spectral_fractional_laplacian(self.grid, self.alpha_frac, u)

    def h_inner(self, u, v) -> float:
        u = self.grid.check(u)
        return float(self.grid.h * np.dot(u, self.riesz(v)))

    def h_norm(self, u) -> float:
        return math.sqrt(max(self.h_inner(u, u), 0.0))

    def dual_pairing(self, a, v) -> float:
        """``V*<a, v>_V`` computed through the ``V*`` representative of ``a``."""
        v = self.grid.check(v)
        return float(self.grid.h * np.dot(self.riesz(a), v))

    def v_norm(self, u) -> float:
        u = self.grid.check(u)
        if self.kind is TripleKind.PME:
            return self._lp(u, self.p)
        return self._lp(_forward_diff(self.grid, u), self.p)

    def dual_norm(self, a) -> float:
        """Exact discrete ``V*`` norm.

        PME: ``|K^{-1} a|_{L^{p'}}``. PLAPLACE: write ``a = D^T y`` and minimize
        ``|y - c|_{L^{p'}}`` over constants ``c`` (the annihilator of the
        gradient range).
        """
        a = self.grid.check(a)
        q = self.conjugate
        if self.kind is TripleKind.PME:
            return self._lp(self.riesz(a), q)
        h = self.grid.h
        y = np.concatenate(([0.0], -h * np.cumsum(a)))
        if q == 2.0:
            return self._lp(y - y.mean(), 2.0)
        lo, hi = float(y.min()), float(y.max())
        if hi - lo == 0.0:
            return 0.0
        res = optimize.minimize_scalar(lambda c: np.sum(np.abs(y - c) ** q), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12 * (hi - lo + 1.0)})
        return self._lp(y - res.x, q)


# --- nonlinearities ------------------------------------------------------------

@dataclass(frozen=True)
class PowerPsi:
    """``Psi(s) = s |s|^{m-1}``; ``m = p - 1`` is the porous-medium case, ``m < 1`` fast diffusion."""

    m: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return s * np.abs(s) ** (self.m - 1.0)

    def derivative(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        if self.m < 1.0:
            s = s + JACOBIAN_EPS
        return self.m * s ** (self.m - 1.0)


@dataclass(frozen=True)
class TabulatedPsi:
    """Monotone ``Psi`` given by a table, linearly interpolated and extrapolated.

    The caller supplies the constants of the growth/coercivity bounds
    ``s Psi(s) >= c1 |s|^p - c2`` and ``|Psi(s)| <= c3 |s|^{p-1} + c4``; the
    structural verifier re-checks them by sampling.
    """

    s: np.ndarray
    values: np.ndarray
    c1: float
    c2: float
    c3: float
    c4: float

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.shape != v.shape or s.size < 2:
            raise ValueError("table must be two 1D arrays of equal length >= 2")
        if np.any(np.diff(s) <= 0) or np.any(np.diff(v) < 0):
            raise ValueError("Psi table must be strictly increasing in s and nondecreasing in value")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", v)

    def _slopes(self):
        d = np.diff(self.values) / np.diff(self.s)
        return d[0], d[-1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self._slopes()
        out = np.interp(x, self.s, self.values)
        out = np.where(x < self.s[0], self.values[0] + lo * (x - self.s[0]), out)
        return np.where(x > self.s[-1], self.values[-1] + hi * (x - self.s[-1]), out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        d = np.diff(self.values) / np.diff(self.s)
        idx = np.clip(np.searchsorted(self.s, x) - 1, 0, d.size - 1)
        return d[idx]


# --- operators -------------------------------------------------------------------

@dataclass(frozen=True)
class Constants:
    """Constants of the coercivity/growth conditions.

    ``<A v, v> >= delta |v|_V^alpha - g_coercive`` and
    ``|A v|_{V*} <= g_growth + C |v|_V^{alpha - 1}``.
    """

    delta: float
    alpha: float
    C: float
    g_coercive: float = 0.0
    g_growth: float = 0.0


@dataclass(frozen=True)
class PorousMedium:
    """``A(u) = (-Delta)^{alpha_frac} Psi(u)``; defaults to ``Psi(s) = s|s|^{p-2}``."""

    p: float
    alpha_frac: float = 1.0
    psi: Optional[Union[PowerPsi, TabulatedPsi]] = None

    def __post_init__(self):
        if self.p < 2.0:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if self.psi is None:
            object.__setattr__(self, "psi", PowerPsi(self.p - 1.0))

    @property
    def fast_diffusion(self) -> bool:
        return isinstance(self.psi, PowerPsi) and self.psi.m < 1.0

    def check_triple(self, triple: TripleSpec) -> None:
        if triple.kind is not TripleKind.PME:
            raise ValueError("porous medium operator needs the PME triple")
        if triple.alpha_frac != self.alpha_frac:
            raise ValueError("triple and operator disagree on alpha_frac")
        if triple.p != self.p:
            raise ValueError("triple and operator disagree on p")

    def apply(self, triple: TripleSpec, u, t: float = 0.0) -> np.ndarray:
        return triple.stiffness(self.psi(triple.grid.check(u)))

    def jacobian(self, triple: TripleSpec, u, t: float = 0.0) -> np.ndarray:
        d = self.psi.derivative(triple.grid.check(u))
        if self.alpha_frac == 1.0:
            k = triple.grid.laplacian_matrix()
        else:
            k = np.column_stack([triple.stiffness(e) for e in np.eye(triple.n)])
        return k * d[None, :]

    def solve_shifted(self, triple: TripleSpec, u, c: float, rhs) -> np.ndarray:
        """Solve ``(I + c A'(u)) x = rhs``."""
        if self.alpha_frac != 1.0:
            return np.linalg.solve(np.eye(triple.n) + c * self.jacobian(triple, u), rhs)
        d = self.psi.derivative(u)
        h2 = triple.grid.h**2
        n = triple.n
        ab = np.zeros((3, n))
        ab[0, 1:] = -c * d[1:] / h2
        ab[1, :] = 1.0 + 2.0 * c * d / h2
        ab[2, :-1] = -c * d[:-1] / h2
        return linalg.solve_banded((1, 1), ab, rhs)

    def constants(self, triple: TripleSpec) -> Constants:
        size = triple.grid.length
        p = self.p
        if isinstance(self.psi, TabulatedPsi):
            c1, c2, c3, c4 = self.psi.c1, self.psi.c2, self.psi.c3, self.psi.c4
        else:
            c1, c2, c3, c4 = 1.0, 0.0, 1.0, 0.0
        return Constants(delta=c1, alpha=p, C=c3, g_coercive=c2 * size,
                         g_growth=c4 * size ** ((p - 1.0) / p))


@dataclass(frozen=True)
class PLaplace:
    """``A(u) = -div(|grad u|^{p-2} grad u)`` plus optionally ``u|u|^{p-2}``."""

    p: float
    zero_order: bool = False

    def __post_init__(self):
        if self.p < 2.0:
            raise ValueError(f"p must be >= 2, got {self.p}")

    def check_triple(self, triple: TripleSpec) -> None:
        if triple.kind is not TripleKind.PLAPLACE:
            raise ValueError("p-Laplace operator needs the PLAPLACE triple")
        if triple.p != self.p:
            raise ValueError("triple and operator disagree on p")

    def apply(self, triple: TripleSpec, u, t: float = 0.0) -> np.ndarray:
        u = triple.grid.check(u)
        g = _forward_diff(triple.grid, u)
        out = _diff_transpose(triple.grid, np.abs(g) ** (self.p - 2.0) * g)
        if self.zero_order:
            out = out + u * np.abs(u) ** (self.p - 2.0)
        return out

    def _tridiagonal(self, triple: TripleSpec, u):
        g = _forward_diff(triple.grid, u)
        w = (self.p - 1.0) * (np.abs(g) + JACOBIAN_EPS) ** (self.p - 2.0) / triple.grid.h**2
        diag = w[:-1] + w[1:]
        off = -w[1:-1]
        if self.zero_order:
            diag = diag + (self.p - 1.0) * np.abs(u) ** (self.p - 2.0)
        return diag, off

    def jacobian(self, triple: TripleSpec, u, t: float = 0.0) -> np.ndarray:
        diag, off = self._tridiagonal(triple, triple.grid.check(u))
        return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)

    def solve_shifted(self, triple: TripleSpec, u, c: float, rhs) -> np.ndarray:
        diag, off = self._tridiagonal(triple, u)
        ab = np.empty((2, triple.n))
        ab[0, 0] = 0.0
        ab[0, 1:] = c * off
        ab[1, :] = 1.0 + c * diag
        return _solve_sym_tridiagonal(ab, rhs)

    def constants(self, triple: TripleSpec) -> Constants:
        # discrete Poincare |w|_p <= L |Dw|_p bounds the zero-order term in V*
        growth = 1.0 + (triple.grid.length ** self.p if self.zero_order else 0.0)
        return Constants(delta=1.0, alpha=self.p, C=growth)


@dataclass(frozen=True)
class Linear:
    """``A(u) = lam * u``, monotone in either triple for ``lam >= 0``."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative for a monotone operator")

    def check_triple(self, triple: TripleSpec) -> None:
        pass

    def apply(self, triple: TripleSpec, u, t: float = 0.0) -> np.ndarray:
        return self.lam * triple.grid.check(u)

    def jacobian(self, triple: TripleSpec, u, t: float = 0.0) -> np.ndarray:
        return self.lam * np.eye(triple.n)

    def solve_shifted(self, triple: TripleSpec, u, c: float, rhs) -> np.ndarray:
        return rhs / (1.0 + c * self.lam)

    def constants(self, triple: TripleSpec) -> Constants:
        if triple.p != 2.0:
            raise ValueError("linear operator constants are defined for p = 2 triples")
        ev = triple.grid.laplacian_eigenvalues()
        if triple.kind is TripleKind.PME and triple.alpha_frac != 1.0:
            ev = ev**triple.alpha_frac
        return Constants(delta=self.lam / ev.max(), alpha=2.0, C=self.lam / ev.min())


Operator = Union[PorousMedium, PLaplace, Linear]


def apply_operator(op: Operator, triple: TripleSpec, t: float, u) -> np.ndarray:
    """Dual vector ``A(t, u)`` of ``op`` in ``triple``."""
    op.check_triple(triple)
    return op.apply(triple, u, t)


def h_inner(triple: TripleSpec, u, v) -> float:
    return triple.h_inner(u, v)


# --- structural verification ------------------------------------------------------

CONDITIONS = ("hemicontinuity", "monotonicity", "coercivity", "growth")

@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst_margin: float
    violation: Optional[dict] = None


@dataclass
class StructuralReport:
    """Outcome of sampled checks of hemicontinuity, monotonicity, coercivity and growth."""

    conditions: dict[str, ConditionResult]
    n_samples: int
    delta_hat: float
    C_hat: float
    constants: Constants

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())


@dataclass(frozen=True)
class StateSampler:
    """Random states ``scale * 10**U(-log_range, log_range) * N(0, I)``.

    ``smooth`` draws a few random sine modes instead of white noise.
    """

    scale: float = 1.0
    log_range: float = 1.0
    smooth: bool = False

    def draw(self, rng: np.random.Generator, grid: Grid1D) -> np.ndarray:
        amp = self.scale * 10.0 ** rng.uniform(-self.log_range, self.log_range)
        if self.smooth:
            k = rng.integers(1, min(6, grid.n_interior) + 1, size=3)
            c = rng.normal(size=3)
            return amp * sum(ci * grid.sine_mode(int(ki)) for ci, ki in zip(c, k))
        return amp * rng.normal(size=grid.n_interior)


def _tolerance(*terms: float) -> float:
    return 1e-11 * sum(abs(t) for t in terms) + 1e-300


def verify_structural_conditions(op: Operator, triple: TripleSpec,
                                 sampler: StateSampler = StateSampler(), trials: int = 1000,
                                 seed: int = 0, line_points: int = 17,
                                 refine: int = 16) -> StructuralReport:
    """Sample states and test the four structural conditions; violations become report entries.

    Hemicontinuity is probed on the segment ``lambda in [-1, 1]``: the largest
    jump of ``lambda -> <A(u + lambda w), x>`` on a grid refined ``refine``
    times may not exceed ``10 / refine`` times the coarse-grid jump.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    op.check_triple(triple)
    const = op.constants(triple)
    rng = np.random.default_rng(seed)
    grid = triple.grid
    results = {name: ConditionResult(name, True, math.inf) for name in CONDITIONS}
    delta_hat, c_hat = math.inf, 0.0

    def record(name, margin, tol, sample):
        res = results[name]
        if margin < res.worst_margin:
            res.worst_margin = margin
        if margin < -tol and res.passed:
            res.passed = False
            res.violation = sample

    a_exp = const.alpha
    for i in range(trials):
        u = sampler.draw(rng, grid)
        v = sampler.draw(rng, grid)
        au, av = op.apply(triple, u), op.apply(triple, v)

        gap = triple.dual_pairing(au - av, u - v)
        scale = abs(triple.dual_pairing(au, u - v)) + abs(triple.dual_pairing(av, u - v))
        record("monotonicity", gap, _tolerance(scale), {"trial": i, "u": u, "v": v})

        pair = triple.dual_pairing(av, v)
        vn = triple.v_norm(v)
        lower = const.delta * vn**a_exp - const.g_coercive
        record("coercivity", pair - lower, _tolerance(pair, lower), {"trial": i, "v": v})

        dn = triple.dual_norm(av)
        upper = const.g_growth + const.C * vn ** (a_exp - 1.0)
        record("growth", upper - dn, _tolerance(upper, dn), {"trial": i, "v": v})

        if vn > 0:
            delta_hat = min(delta_hat, pair / vn**a_exp)
            c_hat = max(c_hat, dn / vn ** (a_exp - 1.0))

        if i < max(1, trials // 10):
            w = sampler.draw(rng, grid)
            x = sampler.draw(rng, grid)

            def jumps(n):
                lam = np.linspace(-1.0, 1.0, n)
                vals = np.array([triple.dual_pairing(op.apply(triple, u + l * w), x) for l in lam])
                return float(np.max(np.abs(np.diff(vals))))

            coarse = jumps(line_points)
            fine = jumps((line_points - 1) * refine + 1)
            allowed = 10.0 / refine * coarse
            record("hemicontinuity", allowed - fine, _tolerance(coarse), {"trial": i, "u": u, "w": w, "x": x})

    return StructuralReport(results, trials, delta_hat, c_hat, const)
