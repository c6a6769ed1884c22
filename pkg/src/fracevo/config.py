"""Run configuration: a strict TOML (or JSON) schema and its translation to solver objects."""

from __future__ import annotations

import enum
import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import tomli
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .kernels import Scheme
from .operators import Grid1D, Linear, PLaplace, PorousMedium, TripleKind, TripleSpec
from .stepper import ProblemSpec, SolverConfig
from .stochastic import NoiseSpec, Regularity, validate_noise


class Equation(str, enum.Enum):
    POROUS_MEDIUM = "porous_medium"
    P_LAPLACE = "p_laplace"
    LINEAR = "linear"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TripleConfig(_Strict):
    p: float = 2.0
    n_interior: int = Field(31, ge=1)
    length: float = Field(1.0, gt=0)
    alpha_frac: float = Field(1.0, gt=0, le=1)

    @field_validator("p")
    @classmethod
    def _p_at_least_two(cls, v):
        if not v >= 2.0:
            raise ValueError(f"p must be >= 2, got {v}")
        return v


class InitialConfig(_Strict):
    """Named initial profiles on the interior nodes.

    ``sine_mode``: ``amplitude * sin(k pi x / L)``; ``bump``: a smooth compactly
    supported bump centred at ``center`` with half-width ``width``;
    ``constant``: ``amplitude`` everywhere; ``file``: whitespace-separated values.
    """

    profile: Literal["sine_mode", "bump", "constant", "file"] = "sine_mode"
    amplitude: float = 1.0
    k: int = Field(1, ge=1)
    center: float = 0.5
    width: float = Field(0.25, gt=0)
    path: Optional[str] = None

    @model_validator(mode="after")
    def _file_needs_path(self):
        if self.profile == "file" and not self.path:
            raise ValueError("profile 'file' requires 'path'")
        return self


class NoiseConfig(_Strict):
    gamma: float
    m: int = Field(1, ge=1)
    matrix: Optional[list[list[float]]] = None
    diagonal: Optional[list[float]] = None
    regularity: Regularity = Regularity.BOUNDED
    paths: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _one_b_form(self):
        if (self.matrix is None) == (self.diagonal is None):
            raise ValueError("noise needs exactly one of 'matrix' or 'diagonal'")
        if self.diagonal is not None and len(self.diagonal) != self.m:
            raise ValueError(f"noise diagonal has {len(self.diagonal)} entries, expected m={self.m}")
        if self.matrix is not None and any(len(r) != self.m for r in self.matrix):
            raise ValueError(f"noise matrix rows must have m={self.m} entries")
        return self


class SolverOptions(_Strict):
    nonlinear_tol: float = Field(1e-10, gt=0)
    max_newton: int = Field(50, ge=1)
    damping: float = Field(1.0, gt=0, le=1)


class RunConfig(_Strict):
    equation: Equation
    beta: float = Field(gt=0, le=1)
    T: float = Field(gt=0)
    dt: float = Field(gt=0)
    scheme: Scheme = Scheme.L1
    coefficient: float = Field(1.0, ge=0, description="lam for the linear equation A(u) = lam u")
    zero_order: bool = False
    triple: TripleConfig = TripleConfig()
    initial: InitialConfig = InitialConfig()
    noise: Optional[NoiseConfig] = None
    solver: SolverOptions = SolverOptions()
    seed: int = Field(0, ge=0, lt=2**64)
    name: Optional[str] = None
    output_dir: Optional[str] = None
    binary_dump: bool = False

    @model_validator(mode="after")
    def _cross_field(self):
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.equation is Equation.LINEAR and self.triple.p != 2.0:
            raise ValueError("the linear equation uses p = 2")
        if self.equation is Equation.P_LAPLACE and self.triple.alpha_frac != 1.0:
            raise ValueError("alpha_frac applies to the porous-medium equation only")
        if self.noise is not None:
            if self.noise.matrix is not None and len(self.noise.matrix) != self.triple.n_interior:
                raise ValueError("noise matrix needs one row per interior node")
            if self.noise.diagonal is not None and self.noise.m > self.triple.n_interior:
                raise ValueError("diagonal noise needs m <= n_interior")
            reason = validate_noise(self.beta, self.noise_spec())
            if reason is not None:
                raise ValueError(f"noise rejected: {reason}")
        return self

    # --- translation -----------------------------------------------------------

    def grid(self) -> Grid1D:
        return Grid1D(self.triple.n_interior, self.triple.length)

    def triple_spec(self) -> TripleSpec:
        g = self.grid()
        if self.equation is Equation.POROUS_MEDIUM:
            return TripleSpec(g, TripleKind.PME, self.triple.p, self.triple.alpha_frac)
        return TripleSpec(g, TripleKind.PLAPLACE, self.triple.p)

    def operator(self):
        if self.equation is Equation.POROUS_MEDIUM:
            return PorousMedium(self.triple.p, alpha_frac=self.triple.alpha_frac)
        if self.equation is Equation.P_LAPLACE:
            return PLaplace(self.triple.p, zero_order=self.zero_order)
        return Linear(self.coefficient)

    def initial_state(self, base: Optional[Path] = None) -> np.ndarray:
        g = self.grid()
        ic = self.initial
        x = g.nodes
        if ic.profile == "sine_mode":
            return ic.amplitude * g.sine_mode(ic.k)
        if ic.profile == "constant":
            return np.full(g.n_interior, ic.amplitude)
        if ic.profile == "bump":
            r = (x / g.length - ic.center) / ic.width
            out = np.zeros_like(x)
            inside = np.abs(r) < 1.0
            out[inside] = ic.amplitude * np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
            return out
        path = Path(ic.path)
        if base is not None and not path.is_absolute():
            path = base / path
        values = np.loadtxt(path, dtype=float).ravel()
        if values.size != g.n_interior:
            raise ValueError(f"initial file has {values.size} values, expected {g.n_interior}")
        return values

    def problem(self, base: Optional[Path] = None) -> ProblemSpec:
        return ProblemSpec(self.beta, self.T, self.initial_state(base), self.operator(), self.triple_spec())

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(self.scheme, self.dt, s.nonlinear_tol, s.max_newton, s.damping)

    def noise_spec(self) -> Optional[NoiseSpec]:
        nz = self.noise
        if nz is None:
            return None
        if nz.matrix is not None:
            b = np.array(nz.matrix, dtype=float)
        else:
            b = np.zeros((self.triple.n_interior, nz.m))
            b[np.arange(nz.m), np.arange(nz.m)] = nz.diagonal
        return NoiseSpec(nz.gamma, b, nz.regularity)


def load_config(path: str | Path) -> RunConfig:
    """Parse a ``.toml`` or ``.json`` file into a validated :class:`RunConfig`."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        data = json.loads(raw)
    else:
        data = tomli.loads(raw.decode("utf-8"))
    return RunConfig.model_validate(data)


def resolved_dict(cfg: RunConfig) -> dict:
    """Every field with defaults filled in, JSON-ready."""
    return cfg.model_dump(mode="json")
