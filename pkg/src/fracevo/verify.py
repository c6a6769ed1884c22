"""Property suites backing ``fracevo verify``.

Every check reports a margin: ``tolerance - observed`` (or ``observed - bound``
for lower bounds), so a check passes exactly when its margin is nonnegative.
Suites are deterministic functions of the seed.
"""

from __future__ import annotations

import csv
import io
import math
import time
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np
from scipy import optimize, special

from . import abstractcore, kernels, operators, stepper, stochastic
from .kernels import Scheme
from .operators import Grid1D, Linear, PLaplace, PorousMedium, StateSampler, TripleKind, TripleSpec
from .stepper import ProblemSpec, SolverConfig


@dataclass
class Check:
    suite: str
    name: str
    margin: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.margin) and self.margin >= 0.0)


@dataclass
class VerifyReport:
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.suite}.{c.name}  margin={c.margin:.3e}  {c.detail}".rstrip()
                 for c in self.checks]
        lines.append(f"{len(self.checks) - len(self.failures)}/{len(self.checks)} passed in {self.seconds:.1f} s")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite", "invariant", "passed", "margin", "detail"])
        for c in self.checks:
            w.writerow([c.suite, c.name, int(c.passed), repr(float(c.margin)), c.detail])
        return buf.getvalue()


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# --- kernels ---------------------------------------------------------------------

def suite_kernels(seed: int) -> list[Check]:
    out = []
    add = lambda name, margin, detail="": out.append(Check("kernels", name, float(margin), detail))

    mpmath.mp.dps = 30
    worst = 0.0
    for beta in np.round(np.arange(0.1, 1.0, 0.1), 10):
        w = kernels.grunwald_weights(beta, 1000)
        ref = np.array([float((-1) ** k * mpmath.binomial(mpmath.mpf(float(beta)), k)) for k in range(1001)])
        worst = max(worst, float(np.max(np.abs(w - ref) / np.abs(ref))))
    add("gl_recurrence_matches_binomial", 1e-13 - worst, f"max rel err {worst:.2e}")

    half = special.beta(0.5, 0.5) / math.gamma(0.5) ** 2
    add("half_kernels_compose_to_one", 1e-15 - abs(half - 1.0), f"B(1/2,1/2)/Gamma(1/2)^2 = {half!r}")

    for a, b in [(0.5, 0.5), (0.3, 0.9)]:
        dts = 2.0 ** -np.arange(6, 11)
        errs = []
        for dt in dts:
            n = int(round(1.0 / dt))
            t = dt * np.arange(n + 1)
            with np.errstate(divide="ignore"):
                conv = kernels.fractional_integral(kernels.g_kernel(a, t), b, dt)
            idx = [n // 4, n // 2, n]
            errs.append(np.abs(conv[idx] - kernels.g_kernel(a + b, t[idx])))
        orders = [_slope(dts, np.array(errs)[:, j]) for j in range(3)]
        need = min(a, b) - 0.1
        add(f"kernel_semigroup_{a}_{b}", min(orders) - need,
            f"orders at t=1/4,1/2,1: {', '.join(f'{o:.2f}' for o in orders)} (need >= {need:.2f})")

    worst_ratio = 0.0
    final = 0.0
    for beta in (0.3, 0.5, 0.8):
        errs = []
        for n in (64, 256, 1024):
            dt = 1.0 / n
            f = np.cos(dt * np.arange(n + 1))
            d = kernels.caputo_derivative(kernels.fractional_integral(f, beta, dt), 0.0, beta, dt)
            errs.append(abs(d[-1] - f[-1]))
        worst_ratio = max(worst_ratio, errs[1] / errs[0], errs[2] / errs[1])
        final = max(final, errs[-1])
    add("left_inverse_refines", min(1.0 - worst_ratio, 1e-2 - final),
        f"worst error ratio {worst_ratio:.3f}, error at N=1024 {final:.2e}")

    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(1000):
        beta = rng.uniform(0.05, 0.95)
        u = np.concatenate(([0.0], rng.normal(size=24) * 10.0 ** rng.uniform(-2, 2)))
        du = kernels.caputo_derivative(u, 0.0, beta, 0.01)
        du2 = kernels.caputo_derivative(u * u, 0.0, beta, 0.01)
        gap = u * du - 0.5 * du2
        tol = 1e-12 * (np.abs(u * du) + np.abs(du2))
        worst = min(worst, float(np.min(gap + tol)))
    add("l1_energy_inequality", worst, "min over 1000 sequences of u D u - D(u^2)/2")

    z = -np.linspace(0.0, 50.0, 201)
    bad = 0.0
    for beta in (0.25, 0.5, 0.75, 1.0):
        e = np.array([kernels.mittag_leffler(beta, x) for x in z])
        bad = min(bad, float(e.min()), float(1.0 - e.max()), float(-np.max(np.diff(e)) + 1e-14))
    add("mittag_leffler_completely_monotone", 0.0 if bad >= 0.0 else bad, "positive, <= 1, non-increasing on [-50, 0]")

    x = np.linspace(0.0, 30.0, 121)
    ml = np.array([kernels.mittag_leffler(0.5, -v) for v in x])
    err = float(np.max(np.abs(ml - special.erfcx(x)) / special.erfcx(x)))
    add("mittag_leffler_half_vs_erfcx", 1e-10 - err, f"max rel err {err:.2e}")

    zmax = 0.0
    for beta, lam, t in [(0.5, 1.0, 1.0), (0.7, 0.5, 2.0)]:
        s = kernels.sample_stable_subordinator(beta, t, 100_000, seed)
        mean, se = s.laplace_transform(lam)
        zmax = max(zmax, abs(mean - math.exp(-t * lam**beta)) / se)
    add("subordinator_laplace_transform", 3.0 - zmax, f"max |z| {zmax:.2f}")
    return out


# --- operators ---------------------------------------------------------------------

def _structural_cases():
    g = Grid1D(31)
    return [
        ("porous_medium_p3", PorousMedium(3.0), TripleSpec(g, TripleKind.PME, 3.0)),
        ("porous_medium_p4", PorousMedium(4.0), TripleSpec(g, TripleKind.PME, 4.0)),
        ("porous_medium_p3_frac", PorousMedium(3.0, alpha_frac=0.5), TripleSpec(g, TripleKind.PME, 3.0, 0.5)),
        ("p_laplace_p3", PLaplace(3.0), TripleSpec(g, TripleKind.PLAPLACE, 3.0)),
        ("p_laplace_p3_zero_order", PLaplace(3.0, zero_order=True), TripleSpec(g, TripleKind.PLAPLACE, 3.0)),
    ]


def suite_operators(seed: int) -> list[Check]:
    out = []
    add = lambda name, margin, detail="": out.append(Check("operators", name, float(margin), detail))
    rng = np.random.default_rng(seed)
    for label, op, triple in _structural_cases():
        rep = operators.verify_structural_conditions(op, triple, StateSampler(), trials=1000, seed=seed)
        for key, res in rep.conditions.items():
            # a margin above -roundoff counts as attained; report the raw value in detail
            margin = res.worst_margin if (res.worst_margin >= 0.0 or not res.passed) else 0.0
            add(f"{label}_{key}", margin,
                f"worst raw margin {res.worst_margin:.3e}")
        zero = max(abs(triple.dual_pairing(op.apply(triple, u) - op.apply(triple, u), u - u))
                   for u in (rng.normal(size=triple.n) for _ in range(20)))
        add(f"{label}_gap_zero_on_diagonal", -zero, "")
        worst = 0.0
        for _ in range(50):
            u, v = rng.normal(size=triple.n), rng.normal(size=triple.n)
            a, b = triple.dual_pairing(u, v), triple.h_inner(u, v)
            worst = max(worst, abs(a - b) / max(abs(b), triple.h_norm(u) * triple.h_norm(v)))
        add(f"{label}_pairing_consistency", 1e-10 - worst, f"max rel diff {worst:.2e}")
    return out


# --- stepper -------------------------------------------------------------------------

def _backward_euler(op, triple, x0, dt, n_steps):
    states = [np.asarray(x0, float)]
    for _ in range(n_steps):
        prev = states[-1]
        sol = optimize.root(lambda w: w + dt * op.apply(triple, w) - prev, prev,
                            jac=lambda w: np.eye(triple.n) + dt * op.jacobian(triple, w),
                            method="hybr", options={"xtol": 1e-15})
        states.append(sol.x)
    return np.array(states)


def suite_stepper(seed: int) -> list[Check]:
    out = []
    add = lambda name, margin, detail="": out.append(Check("stepper", name, float(margin), detail))
    rng = np.random.default_rng(seed)
    g = Grid1D(15)
    lin_triple = TripleSpec(g, TripleKind.PLAPLACE, 2.0)

    for beta in (0.3, 0.5, 0.8):
        pr = ProblemSpec(beta, 1.0, g.sine_mode(1), Linear(1.0), lin_triple)
        rec = stepper.solve_deterministic(pr, SolverConfig(Scheme.L1, 2.0**-11))
        exact = kernels.mittag_leffler(beta, -1.0)
        ratio = rec.norm_h[-1] / rec.norm_h[0]
        err = abs(ratio - exact) / exact
        add(f"mittag_leffler_oracle_beta_{beta}", 1e-2 - err, f"rel err {err:.2e}")

    pme_triple = TripleSpec(g, TripleKind.PME, 3.0)
    for label, op, triple, x0 in [("linear", Linear(1.0), lin_triple, g.sine_mode(1)),
                                  ("porous_medium", PorousMedium(3.0), pme_triple, g.sine_mode(1) + 0.5 * g.sine_mode(3))]:
        pr = ProblemSpec(1.0, 1.0, x0, op, triple)
        cfg = SolverConfig(Scheme.GL, 1e-3, nonlinear_tol=1e-14)
        a = stepper.solve_deterministic(pr, cfg).states
        b = stepper.solve_deterministic(pr, cfg).states
        be = _backward_euler(op, triple, x0, 1e-3, 1000)
        diff = float(np.max(np.abs(a - be)))
        add(f"beta_one_is_backward_euler_{label}", 1e-12 - diff, f"max diff {diff:.2e}")
        add(f"beta_one_bitwise_rerun_{label}", 0.0 if np.array_equal(a, b) else -1.0, "")

    worst = math.inf
    cases = [(PorousMedium(3.0), TripleSpec(g, TripleKind.PME, 3.0)),
             (PorousMedium(4.0), TripleSpec(g, TripleKind.PME, 4.0)),
             (PLaplace(3.0), TripleSpec(g, TripleKind.PLAPLACE, 3.0))]
    cfg = SolverConfig(Scheme.L1, 1.0 / 32)
    for op, triple in cases:
        for beta in (0.4, 0.7):
            for _ in range(20):
                x1, x2 = rng.normal(size=g.n_interior), rng.normal(size=g.n_interior)
                s1 = stepper.solve_deterministic(ProblemSpec(beta, 1.0, x1, op, triple), cfg).states
                s2 = stepper.solve_deterministic(ProblemSpec(beta, 1.0, x2, op, triple), cfg).states
                d0 = triple.h_norm(x1 - x2)
                dmax = max(triple.h_norm(a - b) for a, b in zip(s1, s2))
                worst = min(worst, ((1.0 + 1e-10) * d0 - dmax) / d0)
    add("discrete_stability_pairs", worst, "min over 120 pairs of (1+1e-10) - max_n |du_n|_H / |dx|_H")

    worst = math.inf
    for op, triple in cases:
        for _ in range(50):
            r1, r2 = rng.normal(size=g.n_interior), rng.normal(size=g.n_interior)
            c = 10.0 ** rng.uniform(-3, 0)
            u1 = stepper.resolvent_step(op, triple, c, r1)[0]
            u2 = stepper.resolvent_step(op, triple, c, r2)[0]
            d = triple.h_norm(r1 - r2)
            worst = min(worst, ((1.0 + 1e-9) * d - triple.h_norm(u1 - u2)) / d)
    add("resolvent_nonexpansive", worst, "")

    worst_t, worst_max = math.inf, math.inf
    for beta in (0.3, 0.5, 0.8):
        pr = ProblemSpec(beta, 1.0, g.sine_mode(1), Linear(1.0), lin_triple)
        dts = 2.0 ** -np.arange(6, 11, 2)
        fin, mx = [], []
        for dt in dts:
            rec = stepper.solve_deterministic(pr, SolverConfig(Scheme.L1, dt))
            ia = kernels.fractional_integral(rec.states, beta, dt)
            n = [lin_triple.h_norm(r) for r in rec.states - pr.x0 + ia]
            fin.append(n[-1])
            mx.append(max(n))
        worst_t = min(worst_t, _slope(dts, fin) - beta)
        worst_max = min(worst_max, _slope(dts, mx) - 0.75 * beta)
    add("integral_residual_rate_at_T", worst_t, "observed rate minus beta at t=T")
    add("integral_residual_rate_max", worst_max, "observed max-norm rate minus 0.75 beta (first node is pre-asymptotic)")
    return out


# --- stochastic ------------------------------------------------------------------------

def _scalar_convolution_samples(beta, gamma, n_steps, n_paths, seed):
    noise = stochastic.NoiseSpec(gamma, np.ones((1, 1)))
    dt = 1.0 / n_steps
    return np.array([stochastic.fractional_convolution_path(noise, beta, dt, n_steps, seed + i)[-1, 0]
                     for i in range(n_paths)])


def suite_stochastic(seed: int) -> list[Check]:
    out = []
    add = lambda name, margin, detail="": out.append(Check("stochastic", name, float(margin), detail))
    bad = 0
    grid = [Fraction(k, 20) for k in range(1, 21)]
    for fb in grid:
        for fg in grid:
            beta, gamma = float(fb), float(fg)
            exponent = 2 * (fb - fg)  # exact rational, free of binary rounding
            for reg in stochastic.Regularity:
                accepted = stochastic.validate_noise(beta, stochastic.NoiseSpec(gamma, np.ones((1, 1)), reg)) is None
                finite = math.isfinite(stochastic.convolution_variance(beta, gamma, 1.0))
                if accepted and not (finite and exponent > -1):
                    bad += 1
                if reg is stochastic.Regularity.BOUNDED and fg >= fb + Fraction(1, 2):
                    if accepted or exponent > -1:
                        bad += 1
    add("gate_soundness", -bad, f"{bad} inconsistent (beta, gamma, class) triples")
    reason = stochastic.validate_noise(0.3, stochastic.NoiseSpec(0.9, np.ones((1, 1))))
    add("gate_rejects_beta_0.3_gamma_0.9", 0.0 if reason and "beta + 1/2" in reason else -1.0, str(reason))

    n_paths = 10_000
    worst_mean, worst_var = math.inf, math.inf
    for beta, gamma in [(0.5, 0.25), (0.5, 0.5), (0.8, 1.0)]:
        x = _scalar_convolution_samples(beta, gamma, 256, n_paths, seed)
        exact = stochastic.convolution_variance(beta, gamma, 1.0)
        var = x.var(ddof=1)
        se_var = exact * math.sqrt(2.0 / (n_paths - 1))
        worst_var = min(worst_var, 4.0 - abs(var - exact) / se_var)
        worst_mean = min(worst_mean, 4.0 - abs(x.mean()) / math.sqrt(var / n_paths))
    add("convolution_centered", worst_mean, "4 minus max |mean| / stderr")
    add("convolution_variance_law", worst_var, "4 minus max |var - exact| / stderr")

    g = Grid1D(15)
    triple = TripleSpec(g, TripleKind.PME, 3.0)
    pr = ProblemSpec(0.6, 0.5, g.sine_mode(1), PorousMedium(3.0), triple)
    cfg = SolverConfig(Scheme.L1, 1.0 / 64)
    noise = stochastic.NoiseSpec(0.5, 0.1 * np.eye(g.n_interior)[:, :4])
    a = stochastic.solve_spde(pr, noise, cfg, seed)
    b = stochastic.solve_spde(pr, noise, cfg, seed)
    add("seed_determinism", 0.0 if np.array_equal(a.states, b.states) else -1.0, "")
    zero = stochastic.solve_spde(pr, stochastic.NoiseSpec(0.5, np.zeros((g.n_interior, 4))), cfg, seed)
    det = stepper.solve_deterministic(pr, cfg)
    add("zero_noise_is_deterministic", 0.0 if np.array_equal(zero.states, det.states) else -1.0, "")
    return out


# --- yosida ------------------------------------------------------------------------------

def yosida_setup(kind: str = "porous_medium", beta: float = 0.5, n_time: int = 32, n_dof: int = 16):
    """The 32 x 16 space-time configuration used for the reenactment."""
    g = Grid1D(n_dof)
    dt = 1.0 / n_time
    if kind == "porous_medium":
        op, triple = PorousMedium(3.0), TripleSpec(g, TripleKind.PME, 3.0)
    else:
        op, triple = Linear(1.0), TripleSpec(g, TripleKind.PLAPLACE, 2.0)
    times = dt * np.arange(1, n_time + 1)
    lam = abstractcore.build_discrete_lambda(beta, dt, n_time)
    f = 10.0 * np.outer(np.sin(np.pi * times), np.sin(np.pi * g.nodes))
    return abstractcore.SpaceTimeOperator(op, triple, times), lam, f


YOSIDA_ALPHAS = (1.0, 10.0, 100.0, 1e3, 1e4)


def suite_yosida(seed: int) -> list[Check]:
    out = []
    add = lambda name, margin, detail="": out.append(Check("yosida", name, float(margin), detail))
    rng = np.random.default_rng(seed)
    worst = -math.inf
    worst_alpha = -math.inf
    for beta in (0.3, 0.5, 0.8, 1.0):
        lam = abstractcore.build_discrete_lambda(beta, 1.0 / 32, 32)
        ys = {a: abstractcore.yosida_matrix(lam, a) for a in YOSIDA_ALPHAS}
        for _ in range(250):
            u = rng.normal(size=(32, 3))
            u[0] = 0.0
            scale = float(np.sum(u * u)) * abs(lam.matrix[0, 0])
            worst = max(worst, lam.pairing(u) / scale)
            for a, y in ys.items():
                worst_alpha = max(worst_alpha, float(np.sum((y @ u) * u)) / (a * float(np.sum(u * u))))
    add("lambda_dissipative", 1e-12 - worst, f"max normalized <Lambda u, u> = {worst:.2e}")
    add("yosida_dissipative", 1e-12 - worst_alpha, f"max normalized <Lambda_a u, u> = {worst_alpha:.2e}")

    lam = abstractcore.build_discrete_lambda(0.5, 1.0 / 32, 32)
    norm = max(abstractcore.resolvent_norm(lam, a, seed=seed) for a in YOSIDA_ALPHAS)
    add("resolvent_contraction", 1.0 + 1e-12 - norm, f"max |alpha V_alpha| = {norm:.12f}")
    v = rng.normal(size=(32, 4))
    rt = max(float(np.max(np.abs((a * np.eye(32) - lam.matrix) @ abstractcore.resolvent(lam, a, v) - v)))
             for a in YOSIDA_ALPHAS)
    add("resolvent_round_trip", 1e-12 * max(1.0, float(np.abs(v).max())) - rt, f"max residual {rt:.2e}")

    st, lam, f = yosida_setup("porous_medium")
    zero = abstractcore.solve_regularized(st, lam, 10.0, np.zeros_like(f))
    add("zero_forcing_zero_solution", -float(np.max(np.abs(zero.u_alpha))), "")
    study = abstractcore.yosida_convergence_study(st, lam, f, YOSIDA_ALPHAS)
    add("apriori_bound", 0.0 if study.bounded and study.sup_norm_u < 10.0 * study.reference_norm else -1.0,
        f"sup |u_a| = {study.sup_norm_u:.3e}, sup |A u_a| = {study.sup_norm_Au:.3e}")
    add("error_decreasing", 0.0 if study.monotone_from == 0 else -1.0,
        "errors " + ", ".join(f"{e:.2e}" for e in study.errors))
    rel = study.errors[-1] / study.reference_norm
    add("error_final_relative", 1e-3 - rel, f"|u_a - u*| / |u*| = {rel:.2e} at alpha=1e4")
    res = max(s.residual for s in study.states)
    add("regularized_residual", 1e-8 - res, f"max residual {res:.2e}")

    st, lam, f = yosida_setup("linear")
    study = abstractcore.yosida_convergence_study(st, lam, f, YOSIDA_ALPHAS)
    add("linear_rate_one_over_alpha", 0.1 - abs(study.rate + 1.0), f"observed slope {study.rate:.3f}")

    for beta in (0.3, 0.5, 0.8, 1.0):
        dts = np.array([1e-1, 1e-2, 1e-3])
        errs = [abstractcore.symbol_error(beta, dt, [0.5, 1.0, 2.0, 4.0]) for dt in dts]
        slope = _slope(dts, errs)
        add(f"symbol_linear_in_dt_beta_{beta}", min(0.1 - abs(slope - 1.0), errs[0] - errs[1], errs[1] - errs[2]),
            f"slope {slope:.3f}")
    return out


SUITES: dict[str, Callable[[int], list[Check]]] = {
    "kernels": suite_kernels,
    "operators": suite_operators,
    "stepper": suite_stepper,
    "stochastic": suite_stochastic,
    "yosida": suite_yosida,
}


def run_verify(suite: str = "all", seed: int = 0) -> VerifyReport:
    if suite != "all" and suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)} or all")
    names = list(SUITES) if suite == "all" else [suite]
    t0 = time.perf_counter()
    report = VerifyReport()
    for name in names:
        report.checks.extend(SUITES[name](seed))
    report.seconds = time.perf_counter() - t0
    return report
