"""Self-contained validation suites: each pits a closed form against an
independent numerical oracle (adaptive quadrature, extended-precision
finite differences, grid+bisection root scans, analytic expectation
values) and reports measured errors.

These back the `validate` CLI command and are reused by the test suite.
All suites are deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .control import (
    closed_form_coeffs,
    nash_residual,
    nash_residual_scale,
    optimal_stubbornness,
    root_scan,
    solve_quartic,
)
from .density import gaussian_integral_closed
from .feynman_kac import FKProblem, fk_estimate
from .lagrangian import derivative_gap, derivatives, finite_difference_check
from .model import LagrangeParams, ModeFlags, ModelParams, PayoffParams, State

GAUSSIAN_GRID = {
    "q": (0.1, 1.0, 10.0),
    "lambda": (-2.0, 0.0, 2.0),
    "eps": (0.01, 0.1, 1.0),
    "beta_pow": (0.5, 1.0, 2.0),
}


@dataclass(frozen=True)
class Scenario:
    model: ModelParams
    payoff: PayoffParams
    lagrange: LagrangeParams
    state: State


def check_gaussian_identity(quad_rel: float = 1e-8) -> dict:
    """Closed-form Gaussian integral vs adaptive quadrature over the full grid."""
    worst = 0.0
    cases = 0
    for q in GAUSSIAN_GRID["q"]:
        for lam in GAUSSIAN_GRID["lambda"]:
            for eps in GAUSSIAN_GRID["eps"]:
                for bp in GAUSSIAN_GRID["beta_pow"]:
                    closed = gaussian_integral_closed(q, lam, eps, bp)
                    sigma_eff = math.sqrt(eps * bp / (2.0 * q))
                    center = lam * eps * eps / (2.0 * q)
                    numeric, _ = scipy.integrate.quad(
                        lambda xi: math.exp(
                            -q * xi * xi / (eps * bp) + lam * eps * xi / bp
                        ),
                        center - 50.0 * sigma_eff,
                        center + 50.0 * sigma_eff,
                        epsabs=0.0,
                        epsrel=1e-12,
                        limit=200,
                    )
                    worst = max(worst, abs(closed - numeric) / abs(numeric))
                    cases += 1
    return {
        "name": "gaussian_integral_identity",
        "cases": cases,
        "max_rel_error": worst,
        "tolerance": quad_rel,
        "passed": bool(worst <= quad_rel),
    }


def _random_interior_point(rng: np.random.Generator, with_multiplier: bool) -> Scenario:
    rm = rng.uniform(0.1, 1.0)
    mu_bar = rng.uniform(-0.2, 0.3)
    if with_multiplier:
        lag = LagrangeParams(l0=rng.uniform(-0.3, 0.3), l1=rng.uniform(-0.3, 0.3))
    else:
        lag = LagrangeParams()
    return Scenario(
        model=ModelParams(
            a=rng.uniform(0.0, 2.0),
            sigma1=rng.uniform(0.0, 1.0),
            sigma2=rng.uniform(0.0, 1.2),
        ),
        payoff=PayoffParams(
            theta=rng.uniform(0.1, 1.0),
            alpha1=rng.uniform(0.0, 0.4),
            alpha2=rng.uniform(0.0, 0.4),
            alpha3=rng.uniform(0.0, 0.4),
            c=rng.uniform(0.2, 3.0),
            r=mu_bar + rm,
            mu_bar=mu_bar,
            omega=rng.uniform(0.2, 2.0),
            horizon=1.0,
        ),
        lagrange=lag,
        state=State(s=rng.uniform(0.0, 1.0), x=rng.uniform(0.1, 5.0)),
    )


def check_finite_differences(
    n_points: int = 100,
    seed: int = 2024,
    fd_rel: float = 1e-5,
    gap_tol: float = 1e-6,
) -> dict:
    """Exact-mode partials vs FD, and published-mode gap vs its closed form."""
    rng = np.random.default_rng(seed)
    worst_fd = 0.0
    worst_fd_published = 0.0
    worst_gap = 0.0
    for i in range(n_points):
        sc = _random_interior_point(rng, with_multiplier=(i % 2 == 1))
        u = float(rng.uniform(0.0, 1.0))
        report = finite_difference_check(
            sc.state,
            u,
            sc.model,
            sc.payoff,
            sc.lagrange,
            mode="consistent",
            step=1e-3,
            richardson=True,
        )
        worst_fd = max(worst_fd, report.max_error())
        # The published mode is reported per the interface but not gated:
        # its FD defect IS the documented divergence.
        published = finite_difference_check(
            sc.state,
            u,
            sc.model,
            sc.payoff,
            sc.lagrange,
            mode="paper",
            step=1e-3,
            richardson=True,
        )
        worst_fd_published = max(worst_fd_published, published.max_error())

        bp = derivatives(sc.state, u, sc.model, sc.payoff, sc.lagrange, mode="paper")
        bc = derivatives(sc.state, u, sc.model, sc.payoff, sc.lagrange, mode="consistent")
        gaps = derivative_gap(sc.state, u, sc.model, sc.payoff, sc.lagrange)
        measured = (bp.f_x - bc.f_x, bp.f_xx - bc.f_xx, bp.f_xu - bc.f_xu)
        for got, want in zip(measured, gaps):
            denom = max(abs(got), abs(want))
            err = abs(got - want) / denom if denom > 1e-12 else abs(got - want)
            worst_gap = max(worst_gap, err)
    return {
        "name": "derivative_consistency",
        "points": n_points,
        "max_fd_rel_error": worst_fd,
        "fd_tolerance": fd_rel,
        "published_mode_max_fd_rel_error": worst_fd_published,
        "max_gap_error": worst_gap,
        "gap_tolerance": gap_tol,
        "passed": bool(worst_fd <= fd_rel and worst_gap <= gap_tol),
    }


def check_trivial_root(n_scenarios: int = 100, seed: int = 7) -> dict:
    """nash_residual(u=0) == 0 exactly for l0 = 0 in all four mode pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_scenarios):
        sc = _random_interior_point(rng, with_multiplier=False)
        for dm in ("paper", "consistent"):
            for nm in ("paper", "rederived"):
                modes = ModeFlags(derivative_mode=dm, nash_mode=nm)
                worst = max(
                    worst,
                    abs(
                        nash_residual(
                            sc.state, 0.0, sc.model, sc.payoff, sc.lagrange, modes
                        )
                    ),
                )
    return {
        "name": "trivial_root_law",
        "scenarios": n_scenarios,
        "max_abs_residual": worst,
        "passed": bool(worst == 0.0),
    }


def sample_root_scenario(rng: np.random.Generator) -> Scenario | None:
    """One scenario (s = 0, l0 = 0) whose exact-expansion root gives u in (0, 1).

    Returns None when the draw has no such root; resample on None.
    """
    rm = rng.uniform(0.1, 0.7)
    mu_bar = rng.uniform(-0.1, 0.3)
    sc = Scenario(
        model=ModelParams(
            a=rng.uniform(0.0, 1.5),
            sigma1=rng.uniform(0.0, 0.8),
            sigma2=rng.uniform(0.0, 0.8),
        ),
        payoff=PayoffParams(
            theta=rng.uniform(0.05, 0.5),
            alpha1=rng.uniform(0.0, 0.5),
            alpha2=rng.uniform(0.0, 0.5),
            alpha3=rng.uniform(0.0, 0.5),
            c=rng.uniform(0.5, 4.0),
            r=mu_bar + rm,
            mu_bar=mu_bar,
            omega=rng.uniform(0.2, 2.0),
            horizon=1.0,
        ),
        lagrange=LagrangeParams(),
        state=State(s=0.0, x=rng.uniform(0.4, 2.5)),
    )
    coeffs = closed_form_coeffs(sc.state, sc.model, sc.payoff, sc.lagrange)
    roots = solve_quartic(coeffs, "rederived")
    if any(z > 0.0 and 0.0 < math.sqrt(z) < 1.0 for z in roots):
        return sc
    return None


def collect_root_scenarios(n: int, seed: int) -> list[Scenario]:
    rng = np.random.default_rng(seed)
    out: list[Scenario] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n:
            raise RuntimeError("scenario sampling failed to converge")
        sc = sample_root_scenario(rng)
        if sc is not None:
            out.append(sc)
    return out


def check_root_residuals(
    n_scenarios: int = 50,
    seed: int = 11,
    agree_tol: float = 1e-3,
    residual_rel: float = 1e-6,
    printed_fail_fraction: float = 0.9,
) -> dict:
    """Closed form vs grid+bisection oracle, and printed-formula divergence.

    For each scenario: |u_closed - u_scan| <= agree_tol, the residual
    certificate holds at u*, and the exact-expansion roots satisfy the
    polynomial to 1e-9 of the coefficient scale.  The printed two-branch
    root formula is then evaluated verbatim and its polynomial residual
    recorded; it is expected to fail the certificate on at least
    printed_fail_fraction of the scenarios.
    """
    modes = ModeFlags(derivative_mode="paper", nash_mode="paper", closed_form_mode="rederived")
    scenarios = collect_root_scenarios(n_scenarios, seed)
    worst_agree = 0.0
    worst_cert = 0.0
    worst_poly = 0.0
    printed_failures = 0
    printed_records = []
    for sc in scenarios:
        coeffs = closed_form_coeffs(sc.state, sc.model, sc.payoff, sc.lagrange)
        scale = coeffs.coefficient_scale()
        result = optimal_stubbornness(
            sc.state, sc.model, sc.payoff, sc.lagrange, modes
        )
        interior = [u for u in result.u_candidates if 0.0 < u < 1.0]
        u_closed = min(interior, key=lambda u: abs(u - result.u_star)) if interior else result.u_star

        for z in result.z_roots:
            if z >= 0.0:
                worst_poly = max(worst_poly, abs(coeffs.polynomial_residual(z)) / scale)

        scan = root_scan(sc.state, sc.model, sc.payoff, sc.lagrange, modes, grid_n=512)
        if not scan:
            worst_agree = math.inf
        else:
            nearest = min(scan, key=lambda pair: abs(pair[0] - u_closed))[0]
            worst_agree = max(worst_agree, abs(u_closed - nearest))

        res = abs(
            nash_residual(sc.state, u_closed, sc.model, sc.payoff, sc.lagrange, modes)
        )
        cert_scale = nash_residual_scale(
            sc.state, u_closed, sc.model, sc.payoff, sc.lagrange, modes
        )
        worst_cert = max(worst_cert, res / cert_scale if cert_scale > 0 else res)

        printed = solve_quartic(coeffs, "paper-verbatim")
        if printed:
            printed_res = min(abs(coeffs.polynomial_residual(z)) for z in printed)
        else:
            printed_res = math.inf
        diverged = not printed_res <= residual_rel * scale
        printed_failures += diverged
        printed_records.append(
            {
                "s": sc.state.s,
                "x": sc.state.x,
                "printed_residual": printed_res if math.isfinite(printed_res) else None,
                "coefficient_scale": scale,
                "diverged": bool(diverged),
            }
        )
    fail_frac = printed_failures / n_scenarios
    return {
        "name": "root_residuals",
        "scenarios": n_scenarios,
        "max_closed_vs_scan": worst_agree,
        "agree_tolerance": agree_tol,
        "max_certificate_ratio": worst_cert,
        "certificate_tolerance": residual_rel,
        "max_polynomial_residual_ratio": worst_poly,
        "printed_formula_fail_fraction": fail_frac,
        "printed_formula_records": printed_records,
        "passed": bool(
            worst_agree <= agree_tol
            and worst_cert <= residual_rel
            and worst_poly <= 1e-9
            and fail_frac >= printed_fail_fraction
        ),
    }


def check_fk_cases(dt: float = 0.01, n_paths: int = 10000, seed: int = 5) -> dict:
    """Frozen-dynamics discount case (exact) and driftless stochastic case (3 SE)."""
    frozen = ModelParams(a=0.0, sigma1=0.0, sigma2=0.0)
    policy = lambda s, x: 0.0
    r = 0.35
    problem = FKProblem(
        V=lambda s, x, u: r,
        Theta=lambda s, x, u: 0.0,
        T_term=lambda t, x: x,
        dynamics=frozen,
        policy=policy,
        horizon=1.0,
    )
    s0, x0 = 0.2, 1.3
    mean, _ = fk_estimate(problem, s0, x0, dt, 16, seed)
    frozen_expect = x0 * math.exp(-r * (1.0 - s0))
    frozen_err = abs(mean - frozen_expect) / abs(frozen_expect)

    noisy = ModelParams(a=0.0, sigma1=0.3, sigma2=0.0)
    problem2 = FKProblem(
        V=lambda s, x, u: 0.0,
        Theta=lambda s, x, u: 0.0,
        T_term=lambda t, x: x,
        dynamics=noisy,
        policy=policy,
        horizon=1.0,
    )
    mean2, se2 = fk_estimate(problem2, 0.0, 1.0, dt, n_paths, seed)
    stoch_dev = abs(mean2 - 1.0)
    return {
        "name": "feynman_kac_analytic",
        "frozen_rel_error": frozen_err,
        "frozen_tolerance": 1e-12,
        "stochastic_mean": mean2,
        "stochastic_std_error": se2,
        "stochastic_deviation": stoch_dev,
        "n_paths": n_paths,
        "passed": bool(frozen_err <= 1e-12 and stoch_dev <= 3.0 * se2),
    }


def run_all_checks(
    n_paths: int = 10000,
    dt: float = 0.01,
    seed: int = 42,
    fd_rel: float = 1e-5,
    residual_rel: float = 1e-6,
    quad_rel: float = 1e-8,
) -> dict:
    """Every suite, keyed by name, plus an overall pass flag."""
    suites = [
        check_gaussian_identity(quad_rel),
        check_finite_differences(fd_rel=fd_rel, seed=seed + 1),
        check_trivial_root(seed=seed + 2),
        check_root_residuals(seed=seed + 3, residual_rel=residual_rel),
        check_fk_cases(dt=dt, n_paths=n_paths, seed=seed + 4),
    ]
    return {
        "suites": {s["name"]: s for s in suites},
        "passed": bool(all(s["passed"] for s in suites)),
    }
