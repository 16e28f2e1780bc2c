import math

import numpy as np
import pytest

from stubborn.control import (
    ClosedFormDomainError,
    closed_form_coeffs,
    nash_residual,
    nash_residual_scale,
    optimal_stubbornness,
    root_scan,
    scan_sign_changes,
    solve_quartic,
)
from stubborn.model import (
    LagrangeParams,
    ModeFlags,
    ModelParams,
    ParameterError,
    PayoffParams,
    State,
)
from stubborn.payoff import constant_policy, expected_payoff

NO_LAG = LagrangeParams()
PP_MODES = ModeFlags(derivative_mode="paper", nash_mode="paper")


def pay(**overrides):
    base = dict(
        theta=1.0, alpha1=0.1, alpha2=0.1, alpha3=0.1,
        c=1.0, r=0.5, mu_bar=0.0, omega=1.0, horizon=1.0,
    )
    base.update(overrides)
    return PayoffParams(**base)


def test_trivial_root_in_every_mode_pair():
    model = ModelParams(a=0.9, sigma1=0.4, sigma2=0.3)
    st = State(s=0.3, x=1.7)
    for dm in ("paper", "consistent"):
        for nm in ("paper", "rederived"):
            modes = ModeFlags(derivative_mode=dm, nash_mode=nm)
            assert nash_residual(st, 0.0, model, pay(), NO_LAG, modes) == 0.0


def test_residual_zero_without_cost():
    # c = 0 removes every control-dependent term: the condition is flat.
    p = pay(c=0.0)
    model = ModelParams(a=0.5, sigma1=0.3, sigma2=0.2)
    for u in (0.0, 0.3, 0.7, 1.0):
        assert nash_residual(State(s=0.1, x=1.0), u, model, p, NO_LAG) == 0.0


def test_residual_sign_flip_matches_hand_root():
    # sigma2 = 0 collapses A3, and at s = 0 the stationarity condition
    # reduces to u * (k1*k2^2*z^2 - k3*z + k4) with z = u^2: solvable by hand.
    p = pay(theta=1.0, alpha1=0.5, alpha2=0.3, alpha3=0.2, c=4.0, r=0.25)
    model = ModelParams(a=0.0, sigma1=0.1, sigma2=0.0)
    st = State(s=0.0, x=1.0)
    rm = p.r - p.mu_bar
    beta = p.theta + p.alpha1 + p.alpha2 + p.alpha3
    k1 = -2.0 * p.c / rm
    k2 = 15.0 * p.c / (4.0 * rm)
    k3 = p.c**2 / rm**2
    k4 = 2.0 * beta * p.c / rm
    a_q = k1 * k2 * k2
    z_hand = (k3 - math.sqrt(k3 * k3 + 4.0 * (-a_q) * k4)) / (2.0 * a_q)
    u_hand = math.sqrt(z_hand)
    assert 0.0 < u_hand < 1.0

    r_lo = nash_residual(st, u_hand / 2.0, model, p, NO_LAG, PP_MODES)
    r_hi = nash_residual(st, min(1.0, 2.0 * u_hand), model, p, NO_LAG, PP_MODES)
    assert r_lo * r_hi < 0.0
    roots = root_scan(st, model, p, NO_LAG, PP_MODES, grid_n=64)
    assert len(roots) == 1
    assert roots[0][0] == pytest.approx(u_hand, abs=1e-8)


def test_coefficients_reference_values():
    p = pay()
    cf = closed_form_coeffs(State(s=0.0, x=1.0), ModelParams(a=1, sigma1=0.3, sigma2=0.1), p, NO_LAG)
    assert cf.k1 == -4.0
    assert cf.k2 == 7.5
    assert cf.k3 == 4.0
    assert cf.k4 == pytest.approx(4.0 * cf.A2, rel=1e-15)
    assert cf.A1 == 0.0


def test_coefficients_sigma2_zero():
    p = pay(alpha1=0.2, alpha2=0.2, alpha3=0.1)
    cf = closed_form_coeffs(State(s=0.0, x=2.0), ModelParams(a=1.0, sigma1=0.5, sigma2=0.0), p, NO_LAG)
    assert cf.A2 == p.theta + 0.5
    assert cf.A3 == 0.0


def test_coefficients_zero_diffusion_point():
    # sigma1 = sigma2*x: the middle and last A3 terms vanish.
    s2 = 0.5
    model = ModelParams(a=0.7, sigma1=s2 * 2.0, sigma2=s2)
    cf = closed_form_coeffs(State(s=0.0, x=2.0), model, pay(), NO_LAG)
    assert cf.A3 == pytest.approx(s2**4 * math.exp(s2 * 2.0), rel=1e-14)


def test_coefficients_are_control_free_parts_of_published_partials():
    # The published f_x and f_xx split as (cost term) + (u*l0 term) + A;
    # verifying the split ties the closed form to the derivative bundles.
    from stubborn.lagrangian import derivatives

    rng = np.random.default_rng(23)
    for _ in range(30):
        p = pay(
            c=rng.uniform(0.2, 3.0),
            r=rng.uniform(0.2, 0.9),
            mu_bar=rng.uniform(-0.3, 0.1),
        )
        model = ModelParams(
            a=rng.uniform(0, 1.5), sigma1=rng.uniform(0, 1), sigma2=rng.uniform(0, 1.2)
        )
        lag = LagrangeParams(l0=rng.uniform(-0.4, 0.4), l1=rng.uniform(-0.4, 0.4))
        st = State(s=rng.uniform(0, 1), x=rng.uniform(0.2, 3.0))
        u = rng.uniform(0, 1)
        cf = closed_form_coeffs(st, model, p, lag)
        b = derivatives(st, u, model, p, lag, mode="paper")
        D = math.exp(-p.r * st.s)
        E = math.exp(model.sigma2 * st.x)
        k = p.c / (p.r - p.mu_bar)
        cost_fx = -D * k * u * u / (2.0 * st.x ** 1.5)
        cost_fxx = D * 15.0 * k * u * u / (4.0 * st.x ** 2.5)
        assert b.f_x == pytest.approx(
            cost_fx - model.sigma2**2 * E * u * lag.l0 + cf.A2, rel=1e-12
        )
        assert b.f_xx == pytest.approx(
            cost_fxx - model.sigma2**3 * E * u * lag.l0 + cf.A3, rel=1e-12
        )
        assert cf.A1 == pytest.approx(model.sigma2 * E * lag.l0, rel=1e-14)


def test_coefficient_sign_invariants():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = pay(
            c=rng.uniform(0.1, 5.0),
            r=rng.uniform(0.05, 1.0),
            mu_bar=rng.uniform(-0.5, 0.0),
        )
        model = ModelParams(
            a=rng.uniform(0, 2), sigma1=rng.uniform(0, 1), sigma2=rng.uniform(0, 1.5)
        )
        cf = closed_form_coeffs(
            State(s=rng.uniform(0, 1), x=rng.uniform(0.01, 5)), model, p, NO_LAG
        )
        assert cf.k1 < 0.0
        assert cf.k2 > 0.0
        assert cf.k3 > 0.0


def test_quartic_factored_case():
    # A3 = 0, k4 = 0 factor the polynomial as z*(k1*k2^2*z - k3).
    from stubborn.control import ClosedFormCoeffs

    cf = ClosedFormCoeffs(A1=0.0, A2=0.0, A3=0.0, k1=-4.0, k2=7.5, k3=4.0, k4=0.0)
    roots = solve_quartic(cf, "rederived")
    expected = 4.0 / (-4.0 * 7.5**2)
    assert roots == sorted([0.0, expected])
    # only the nonnegative root is a valid z = u^2 candidate
    assert [z for z in roots if z >= 0.0] == [0.0]


def test_quartic_roots_satisfy_polynomial():
    rng = np.random.default_rng(77)
    from stubborn.checks import sample_root_scenario

    found = 0
    while found < 20:
        sc = sample_root_scenario(rng)
        if sc is None:
            continue
        found += 1
        cf = closed_form_coeffs(sc.state, sc.model, sc.payoff, sc.lagrange)
        scale = cf.coefficient_scale()
        for z in solve_quartic(cf, "rederived"):
            assert abs(cf.polynomial_residual(z)) <= 1e-9 * scale


def test_printed_formula_diverges_generically():
    p = pay(theta=0.3, c=2.0)
    model = ModelParams(a=0.8, sigma1=0.4, sigma2=0.5)
    cf = closed_form_coeffs(State(s=0.0, x=1.0), model, p, NO_LAG)
    scale = cf.coefficient_scale()
    printed = solve_quartic(cf, "paper-verbatim")
    assert printed, "printed formula should produce real branches here"
    assert min(abs(cf.polynomial_residual(z)) for z in printed) > 1e-6 * scale


def test_printed_formula_agrees_in_degenerate_case():
    # A3 = 0 with k4 = 0: the printed formula's z = 0 branch satisfies the
    # polynomial exactly (the constant term vanishes).
    from stubborn.control import ClosedFormCoeffs

    cf = ClosedFormCoeffs(A1=0.0, A2=0.0, A3=0.0, k1=-2.0, k2=3.0, k3=1.0, k4=0.0)
    printed = solve_quartic(cf, "paper-verbatim")
    residuals = [abs(cf.polynomial_residual(z)) for z in printed]
    assert min(residuals) == 0.0


def test_solve_quartic_linear_fallback_and_empty():
    from stubborn.control import ClosedFormCoeffs

    lin = ClosedFormCoeffs(A1=0, A2=0, A3=0.0, k1=0.0, k2=1.0, k3=2.0, k4=1.0)
    assert solve_quartic(lin, "rederived") == [0.5]
    none = ClosedFormCoeffs(A1=0, A2=0, A3=0.0, k1=-1.0, k2=1.0, k3=-3.0, k4=-4.0)
    # a = -1, b = 3, c = -4: discriminant 9 - 16 < 0
    assert solve_quartic(none, "rederived") == []


def test_optimal_stubbornness_without_cost():
    p = pay(c=0.0)
    model = ModelParams(a=0.5, sigma1=0.3, sigma2=0.2)
    res = optimal_stubbornness(State(s=0.0, x=1.0), model, p, NO_LAG)
    assert res.u_star == 0.0
    assert res.reason == "trivial root only"
    assert res.u_candidates == ()


def test_optimal_stubbornness_matches_scan():
    p = pay(theta=0.2, alpha1=0.05, alpha2=0.05, alpha3=0.0, c=2.0)
    model = ModelParams(a=0.6, sigma1=0.3, sigma2=0.4)
    st = State(s=0.0, x=1.2)
    res = optimal_stubbornness(st, model, p, NO_LAG, PP_MODES)
    assert 0.0 < res.u_star < 1.0
    scan = root_scan(st, model, p, NO_LAG, PP_MODES)
    nearest = min(scan, key=lambda pair: abs(pair[0] - res.u_star))[0]
    assert abs(res.u_star - nearest) <= 1e-3
    scale = nash_residual_scale(st, model=model, payoff=p, lagrange=NO_LAG, modes=PP_MODES, u=res.u_star)
    assert abs(res.residual) <= 1e-6 * scale


def test_clamped_control_reported():
    # Tiny marginal cost pushes the root far above 1; the result clamps and
    # keeps the raw value.  No stationarity root exists inside (0, 1].
    p = pay(c=0.01)
    model = ModelParams(a=0.3, sigma1=0.2, sigma2=0.1)
    st = State(s=0.0, x=1.0)
    res = optimal_stubbornness(st, model, p, NO_LAG, PP_MODES)
    assert res.u_star == 1.0
    assert res.u_unclamped > 1.0
    assert root_scan(st, model, p, NO_LAG, PP_MODES) == []


def test_two_candidates_ranked_by_payoff():
    # Engineered negative-A3 regime with two z-roots in (0, 1).
    p = pay(theta=0.1, alpha1=5.0, alpha2=5.0, alpha3=4.9, c=1.0)
    model = ModelParams(a=0.3, sigma1=1.7, sigma2=2.0)
    st = State(s=0.0, x=0.5)
    res = optimal_stubbornness(st, model, p, NO_LAG, PP_MODES, dt=0.01, n_paths=200, seed=0)
    assert len(res.u_candidates) == 2
    assert res.u_star in res.u_candidates
    # both candidates are exact stationarity roots at s = 0: their reported
    # residuals sit at rounding level relative to the condition's scale
    assert len(res.candidate_residuals) == 2
    for u, r in zip(res.u_candidates, res.candidate_residuals):
        scale = nash_residual_scale(st, u, model, p, NO_LAG, PP_MODES)
        assert abs(r) <= 1e-10 * scale
    estimates = {
        u: expected_payoff(
            st.x, constant_policy(u), model, p, 0.01, 200, 0
        ).mean
        for u in res.u_candidates
    }
    assert estimates[res.u_star] == max(estimates.values())


def test_scan_finds_both_roots_even_on_coarse_grid():
    p = pay(theta=0.1, alpha1=5.0, alpha2=5.0, alpha3=4.9, c=1.0)
    model = ModelParams(a=0.3, sigma1=1.7, sigma2=2.0)
    st = State(s=0.0, x=0.5)
    coarse = [u for u, _ in root_scan(st, model, p, NO_LAG, PP_MODES, grid_n=10)]
    fine = [u for u, _ in root_scan(st, model, p, NO_LAG, PP_MODES, grid_n=1000)]
    assert len(coarse) == len(fine) == 2
    for a, b in zip(coarse, fine):
        assert abs(a - b) <= 1e-8


def test_scan_scale_invariance():
    fn = lambda u: (u - 0.37) * (u - 0.81) * math.exp(u)
    base = scan_sign_changes(fn, grid_n=50)
    scaled = scan_sign_changes(lambda u: 17.3 * fn(u), grid_n=50)
    assert base == scaled
    assert base == pytest.approx([0.37, 0.81], abs=1e-9)


def test_scan_rejects_tiny_grid():
    with pytest.raises(ValueError):
        scan_sign_changes(lambda u: u, grid_n=5)


def test_domain_guards():
    with pytest.raises(ClosedFormDomainError, match="state below closed-form domain"):
        closed_form_coeffs(State(s=0.0, x=1e-7), ModelParams(a=0, sigma1=0.1, sigma2=0), pay(), NO_LAG)
    with pytest.raises(ParameterError, match="r must exceed mu_bar"):
        closed_form_coeffs(
            State(s=0.0, x=1.0),
            ModelParams(a=0, sigma1=0.1, sigma2=0),
            pay(r=0.1, mu_bar=0.2),
            NO_LAG,
        )
