"""First-order diagnostics: residuals, transversality, lim-inf estimates,
variation quotients, the lemma probe, and the truncated direct solver."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsvar import (
    ClosedInterval,
    DiscretePoints,
    GridFunction,
    InadmissiblePath,
    InadmissibleVariation,
    InsufficientHorizons,
    Lagrangian,
    LimitConfig,
    LimitEstimate,
    LimitKind,
    NonFiniteObjective,
    PartialsMismatch,
    Problem,
    SolveParams,
    Verdict,
    VerifyConfig,
    ZeroEpsilon,
    compact_bump,
    decaying_pulse,
    el_residual,
    el_sup_norm,
    first_variation,
    fundamental_lemma_probe,
    gateaux_report,
    integer_scale,
    is_weak_max_consistent,
    liminf_over_tails,
    make_horizon_plan,
    parts_decomposition_residual,
    perturbed_generator,
    real_ray,
    sample_trajectory,
    smoothstep_tail,
    solve_truncated,
    transversality_term,
    UnboundedRay,
    union,
    variation_quotient,
    verify_candidate,
    weak_max_compare,
)
from tsvar.problems import (
    ex_neg,
    ex_pos,
    lqr_grid,
    lqr_grid_truncation_oracle,
    lqr_ray,
    scalar_traj,
)
from tsvar.variational import _Discretization

from helpers import quadratic_lagrangian, random_poly

NAT = integer_scale(0)


# ---------------------------------------------------------------------------
# Lagrangian partials


def test_finite_difference_partials():
    lag = Lagrangian(n=1, eval=lambda t, u, v: u[0] * v[0] + np.sin(v[0]))
    t = np.array([0.7])
    u = np.array([[1.3]])
    v = np.array([[0.4]])
    assert abs(lag.partial2(t, u, v)[0, 0] - 0.4) <= 1e-6
    assert abs(lag.partial3(t, u, v)[0, 0] - (1.3 + np.cos(0.4))) <= 1e-6


def test_partials_are_cross_checked():
    with pytest.raises(PartialsMismatch):
        Lagrangian(
            n=1,
            eval=lambda t, u, v: u[:, 0] ** 2,
            d2=lambda t, u, v: np.ones((len(t), 1)),  # wrong: should be 2u
            vectorized=True,
        )
    # the same wrong gradient passes when validation is disabled
    lag = Lagrangian(
        n=1,
        eval=lambda t, u, v: u[:, 0] ** 2,
        d2=lambda t, u, v: np.ones((len(t), 1)),
        vectorized=True,
        validate=False,
    )
    assert lag.partial2(np.zeros(1), np.ones((1, 1)), np.zeros((1, 1)))[0, 0] == 1.0


def test_value_at_matches_values():
    lag = Lagrangian(
        n=2,
        eval=lambda t, u, v: u[:, 0] * u[:, 1] - v[:, 0] ** 2 + t * v[:, 1],
        vectorized=True,
    )
    got = lag.value_at(2.0, [1.0, 3.0], [0.5, 0.25])
    assert abs(got - (3.0 - 0.25 + 0.5)) <= 1e-12


# ---------------------------------------------------------------------------
# Euler-Lagrange residual


@given(st.integers(0, 10_000))
def test_el_residual_matches_difference_recurrence(seed):
    # on the integer lattice the residual is the exact second-order
    # difference expression; rebuild it by hand from the partials
    rng = np.random.default_rng(seed)
    q, lag = quadratic_lagrangian(rng)
    c = random_poly(rng)
    x_of = lambda t: c[0] + c[1] * t + c[2] * t * t
    prob = Problem(ts=NAT, a=0.0, x_a=np.array([x_of(0.0)]), lagrangian=lag)
    traj = sample_trajectory(prob, scalar_traj(x_of), 8.0, 1.0)
    res = el_residual(prob, traj)

    xv = np.array([x_of(float(k)) for k in range(10)])
    def p_rows(k):
        u, v = xv[k + 1], xv[k + 1] - xv[k]
        t = np.array([float(k)])
        args = (t, np.array([[u]]), np.array([[v]]))
        return lag.partial2(*args)[0, 0], lag.partial3(*args)[0, 0]

    assert len(res.grid) == 8
    for k in range(8):
        p2_k, p3_k = p_rows(k)
        _, p3_next = p_rows(k + 1)
        assert abs(res.values[k, 0] - (p3_next - p3_k - p2_k)) <= 1e-12


def test_el_residual_zero_for_known_extremals():
    lqr = lqr_grid()
    traj = sample_trajectory(
        lqr.problem, lqr.candidate("decaying-mode").gen, 20.0, 1.0
    )
    assert el_sup_norm(lqr.problem, traj) <= 1e-12
    arc = ex_pos()
    traj = sample_trajectory(arc.problem, arc.candidate("line").gen, 15.0, 1.0)
    assert el_sup_norm(arc.problem, traj) <= 1e-12  # lines are extremals too


def test_el_residual_second_order_on_dense_grids():
    ray = lqr_ray()
    hs = [0.1, 0.05, 0.025]
    sups = []
    for h in hs:
        traj = sample_trajectory(
            ray.problem, ray.candidate("decaying-exp").gen, 2.0, h
        )
        sups.append(el_sup_norm(ray.problem, traj))
        assert sups[-1] <= 5.0 * h * h
    slope = np.polyfit(np.log(hs), np.log(sups), 1)[0]
    assert 1.6 <= slope <= 2.4


def test_transversality_closed_forms():
    neg = ex_neg()  # d3 = beta identically, x = alpha
    traj = sample_trajectory(neg.problem, neg.candidate("const").gen, 12.0, 1.0)
    for tp in (1.0, 5.0, 9.0):
        assert transversality_term(neg.problem, traj, tp) == 1.0
    pos = ex_pos()  # line x = t + 1: term is -(T' + 1)/sqrt(2)
    traj = sample_trajectory(pos.problem, pos.candidate("line").gen, 12.0, 1.0)
    for tp in (2.0, 7.0):
        want = -(tp + 1.0) / np.sqrt(2.0)
        assert abs(transversality_term(pos.problem, traj, tp) - want) <= 1e-12


# ---------------------------------------------------------------------------
# lim-inf over tails


def tail_pairs(vals):
    return [(float(k + 1), float(v)) for k, v in enumerate(vals)]


def test_liminf_constant():
    pairs = tail_pairs([2.5] * 40)
    est = liminf_over_tails(pairs, [1, 5, 9, 13, 17, 21, 25])
    assert est.kind is LimitKind.CONVERGED and est.value == 2.5


def test_liminf_linear_drift_down():
    pairs = tail_pairs(-np.arange(1.0, 41.0))
    est = liminf_over_tails(pairs, [1, 5, 9, 13, 17, 21, 25])
    assert est.kind is LimitKind.DIVERGES_MINUS


def test_liminf_oscillation_with_settling_floor():
    # (-1)^k + 1/k: every tail's infimum equals the value at the largest
    # sampled odd index, so the infima sequence is flat
    ks = np.arange(1.0, 41.0)
    pairs = tail_pairs((-1.0) ** ks + 1.0 / ks)
    est = liminf_over_tails(pairs, [1, 5, 9, 13, 17, 21, 25, 29, 33])
    assert est.kind is LimitKind.CONVERGED
    assert abs(est.value - (-1.0 + 1.0 / 39.0)) <= 1e-12


def test_liminf_input_validation():
    pairs = tail_pairs(np.zeros(40))
    with pytest.raises(InsufficientHorizons):
        liminf_over_tails(pairs, [1, 5, 9])  # too few tails
    with pytest.raises(InsufficientHorizons):
        liminf_over_tails(pairs, [1, 5, 9, 13, 17.5])  # not a sampled horizon
    with pytest.raises(InsufficientHorizons):
        liminf_over_tails(pairs[:3], [1, 2, 3, 4, 5])
    bad = [(2.0, 0.0), (1.0, 0.0)] + pairs[2:]
    with pytest.raises(InsufficientHorizons):
        liminf_over_tails(bad, [1, 5, 9, 13, 17])


# ---------------------------------------------------------------------------
# weak-maximality comparison


def test_weak_max_constant_beats_line():
    pos = ex_pos()
    plan = make_horizon_plan(pos.problem.ts, 0.0, 30.0, h=1.0)
    line = scalar_traj(lambda t: 0.1 * t + 1.0)
    est = weak_max_compare(pos.problem, line, pos.candidate("const").gen, plan)
    assert est.kind is LimitKind.DIVERGES_MINUS
    assert is_weak_max_consistent(est)
    rate = 1.0 - np.sqrt(1.01)
    for T, Q in est.evidence:
        assert abs(Q - rate * T) <= 1e-9


def test_weak_max_self_comparison_is_zero():
    pos = ex_pos()
    plan = make_horizon_plan(pos.problem.ts, 0.0, 30.0, h=1.0)
    gen = pos.candidate("const").gen
    est = weak_max_compare(pos.problem, gen, gen, plan)
    assert est.kind is LimitKind.CONVERGED and est.value == 0.0


def test_weak_max_flags_improving_competitor():
    neg = ex_neg()
    plan = make_horizon_plan(neg.problem.ts, 0.0, 20.0, h=1.0)
    gen = neg.candidate("const").gen
    comp = perturbed_generator(gen, compact_bump(0.5, 5.0, 2.0))
    est = weak_max_compare(neg.problem, comp, gen, plan)
    assert not is_weak_max_consistent(est)
    assert est.kind is LimitKind.CONVERGED and est.value > 0


def test_weak_max_consistency_rule():
    assert is_weak_max_consistent(LimitEstimate(LimitKind.DIVERGES_MINUS))
    assert is_weak_max_consistent(LimitEstimate(LimitKind.CONVERGED, value=0.0))
    assert not is_weak_max_consistent(LimitEstimate(LimitKind.CONVERGED, value=1e-3))
    assert not is_weak_max_consistent(LimitEstimate(LimitKind.DIVERGES_PLUS))
    assert not is_weak_max_consistent(LimitEstimate(LimitKind.OSCILLATES, lo=0, hi=1))


# ---------------------------------------------------------------------------
# variation quotients


def pulse_var(c=0.3, rate=0.7):
    return scalar_traj(lambda t: c * t * np.exp(-rate * t))


def quotient_oracle(pv, eps, t_prime, beta=1.0):
    # integrand difference telescopes on the lattice:
    # A = eps * sum p(t+1)^2 + beta p(T')
    acc = 0.0
    for k in range(int(t_prime)):
        acc += float(pv(float(k + 1))[0]) ** 2
    return eps * acc + beta * float(pv(float(t_prime))[0])


@pytest.mark.parametrize("eps", [0.5, 1e-3])
@pytest.mark.parametrize("t_prime", [3.0, 7.0])
def test_variation_quotient_exact_value(eps, t_prime):
    neg = ex_neg()
    pv = pulse_var()
    got = variation_quotient(
        neg.problem, neg.candidate("const").gen, pv, eps, t_prime, h=1.0
    )
    assert abs(got - quotient_oracle(pv, eps, t_prime)) <= 1e-10


def test_first_variation_and_halving_ratio():
    # A(eps) - FV = eps * sum p_sigma^2: halving eps halves the gap
    neg = ex_neg()
    gen = neg.candidate("const").gen
    pv = pulse_var()
    t_prime = 6.0
    fv = first_variation(neg.problem, gen, pv, t_prime, h=1.0)
    assert abs(fv - float(pv(t_prime)[0])) <= 1e-12
    gaps = [
        variation_quotient(neg.problem, gen, pv, eps, t_prime, h=1.0) - fv
        for eps in (0.1, 0.05, 0.025)
    ]
    assert abs(gaps[0] / gaps[1] - 2.0) <= 1e-6
    assert abs(gaps[1] / gaps[2] - 2.0) <= 1e-6


def test_variation_quotient_rejects_bad_input():
    neg = ex_neg()
    gen = neg.candidate("const").gen
    with pytest.raises(ZeroEpsilon):
        variation_quotient(neg.problem, gen, pulse_var(), 0.0, 4.0, h=1.0)
    offset = scalar_traj(lambda t: t + 1.0)  # p(0) = 1
    with pytest.raises(InadmissibleVariation):
        variation_quotient(neg.problem, gen, offset, 0.1, 4.0, h=1.0)
    drifted = scalar_traj(lambda t: t + 7.0)  # x(0) != x_a
    with pytest.raises(InadmissiblePath):
        variation_quotient(neg.problem, drifted, pulse_var(), 0.1, 4.0, h=1.0)


@given(st.integers(0, 10_000))
def test_parts_decomposition_residual_is_zero_on_lattice(seed):
    rng = np.random.default_rng(seed)
    _, lag = quadratic_lagrangian(rng)
    cx = random_poly(rng)
    cp = random_poly(rng, degree=1)
    x_of = lambda t: cx[0] + cx[1] * t + cx[2] * t * t
    p_of = lambda t: t * (cp[0] + cp[1] * t)  # vanishes at a = 0
    prob = Problem(ts=NAT, a=0.0, x_a=np.array([x_of(0.0)]), lagrangian=lag)
    r = parts_decomposition_residual(
        prob, scalar_traj(x_of), scalar_traj(p_of), 6.0, h=1.0
    )
    assert r <= 1e-10


def test_gateaux_report_layout():
    neg = ex_neg()
    plan = make_horizon_plan(neg.problem.ts, 0.0, 20.0, h=1.0)
    gen = neg.candidate("const").gen
    pv = pulse_var()
    eps = (1e-1, 1e-2)
    report = gateaux_report(neg.problem, gen, pv, eps, (5.0, 10.0, 15.0), plan)
    assert report.quotients.shape == (2, 3)
    assert report.a_values.shape == (2, 3)
    assert np.all(report.spread_by_t >= 0)
    # the quotient uses a tail infimum, so it can never exceed A at that T'
    assert np.all(report.quotients <= report.a_values + 1e-12)
    for i, e in enumerate(eps):
        for j, tp in enumerate(report.t_values):
            direct = variation_quotient(neg.problem, gen, pv, e, tp, h=1.0)
            assert abs(report.a_values[i, j] - direct) <= 1e-9
    doc = report.to_dict()
    json.dumps(doc)
    assert doc["eps"] == [0.1, 0.01]
    with pytest.raises(ZeroEpsilon):
        gateaux_report(neg.problem, gen, pv, (0.1, 0.0), (5.0,), plan)


# ---------------------------------------------------------------------------
# fundamental-lemma probe


def test_lemma_probe_point_mass():
    g = lambda t: np.where(np.abs(np.asarray(t, float) - 3.0) < 0.5, 2.0, 0.0)
    w = fundamental_lemma_probe(NAT, g, 0.0, 8.0, h=1.0)
    assert w.kind == "point_mass"
    assert w.support == (4.0, 4.0)
    assert w.integral == 4.0  # mu * g(3)^2
    assert float(np.asarray(w.eta(4.0))) == 2.0
    assert float(np.asarray(w.eta(3.0))) == 0.0


def test_lemma_probe_bump_on_dense_run():
    g = lambda t: np.clip(1.0 - np.abs(np.asarray(t, float) - 5.0), 0.0, None)
    w = fundamental_lemma_probe(real_ray(0), g, 0.0, 10.0, h=0.01)
    assert w.kind == "bump"
    assert w.integral > 0
    t0, t1 = w.support
    xs = np.linspace(t0, t1, 40001)
    fine = np.trapezoid(g(xs) * np.asarray(w.eta(xs)), xs)
    assert abs(w.integral - fine) <= 5e-3 * abs(fine)


def test_lemma_probe_point_mass_ramp():
    ts = union(DiscretePoints((0.0,)), ClosedInterval(1.0, 3.0), UnboundedRay(4.0))
    g = lambda t: np.where(np.abs(np.asarray(t, float)) < 0.5, 1.0, 0.0)
    w = fundamental_lemma_probe(ts, g, 0.0, 3.0, h=0.1)
    assert w.kind == "point_mass_ramp"
    assert w.support == (1.0, 2.0)
    assert w.integral == 1.0  # the ramp runs over a stretch where g = 0
    assert float(np.asarray(w.eta(1.0))) == 1.0
    assert float(np.asarray(w.eta(2.5))) == 0.0


def test_lemma_probe_null_function():
    zero = lambda t: np.zeros_like(np.asarray(t, float))
    assert fundamental_lemma_probe(NAT, zero, 0.0, 10.0, h=1.0) is None
    tiny = lambda t: np.full_like(np.asarray(t, float), 5e-10)
    assert fundamental_lemma_probe(NAT, tiny, 0.0, 10.0, h=1.0) is None


# ---------------------------------------------------------------------------
# truncated-horizon solver


def test_solve_lqr_lattice_matches_linear_system():
    lqr = lqr_grid()
    res = solve_truncated(lqr.problem, 6.0, h=1.0)
    assert res.converged and res.grad_inf_norm <= 1e-8
    oracle = lqr_grid_truncation_oracle(6.0)
    assert np.max(np.abs(res.trajectory.x.values[:, 0] - oracle)) <= 1e-6
    disc = _Discretization(lqr.problem, res.trajectory.grid)
    x = res.trajectory.x.values
    assert abs(res.objective - disc.objective(x)) <= 1e-12
    # local maximality against random admissible wiggles
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = 1e-3 * rng.standard_normal(x.shape)
        d[0] = 0.0
        assert disc.objective(x + d) <= res.objective + 1e-12


def test_solve_respects_pinned_terminal():
    pos = ex_pos()
    res = solve_truncated(pos.problem, 2.0, terminal=[1.0], h=1.0)
    assert res.converged
    assert res.trajectory.x.values[-1, 0] == 1.0  # pinned exactly, never moved
    assert abs(res.objective - (-2.0)) <= 1e-9
    assert np.max(np.abs(res.trajectory.x.values[:, 0] - 1.0)) <= 1e-6

    res2 = solve_truncated(pos.problem, 2.0, terminal=[2.0], h=1.0)
    assert abs(res2.objective - (-2.0 * np.sqrt(1.25))) <= 1e-6
    assert abs(res2.trajectory.x.values[1, 0] - 1.5) <= 1e-4


def test_solve_iteration_budget():
    lqr = lqr_grid()
    res = solve_truncated(
        lqr.problem, 8.0, h=1.0, params=SolveParams(max_iter=2, multistart=1)
    )
    assert not res.converged
    assert res.iterations == 2


def test_solve_nonfinite_objective():
    def log_slope(t, u, v):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(v[:, 0])

    lag = Lagrangian(n=1, eval=log_slope, vectorized=True, validate=False)
    prob = Problem(ts=NAT, a=0.0, x_a=np.array([1.0]), lagrangian=lag)
    with pytest.raises(NonFiniteObjective):
        solve_truncated(prob, 4.0, h=1.0, params=SolveParams(multistart=1))


def test_solve_threaded_matches_serial(monkeypatch):
    lqr = lqr_grid()
    serial = solve_truncated(lqr.problem, 6.0, h=1.0)
    monkeypatch.setenv("TSVAR_THREADS", "3")
    threaded = solve_truncated(lqr.problem, 6.0, h=1.0)
    assert threaded.objective == serial.objective
    assert np.array_equal(
        threaded.trajectory.x.values, serial.trajectory.x.values
    )


# ---------------------------------------------------------------------------
# full verification reports


def test_verify_consistent_candidate():
    pos = ex_pos()
    report = verify_candidate(
        pos.problem, pos.candidate("const").gen, VerifyConfig(t_max=25.0, h=1.0)
    )
    assert report.verdict is Verdict.CONSISTENT
    assert report.flags == ()
    assert report.el_sup_norm <= 1e-10
    assert report.transversality.kind is LimitKind.CONVERGED
    assert abs(report.transversality.value) <= 1e-10
    assert len(report.el_window_sups) == 4
    assert len(report.weak_max_probes) == 6
    json.dumps(report.to_dict())


def test_verify_transversality_failure():
    neg = ex_neg()
    report = verify_candidate(
        neg.problem, neg.candidate("const").gen, VerifyConfig(t_max=25.0, h=1.0)
    )
    assert report.verdict is Verdict.EL_FAILS_TRANSVERSALITY
    assert report.el_sup_norm <= 1e-10
    assert report.transversality.kind is LimitKind.CONVERGED
    assert abs(report.transversality.value - 1.0) <= 1e-9
    assert any(f.startswith("transversality_nonzero_limit") for f in report.flags)
