"""Structural operators (sigma, rho, mu), sampled grids, and the DSL."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsvar import (
    ArithmeticTail,
    ClosedInterval,
    DiscretePoints,
    DSLParseError,
    InvalidTimeScale,
    InvalidWindow,
    NodeNotInGrid,
    NotInTimeScale,
    StepNotPositive,
    TimeScaleSpec,
    UnboundedRay,
    format_timescale,
    integer_scale,
    parse_timescale,
    real_ray,
    timescale_from_structured,
    timescale_to_structured,
    union,
)
from tsvar.timescale import NodeKind, Side

from helpers import random_member, random_mixed_scale

MIXED = union(ClosedInterval(0, 1), DiscretePoints((2, 3)), UnboundedRay(5))


# ---------------------------------------------------------------------------
# membership and the jump operators


def test_membership():
    assert MIXED.contains(0.5)
    assert MIXED.contains(1.0)
    assert MIXED.contains(2.0) and MIXED.contains(3.0)
    assert MIXED.contains(5.0) and MIXED.contains(7.25)
    assert not MIXED.contains(4.0)
    assert not MIXED.contains(1.5)
    assert not MIXED.contains(-1.0)
    assert integer_scale(0).contains(7.0)
    assert not integer_scale(0).contains(7.5)
    assert 0.5 in MIXED and 4.0 not in MIXED


def test_sigma():
    assert integer_scale(0).sigma(5.0) == 6.0
    assert real_ray(0).sigma(3.7) == 3.7
    gap = union(ClosedInterval(0, 1), UnboundedRay(2))
    assert gap.sigma(1.0) == 2.0
    with pytest.raises(NotInTimeScale):
        gap.sigma(1.5)


def test_rho():
    assert integer_scale(0).rho(5.0) == 4.0
    assert real_ray(0).rho(3.7) == 3.7
    # rho at the smallest element stays put
    assert integer_scale(0).rho(0.0) == 0.0
    assert MIXED.rho(0.0) == 0.0
    assert MIXED.rho(2.0) == 1.0
    assert MIXED.rho(5.0) == 3.0


def test_mu():
    assert integer_scale(0).mu(4.0) == 1.0
    assert real_ray(0).mu(2.5) == 0.0
    assert union(ClosedInterval(0, 1), UnboundedRay(3)).mu(1.0) == 2.0
    assert MIXED.mu(2.0) == 1.0
    assert MIXED.mu(3.0) == 2.0
    assert MIXED.mu(0.25) == 0.0


@pytest.mark.parametrize("step", [1.0, 0.5, 0.25, 0.1])
def test_arithmetic_tail_exactness(step):
    # sigma(t) = t + step and mu(t) = step with no tolerance at all
    ts = integer_scale(2.0, step)
    for k in [0, 1, 7, 40]:
        t = ts.snap(2.0 + k * step)
        assert ts.sigma(t) == t + step
        assert ts.mu(t) == step


def test_classify():
    iso = union(ClosedInterval(0, 1), DiscretePoints((2,)), UnboundedRay(3))
    assert iso.classify(2.0).isolated
    assert real_ray(0).classify(1.0).dense
    edge = union(ClosedInterval(0, 1), UnboundedRay(3)).classify(1.0)
    assert edge.left is Side.DENSE and edge.right is Side.SCATTERED
    # the smallest element is left-dense by the rho(a) = a convention
    start = integer_scale(0).classify(0.0)
    assert start.left is Side.DENSE and start.right is Side.SCATTERED
    assert real_ray(0).classify(0.0).dense


def test_spec_validation():
    with pytest.raises(InvalidTimeScale):
        TimeScaleSpec(())
    with pytest.raises(InvalidTimeScale):
        union(ClosedInterval(0, 1))  # bounded: no tail
    with pytest.raises(InvalidTimeScale):
        union(UnboundedRay(0), DiscretePoints((5,)))  # tail not last
    with pytest.raises(InvalidTimeScale):
        union(ClosedInterval(0, 2), UnboundedRay(1))  # overlap
    with pytest.raises(InvalidTimeScale):
        union(ClosedInterval(2, 1), UnboundedRay(3))  # reversed interval
    with pytest.raises(InvalidTimeScale):
        union(DiscretePoints((0, 0)), UnboundedRay(1))
    with pytest.raises(InvalidTimeScale):
        TimeScaleSpec((ArithmeticTail(0, 0.0),))


# ---------------------------------------------------------------------------
# member navigation


def test_floor_ceil_member():
    assert MIXED.floor_member(4.5) == 3.0
    assert MIXED.ceil_member(4.5) == 5.0
    assert MIXED.floor_member(0.75) == 0.75
    assert MIXED.ceil_member(1.2) == 2.0
    assert MIXED.ceil_member(-10.0) == 0.0
    with pytest.raises(NotInTimeScale):
        MIXED.floor_member(-0.5)


def test_advance():
    assert integer_scale(0).advance(3.0, 0.1) == 4.0
    assert real_ray(0).advance(0.0, 0.25) == 0.25
    ts = union(ClosedInterval(0, 1), UnboundedRay(2))
    assert ts.advance(0.9, 0.25) == 1.0  # clamped at the segment end
    assert ts.advance(1.0, 0.25) == 2.0  # scattered hop


# ---------------------------------------------------------------------------
# grids


def test_build_grid_integer_window():
    grid = integer_scale(0).build_grid(0, 5, 0.1)
    assert np.array_equal(grid.nodes, [0, 1, 2, 3, 4, 5])
    assert np.array_equal(grid.mu, np.ones(6))
    assert grid.scattered.all()
    assert all(grid.kind(i) is NodeKind.SCATTERED_EXACT for i in range(6))


def test_build_grid_dense_window():
    grid = real_ray(0).build_grid(0, 1, 0.25)
    assert np.array_equal(grid.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert np.array_equal(grid.mu, np.zeros(5))
    assert not grid.scattered.any()
    assert grid.kind(2) is NodeKind.DENSE_SAMPLE


def test_build_grid_mixed_window():
    ts = union(ClosedInterval(0, 1), DiscretePoints((2,)), UnboundedRay(3))
    grid = ts.build_grid(0, 3, 0.5)
    assert np.array_equal(grid.nodes, [0, 0.5, 1, 2, 3])
    assert np.array_equal(grid.mu, [0, 0, 1, 1, 0])
    assert np.array_equal(grid.scattered, [False, False, True, True, False])
    assert grid.window == (0.0, 3.0)


def test_build_grid_spacing_uses_ceil():
    grid = real_ray(0).build_grid(0, 1, 0.3)
    assert len(grid) == 5  # ceil(1/0.3) = 4 subintervals
    assert np.max(np.diff(grid.nodes)) <= 0.3


def test_build_grid_errors():
    ts = integer_scale(0)
    with pytest.raises(InvalidWindow):
        ts.build_grid(3, 3, 0.1)
    with pytest.raises(InvalidWindow):
        ts.build_grid(4, 2, 0.1)
    with pytest.raises(StepNotPositive):
        ts.build_grid(0, 3, 0.0)
    with pytest.raises(NotInTimeScale):
        ts.build_grid(0.5, 3, 0.1)


def test_grid_index_and_prefix():
    grid = integer_scale(0).build_grid(0, 4, 0.1)
    assert grid.index_of(3.0) == 3
    with pytest.raises(NodeNotInGrid):
        grid.index_of(2.5)
    sub = grid.prefix(3)
    assert np.array_equal(sub.nodes, [0, 1, 2])
    with pytest.raises(InvalidWindow):
        grid.prefix(0)
    with pytest.raises(InvalidWindow):
        grid.prefix(99)


def test_refinement_keeps_scattered_nodes():
    ts = union(ClosedInterval(0, 1), DiscretePoints((2, 3)), UnboundedRay(5))
    coarse = ts.build_grid(0, 5, 0.5)
    fine = ts.build_grid(0, 5, 0.125)
    coarse_scattered = coarse.nodes[coarse.scattered]
    fine_scattered = fine.nodes[fine.scattered]
    assert set(coarse_scattered) <= set(fine_scattered)


# ---------------------------------------------------------------------------
# textual and structured descriptions


def test_parse_examples():
    ts = parse_timescale("union(interval(0,1), points(2,3), ray(5))")
    assert ts.segments == (ClosedInterval(0, 1), DiscretePoints((2, 3)),
                           UnboundedRay(5))
    ts2 = parse_timescale("union(points(0), arith(1, 0.5))")
    assert ts2.segments == (DiscretePoints((0,)), ArithmeticTail(1, 0.5))
    ts3 = parse_timescale("arith(0, 1)")
    assert ts3.segments == (ArithmeticTail(0, 1),)
    assert parse_timescale(" ray( -2.5 ) ").a == -2.5


@pytest.mark.parametrize(
    "text",
    [
        "",
        "interval(0, 1)",  # valid syntax, bounded scale
        "union(ray(0), points(5))",
        "blob(1)",
        "ray(0) ray(1)",
        "ray(0, 1)",
        "interval(1)",
        "points()",
        "arith(0)",
        "union(interval(0,2), ray(1))",
        "ray(0);",
    ],
)
def test_parse_rejects(text):
    with pytest.raises(DSLParseError):
        parse_timescale(text)


@given(st.integers(0, 10_000))
def test_dsl_round_trip(seed):
    ts = random_mixed_scale(np.random.default_rng(seed))
    assert parse_timescale(format_timescale(ts)) == ts
    assert timescale_from_structured(timescale_to_structured(ts)) == ts


def test_structured_rejects_unknown_kind():
    with pytest.raises(DSLParseError):
        timescale_from_structured([{"kind": "spiral", "start": 0}])


# ---------------------------------------------------------------------------
# randomized structural invariants


@given(st.integers(0, 10_000))
def test_jump_operator_invariants(seed):
    rng = np.random.default_rng(seed)
    ts = random_mixed_scale(rng)
    for _ in range(5):
        t = random_member(rng, ts)
        s, r, m = ts.sigma(t), ts.rho(t), ts.mu(t)
        assert s >= t and r <= t
        assert ts.contains(s) and ts.contains(r)
        assert abs(m - (s - t)) <= 1e-12
        assert (m > 0) == (s > t)
        assert (ts.mu(t) > 0) == (ts.classify(t).right is Side.SCATTERED)
        assert (r < t) == (ts.classify(t).left is Side.SCATTERED)
        # the jump operators invert each other across actual jumps
        if r < t:
            assert ts.sigma(r) == t
        if s > t:
            assert ts.rho(s) == t


@given(st.integers(0, 10_000))
def test_sigma_rho_compose(seed):
    rng = np.random.default_rng(seed)
    ts = random_mixed_scale(rng)
    t = random_member(rng, ts)
    if ts.mu(t) > 0:
        assert ts.rho(ts.sigma(t)) == t
    else:
        assert ts.sigma(t) == t


@given(st.integers(0, 10_000))
def test_grid_invariants(seed):
    rng = np.random.default_rng(seed)
    ts = random_mixed_scale(rng)
    h = float(rng.choice([0.1, 0.21, 0.05]))
    hi = ts.floor_member(ts.a + float(rng.uniform(1.5, 4.0)))
    grid = ts.build_grid(ts.a, hi, h)

    assert grid.nodes[0] == ts.a and grid.nodes[-1] == hi
    assert np.all(np.diff(grid.nodes) > 0)
    for i, t in enumerate(grid.nodes):
        assert ts.contains(t)
        assert abs(grid.mu[i] - ts.mu(t)) <= 1e-12
        assert grid.scattered[i] == (grid.mu[i] > 0)
    # scattered cells step exactly to sigma; dense cells respect h
    for i in range(len(grid) - 1):
        if grid.scattered[i]:
            assert abs(grid.nodes[i + 1] - ts.sigma(grid.nodes[i])) <= 1e-12
        else:
            assert grid.nodes[i + 1] - grid.nodes[i] <= h * (1 + 1e-9)
