"""Shared randomized generators for the suite.

Time scales are assembled from binary-exact coordinates (multiples of 1/128)
so membership never hinges on decimal rounding, and every gap between
segments is at least 0.3 -- far above the 1e-12 membership tolerance.
Polynomials come with coefficient bounds chosen so the documented dense-grid
error budgets hold with a wide margin.
"""

import numpy as np

from tsvar import (
    ArithmeticTail,
    ClosedInterval,
    DiscretePoints,
    Lagrangian,
    TimeScaleSpec,
    UnboundedRay,
)


def q128(rng, lo, hi):
    """Uniform draw from [lo, hi] on the 1/128 lattice (binary exact)."""
    return float(rng.integers(round(lo * 128), round(hi * 128) + 1)) / 128.0


def random_mixed_scale(rng, max_bounded=3):
    """A scale with up to ``max_bounded`` bounded segments plus a tail.

    Mixes closed intervals and finite point sets; the tail is a ray or an
    arithmetic progression with step >= 0.3.
    """
    segs = []
    t = q128(rng, -1.0, 1.0)
    for _ in range(int(rng.integers(0, max_bounded + 1))):
        if rng.random() < 0.5:
            length = q128(rng, 0.3, 1.2)
            segs.append(ClosedInterval(t, t + length))
            t += length
        else:
            pts = [t]
            for _ in range(int(rng.integers(0, 3))):
                t += q128(rng, 0.3, 0.8)
                pts.append(t)
            segs.append(DiscretePoints(tuple(pts)))
        t += q128(rng, 0.3, 1.0)  # gap before the next segment
    if rng.random() < 0.5:
        segs.append(UnboundedRay(t))
    else:
        segs.append(ArithmeticTail(t, q128(rng, 0.3, 1.1)))
    return TimeScaleSpec(tuple(segs))


def random_scattered_scale(rng, max_bounded=2):
    """A purely scattered scale: point sets plus an arithmetic tail."""
    segs = []
    t = q128(rng, -1.0, 1.0)
    for _ in range(int(rng.integers(0, max_bounded + 1))):
        pts = [t]
        for _ in range(int(rng.integers(0, 3))):
            t += q128(rng, 0.3, 0.9)
            pts.append(t)
        segs.append(DiscretePoints(tuple(pts)))
        t += q128(rng, 0.3, 1.0)
    segs.append(ArithmeticTail(t, q128(rng, 0.3, 1.1)))
    return TimeScaleSpec(tuple(segs))


def random_member(rng, ts, max_hops=10):
    """A member of ``ts`` reached by random sampling steps from the start."""
    t = ts.a
    for _ in range(int(rng.integers(0, max_hops + 1))):
        t = ts.advance(t, float(rng.uniform(0.05, 0.4)))
    return t


def structural_members(ts, lo, hi):
    """Members of ``ts`` in [lo, hi] that every sampling grid contains
    exactly: isolated points, interval endpoints, and tail nodes.  (Interior
    points of a continuous stretch depend on the step and may miss.)"""
    out = []
    for seg in ts.segments:
        if isinstance(seg, DiscretePoints):
            out.extend(p for p in seg.values if lo <= p <= hi)
        elif isinstance(seg, ClosedInterval):
            out.extend(v for v in (seg.lo, seg.hi) if lo <= v <= hi)
        elif isinstance(seg, UnboundedRay):
            if lo <= seg.start <= hi:
                out.append(seg.start)
        elif isinstance(seg, ArithmeticTail):
            k = max(0, int(np.ceil((lo - seg.start) / seg.step - 1e-9)))
            t = seg.start + k * seg.step
            while t <= hi:
                out.append(t)
                t += seg.step
    return sorted(out)


def delta_smooth_path(ts, x_a, w_coeffs):
    """A scalar path on ``ts`` whose delta derivative is the polynomial w
    everywhere: continuous stretches integrate w classically, and each jump
    of size mu contributes mu * w exactly.

    The slope field of the result is w restricted to the scale -- continuous
    even across seams where a continuous stretch ends in a jump.  Plain
    polynomials lack this: their jump quotient differs from the left slope,
    so compositions that read the slope jump at those seams.
    """
    P = np.polynomial.polynomial
    W = P.polyint(np.asarray(w_coeffs, dtype=float))

    def wval(s):
        return P.polyval(np.asarray(s, dtype=float), w_coeffs)

    def Wval(s):
        return P.polyval(np.asarray(s, dtype=float), W)

    # x at the minimum of every segment, accumulated left to right.
    base = [float(x_a)]
    for i, seg in enumerate(ts.segments[:-1]):
        nxt = ts.segments[i + 1].minimum()
        val = base[-1]
        if isinstance(seg, ClosedInterval):
            val += float(Wval(seg.hi) - Wval(seg.lo))
            val += (nxt - seg.hi) * float(wval(seg.hi))
        elif isinstance(seg, DiscretePoints):
            pts = np.append(np.asarray(seg.values, dtype=float), nxt)
            val += float(np.sum(np.diff(pts) * wval(pts[:-1])))
        base.append(val)

    def x(t):
        t1 = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.full(t1.shape, np.nan)
        for i, seg in enumerate(ts.segments):
            lo, hi = seg.minimum(), seg.maximum()
            m = t1 >= lo - 1e-9
            if hi is not None:
                m &= t1 <= hi + 1e-9
            m &= np.isnan(out)
            if not m.any():
                continue
            if isinstance(seg, (ClosedInterval, UnboundedRay)):
                out[m] = base[i] + Wval(t1[m]) - Wval(lo)
            elif isinstance(seg, DiscretePoints):
                pts = np.asarray(seg.values, dtype=float)
                pref = np.concatenate(
                    ([0.0], np.cumsum(np.diff(pts) * wval(pts[:-1])))
                )
                j = np.searchsorted(pts, t1[m] + 1e-9) - 1
                out[m] = base[i] + pref[j]
            else:  # ArithmeticTail
                k = np.rint((t1[m] - seg.start) / seg.step).astype(int)
                nodes = seg.start + seg.step * np.arange(int(k.max()) + 1)
                pref = np.concatenate(
                    ([0.0], np.cumsum(seg.step * wval(nodes)))
                )
                out[m] = base[i] + pref[k]
        if np.isnan(out).any():
            raise ValueError("path sampled off the time scale")
        return out if np.ndim(t) else float(out[0])

    return x


def random_poly(rng, degree=2, scale=0.5):
    """Coefficients (c_0 .. c_degree) with |c_k| <= scale, c != 0."""
    while True:
        c = rng.uniform(-scale, scale, size=degree + 1)
        if np.max(np.abs(c)) > 0.1 * scale:
            return c


def poly_fn(c):
    """Vectorized t -> sum_k c_k t^k."""
    def f(t):
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), c)

    return f


def quadratic_lagrangian(rng, scale=1.0, cross=True):
    """Random L(t,u,v) = q0 u^2 + q1 uv + q2 v^2 + q3 u + q4 v (n = 1),
    with analytic partials.  Returns (q, Lagrangian).

    With ``cross=False`` the uv coefficient is zeroed, so the slope partial
    d3 = 2 q2 v + q4 reads only the slope.  Identity checks on scales where
    a continuous stretch ends in a jump need this: the shifted state u is
    discontinuous at such a seam, so any d3 that reads u is too, and the
    differentiated factor of an integration-by-parts split must stay
    continuous for the split to hold.
    """
    q = rng.uniform(-scale, scale, size=5)
    if not cross:
        q[1] = 0.0

    def eval_fn(t, u, v):
        uu, vv = u[:, 0], v[:, 0]
        return q[0] * uu**2 + q[1] * uu * vv + q[2] * vv**2 + q[3] * uu + q[4] * vv

    lag = Lagrangian(
        n=1,
        eval=eval_fn,
        d2=lambda t, u, v: (2 * q[0] * u[:, 0] + q[1] * v[:, 0] + q[3])[:, None],
        d3=lambda t, u, v: (q[1] * u[:, 0] + 2 * q[2] * v[:, 0] + q[4])[:, None],
        vectorized=True,
    )
    return q, lag
