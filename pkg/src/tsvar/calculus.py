"""Delta calculus on sampled grids.

Delta derivatives are exact at right-scattered nodes,
(f(sigma(t)) - f(t)) / mu(t), and second-order finite differences at dense
nodes (central in the interior of a continuous run, one-sided at a run's
left edge).  Delta integrals weight each right-scattered node by its
graininess and use the composite trapezoid rule on continuous runs, so that

    int_t^sigma(t) f = mu(t) f(t)

holds exactly cell by cell.  Improper integrals over [a, +inf) are limits
of partial integrals at growing horizons, classified by a small documented
heuristic (see classify_limit).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    BoundaryUndefined,
    DimensionMismatch,
    EvaluationError,
    GridTooSmall,
    InsufficientHorizons,
    NotInTimeScale,
)
from .timescale import SampleGrid, TimeScaleSpec


# ---------------------------------------------------------------------------
# grid functions


@dataclass(frozen=True)
class GridFunction:
    """Values of an R^n-valued function at the nodes of a SampleGrid.

    ``sigma_last`` optionally holds the value at sigma(last node) when the
    last node is right-scattered; it is filled in by from_callable and lets
    the delta derivative and the sigma shift be defined at that node too.
    """

    grid: SampleGrid
    values: np.ndarray
    sigma_last: Optional[np.ndarray] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != len(self.grid):
            raise DimensionMismatch(
                f"values shape {vals.shape} does not match grid of length {len(self.grid)}"
            )
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.sigma_last is not None:
            sl = np.atleast_1d(np.asarray(self.sigma_last, dtype=float))
            if sl.shape != (vals.shape[1],) or not np.all(np.isfinite(sl)):
                raise DimensionMismatch("sigma_last must be a finite vector of length n")
            sl.setflags(write=False)
            object.__setattr__(self, "sigma_last", sl)

    @property
    def dim(self):
        return self.values.shape[1]

    @classmethod
    def from_callable(cls, grid, fn, extend=True):
        """Sample ``fn`` at the grid nodes.

        ``fn`` may be vectorized (array of times -> (m,) or (m, n) array) or
        scalar (float -> float or length-n vector).  When ``extend`` is true
        and the last node is right-scattered, fn is also evaluated at
        sigma(last node) -- a member of the scale just past the window.
        """
        nodes = grid.nodes
        vals = _call_on_times(fn, nodes)
        sigma_last = None
        if extend and grid.scattered[-1]:
            s = nodes[-1] + grid.mu[-1]
            sigma_last = _call_on_times(fn, np.array([s]))[0]
        return cls(grid=grid, values=vals, sigma_last=sigma_last)

    def restrict(self, k):
        """The same function on the first k nodes."""
        sl = self.sigma_last if k == len(self.grid) else None
        return GridFunction(self.grid.prefix(k), self.values[:k], sigma_last=sl)


def _call_on_times(fn, times):
    """Evaluate a time -> value callable on an array of times, tolerating
    scalar-only callables; returns an (m, n) array."""
    m = len(times)
    try:
        out = np.asarray(fn(times), dtype=float)
    except Exception:
        out = None
    if out is not None:
        if out.shape == (m,):
            return out[:, None]
        if out.ndim == 2 and out.shape[0] == m:
            return out.copy()
        if out.shape == ():  # constant callable
            return np.full((m, 1), float(out))
    rows = [np.atleast_1d(np.asarray(fn(float(t)), dtype=float)) for t in times]
    return np.stack(rows, axis=0)


# ---------------------------------------------------------------------------
# delta derivative


def _dense_runs(grid):
    """Maximal index ranges [s, e] whose cells s..e-1 are all dense."""
    m = len(grid)
    cell_dense = ~grid.scattered[:-1]
    runs, s = [], None
    for i in range(m - 1):
        if cell_dense[i] and s is None:
            s = i
        if not cell_dense[i] and s is not None:
            runs.append((s, i))
            s = None
    if s is not None:
        runs.append((s, m - 1))
    return runs


def _edge_derivative(ts, vs):
    """Derivative at ts[0] of the polynomial through (ts[i], vs[i]).

    Lagrange differentiation weights at the left endpoint; used with three
    or four points (second/third order).  The extra order matters when the
    result is differentiated again, as in an Euler-Lagrange residual: a
    uniformly O(h^k) error survives one more division by h as O(h^{k-1}).
    """
    x0 = ts[0]
    out = np.zeros_like(vs[0])
    k = len(ts)
    for j in range(k):
        if j == 0:
            w = sum(1.0 / (x0 - ts[i]) for i in range(1, k))
        else:
            num = 1.0
            for i in range(1, k):
                if i != j:
                    num *= x0 - ts[i]
            den = 1.0
            for i in range(k):
                if i != j:
                    den *= ts[j] - ts[i]
            w = num / den
        out = out + w * vs[j]
    return out


def _branch_end_stencils(deriv, t, v, s, e):
    """Recompute slopes near a dense run whose final node e is scattered.

    The sample at node e belongs to the jump: for derived rows (sigma
    shifts, delta quotients, partials along a path) it is the post-jump
    value and is discontinuous with the dense branch s..e-1, so stencils
    for branch nodes must not reference it.  The end stencil used at e-1
    is the mirror image of the start stencil and carries the identical
    h^2/6 f''' leading error, keeping the error field constant across a
    uniform run (smooth inputs lose nothing).
    """
    nb = e - s  # number of branch nodes
    if nb < 2:
        return  # lone branch node: the forward quotient is all there is
    if nb == 2:
        slope = (v[e - 1] - v[e - 2]) / (t[e - 1] - t[e - 2])
        deriv[s] = slope
        deriv[e - 1] = slope
        return
    if nb == 3:
        back = np.arange(e - 1, e - 4, -1)
        deriv[s] = _edge_derivative(t[s : s + 3], v[s : s + 3])
        deriv[e - 1] = _edge_derivative(t[back], v[back])
        return
    steps = np.diff(t[e - 4 : e])
    if np.ptp(steps) <= 1e-9 * steps[0]:
        h_loc = steps[-1]
        deriv[e - 1] = (
            4.0 * v[e - 1] - 7.0 * v[e - 2] + 4.0 * v[e - 3] - v[e - 4]
        ) / (2.0 * h_loc)
    else:
        back = np.arange(e - 1, e - 5, -1)
        deriv[e - 1] = _edge_derivative(t[back], v[back])


def delta_derivative_all(f):
    """Delta derivative at every node where it is computable.

    Returns (deriv, defined): an (m, n) array and a boolean mask.  Scattered
    nodes use the exact jump quotient (the final node too, when the function
    carries a sigma_last extension); dense nodes use second-order central /
    one-sided differences; the final node of a grid ending dense is
    undefined.  Stencils within a dense run never read the run's final node
    when that node is scattered, since sampled delta-calculus rows jump
    there.
    """
    grid, v = f.grid, f.values
    m, n = v.shape
    t = grid.nodes
    deriv = np.zeros((m, n))
    defined = np.zeros(m, dtype=bool)

    scat = grid.scattered.copy()
    scat_inner = scat.copy()
    scat_inner[-1] = False
    idx = np.nonzero(scat_inner)[0]
    if len(idx):
        deriv[idx] = (v[idx + 1] - v[idx]) / grid.mu[idx, None]
        defined[idx] = True
    if scat[-1] and f.sigma_last is not None:
        deriv[-1] = (f.sigma_last - v[-1]) / grid.mu[-1]
        defined[-1] = True

    for s, e in _dense_runs(grid):
        if e - s >= 2:
            j = np.arange(s + 1, e)
            deriv[j] = (v[j + 1] - v[j - 1]) / (t[j + 1] - t[j - 1])[:, None]
            steps = np.diff(t[s : min(s + 4, e + 1)])
            uniform = len(steps) >= 3 and np.ptp(steps) <= 1e-9 * steps[0]
            if uniform:
                # cubic-fit derivative plus h^2/6 times the cubic's third
                # derivative: reproduces the central-difference error field
                # h^2/6 f''' at the edge, so differencing the result again
                # (as the E-L residual does) stays O(h^2) instead of O(h)
                h_loc = steps[0]
                deriv[s] = (
                    -4.0 * v[s] + 7.0 * v[s + 1] - 4.0 * v[s + 2] + v[s + 3]
                ) / (2.0 * h_loc)
            else:
                stencil = min(4, e - s + 1)
                deriv[s] = _edge_derivative(t[s : s + stencil], v[s : s + stencil])
            if scat[e]:
                _branch_end_stencils(deriv, t, v, s, e)
        else:  # two-node run: plain forward difference, first order
            deriv[s] = (v[s + 1] - v[s]) / (t[s + 1] - t[s])
        defined[s:e] = True
    return deriv, defined


def delta_derivative(f, i=None):
    """Delta derivative of a grid function.

    With ``i`` given, the derivative vector at node i (BoundaryUndefined if
    the node has no usable forward information).  Without ``i``, the pair
    (deriv, defined) from delta_derivative_all.
    """
    if len(f.grid) < 2:
        raise GridTooSmall("need at least two nodes for a delta derivative")
    deriv, defined = delta_derivative_all(f)
    if i is None:
        return deriv, defined
    if not defined[i]:
        raise BoundaryUndefined(
            f"delta derivative undefined at node {i} (t={f.grid.nodes[i]!r})"
        )
    return deriv[i]


def sigma_shift(f):
    """The composition f(sigma(.)) as a grid function.

    At scattered nodes this is the next node's value; at dense nodes it is
    the value itself.  If the grid ends at a right-scattered node and no
    sigma_last extension is stored, the result lives on the grid minus its
    last node.
    """
    grid, v = f.grid, f.values
    m = len(grid)
    if m < 2:
        raise GridTooSmall("need at least two nodes for a sigma shift")
    out = v.copy()
    scat_inner = grid.scattered.copy()
    scat_inner[-1] = False
    idx = np.nonzero(scat_inner)[0]
    out[idx] = v[idx + 1]
    if grid.scattered[-1]:
        if f.sigma_last is None:
            return GridFunction(grid.prefix(m - 1), out[: m - 1])
        out[-1] = f.sigma_last
    return GridFunction(grid, out)


def sigma_shift_all(f):
    """Like sigma_shift, as (values, defined) aligned with the full grid."""
    grid, v = f.grid, f.values
    out = v.copy()
    defined = np.ones(len(grid), dtype=bool)
    scat_inner = grid.scattered.copy()
    scat_inner[-1] = False
    idx = np.nonzero(scat_inner)[0]
    out[idx] = v[idx + 1]
    if grid.scattered[-1]:
        if f.sigma_last is None:
            defined[-1] = False
        else:
            out[-1] = f.sigma_last
    return out, defined


# ---------------------------------------------------------------------------
# delta integral


def _cell_weights(grid):
    """Per-cell quadrature split: cell i integrates to
    w_prev[i] f(i-1) + w_left[i] f(i) + w_right[i] f(i+1).

    Scattered cells contribute mu*f(left) exactly; dense cells the
    trapezoid (dt/2)(f(left)+f(right)).  A dense cell whose right node is
    scattered is the last cell of its branch: the right sample there is the
    post-jump value of a delta-calculus row, so the trapezoid instead uses
    a linear extrapolation from the two preceding branch nodes (still
    second order, w_prev carries the extrapolation weight).  With no
    usable branch neighbor the cell falls back to the left rectangle.
    """
    dt = np.diff(grid.nodes)
    scat = grid.scattered[:-1]
    w_prev = np.zeros_like(dt)
    w_left = np.where(scat, grid.mu[:-1], 0.5 * dt)
    w_right = np.where(scat, 0.0, 0.5 * dt)
    for i in np.nonzero((~scat) & grid.scattered[1:])[0]:
        if i >= 1 and not grid.scattered[i - 1]:
            prev = grid.nodes[i] - grid.nodes[i - 1]
            w_prev[i] = -(dt[i] * dt[i]) / (2.0 * prev)
            w_left[i] = dt[i] - w_prev[i]
        else:
            w_left[i] = dt[i]
        w_right[i] = 0.0
    return w_prev, w_left, w_right


def _cell_values(v, w_prev, w_left, w_right, i0, i1):
    """Cell integrals for cells i0..i1-1 of an (m, n) value array."""
    sl = slice(i0, i1)
    cells = w_left[sl, None] * v[i0:i1] + w_right[sl, None] * v[i0 + 1 : i1 + 1]
    for k in np.nonzero(w_prev[sl])[0]:
        cells[k] += w_prev[i0 + k] * v[i0 + k - 1]
    return cells


def cumulative_delta_integral(f):
    """F(t_i) = integral from the first node to t_i; an (m, n) array."""
    v = f.values
    w_prev, w_left, w_right = _cell_weights(f.grid)
    cells = _cell_values(v, w_prev, w_left, w_right, 0, len(v) - 1)
    out = np.zeros_like(v)
    np.cumsum(cells, axis=0, out=out[1:])
    return out

def delta_integral(f, lo, hi):
    """Delta integral of f over [lo, hi]; endpoints must be grid nodes.

    Orientation follows int_a^b = -int_b^a; int_c^c = 0.  Exact for
    scattered cells, composite trapezoid on continuous runs.
    """
    i0 = f.grid.index_of(lo)
    i1 = f.grid.index_of(hi)
    if i0 == i1:
        return np.zeros(f.dim)
    sign = 1.0
    if i0 > i1:
        i0, i1, sign = i1, i0, -1.0
    v = f.values
    w_prev, w_left, w_right = _cell_weights(f.grid)
    cells = _cell_values(v, w_prev, w_left, w_right, i0, i1)
    return sign * cells.sum(axis=0)


# ---------------------------------------------------------------------------
# limits of horizon sequences


class LimitKind(Enum):
    CONVERGED = "converged"
    DIVERGES_PLUS = "diverges_plus"
    DIVERGES_MINUS = "diverges_minus"
    OSCILLATES = "oscillates"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class LimitConfig:
    """Thresholds of the limit classifier.

    The values are heuristics: convergence means the last ``window``
    samples agree to rel_tol (with an absolute floor), divergence means a
    monotone trend whose per-horizon rate does not decay (the last rate
    retains at least ``rate_keep`` of the first) or that has already passed
    div_threshold in magnitude, oscillation means a spread with small drift
    between the half-window means.
    """

    rel_tol: float = 1e-8
    abs_floor: float = 1e-10
    div_threshold: float = 1e6
    window: int = 5
    rate_keep: float = 0.5
    drift_frac: float = 0.25


@dataclass(frozen=True)
class LimitEstimate:
    """Outcome of a numerical limit: a kind plus the evidence that led to it.

    ``value`` is set for CONVERGED, ``lo``/``hi`` bound the swing for
    OSCILLATES.  ``evidence`` keeps the (horizon, sample) pairs inspected.
    """

    kind: LimitKind
    value: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    evidence: tuple = ()

    def to_dict(self):
        out = {"kind": self.kind.value}
        if self.value is not None:
            out["value"] = self.value
        if self.lo is not None:
            out["lo"] = self.lo
        if self.hi is not None:
            out["hi"] = self.hi
        out["evidence"] = [[float(h), float(v)] for h, v in self.evidence]
        return out


def classify_limit(pairs, config=LimitConfig()):
    """Classify the limit of samples (horizon, value) with growing horizons."""
    pairs = [(float(h), float(v)) for h, v in pairs]
    w = config.window
    if w < 3:
        raise InsufficientHorizons("classifier window must be >= 3")
    if len(pairs) < w:
        raise InsufficientHorizons(
            f"need at least {w} horizon samples, got {len(pairs)}"
        )
    hs = np.array([h for h, _ in pairs])
    if not np.all(np.diff(hs) > 0):
        raise InsufficientHorizons("horizons must be strictly increasing")
    p = np.array([v for _, v in pairs[-w:]])
    hw = hs[-w:]
    evidence = tuple(pairs)

    mean = float(p.mean())
    tol = max(config.abs_floor, config.rel_tol * abs(mean))
    if np.max(np.abs(p - mean)) <= tol:
        return LimitEstimate(LimitKind.CONVERGED, value=mean, evidence=evidence)

    diffs = np.diff(p)
    vs = np.array([v for _, v in pairs])
    # average growth rate over the first window vs over the last one; a
    # diverging drift keeps a non-decaying rate, a slowly converging tail
    # does not (e.g. partial sums of 1/t^2)
    first_rate = (vs[w - 1] - vs[0]) / (hs[w - 1] - hs[0])
    last_rate = (vs[-1] - vs[-w]) / (hs[-1] - hs[-w])
    if np.all(diffs > 0):
        if p[-1] > config.div_threshold or last_rate >= config.rate_keep * first_rate:
            return LimitEstimate(LimitKind.DIVERGES_PLUS, evidence=evidence)
    elif np.all(diffs < 0):
        if p[-1] < -config.div_threshold or last_rate <= config.rate_keep * first_rate:
            return LimitEstimate(LimitKind.DIVERGES_MINUS, evidence=evidence)
    else:
        half = w // 2
        drift = abs(float(p[half:].mean()) - float(p[:half].mean()))
        spread = float(p.max() - p.min())
        if drift <= config.drift_frac * spread:
            return LimitEstimate(
                LimitKind.OSCILLATES,
                lo=float(p.min()),
                hi=float(p.max()),
                evidence=evidence,
            )
    return LimitEstimate(LimitKind.UNDETERMINED, evidence=evidence)


def improper_integral(ts, f, a, horizons, *, h, config=LimitConfig()):
    """Improper delta integral of a scalar integrand over [a, +inf).

    Partial integrals are computed at each horizon (all members of the
    scale, strictly increasing) with dense sampling step ``h``; the
    resulting sequence is classified by classify_limit.
    """
    horizons = [float(b) for b in horizons]
    if len(horizons) < config.window:
        raise InsufficientHorizons(
            f"need at least {config.window} horizons, got {len(horizons)}"
        )
    if not all(x < y for x, y in zip(horizons, horizons[1:])):
        raise InsufficientHorizons("horizons must be strictly increasing")
    a = ts.snap(a)
    if not horizons[0] > a:
        raise InsufficientHorizons("horizons must lie beyond the left endpoint")
    for b in horizons:
        if not ts.contains(b):
            raise NotInTimeScale(f"horizon {b!r} is not in the time scale")

    partials, total, prev = [], 0.0, a
    for b in horizons:
        grid = ts.build_grid(prev, b, h)
        gf = GridFunction.from_callable(grid, f, extend=False)
        if gf.dim != 1:
            raise DimensionMismatch("improper integrand must be scalar-valued")
        total += float(delta_integral(gf, grid.nodes[0], grid.nodes[-1])[0])
        partials.append(total)
        prev = b
    return classify_limit(list(zip(horizons, partials)), config)


# ---------------------------------------------------------------------------
# identity pack


@dataclass(frozen=True)
class IdentityReport:
    """Max absolute residuals of the standard delta-calculus identities
    for a pair of scalar grid functions f, g on one grid.

    shift_rule        f(sigma) = f + mu * f_delta
    product_left      (fg)_delta = f_delta * g(sigma) + f * g_delta
    product_right     (fg)_delta = f_delta * g + f(sigma) * g_delta
    parts_sigma_f     int f(sigma) g_delta = [fg] - int f_delta g
    parts_plain_f     int f g_delta = [fg] - int f_delta g(sigma)

    Residuals are reported over the largest prefix window on which every
    factor is defined, split into scattered-node and dense-node maxima for
    the pointwise rules (integration-by-parts residuals are single scalars).
    """

    shift_rule: float
    product_left: float
    product_right: float
    parts_sigma_f: float
    parts_plain_f: float
    shift_rule_scattered: float
    shift_rule_dense: float
    product_left_scattered: float
    product_left_dense: float
    product_right_scattered: float
    product_right_dense: float

    def max_residual(self):
        return max(
            self.shift_rule,
            self.product_left,
            self.product_right,
            self.parts_sigma_f,
            self.parts_plain_f,
        )

    def to_dict(self):
        return {
            "shift_rule": self.shift_rule,
            "product_left": self.product_left,
            "product_right": self.product_right,
            "parts_sigma_f": self.parts_sigma_f,
            "parts_plain_f": self.parts_plain_f,
        }


def _split_max(res, scat_mask):
    """(overall, scattered-only, dense-only) maxima of |res|."""
    res = np.abs(res)
    overall = float(res.max()) if len(res) else 0.0
    s = float(res[scat_mask].max()) if scat_mask.any() else 0.0
    d = float(res[~scat_mask].max()) if (~scat_mask).any() else 0.0
    return overall, s, d


def identity_pack(f, g):
    """Check the shift rule, both product rules and both integration-by-parts
    forms for scalar grid functions f and g on the same grid."""
    if f.grid is not g.grid and not np.array_equal(f.grid.nodes, g.grid.nodes):
        raise DimensionMismatch("identity pack needs both functions on one grid")
    if f.dim != 1 or g.dim != 1:
        raise DimensionMismatch("identity pack handles scalar functions only")
    grid = f.grid
    m = len(grid)
    if m < 3:
        raise GridTooSmall("need at least three nodes for the identity pack")

    fg = GridFunction(grid, f.values * g.values,
                      sigma_last=None if f.sigma_last is None or g.sigma_last is None
                      else f.sigma_last * g.sigma_last)
    fd, def_fd = delta_derivative_all(f)
    gd, def_gd = delta_derivative_all(g)
    pd, def_pd = delta_derivative_all(fg)
    fs, def_fs = sigma_shift_all(f)
    gs, def_gs = sigma_shift_all(g)

    defined = def_fd & def_gd & def_pd & def_fs & def_gs
    K = int(np.nonzero(defined)[0].max()) + 1 if defined.any() else 0
    if K < 2 or not defined[:K].all():
        raise GridTooSmall("too few nodes with defined derivatives")

    v_f, v_g = f.values[:K], g.values[:K]
    fd, gd, pd = fd[:K], gd[:K], pd[:K]
    fs, gs = fs[:K], gs[:K]
    mu = grid.mu[:K, None]
    scat = grid.scattered[:K]

    r_shift = fs - (v_f + mu * fd)
    r_left = pd - (fd * gs + v_f * gd)
    r_right = pd - (fd * v_g + fs * gd)
    shift_all, shift_s, shift_d = _split_max(r_shift[:, 0], scat)
    left_all, left_s, left_d = _split_max(r_left[:, 0], scat)
    right_all, right_s, right_d = _split_max(r_right[:, 0], scat)

    # integration by parts over [t_0, t_{K-1}]
    sub = grid.prefix(K)
    lo, hi = sub.nodes[0], sub.nodes[-1]
    boundary = float((f.values[K - 1] * g.values[K - 1] - f.values[0] * g.values[0])[0])

    def integ(vals):
        return float(delta_integral(GridFunction(sub, vals), lo, hi)[0])

    parts_sigma_f = abs(integ(fs * gd) - (boundary - integ(fd * v_g)))
    parts_plain_f = abs(integ(v_f * gd) - (boundary - integ(fd * gs)))

    return IdentityReport(
        shift_rule=shift_all,
        product_left=left_all,
        product_right=right_all,
        parts_sigma_f=parts_sigma_f,
        parts_plain_f=parts_plain_f,
        shift_rule_scattered=shift_s,
        shift_rule_dense=shift_d,
        product_left_scattered=left_s,
        product_left_dense=left_d,
        product_right_scattered=right_s,
        product_right_dense=right_d,
    )
