"""Unbounded time scales described by finitely many segments.

A time scale here is a closed subset of the reals with supremum +infinity,
given as an ordered, pairwise disjoint union of closed intervals and finite
point sets, finished by exactly one unbounded tail: a continuous ray
[c, inf) or an arithmetic progression {c, c+s, c+2s, ...}.  This covers the
classical scales (R restricted to [a, inf), Z, hZ) and every hybrid used in
the tests, while keeping the jump operators sigma/rho and the graininess mu
exactly computable from the structure instead of by numerical search.

Conventions, for a scale T with smallest element a:

    sigma(t) = inf {s in T : s > t}      (forward jump)
    rho(t)   = sup {s in T : s < t}      (backward jump, rho(a) = a)
    mu(t)    = sigma(t) - t              (graininess)

Since sup T = +inf, sigma never needs the "sup T" fallback and every point
has a forward jump inside the scale.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from .errors import (
    DSLParseError,
    InvalidTimeScale,
    InvalidWindow,
    NodeNotInGrid,
    NotInTimeScale,
    StepNotPositive,
)

#: absolute tolerance for membership tests at endpoints / lattice points
TOL_MEM = 1e-12


# ---------------------------------------------------------------------------
# segments


@dataclass(frozen=True)
class ClosedInterval:
    """A continuous piece [lo, hi] with lo <= hi."""

    lo: float
    hi: float

    unbounded = False

    def minimum(self):
        return self.lo

    def maximum(self):
        return self.hi

    def contains(self, t, tol=TOL_MEM):
        return self.lo - tol <= t <= self.hi + tol

    def snap(self, t):
        return min(max(t, self.lo), self.hi)

    def sigma_within(self, t):
        # every point left of hi is right-dense
        return t if t < self.hi else None

    def rho_within(self, t):
        return t if t > self.lo else None

    def floor(self, x, tol=TOL_MEM):
        if x < self.lo - tol:
            return None
        return min(x, self.hi) if x >= self.lo else self.lo

    def ceil(self, x, tol=TOL_MEM):
        if x > self.hi + tol:
            return None
        return max(x, self.lo) if x <= self.hi else self.hi


@dataclass(frozen=True)
class DiscretePoints:
    """A finite set of isolated points, strictly increasing."""

    values: tuple

    unbounded = False

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def minimum(self):
        return self.values[0]

    def maximum(self):
        return self.values[-1]

    def _index(self, t, tol=TOL_MEM):
        j = int(np.searchsorted(self.values, t))
        for c in (j - 1, j):
            if 0 <= c < len(self.values) and abs(self.values[c] - t) <= tol:
                return c
        return None

    def contains(self, t, tol=TOL_MEM):
        return self._index(t, tol) is not None

    def snap(self, t):
        j = self._index(t)
        return self.values[j]

    def sigma_within(self, t):
        j = self._index(t)
        return self.values[j + 1] if j + 1 < len(self.values) else None

    def rho_within(self, t):
        j = self._index(t)
        return self.values[j - 1] if j >= 1 else None

    def floor(self, x, tol=TOL_MEM):
        j = int(np.searchsorted(self.values, x + tol)) - 1
        return self.values[j] if j >= 0 else None

    def ceil(self, x, tol=TOL_MEM):
        j = int(np.searchsorted(self.values, x - tol))
        return self.values[j] if j < len(self.values) else None


@dataclass(frozen=True)
class UnboundedRay:
    """The continuous tail [start, inf)."""

    start: float

    unbounded = True

    def minimum(self):
        return self.start

    def maximum(self):
        return None

    def contains(self, t, tol=TOL_MEM):
        return t >= self.start - tol

    def snap(self, t):
        return max(t, self.start)

    def sigma_within(self, t):
        return t

    def rho_within(self, t):
        return t if t > self.start else None

    def floor(self, x, tol=TOL_MEM):
        if x < self.start - tol:
            return None
        return max(x, self.start)

    def ceil(self, x, tol=TOL_MEM):
        return max(x, self.start)


@dataclass(frozen=True)
class ArithmeticTail:
    """The discrete tail {start + k*step : k = 0, 1, 2, ...} with step > 0."""

    start: float
    step: float

    unbounded = True

    def minimum(self):
        return self.start

    def maximum(self):
        return None

    def _k(self, t):
        return int(round((t - self.start) / self.step))

    def contains(self, t, tol=TOL_MEM):
        k = self._k(t)
        return k >= 0 and abs(t - (self.start + self.step * k)) <= tol

    def snap(self, t):
        return self.start + self.step * self._k(t)

    def sigma_within(self, t):
        # exact by definition: sigma(t) = t + step for every member
        return t + self.step

    def rho_within(self, t):
        return t - self.step if self._k(t) >= 1 else None

    def floor(self, x, tol=TOL_MEM):
        k = math.floor((x - self.start) / self.step + tol / self.step + 1e-12)
        return self.start + self.step * k if k >= 0 else None

    def ceil(self, x, tol=TOL_MEM):
        k = math.ceil((x - self.start) / self.step - tol / self.step - 1e-12)
        return self.start + self.step * max(k, 0)


Segment = Union[ClosedInterval, DiscretePoints, UnboundedRay, ArithmeticTail]


# ---------------------------------------------------------------------------
# point classification


class Side(Enum):
    DENSE = "dense"
    SCATTERED = "scattered"


@dataclass(frozen=True)
class PointClass:
    """Left/right density of a point of the scale."""

    right: Side
    left: Side

    @property
    def isolated(self):
        return self.right is Side.SCATTERED and self.left is Side.SCATTERED

    @property
    def dense(self):
        return self.right is Side.DENSE and self.left is Side.DENSE


class NodeKind(Enum):
    SCATTERED_EXACT = "scattered_exact"
    DENSE_SAMPLE = "dense_sample"


# ---------------------------------------------------------------------------
# sampled grids


@dataclass(frozen=True)
class SampleGrid:
    """A finite sampling of a window [lo, hi] of a time scale.

    ``nodes`` is strictly increasing; every right-scattered point of the
    scale inside the window appears exactly (kind SCATTERED_EXACT, with its
    true graininess in ``mu``), continuous stretches are sampled uniformly
    with spacing <= h (kind DENSE_SAMPLE, mu = 0).  ``mu`` always holds the
    graininess of the underlying scale, also at the last node.
    """

    nodes: np.ndarray
    mu: np.ndarray
    scattered: np.ndarray  # boolean mask, True where mu > 0
    h: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        scat = np.asarray(self.scattered, dtype=bool)
        for name, arr in (("nodes", nodes), ("mu", mu), ("scattered", scat)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if nodes.ndim != 1 or len(nodes) < 1:
            raise InvalidWindow("grid needs at least one node")
        if len(nodes) > 1 and not np.all(np.diff(nodes) > 0):
            raise InvalidWindow("grid nodes must be strictly increasing")

    def __len__(self):
        return len(self.nodes)

    @property
    def window(self):
        return float(self.nodes[0]), float(self.nodes[-1])

    def kind(self, i):
        return NodeKind.SCATTERED_EXACT if self.scattered[i] else NodeKind.DENSE_SAMPLE

    def index_of(self, t, tol=1e-9):
        """Index of the node equal to t (within tol); NodeNotInGrid otherwise."""
        i = int(np.searchsorted(self.nodes, t))
        for c in (i - 1, i):
            if 0 <= c < len(self.nodes) and abs(self.nodes[c] - t) <= tol:
                return c
        raise NodeNotInGrid(f"{t!r} is not a node of this grid")

    def prefix(self, k):
        """The subgrid made of the first k nodes (per-node data unchanged)."""
        if not 1 <= k <= len(self.nodes):
            raise InvalidWindow(f"prefix length {k} out of range")
        return SampleGrid(self.nodes[:k], self.mu[:k], self.scattered[:k], self.h)


# ---------------------------------------------------------------------------
# the scale itself


@dataclass(frozen=True)
class TimeScaleSpec:
    """An unbounded time scale as an ordered tuple of disjoint segments."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise InvalidTimeScale("a time scale needs at least one segment")
        for seg in segs[:-1]:
            if seg.unbounded:
                raise InvalidTimeScale("only the last segment may be unbounded")
        if not segs[-1].unbounded:
            raise InvalidTimeScale("the last segment must be a ray or arithmetic tail")
        for seg in segs:
            if isinstance(seg, ClosedInterval) and not seg.lo <= seg.hi:
                raise InvalidTimeScale(f"interval with lo > hi: {seg}")
            if isinstance(seg, DiscretePoints):
                if len(seg.values) == 0:
                    raise InvalidTimeScale("empty point set")
                if np.any(np.diff(seg.values) <= TOL_MEM):
                    raise InvalidTimeScale("points must be strictly increasing")
            if isinstance(seg, ArithmeticTail) and not seg.step > 0:
                raise InvalidTimeScale(f"arithmetic step must be > 0: {seg}")
        for cur, nxt in zip(segs, segs[1:]):
            if not nxt.minimum() - cur.maximum() > TOL_MEM:
                raise InvalidTimeScale(
                    f"segments must be disjoint and ordered: {cur} then {nxt}"
                )

    # -- basic queries ------------------------------------------------------

    @property
    def a(self):
        """The smallest element of the scale."""
        return self.segments[0].minimum()

    def contains(self, t, tol=TOL_MEM):
        return any(seg.contains(t, tol) for seg in self.segments)

    def __contains__(self, t):
        return self.contains(t)

    def _locate(self, t, tol=TOL_MEM):
        for i, seg in enumerate(self.segments):
            if seg.contains(t, tol):
                return i, seg
        raise NotInTimeScale(f"{t!r} is not in the time scale")

    def snap(self, t, tol=TOL_MEM):
        """Exact member nearest to t (within tol); NotInTimeScale otherwise."""
        _, seg = self._locate(t, tol)
        return seg.snap(t)

    # -- jump operators -----------------------------------------------------

    def sigma(self, t):
        """Forward jump sigma(t) = inf {s in T : s > t}."""
        i, seg = self._locate(t)
        s = seg.sigma_within(seg.snap(t))
        if s is not None:
            return s
        return self.segments[i + 1].minimum()

    def rho(self, t):
        """Backward jump rho(t) = sup {s in T : s < t}, with rho(a) = a."""
        i, seg = self._locate(t)
        t = seg.snap(t)
        r = seg.rho_within(t)
        if r is not None:
            return r
        if i == 0:
            return t
        return self.segments[i - 1].maximum()

    def mu(self, t):
        """Graininess mu(t) = sigma(t) - t, computed structurally.

        For arithmetic tails this returns the step exactly; for the right
        end of a bounded segment it is the gap to the next segment; at
        right-dense points it is exactly 0.
        """
        i, seg = self._locate(t)
        t = seg.snap(t)
        if isinstance(seg, ArithmeticTail):
            return seg.step
        if isinstance(seg, (ClosedInterval, UnboundedRay)):
            hi = seg.maximum()
            if hi is None or t < hi:
                return 0.0
            return self.segments[i + 1].minimum() - t
        # discrete points
        nxt = seg.sigma_within(t)
        if nxt is None:
            nxt = self.segments[i + 1].minimum()
        return nxt - t

    def classify(self, t):
        right = Side.SCATTERED if self.sigma(t) > t else Side.DENSE
        left = Side.SCATTERED if self.rho(t) < t else Side.DENSE
        return PointClass(right=right, left=left)

    # -- member navigation --------------------------------------------------

    def floor_member(self, x):
        """Largest member <= x; NotInTimeScale if x < a."""
        for seg in reversed(self.segments):
            m = seg.floor(x)
            if m is not None:
                return m
        raise NotInTimeScale(f"no member of the scale lies at or below {x!r}")

    def ceil_member(self, x):
        """Smallest member >= x (always exists since sup T = +inf)."""
        for seg in self.segments:
            m = seg.ceil(x)
            if m is not None:
                return m
        return self.segments[-1].ceil(x)

    def advance(self, t, h):
        """One sampling step forward: sigma(t) if t is right-scattered,
        otherwise min(t + h, end of the continuous piece)."""
        i, seg = self._locate(t)
        t = seg.snap(t)
        if self.mu(t) > 0:
            return self.sigma(t)
        hi = seg.maximum()
        s = t + h
        if hi is not None and s > hi:
            return hi
        return s

    # -- grids ---------------------------------------------------------------

    def build_grid(self, lo, hi, h):
        """Sample the window [lo, hi] with dense spacing <= h.

        Scattered points are included exactly; each continuous stretch of
        length L contributes ceil(L/h) uniform subintervals.  lo and hi must
        be members with lo < hi.
        """
        if not h > 0:
            raise StepNotPositive(f"dense step must be > 0, got {h!r}")
        lo = self.snap(lo)
        hi = self.snap(hi)
        if not lo < hi:
            raise InvalidWindow(f"need lo < hi, got [{lo!r}, {hi!r}]")
        node_chunks, mu_chunks = [], []
        for i, seg in enumerate(self.segments):
            if seg.minimum() > hi + TOL_MEM:
                break
            smax = seg.maximum()
            if smax is not None and smax < lo - TOL_MEM:
                continue
            nxt_min = (
                self.segments[i + 1].minimum() if i + 1 < len(self.segments) else None
            )
            if isinstance(seg, DiscretePoints):
                vals = np.asarray(seg.values)
                j0 = int(np.searchsorted(vals, lo - TOL_MEM, side="left"))
                j1 = int(np.searchsorted(vals, hi + TOL_MEM, side="right"))
                if j1 <= j0:
                    continue
                pts = vals[j0:j1]
                mus = np.empty(len(pts))
                for k in range(len(pts)):
                    g = j0 + k
                    nxt = vals[g + 1] if g + 1 < len(vals) else nxt_min
                    mus[k] = nxt - pts[k]
                node_chunks.append(pts)
                mu_chunks.append(mus)
            elif isinstance(seg, ArithmeticTail):
                slack = TOL_MEM / seg.step + 1e-12
                k0 = max(0, math.ceil((lo - seg.start) / seg.step - slack))
                k1 = math.floor((hi - seg.start) / seg.step + slack)
                if k1 < k0:
                    continue
                pts = seg.start + seg.step * np.arange(k0, k1 + 1, dtype=float)
                node_chunks.append(pts)
                mu_chunks.append(np.full(len(pts), seg.step))
            else:  # ClosedInterval or UnboundedRay
                w_lo = max(lo, seg.minimum())
                w_hi = hi if smax is None else min(hi, smax)
                if w_hi < w_lo:
                    continue
                if w_hi == w_lo:
                    pts = np.array([w_lo])
                else:
                    n = max(1, math.ceil((w_hi - w_lo) / h - 1e-12))
                    pts = np.linspace(w_lo, w_hi, n + 1)
                mus = np.zeros(len(pts))
                if smax is not None and w_hi == smax:
                    mus[-1] = nxt_min - smax
                node_chunks.append(pts)
                mu_chunks.append(mus)
        nodes = np.concatenate(node_chunks)
        mu = np.concatenate(mu_chunks)
        return SampleGrid(nodes=nodes, mu=mu, scattered=mu > 0, h=float(h))


# ---------------------------------------------------------------------------
# convenience constructors


def union(*segments):
    return TimeScaleSpec(tuple(segments))


def integer_scale(start=0.0, step=1.0):
    """{start, start+step, ...}; step 1 from 0 gives the natural numbers."""
    return TimeScaleSpec((ArithmeticTail(float(start), float(step)),))


def real_ray(start=0.0):
    """The continuous half line [start, inf)."""
    return TimeScaleSpec((UnboundedRay(float(start)),))


# ---------------------------------------------------------------------------
# textual description language
#
#   union(interval(0, 1), points(2, 3), ray(5))
#   union(points(0), arith(1, 0.5))
#   arith(0, 1)

_TOKEN = re.compile(
    r"\s*(?:(?P<name>[A-Za-z_]+)"
    r"|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<punct>[(),]))"
)


def _tokenize_dsl(text):
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise DSLParseError(f"unexpected character at position {pos}: {text[pos]!r}")
        if m.group("name"):
            tokens.append(("name", m.group("name")))
        elif m.group("num"):
            tokens.append(("num", float(m.group("num"))))
        else:
            tokens.append(("punct", m.group("punct")))
        pos = m.end()
    return tokens


class _DSLParser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind, value=None):
        k, v = self.peek()
        if k != kind or (value is not None and v != value):
            want = value if value is not None else kind
            raise DSLParseError(f"expected {want!r}, got {v!r}")
        self.i += 1
        return v

    def numbers(self):
        self.take("punct", "(")
        out = [self.take("num")]
        while self.peek() == ("punct", ","):
            self.take("punct", ",")
            out.append(self.take("num"))
        self.take("punct", ")")
        return out

    def segment(self):
        name = self.take("name")
        args = self.numbers()
        if name == "interval":
            if len(args) != 2:
                raise DSLParseError("interval() takes exactly two numbers")
            return ClosedInterval(args[0], args[1])
        if name == "points":
            return DiscretePoints(tuple(args))
        if name == "ray":
            if len(args) != 1:
                raise DSLParseError("ray() takes exactly one number")
            return UnboundedRay(args[0])
        if name == "arith":
            if len(args) != 2:
                raise DSLParseError("arith() takes exactly two numbers")
            return ArithmeticTail(args[0], args[1])
        raise DSLParseError(f"unknown segment kind {name!r}")

    def parse(self):
        k, v = self.peek()
        if (k, v) == ("name", "union"):
            self.take("name")
            self.take("punct", "(")
            segs = [self.segment()]
            while self.peek() == ("punct", ","):
                self.take("punct", ",")
                segs.append(self.segment())
            self.take("punct", ")")
        else:
            segs = [self.segment()]
        if self.i != len(self.tokens):
            raise DSLParseError("trailing input after time-scale description")
        return segs


def parse_timescale(text):
    """Parse a description like ``union(interval(0,1), ray(2))``."""
    try:
        segs = _DSLParser(_tokenize_dsl(text)).parse()
    except DSLParseError:
        raise
    except Exception as exc:  # defensive: normalize stray errors
        raise DSLParseError(str(exc)) from exc
    try:
        return TimeScaleSpec(tuple(segs))
    except InvalidTimeScale as exc:
        raise DSLParseError(str(exc)) from exc


def _fmt(x):
    return repr(float(x))


def format_timescale(ts):
    """Inverse of parse_timescale (up to float formatting)."""
    parts = []
    for seg in ts.segments:
        if isinstance(seg, ClosedInterval):
            parts.append(f"interval({_fmt(seg.lo)}, {_fmt(seg.hi)})")
        elif isinstance(seg, DiscretePoints):
            parts.append(f"points({', '.join(_fmt(v) for v in seg.values)})")
        elif isinstance(seg, UnboundedRay):
            parts.append(f"ray({_fmt(seg.start)})")
        else:
            parts.append(f"arith({_fmt(seg.start)}, {_fmt(seg.step)})")
    if len(parts) == 1:
        return parts[0]
    return f"union({', '.join(parts)})"


def timescale_from_structured(obj):
    """Build a scale from a list of {'kind': ..., ...} mappings."""
    segs = []
    for item in obj:
        kind = item.get("kind")
        if kind == "interval":
            segs.append(ClosedInterval(float(item["lo"]), float(item["hi"])))
        elif kind == "points":
            segs.append(DiscretePoints(tuple(float(v) for v in item["values"])))
        elif kind == "ray":
            segs.append(UnboundedRay(float(item["start"])))
        elif kind == "arith":
            segs.append(ArithmeticTail(float(item["start"]), float(item["step"])))
        else:
            raise DSLParseError(f"unknown segment kind {kind!r}")
    return TimeScaleSpec(tuple(segs))


def timescale_to_structured(ts):
    out = []
    for seg in ts.segments:
        if isinstance(seg, ClosedInterval):
            out.append({"kind": "interval", "lo": seg.lo, "hi": seg.hi})
        elif isinstance(seg, DiscretePoints):
            out.append({"kind": "points", "values": list(seg.values)})
        elif isinstance(seg, UnboundedRay):
            out.append({"kind": "ray", "start": seg.start})
        else:
            out.append({"kind": "arith", "start": seg.start, "step": seg.step})
    return out
