# ritzkit/geometry.py
"""
Domains, collocation sampling, quadrature rules and parameter initialization.

Randomness: every draw comes from a numpy Philox generator keyed by
SeedSequence(seed, spawn_key=(stream,)), so interior, boundary, init, ...
draws are independent streams of the same seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .domain import (
    NetworkParams,
    SCALING_NTK,
    SCALING_PLAIN,
    TRAINABLE_FULL,
    TRAINABLE_OUTER,
)
from .errors import DimensionMismatchError
from .operators import CutoffSpec

logger = logging.getLogger(__name__)


STREAM_INTERIOR = 0
STREAM_BOUNDARY = 1
STREAM_INIT = 2
STREAM_GAMMA = 3
STREAM_BOOTSTRAP = 4
STREAM_AUDIT = 5

PRNG_IDENTITY = "numpy.random.Philox(4x64) seeded by SeedSequence(seed, spawn_key=(stream,))"

DOMAIN_HYPERRECTANGLE = "hyperrectangle"
DOMAIN_TIME_SLAB = "time_slab"


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


# -----------------------------
# Domains
# -----------------------------

@dataclass(frozen=True)
class Facet:
    axis: int
    side: str  # "lo" | "hi"
    value: float
    normal: Tuple[float, ...]
    measure: float

    @property
    def key(self) -> Tuple[int, str]:
        return (self.axis, self.side)


@dataclass(frozen=True)
class Domain:
    """
    Axis-aligned box [lo, hi].

    time_slab uses coordinates (t, x...); its boundary excludes the final-time
    facet and its flat segment is the initial slice t = t0. For a
    hyperrectangle the flat segment defaults to the lo face of the last axis.
    """
    kind: str
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    gamma_axis: int = -1
    gamma_side: str = "lo"

    def __post_init__(self):
        if self.kind not in (DOMAIN_HYPERRECTANGLE, DOMAIN_TIME_SLAB):
            raise ValueError(f"unknown domain kind '{self.kind}'")
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if not lo or len(lo) != len(hi):
            raise ValueError("domain needs matching non-empty lo/hi")
        if any(not h > l for l, h in zip(lo, hi)):
            raise ValueError(f"degenerate domain: lo={lo} hi={hi}")
        if self.kind == DOMAIN_TIME_SLAB and len(lo) < 2:
            raise ValueError("time_slab needs at least one space dimension")
        axis = int(self.gamma_axis) % len(lo)
        side = str(self.gamma_side)
        if side not in ("lo", "hi"):
            raise ValueError("flat segment side must be 'lo' or 'hi'")
        if self.kind == DOMAIN_TIME_SLAB:
            axis, side = 0, "lo"
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "gamma_axis", axis)
        object.__setattr__(self, "gamma_side", side)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi)

    def volume(self) -> float:
        return float(np.prod(self.hi_array - self.lo_array))

    def centroid(self) -> np.ndarray:
        return 0.5 * (self.lo_array + self.hi_array)

    def _facet(self, axis: int, side: str) -> Facet:
        sides = self.hi_array - self.lo_array
        measure = float(np.prod(np.delete(sides, axis))) if self.d > 1 else 1.0
        normal = [0.0] * self.d
        normal[axis] = -1.0 if side == "lo" else 1.0
        value = self.lo[axis] if side == "lo" else self.hi[axis]
        return Facet(axis=axis, side=side, value=value, normal=tuple(normal), measure=measure)

    def facets(self) -> List[Facet]:
        out: List[Facet] = []
        for axis in range(self.d):
            for side in ("lo", "hi"):
                if self.kind == DOMAIN_TIME_SLAB and axis == 0 and side == "hi":
                    continue
                out.append(self._facet(axis, side))
        return out

    def flat_segment(self) -> Facet:
        return self._facet(self.gamma_axis, self.gamma_side)

    def boundary_measure(self) -> float:
        return float(sum(f.measure for f in self.facets()))

    def contains(self, X: np.ndarray, strict: bool = False) -> np.ndarray:
        X = np.atleast_2d(X)
        if strict:
            return np.all((X > self.lo_array) & (X < self.hi_array), axis=1)
        return np.all((X >= self.lo_array) & (X <= self.hi_array), axis=1)

    def cutoff(self, margin_fraction: float = 0.1, smoothness: int = 2) -> CutoffSpec:
        return CutoffSpec(lo=self.lo, hi=self.hi, margin_fraction=margin_fraction, smoothness=smoothness)

    def to_dict(self) -> Dict:
        if self.kind == DOMAIN_TIME_SLAB:
            return {
                "kind": DOMAIN_TIME_SLAB,
                "t": [self.lo[0], self.hi[0]],
                "x": [[l, h] for l, h in zip(self.lo[1:], self.hi[1:])],
            }
        return {
            "kind": DOMAIN_HYPERRECTANGLE,
            "lo": list(self.lo),
            "hi": list(self.hi),
            "flat_segment": {"axis": self.gamma_axis, "side": self.gamma_side},
        }

    @staticmethod
    def from_dict(d: Dict) -> "Domain":
        kind = str(d.get("kind", DOMAIN_HYPERRECTANGLE))
        if kind == DOMAIN_TIME_SLAB:
            t = d.get("t") or [0.0, 1.0]
            xs = d.get("x") or [[-1.0, 1.0]]
            lo = [float(t[0])] + [float(r[0]) for r in xs]
            hi = [float(t[1])] + [float(r[1]) for r in xs]
            return Domain(kind=kind, lo=tuple(lo), hi=tuple(hi))
        seg = d.get("flat_segment") or {}
        return Domain(
            kind=kind,
            lo=tuple(d["lo"]),
            hi=tuple(d["hi"]),
            gamma_axis=int(seg.get("axis", -1)),
            gamma_side=str(seg.get("side", "lo")),
        )


def unit_square() -> Domain:
    return Domain(kind=DOMAIN_HYPERRECTANGLE, lo=(0.0, 0.0), hi=(1.0, 1.0))


def time_slab(t: Tuple[float, float] = (0.0, 1.0), x: Tuple[float, float] = (-1.0, 1.0)) -> Domain:
    return Domain(kind=DOMAIN_TIME_SLAB, lo=(float(t[0]), float(x[0])), hi=(float(t[1]), float(x[1])))


# -----------------------------
# Collocation sets
# -----------------------------

@dataclass
class CollocationSet:
    interior: np.ndarray                  # (n1, d)
    boundary: np.ndarray                  # (n2, d)
    normals: np.ndarray                   # (n2, d)
    gamma_subset: np.ndarray              # indices into boundary
    interior_weights: np.ndarray          # (n1,)
    boundary_weights: np.ndarray          # (n2,)
    facet_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n1(self) -> int:
        return int(self.interior.shape[0])

    @property
    def n2(self) -> int:
        return int(self.boundary.shape[0])

    @property
    def d(self) -> int:
        return int(self.interior.shape[1])

    def gamma_points(self) -> np.ndarray:
        return self.boundary[self.gamma_subset]

    def rows(self) -> List[Tuple[Tuple[float, ...], str, float]]:
        """(coords, region, weight) rows for CSV export."""
        out: List[Tuple[Tuple[float, ...], str, float]] = []
        for p, wt in zip(self.interior, self.interior_weights):
            out.append((tuple(float(v) for v in p), "interior", float(wt)))
        gamma = set(int(i) for i in self.gamma_subset)
        for i, (p, wt) in enumerate(zip(self.boundary, self.boundary_weights)):
            region = "gamma" if i in gamma else "boundary"
            out.append((tuple(float(v) for v in p), region, float(wt)))
        return out


def _open_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    # random() is [0, 1); redraw exact zeros so interior points stay strictly inside
    while np.any(u == 0.0):
        zeros = u == 0.0
        u[zeros] = rng.random(int(zeros.sum()))
    return u


def _points_on_facet(domain: Domain, facet: Facet, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = domain.lo_array, domain.hi_array
    P = lo[None, :] + rng.random((n, domain.d)) * (hi - lo)[None, :]
    P[:, facet.axis] = facet.value
    return P


def sample(domain: Domain, n_interior: int, n_boundary: int, seed: int) -> CollocationSet:
    """
    Uniform Monte Carlo collocation.

    Boundary points choose a facet with probability proportional to its measure.
    n_boundary = 0 is accepted for cutoff problems that need no boundary term.
    """
    if int(n_interior) < 1:
        raise ValueError("n_interior must be >= 1")
    if int(n_boundary) < 0:
        raise ValueError("n_boundary must be >= 0")
    n1, n2 = int(n_interior), int(n_boundary)
    lo, hi = domain.lo_array, domain.hi_array

    rng_i = stream_generator(seed, STREAM_INTERIOR)
    interior = lo[None, :] + _open_uniform(rng_i, (n1, domain.d)) * (hi - lo)[None, :]

    facets = domain.facets()
    rng_b = stream_generator(seed, STREAM_BOUNDARY)
    if n2 > 0:
        probs = np.array([f.measure for f in facets])
        probs = probs / probs.sum()
        ids = rng_b.choice(len(facets), size=n2, p=probs)
    else:
        ids = np.zeros(0, dtype=int)
    boundary = np.zeros((n2, domain.d))
    normals = np.zeros((n2, domain.d))
    for fid, facet in enumerate(facets):
        sel = np.nonzero(ids == fid)[0]
        if sel.size == 0:
            continue
        boundary[sel] = _points_on_facet(domain, facet, sel.size, rng_b)
        normals[sel] = np.array(facet.normal)[None, :]

    gamma_key = domain.flat_segment().key
    gamma_ids = [i for i, f in enumerate(facets) if f.key == gamma_key]
    gamma_subset = np.nonzero(np.isin(ids, gamma_ids))[0]

    return CollocationSet(
        interior=interior,
        boundary=boundary,
        normals=normals,
        gamma_subset=gamma_subset,
        interior_weights=np.full(n1, domain.volume() / n1),
        boundary_weights=np.full(n2, domain.boundary_measure() / n2) if n2 else np.zeros(0),
        facet_ids=ids.astype(int),
    )


@dataclass
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return int(self.points.shape[0])


def sample_flat_segment(domain: Domain, n: int, seed: int) -> QuadratureRule:
    """Monte Carlo rule on the flat segment with weights |Gamma|/n."""
    if int(n) < 1:
        raise ValueError("need at least one point on the flat segment")
    facet = domain.flat_segment()
    rng = stream_generator(seed, STREAM_GAMMA)
    pts = _points_on_facet(domain, facet, int(n), rng)
    return QuadratureRule(points=pts, weights=np.full(int(n), facet.measure / int(n)))


def _panel_breaks(lo: float, hi: float, margin_fraction: float, mid_panels: int) -> np.ndarray:
    delta = margin_fraction * (hi - lo)
    mid = np.linspace(lo + delta, hi - delta, mid_panels + 1)
    return np.concatenate([[lo], mid, [hi]])


def tensor_gauss_rule(
    domain: Domain,
    n_per_panel: int = 8,
    margin_fraction: float = 0.1,
    mid_panels: int = 4,
) -> QuadratureRule:
    """
    Composite Gauss-Legendre tensor rule with breakpoints at the cutoff margins,
    where the smoothstep ramps are polynomial.
    """
    nodes, wts = np.polynomial.legendre.leggauss(int(n_per_panel))
    axes_pts: List[np.ndarray] = []
    axes_wts: List[np.ndarray] = []
    for l, h in zip(domain.lo, domain.hi):
        breaks = _panel_breaks(l, h, margin_fraction, mid_panels)
        p_list, w_list = [], []
        for a, b in zip(breaks[:-1], breaks[1:]):
            half = 0.5 * (b - a)
            p_list.append(a + half * (nodes + 1.0))
            w_list.append(half * wts)
        axes_pts.append(np.concatenate(p_list))
        axes_wts.append(np.concatenate(w_list))
    grids = np.meshgrid(*axes_pts, indexing="ij")
    wgrids = np.meshgrid(*axes_wts, indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = np.prod(np.stack([g.reshape(-1) for g in wgrids], axis=1), axis=1)
    return QuadratureRule(points=points, weights=weights)


# -----------------------------
# Initialization
# -----------------------------

INIT_NTK = "ntk"
INIT_RANDOM_FEATURE = "random_feature"
INIT_SMALL_NORMAL = "small_normal"
INIT_KINDS = (INIT_NTK, INIT_RANDOM_FEATURE, INIT_SMALL_NORMAL)


@dataclass(frozen=True)
class InitScheme:
    """
    ntk            a in {-1, +1}, w ~ N(0, I), b ~ N(0, 1); ntk scaling, all parameters trained
    random_feature same inner law, a = 0; plain scaling, outer weights trained
    small_normal   w ~ N(0, I) except |w_{i,axis}|, |b_i| < delta (uniform); a = 0, outer weights trained

    scaling/trainable override the kind's defaults when given.
    """
    kind: str
    seed: int = 0
    delta: float = 1e-2
    normal_axis: int = -1
    scaling: Optional[str] = None
    trainable: Optional[str] = None

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown init scheme '{self.kind}'")
        if self.kind == INIT_SMALL_NORMAL and not float(self.delta) > 0.0:
            raise ValueError("small_normal init needs delta > 0")

    def to_dict(self) -> Dict:
        out = {"kind": self.kind, "seed": int(self.seed)}
        if self.kind == INIT_SMALL_NORMAL:
            out["delta"] = float(self.delta)
            out["normal_axis"] = int(self.normal_axis)
        if self.scaling:
            out["scaling"] = self.scaling
        if self.trainable:
            out["trainable"] = self.trainable
        return out

    @staticmethod
    def from_dict(d: Dict, seed: Optional[int] = None) -> "InitScheme":
        return InitScheme(
            kind=str(d.get("kind", INIT_RANDOM_FEATURE)),
            seed=int(seed if seed is not None else d.get("seed", 0)),
            delta=float(d.get("delta", 1e-2)),
            normal_axis=int(d.get("normal_axis", -1)),
            scaling=d.get("scaling"),
            trainable=d.get("trainable"),
        )


def initialize(scheme: InitScheme, m: int, d: int) -> NetworkParams:
    if int(m) < 1 or int(d) < 1:
        raise ValueError("initialize needs m >= 1 and d >= 1")
    m, d = int(m), int(d)
    rng = stream_generator(scheme.seed, STREAM_INIT)

    if scheme.kind == INIT_NTK:
        a = 2.0 * rng.integers(0, 2, size=m).astype(np.float64) - 1.0
        w = rng.standard_normal((m, d))
        b = rng.standard_normal(m)
        scaling, trainable = SCALING_NTK, TRAINABLE_FULL
    elif scheme.kind == INIT_RANDOM_FEATURE:
        w = rng.standard_normal((m, d))
        b = rng.standard_normal(m)
        a = np.zeros(m)
        scaling, trainable = SCALING_PLAIN, TRAINABLE_OUTER
    else:
        delta = float(scheme.delta)
        axis = int(scheme.normal_axis) % d
        w = rng.standard_normal((m, d))
        w[:, axis] = delta * (2.0 * rng.random(m) - 1.0)
        b = delta * (2.0 * rng.random(m) - 1.0)
        a = np.zeros(m)
        scaling, trainable = SCALING_PLAIN, TRAINABLE_OUTER

    return NetworkParams(
        a=a,
        w=w,
        b=b,
        scaling=scheme.scaling or scaling,
        trainable=scheme.trainable or trainable,
    )


# -----------------------------
# Admissibility (distinct tangential directions, non-degenerate normal components)
# -----------------------------

class Violation(NamedTuple):
    i: int                 # 1-based neuron index
    j: Optional[int]       # 1-based partner, None for a normal-component violation
    kind: str              # "+", "-" or "normal"


@dataclass
class AdmissibilityReport:
    ok: bool
    violations: List[Violation]

    def to_dict(self) -> Dict:
        return {
            "ok": self.ok,
            "violations": [{"i": v.i, "j": v.j, "kind": v.kind} for v in self.violations],
        }


def check_admissible(params: NetworkParams, normal_axis: int = -1) -> AdmissibilityReport:
    """Exact float comparison; pairs are reported once with i < j."""
    if params.d < 2:
        raise DimensionMismatchError("admissibility needs d >= 2")
    axis = int(normal_axis) % params.d
    tangential = np.delete(params.w, axis, axis=1)
    violations: List[Violation] = []

    seen: Dict[Tuple[float, ...], List[int]] = {}
    for k, row in enumerate(tangential):
        key = tuple(float(v) for v in row)
        neg = tuple(-float(v) for v in row)
        for j in seen.get(key, []):
            violations.append(Violation(j + 1, k + 1, "+"))
        for j in seen.get(neg, []):
            violations.append(Violation(j + 1, k + 1, "-"))
        seen.setdefault(key, []).append(k)

    for k in np.nonzero(params.w[:, axis] == 0.0)[0]:
        violations.append(Violation(int(k) + 1, None, "normal"))

    violations.sort(key=lambda v: (v.i, v.j if v.j is not None else 0, v.kind))
    return AdmissibilityReport(ok=not violations, violations=violations)
