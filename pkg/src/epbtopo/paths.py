"""Closed polyline loops in parameter space.

A loop is stored as an ``(n, 3)`` coordinate array in the model's raw
coordinate order (``xi_r, xi_i, zeta`` or ``xi, zeta_r, zeta_i``). The closing
point is never duplicated: point ``n`` is point ``0``.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import DegenerateLoop, RefinementDiverged, UnknownLoop
from .model import COORD_NAMES, ModelKind, SystemConstants, discriminant_many, make_point

DEFAULT_MAX_ARG_STEP = math.pi / 2
DEFAULT_EP_MARGIN = 1e-4
MAX_REFINE_DEPTH = 20


@dataclass
class LoopSpec:
    name: str
    kind: ModelKind
    anchors: list
    closed: bool = True
    subdivisions_per_segment: int = 256
    description: str = ""

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)

    def anchor_array(self):
        return np.array([p.as_tuple() for p in self.anchors], dtype=float).reshape(-1, 3)

    def validate(self):
        """Raise :class:`DegenerateLoop` unless the loop can be sampled."""
        if not self.closed:
            raise DegenerateLoop(f"loop {self.name!r} is not closed; invariants need a closed loop")
        if len(self.anchors) < 3:
            raise DegenerateLoop(f"loop {self.name!r} has {len(self.anchors)} anchors; a closed loop needs at least 3")
        a = self.anchor_array()
        same = np.all(a == np.roll(a, -1, axis=0), axis=1)
        if np.any(same):
            i = int(np.flatnonzero(same)[0])
            raise DegenerateLoop(
                f"loop {self.name!r}: anchors {i} and {(i + 1) % len(a)} coincide"
            )
        if int(self.subdivisions_per_segment) < 1:
            raise DegenerateLoop("subdivisions_per_segment must be a positive integer")

    def with_subdivisions(self, n):
        return LoopSpec(self.name, self.kind, list(self.anchors), self.closed, int(n), self.description)


@dataclass
class SampledLoop:
    """Sampled closed loop.

    Attributes
    ----------
    coords : ndarray, shape (n, 3)
    kind : ModelKind
    source : LoopSpec or None
    """

    coords: np.ndarray
    kind: ModelKind
    source: LoopSpec = None
    refine_depth: int = field(default=0)

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 3)

    def __len__(self):
        return self.coords.shape[0]

    @property
    def name(self):
        return self.source.name if self.source is not None else "custom"

    @property
    def points(self):
        return [make_point(self.kind, row) for row in self.coords]


def sample_loop(spec, subdivisions=None):
    """Linear interpolation between consecutive anchors (closing segment included).

    Each segment contributes ``subdivisions`` points, starting at its first
    anchor, so the loop has ``len(anchors) * subdivisions`` points.
    """
    if subdivisions is not None:
        spec = spec.with_subdivisions(subdivisions)
    spec.validate()
    a = spec.anchor_array()
    m = int(spec.subdivisions_per_segment)
    b = np.roll(a, -1, axis=0)
    t = np.arange(m) / m
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return SampledLoop(pts.reshape(-1, 3), spec.kind, spec)


def reversed_loop(loop):
    """Same loop traversed in the opposite direction, from the same start point."""
    idx = np.r_[0, np.arange(len(loop) - 1, 0, -1)]
    return SampledLoop(loop.coords[idx], loop.kind, loop.source, loop.refine_depth)


def _arg_steps(delta):
    nxt = np.roll(delta, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.abs(np.angle(nxt / delta))
    bad = ~np.isfinite(step) | (delta == 0) | (nxt == 0)
    step[bad] = np.inf
    return step


def refine_adaptive(loop, c=None, max_arg_step=DEFAULT_MAX_ARG_STEP, max_depth=MAX_REFINE_DEPTH):
    """Insert midpoints until the discriminant's phase moves less than ``max_arg_step`` per step.

    The phase step is measured on ``Delta = (omega_1 - omega_2)**2`` rather than
    on the gap itself: ``Delta`` is single valued, so its phase step is free of
    the sign flips the principal-branch gap shows at branch cuts. A step that
    lands on ``Delta = 0`` counts as a violation.

    Raises
    ------
    RefinementDiverged
        If steps still violate the bound after ``max_depth`` passes.
    """
    if not 0 < max_arg_step < math.pi:
        raise ValueError("max_arg_step must lie in (0, pi)")
    c = c or SystemConstants()
    coords = loop.coords
    delta = discriminant_many(loop.kind, c, coords)
    depth = 0
    while True:
        bad = _arg_steps(delta) > max_arg_step
        if not np.any(bad):
            return SampledLoop(coords, loop.kind, loop.source, loop.refine_depth + depth)
        if depth >= max_depth:
            i = int(np.flatnonzero(bad)[0])
            raise RefinementDiverged(
                f"phase of the discriminant still jumps after {max_depth} refinements near "
                f"{tuple(np.round(coords[i], 12))}; the loop runs through an exceptional point"
            )
        idx = np.flatnonzero(bad)
        nxt = coords[(idx + 1) % len(coords)]
        mid = 0.5 * (coords[idx] + nxt)
        mid_delta = discriminant_many(loop.kind, c, mid)
        # insert each midpoint right after its step's start
        coords = np.insert(coords, idx + 1, mid, axis=0)
        delta = np.insert(delta, idx + 1, mid_delta)
        depth += 1


@dataclass
class LoopReport:
    passed: bool
    min_gap: float
    argmin: int
    ep_margin: float

    def __bool__(self):
        return self.passed


def validate_loop(loop, c=None, ep_margin=DEFAULT_EP_MARGIN):
    """Distance-to-EP check: ``min |Delta|**0.5 / kappa0`` must reach ``ep_margin``."""
    c = c or SystemConstants()
    gap = np.sqrt(np.abs(discriminant_many(loop.kind, c, loop.coords))) / c.kappa0
    i = int(np.argmin(gap))
    return LoopReport(bool(gap[i] >= ep_margin), float(gap[i]), i, float(ep_margin))


def loop_from_dict(d):
    try:
        kind = ModelKind.parse(d.get("model", "parabola"))
        names = COORD_NAMES[kind]
        anchors = [make_point(kind, [a[k] for k in names]) for a in d["anchors"]]
        return LoopSpec(
            name=str(d.get("name", "custom")),
            kind=kind,
            anchors=anchors,
            closed=bool(d.get("closed", True)),
            subdivisions_per_segment=int(d.get("subdivisions_per_segment", 256)),
            description=str(d.get("description", "")),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed loop description: missing or invalid field {exc}") from None


def loop_to_dict(spec):
    names = COORD_NAMES[spec.kind]
    d = {
        "name": spec.name,
        "model": spec.kind.value,
        "closed": bool(spec.closed),
        "subdivisions_per_segment": int(spec.subdivisions_per_segment),
    }
    if spec.description:
        d["description"] = spec.description
    d["anchors"] = [dict(zip(names, (float(x) for x in p.as_tuple()))) for p in spec.anchors]
    return d


def read_loop_file(path):
    with open(path, encoding="utf-8") as f:
        return loop_from_dict(json.load(f))


def write_loop_file(spec, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(loop_to_dict(spec), f, indent=2)
        f.write("\n")


def _loop_dir():
    return resources.files("epbtopo").joinpath("data", "loops")


def builtin_names():
    return sorted(p.name[:-5] for p in _loop_dir().iterdir() if p.name.endswith(".json"))


def builtin_loop(name):
    """Built-in loop by name (see :func:`builtin_names`)."""
    res = _loop_dir().joinpath(f"{name}.json")
    if not res.is_file():
        raise UnknownLoop(f"unknown loop {name!r}; available: {', '.join(builtin_names())}")
    return loop_from_dict(json.loads(res.read_text(encoding="utf-8")))
