"""Fiber-flux descriptors at planar cross-sections along a bundle.

The fiber-flux density (FFD) of a bundle through a plane is the mean dot
product between the crossing fibers' tangents and the plane normal. Weighting
each crossing by a scalar channel value (FA/MD/AD/RD interpolated at the
crossing) gives the fiber-flux diffusion density (FFDD). Sampling either
descriptor at equidistant points along the mean fiber yields a tract profile.
"""

from __future__ import annotations

import math
import warnings
import weakref
from dataclasses import dataclass, field

import numpy as np

from .bundle import FiberBundle, MeanFiber
from .errors import (
    EmptyCrossSection,
    EmptyCrossSectionWarning,
    ConvergenceWarning,
    UnknownChannel,
    ValidationError,
)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50

FFD_CHANNEL = "FFD"


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValidationError("zero vector cannot be normalized")
    return v / n


@dataclass(frozen=True, eq=False)
class CuttingPlane:
    """Cross-section plane: anchor point, unit normal, truncation radius.

    ``radius`` limits crossings to a disc around the anchor; ``math.inf``
    disables truncation. ``converged`` is False when the normal search hit
    its iteration cap.
    """

    point: np.ndarray
    normal: np.ndarray
    radius: float = math.inf
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        normal = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise ValidationError("plane normal must have unit norm within 1e-9")
        object.__setattr__(self, "normal", normal)
        if not self.radius > 0.0:
            raise ValidationError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True, eq=False)
class PlaneIntersections:
    """Crossings of a bundle with one plane: points, tangents, scalars."""

    points: np.ndarray  # (N, 3)
    tangents: np.ndarray  # (N, 3), unit norm
    scalars: dict[str, np.ndarray]
    fiber_indices: np.ndarray  # (N,)

    @property
    def count(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class FFDDVector:
    """Descriptor value at one plane: signed magnitude along the unit normal."""

    magnitude: float
    direction: np.ndarray
    channel: str


@dataclass(eq=False)
class TractProfile:
    """Descriptor values at M points ordered by arc length along a bundle."""

    magnitudes: np.ndarray  # (M,)
    directions: np.ndarray  # (M, 3)
    arc_positions: np.ndarray  # (M,) strictly increasing fractions
    bundle_name: str
    channel: str

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)
        self.directions = np.asarray(self.directions, dtype=float)
        self.arc_positions = np.asarray(self.arc_positions, dtype=float)
        if not (
            len(self.magnitudes) == len(self.directions) == len(self.arc_positions)
        ):
            raise ValidationError("profile arrays must share one length")
        if np.any(np.diff(self.arc_positions) <= 0):
            raise ValidationError("arc positions must be strictly increasing")

    def __len__(self) -> int:
        return len(self.magnitudes)

    def vectors(self) -> np.ndarray:
        """Full descriptor vectors, magnitude times direction; (M, 3)."""
        return self.magnitudes[:, None] * self.directions

    @property
    def entries(self) -> list[FFDDVector]:
        return [
            FFDDVector(float(m), d, self.channel)
            for m, d in zip(self.magnitudes, self.directions)
        ]


@dataclass(frozen=True)
class ProfileConfig:
    """Knobs for profile extraction.

    radius None selects the automatic truncation radius (3x the RMS crossing
    distance at the initial normal); ``math.inf`` disables truncation.
    ``empty_policy`` is "interpolate" (fill gaps from neighbors, warn) or
    "fail".
    """

    radius: float | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    empty_policy: str = "interpolate"

    def __post_init__(self):
        if self.empty_policy not in ("interpolate", "fail"):
            raise ValidationError(
                f"empty_policy must be 'interpolate' or 'fail', got {self.empty_policy!r}"
            )


# Per-bundle segment table, cached by bundle identity.
_SEGMENT_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


@dataclass(frozen=True, eq=False)
class _SegmentTable:
    a: np.ndarray  # (S, 3) segment starts
    b: np.ndarray  # (S, 3) segment ends
    dirs: np.ndarray  # (S, 3) unit directions
    fiber: np.ndarray  # (S,) owning fiber index
    scal_a: dict[str, np.ndarray]
    scal_b: dict[str, np.ndarray]


def _segments(bundle: FiberBundle) -> _SegmentTable:
    table = _SEGMENT_CACHE.get(bundle)
    if table is not None:
        return table
    starts, ends, fiber_ids = [], [], []
    scal_a = {c: [] for c in bundle.channels}
    scal_b = {c: [] for c in bundle.channels}
    for i, f in enumerate(bundle.fibers):
        starts.append(f.vertices[:-1])
        ends.append(f.vertices[1:])
        fiber_ids.append(np.full(f.n_vertices - 1, i))
        for c in bundle.channels:
            scal_a[c].append(f.scalars[c][:-1])
            scal_b[c].append(f.scalars[c][1:])
    a = np.concatenate(starts)
    b = np.concatenate(ends)
    seg = b - a
    dirs = seg / np.linalg.norm(seg, axis=1)[:, None]
    table = _SegmentTable(
        a,
        b,
        dirs,
        np.concatenate(fiber_ids),
        {c: np.concatenate(v) for c, v in scal_a.items()},
        {c: np.concatenate(v) for c, v in scal_b.items()},
    )
    _SEGMENT_CACHE[bundle] = table
    return table


def plane_intersections(bundle: FiberBundle, plane: CuttingPlane) -> PlaneIntersections:
    """All bundle crossings of a plane within its truncation radius.

    A crossing is a sign change of the signed distance along a polyline
    segment; point, tangent (the segment's stored direction) and scalars are
    linearly interpolated at the crossing. When one fiber crosses several
    times within the radius, only the crossing nearest the plane anchor is
    kept. An empty result is valid.
    """
    tab = _segments(bundle)
    p, n = plane.point, plane.normal
    da = (tab.a - p) @ n
    db = (tab.b - p) @ n
    crossing = (da >= 0.0) != (db >= 0.0)
    if not crossing.any():
        return PlaneIntersections(
            np.empty((0, 3)), np.empty((0, 3)),
            {c: np.empty(0) for c in bundle.channels}, np.empty(0, dtype=int),
        )
    da_c = da[crossing]
    t = da_c / (da_c - db[crossing])
    pts = tab.a[crossing] + t[:, None] * (tab.b[crossing] - tab.a[crossing])
    dist = np.linalg.norm(pts - p, axis=1)
    within = dist <= plane.radius
    if not within.any():
        return PlaneIntersections(
            np.empty((0, 3)), np.empty((0, 3)),
            {c: np.empty(0) for c in bundle.channels}, np.empty(0, dtype=int),
        )
    pts = pts[within]
    dist = dist[within]
    fiber = tab.fiber[crossing][within]
    tangents = tab.dirs[crossing][within]
    t_in = t[within]
    # nearest crossing per fiber, deterministic in fiber order
    order = np.lexsort((dist, fiber))
    _, first = np.unique(fiber[order], return_index=True)
    keep = order[first]
    scalars = {}
    for c in bundle.channels:
        sa = tab.scal_a[c][crossing][within]
        sb = tab.scal_b[c][crossing][within]
        scalars[c] = (sa + t_in * (sb - sa))[keep]
    return PlaneIntersections(pts[keep], tangents[keep], scalars, fiber[keep])


def ffd_at(bundle: FiberBundle, plane: CuttingPlane) -> FFDDVector:
    """Geometry-only flux density: mean tangent projection onto the normal."""
    xs = plane_intersections(bundle, plane)
    if xs.count == 0:
        raise EmptyCrossSection(f"no crossings at plane point {plane.point}")
    magnitude = float(np.mean(xs.tangents @ plane.normal))
    return FFDDVector(magnitude, plane.normal, FFD_CHANNEL)


def ffdd_at(bundle: FiberBundle, plane: CuttingPlane, channel: str) -> FFDDVector:
    """Scalar-weighted flux density for one diffusivity channel."""
    if channel not in bundle.channels:
        raise UnknownChannel(
            f"channel {channel!r} not in bundle channels {bundle.channels}"
        )
    xs = plane_intersections(bundle, plane)
    if xs.count == 0:
        raise EmptyCrossSection(f"no crossings at plane point {plane.point}")
    magnitude = float(np.mean(xs.scalars[channel] * (xs.tangents @ plane.normal)))
    return FFDDVector(magnitude, plane.normal, channel)


def _auto_radius(bundle: FiberBundle, point: np.ndarray, normal: np.ndarray) -> float:
    """3x the RMS crossing distance at the initial normal, unbounded plane."""
    xs = plane_intersections(bundle, CuttingPlane(point, normal, math.inf))
    if xs.count == 0:
        raise EmptyCrossSection(f"no crossings at plane point {point}")
    rms = float(np.sqrt(np.mean(np.sum((xs.points - point) ** 2, axis=1))))
    return 3.0 * rms if rms > 0.0 else math.inf


def optimize_plane_normal(
    bundle: FiberBundle,
    point,
    init,
    radius: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CuttingPlane:
    """Plane normal maximizing the fiber flux through the point.

    Fixed-point iteration: intersect with the current normal, replace the
    normal by the normalized mean of the crossing tangents (sign-flipped to
    stay within 90 degrees of ``init``), stop when successive normals differ
    by less than ``tol`` radians. At the returned plane the normalized mean
    tangent of its own crossing set equals the normal within ``tol``.

    On non-convergence the last iterate is returned with ``converged=False``
    and a ConvergenceWarning.
    """
    if tol <= 0.0:
        raise ValidationError(f"tol must be positive, got {tol}")
    point = np.asarray(point, dtype=float)
    init_n = _unit(init)
    if radius is None:
        radius = _auto_radius(bundle, point, init_n)
    n = init_n
    for _ in range(max_iter):
        xs = plane_intersections(bundle, CuttingPlane(point, n, radius))
        if xs.count == 0:
            raise EmptyCrossSection(f"no crossings at plane point {point}")
        mean_tangent = xs.tangents.sum(axis=0)
        norm = np.linalg.norm(mean_tangent)
        if norm == 0.0:
            raise EmptyCrossSection(
                f"crossing tangents cancel exactly at plane point {point}"
            )
        m = mean_tangent / norm
        if float(np.dot(m, init_n)) < 0.0:
            m = -m
        angle = float(np.arccos(np.clip(np.dot(n, m), -1.0, 1.0)))
        if angle < tol:
            return CuttingPlane(point, n, radius, converged=True)
        n = m
    warnings.warn(
        f"plane normal search at {point} did not reach tol={tol} "
        f"within {max_iter} iterations",
        ConvergenceWarning,
        stacklevel=2,
    )
    return CuttingPlane(point, n, radius, converged=False)


def _interpolate_gaps(fractions, mags, dirs, valid, bundle_name):
    bad = np.flatnonzero(~valid)
    warnings.warn(
        f"bundle {bundle_name!r}: {bad.size} empty cross-sections at sample "
        f"indices {bad.tolist()} filled by interpolation",
        EmptyCrossSectionWarning,
        stacklevel=3,
    )
    good = np.flatnonzero(valid)
    mags = np.interp(fractions, fractions[good], mags[good])
    out_dirs = np.empty_like(dirs)
    for axis in range(3):
        out_dirs[:, axis] = np.interp(fractions, fractions[good], dirs[good, axis])
    norms = np.linalg.norm(out_dirs, axis=1)
    norms[norms == 0.0] = 1.0
    return mags, out_dirs / norms[:, None]


def _profile(bundle, mean, channel, config, evaluate):
    m_count = mean.n_samples
    fractions = mean.arc_positions
    mags = np.zeros(m_count)
    dirs = np.zeros((m_count, 3))
    valid = np.ones(m_count, dtype=bool)
    for m in range(m_count):
        try:
            plane = optimize_plane_normal(
                bundle,
                mean.samples[m],
                mean.tangents[m],
                radius=config.radius,
                tol=config.tol,
                max_iter=config.max_iter,
            )
            vec = evaluate(plane)
        except EmptyCrossSection as exc:
            if config.empty_policy == "fail":
                raise EmptyCrossSection(f"sample {m}: {exc}") from exc
            valid[m] = False
            continue
        mags[m] = vec.magnitude
        dirs[m] = vec.direction
    if not valid.any():
        raise EmptyCrossSection(
            f"bundle {bundle.name!r}: every sample has an empty cross-section"
        )
    if not valid.all():
        mags, dirs = _interpolate_gaps(fractions, mags, dirs, valid, bundle.name)
    return TractProfile(mags, dirs, fractions, bundle.name, channel)


def tract_profile(
    bundle: FiberBundle,
    mean: MeanFiber,
    channel: str,
    config: ProfileConfig = ProfileConfig(),
) -> TractProfile:
    """Descriptor profile along the mean fiber.

    At each of the mean fiber's sample points the plane normal is optimized
    starting from the local tangent, then the descriptor is evaluated there.
    ``channel`` selects a scalar channel, or "FFD" for the geometry-only
    profile. Empty cross-sections follow ``config.empty_policy``.
    """
    if channel != FFD_CHANNEL and channel not in bundle.channels:
        raise UnknownChannel(
            f"channel {channel!r} not in bundle channels {bundle.channels}"
        )
    if channel == FFD_CHANNEL:
        evaluate = lambda plane: ffd_at(bundle, plane)
    else:
        evaluate = lambda plane: ffdd_at(bundle, plane, channel)
    return _profile(bundle, mean, channel, config, evaluate)


def scalar_mean_profile(
    bundle: FiberBundle,
    mean: MeanFiber,
    channel: str,
    config: ProfileConfig = ProfileConfig(),
) -> TractProfile:
    """Plain along-tract scalar profile: mean channel value per cross-section.

    Baseline for sensitivity comparisons against the flux-weighted profile;
    uses the same optimized cutting planes but ignores tangent orientation.
    The returned profile's channel is tagged "mean(<channel>)".
    """
    if channel not in bundle.channels:
        raise UnknownChannel(
            f"channel {channel!r} not in bundle channels {bundle.channels}"
        )

    def evaluate(plane):
        xs = plane_intersections(bundle, plane)
        if xs.count == 0:
            raise EmptyCrossSection(f"no crossings at plane point {plane.point}")
        return FFDDVector(
            float(np.mean(xs.scalars[channel])), plane.normal, channel
        )

    profile = _profile(bundle, mean, channel, config, evaluate)
    profile.channel = f"mean({channel})"
    return profile
