"""Synthetic bundle generator with analytic ground truth.

Generates bundles around analytic centerlines (line, arc, helix) with a
random tube offset per fiber, a deterministic in-plane fan, optional
localized channel lesions and geometry lesions, and seeded vertex jitter.
The accompanying ground-truth record exposes the clean analytic profile so
generated bundles can serve as oracles for the whole pipeline.

Randomness comes from a single ``numpy.random.default_rng(seed)`` (PCG64)
stream per bundle, drawn in a fixed documented order (per fiber: tube radius,
tube angle, geometry-lesion deflection if configured, then the jitter mode
weights), so fixtures are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import FiberBundle, FiberStreamline
from .errors import ValidationError


@dataclass(frozen=True)
class Lesion:
    """Raised-cosine bump added to a channel: center/width in arc fraction."""

    center: float
    width: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.width <= 1.0:
            raise ValidationError(f"lesion width must lie in (0, 1], got {self.width}")

    def bump(self, s) -> np.ndarray:
        """Bump shape in [0, 1], equal to 1 at the center, 0 outside."""
        s = np.asarray(s, dtype=float)
        phase = 2.0 * np.pi * (s - self.center) / self.width
        inside = np.abs(s - self.center) <= self.width / 2.0
        return np.where(inside, 0.5 * (1.0 + np.cos(phase)), 0.0)


@dataclass(frozen=True)
class ChannelSpec:
    """Per-channel generator: baseline, optional ramp or step, optional lesion.

    ``bumps`` are structural raised-cosine features of the healthy tract
    (profiles of real bundles are not flat, and alignment needs landmarks to
    lock onto); ``lesion`` is the anomaly under study.
    """

    baseline: float
    ramp_to: float | None = None
    step_at: float | None = None
    step_to: float | None = None
    bumps: tuple[Lesion, ...] = ()
    lesion: Lesion | None = None

    def value(self, s) -> np.ndarray:
        """Clean channel value at arc fractions s."""
        s = np.asarray(s, dtype=float)
        if self.ramp_to is not None:
            base = self.baseline + (self.ramp_to - self.baseline) * s
        elif self.step_at is not None:
            base = np.where(s < self.step_at, self.baseline, self.step_to)
        else:
            base = np.full_like(s, self.baseline)
        for bump in self.bumps:
            base = base + bump.delta * bump.bump(s)
        if self.lesion is not None:
            base = base + self.lesion.delta * self.lesion.bump(s)
        return base


@dataclass(frozen=True)
class GeometryLesion:
    """Localized fiber-incoherence bump: tangents spread by up to max_angle."""

    center: float
    width: float
    max_angle_deg: float

    def __post_init__(self):
        if not 0.0 < self.width <= 1.0:
            raise ValidationError(
                f"geometry lesion width must lie in (0, 1], got {self.width}"
            )

    def bump(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        phase = 2.0 * np.pi * (s - self.center) / self.width
        inside = np.abs(s - self.center) <= self.width / 2.0
        return np.where(inside, 0.5 * (1.0 + np.cos(phase)), 0.0)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic bundle.

    ``centerline`` is a dict with key "kind" set to "line" (start/end),
    "arc" (radius mm, angle_deg, XY plane, centered at the origin) or
    "helix" (radius mm, pitch mm per turn, turns). ``fan_angle_deg`` is the
    half-angle of a deterministic in-plane fan; ``noise_std`` (mm) is i.i.d.
    vertex jitter. Same seed, same bundle, bit for bit.
    """

    centerline: dict
    fiber_count: int = 10
    tube_radius: float = 1.0
    fan_angle_deg: float = 0.0
    noise_std: float = 0.0
    channels: dict[str, ChannelSpec] = field(default_factory=dict)
    geometry_lesion: GeometryLesion | None = None
    vertices: int = 100
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        if self.fiber_count < 1:
            raise ValidationError("fiber_count must be >= 1")
        if not self.tube_radius > 0.0:
            raise ValidationError("tube_radius must be > 0")
        if self.vertices < 2:
            raise ValidationError("vertices must be >= 2")
        if self.centerline.get("kind") not in ("line", "arc", "helix"):
            raise ValidationError(
                f"unknown centerline kind {self.centerline.get('kind')!r}"
            )


def _centerline_points(spec: SyntheticSpec) -> np.ndarray:
    kind = spec.centerline["kind"]
    n = spec.vertices
    if kind == "line":
        start = np.asarray(spec.centerline["start"], dtype=float)
        end = np.asarray(spec.centerline["end"], dtype=float)
        t = np.linspace(0.0, 1.0, n)[:, None]
        return start + t * (end - start)
    if kind == "arc":
        radius = float(spec.centerline["radius"])
        angle = math.radians(float(spec.centerline.get("angle_deg", 90.0)))
        theta = np.linspace(0.0, angle, n)
        return np.column_stack(
            [radius * np.cos(theta), radius * np.sin(theta), np.zeros(n)]
        )
    radius = float(spec.centerline["radius"])
    pitch = float(spec.centerline.get("pitch", 1.0))
    turns = float(spec.centerline.get("turns", 1.0))
    t = np.linspace(0.0, 2.0 * np.pi * turns, n)
    return np.column_stack(
        [radius * np.cos(t), radius * np.sin(t), pitch * t / (2.0 * np.pi)]
    )


def _orthonormal_frame(direction: np.ndarray):
    """Two unit vectors spanning the plane perpendicular to ``direction``."""
    helper = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(direction, helper)) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(direction, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(direction, e1)
    return e1, e2


def _rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    a = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    cross = np.array(
        [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
    )
    return c * np.eye(3) + s * cross + (1.0 - c) * np.outer(a, a)


def _fan_flux_factor(half_angle_rad: float) -> float:
    """Mean cosine over a uniform in-plane fan of the given half-angle."""
    if half_angle_rad == 0.0:
        return 1.0
    return math.sin(half_angle_rad) / half_angle_rad


# number of low-order cosine modes in the smooth jitter model
_JITTER_MODES = 6


def _smooth_jitter(rng, std: float, n: int) -> np.ndarray:
    """Smooth random displacement field with pointwise std ``std`` (mm).

    Streamline variability is low-frequency: independent per-vertex noise
    would make polyline tangents unphysically rough and bias any
    tangent-based measure. Each axis gets a random combination of the first
    few cosine modes, scaled to the requested pointwise standard deviation.
    """
    s = np.linspace(0.0, 1.0, n)
    modes = np.cos(np.pi * np.outer(s, np.arange(1, _JITTER_MODES + 1)))
    weights = rng.normal(0.0, 1.0, (_JITTER_MODES, 3))
    disp = modes @ weights
    # E[disp^2] = sum_k cos^2(k pi s) ~= modes/2 pointwise
    return disp * (std / math.sqrt(_JITTER_MODES / 2.0))


@dataclass(frozen=True)
class BundleGroundTruth:
    """Clean analytic reference values for a generated bundle."""

    spec: SyntheticSpec
    centerline_length: float
    flux_factor: float  # fan-induced tangent-coherence factor
    fiber_deflections: np.ndarray  # (fiber_count,) geometry-lesion angles, rad

    def clean_channel(self, channel: str, s) -> np.ndarray:
        """Noise-free channel value at arc fractions s."""
        return self.spec.channels[channel].value(s)

    def geometry_flux(self, s) -> np.ndarray:
        """Tangent-coherence factor at arc fractions s, including lesions."""
        s = np.asarray(s, dtype=float)
        factor = np.full_like(s, self.flux_factor)
        lesion = self.spec.geometry_lesion
        if lesion is not None:
            spread = math.radians(lesion.max_angle_deg) * lesion.bump(s)
            with np.errstate(invalid="ignore"):
                local = np.where(spread > 0.0, np.sin(spread) / spread, 1.0)
            factor = factor * local
        return factor

    def clean_profile(self, channel: str, samples: int) -> np.ndarray:
        """Expected descriptor profile magnitudes at ``samples`` points.

        For the geometry-only "FFD" channel this is the flux factor alone;
        otherwise the clean channel value times the flux factor.
        """
        s = np.linspace(0.0, 1.0, samples)
        flux = self.geometry_flux(s)
        if channel == "FFD":
            return flux
        return self.clean_channel(channel, s) * flux


def generate_bundle(spec: SyntheticSpec):
    """Generate a bundle from a spec; returns (FiberBundle, BundleGroundTruth)."""
    rng = np.random.default_rng(spec.seed)
    base = _centerline_points(spec)
    s = np.linspace(0.0, 1.0, spec.vertices)
    length = float(np.sum(np.linalg.norm(np.diff(base, axis=0), axis=1)))
    main_dir = base[-1] - base[0]
    norm = np.linalg.norm(main_dir)
    if norm == 0.0:  # closed centerline (e.g. full-turn helix): use first segment
        main_dir = base[1] - base[0]
        norm = np.linalg.norm(main_dir)
    main_dir = main_dir / norm
    e1, e2 = _orthonormal_frame(main_dir)
    fan = math.radians(spec.fan_angle_deg)
    if fan == 0.0:
        fan_angles = np.zeros(spec.fiber_count)
    else:
        # midpoint-uniform over [-fan, fan]: the mean tangent cosine then
        # matches the analytic fan integral to O(1/count^2)
        centers = (np.arange(spec.fiber_count) + 0.5) / spec.fiber_count
        fan_angles = -fan + 2.0 * fan * centers
    lesion = spec.geometry_lesion
    deflections = np.zeros(spec.fiber_count)
    fibers = []
    for i in range(spec.fiber_count):
        r = spec.tube_radius * math.sqrt(rng.uniform())
        phi = rng.uniform(0.0, 2.0 * np.pi)
        offset = r * (math.cos(phi) * e1 + math.sin(phi) * e2)
        pts = base
        if fan_angles[i] != 0.0:
            rot = _rotation_about(e2, fan_angles[i])
            pts = (pts - base[0]) @ rot.T + base[0]
        if lesion is not None:
            deflections[i] = rng.uniform(
                -math.radians(lesion.max_angle_deg),
                math.radians(lesion.max_angle_deg),
            )
            slope = np.tan(deflections[i] * lesion.bump(s))
            ds = np.diff(s)
            lateral = np.concatenate(
                [[0.0], np.cumsum(0.5 * (slope[1:] + slope[:-1]) * ds * length)]
            )
            pts = pts + lateral[:, None] * e1
        pts = pts + offset
        if spec.noise_std > 0.0:
            pts = pts + _smooth_jitter(rng, spec.noise_std, spec.vertices)
        scalars = {name: cs.value(s) for name, cs in spec.channels.items()}
        fibers.append(FiberStreamline(pts, scalars))
    truth = BundleGroundTruth(spec, length, _fan_flux_factor(fan), deflections)
    return FiberBundle(tuple(fibers), spec.name), truth
