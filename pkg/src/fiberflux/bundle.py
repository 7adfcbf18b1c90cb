"""Fiber bundle geometry: streamlines, cosine-series fits, and mean fibers.

A bundle is a set of 3D polyline streamlines with per-vertex scalar channels
(FA, MD, AD, RD). Its representative centerline is obtained by fitting each
streamline with a truncated cosine series over normalized chord length,
averaging the coefficients, and resampling the averaged curve equidistantly
in arc length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFiber, OutOfRange, RankDeficient, ValidationError

DEFAULT_DEGREE = 20
DEFAULT_SAMPLES = 100

# dense evaluation factor used when inverting the arc-length map
_REPARAM_FACTOR = 10


def _as_points(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"expected an (n, 3) point array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class FiberStreamline:
    """One tractography streamline: ordered 3D vertices plus scalar channels.

    Every scalar channel holds exactly one value per vertex. FA values, when
    present, must lie in [0, 1].
    """

    vertices: np.ndarray
    scalars: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _as_points(self.vertices))
        if len(self.vertices) < 2:
            raise ValidationError("a streamline needs at least 2 vertices")
        seg = np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)
        if np.any(seg == 0):
            raise ValidationError("consecutive vertices must be distinct")
        clean = {}
        for name, values in self.scalars.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (len(self.vertices),):
                raise ValidationError(
                    f"channel {name!r} has {values.size} values for "
                    f"{len(self.vertices)} vertices"
                )
            if name == "FA" and (values.min() < 0.0 or values.max() > 1.0):
                raise ValidationError("channel 'FA' values must lie in [0, 1]")
            clean[name] = values
        object.__setattr__(self, "scalars", clean)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def flipped(self) -> "FiberStreamline":
        """Reverse vertex order, flipping scalar channels consistently."""
        return FiberStreamline(
            self.vertices[::-1].copy(),
            {name: v[::-1].copy() for name, v in self.scalars.items()},
        )


@dataclass(frozen=True, eq=False)
class FiberBundle:
    """A named set of streamlines sharing one set of scalar channels."""

    fibers: tuple[FiberStreamline, ...]
    name: str = "bundle"

    def __post_init__(self):
        object.__setattr__(self, "fibers", tuple(self.fibers))
        if not self.fibers:
            raise ValidationError("a bundle needs at least one fiber")
        channels = set(self.fibers[0].scalars)
        for i, f in enumerate(self.fibers):
            if set(f.scalars) != channels:
                raise ValidationError(
                    f"fiber {i} carries channels {sorted(f.scalars)}, "
                    f"expected {sorted(channels)}"
                )

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(sorted(self.fibers[0].scalars))

    def __len__(self) -> int:
        return len(self.fibers)


@dataclass(frozen=True, eq=False)
class CosineSeries:
    """Per-axis cosine-series coefficients c_k over the basis cos(k*pi*u)."""

    coefficients: np.ndarray  # (degree + 1, 3)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if coef.ndim != 2 or coef.shape[1] != 3 or coef.shape[0] < 1:
            raise ValidationError(
                f"coefficients must be (degree + 1, 3), got shape {coef.shape}"
            )
        object.__setattr__(self, "coefficients", coef)

    @property
    def degree(self) -> int:
        return self.coefficients.shape[0] - 1

    def evaluate(self, u) -> np.ndarray:
        """Curve points at parameter values u in [0, 1]; returns (len(u), 3)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        k = np.arange(self.degree + 1)
        return np.cos(np.pi * np.outer(u, k)) @ self.coefficients

    def derivative(self, u) -> np.ndarray:
        """d/du of the curve at parameter values u; returns (len(u), 3)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        k = np.arange(self.degree + 1)
        basis = -np.sin(np.pi * np.outer(u, k)) * (np.pi * k)
        return basis @ self.coefficients

    def second_derivative(self, u) -> np.ndarray:
        """d2/du2 of the curve at parameter values u; returns (len(u), 3)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        k = np.arange(self.degree + 1)
        basis = -np.cos(np.pi * np.outer(u, k)) * (np.pi * k) ** 2
        return basis @ self.coefficients


@dataclass(frozen=True, eq=False)
class MeanFiber:
    """Representative curve of a bundle, sampled equidistantly in arc length.

    ``param_grid``/``arc_grid`` hold the dense series-parameter to normalized
    arc-length lookup used to invert the parameterization.
    """

    series: CosineSeries
    samples: np.ndarray  # (M, 3)
    arc_length: float
    tangents: np.ndarray  # (M, 3), unit norm
    param_grid: np.ndarray = field(repr=False, default=None)
    arc_grid: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_points(self.samples))
        object.__setattr__(self, "tangents", _as_points(self.tangents))
        if len(self.samples) != len(self.tangents):
            raise ValidationError("samples and tangents must have equal length")
        norms = np.linalg.norm(self.tangents, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValidationError("tangents must have unit norm within 1e-9")

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def arc_positions(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, len(self.samples))


def _chord_parameters(vertices: np.ndarray) -> np.ndarray:
    """Normalized cumulative chord-length parameters in [0, 1]."""
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        raise DegenerateFiber("total chord length is zero")
    return cum / total


def fit_cosine_series(fiber: FiberStreamline, degree: int = DEFAULT_DEGREE) -> CosineSeries:
    """Least-squares cosine-series fit of a streamline's coordinates.

    The fiber is parameterized by normalized cumulative chord length and each
    coordinate axis is regressed onto the basis {cos(k*pi*u)} for
    k = 0..degree.

    Raises RankDeficient when the system is singular (e.g. fewer vertices
    than coefficients); the fit is never silently regularized.
    """
    if degree < 1:
        raise OutOfRange(f"degree must be >= 1, got {degree}")
    u = _chord_parameters(fiber.vertices)
    design = np.cos(np.pi * np.outer(u, np.arange(degree + 1)))
    coef, _, rank, _ = np.linalg.lstsq(design, fiber.vertices, rcond=None)
    if rank < degree + 1:
        raise RankDeficient(
            f"normal equations are singular: rank {rank} < {degree + 1} "
            f"({fiber.n_vertices} vertices)"
        )
    return CosineSeries(coef)


def _tangent_directions(series: CosineSeries, u: np.ndarray, scale: float) -> np.ndarray:
    """Unit tangents at parameters u, robust at the parameter endpoints.

    Every cosine-series curve has a vanishing first derivative at u = 0 and
    u = 1 (all basis derivatives are zero there), so where the speed is
    negligible against ``scale`` the tangent is taken as the one-sided limit
    given by the second derivative.
    """
    deriv = series.derivative(u)
    norms = np.linalg.norm(deriv, axis=1)
    weak = norms < 1e-8 * scale
    if weak.any():
        limit = series.second_derivative(u[weak])
        limit *= np.where(u[weak] < 0.5, 1.0, -1.0)[:, None]
        deriv[weak] = limit
        norms[weak] = np.linalg.norm(limit, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateFiber("mean curve tangent vanishes at a sample point")
    return deriv / norms[:, None]


def _invert_arc(u, speed, arc, targets):
    """Parameters at the target arc lengths, quadratic within each cell.

    Linear inverse lookup is not accurate enough near the parameter
    endpoints, where the series' speed vanishes and the arc-length map is
    quadratic; modelling the speed as linear per cell handles that exactly.
    """
    idx = np.clip(np.searchsorted(arc, targets, side="right") - 1, 0, len(u) - 2)
    h = u[idx + 1] - u[idx]
    sp0 = speed[idx]
    sp1 = speed[idx + 1]
    tau = targets - arc[idx]
    a = (sp1 - sp0) / (2.0 * h)
    scale = max(speed.max(), 1e-300)
    linear = np.abs(a) * h < 1e-12 * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(sp0 * sp0 + 4.0 * a * tau, 0.0))
        x = np.where(linear, tau / np.maximum(sp0, 1e-300), (disc - sp0) / (2.0 * a))
    x = np.clip(x, 0.0, h)
    out = u[idx] + x
    out[0] = u[0]
    out[-1] = u[-1]
    return out


def _reparameterize(series: CosineSeries, n_samples: int):
    """Equidistant arc-length samples of a series curve.

    Dense evaluation on a cosine-graded grid (clustered at the parameter
    endpoints, where the speed vanishes), cumulative trapezoidal arc length,
    then monotone per-cell inverse lookup.
    """
    dense = max(_REPARAM_FACTOR * n_samples, 2)
    u = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, dense)))
    speed = np.linalg.norm(series.derivative(u), axis=1)
    arc = np.concatenate(
        [[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(u))]
    )
    total = arc[-1]
    if total <= 0.0:
        raise DegenerateFiber("mean curve has zero arc length")
    u_at = _invert_arc(u, speed, arc, np.linspace(0.0, total, n_samples))
    samples = series.evaluate(u_at)
    tangents = _tangent_directions(series, u_at, float(speed.max()))
    return samples, total, tangents, u, arc / total


def mean_fiber(
    bundle: FiberBundle,
    degree: int = DEFAULT_DEGREE,
    samples: int = DEFAULT_SAMPLES,
) -> MeanFiber:
    """Mean fiber of a bundle from averaged cosine-series coefficients.

    Fibers must be consistently oriented (see :func:`reorient_bundle`). The
    averaged curve is resampled at ``samples`` points equidistant in arc
    length; tangents come from the analytic series derivative.
    """
    if samples < 2:
        raise OutOfRange(f"samples must be >= 2, got {samples}")
    coefs = []
    for i, fiber in enumerate(bundle.fibers):
        try:
            coefs.append(fit_cosine_series(fiber, degree).coefficients)
        except (DegenerateFiber, RankDeficient) as exc:
            raise type(exc)(f"fiber {i}: {exc}") from exc
    series = CosineSeries(np.mean(coefs, axis=0))
    pts, total, tangents, param_grid, arc_grid = _reparameterize(series, samples)
    return MeanFiber(series, pts, total, tangents, param_grid, arc_grid)


def sample_at(mean: MeanFiber, s: float):
    """Point and unit tangent of the mean fiber at arc-length fraction s."""
    if not 0.0 <= s <= 1.0:
        raise OutOfRange(f"arc-length fraction must lie in [0, 1], got {s}")
    u = np.interp(s, mean.arc_grid, mean.param_grid)
    point = mean.series.evaluate(u)[0]
    tangent = _tangent_directions(
        mean.series, np.atleast_1d(u), scale=mean.arc_length
    )[0]
    return point, tangent


def reorient_bundle(bundle: FiberBundle) -> FiberBundle:
    """Flip fibers so all endpoint-to-endpoint vectors agree with the first.

    A fiber is reversed when its endpoint vector has negative dot product
    with the first fiber's endpoint vector; a zero dot product keeps the
    stored order. Returns the input bundle unchanged when nothing flips.
    """
    ref = bundle.fibers[0].vertices[-1] - bundle.fibers[0].vertices[0]
    flipped_any = False
    fibers = []
    for fiber in bundle.fibers:
        v = fiber.vertices[-1] - fiber.vertices[0]
        if float(np.dot(v, ref)) < 0.0:
            fibers.append(fiber.flipped())
            flipped_any = True
        else:
            fibers.append(fiber)
    if not flipped_any:
        return bundle
    return FiberBundle(tuple(fibers), bundle.name)
