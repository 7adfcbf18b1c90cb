"""Symmetric sub-sample alignment of two tract profiles.

Pointwise descriptor dissimilarities (plus a regularization offset) form an
inverse speed map over the product of the two arc-length parameterizations.
Fast marching solves the Eikonal equation on that map from (0, 0); gradient
backtracking from the far corner then traces the minimal-cost correspondence
path, which is resampled into a monotone alignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .descriptors import TractProfile
from .errors import ChannelMismatch, StalledDescent, ValidationError

DEFAULT_EPSILON = 0.05
# relative factor applied to the mean off-diagonal dissimilarity
DEFAULT_LAMBDA_FACTOR = 0.1
_LAMBDA_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class DissimilarityGrid:
    """Inverse speed map between two profiles: pointwise vector distance + lam."""

    values: np.ndarray  # (M1, M2)
    lam: float
    length_a: float = math.nan  # physical arc lengths, metadata only
    length_b: float = math.nan

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError("grid values must be 2-D")
        if not self.lam > 0.0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        if values.min() < self.lam:
            raise ValidationError("every grid value must be >= lambda")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class DistanceMap:
    """Eikonal solution T over a dissimilarity grid, source at (0, 0)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values[0, 0] != 0.0:
            raise ValidationError("distance map must vanish at the origin")
        if not np.isfinite(values).all():
            raise ValidationError("distance map must be finite everywhere")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class AlignmentPath:
    """Monotone correspondence between two profiles, in grid coordinates."""

    samples: np.ndarray  # (M, 2)
    step: float = math.nan

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 2:
            raise ValidationError("path samples must be (M, 2)")
        if np.any(np.diff(samples, axis=0) < -1e-9):
            raise ValidationError("path coordinates must be non-decreasing")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def fractions(self, shape) -> np.ndarray:
        """Path samples as arc-length fractions of each profile; (M, 2)."""
        scale = np.array([max(shape[0] - 1, 1), max(shape[1] - 1, 1)], dtype=float)
        return self.samples / scale


def dissimilarity_grid(
    a: TractProfile,
    b: TractProfile,
    lam: float | None = None,
    length_a: float = math.nan,
    length_b: float = math.nan,
) -> DissimilarityGrid:
    """Pairwise descriptor distances between two profiles, offset by lambda.

    Entry (i, j) is the Euclidean norm of the difference between the i-th
    descriptor vector of ``a`` and the j-th of ``b``, plus ``lam``. When
    ``lam`` is None it defaults to 0.1 times the mean off-diagonal raw
    dissimilarity (floored at 1e-6 for identical profiles), which keeps the
    regularization invariant to the channel's units.
    """
    if a.channel != b.channel:
        raise ChannelMismatch(
            f"cannot compare channel {a.channel!r} with {b.channel!r}"
        )
    va = a.vectors()
    vb = b.vectors()
    raw = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
    if lam is None:
        if raw.shape[0] == raw.shape[1]:
            mask = ~np.eye(raw.shape[0], dtype=bool)
            base = float(raw[mask].mean()) if mask.any() else 0.0
        else:
            base = float(raw.mean())
        lam = DEFAULT_LAMBDA_FACTOR * base
        if lam <= 0.0:
            lam = _LAMBDA_FLOOR
    return DissimilarityGrid(raw + lam, float(lam), length_a, length_b)


def fmm_solve(grid: DissimilarityGrid) -> DistanceMap:
    """First-order upwind fast-marching solution with source (0, 0).

    Unit spacing on both axes; the result is the viscosity solution of the
    discretized Eikonal equation with the grid as inverse speed.
    """
    return DistanceMap(_kernels.fmm_kernel(np.ascontiguousarray(grid.values)))


def backtrack_path(tmap: DistanceMap, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Raw descent path on T from the far corner to the exact origin.

    Steps of exact length ``epsilon`` along the negative normalized gradient
    (central differences, one-sided at borders, bilinearly interpolated),
    clamped to the grid rectangle. Terminates once within sqrt(2)*epsilon of
    the origin, which is then appended exactly. Returns the path in descent
    order, shape (P, 2).

    Raises StalledDescent when T fails to decrease for 10 consecutive steps
    or the step budget is exhausted.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon}")
    T = tmap.values
    n1, n2 = T.shape
    g1, g2 = np.gradient(T)
    max_steps = int(8 * (n1 + n2) / epsilon) + 16
    buf = np.empty((max_steps, 2))
    count, status = _kernels.backtrack_kernel(
        T, np.ascontiguousarray(g1), np.ascontiguousarray(g2),
        float(epsilon), max_steps, buf,
    )
    if status == 1:
        raise StalledDescent(
            f"T failed to decrease near {buf[count - 1]} after {count} steps; "
            "check the distance map or reduce epsilon"
        )
    if status == 2:
        raise StalledDescent(f"descent exceeded {max_steps} steps without converging")
    path = np.vstack([buf[:count], [0.0, 0.0]])
    return path


def resample_path(raw: np.ndarray, samples: int, step: float = math.nan) -> AlignmentPath:
    """Resample a raw path to ``samples`` points equspaced by path length.

    The output runs from (0, 0) to the far corner with endpoints preserved
    exactly; per-coordinate monotonicity is enforced by isotonic clipping.
    """
    pts = np.asarray(raw, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValidationError("raw path must be (P, 2) with P >= 2")
    if samples < 2:
        raise ValidationError(f"samples must be >= 2, got {samples}")
    # orient origin-first
    if np.linalg.norm(pts[0]) > np.linalg.norm(pts[-1]):
        pts = pts[::-1]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        raise ValidationError("raw path has zero length")
    targets = np.linspace(0.0, total, samples)
    out = np.column_stack(
        [np.interp(targets, cum, pts[:, 0]), np.interp(targets, cum, pts[:, 1])]
    )
    out[0] = pts[0]
    out[-1] = pts[-1]
    out = np.maximum.accumulate(out, axis=0)
    return AlignmentPath(out, step)


def _interp_profile(profile: TractProfile, fractions: np.ndarray) -> TractProfile:
    """Profile values at fractional arc positions, direction renormalized."""
    mags = np.interp(fractions, profile.arc_positions, profile.magnitudes)
    dirs = np.empty((len(fractions), 3))
    for axis in range(3):
        dirs[:, axis] = np.interp(
            fractions, profile.arc_positions, profile.directions[:, axis]
        )
    norms = np.linalg.norm(dirs, axis=1)
    nonzero = norms > 0.0
    dirs[nonzero] /= norms[nonzero, None]
    return TractProfile(
        mags,
        dirs,
        np.linspace(0.0, 1.0, len(fractions)),
        profile.bundle_name,
        profile.channel,
    )


def align_profiles(
    a: TractProfile,
    b: TractProfile,
    lam: float | None = None,
    epsilon: float = DEFAULT_EPSILON,
    samples: int | None = None,
):
    """Align two profiles; returns (path, aligned_a, aligned_b).

    Composes the dissimilarity grid, the fast-marching solve, gradient
    backtracking and path resampling. The aligned profiles are the inputs
    interpolated at the path's fractional arc positions (magnitude and
    direction interpolated, direction renormalized) and live on a common
    uniform path parameterization of length ``samples`` (default: the longer
    input).
    """
    if samples is None:
        samples = max(len(a), len(b))
    grid = dissimilarity_grid(a, b, lam)
    tmap = fmm_solve(grid)
    raw = backtrack_path(tmap, epsilon)
    path = resample_path(raw, samples, step=epsilon)
    frac = path.fractions(grid.values.shape)
    return path, _interp_profile(a, frac[:, 0]), _interp_profile(b, frac[:, 1])
