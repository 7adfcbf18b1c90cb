"""Pairwise and group-wise along-tract statistics.

Builds on aligned tract profiles: pointwise/global dissimilarities between
two bundles, cohort reference profiles and standardized atlases, z-score
anomaly maps against an atlas, and pointwise two-sample tests with
Benjamini-Hochberg correction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import stdtr

from .align import align_profiles
from .bundle import MeanFiber
from .descriptors import TractProfile
from .errors import (
    ChannelMismatch,
    DegenerateVarianceWarning,
    LengthMismatch,
    ValidationError,
)

DEFAULT_FDR_Q = 0.05
# reference vectors shorter than this fraction of the mean entry norm are
# reported as direction cancellations
_CANCELLATION_FRACTION = 0.1


@dataclass(eq=False)
class GroupAtlas:
    """Standardized per-point profile of a cohort.

    ``reference_profile`` holds the pointwise mean descriptor vectors and
    ``reference_mean_fiber`` the pointwise mean centerline; ``pointwise_mean``
    and ``pointwise_std`` summarize the aligned cohort magnitudes (unbiased
    std, n-1).
    """

    reference_profile: np.ndarray  # (M, 3)
    reference_mean_fiber: np.ndarray  # (M, 3)
    pointwise_mean: np.ndarray  # (M,)
    pointwise_std: np.ndarray  # (M,)
    cohort_size: int
    channel: str

    def __post_init__(self):
        m = len(self.pointwise_mean)
        for name in ("reference_profile", "reference_mean_fiber", "pointwise_std"):
            if len(getattr(self, name)) != m:
                raise ValidationError(f"{name} length differs from pointwise_mean")
        if np.any(np.asarray(self.pointwise_std) < 0):
            raise ValidationError("pointwise_std entries must be >= 0")
        if self.cohort_size < 2:
            raise ValidationError("cohort_size must be >= 2 for std to be defined")

    @property
    def n_samples(self) -> int:
        return len(self.pointwise_mean)

    @property
    def arc_positions(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_samples)

    def reference_as_profile(self) -> TractProfile:
        """Reference vectors repackaged as a profile for alignment."""
        mags = np.linalg.norm(self.reference_profile, axis=1)
        dirs = np.zeros_like(self.reference_profile)
        nonzero = mags > 0.0
        dirs[nonzero] = self.reference_profile[nonzero] / mags[nonzero, None]
        return TractProfile(mags, dirs, self.arc_positions, "reference", self.channel)


@dataclass(eq=False)
class PointwiseStats:
    """Per-point two-sample test results with FDR-adjusted q-values."""

    t_statistics: np.ndarray
    p_values: np.ndarray
    q_values: np.ndarray
    significant: np.ndarray
    n_a: int
    n_b: int
    arc_positions: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p_values, dtype=float)
        q = np.asarray(self.q_values, dtype=float)
        if np.any((p < 0) | (p > 1)) or np.any((q < 0) | (q > 1)):
            raise ValidationError("p and q values must lie in [0, 1]")


@dataclass(eq=False)
class AnomalyMap:
    """Per-point deviation of a subject from an atlas, in units of STDs.

    Entries are NaN where the atlas std is zero (flagged undefined).
    """

    z_scores: np.ndarray
    arc_positions: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.z_scores)


def _check_aligned(a: TractProfile, b: TractProfile):
    if len(a) != len(b):
        raise LengthMismatch(f"profiles have {len(a)} and {len(b)} points")
    if a.channel != b.channel:
        raise ChannelMismatch(
            f"cannot compare channel {a.channel!r} with {b.channel!r}"
        )


def pairwise_dissimilarity(a: TractProfile, b: TractProfile) -> np.ndarray:
    """Pointwise Euclidean distance between two aligned descriptor profiles."""
    _check_aligned(a, b)
    return np.linalg.norm(a.vectors() - b.vectors(), axis=1)


def global_dissimilarity(a: TractProfile, b: TractProfile, path) -> float:
    """Integral of the pointwise dissimilarity over the alignment path length."""
    d = pairwise_dissimilarity(a, b)
    samples = np.asarray(path.samples, dtype=float)
    if len(samples) != len(d):
        raise LengthMismatch(
            f"path has {len(samples)} samples for {len(d)} profile points"
        )
    cum = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(samples, axis=0), axis=1))]
    )
    return float(np.trapezoid(d, cum))


def reference_profile(cohort):
    """Pointwise vector mean of cohort profiles and of their mean fibers.

    ``cohort`` is a sequence of (TractProfile, MeanFiber) pairs on a joint
    arc-length parameterization. Returns (reference TractProfile, (M, 3)
    reference centerline). Points where the vector mean nearly cancels are
    reported with a warning and get magnitude 0 with a zero direction.
    """
    if len(cohort) < 1:
        raise ValidationError("cohort must contain at least one profile")
    profiles = [p for p, _ in cohort]
    first = profiles[0]
    for p in profiles[1:]:
        _check_aligned(first, p)
    vectors = np.stack([p.vectors() for p in profiles])  # (N, M, 3)
    ref_vectors = vectors.mean(axis=0)
    fibers = np.stack([mf.samples if isinstance(mf, MeanFiber) else np.asarray(mf)
                       for _, mf in cohort])
    if fibers.shape[1] != len(first):
        raise LengthMismatch(
            f"mean fibers have {fibers.shape[1]} samples for "
            f"{len(first)} profile points"
        )
    ref_fiber = fibers.mean(axis=0)
    mags = np.linalg.norm(ref_vectors, axis=1)
    entry_norms = np.linalg.norm(vectors, axis=2).mean(axis=0)
    cancelled = mags < _CANCELLATION_FRACTION * entry_norms
    if cancelled.any():
        warnings.warn(
            f"reference vectors nearly cancel at sample indices "
            f"{np.flatnonzero(cancelled).tolist()}",
            UserWarning,
            stacklevel=2,
        )
    dirs = np.zeros_like(ref_vectors)
    nonzero = mags > 0.0
    dirs[nonzero] = ref_vectors[nonzero] / mags[nonzero, None]
    ref = TractProfile(mags, dirs, first.arc_positions, "reference", first.channel)
    return ref, ref_fiber


def _align_to_reference(profile, reference, lam, epsilon, samples):
    """Subject magnitudes interpolated onto the reference's uniform samples."""
    path, _, _ = align_profiles(profile, reference, lam, epsilon)
    pts = path.samples
    ref_coords = np.linspace(0.0, len(reference) - 1.0, samples)
    subj_coords = np.interp(ref_coords, pts[:, 1], pts[:, 0])
    subj_frac = subj_coords / max(len(profile) - 1, 1)
    mags = np.interp(subj_frac, profile.arc_positions, profile.magnitudes)
    dirs = np.empty((samples, 3))
    for axis in range(3):
        dirs[:, axis] = np.interp(
            subj_frac, profile.arc_positions, profile.directions[:, axis]
        )
    norms = np.linalg.norm(dirs, axis=1)
    nonzero = norms > 0.0
    dirs[nonzero] /= norms[nonzero, None]
    return TractProfile(
        mags, dirs, np.linspace(0.0, 1.0, samples), profile.bundle_name,
        profile.channel,
    )


def align_to_atlas(
    profile: TractProfile,
    atlas: GroupAtlas,
    lam: float | None = None,
    epsilon: float = 0.05,
) -> TractProfile:
    """Map a subject profile onto an atlas's reference parameterization."""
    return _align_to_reference(
        profile, atlas.reference_as_profile(), lam, epsilon, atlas.n_samples
    )


def build_atlas(
    cohort,
    lam: float | None = None,
    epsilon: float = 0.05,
    samples: int | None = None,
) -> GroupAtlas:
    """Standardized atlas of a cohort of (TractProfile, MeanFiber) pairs.

    Builds the cohort reference, aligns every subject profile to it, and
    interpolates each alignment onto the reference's uniform samples; the
    atlas mean/std summarize the aligned magnitudes (single pass, the
    reference is not re-iterated).
    """
    if len(cohort) < 2:
        raise ValidationError("an atlas needs a cohort of at least 2 subjects")
    ref, ref_fiber = reference_profile(cohort)
    m_out = samples if samples is not None else len(ref)
    if m_out != len(ref):
        frac = np.linspace(0.0, 1.0, m_out)
        ref_vec = ref.vectors()
        ref_vectors = np.column_stack(
            [np.interp(frac, ref.arc_positions, ref_vec[:, k]) for k in range(3)]
        )
        ref_fiber = np.column_stack(
            [np.interp(frac, ref.arc_positions, ref_fiber[:, k]) for k in range(3)]
        )
        mags = np.linalg.norm(ref_vectors, axis=1)
        dirs = np.zeros_like(ref_vectors)
        nz = mags > 0.0
        dirs[nz] = ref_vectors[nz] / mags[nz, None]
        ref = TractProfile(mags, dirs, frac, "reference", ref.channel)
    aligned = np.empty((len(cohort), m_out))
    for n, (profile, _) in enumerate(cohort):
        try:
            aligned[n] = _align_to_reference(
                profile, ref, lam, epsilon, m_out
            ).magnitudes
        except Exception as exc:
            raise type(exc)(f"subject {n}: {exc}") from exc
    return GroupAtlas(
        ref.vectors(),
        ref_fiber,
        aligned.mean(axis=0),
        aligned.std(axis=0, ddof=1),
        len(cohort),
        ref.channel,
    )


def zscore_profile(subject: TractProfile, atlas: GroupAtlas) -> AnomalyMap:
    """Subject deviation from the atlas in units of pointwise STDs.

    The subject must already be aligned to the atlas reference (see
    :func:`align_to_atlas`). Points with zero atlas std are NaN.
    """
    if len(subject) != atlas.n_samples:
        raise LengthMismatch(
            f"subject has {len(subject)} points, atlas {atlas.n_samples}"
        )
    std = np.asarray(atlas.pointwise_std, dtype=float)
    z = np.full(atlas.n_samples, np.nan)
    ok = std > 0.0
    z[ok] = (np.abs(subject.magnitudes[ok]) - atlas.pointwise_mean[ok]) / std[ok]
    return AnomalyMap(z, atlas.arc_positions)


def fdr_correct(p_values, q: float = DEFAULT_FDR_Q):
    """Benjamini-Hochberg step-up; returns (q_values, significance mask).

    Adjusted q-values follow the standard monotone cumulative-minimum
    formula; the mask marks points whose adjusted value is <= q.
    """
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy(), np.zeros(0, dtype=bool)
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    q_values = np.empty(m)
    q_values[order] = adjusted
    return q_values, q_values <= q


def pointwise_ttest(
    group_a,
    group_b,
    equal_var: bool = True,
    fdr_q: float = DEFAULT_FDR_Q,
) -> PointwiseStats:
    """Pointwise unpaired two-sample t-test on profile magnitudes.

    Pooled-variance Student test by default (``equal_var=False`` selects
    Welch), two-tailed p-values, Benjamini-Hochberg adjusted q-values at
    level ``fdr_q``. Points where both groups have zero variance get p = 1
    when the means agree and p = 0 (with a warning) when they differ.
    """
    for group, label in ((group_a, "a"), (group_b, "b")):
        if len(group) < 2:
            raise ValidationError(f"group {label} needs at least 2 subjects")
    xa = np.stack([p.magnitudes for p in group_a])
    xb = np.stack([p.magnitudes for p in group_b])
    if xa.shape[1] != xb.shape[1]:
        raise LengthMismatch(
            f"group profiles have {xa.shape[1]} and {xb.shape[1]} points"
        )
    na, nb = len(xa), len(xb)
    mean_a, mean_b = xa.mean(axis=0), xb.mean(axis=0)
    var_a = xa.var(axis=0, ddof=1)
    var_b = xb.var(axis=0, ddof=1)
    if equal_var:
        df = np.full(xa.shape[1], na + nb - 2, dtype=float)
        denom = np.sqrt(
            ((na - 1) * var_a + (nb - 1) * var_b) / (na + nb - 2)
        ) * np.sqrt(1.0 / na + 1.0 / nb)
    else:
        sa, sb = var_a / na, var_b / nb
        denom = np.sqrt(sa + sb)
        with np.errstate(divide="ignore", invalid="ignore"):
            df = (sa + sb) ** 2 / (
                sa**2 / (na - 1) + sb**2 / (nb - 1)
            )
    delta = mean_a - mean_b
    degenerate = denom == 0.0
    t = np.zeros_like(delta)
    p = np.ones_like(delta)
    ok = ~degenerate
    t[ok] = delta[ok] / denom[ok]
    p[ok] = 2.0 * stdtr(df[ok], -np.abs(t[ok]))
    if degenerate.any():
        conflicting = degenerate & (delta != 0.0)
        t[conflicting & (delta > 0)] = np.inf
        t[conflicting & (delta < 0)] = -np.inf
        p[conflicting] = 0.0
        if conflicting.any():
            warnings.warn(
                f"zero variance with unequal means at sample indices "
                f"{np.flatnonzero(conflicting).tolist()}; p set to 0",
                DegenerateVarianceWarning,
                stacklevel=2,
            )
    q_values, significant = fdr_correct(p, fdr_q)
    arc = group_a[0].arc_positions if len(group_a) else None
    return PointwiseStats(t, p, q_values, significant, na, nb, arc)
