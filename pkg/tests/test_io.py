"""Tests for the bundle file format, exports/imports, and the generator."""

import json
import math

import numpy as np
import pytest

import fiberflux as ff
from fiberflux.errors import (
    CountMismatch,
    ParseError,
    ValidationError,
    VersionMismatch,
)
from conftest import constant_profile, profile_from_values


@pytest.fixture
def sample_bundle():
    rng = np.random.default_rng(5)
    fibers = []
    for _ in range(4):
        n = rng.integers(5, 12)
        pts = np.cumsum(rng.uniform(0.1, 1.0, (n, 3)), axis=0)
        fibers.append(
            ff.FiberStreamline(
                pts,
                {"FA": rng.uniform(0.0, 1.0, n), "MD": rng.uniform(1e-4, 3e-3, n)},
            )
        )
    return ff.FiberBundle(tuple(fibers), "sample")


# ---------------------------------------------------------------------------
# bundle text format


def test_bundle_roundtrip_bit_exact(tmp_path, sample_bundle):
    path = tmp_path / "b.bundle"
    ff.save_bundle(sample_bundle, path)
    loaded = ff.load_bundle(path)
    assert loaded.name == sample_bundle.name
    assert loaded.channels == sample_bundle.channels
    for a, b in zip(loaded.fibers, sample_bundle.fibers):
        np.testing.assert_array_equal(a.vertices, b.vertices)
        for c in sample_bundle.channels:
            np.testing.assert_array_equal(a.scalars[c], b.scalars[c])


def test_bundle_save_load_save_byte_identical(tmp_path, sample_bundle):
    first = tmp_path / "a.bundle"
    second = tmp_path / "b.bundle"
    ff.save_bundle(sample_bundle, first)
    ff.save_bundle(ff.load_bundle(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_truncated_file_names_line(tmp_path, sample_bundle):
    path = tmp_path / "b.bundle"
    ff.save_bundle(sample_bundle, path)
    lines = path.read_text().splitlines()
    truncated = tmp_path / "t.bundle"
    truncated.write_text("\n".join(lines[:7]) + "\n")
    with pytest.raises(ParseError, match="line 8"):
        ff.load_bundle(truncated)


def test_version_mismatch(tmp_path):
    path = tmp_path / "b.bundle"
    path.write_text("version 2\nname x\nchannels\nfibers 0\n")
    with pytest.raises(VersionMismatch):
        ff.load_bundle(path)


def test_wrong_field_count_is_count_mismatch(tmp_path):
    path = tmp_path / "b.bundle"
    path.write_text(
        "version 1\nname x\nchannels FA\nfibers 1\n2\n0.0 0.0 0.0 0.5\n1.0 0.0 0.0\n"
    )
    with pytest.raises(CountMismatch, match="vertex 1"):
        ff.load_bundle(path)


def test_trailing_content_rejected(tmp_path):
    path = tmp_path / "b.bundle"
    path.write_text(
        "version 1\nname x\nchannels\nfibers 1\n2\n0.0 0.0 0.0\n1.0 0.0 0.0\n9\n"
    )
    with pytest.raises(CountMismatch, match="trailing"):
        ff.load_bundle(path)


def test_out_of_range_fa_cites_channel_and_fiber(tmp_path):
    path = tmp_path / "b.bundle"
    path.write_text(
        "version 1\nname x\nchannels FA\nfibers 2\n"
        "2\n0.0 0.0 0.0 0.5\n1.0 0.0 0.0 0.5\n"
        "2\n0.0 1.0 0.0 0.5\n1.0 1.0 0.0 1.2\n"
    )
    with pytest.raises(ValidationError, match=r"fiber 1.*FA"):
        ff.load_bundle(path)


def test_non_numeric_field_is_parse_error(tmp_path):
    path = tmp_path / "b.bundle"
    path.write_text(
        "version 1\nname x\nchannels\nfibers 1\n2\n0.0 zero 0.0\n1.0 0.0 0.0\n"
    )
    with pytest.raises(ParseError, match="line 6"):
        ff.load_bundle(path)


# ---------------------------------------------------------------------------
# profile / atlas / stats / anomaly exports


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_profile_roundtrip(tmp_path, fmt):
    profile = profile_from_values(
        0.5 + 0.3 * np.sin(np.linspace(0, 3, 24)), channel="MD"
    )
    path = tmp_path / f"p.{fmt}"
    ff.export_profile(profile, path, fmt=fmt, metadata={"channel": "MD"})
    back = ff.import_profile(path)
    np.testing.assert_allclose(back.magnitudes, profile.magnitudes, atol=1e-12)
    np.testing.assert_allclose(back.directions, profile.directions, atol=1e-12)
    np.testing.assert_allclose(back.arc_positions, profile.arc_positions, atol=1e-12)
    assert back.channel == "MD"


def test_profile_csv_shape(tmp_path):
    profile = constant_profile(m=3)
    path = tmp_path / "p.csv"
    ff.export_profile(profile, path, fmt="csv")
    lines = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    assert lines[0] == "index,arc_fraction,magnitude,dir_x,dir_y,dir_z,channel"
    assert len(lines) == 4


def _small_atlas():
    m = 12
    rng = np.random.default_rng(2)
    vectors = rng.normal(0.0, 0.5, (m, 3))
    return ff.GroupAtlas(
        vectors,
        np.cumsum(rng.uniform(0.5, 1.0, (m, 3)), axis=0),
        rng.uniform(0.3, 0.9, m),
        rng.uniform(0.0, 0.1, m),
        9,
        "FA",
    )


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_atlas_roundtrip(tmp_path, fmt):
    atlas = _small_atlas()
    path = tmp_path / f"a.{fmt}"
    ff.export_atlas(atlas, path, fmt=fmt)
    back = ff.import_atlas(path)
    np.testing.assert_allclose(back.pointwise_mean, atlas.pointwise_mean, atol=1e-12)
    np.testing.assert_allclose(back.pointwise_std, atlas.pointwise_std, atol=1e-12)
    np.testing.assert_allclose(
        back.reference_profile, atlas.reference_profile, atol=1e-12
    )
    np.testing.assert_allclose(
        back.reference_mean_fiber, atlas.reference_mean_fiber, atol=1e-12
    )
    assert back.cohort_size == 9 and back.channel == "FA"


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_stats_roundtrip(tmp_path, fmt):
    rng = np.random.default_rng(0)
    p = rng.uniform(0.0, 1.0, 15)
    q, sig = ff.fdr_correct(p, 0.05)
    stats = ff.PointwiseStats(
        rng.normal(0, 2, 15), p, q, sig, 9, 11, np.linspace(0, 1, 15)
    )
    path = tmp_path / f"s.{fmt}"
    ff.export_stats(stats, path, fmt=fmt)
    back = ff.import_stats(path)
    np.testing.assert_allclose(back.t_statistics, stats.t_statistics, atol=1e-12)
    np.testing.assert_allclose(back.p_values, stats.p_values, atol=1e-12)
    np.testing.assert_allclose(back.q_values, stats.q_values, atol=1e-12)
    np.testing.assert_array_equal(back.significant, stats.significant)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_anomaly_undefined_serialized_as_null(tmp_path, fmt):
    z = np.array([1.5, np.nan, -0.3])
    amap = ff.AnomalyMap(z, np.linspace(0, 1, 3))
    path = tmp_path / f"z.{fmt}"
    ff.export_anomaly(amap, path, fmt=fmt)
    text = path.read_text()
    assert "null" in text and " 0," not in text
    back = ff.import_anomaly(path)
    np.testing.assert_allclose(back.z_scores[[0, 2]], z[[0, 2]], atol=1e-12)
    assert np.isnan(back.z_scores[1])


# ---------------------------------------------------------------------------
# synthetic generator


def test_generator_deterministic():
    spec = ff.SyntheticSpec(
        centerline={"kind": "line", "start": [0, 0, 0], "end": [30, 0, 0]},
        fiber_count=7, tube_radius=1.0, fan_angle_deg=10.0, noise_std=0.2,
        channels={"FA": ff.ChannelSpec(0.7)}, vertices=40, seed=123,
    )
    a, _ = ff.generate_bundle(spec)
    b, _ = ff.generate_bundle(spec)
    for fa, fb in zip(a.fibers, b.fibers):
        np.testing.assert_array_equal(fa.vertices, fb.vertices)
        np.testing.assert_array_equal(fa.scalars["FA"], fb.scalars["FA"])


def test_generator_zero_noise_zero_fan_parallel():
    spec = ff.SyntheticSpec(
        centerline={"kind": "line", "start": [0, 0, 0], "end": [30, 0, 0]},
        fiber_count=5, tube_radius=1.0, fan_angle_deg=0.0, noise_std=0.0,
        channels={}, vertices=20, seed=1,
    )
    bundle, _ = ff.generate_bundle(spec)
    base = bundle.fibers[0].vertices
    for f in bundle.fibers[1:]:
        diffs = f.vertices - base
        np.testing.assert_allclose(diffs - diffs[0], 0.0, atol=1e-12)


def test_generator_lesion_bump_arithmetic():
    lesion = ff.Lesion(center=0.5, width=0.2, delta=-0.3)
    spec = ff.SyntheticSpec(
        centerline={"kind": "line", "start": [0, 0, 0], "end": [30, 0, 0]},
        fiber_count=1, tube_radius=1e-9, noise_std=0.0,
        channels={"FA": ff.ChannelSpec(0.7, lesion=lesion)},
        vertices=101, seed=0,
    )
    _, truth = ff.generate_bundle(spec)
    clean = truth.clean_profile("FA", 101)
    assert abs(clean.min() - 0.4) < 1e-12
    assert abs(clean[50] - 0.4) < 1e-12
    assert abs(clean[0] - 0.7) < 1e-12 and abs(clean[-1] - 0.7) < 1e-12


def test_generator_oracle_consistency():
    # noise-0, fan-0 bundle reproduces the clean analytic profile; compared at
    # each plane's true arc fraction on the generator centerline, which
    # isolates descriptor error from the mean fiber's parameterization bias.
    # vertices dense enough that the polyline's linear interpolation of the
    # raised cosine stays below the tolerance (h^2 |bump''| / 8 < 1e-6)
    lesion = ff.Lesion(center=0.5, width=0.3, delta=-0.2)
    spec = ff.SyntheticSpec(
        centerline={"kind": "line", "start": [0, 0, 0], "end": [50, 0, 0]},
        fiber_count=10, tube_radius=1.2, fan_angle_deg=0.0, noise_std=0.0,
        channels={"FA": ff.ChannelSpec(0.7, lesion=lesion)},
        vertices=2401, seed=4,
    )
    bundle, truth = ff.generate_bundle(spec)
    bundle = ff.reorient_bundle(bundle)
    mean = ff.mean_fiber(bundle, degree=20, samples=100)
    profile = ff.tract_profile(bundle, mean, "FA")
    fractions = mean.samples[:, 0] / 50.0  # true arc fraction along the line
    expected = truth.clean_channel("FA", fractions)
    assert np.abs(profile.magnitudes - expected).max() < 1e-6


def test_spec_validation():
    with pytest.raises(ValidationError):
        ff.SyntheticSpec(centerline={"kind": "blob"})
    with pytest.raises(ValidationError):
        ff.Lesion(0.5, 0.0, 0.1)
    with pytest.raises(ValidationError):
        ff.SyntheticSpec(
            centerline={"kind": "line", "start": [0, 0, 0], "end": [1, 0, 0]},
            fiber_count=0,
        )


def test_spec_json_loading(tmp_path):
    doc = {
        "name": "demo",
        "centerline": {"kind": "line", "start": [0, 0, 0], "end": [40, 0, 0]},
        "fiber_count": 6,
        "tube_radius": 1.0,
        "fan_angle_deg": 5.0,
        "noise_std": 0.1,
        "vertices": 50,
        "seed": 9,
        "channels": {
            "FA": {"baseline": 0.7,
                   "lesion": {"center": 0.4, "width": 0.2, "delta": -0.1}},
            "MD": {"baseline": 8e-4},
        },
        "geometry_lesion": {"center": 0.6, "width": 0.2, "max_angle_deg": 20.0},
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc))
    spec = ff.load_synthetic_spec(path)
    assert spec.name == "demo" and spec.seed == 9
    assert spec.channels["FA"].lesion.delta == -0.1
    assert spec.geometry_lesion.max_angle_deg == 20.0
    bundle, truth = ff.generate_bundle(spec)
    assert len(bundle) == 6 and bundle.channels == ("FA", "MD")
    out = tmp_path / "oracle.json"
    ff.export_ground_truth(truth, out)
    doc = json.loads(out.read_text())
    assert set(doc["clean_profiles"]) == {"FA", "MD", "FFD"}
    assert math.isclose(doc["flux_factor"], truth.flux_factor)
