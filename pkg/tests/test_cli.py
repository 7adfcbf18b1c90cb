"""End-to-end CLI tests: outputs, exit codes, determinism."""

import json

import numpy as np
import pytest

import fiberflux as ff
from fiberflux.cli import main


def write_spec(path, name, seed, lesion=None, extra=None):
    doc = {
        "name": name,
        "centerline": {"kind": "line", "start": [0, 0, 0], "end": [60, 0, 0]},
        "fiber_count": 10,
        "tube_radius": 1.5,
        "fan_angle_deg": 0.0,
        "noise_std": 0.2,
        "vertices": 60,
        "seed": seed,
        "channels": {
            "FA": {
                "baseline": 0.75,
                "lesion": lesion,
            }
        },
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def bundle_file(tmp_path):
    spec = write_spec(tmp_path / "spec.json", "demo", 11)
    assert main(["synth", str(spec), "--out", str(tmp_path)]) == 0
    return tmp_path / "demo.bundle"


def run_profile_args(bundle_file, out, extra=()):
    return ["profile", str(bundle_file), "--channel", "FA",
            "--degree", "10", "--samples", "60", "--out", str(out), *extra]


def test_synth_writes_bundle_and_oracle(tmp_path):
    spec = write_spec(tmp_path / "spec.json", "synthy", 3,
                      lesion={"center": 0.5, "width": 0.2, "delta": -0.2})
    assert main(["synth", str(spec), "--out", str(tmp_path)]) == 0
    bundle = ff.load_bundle(tmp_path / "synthy.bundle")
    assert len(bundle) == 10
    oracle = json.loads((tmp_path / "synthy_oracle.json").read_text())
    # the 100-point export grid straddles s=0.5, where the clean minimum sits
    assert min(oracle["clean_profiles"]["FA"]) == pytest.approx(0.55, abs=2e-3)


def test_profile_command_outputs(tmp_path, bundle_file):
    out = tmp_path / "out"
    assert main(run_profile_args(bundle_file, out)) == 0
    csv_path = out / "demo_FA_profile.csv"
    svg_path = out / "demo_FA_profile.svg"
    assert csv_path.exists() and svg_path.exists()
    profile = ff.import_profile(csv_path)
    np.testing.assert_allclose(profile.magnitudes, 0.75, atol=0.01)
    text = csv_path.read_text()
    assert text.startswith("# config: ")  # config echoed into metadata
    assert svg_path.read_text().startswith("<?xml")


def test_profile_flat_bundle_is_flat(tmp_path, bundle_file):
    out = tmp_path / "out"
    main(run_profile_args(bundle_file, out))
    profile = ff.import_profile(out / "demo_FA_profile.csv")
    assert profile.magnitudes.std() < 5e-3


def test_profile_missing_channel_exit_2(tmp_path, bundle_file, capsys):
    code = main(["profile", str(bundle_file), "--channel", "RD",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "RD" in capsys.readouterr().err


def test_profile_missing_file_exit_2(tmp_path):
    code = main(["profile", str(tmp_path / "nope.bundle"),
                 "--channel", "FA", "--out", str(tmp_path)])
    assert code == 2


def test_profile_numerical_failure_exit_3(tmp_path, bundle_file, capsys):
    # an absurd tiny radius with fail policy gives empty cross-sections
    code = main(run_profile_args(bundle_file, tmp_path,
                                 extra=("--radius", "1e-9",
                                        "--empty-policy", "fail")))
    assert code == 3


def test_cli_rerun_byte_identical(tmp_path, bundle_file):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(run_profile_args(bundle_file, out_a)) == 0
    assert main(run_profile_args(bundle_file, out_b)) == 0
    for name in ("demo_FA_profile.csv", "demo_FA_profile.svg"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_synth_rerun_byte_identical(tmp_path):
    spec = write_spec(tmp_path / "spec.json", "twice", 5)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["synth", str(spec), "--out", str(out_a)]) == 0
    assert main(["synth", str(spec), "--out", str(out_b)]) == 0
    assert (out_a / "twice.bundle").read_bytes() == (out_b / "twice.bundle").read_bytes()
    assert (out_a / "twice_oracle.json").read_bytes() == (out_b / "twice_oracle.json").read_bytes()


def test_compare_identity_zero_dissimilarity(tmp_path, bundle_file):
    out = tmp_path / "cmp"
    code = main(["compare", str(bundle_file), str(bundle_file),
                 "--channel", "FA", "--degree", "10", "--samples", "50",
                 "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "demo_vs_demo_FA_summary.json").read_text())
    assert summary["global_dissimilarity"] < 1e-9
    assert (out / "demo_vs_demo_FA.csv").exists()
    assert (out / "demo_vs_demo_FA.svg").exists()


def test_compare_lesion_pair_peak_localized(tmp_path):
    healthy = write_spec(tmp_path / "h.json", "healthy", 21,
                         extra={"noise_std": 0.0})
    lesioned = write_spec(tmp_path / "l.json", "lesioned", 21,
                          lesion={"center": 0.5, "width": 0.2, "delta": -0.15},
                          extra={"noise_std": 0.0})
    main(["synth", str(healthy), "--out", str(tmp_path)])
    main(["synth", str(lesioned), "--out", str(tmp_path)])
    out = tmp_path / "cmp"
    code = main(["compare", str(tmp_path / "healthy.bundle"),
                 str(tmp_path / "lesioned.bundle"),
                 "--channel", "FA", "--degree", "10", "--samples", "80",
                 "--lam", "0.15", "--out", str(out)])
    assert code == 0
    rows = [l.split(",") for l in
            (out / "healthy_vs_lesioned_FA.csv").read_text().splitlines()[2:]]
    d = np.array([float(r[6]) for r in rows])
    peak = np.argmax(d)
    assert abs(peak / (len(d) - 1) - 0.5) < 0.05
    assert d[peak] > 0.1


def _make_cohort_dir(tmp_path, name, seeds, lesion=None):
    cohort = tmp_path / name
    cohort.mkdir()
    for seed in seeds:
        spec = write_spec(tmp_path / f"{name}_{seed}.json", f"{name}{seed}",
                          seed, lesion=lesion,
                          extra={"channels": {"FA": {
                              "baseline": 0.75,
                              "bumps": None,
                              "lesion": lesion,
                          }}})
        # bumps via JSON are not part of the spec loader; rebuild directly
        spec_obj = ff.SyntheticSpec(
            centerline={"kind": "line", "start": [0, 0, 0], "end": [60, 0, 0]},
            fiber_count=10, tube_radius=1.5, noise_std=0.2,
            channels={"FA": ff.ChannelSpec(
                0.75, bumps=(ff.Lesion(0.5, 1.0, -0.2),),
                lesion=None if lesion is None else
                ff.Lesion(lesion["center"], lesion["width"], lesion["delta"]),
            )},
            vertices=60, seed=seed, name=f"{name}{seed}",
        )
        bundle, _ = ff.generate_bundle(spec_obj)
        ff.save_bundle(bundle, cohort / f"{name}{seed}.bundle")
    return cohort


def test_atlas_and_zscore_commands(tmp_path):
    cohort = _make_cohort_dir(tmp_path, "nc", range(100, 108))
    out = tmp_path / "atlas_out"
    code = main(["atlas", str(cohort), "--channel", "FA", "--degree", "10",
                 "--samples", "60", "--lam", "0.15", "--out", str(out)])
    assert code == 0
    atlas_path = out / "atlas_FA.json"
    atlas = ff.import_atlas(atlas_path)
    assert atlas.cohort_size == 8 and atlas.n_samples == 60
    assert (out / "atlas_FA.svg").exists()

    subject_dir = _make_cohort_dir(
        tmp_path, "sub", [999],
        lesion={"center": 0.5, "width": 0.25, "delta": -0.1},
    )
    subject = next(subject_dir.glob("*.bundle"))
    code = main(["zscore", str(subject), str(atlas_path), "--channel", "FA",
                 "--degree", "10", "--samples", "60", "--lam", "0.15",
                 "--out", str(out)])
    assert code == 0
    amap = ff.import_anomaly(out / "sub999_FA_zscore.csv")
    idx = np.nanargmax(np.abs(amap.z_scores))
    assert abs(amap.arc_positions[idx] - 0.5) < 0.1
    assert np.nanmax(np.abs(amap.z_scores)) > 5.0


def test_zscore_channel_mismatch_exit_2(tmp_path):
    cohort = _make_cohort_dir(tmp_path, "g", range(200, 204))
    out = tmp_path / "o"
    main(["atlas", str(cohort), "--channel", "FA", "--degree", "10",
          "--samples", "40", "--out", str(out)])
    subject = next(cohort.glob("*.bundle"))
    code = main(["zscore", str(subject), str(out / "atlas_FA.json"),
                 "--channel", "FFD", "--degree", "10", "--samples", "40",
                 "--out", str(out)])
    assert code == 2


def test_groupstats_command(tmp_path):
    a = _make_cohort_dir(tmp_path, "ga", range(300, 306))
    b = _make_cohort_dir(tmp_path, "gb", range(400, 406),
                         lesion={"center": 0.5, "width": 0.25, "delta": -0.03})
    out = tmp_path / "gs"
    code = main(["groupstats", str(a), str(b), "--channel", "FA",
                 "--degree", "10", "--samples", "60", "--lam", "0.15",
                 "--out", str(out)])
    assert code == 0
    stats = ff.import_stats(out / "groupstats_FA.csv")
    assert stats.significant.any()
    strongest = stats.arc_positions[np.argmin(stats.q_values)]
    assert abs(strongest - 0.5) < 0.1
    assert (out / "groupstats_FA.svg").exists()


def test_output_dir_env_override(tmp_path, bundle_file, monkeypatch):
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv("FIBERFLUX_OUTPUT_DIR", str(env_dir))
    args = ["profile", str(bundle_file), "--channel", "FA",
            "--degree", "10", "--samples", "40"]
    assert main(args) == 0
    assert (env_dir / "demo_FA_profile.csv").exists()


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["profile", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "default" in text and "--samples" in text and "--radius" in text
