"""File formats: bundle text files, profile/atlas/stats exports and imports.

The bundle interchange format is line-oriented text with an explicit header
block followed by one block per fiber::

    version 1
    name forceps_minor
    channels FA MD
    fibers 2
    3
    0.0 0.0 0.0 0.7 0.0008
    1.0 0.0 0.0 0.7 0.0008
    2.0 0.0 0.0 0.7 0.0008
    ...

Vertex rows hold ``x y z`` followed by one value per declared channel.
Numbers are serialized with the shortest round-trip decimal representation,
so save/load is bit-exact and save(load(f)) is byte-identical for files in
canonical order. Exports (CSV/JSON) round-trip through the matching import
functions to within 1e-12; leading ``#`` lines in CSV files carry metadata
and are ignored by the importers.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .bundle import FiberBundle, FiberStreamline
from .descriptors import TractProfile
from .errors import (
    CountMismatch,
    ParseError,
    ValidationError,
    VersionMismatch,
)
from .stats import AnomalyMap, GroupAtlas, PointwiseStats
from .synthetic import ChannelSpec, GeometryLesion, Lesion, SyntheticSpec

FORMAT_VERSION = 1

PROFILE_CSV_COLUMNS = ("index", "arc_fraction", "magnitude",
                       "dir_x", "dir_y", "dir_z", "channel")
STATS_CSV_COLUMNS = ("index", "arc_fraction", "t", "p", "q", "significant")
ANOMALY_CSV_COLUMNS = ("index", "arc_fraction", "z")
ATLAS_CSV_COLUMNS = ("index", "arc_fraction", "mean", "std",
                     "ref_x", "ref_y", "ref_z",
                     "fiber_x", "fiber_y", "fiber_z")


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# bundle text format


def save_bundle(bundle: FiberBundle, path) -> None:
    """Write a bundle in the text interchange format."""
    channels = bundle.channels
    lines = [
        f"version {FORMAT_VERSION}",
        f"name {bundle.name}",
        "channels" + ("" if not channels else " " + " ".join(channels)),
        f"fibers {len(bundle.fibers)}",
    ]
    for fiber in bundle.fibers:
        lines.append(str(fiber.n_vertices))
        scal = [fiber.scalars[c] for c in channels]
        for j, v in enumerate(fiber.vertices):
            row = [_fmt(v[0]), _fmt(v[1]), _fmt(v[2])]
            row.extend(_fmt(s[j]) for s in scal)
            lines.append(" ".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    @property
    def line_no(self) -> int:
        return self.pos  # 1-based number of the line just consumed

    def next(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise ParseError(f"unexpected end of file, expected {what}",
                             line=self.pos + 1)
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def exhausted(self) -> bool:
        return all(not l.strip() for l in self.lines[self.pos:])


def _header_field(reader: _LineReader, key: str) -> str:
    line = reader.next(f"header field {key!r}")
    if line != key and not line.startswith(key + " "):
        raise ParseError(f"expected header field {key!r}, got {line!r}",
                         line=reader.line_no)
    return line[len(key):].strip()


def load_bundle(path) -> FiberBundle:
    """Read a bundle text file, enforcing all bundle invariants."""
    reader = _LineReader(Path(path).read_text())
    version = _header_field(reader, "version")
    if version != str(FORMAT_VERSION):
        raise VersionMismatch(
            f"unsupported format version {version!r}, expected {FORMAT_VERSION}",
            line=reader.line_no,
        )
    name = _header_field(reader, "name")
    channels = _header_field(reader, "channels").split()
    fiber_field = _header_field(reader, "fibers")
    try:
        n_fibers = int(fiber_field)
    except ValueError:
        raise ParseError(f"fiber count is not an integer: {fiber_field!r}",
                         line=reader.line_no) from None
    width = 3 + len(channels)
    fibers = []
    for i in range(n_fibers):
        count_line = reader.next(f"vertex count of fiber {i}").strip()
        try:
            n_vertices = int(count_line)
        except ValueError:
            raise ParseError(
                f"vertex count of fiber {i} is not an integer: {count_line!r}",
                line=reader.line_no,
            ) from None
        rows = np.empty((n_vertices, width))
        for j in range(n_vertices):
            fields = reader.next(f"vertex {j} of fiber {i}").split()
            if len(fields) != width:
                raise CountMismatch(
                    f"fiber {i} vertex {j}: expected {width} fields "
                    f"(x y z + {len(channels)} channels), got {len(fields)}",
                    line=reader.line_no,
                )
            try:
                rows[j] = [float(f) for f in fields]
            except ValueError:
                raise ParseError(
                    f"fiber {i} vertex {j}: non-numeric field", line=reader.line_no
                ) from None
        scalars = {c: rows[:, 3 + k] for k, c in enumerate(channels)}
        try:
            fibers.append(FiberStreamline(rows[:, :3], scalars))
        except ValidationError as exc:
            raise ValidationError(f"fiber {i}: {exc}") from exc
    if not reader.exhausted():
        raise CountMismatch(
            f"trailing content after the {n_fibers} declared fibers",
            line=reader.pos + 1,
        )
    return FiberBundle(tuple(fibers), name)


# ---------------------------------------------------------------------------
# CSV/JSON helpers


def _write_csv(path, columns, rows, metadata=None):
    lines = []
    if metadata:
        lines.append("# config: " + json.dumps(metadata, sort_keys=True))
    lines.append(",".join(columns))
    lines.extend(",".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _read_csv(path, expected_columns):
    lines = [l for l in Path(path).read_text().splitlines()
             if l.strip() and not l.startswith("#")]
    if not lines:
        raise ParseError(f"{path}: empty CSV")
    header = tuple(lines[0].split(","))
    if header != tuple(expected_columns):
        raise ParseError(f"{path}: unexpected columns {header}")
    return [line.split(",") for line in lines[1:]]


def _cell(x: float) -> str:
    return "null" if math.isnan(x) else _fmt(x)


def _parse_cell(s: str) -> float:
    return math.nan if s == "null" else float(s)


# ---------------------------------------------------------------------------
# profiles


def export_profile(profile: TractProfile, path, fmt: str = "csv", metadata=None):
    """Write a profile as CSV (one row per sample) or schema-versioned JSON."""
    if fmt == "csv":
        rows = [
            (str(m), _fmt(profile.arc_positions[m]), _fmt(profile.magnitudes[m]),
             _fmt(profile.directions[m, 0]), _fmt(profile.directions[m, 1]),
             _fmt(profile.directions[m, 2]), profile.channel)
            for m in range(len(profile))
        ]
        _write_csv(path, PROFILE_CSV_COLUMNS, rows, metadata)
    elif fmt == "json":
        doc = {
            "version": FORMAT_VERSION,
            "kind": "profile",
            "bundle": profile.bundle_name,
            "channel": profile.channel,
            "arc_fractions": profile.arc_positions.tolist(),
            "magnitudes": profile.magnitudes.tolist(),
            "directions": profile.directions.tolist(),
        }
        if metadata:
            doc["config"] = metadata
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    else:
        raise ValidationError(f"unknown export format {fmt!r}")


def import_profile(path, bundle_name: str = "imported") -> TractProfile:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return TractProfile(
            np.asarray(doc["magnitudes"]),
            np.asarray(doc["directions"]),
            np.asarray(doc["arc_fractions"]),
            doc.get("bundle", bundle_name),
            doc["channel"],
        )
    rows = _read_csv(path, PROFILE_CSV_COLUMNS)
    arc = np.array([float(r[1]) for r in rows])
    mags = np.array([float(r[2]) for r in rows])
    dirs = np.array([[float(r[3]), float(r[4]), float(r[5])] for r in rows])
    channel = rows[0][6] if rows else "FFD"
    return TractProfile(mags, dirs, arc, bundle_name, channel)


# ---------------------------------------------------------------------------
# atlases


def export_atlas(atlas: GroupAtlas, path, fmt: str = "json", metadata=None):
    """Write an atlas; the JSON layout is the reference interchange schema."""
    if fmt == "json":
        doc = {
            "version": FORMAT_VERSION,
            "channel": atlas.channel,
            "M": atlas.n_samples,
            "mean": atlas.pointwise_mean.tolist(),
            "std": atlas.pointwise_std.tolist(),
            "reference_profile": atlas.reference_profile.tolist(),
            "reference_fiber": atlas.reference_mean_fiber.tolist(),
            "cohort_size": atlas.cohort_size,
        }
        if metadata:
            doc["config"] = metadata
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    elif fmt == "csv":
        meta = dict(metadata or {})
        meta.update(
            {"channel": atlas.channel, "M": atlas.n_samples,
             "cohort_size": atlas.cohort_size, "version": FORMAT_VERSION}
        )
        arc = atlas.arc_positions
        rows = [
            (str(m), _fmt(arc[m]), _fmt(atlas.pointwise_mean[m]),
             _fmt(atlas.pointwise_std[m]),
             _fmt(atlas.reference_profile[m, 0]),
             _fmt(atlas.reference_profile[m, 1]),
             _fmt(atlas.reference_profile[m, 2]),
             _fmt(atlas.reference_mean_fiber[m, 0]),
             _fmt(atlas.reference_mean_fiber[m, 1]),
             _fmt(atlas.reference_mean_fiber[m, 2]))
            for m in range(atlas.n_samples)
        ]
        _write_csv(path, ATLAS_CSV_COLUMNS, rows, meta)
    else:
        raise ValidationError(f"unknown export format {fmt!r}")


def import_atlas(path) -> GroupAtlas:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("version") != FORMAT_VERSION:
            raise VersionMismatch(
                f"unsupported atlas version {doc.get('version')!r}"
            )
        return GroupAtlas(
            np.asarray(doc["reference_profile"], dtype=float),
            np.asarray(doc["reference_fiber"], dtype=float),
            np.asarray(doc["mean"], dtype=float),
            np.asarray(doc["std"], dtype=float),
            int(doc["cohort_size"]),
            doc["channel"],
        )
    text = Path(path).read_text()
    meta = {}
    for line in text.splitlines():
        if line.startswith("# config: "):
            meta = json.loads(line[len("# config: "):])
    rows = _read_csv(path, ATLAS_CSV_COLUMNS)
    data = np.array([[float(c) for c in r] for r in rows])
    return GroupAtlas(
        data[:, 4:7], data[:, 7:10], data[:, 2], data[:, 3],
        int(meta.get("cohort_size", 2)), str(meta.get("channel", "FFD")),
    )


# ---------------------------------------------------------------------------
# pointwise statistics


def export_stats(stats: PointwiseStats, path, fmt: str = "csv", metadata=None):
    arc = stats.arc_positions
    if arc is None:
        arc = np.linspace(0.0, 1.0, len(stats.p_values))
    if fmt == "csv":
        rows = [
            (str(m), _fmt(arc[m]), _fmt(stats.t_statistics[m]),
             _fmt(stats.p_values[m]), _fmt(stats.q_values[m]),
             str(int(stats.significant[m])))
            for m in range(len(stats.p_values))
        ]
        _write_csv(path, STATS_CSV_COLUMNS, rows, metadata)
    elif fmt == "json":
        doc = {
            "version": FORMAT_VERSION,
            "kind": "stats",
            "arc_fractions": np.asarray(arc).tolist(),
            "t": np.asarray(stats.t_statistics).tolist(),
            "p": np.asarray(stats.p_values).tolist(),
            "q": np.asarray(stats.q_values).tolist(),
            "significant": [bool(v) for v in stats.significant],
            "n_a": stats.n_a,
            "n_b": stats.n_b,
        }
        if metadata:
            doc["config"] = metadata
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    else:
        raise ValidationError(f"unknown export format {fmt!r}")


def import_stats(path) -> PointwiseStats:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return PointwiseStats(
            np.asarray(doc["t"], dtype=float),
            np.asarray(doc["p"], dtype=float),
            np.asarray(doc["q"], dtype=float),
            np.asarray(doc["significant"], dtype=bool),
            int(doc["n_a"]),
            int(doc["n_b"]),
            np.asarray(doc["arc_fractions"], dtype=float),
        )
    rows = _read_csv(path, STATS_CSV_COLUMNS)
    arc = np.array([float(r[1]) for r in rows])
    t = np.array([float(r[2]) for r in rows])
    p = np.array([float(r[3]) for r in rows])
    q = np.array([float(r[4]) for r in rows])
    sig = np.array([bool(int(r[5])) for r in rows])
    return PointwiseStats(t, p, q, sig, 0, 0, arc)


# ---------------------------------------------------------------------------
# anomaly maps


def export_anomaly(amap: AnomalyMap, path, fmt: str = "csv", metadata=None):
    """Write z-scores; undefined points (atlas std 0) serialize as null."""
    if fmt == "csv":
        rows = [
            (str(m), _fmt(amap.arc_positions[m]), _cell(amap.z_scores[m]))
            for m in range(len(amap.z_scores))
        ]
        _write_csv(path, ANOMALY_CSV_COLUMNS, rows, metadata)
    elif fmt == "json":
        doc = {
            "version": FORMAT_VERSION,
            "kind": "anomaly",
            "arc_fractions": np.asarray(amap.arc_positions).tolist(),
            "z": [None if math.isnan(z) else float(z) for z in amap.z_scores],
        }
        if metadata:
            doc["config"] = metadata
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    else:
        raise ValidationError(f"unknown export format {fmt!r}")


def import_anomaly(path) -> AnomalyMap:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        z = np.array(
            [math.nan if v is None else float(v) for v in doc["z"]]
        )
        return AnomalyMap(z, np.asarray(doc["arc_fractions"], dtype=float))
    rows = _read_csv(path, ANOMALY_CSV_COLUMNS)
    arc = np.array([float(r[1]) for r in rows])
    z = np.array([_parse_cell(r[2]) for r in rows])
    return AnomalyMap(z, arc)


# ---------------------------------------------------------------------------
# synthetic specs and ground truth


def load_synthetic_spec(path) -> SyntheticSpec:
    """Read a SyntheticSpec from its JSON file form."""
    doc = json.loads(Path(path).read_text())
    channels = {}
    for name, c in doc.get("channels", {}).items():
        lesion = c.get("lesion")
        channels[name] = ChannelSpec(
            baseline=float(c["baseline"]),
            ramp_to=c.get("ramp_to"),
            step_at=c.get("step_at"),
            step_to=c.get("step_to"),
            lesion=None if lesion is None else Lesion(
                float(lesion["center"]), float(lesion["width"]),
                float(lesion["delta"]),
            ),
        )
    geo = doc.get("geometry_lesion")
    return SyntheticSpec(
        centerline=doc["centerline"],
        fiber_count=int(doc.get("fiber_count", 10)),
        tube_radius=float(doc.get("tube_radius", 1.0)),
        fan_angle_deg=float(doc.get("fan_angle_deg", 0.0)),
        noise_std=float(doc.get("noise_std", 0.0)),
        channels=channels,
        geometry_lesion=None if geo is None else GeometryLesion(
            float(geo["center"]), float(geo["width"]),
            float(geo["max_angle_deg"]),
        ),
        vertices=int(doc.get("vertices", 100)),
        seed=int(doc.get("seed", 0)),
        name=str(doc.get("name", "synthetic")),
    )


def export_ground_truth(truth, path, samples: int = 100, metadata=None):
    """Write the generator's clean profiles for every channel (plus FFD)."""
    s = np.linspace(0.0, 1.0, samples)
    doc = {
        "version": FORMAT_VERSION,
        "kind": "ground_truth",
        "name": truth.spec.name,
        "seed": truth.spec.seed,
        "centerline_length": truth.centerline_length,
        "flux_factor": truth.flux_factor,
        "arc_fractions": s.tolist(),
        "clean_profiles": {
            channel: truth.clean_profile(channel, samples).tolist()
            for channel in list(truth.spec.channels) + ["FFD"]
        },
    }
    if metadata:
        doc["config"] = metadata
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
