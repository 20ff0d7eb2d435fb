"""Procedural shape families, sample-set generation, and run manifests.

Analytic families (box aspect sweeps, sphere radius sweeps, torus sweeps)
provide exact ground-truth signed distance, which makes them suitable for
quantitative experiments without any external mesh data. A manifest is a
JSON-lines index tying shape ids to sample files, counts, and provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .geometry import AnalyticShape, Box, Sphere, Torus
from .sampling import PrepConfig, SampleSet, sample_analytic, write_samples
from .surfacing import VoxelGrid, marching_cubes

FAMILY_KINDS = ("boxes", "spheres", "torus")


@dataclass
class FamilyMember:
    shape_id: str
    shape: AnalyticShape


def make_family(kind: str, count: int, t_values=None) -> list[FamilyMember]:
    """Build a parameter sweep of analytic shapes.

    t_values in [0, 1] place members along the sweep; by default they are
    evenly spaced. All members fit well inside the unit sphere.
    """
    if kind not in FAMILY_KINDS:
        raise ConfigError(f"unknown family {kind!r}, expected one of {FAMILY_KINDS}")
    if count < 1:
        raise ConfigError("family needs at least one member")
    if t_values is None:
        t_values = np.linspace(0.0, 1.0, count) if count > 1 else np.array([0.5])
    t_values = np.asarray(t_values, dtype=np.float64)
    stem = {"boxes": "box", "spheres": "sphere", "torus": "torus"}[kind]
    members = []
    for i, t in enumerate(t_values):
        if kind == "boxes":
            # aspect sweep with monotone volume along the parameter
            shape = Box([0.20 + 0.35 * t, 0.35, 0.30])
        elif kind == "spheres":
            shape = Sphere((0.0, 0.0, 0.0), 0.30 + 0.50 * t)
        else:
            shape = Torus(0.45 + 0.25 * t, 0.15 + 0.05 * t)
        members.append(FamilyMember(f"{stem}{i:03d}", shape))
    return members


def heldout_t_values(count: int, train_count: int) -> np.ndarray:
    """Sweep positions halfway between training grid points."""
    mids = (np.arange(train_count - 1) + 0.5) / (train_count - 1)
    take = np.linspace(0, len(mids) - 1, count).round().astype(int)
    return mids[take]


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


@dataclass
class ManifestEntry:
    shape_id: str
    sample_file: str
    n_positive: int
    n_negative: int
    double_sided_fraction: float | None
    provenance: dict
    prep_hash: str
    gt_mesh: str | None = None


def prep_config_hash(config: PrepConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(json.dumps(asdict(e), sort_keys=True) + "\n")


def read_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    base = Path(path).parent
    entries = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entry = ManifestEntry(**rec)
            except (json.JSONDecodeError, TypeError) as exc:
                raise DataError(f"{path}:{line_no}: bad manifest record ({exc})")
            if entry.shape_id in seen:
                raise DataError(f"duplicate shape id {entry.shape_id!r} in manifest")
            seen.add(entry.shape_id)
            if check_files and not (base / entry.sample_file).exists():
                raise DataError(
                    f"sample file {entry.sample_file!r} for {entry.shape_id!r} not found"
                )
            entries.append(entry)
    return entries


def manifest_sample_path(manifest_path, entry: ManifestEntry) -> Path:
    return Path(manifest_path).parent / entry.sample_file


# ---------------------------------------------------------------------------
# Family generation
# ---------------------------------------------------------------------------


def analytic_gt_mesh(shape: AnalyticShape, resolution: int = 96):
    """Ground-truth mesh from the exact SDF sampled on a dense grid."""
    lo = np.array([-1.0, -1.0, -1.0])
    hi = np.array([1.0, 1.0, 1.0])
    n = resolution + 1
    lin = np.linspace(-1.0, 1.0, n)
    xx, yy = np.meshgrid(lin, lin, indexing="ij")
    slabs = []
    for zval in lin:
        pts = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, zval)], axis=1)
        slabs.append(np.asarray(shape.sdf(pts)).reshape(n, n))
    values = np.stack(slabs, axis=2)
    return marching_cubes(VoxelGrid(resolution, (lo, hi), values))


def gen_family(kind: str, count: int, out_dir, prep: PrepConfig, seed: int = 0,
               t_values=None, gt_resolution: int = 96) -> Path:
    """Emit sample files, ground-truth meshes, and a manifest for a family.

    Sample distances are oracle-exact. Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    members = make_family(kind, count, t_values)
    entries = []
    h = prep_config_hash(prep)
    for i, member in enumerate(members):
        samples = sample_analytic(member.shape, prep, seed=seed + i,
                                  shape_id=member.shape_id)
        sample_file = f"{member.shape_id}.sdfs"
        write_samples(out / sample_file, samples)
        gt = analytic_gt_mesh(member.shape, gt_resolution)
        gt_file = f"{member.shape_id}_gt.obj"
        gt.write_obj(out / gt_file)
        entries.append(
            ManifestEntry(
                shape_id=member.shape_id,
                sample_file=sample_file,
                n_positive=samples.n_positive,
                n_negative=samples.n_negative,
                double_sided_fraction=None,
                provenance={"analytic": member.shape.descriptor()},
                prep_hash=h,
                gt_mesh=gt_file,
            )
        )
    manifest = out / "manifest.jsonl"
    write_manifest(manifest, entries)
    return manifest


def load_manifest_samples(manifest_path) -> list[SampleSet]:
    """Read every sample set referenced by a manifest, in manifest order."""
    entries = read_manifest(manifest_path)
    from .sampling import read_samples

    return [
        read_samples(manifest_sample_path(manifest_path, e), shape_id=e.shape_id)
        for e in entries
    ]
