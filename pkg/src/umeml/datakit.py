"""Synthetic planted-signal cohorts, the UMFB feature-file format, and k-fold splits.

Layout of a generated dataset directory::

    manifest.jsonl          one JSON object per sample
    generator.json          the GeneratorConfig that produced it
    features/<id>_path.umfb patch bag, M x d
    features/<id>_gene.umfb gene groups, N x d_g
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .losses import SurvivalTarget, discretize

MAGIC = b"UMFB"
_HEADER = struct.Struct("<4sII")
MAX_ELEMENTS = 1 << 31


class FeatureFormatError(ValueError):
    """A feature file does not follow the UMFB layout."""


class BadMagicError(FeatureFormatError):
    pass


class TruncatedFileError(FeatureFormatError):
    pass


class DimensionOverflowError(FeatureFormatError):
    pass


def write_feature_file(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D matrix as UMFB: magic, u32 rows, u32 cols, f32 row-major, all little-endian."""
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise FeatureFormatError(f"feature matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FeatureFormatError("feature matrix has non-finite entries")
    rows, cols = arr.shape
    if rows > 0xFFFFFFFF or cols > 0xFFFFFFFF or rows * cols > MAX_ELEMENTS:
        raise DimensionOverflowError(f"shape {arr.shape} does not fit the UMFB header")
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(_HEADER.pack(MAGIC, rows, cols) + payload)


def read_feature_file(path: str | Path) -> np.ndarray:
    """Read a UMFB file into a float64 matrix."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: expected at least {_HEADER.size} header bytes, got {len(raw)}")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if rows * cols > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{path}: header claims {rows} x {cols} elements")
    expected = _HEADER.size + 4 * rows * cols
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, got {len(raw)}")
    if len(raw) > expected:
        raise FeatureFormatError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    return data.astype(np.float64).reshape(rows, cols)


@dataclass
class GeneratorConfig:
    n_samples: int = 200
    n_classes: int = 3
    d: int = 32
    d_g: int = 64
    m_min: int = 32
    m_max: int = 64
    n_groups: int = 6
    signal_p: float = 5.0
    signal_g: float = 3.0
    noise: float = 1.0
    signal_fraction: float = 0.2
    n_background: int = 4
    # fraction by which one class pair is merged in each modality
    overlap_p: float = 0.75
    overlap_g: float = 0.75
    censor_rate: float = 0.3
    base_hazard: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.signal_p < 0 or self.signal_g < 0 or self.noise < 0:
            raise ValueError("signal strengths and noise must be non-negative")
        if not 0.0 <= self.censor_rate <= 1.0:
            raise ValueError(f"censor_rate must lie in [0, 1], got {self.censor_rate}")
        if not 1 <= self.m_min <= self.m_max:
            raise ValueError(f"bad bag size range [{self.m_min}, {self.m_max}]")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.base_hazard is not None:
            self.base_hazard = tuple(float(h) for h in self.base_hazard)
            if len(self.base_hazard) != self.n_classes:
                raise ValueError("base_hazard needs one rate per class")

    def hazards(self) -> np.ndarray:
        if self.base_hazard is not None:
            return np.array(self.base_hazard)
        # class 0 is the most aggressive; rates shrink geometrically
        return 0.08 * (0.4 ** np.arange(self.n_classes))


@dataclass
class SampleRecord:
    id: str
    patch_features: np.ndarray
    gene_groups: np.ndarray
    grade: int
    subtype: int
    surv_time: float
    censor: int

    def survival_target(self, edges: np.ndarray) -> SurvivalTarget:
        return SurvivalTarget(self.surv_time, self.censor, discretize(self.surv_time, edges))

    def label(self, task: str) -> int:
        return self.grade if task == "grading" else self.subtype


@dataclass
class Dataset:
    samples: list[SampleRecord]
    n_classes: int
    root: Path | None = None
    by_id: dict[str, SampleRecord] = field(init=False, repr=False)

    def __post_init__(self):
        self.by_id = {s.id: s for s in self.samples}
        if len(self.by_id) != len(self.samples):
            raise ValueError("duplicate sample ids")

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def __len__(self) -> int:
        return len(self.samples)


def _orthonormal_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(dim, max(n, 1))))
    return q[:, :n].T


def _merge_pair(centers: np.ndarray, keep: int, pulled: int, overlap: float) -> None:
    centers[pulled] = (1.0 - overlap) * centers[pulled] + overlap * centers[keep]


def generate(config: GeneratorConfig, out_dir: str | Path) -> Dataset:
    """Write a synthetic cohort to ``out_dir`` and return it as loaded from disk.

    Each modality carries class signal but confuses one pair of classes
    (pathology the last two, genomics the first two), so only the fused view
    separates every class.
    """
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    c, d, d_g, n_groups = config.n_classes, config.d, config.d_g, config.n_groups

    background = rng.normal(size=(config.n_background, d))
    path_centers = config.signal_p * _orthonormal_rows(rng, c, d)
    _merge_pair(path_centers, c - 2, c - 1, config.overlap_p)
    gene_centers = np.stack(
        [config.signal_g * _orthonormal_rows(rng, c, d_g) for _ in range(n_groups)], axis=1
    )  # classes x groups x d_g
    _merge_pair(gene_centers, 0, 1, config.overlap_g)
    gene_base = rng.normal(size=(n_groups, d_g))

    subtype_map = rng.permutation(c)
    if np.all(subtype_map == np.arange(c)):
        subtype_map = np.roll(subtype_map, 1)
    rates = config.hazards()

    lines = []
    for i in range(config.n_samples):
        sid = f"s{i:04d}"
        k = int(rng.integers(c))
        m = int(rng.integers(config.m_min, config.m_max + 1))
        is_signal = rng.random(m) < config.signal_fraction
        which_bg = rng.integers(config.n_background, size=m)
        patches = np.where(is_signal[:, None], path_centers[k], background[which_bg])
        patches = patches + config.noise * rng.normal(size=(m, d))
        genes = gene_base + gene_centers[k] + config.noise * rng.normal(size=(n_groups, d_g))

        event_time = rng.exponential(1.0 / rates[k])
        censored = bool(rng.random() < config.censor_rate)
        obs_time = event_time * rng.uniform(0.05, 1.0) if censored else event_time

        path_rel = f"features/{sid}_path.umfb"
        gene_rel = f"features/{sid}_gene.umfb"
        write_feature_file(out / path_rel, patches)
        write_feature_file(out / gene_rel, genes)
        lines.append(
            json.dumps(
                {
                    "id": sid,
                    "grade": k,
                    "subtype": int(subtype_map[k]),
                    "surv_time": float(obs_time),
                    "censor": int(censored),
                    "path_file": path_rel,
                    "gene_file": gene_rel,
                }
            )
        )
    (out / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    (out / "generator.json").write_text(json.dumps(asdict(config), indent=2, sort_keys=True) + "\n")
    return load_dataset(out)


def read_manifest(root: str | Path) -> list[dict]:
    root = Path(root)
    entries = [json.loads(line) for line in (root / "manifest.jsonl").read_text().splitlines() if line.strip()]
    seen = set()
    for e in entries:
        if e["id"] in seen:
            raise ValueError(f"duplicate id {e['id']!r} in manifest")
        seen.add(e["id"])
        for key in ("path_file", "gene_file"):
            if not (root / e[key]).is_file():
                raise FileNotFoundError(f"{root / e[key]} referenced by {e['id']} is missing")
    return entries


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    if not (root / "manifest.jsonl").is_file():
        raise FileNotFoundError(f"{root} has no manifest.jsonl")
    samples = [
        SampleRecord(
            id=e["id"],
            patch_features=read_feature_file(root / e["path_file"]),
            gene_groups=read_feature_file(root / e["gene_file"]),
            grade=int(e["grade"]),
            subtype=int(e["subtype"]),
            surv_time=float(e["surv_time"]),
            censor=int(e["censor"]),
        )
        for e in read_manifest(root)
    ]
    n_classes = 1 + max(max(s.grade, s.subtype) for s in samples)
    gen = root / "generator.json"
    if gen.is_file():
        n_classes = max(n_classes, int(json.loads(gen.read_text()).get("n_classes", n_classes)))
    return Dataset(samples, n_classes, root)


def kfold_split(ids: Sequence[str], k: int = 5, fold: int = 0, split_seed: int = 0) -> tuple[list[str], list[str]]:
    """Deterministic fold ``fold`` of ``k``: shuffle the sorted ids, test = positions congruent to fold mod k."""
    n = len(ids)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n_samples, got k={k}, n={n}")
    if not 0 <= fold < k:
        raise ValueError(f"fold {fold} out of range for k={k}")
    ordered = sorted(ids)
    perm = np.random.default_rng(split_seed).permutation(n)
    shuffled = [ordered[i] for i in perm]
    test = [sid for i, sid in enumerate(shuffled) if i % k == fold]
    train = [sid for i, sid in enumerate(shuffled) if i % k != fold]
    return train, test
