"""Model-representation dump files: a JSON manifest plus a raw float32 payload.

A dump named `base` is the pair `base.manifest.json` / `base.f32`. The
payload is little-endian float32, row-major, with shape given by the
manifest's `dims`. The manifest records the producing model, the role of
the rows, per-row labels, and a sha256 digest of the payload bytes, so any
consumer can verify integrity before analysis.

Roles:
  static                one row per concept (input-embedding average)
  layerwise_contextual  one row per tracked mention at a single layer
  question_final        one row per question, last position's hidden state
  vision_patch          one row per image, mean-pooled patch features
  unembedding           one row per concept from the output-projection table
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ROLES = (
    "static",
    "layerwise_contextual",
    "question_final",
    "vision_patch",
    "unembedding",
)

DTYPE_TAG = "float32-le"

# Per-row span metadata required by each role; rows of other roles may omit
# spans entirely.
REQUIRED_SPAN_KEYS: dict[str, tuple[str, ...]] = {
    "layerwise_contextual": ("instance_id", "concept", "mention_index", "slot"),
    "question_final": ("instance_id", "group"),
    "vision_patch": ("concept", "image_id"),
}

QUESTION_FINAL_GROUPS = ("hypernym", "negative")


class DumpError(Exception):
    pass


class DumpValidationError(DumpError):
    def __init__(self, path: str | Path, problems: Sequence[str]):
        self.problems = list(problems)
        listing = "; ".join(self.problems)
        super().__init__(f"{path}: {listing}")


@dataclass
class DumpManifest:
    model_id: str
    role: str
    dims: tuple[int, int]
    labels: list[str]
    payload_digest: str = ""
    dtype: str = DTYPE_TAG
    layer: int | None = None
    n_layers: int | None = None
    spans: list[dict] | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc: dict = {
            "model_id": self.model_id,
            "role": self.role,
            "dims": list(self.dims),
            "dtype": self.dtype,
            "payload_digest": self.payload_digest,
            "labels": self.labels,
        }
        if self.layer is not None:
            doc["layer"] = self.layer
        if self.n_layers is not None:
            doc["n_layers"] = self.n_layers
        if self.spans is not None:
            doc["spans"] = self.spans
        if self.extra:
            doc["extra"] = self.extra
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DumpManifest":
        return cls(
            model_id=doc["model_id"],
            role=doc["role"],
            dims=tuple(doc["dims"]),
            labels=list(doc["labels"]),
            payload_digest=doc.get("payload_digest", ""),
            dtype=doc.get("dtype", DTYPE_TAG),
            layer=doc.get("layer"),
            n_layers=doc.get("n_layers"),
            spans=doc.get("spans"),
            extra=dict(doc.get("extra", {})),
        )


@dataclass
class EmbeddingDump:
    manifest: DumpManifest
    matrix: np.ndarray

    def rows_for_label(self, label: str) -> np.ndarray:
        idx = [i for i, lab in enumerate(self.manifest.labels) if lab == label]
        if not idx:
            raise DumpError(f"no rows labeled {label!r}")
        return self.matrix[idx]

    def row_for_label(self, label: str) -> np.ndarray:
        rows = self.rows_for_label(label)
        if len(rows) != 1:
            raise DumpError(f"label {label!r} is not unique ({len(rows)} rows)")
        return rows[0]


def _paths(base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    name = base.name
    for suffix in (".manifest.json", ".f32"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    base = base.with_name(name)
    return base.with_name(base.name + ".manifest.json"), base.with_name(base.name + ".f32")


def payload_digest(matrix: np.ndarray) -> str:
    data = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_dump(base: str | Path, dump: EmbeddingDump) -> tuple[Path, Path]:
    """Write `base.manifest.json` and `base.f32`; fills dims and digest."""
    matrix = np.ascontiguousarray(dump.matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise DumpError("matrix must be 2-d")
    dump.manifest.dims = (int(matrix.shape[0]), int(matrix.shape[1]))
    dump.manifest.dtype = DTYPE_TAG
    dump.manifest.payload_digest = payload_digest(matrix)
    problems = _manifest_problems(dump.manifest)
    if problems:
        raise DumpValidationError(base, problems)
    manifest_path, payload_path = _paths(base)
    _atomic_write(payload_path, matrix.tobytes())
    _atomic_write(
        manifest_path,
        (json.dumps(dump.manifest.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8"),
    )
    return manifest_path, payload_path


def _manifest_problems(manifest: DumpManifest) -> list[str]:
    problems: list[str] = []
    if manifest.role not in ROLES:
        problems.append(f"unknown role {manifest.role!r}")
    if not manifest.model_id:
        problems.append("empty model_id")
    if manifest.dtype != DTYPE_TAG:
        problems.append(f"unsupported dtype {manifest.dtype!r}")
    rows, cols = manifest.dims
    if rows <= 0 or cols <= 0:
        problems.append(f"non-positive dims {manifest.dims}")
    if len(manifest.labels) != rows:
        problems.append(f"{len(manifest.labels)} labels for {rows} rows")
    required = REQUIRED_SPAN_KEYS.get(manifest.role)
    if required:
        if manifest.spans is None:
            problems.append(f"role {manifest.role!r} requires spans")
        elif len(manifest.spans) != rows:
            problems.append(f"{len(manifest.spans)} spans for {rows} rows")
        else:
            for i, span in enumerate(manifest.spans):
                missing = [k for k in required if k not in span]
                if missing:
                    problems.append(f"span {i} missing keys {missing}")
                    break
    if manifest.role == "layerwise_contextual" and manifest.layer is None:
        problems.append("layerwise_contextual requires a layer index")
    if manifest.role == "question_final" and manifest.spans:
        bad = {
            s.get("group")
            for s in manifest.spans
            if s.get("group") not in QUESTION_FINAL_GROUPS
        }
        if bad:
            problems.append(f"unknown question_final groups {sorted(map(str, bad))}")
    return problems


def validate_dump(base: str | Path) -> DumpManifest:
    """Check manifest schema, payload size, and digest; raise on any problem."""
    manifest_path, payload_path = _paths(base)
    problems: list[str] = []
    if not manifest_path.exists():
        raise DumpValidationError(base, [f"missing {manifest_path.name}"])
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest = DumpManifest.from_dict(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DumpValidationError(base, [f"unreadable manifest: {exc}"]) from exc
    problems.extend(_manifest_problems(manifest))
    if not payload_path.exists():
        problems.append(f"missing {payload_path.name}")
        raise DumpValidationError(base, problems)
    data = payload_path.read_bytes()
    rows, cols = manifest.dims
    expected = rows * cols * 4
    if len(data) != expected:
        problems.append(f"payload is {len(data)} bytes, dims imply {expected}")
    else:
        digest = hashlib.sha256(data).hexdigest()
        if digest != manifest.payload_digest:
            problems.append("payload digest mismatch")
        values = np.frombuffer(data, dtype="<f4")
        if not np.all(np.isfinite(values)):
            problems.append("payload contains non-finite values")
    if problems:
        raise DumpValidationError(base, problems)
    return manifest


def load_dump(base: str | Path) -> EmbeddingDump:
    """Validate and load a dump; the matrix comes back as float32."""
    manifest = validate_dump(base)
    _, payload_path = _paths(base)
    rows, cols = manifest.dims
    matrix = np.frombuffer(payload_path.read_bytes(), dtype="<f4").reshape(rows, cols)
    return EmbeddingDump(manifest, matrix.copy())


def discover_dumps(directory: str | Path) -> list[Path]:
    """Dump base paths under a directory, sorted for determinism."""
    directory = Path(directory)
    bases = []
    for manifest_path in sorted(directory.glob("*.manifest.json")):
        bases.append(manifest_path.with_name(manifest_path.name[: -len(".manifest.json")]))
    return bases


def load_dumps_by_role(directory: str | Path) -> dict[str, list[EmbeddingDump]]:
    """Load every dump in a directory, grouped by role, sorted by model then base."""
    grouped: dict[str, list[EmbeddingDump]] = {role: [] for role in ROLES}
    for base in discover_dumps(directory):
        dump = load_dump(base)
        grouped[dump.manifest.role].append(dump)
    for role in grouped:
        grouped[role].sort(
            key=lambda d: (d.manifest.model_id, d.manifest.layer or 0, d.manifest.dims)
        )
    return grouped
