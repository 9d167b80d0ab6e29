"""Knowledge base on disk plus the counting filter used for route sharing.

Layout under the KB root::

    kb.json                  manifest: datasets, models, policies, feedback path
    datasets/<id>/table.csv  one directory per dataset
    models/<id>.json         serialized model artifacts
    feedback.jsonl           append-only runtime feedback
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import MonitoringRecord
from .table import DataTable

MANIFEST = "kb.json"
FEEDBACK = "feedback.jsonl"
DATASET_KINDS = ("raw", "processed", "feature_matrix")
MODEL_KINDS = ("lasso", "elasticnet", "forest", "gbt", "combined")


class KBError(Exception):
    pass


class ConflictError(KBError):
    pass


class IntegrityError(KBError):
    pass


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class DatasetMeta:
    id: str
    kind: str = "raw"
    scenario: str = ""
    row_count: int = 0
    created_at: str = ""
    checksum: str = ""
    parent: str | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass
class PolicySet:
    sharing_filters: dict[str, str] = field(default_factory=dict)
    slice_priorities: list[str] = field(default_factory=list)
    handover_restrictions: list[tuple[str, str]] = field(default_factory=list)
    gnb_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.handover_restrictions = [tuple(p) for p in self.handover_restrictions]
        self.validate()

    def validate(self) -> None:
        for name, mode in self.sharing_filters.items():
            if mode not in ("share", "redact"):
                raise ValueError(f"sharing filter for {name!r} must be share|redact, got {mode!r}")
        if len(set(self.slice_priorities)) != len(self.slice_priorities):
            raise ValueError("slice priorities list a slice more than once")
        known = set(self.gnb_ids)
        for a, b in self.handover_restrictions:
            if a not in known or b not in known:
                raise ValueError(f"handover restriction ({a}, {b}) names an unknown gNB")

    def redacted(self) -> set[str]:
        return {n for n, mode in self.sharing_filters.items() if mode == "redact"}

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["handover_restrictions"] = [list(p) for p in self.handover_restrictions]
        return d


@dataclass
class ModelRecord:
    id: str
    model_kind: str
    feature_set_id: str
    artifact_path: str
    metrics: dict | None = None

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")

    @property
    def validated(self) -> bool:
        return self.metrics is not None


@dataclass(frozen=True)
class FeedbackEntry:
    tick: int
    predicted: float
    observed: float
    action_taken: str | None = None
    ue_id: str | None = None


class KnowledgeBase:
    """Single-writer store; callers serialize writes."""

    def __init__(self, root: Path, datasets, models, policies: PolicySet, feedback_path: str):
        self.root = Path(root)
        self.datasets: list[DatasetMeta] = datasets
        self.models: list[ModelRecord] = models
        self.policies = policies
        self.feedback_path = feedback_path
        self._last_tick: int | None = None

    # -- manifest ------------------------------------------------------

    @property
    def manifest(self) -> list[DatasetMeta]:
        return self.datasets

    def _manifest_dict(self) -> dict:
        return {
            "datasets": [dataclasses.asdict(m) for m in self.datasets],
            "models": [dataclasses.asdict(m) for m in self.models],
            "policies": self.policies.to_dict(),
            "feedback_path": self.feedback_path,
        }

    def save(self) -> None:
        path = self.root / MANIFEST
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self._manifest_dict(), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    # -- datasets ------------------------------------------------------

    def dataset_meta(self, dataset_id: str) -> DatasetMeta:
        for m in self.datasets:
            if m.id == dataset_id:
                return m
        raise KeyError(f"no dataset {dataset_id!r}")

    def dataset_path(self, dataset_id: str) -> Path:
        return self.root / "datasets" / dataset_id / "table.csv"

    def put_dataset(self, table: DataTable, meta: DatasetMeta) -> str:
        if any(m.id == meta.id for m in self.datasets):
            raise ConflictError(f"dataset id {meta.id!r} already exists")
        if meta.kind != "raw":
            if meta.parent is None or not any(m.id == meta.parent for m in self.datasets):
                raise IntegrityError(f"{meta.kind} dataset {meta.id!r} needs an existing parent")
        data = table.to_csv().encode()
        path = self.dataset_path(meta.id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        meta = dataclasses.replace(
            meta,
            row_count=table.row_count,
            checksum=sha256_hex(data),
            created_at=meta.created_at or _dt.datetime.now(_dt.timezone.utc).isoformat(),
        )
        self.datasets.append(meta)
        self.save()
        return meta.id

    def get_dataset_bytes(self, dataset_id: str) -> bytes:
        meta = self.dataset_meta(dataset_id)
        data = self.dataset_path(dataset_id).read_bytes()
        if sha256_hex(data) != meta.checksum:
            raise IntegrityError(f"checksum mismatch for dataset {dataset_id!r}")
        return data

    def get_dataset(self, dataset_id: str) -> DataTable:
        return DataTable.from_csv(self.get_dataset_bytes(dataset_id).decode())

    # -- models --------------------------------------------------------

    def model_record(self, model_id: str) -> ModelRecord:
        for r in self.models:
            if r.id == model_id:
                return r
        raise KeyError(f"no model {model_id!r}")

    def has_model(self, model_id: str) -> bool:
        return any(r.id == model_id for r in self.models)

    def register_model(self, record: ModelRecord, artifact: dict, *, replace: bool = False) -> ModelRecord:
        if self.has_model(record.id):
            if not replace:
                raise ConflictError(f"model id {record.id!r} already exists")
            self.models = [r for r in self.models if r.id != record.id]
        rel = f"models/{record.id}.json"
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(artifact, sort_keys=True) + "\n")
        record = dataclasses.replace(record, artifact_path=rel)
        self.models.append(record)
        self.save()
        return record

    def load_model_artifact(self, model_id: str) -> dict:
        return json.loads((self.root / self.model_record(model_id).artifact_path).read_text())

    def set_model_metrics(self, model_id: str, metrics: dict) -> None:
        self.models = [dataclasses.replace(r, metrics=metrics) if r.id == model_id else r for r in self.models]
        self.save()

    # -- policies ------------------------------------------------------

    def set_policies(self, policies: PolicySet) -> None:
        policies.validate()
        self.policies = policies
        self.save()

    # -- feedback ------------------------------------------------------

    def _feedback_file(self) -> Path:
        return self.root / self.feedback_path

    def read_feedback(self) -> list[FeedbackEntry]:
        path = self._feedback_file()
        if not path.exists():
            return []
        out = []
        with path.open() as fh:
            for line in fh:
                if line.strip():
                    out.append(FeedbackEntry(**json.loads(line)))
        return out

    def append_feedback(self, entries: list[FeedbackEntry]) -> None:
        if not entries:
            return
        if self._last_tick is None:
            existing = self.read_feedback()
            self._last_tick = existing[-1].tick if existing else None
        last = self._last_tick
        for e in entries:
            if last is not None and e.tick < last:
                raise KBError(f"feedback tick {e.tick} precedes logged tick {last}")
            last = e.tick
        with self._feedback_file().open("a") as fh:
            for e in entries:
                fh.write(json.dumps(dataclasses.asdict(e), sort_keys=True) + "\n")
        self._last_tick = last


def kb_init(root: str | os.PathLike) -> KnowledgeBase:
    """Create a KB at ``root``, or load it unchanged if one already exists."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create knowledge base at {root}: {exc}") from exc
    if not os.access(root, os.W_OK):
        raise PermissionError(f"knowledge base root {root} is not writable")
    manifest = root / MANIFEST
    if manifest.exists():
        d = json.loads(manifest.read_text())
        return KnowledgeBase(
            root,
            [DatasetMeta(**m) for m in d["datasets"]],
            [ModelRecord(**m) for m in d["models"]],
            PolicySet(**d["policies"]),
            d["feedback_path"],
        )
    kb = KnowledgeBase(root, [], [], PolicySet(), FEEDBACK)
    (root / FEEDBACK).touch()
    kb.save()
    return kb


def apply_sharing_filter(policy: PolicySet, record: MonitoringRecord) -> MonitoringRecord:
    """Drop every field the policy marks ``redact``; the timestamp always survives."""
    hidden = policy.redacted()
    if not hidden:
        return record
    return MonitoringRecord(
        timestamp_ms=record.timestamp_ms,
        ue_id=None if "ue_id" in hidden else record.ue_id,
        gnb_id=None if "gnb_id" in hidden else record.gnb_id,
        metrics={k: v for k, v in record.metrics.items() if k not in hidden},
    )


# -- counting filter ---------------------------------------------------

COUNTER_MAX = np.iinfo(np.uint32).max


class IncompatibleFilterError(ValueError):
    pass


class SaturationError(OverflowError):
    pass


@dataclass
class CountingFilter:
    counters: np.ndarray
    hash_count: int = 3
    seed: int = 0

    def __post_init__(self):
        self.counters = np.asarray(self.counters, dtype=np.uint32)
        if self.hash_count < 1:
            raise ValueError("hash_count must be >= 1")

    @classmethod
    def empty(cls, m: int = 4096, k: int = 3, seed: int = 0) -> CountingFilter:
        if m < 1:
            raise ValueError("filter size must be >= 1")
        return cls(np.zeros(m, dtype=np.uint32), k, seed)

    @property
    def size(self) -> int:
        return len(self.counters)

    def positions(self, item: bytes) -> list[int]:
        m = self.size
        out = []
        for i in range(self.hash_count):
            key = struct.pack("<qI", self.seed, i)
            h = hashlib.blake2b(item, digest_size=8, key=key).digest()
            out.append(int.from_bytes(h, "little") % m)
        return out

    def query(self, item: bytes) -> int:
        return int(min(self.counters[p] for p in self.positions(item)))

    def compatible(self, other: CountingFilter) -> bool:
        return (self.size, self.hash_count, self.seed) == (other.size, other.hash_count, other.seed)


def cf_insert(cf: CountingFilter, item: bytes) -> CountingFilter:
    counters = cf.counters.copy()
    # duplicate positions from colliding hashes increment twice, like k separate inserts
    for p in cf.positions(item):
        if counters[p] == COUNTER_MAX:
            raise SaturationError(f"counter {p} is saturated")
        counters[p] += 1
    return CountingFilter(counters, cf.hash_count, cf.seed)


def cf_query(cf: CountingFilter, item: bytes) -> int:
    return cf.query(item)


def cf_merge(a: CountingFilter, b: CountingFilter) -> CountingFilter:
    if not a.compatible(b):
        raise IncompatibleFilterError(
            f"cannot merge filters (m={a.size}, k={a.hash_count}, seed={a.seed}) and "
            f"(m={b.size}, k={b.hash_count}, seed={b.seed})"
        )
    total = a.counters.astype(np.uint64) + b.counters.astype(np.uint64)
    if total.max(initial=0) > COUNTER_MAX:
        raise SaturationError("merged counters exceed the counter range")
    return CountingFilter(total.astype(np.uint32), a.hash_count, a.seed)
