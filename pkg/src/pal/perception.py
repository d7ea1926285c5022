"""One-shot person enrollment and recognition over embedding vectors, plus
the pluggable perception provider interface with per-call timeout budgets.

Real neural inference is out of scope; the deterministic stub provider
replays ground-truth annotations carried by trace image events, so a real
model can be attached later without engine changes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pal.errors import (
    DimensionMismatch,
    EmptyEnrollment,
    ProviderUnavailable,
    SchemaError,
)

# Default object vocabulary of the shipped stub (20 everyday classes).
DEFAULT_LABEL_SET = (
    "person", "bicycle", "car", "motorbike", "bus",
    "bottle", "cup", "chair", "sofa", "table",
    "plant", "laptop", "phone", "book", "keyboard",
    "monitor", "dog", "cat", "bird", "backpack",
)


@dataclass(frozen=True)
class PerceptionConfig:
    tau: float = 1.0
    embedding_dim: int = 128
    kmeans_seed: int = 1234
    kmeans_restarts: int = 8
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6
    object_timeout_ms: int = 5000
    face_timeout_ms: int = 10000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")
        if self.object_timeout_ms <= 0 or self.face_timeout_ms <= 0:
            raise ValueError("timeouts must be positive")

    def budget(self) -> "ProviderBudget":
        return ProviderBudget(self.object_timeout_ms, self.face_timeout_ms)

    @classmethod
    def from_dict(cls, data: dict, path: str = "perception") -> "PerceptionConfig":
        if not isinstance(data, dict):
            raise SchemaError(path, "expected an object")
        known = set(cls.__dataclass_fields__)
        for key in data:
            if key not in known:
                raise SchemaError(f"{path}.{key}", "unknown field")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise SchemaError(path, str(exc)) from exc

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class ProviderBudget:
    """Per-call answer deadlines; a late provider yields a timeout event."""

    object_timeout_ms: int = 5000
    face_timeout_ms: int = 10000

    def for_kind(self, kind: str) -> int:
        return self.face_timeout_ms if kind == "faces" else self.object_timeout_ms


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        norm = float(np.linalg.norm(self.values))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} is not 1")

    @staticmethod
    def normalized(values) -> "Embedding":
        arr = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValueError("zero vector cannot be normalized")
        return Embedding(arr / norm)

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class PersonRecord:
    person_id: str
    name: str
    centroids: tuple[Embedding, ...]
    enrolled_at_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "person_id": self.person_id,
            "name": self.name,
            "centroids": [c.values.tolist() for c in self.centroids],
            "enrolled_at_ms": self.enrolled_at_ms,
        }


@dataclass(frozen=True)
class MatchResult:
    """Match when a gallery centroid lies within tau of the query."""

    person_id: Optional[str]
    distance: float

    @property
    def matched(self) -> bool:
        return self.person_id is not None

    def to_payload(self) -> dict:
        if self.matched:
            return {"matched": True, "person_id": self.person_id, "distance": self.distance}
        return {"matched": False, "nearest_distance": self.distance}


@dataclass(frozen=True)
class Detection:
    label: str
    confidence: float
    box: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

    def to_dict(self) -> dict:
        return {"label": self.label, "confidence": self.confidence, "box": list(self.box)}


@dataclass(frozen=True)
class DetectionList:
    detections: tuple[Detection, ...] = ()

    def labels(self) -> list[str]:
        return [d.label for d in self.detections]

    def to_payload(self) -> dict:
        return {"detections": [d.to_dict() for d in self.detections]}


# ------------------------------------------------------------------ k-means

def _kmeans_pp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = float(d2.sum())
        if total == 0.0:
            centroids[i:] = points[first]
            return centroids
        probs = d2 / total
        choice = int(rng.choice(n, p=probs))
        centroids[i] = points[choice]
        d2 = np.minimum(d2, np.sum((points - centroids[i]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float):
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1)
        moved = 0.0
        new_centroids = centroids.copy()
        for j in range(len(centroids)):
            members = points[assign == j]
            if len(members) == 0:
                # reseed an empty cluster on the point farthest from its centroid
                worst = int(np.argmax(np.min(d2, axis=1)))
                new_centroids[j] = points[worst]
                moved = np.inf
                continue
            candidate = members.mean(axis=0)
            moved = max(moved, float(np.linalg.norm(candidate - new_centroids[j])))
            new_centroids[j] = candidate
        centroids = new_centroids
        if moved < tol:
            break
    d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    objective = float(np.min(d2, axis=1).sum())
    return centroids, objective


def kmeans(points: np.ndarray, k: int, seed: int, restarts: int = 8,
           max_iter: int = 100, tol: float = 1e-6) -> tuple[np.ndarray, float]:
    """Lloyd's k-means with k-means++ seeding, best of `restarts` seeded runs."""
    best: tuple[np.ndarray, float] | None = None
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        centroids = _kmeans_pp_seed(points, k, rng)
        centroids, objective = _lloyd(points, centroids, max_iter, tol)
        if best is None or objective < best[1] - 1e-15:
            best = (centroids, objective)
    assert best is not None
    return best


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "person"


def enroll(
    name: str,
    embeddings: list[Embedding],
    k_max: int = 3,
    cfg: PerceptionConfig = PerceptionConfig(),
    person_id: Optional[str] = None,
    enrolled_at_ms: int = 0,
) -> PersonRecord:
    """Compress a person's embeddings into at most `k_max` unit-norm centroids.

    One embedding is the one-shot case: the centroid is the embedding
    itself. Larger enrollments run seeded k-means and re-normalize the
    resulting centroids.
    """
    if not embeddings:
        raise EmptyEnrollment("no embeddings supplied")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    dim = embeddings[0].dim
    for e in embeddings:
        if e.dim != dim:
            raise DimensionMismatch(f"embedding dims differ: {e.dim} vs {dim}")
    points = np.stack([e.values for e in embeddings])
    k = min(k_max, len(embeddings))
    if k == len(embeddings):
        centroids = points.copy()
    else:
        centroids, _ = kmeans(
            points, k, cfg.kmeans_seed, cfg.kmeans_restarts, cfg.kmeans_max_iter, cfg.kmeans_tol
        )
    normalized = []
    for c in centroids:
        norm = float(np.linalg.norm(c))
        normalized.append(Embedding(c / norm) if norm > 0 else Embedding.normalized(points[0]))
    return PersonRecord(
        person_id=person_id if person_id is not None else _slug(name),
        name=name,
        centroids=tuple(normalized),
        enrolled_at_ms=enrolled_at_ms,
    )


def recognize(query: Embedding, gallery: list[PersonRecord], tau: float) -> MatchResult:
    """Nearest centroid across the whole gallery by Euclidean distance.

    Ties resolve to the earliest enrolled record, then lexicographic
    person id. An empty gallery is Unknown at infinite distance.
    """
    best: tuple[float, int, str, PersonRecord] | None = None
    for record in gallery:
        if record.centroids[0].dim != query.dim:
            raise DimensionMismatch(
                f"gallery dim {record.centroids[0].dim} != query dim {query.dim}"
            )
        stack = np.stack([c.values for c in record.centroids])
        distance = float(np.min(np.linalg.norm(stack - query.values, axis=1)))
        key = (distance, record.enrolled_at_ms, record.person_id)
        if best is None or key < (best[0], best[1], best[2]):
            best = (distance, record.enrolled_at_ms, record.person_id, record)
    if best is None:
        return MatchResult(person_id=None, distance=float("inf"))
    distance, _, _, record = best
    if distance <= tau:
        return MatchResult(person_id=record.person_id, distance=distance)
    return MatchResult(person_id=None, distance=distance)


def parse_gallery(data, path: str = "gallery") -> list[PersonRecord]:
    """Validate and load a gallery document (list of person records)."""
    if not isinstance(data, list):
        raise SchemaError(path, "expected a list of person records")
    records: list[PersonRecord] = []
    seen: set[str] = set()
    dim: Optional[int] = None
    for i, item in enumerate(data):
        at = f"{path}[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(at, "expected an object")
        for key in item:
            if key not in ("person_id", "name", "centroids", "enrolled_at_ms"):
                raise SchemaError(f"{at}.{key}", "unknown field")
        try:
            person_id = item["person_id"]
            name = item.get("name", person_id)
            centroid_rows = item["centroids"]
        except KeyError as exc:
            raise SchemaError(at, f"missing field {exc.args[0]}") from exc
        if not isinstance(person_id, str) or not person_id:
            raise SchemaError(f"{at}.person_id", "must be a non-empty string")
        if person_id in seen:
            raise SchemaError(f"{at}.person_id", f"duplicate person_id {person_id!r}")
        seen.add(person_id)
        if not isinstance(centroid_rows, list) or not centroid_rows:
            raise SchemaError(f"{at}.centroids", "must be a non-empty list")
        centroids = []
        for j, row in enumerate(centroid_rows):
            try:
                emb = Embedding.normalized(row)
            except (ValueError, TypeError) as exc:
                raise SchemaError(f"{at}.centroids[{j}]", str(exc)) from exc
            if dim is None:
                dim = emb.dim
            elif emb.dim != dim:
                raise SchemaError(f"{at}.centroids[{j}]", f"dim {emb.dim} != gallery dim {dim}")
            centroids.append(emb)
        records.append(
            PersonRecord(
                person_id=person_id,
                name=name,
                centroids=tuple(centroids),
                enrolled_at_ms=int(item.get("enrolled_at_ms", 0)),
            )
        )
    return records


# ------------------------------------------------------------------ provider

@dataclass(frozen=True)
class ProviderReply:
    """What a provider would answer and how long it would take."""

    kind: str  # "objects" | "faces"
    delay_ms: int
    detections: Optional[DetectionList] = None
    embedding: Optional[Embedding] = None


@dataclass(frozen=True)
class ProviderOutcome:
    """Budget-resolved result: either the reply or a timeout marker."""

    kind: str
    image_ref: str
    latency_ms: int
    timed_out: bool
    detections: Optional[DetectionList] = None
    embedding: Optional[Embedding] = None


def request_detection(
    image_ref: str, kind: str, provider, budget: ProviderBudget
) -> ProviderOutcome:
    """Resolve one provider call against its budget.

    The reply is delivered at its latency when within budget; otherwise the
    outcome is a timeout at exactly the budget deadline, and the engine
    moves on.
    """
    if provider is None:
        raise ProviderUnavailable("no perception provider registered")
    reply = provider.request(image_ref, kind)
    limit = budget.for_kind(kind)
    if reply.delay_ms > limit:
        return ProviderOutcome(kind=kind, image_ref=image_ref, latency_ms=limit, timed_out=True)
    return ProviderOutcome(
        kind=kind,
        image_ref=image_ref,
        latency_ms=reply.delay_ms,
        timed_out=False,
        detections=reply.detections,
        embedding=reply.embedding,
    )


class StubProvider:
    """Deterministic provider that replays trace annotations.

    `annotations` maps image_ref to the ground-truth dict carried by the
    trace image event: optional `labels`, `embedding`, `caption`,
    `delay_ms`, `object_delay_ms`, `face_delay_ms`.
    """

    def __init__(self, annotations: dict[str, dict] | None = None,
                 object_delay_ms: int = 0, face_delay_ms: int = 0):
        self.annotations = dict(annotations or {})
        self.object_delay_ms = object_delay_ms
        self.face_delay_ms = face_delay_ms
        labels = set(DEFAULT_LABEL_SET)
        for ann in self.annotations.values():
            labels.update(ann.get("labels", []))
        self.label_set = tuple(sorted(labels))

    def has_face(self, image_ref: str) -> bool:
        return "embedding" in self.annotations.get(image_ref, {})

    def _delay(self, ann: dict, kind: str) -> int:
        specific = "object_delay_ms" if kind == "objects" else "face_delay_ms"
        if specific in ann:
            return int(ann[specific])
        if "delay_ms" in ann:
            return int(ann["delay_ms"])
        return self.object_delay_ms if kind == "objects" else self.face_delay_ms

    def request(self, image_ref: str, kind: str) -> ProviderReply:
        ann = self.annotations.get(image_ref, {})
        delay = self._delay(ann, kind)
        if kind == "objects":
            detections = DetectionList(
                tuple(Detection(label=lab, confidence=1.0) for lab in ann.get("labels", []))
            )
            return ProviderReply(kind=kind, delay_ms=delay, detections=detections)
        if kind == "faces":
            embedding = None
            if "embedding" in ann:
                embedding = Embedding.normalized(ann["embedding"])
            return ProviderReply(kind=kind, delay_ms=delay, embedding=embedding)
        raise ValueError(f"unknown request kind {kind!r}")
