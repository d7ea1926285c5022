import numpy as np
import pytest

from pal.errors import DimensionMismatch, EmptyEnrollment, ProviderUnavailable, SchemaError
from pal.perception import (
    Embedding,
    PerceptionConfig,
    PersonRecord,
    ProviderBudget,
    StubProvider,
    enroll,
    kmeans,
    parse_gallery,
    recognize,
    request_detection,
)

CFG = PerceptionConfig()


def unit(values):
    return Embedding.normalized(np.asarray(values, dtype=float))


def random_unit(rng, dim=16):
    return unit(rng.normal(size=dim))


# ---------------------------------------------------------------- embedding

def test_embedding_requires_unit_norm():
    with pytest.raises(ValueError):
        Embedding(np.ones(4))
    e = Embedding.normalized(np.ones(4))
    assert np.isclose(np.linalg.norm(e.values), 1.0)


# ---------------------------------------------------------------- enroll

def test_enroll_one_shot_keeps_embedding():
    e = random_unit(np.random.default_rng(0))
    rec = enroll("Alice", [e], k_max=3, cfg=CFG)
    assert len(rec.centroids) == 1
    assert np.allclose(rec.centroids[0].values, e.values)
    assert rec.person_id == "alice"


def test_enroll_identical_embeddings_single_effective_centroid():
    e = random_unit(np.random.default_rng(1))
    rec = enroll("Bob", [e] * 7, k_max=3, cfg=CFG)
    for c in rec.centroids:
        assert np.allclose(c.values, e.values, atol=1e-12)


def test_enroll_two_bundles_matches_reference_objective():
    # oracle: scikit-learn's multi-restart k-means on the same points
    sklearn_cluster = pytest.importorskip("sklearn.cluster")
    rng = np.random.default_rng(2)
    a = rng.normal(size=(10, 8)) * 0.02 + np.array([1.0] + [0.0] * 7)
    b = rng.normal(size=(10, 8)) * 0.02 + np.array([0.0] * 7 + [1.0])
    points = np.vstack([a, b])
    points /= np.linalg.norm(points, axis=1, keepdims=True)

    centroids, objective = kmeans(points, 2, seed=CFG.kmeans_seed)
    ref = sklearn_cluster.KMeans(n_clusters=2, n_init=20, random_state=0).fit(points)
    assert objective == pytest.approx(ref.inertia_, abs=1e-6)


def test_enroll_errors():
    with pytest.raises(EmptyEnrollment):
        enroll("X", [], cfg=CFG)
    e1 = random_unit(np.random.default_rng(3), dim=8)
    e2 = random_unit(np.random.default_rng(4), dim=16)
    with pytest.raises(DimensionMismatch):
        enroll("X", [e1, e2], cfg=CFG)


def test_kmeans_objective_not_worse_than_seeding():
    from pal.perception import _kmeans_pp_seed

    rng = np.random.default_rng(5)
    points = rng.normal(size=(30, 4))
    centroids, objective = kmeans(points, 3, seed=7)
    d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    assert objective == pytest.approx(float(np.min(d2, axis=1).sum()), rel=1e-12)
    # Lloyd iterations never worsen the k-means++ seeding objective
    for restart in range(8):
        seeds = _kmeans_pp_seed(points, 3, np.random.default_rng(7 + restart))
        d2_seed = np.sum((points[:, None, :] - seeds[None, :, :]) ** 2, axis=2)
        assert objective <= float(np.min(d2_seed, axis=1).sum()) + 1e-9


# ---------------------------------------------------------------- recognize

def brute_force_recognize(query, gallery, tau):
    best = None
    for rec in gallery:
        for c in rec.centroids:
            d = float(np.sqrt(np.sum((np.asarray(c.values) - query.values) ** 2)))
            key = (d, rec.enrolled_at_ms, rec.person_id)
            if best is None or key < best:
                best = key
    if best is None:
        return (None, float("inf"))
    d, _, pid = best
    return (pid if d <= tau else None, d)


def test_recognize_exact_match():
    e = random_unit(np.random.default_rng(6))
    rec = enroll("Alice", [e], cfg=CFG)
    result = recognize(e, [rec], tau=1.0)
    assert result.matched and result.person_id == "alice"
    assert result.distance == pytest.approx(0.0)


def test_recognize_empty_gallery():
    e = random_unit(np.random.default_rng(7))
    result = recognize(e, [], tau=1.0)
    assert not result.matched
    assert result.distance == float("inf")


def test_recognize_monotone_in_tau():
    rng = np.random.default_rng(8)
    e = random_unit(rng)
    q = unit(e.values + rng.normal(size=e.dim) * 0.1)
    rec = enroll("P", [e], cfg=CFG)
    small = recognize(q, [rec], tau=0.05)
    big = recognize(q, [rec], tau=2.0)
    if small.matched:
        assert big.matched


def test_recognize_adding_farther_record_never_changes_outcome():
    rng = np.random.default_rng(9)
    e = random_unit(rng)
    q = unit(e.values + rng.normal(size=e.dim) * 0.05)
    near = enroll("Near", [e], cfg=CFG)
    base = recognize(q, [near], tau=1.0)
    far_vec = unit(-e.values)
    far = enroll("Far", [far_vec], cfg=CFG, enrolled_at_ms=999)
    both = recognize(q, [near, far], tau=1.0)
    assert base == both


def test_recognize_matches_brute_force_scan():
    # acceptance-grade oracle: exhaustive linear scan over random galleries
    rng = np.random.default_rng(10)
    gallery = []
    for i in range(200):
        embeddings = [random_unit(rng) for _ in range(int(rng.integers(1, 4)))]
        gallery.append(
            enroll(f"p{i:03d}", embeddings, k_max=2, cfg=CFG, enrolled_at_ms=int(rng.integers(0, 50)))
        )
    for _ in range(1000):
        q = random_unit(rng)
        tau = float(rng.uniform(0.3, 1.5))
        mine = recognize(q, gallery, tau)
        pid, dist = brute_force_recognize(q, gallery, tau)
        assert mine.person_id == pid
        assert mine.distance == pytest.approx(dist, abs=1e-9)


def test_recognize_dimension_mismatch():
    rec = enroll("A", [random_unit(np.random.default_rng(1), dim=8)], cfg=CFG)
    with pytest.raises(DimensionMismatch):
        recognize(random_unit(np.random.default_rng(2), dim=16), [rec], tau=1.0)


# ---------------------------------------------------------------- provider

def test_stub_provider_returns_annotations_verbatim():
    stub = StubProvider({"img1": {"labels": ["cup", "laptop"], "delay_ms": 10}})
    out = request_detection("img1", "objects", stub, ProviderBudget())
    assert not out.timed_out
    assert out.latency_ms == 10
    assert out.detections.labels() == ["cup", "laptop"]
    assert all(d.confidence == 1.0 for d in out.detections.detections)


def test_stub_provider_no_annotation_empty_list():
    stub = StubProvider({})
    out = request_detection("missing", "objects", stub, ProviderBudget())
    assert out.detections.labels() == []


def test_object_stall_times_out_at_budget():
    stub = StubProvider({"img": {"labels": ["cup"], "object_delay_ms": 6000}})
    out = request_detection("img", "objects", stub, ProviderBudget())
    assert out.timed_out
    assert out.latency_ms == 5000
    assert out.detections is None


def test_face_stall_within_budget_delivers():
    rng = np.random.default_rng(11)
    emb = random_unit(rng).values.tolist()
    stub = StubProvider({"img": {"embedding": emb, "face_delay_ms": 9000}})
    out = request_detection("img", "faces", stub, ProviderBudget())
    assert not out.timed_out
    assert out.latency_ms == 9000
    assert out.embedding is not None


def test_provider_unavailable():
    with pytest.raises(ProviderUnavailable):
        request_detection("img", "objects", None, ProviderBudget())


# ---------------------------------------------------------------- gallery doc

def test_parse_gallery_roundtrip():
    rng = np.random.default_rng(12)
    rec = enroll("Alice Smith", [random_unit(rng)], cfg=CFG, enrolled_at_ms=42)
    parsed = parse_gallery([rec.to_dict()])
    assert parsed[0].person_id == "alice-smith"
    assert parsed[0].enrolled_at_ms == 42
    assert np.allclose(parsed[0].centroids[0].values, rec.centroids[0].values)


def test_parse_gallery_rejects_duplicates_and_unknown_fields():
    rng = np.random.default_rng(13)
    rec = enroll("A", [random_unit(rng)], cfg=CFG).to_dict()
    with pytest.raises(SchemaError):
        parse_gallery([rec, rec])
    bad = dict(rec)
    bad["surprise"] = 1
    with pytest.raises(SchemaError):
        parse_gallery([bad])
