import json

import numpy as np
import pytest

import bridge_to_answer as bta


def test_visual_edge_weights_rows_sum_to_one():
    x = np.random.default_rng(0).normal(size=(6, 4))
    w = bta.visual_edge_weights(x, 10.0)
    assert w.shape == (6, 6)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(bta.visual_edge_weights(np.ones((8, 3)), 10.0), 0.125)


def test_question_weights_match_numpy():
    rng = np.random.default_rng(1)
    u = rng.normal(size=(5, 3))
    a = bta.adjacency([(0, 1, "nsubj"), (1, 2, "dobj"), (1, 3, "prep"), (3, 4, "pobj")], 5)
    assert (a == a.T).all() and (np.diag(a) == 1).all()

    logits = 10.0 * u @ u.T
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    e /= e.sum(axis=1, keepdims=True)
    masked = e * a
    expected = masked / np.linalg.norm(masked, axis=1, keepdims=True)
    np.testing.assert_allclose(bta.question_graph_weights(u, a, 10.0), expected, atol=1e-12)
    np.testing.assert_allclose(bta.question_affinity(u, 10.0), e, atol=1e-12)


def test_bad_edge_is_rejected():
    with pytest.raises(bta.IngestionError, match="token 7"):
        bta.adjacency([(7, 1, "dep")], 5)


def test_gcn_matches_dense_formula():
    rng = np.random.default_rng(2)
    n, d = 5, 3
    w = rng.uniform(0, 1, size=(n, n))
    x = rng.normal(size=(n, d))
    weights = [rng.normal(size=(d, d)), rng.normal(size=(d, 2))]
    a_hat = w + np.eye(n)
    s = 1 / np.sqrt(a_hat.sum(axis=1))
    norm = s[:, None] * a_hat * s[None, :]
    h = x
    for layer in weights:
        h = np.maximum(norm @ h @ layer, 0)
    np.testing.assert_allclose(bta.gcn_forward(weights, w, x), h, atol=1e-12)


def test_interaction_matrix_and_decoding_helpers():
    s = bta.interaction_matrix(np.array([[1.0]]), np.array([[np.log(3.0)], [0.0]]), 1.0)
    np.testing.assert_allclose(s, [[0.75, 0.25]])
    assert bta.round_count(3.5) == 4 and bta.round_count(0.2) == 1
    assert bta.select_answer([0.5, 0.5]) == 0 and bta.select_answer([0.1, 0.9, 0.3]) == 1


def test_tensor_files_round_trip(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3) / 7
    bta.write_tensor(tmp_path / "a.btat", a)
    back = bta.read_tensor(tmp_path / "a.btat")
    assert back.dtype == np.float32 and back.tobytes() == a.tobytes()
    assert (tmp_path / "a.btat").stat().st_size == 24 + 24

    b = np.random.default_rng(3).normal(size=(2, 2, 2))
    bta.write_tensor(tmp_path / "b.btat", b)
    np.testing.assert_array_equal(bta.read_tensor(tmp_path / "b.btat"), b)

    raw = bytearray((tmp_path / "a.btat").read_bytes())
    raw[0] = ord("X")
    (tmp_path / "bad.btat").write_bytes(bytes(raw))
    with pytest.raises(bta.FormatError):
        bta.read_tensor(tmp_path / "bad.btat")


def test_synthetic_counts_follow_bursts(tmp_path):
    spec = dict(task="count", seed=4, samples=12, clips=5, feature_dim=10, embed_dim=6)
    manifest = bta.write_synthetic(tmp_path, **spec)
    direction = np.array(bta.burst_direction(json.dumps(spec)))
    doc = json.loads(open(manifest).read())
    for sample in doc["samples"]:
        motion = bta.read_tensor(tmp_path / sample["motion"]).astype(np.float64)
        assert int((motion @ direction > 1.5).sum()) == sample["answer"]


def test_train_evaluate_infer_dump(tmp_path):
    manifest = bta.write_synthetic(
        tmp_path / "data", task="multi_choice", seed=5, samples=6, clips=2, frames_per_clip=2,
        tokens=4, feature_dim=8, embed_dim=8)
    config = {
        "train_manifest": str(manifest),
        "out": str(tmp_path / "run"),
        "model": {"model_dim": 16, "fused_dim": 8},
        "train": {"epochs": 3, "batch_size": 3, "learning_rate": 1e-3},
    }
    report = bta.train(config)
    assert len(report["epoch_loss"]) == 3 and all(np.isfinite(report["epoch_loss"]))
    assert report["metric"] == "accuracy"

    name, value = bta.evaluate(report["checkpoint"], manifest)
    assert name == "accuracy" and 0.0 <= value <= 1.0
    predictions = bta.infer(report["checkpoint"], manifest)
    assert len(predictions) == 6
    for sample_id, answer, scores in predictions:
        assert scores.shape == (4,) and answer == int(np.argmax(scores))

    trace = bta.dump_interactions(report["checkpoint"], manifest, "s0", tmp_path / "trace.json")
    m = trace["matrices"]["S^v"]
    np.testing.assert_allclose(m["values"].sum(axis=1), 1.0, atol=1e-6)
    assert list(m["row_argmax"]) == list(np.argmax(m["values"], axis=1))

    again = bta.train(dict(config, out=str(tmp_path / "again")))
    assert again["epoch_loss"] == report["epoch_loss"]
    assert (tmp_path / "run/checkpoint.btac").read_bytes() == (tmp_path / "again/checkpoint.btac").read_bytes()


def test_config_typos_are_rejected():
    with pytest.raises(bta.ConfigError):
        bta.train({"train": {"epocs": 3}})


def test_gradient_check_open_ended():
    r = bta.gradient_check("open_ended")
    assert r["passed"] and r["max_relative_error"] <= 1e-4
