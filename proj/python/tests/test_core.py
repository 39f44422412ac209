import numpy as np
import pytest

import sarasteer as ss


def golden():
    a3 = np.array([[3, 0], [0, 2], [0, 0]], dtype=np.float32)
    a1 = np.array([[4, 0], [3, 0], [0, 1]], dtype=np.float32)
    a2 = np.array([[0, 1], [0, 1], [5, 0]], dtype=np.float32)
    return a3, a1, a2


def test_golden_fixture():
    r = ss.sara_steer(*golden())
    assert list(r["lambda"]) == [1.0, -1.0, 0.0]
    np.testing.assert_array_equal(r["steered"], [[6, 0], [0, 0], [0, 0]])
    assert r["n_comp"] == 2


def test_align_equals_repel_is_noop():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(12, 5)).astype(np.float32)
    a = rng.normal(size=(12, 7)).astype(np.float32)
    r = ss.sara_steer(p, a, a)
    assert np.all(r["lambda"] == 0)
    np.testing.assert_array_equal(r["steered"], p)


def test_swap_negates_lambda():
    rng = np.random.default_rng(1)
    p, a, b = (rng.normal(size=(9, k)).astype(np.float32) for k in (4, 6, 3))
    np.testing.assert_array_equal(ss.sara_steer(p, a, b)["lambda"], -ss.sara_steer(p, b, a)["lambda"])


def test_shape_mismatch_raises_value_error():
    with pytest.raises(ValueError):
        ss.sara_steer(np.ones((3, 2), np.float32), np.ones((4, 2), np.float32), np.ones((3, 2), np.float32))


def test_actadd_adds_delta():
    p = np.zeros((2, 3), np.float32)
    t = np.ones((2, 3), np.float32)
    r = ss.actadd_steer(p, t, np.zeros((2, 3), np.float32), coefficient=2.0)
    np.testing.assert_array_equal(r["steered"], 2 * t)


def test_svd_singular_values_match_numpy():
    rng = np.random.default_rng(2)
    m = rng.normal(size=(7, 5))
    _, s, _ = ss.svd_reduce(m, 5)
    np.testing.assert_allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-10)


def test_dump_and_lambda_round_trip(tmp_path):
    data = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
    ss.save_dump(data, tmp_path / "x.actdump", layer=14, model_tag="m", prompt_tag="p")
    d = ss.load_dump(tmp_path / "x.actdump")
    np.testing.assert_array_equal(d["data"], data)
    assert (d["layer"], d["model_tag"], d["prompt_tag"]) == (14, "m", "p")
    lam = np.array([1 / 3, -2.0, 0.0])
    ss.save_lambda_csv(lam, tmp_path / "l.csv")
    np.testing.assert_array_equal(ss.load_lambda_csv(tmp_path / "l.csv"), lam)
    with pytest.raises(ss.FormatError):
        ss.load_dump(tmp_path / "l.csv")


def test_nan_dump_rejected(tmp_path):
    with pytest.raises(ss.SaraError):
        ss.save_dump(np.array([[np.nan]], np.float32), tmp_path / "bad.actdump")
    assert not (tmp_path / "bad.actdump").exists()


def test_toy_model_zero_lambda_is_identity():
    lm = ss.ToyLm(n_layers=4, d_model=16, n_heads=2, n_ctx=64, seed=3)
    base = lm.generate("hello", max_tokens=6, samples=3)
    same = lm.generate_with_lambda("hello", 2, np.zeros(16), max_tokens=6, samples=3)
    assert base == same
    assert lm.capture("hello", 1).shape == (16, 5)
    with pytest.raises(ValueError):
        lm.generate_with_lambda("hello", 2, np.zeros(15))


def test_toy_model_large_lambda_shifts_distribution():
    lm = ss.ToyLm(n_layers=4, d_model=16, n_heads=2, n_ctx=64, seed=3)
    lam = np.where(np.arange(16) % 2 == 0, 2.0, -1.0)
    p0 = np.array(lm.first_token_distribution("hello"))
    p1 = np.array(lm.first_token_distribution("hello", (0, lam)))
    assert abs(p0.sum() - 1) < 1e-12
    assert 0.5 * np.abs(p0 - p1).sum() > 0


def test_layer_groups():
    assert ss.layer_groups(18) == [("early", 0, 5), ("mid", 6, 11), ("late", 12, 17)]


def test_analysis_anchors():
    assert ss.consistency_percent([2, 2, 2, 2, 2]) == 100.0
    assert ss.consistency_percent([0, 1, 2, 3, 4]) == 0.0
    a = ss.encode_labels(["x", "y", "x", "z"])
    assert abs(ss.adjusted_mutual_information(a, a) - 1.0) < 1e-12
    rejected, adjusted = ss.bh_fdr([0.01, 0.02, 0.03, 0.04, 0.05])
    assert all(rejected)
    assert all(q >= p for p, q in zip([0.01, 0.02, 0.03, 0.04, 0.05], adjusted))
    assert ss.mann_whitney([1, 2, 3], [1, 2, 3])["p_value"] == 1.0
    scores = ss.mfq_score([5] * 30)
    assert scores["HarmCare"] == 5.0 and not scores["catch_flagged"]
    with pytest.raises(ValueError):
        ss.mfq_score([6] * 32)


def test_ami_surrogates():
    rng = np.random.default_rng(4)
    a = [int(x) for x in rng.integers(0, 8, 56)]
    b = [int(x) for x in rng.integers(0, 8, 56)]
    r = ss.ami_agreement(a, b, n_surrogates=200, seed=1)
    assert len(r["surrogates"]) == 200
    assert abs(r["surrogate_mean"]) < 0.05


def test_synthetic_comparison():
    rows = ss.synthetic_method_comparison(10, 5)
    for r in rows:
        if r["method"] == "SARA":
            assert r["on_target_gain"] > r["spillover"]
