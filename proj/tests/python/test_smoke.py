import math

import numpy as np
import pytest

import softmask_lab as sl


def test_synthetic_corpus_shapes():
    d = sl.synthetic_corpus(num_domains=2, identities=2, images=3, cameras=2, height=16, width=8, seed=3)
    assert d["images"].shape == (12, 3, 16, 8)
    assert d["masks"].shape == (12, 16, 8)
    assert d["images"].min() >= -1.0 and d["images"].max() <= 1.0
    assert sorted(set(d["domains"])) == [0, 1]
    again = sl.synthetic_corpus(num_domains=2, identities=2, images=3, cameras=2, height=16, width=8, seed=3)
    assert np.array_equal(d["images"], again["images"])


def test_bgs_term_example():
    images = np.array([1, 1, 2, 2], dtype=np.float32).reshape(1, 1, 2, 2)
    masks = np.ones((1, 2, 2), dtype=np.float32)
    assert sl.bgs_term(images, masks, images - 0.5) == pytest.approx(1.0)
    assert sl.bgs_term(images, masks, images) == pytest.approx(0.0)


def test_wiring():
    mini = sl.wiring("mini")
    assert mini["feature_dim"] == 256
    assert [t["name"] for t in mini["taps"]] == ["pool", "block1", "block2", "block3", "final"]
    full = sl.wiring("full")
    assert full["feature_dim"] == 2048
    assert full["taps"][0]["channels"] == 64


def test_da2s_features_shape():
    x = np.random.default_rng(0).uniform(-1, 1, (2, 3, 64, 32)).astype(np.float32)
    f = sl.da2s_features(x, x, num_ids=3)
    assert f.shape == (2, 256)


def test_evaluate_example():
    q = np.zeros((1, 2))
    g = np.array([[3.0, 4.0], [1.0, 0.0]])
    m = sl.evaluate(q, [1], [0], g, [1, 2], [1, 1], ranks=[1, 2])
    assert m["rank-1"] == 0.0
    assert m["rank-2"] == 1.0
    assert m["mAP"] == pytest.approx(0.5)
    with pytest.raises(sl.ProtocolError):
        sl.evaluate(q, [9], [0], g, [1, 2], [1, 1])


def test_domain_distance():
    a = np.random.default_rng(1).normal(size=(30, 5))
    assert sl.domain_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    b = np.array([[1.0, 2.0]] * 4)
    z = np.zeros((3, 2))
    assert sl.domain_distance(z, b, embedder="identity") == pytest.approx(3.0)


def test_config_hash():
    base = sl.config_hash()
    assert len(base) == 64
    assert sl.config_hash(overrides={"sbsgan.lambda_sc": "0"}) != base
    assert sl.config_hash(sl.default_config()) == base
    with pytest.raises(sl.ConfigError):
        sl.config_hash(overrides={"sbsgan.nope": "1"})


def test_run_synth(tmp_path):
    out = tmp_path / "run"
    m = sl.run_command(
        "synth",
        overrides={
            "run.out": str(out),
            "synthetic.identities_per_domain": "2",
            "synthetic.images_per_identity": "2",
            "synthetic.test_identities": "2",
        },
    )
    assert m["stage"] == "synth"
    assert (out / "manifests" / "synth.json").exists()
    with pytest.raises(sl.PrerequisiteError):
        sl.run_command("train-da2s", overrides={"run.out": str(tmp_path / "empty")})
