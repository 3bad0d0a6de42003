import json
import math

import numpy as np
import pytest

from goalloc.io import load_checkpoint
from goalloc.model import ModelConfig, init_params
from goalloc.synthetic import SyntheticSpec, synth_generate
from goalloc.train import TrainConfig, train

SMALL = SyntheticSpec(num_videos=40, l_range=(6, 10), d=8, n_goal_classes=3, n_unint_classes=2, seed=2)


def small_run(tmp_path=None, **overrides):
    ds = synth_generate(SMALL)
    data = [(v.features, v.label) for v in ds.split("train")]
    params = init_params(ModelConfig(8, 3, 2, hidden=6, layers=1), 0)
    cfg = TrainConfig(**{"iterations": 30, "batch_size": 4, "seed": 1, **overrides})
    return ds, train(data, params, cfg, out_dir=tmp_path)


def test_same_seed_bit_identical_logs(tmp_path):
    _, a = small_run(tmp_path / "a")
    _, b = small_run(tmp_path / "b")
    assert (tmp_path / "a" / "train_log.jsonl").read_bytes() == (tmp_path / "b" / "train_log.jsonl").read_bytes()
    assert a.history == b.history
    _, c = small_run(seed=2)
    assert c.history != a.history


def test_outputs_and_checkpoint_layout(tmp_path):
    _, res = small_run(tmp_path, checkpoint_every=10)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["ckpt_10.json", "ckpt_20.json", "ckpt_30.json",
                                                        "train_log.jsonl"]
    row = json.loads((tmp_path / "train_log.jsonl").read_text().splitlines()[0])
    assert list(row) == ["iter", "l_cls_ia", "l_cls_ua", "l_overlap", "l_order", "total"]
    params, hyper = load_checkpoint(tmp_path / "ckpt_30.json")
    assert hyper["lambda_weight"] == 0.8 and hyper["attention_threshold"] == 0.5
    for name in params.names():
        assert np.array_equal(params[name].data, res.params[name].data)
    assert all(math.isfinite(r["total"]) for r in res.history)


def test_training_does_not_mutate_dataset():
    ds = synth_generate(SMALL)
    before = [v.features.copy() for v in ds.videos]
    data = [(v.features, v.label) for v in ds.split("train")]
    train(data, init_params(ModelConfig(8, 3, 2, hidden=4, layers=1), 0), TrainConfig(iterations=5, batch_size=4))
    assert all(np.array_equal(a, v.features) for a, v in zip(before, ds.videos))


def test_classification_only_training_learns_labels():
    ds = synth_generate(SMALL)
    data = [(v.features, v.label) for v in ds.split("train")]
    res = train(data, init_params(ModelConfig(8, 3, 2, hidden=8, layers=1), 0),
                TrainConfig(iterations=300, batch_size=8, lambda_weight=1.0, learning_rate=3e-3))
    tail = res.history[-20:]
    assert np.mean([r["l_cls_ia"] for r in tail]) < math.log(3) / 2
    assert np.mean([r["l_cls_ua"] for r in tail]) < math.log(2) / 2


def test_nan_loss_aborts_with_iteration(monkeypatch):
    import goalloc.train as train_mod
    from goalloc import tensor as T

    real = train_mod.batch_loss
    calls = {"n": 0}

    def poisoned(*args, **kwargs):
        parts = real(*args, **kwargs)
        calls["n"] += 1
        if calls["n"] == 3:
            parts.total = T.scale(parts.total, float("nan"))
        return parts

    monkeypatch.setattr(train_mod, "batch_loss", poisoned)
    with pytest.raises(FloatingPointError, match="iteration 3"):
        small_run()


def test_config_validation_and_dict_round_trip():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(lambda_weight=2.0)
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"bogus": 1})
    cfg = TrainConfig(seed=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        train([], init_params(ModelConfig(2, 2, 2, hidden=2, layers=1)), cfg)
