import numpy as np
import pytest

from goalloc.evaluation import map_at_iou
from goalloc.pipeline import detections, evaluate, predict_many
from goalloc.synthetic import SyntheticSpec, ground_truth, oracle_params, synth_generate


def test_same_seed_same_dataset():
    a, b = synth_generate(SyntheticSpec(num_videos=10, seed=4)), synth_generate(SyntheticSpec(num_videos=10, seed=4))
    for va, vb in zip(a.videos, b.videos):
        assert va.record == vb.record and np.array_equal(va.features, vb.features)


def test_fixture_shape_and_hidden_transitions():
    ds = synth_generate(SyntheticSpec())
    assert len(ds.split("train")) == 160 and len(ds.split("test")) == 40
    for v in ds.videos:
        assert 16 <= v.record.num_clips <= 32 and v.features.shape == (v.record.num_clips, 32)
        assert 0 < v.transition_clip < v.record.num_clips
        assert abs(v.transition_clip / v.record.num_clips - 0.5) <= 0.2 + 0.5 / v.record.num_clips
        if v.record.split == "train":
            assert v.record.transition_clip is None
        else:
            assert v.record.transition_clip == v.transition_clip


def test_zero_noise_clips_equal_prototypes():
    ds = synth_generate(SyntheticSpec(num_videos=5, cluster_noise_sigma=0.0))
    for v in ds.videos:
        tc = v.transition_clip
        assert np.all(v.features[:tc] == ds.goal_prototypes[v.record.goal_label])
        assert np.all(v.features[tc:] == ds.unint_prototypes[v.record.unint_label])


def test_ground_truth_segments():
    ds = synth_generate(SyntheticSpec(num_videos=5, test_fraction=1.0))
    goal, unint = ground_truth([v.record for v in ds.videos])
    for v, g, u in zip(ds.videos, goal, unint):
        assert (g.start_clip, g.end_clip, g.class_id) == (0, v.transition_clip - 1, v.record.goal_label)
        assert (u.start_clip, u.end_clip) == (v.transition_clip, v.record.num_clips - 1)
    with pytest.raises(ValueError):
        ground_truth([synth_generate(SyntheticSpec(num_videos=1, test_fraction=0.0)).videos[0].record])


@pytest.mark.parametrize("sigma", [0.0, 0.3])
def test_oracle_params_localize_perfectly(sigma):
    ds = synth_generate(SyntheticSpec(cluster_noise_sigma=sigma, seed=1))
    params = oracle_params(ds.goal_prototypes, ds.unint_prototypes)
    test = ds.split("test")
    preds = predict_many(params, [(v.record.id, v.features) for v in test])
    goal, unint = ground_truth([v.record for v in test])
    table = evaluate(preds, [v.record for v in test], goal, unint)
    assert table.goal == [1.0] * 9 and table.unint == [1.0] * 9
    assert table.goal_cmap == 1.0 and table.unint_cmap == 1.0


def test_spec_validation():
    for bad in (dict(l_range=(5, 4)), dict(transition_fraction_range=(0.0, 0.5)), dict(n_goal_classes=1),
                dict(cluster_noise_sigma=-1.0)):
        with pytest.raises(ValueError):
            SyntheticSpec(**bad)
