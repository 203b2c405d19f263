import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avsr import autodiff as ad
from avsr.autodiff import Tensor
from avsr.data import SyntheticSpec, synthesize
from avsr.errors import CheckpointError, FormatError, OptimizerError, TrainingError
from avsr.models import ModelConfig, StreamModel
from avsr.train import (Adam, Checkpoint, EarlyStop, LRSchedule, TrainConfig, evaluate,
                        make_param_groups, model_from_checkpoint, train_fused, train_stream)
from avsr.train.engine import confusion_result
from avsr.train.optim import clip_grad_norm
from oracles import adam_reference

CFG = ModelConfig.tiny()
SPEC = SyntheticSpec(train=24, val=10, test=10, seed=4)
QUICK = TrainConfig.tiny(batch_size=8, lr=1e-3, attention_lr=2e-3, stage1_max_epochs=2,
                         stage2_epochs=1, stage3_max_epochs=1, fused_frozen_epochs=1,
                         fused_max_epochs=1)


@pytest.fixture(scope="module")
def data():
    return {s: synthesize(SPEC, s) for s in ("train", "val", "test")}


# --- Adam -------------------------------------------------------------------

def _param(value, name):
    return Tensor(np.array([value]), requires_grad=True, name=name)


def test_adam_matches_textbook_reference():
    p = _param(0.3, "w")
    opt = Adam(make_param_groups([("w", p)], 0.01, 0.02))
    grads = [0.5, -1.0, 2.0, 0.1, -0.3]
    for g in grads:
        p.grad = np.array([g])
        opt.step()
    assert abs(p.data[0] - adam_reference(0.3, grads, 0.01)) < 1e-12


def test_adam_first_step_moves_by_lr():
    p = _param(1.0, "w")
    opt = Adam(make_param_groups([("w", p)], 1e-3, 2e-3))
    p.grad = np.array([1.0])
    opt.step()
    assert p.data[0] == pytest.approx(1.0 - 1e-3, abs=1e-10)


def test_adam_zero_gradient_leaves_parameters():
    p = _param(1.5, "w")
    opt = Adam(make_param_groups([("w", p)], 1e-3, 2e-3))
    p.grad = np.zeros(1)
    opt.step()
    assert p.data[0] == 1.5


def test_attention_group_moves_twice_as_far():
    base, attn = _param(0.0, "stream.w"), _param(0.0, "stream.attention.raw")
    groups = make_param_groups([("stream.w", base), ("stream.attention.raw", attn)], 1e-4, 2e-4)
    assert [g.name for g in groups] == ["base", "attention"]
    opt = Adam(groups)
    base.grad = np.array([0.7])
    attn.grad = np.array([0.7])
    opt.step()
    assert abs(attn.data[0] / base.data[0] - 2.0) < 1e-9


def test_frozen_parameters_are_not_grouped():
    a, b = _param(0.0, "a"), _param(0.0, "b")
    b.requires_grad = False
    groups = make_param_groups([("a", a), ("b", b)], 1e-3, 2e-3)
    assert [list(g.params) for g in groups] == [["a"]]


def test_missing_gradient_is_an_error():
    opt = Adam(make_param_groups([("w", _param(0.0, "w"))], 1e-3, 2e-3))
    with pytest.raises(OptimizerError):
        opt.step()


def test_gradient_clipping_to_global_norm():
    a, b = _param(0.0, "a"), _param(0.0, "b")
    a.grad, b.grad = np.array([3.0]), np.array([4.0])
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert np.hypot(a.grad[0], b.grad[0]) == pytest.approx(1.0)


# --- schedule and early stopping ---------------------------------------------

def test_step_decay_halves_at_epoch_ten():
    s = LRSchedule()
    assert s(1e-4, 9) == 1e-4
    assert s(1e-4, 10) == pytest.approx(0.5e-4, rel=1e-15)
    assert s(1e-4, 25) == pytest.approx(0.25e-4, rel=1e-15)
    assert LRSchedule("constant")(1e-4, 40) == 1e-4


def _stop_epoch(metrics, patience=5):
    stopper = EarlyStop(patience)
    for epoch, m in enumerate(metrics):
        if stopper.update(epoch, m):
            return epoch, stopper.best_epoch
    return None, stopper.best_epoch


def test_early_stop_on_scripted_sequence():
    metrics = [0.2, 0.5, 0.7, 0.6, 0.7, 0.65, 0.69, 0.7, 0.7, 0.9]
    stop, best = _stop_epoch(metrics)
    assert best == 2
    assert stop == best + 5 + 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.integers(1, 6))
def test_early_stop_fires_exactly_patience_plus_one_after_best(metrics, patience):
    stop, best = _stop_epoch(metrics, patience)
    if stop is None:
        assert len(metrics) - 1 - best <= patience
    else:
        assert stop - best == patience + 1
        assert max(metrics[:stop + 1]) == metrics[best]
        assert all(m < metrics[best] for m in metrics[:best])


# --- evaluation -------------------------------------------------------------

def test_perfect_predictions():
    labels = np.array([0, 1, 2, 2, 1])
    res = confusion_result(labels, labels, 3)
    assert res.accuracy == 1.0 and res.confusion.sum() == 5


def test_uniform_model_accuracy_is_class_zero_share():
    clips = synthesize(SyntheticSpec(train=10, val=200, test=10), "val")
    model = StreamModel("audio", CFG)
    model.classifier.weight.data[:] = 0
    model.classifier.bias.data[:] = 0
    res = evaluate(model, clips)
    assert res.accuracy == pytest.approx(np.mean(clips.labels == 0)) == pytest.approx(0.1)
    assert res.confusion.sum() == 200
    assert (res.confusion[:, 1:] == 0).all()


def test_evaluate_rejects_class_count_mismatch():
    clips = synthesize(SyntheticSpec(num_classes=12, train=12, val=12, test=12), "val")
    with pytest.raises(CheckpointError):
        evaluate(StreamModel("audio", CFG), clips)


# --- checkpoints ------------------------------------------------------------

def test_checkpoint_round_trip_preserves_outputs(tmp_path):
    model = StreamModel("video", CFG, seed=2)
    model.attention.raw.data[:] = np.linspace(-1, 1, 7)
    path = Checkpoint.from_model(model, 3, 0.5).save(tmp_path / "v.ckpt")
    back = model_from_checkpoint(Checkpoint.load(path), CFG)
    x = Tensor(np.random.default_rng(0).uniform(size=(2, 1, 7, 24, 24)))
    a, b = model.eval()(x).data, back.eval()(x).data
    assert np.abs(a - b).max() / np.abs(a).max() <= 1e-6


def test_checkpoint_metadata_and_counts(tmp_path):
    model = StreamModel("audio", CFG)
    ckpt = Checkpoint.load(Checkpoint.from_model(model, 7, 0.875).save(tmp_path / "a.ckpt"))
    assert (ckpt.epoch, ckpt.metric, ckpt.digest) == (7, 0.875, CFG.digest())
    params = dict(model.named_parameters())
    assert sum(a.size for n, a in ckpt.entries.items() if n in params) == model.num_parameters()
    assert ckpt.kind() == "audio"


def test_checkpoint_bad_magic(tmp_path):
    blob = bytearray(Checkpoint.from_model(StreamModel("audio", CFG)).to_bytes())
    blob[0:8] = b"NOTACKPT"
    with pytest.raises(FormatError):
        Checkpoint.from_bytes(bytes(blob))


def test_checkpoint_truncated():
    blob = Checkpoint.from_model(StreamModel("audio", CFG)).to_bytes()
    with pytest.raises(FormatError):
        Checkpoint.from_bytes(blob[:-5])


def test_checkpoint_wrong_config():
    ckpt = Checkpoint.from_model(StreamModel("audio", CFG))
    with pytest.raises(CheckpointError):
        model_from_checkpoint(ckpt, CFG.replace(attention_audio=False))


# --- protocols --------------------------------------------------------------

@pytest.fixture(scope="module")
def audio_run(data):
    return train_stream(data, "audio", CFG, QUICK)


def test_stream_protocol_stages_and_audit(audio_run):
    assert audio_run.audits == {"stage2_frozen_unchanged": True}
    stages = [r.stage for r in audio_run.log if r.split == "train"]
    assert stages[-2:] == ["stage2", "stage3"]
    assert set(stages[:-2]) == {"stage1"}
    assert set(audio_run.stage_checkpoints) == {"stage1", "stage2"}


def test_metric_log_has_two_rows_per_epoch(audio_run):
    epochs = {(r.stage, r.epoch) for r in audio_run.log}
    assert len(audio_run.log) == 2 * len(epochs)
    assert [r.split for r in audio_run.log[:2]] == ["train", "val"]


def test_stage2_freezes_encoder_bitwise(audio_run):
    s1 = audio_run.stage_checkpoints["stage1"].entries
    s2 = audio_run.stage_checkpoints["stage2"].entries
    for name, arr in s1.items():
        if not name.startswith(("bgru.", "classifier.")):
            assert np.array_equal(arr, s2[name]), name
    assert any(not np.array_equal(s1[n], s2[n]) for n in s1 if n.startswith("bgru."))


def test_training_is_deterministic(data, audio_run):
    again = train_stream(data, "audio", CFG, QUICK)
    assert again.log_lines() == audio_run.log_lines()
    assert again.checkpoint.to_bytes() == audio_run.checkpoint.to_bytes()


def test_returned_checkpoint_is_best_validated(data, audio_run):
    best = max(r.accuracy for r in audio_run.log if r.split == "val" and r.stage == "stage3")
    assert audio_run.checkpoint.metric >= best - 1e-12
    assert evaluate(audio_run.model, data["val"]).accuracy == pytest.approx(audio_run.checkpoint.metric)


def test_fused_protocol_freeze_audit_and_decay(data, audio_run):
    video = Checkpoint.from_model(StreamModel("video", CFG, seed=1))
    tcfg = QUICK.replace(fused_max_epochs=2, decay_period=1)
    res = train_fused(data, audio_run.checkpoint, video, CFG, tcfg)
    assert res.audits == {"phaseA_frozen_unchanged": True}
    rows = [r for r in res.log if r.split == "train"]
    assert [r.stage for r in rows] == ["phaseA", "phaseB", "phaseB"]
    assert rows[0].lr == rows[1].lr == tcfg.lr
    assert rows[2].lr == pytest.approx(0.5 * tcfg.lr)
    assert res.checkpoint.kind() == "fused"


def test_phase_a_leaves_stream_weights_untouched(data, audio_run):
    video = Checkpoint.from_model(StreamModel("video", CFG, seed=1))
    res = train_fused(data, audio_run.checkpoint, video, CFG, QUICK.replace(fused_max_epochs=0))
    phase_a = res.stage_checkpoints["phaseA"].entries
    for name, arr in audio_run.checkpoint.entries.items():
        if not name.startswith(("backend.", "classifier.")):
            assert np.array_equal(phase_a["audio." + name], arr), name


def test_divergence_reports_epoch_and_step(data):
    broken = dict(data)
    train = data["train"].take(np.arange(len(data["train"])))
    train.waves = train.waves.copy()
    train.waves[:, 3] = np.inf
    broken["train"] = train
    with pytest.raises(TrainingError, match=r"stage1: epoch 0 step 0"):
        train_stream(broken, "audio", CFG, QUICK)
