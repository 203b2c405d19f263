from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avsr.data import (SPLITS, AugmentConfig, Rect, SyntheticSpec, augment_audio, augment_video,
                       batch_iter, crop_frames, epoch_order, extract_mouth_roi, generate_synthetic,
                       load_lrw_layout, read_frames, read_manifest, read_wav, synthesize,
                       template_classify, write_frames, write_wav)
from avsr.errors import BoundsError, DataError, EmptyDatasetError, IngestionError

SMALL = SyntheticSpec(train=60, val=20, test=20, seed=3)


# --- file formats -----------------------------------------------------------

def test_frames_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(size=(3, 5, 4)).astype(np.float32)
    write_frames(tmp_path / "a.frames", x)
    assert (tmp_path / "a.frames").stat().st_size == 16 + 4 * x.size
    assert np.array_equal(read_frames(tmp_path / "a.frames"), x)


def test_frames_bad_magic(tmp_path):
    p = tmp_path / "a.frames"
    write_frames(p, np.zeros((1, 2, 2)))
    blob = bytearray(p.read_bytes())
    blob[:4] = b"XXXX"
    p.write_bytes(bytes(blob))
    with pytest.raises(IngestionError):
        read_frames(p)


def test_frames_truncated_payload(tmp_path):
    p = tmp_path / "a.frames"
    write_frames(p, np.zeros((2, 3, 3)))
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(IngestionError):
        read_frames(p)


def test_wav_round_trip_within_quantisation(tmp_path):
    x = np.sin(np.linspace(0, 20, 500)) * 0.8
    write_wav(tmp_path / "a.wav16k", x)
    assert np.abs(read_wav(tmp_path / "a.wav16k") - x).max() <= 1 / 32767


def test_wav_wrong_rate_rejected(tmp_path):
    write_wav(tmp_path / "a.wav16k", np.zeros(10), sample_rate=8000)
    with pytest.raises(IngestionError):
        read_wav(tmp_path / "a.wav16k")


# --- LRW-style ingestion ----------------------------------------------------

def _clip(root, word, split, name, t=29, n=400):
    d = root / word / split
    d.mkdir(parents=True, exist_ok=True)
    write_frames(d / f"{name}.frames", np.full((t, 8, 8), 0.5))
    write_wav(d / f"{name}.wav16k", np.zeros(n))


def test_minimal_layout(tmp_path):
    _clip(tmp_path, "ABOUT", "train", "ABOUT_00001")
    _clip(tmp_path, "BELOW", "test", "BELOW_00001")
    m = load_lrw_layout(tmp_path)
    assert m.num_classes == 2 and len(m.records) == 2
    assert [r.label for r in m.records] == [0, 1]
    assert m.subset("test").ids == ["BELOW/test/BELOW_00001"]


def test_wrong_frame_count_names_the_clip(tmp_path):
    _clip(tmp_path, "ABOUT", "train", "ABOUT_00001")
    _clip(tmp_path, "ABOUT", "val", "ABOUT_00002", t=28)
    with pytest.raises(IngestionError) as err:
        load_lrw_layout(tmp_path)
    assert err.value.offending and "ABOUT/val/ABOUT_00002" in str(err.value)


def test_missing_audio_is_reported(tmp_path):
    _clip(tmp_path, "ABOUT", "train", "ABOUT_00001")
    (tmp_path / "ABOUT" / "train" / "ABOUT_00001.wav16k").unlink()
    with pytest.raises(IngestionError, match="missing audio"):
        load_lrw_layout(tmp_path)


def test_rescan_is_stable(tmp_path):
    for w in ("ZEBRA", "APPLE", "MANGO"):
        for i in range(3):
            _clip(tmp_path, w, SPLITS[i], f"{w}_{i:05d}")
    assert load_lrw_layout(tmp_path).records == load_lrw_layout(tmp_path).records


def test_roi_applied_on_load(tmp_path):
    _clip(tmp_path, "ABOUT", "train", "ABOUT_00001")
    m = load_lrw_layout(tmp_path, roi=Rect(1, 2, 4, 5))
    assert m.load().frames.shape == (1, 29, 4, 5)
    with pytest.raises(BoundsError):
        load_lrw_layout(tmp_path, roi=Rect(6, 0, 4, 4))


def test_manifest_round_trip(tmp_path):
    written = generate_synthetic(SMALL, tmp_path)
    back = read_manifest(tmp_path / "manifest.tsv")
    assert back.records == written.records
    assert back.class_names == written.class_names
    assert back.extents == written.extents
    assert len(back.subset("val").load()) == 20


def test_loading_an_empty_manifest(tmp_path):
    m = generate_synthetic(SMALL, tmp_path)
    with pytest.raises(EmptyDatasetError):
        replace(m, records=[]).load()


# --- mouth region -----------------------------------------------------------

def test_roi_full_frame_is_identity():
    f = np.random.default_rng(0).uniform(size=(6, 7))
    assert np.array_equal(extract_mouth_roi(f, Rect(0, 0, 6, 7)), f)


def test_roi_extents_and_origin():
    f = np.random.default_rng(0).uniform(size=(256, 256))
    out = extract_mouth_roi(f, Rect(80, 70, 96, 96))
    assert out.shape == (96, 96)
    assert out[0, 0] == f[80, 70]


def test_roi_out_of_bounds():
    with pytest.raises(BoundsError):
        extract_mouth_roi(np.zeros((10, 10)), Rect(5, 5, 6, 2))


# --- augmentation -----------------------------------------------------------

def test_disabled_augmentation_is_identity():
    x = np.random.default_rng(0).uniform(size=(3, 8, 8))
    assert augment_video(x, AugmentConfig(enabled=False), np.random.default_rng(1)) is x


def test_double_flip_is_identity():
    x = np.random.default_rng(0).uniform(size=(3, 8, 8))
    cfg = AugmentConfig(enabled=True)
    twice = augment_video(augment_video(x, cfg, None, force="flip"), cfg, None, force="flip")
    assert np.array_equal(twice, x)


def test_crop_matches_hand_shift_on_test_pattern():
    pattern = (10 * np.arange(6)[:, None] + np.arange(6)[None, :]).astype(float)[None]
    out = crop_frames(pattern, 2, (2, 1))
    # window rows 2..5, cols 1..4, reflect-padded by one pixel on each side
    rows = [3, 2, 3, 4, 5, 4]
    cols = [2, 1, 2, 3, 4, 3]
    expected = np.array([[10 * r + c for c in cols] for r in rows], dtype=float)
    assert out.shape == pattern.shape
    assert np.array_equal(out[0], expected)


def test_forced_crop_keeps_extents():
    x = np.random.default_rng(0).uniform(size=(2, 10, 10))
    out = augment_video(x, AugmentConfig(enabled=True), np.random.default_rng(0), force="crop",
                        offset=(0, 2))
    assert out.shape == x.shape
    # offset (0, 2): window rows 0..7, cols 2..9 land at rows/cols 1..8
    assert np.array_equal(out[:, 1:9, 1:9], x[:, 0:8, 2:10])


def test_crop_margin_too_large():
    with pytest.raises(DataError):
        augment_video(np.zeros((1, 4, 4)), AugmentConfig(enabled=True, crop_margin=2),
                      np.random.default_rng(0), force="crop")


def test_audio_noise_zero_sigma_is_identity():
    x = np.arange(5.0)
    assert np.array_equal(augment_audio(x, 0.0, np.random.default_rng(0)), x)


def test_audio_noise_statistics():
    x = np.zeros(100_000)
    out = augment_audio(x, 0.1, np.random.default_rng(0))
    assert abs(np.std(out - x) - 0.1) < 0.005


def test_audio_noise_reproducible():
    x = np.zeros(50)
    assert np.array_equal(augment_audio(x, 0.2, np.random.default_rng(4)),
                          augment_audio(x, 0.2, np.random.default_rng(4)))


# --- batching ---------------------------------------------------------------

def _clipset(n):
    return synthesize(SyntheticSpec(train=n, val=2, test=2, num_classes=3, seed=1), "train")


def test_batch_sizes_include_short_tail():
    assert [len(b.labels) for b in batch_iter(_clipset(10), 4)] == [4, 4, 2]


def test_epoch_order_is_seeded():
    assert np.array_equal(epoch_order(50, 7, 3), epoch_order(50, 7, 3))
    assert not np.array_equal(epoch_order(50, 7, 3), epoch_order(50, 7, 4))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 23), st.integers(0, 100), st.integers(0, 5))
def test_each_epoch_covers_every_clip_once(bs, seed, epoch):
    clips = _clipset(23)
    ids = [i for b in batch_iter(clips, bs, seed, epoch=epoch) for i in b.ids]
    assert sorted(ids) == sorted(clips.ids)


def test_augmentation_only_touches_train_split():
    spec = SyntheticSpec(train=4, val=4, test=4, num_classes=3)
    aug = AugmentConfig(enabled=True, prob=1.0)
    val = synthesize(spec, "val")
    plain = next(batch_iter(val, 4, None))
    noisy = next(batch_iter(val, 4, None, aug))
    assert np.array_equal(plain.video, noisy.video) and np.array_equal(plain.audio, noisy.audio)
    train = synthesize(spec, "train")
    assert not np.array_equal(next(batch_iter(train, 4, 0)).audio, next(batch_iter(train, 4, 0, aug)).audio)


def test_empty_dataset():
    with pytest.raises(EmptyDatasetError):
        next(batch_iter(_clipset(5).take([]), 2))


# --- synthetic generator ----------------------------------------------------

def test_generated_files_are_bitwise_reproducible(tmp_path):
    spec = SyntheticSpec(train=6, val=3, test=3, num_classes=3)
    generate_synthetic(spec, tmp_path / "a")
    generate_synthetic(spec, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_default_spec_counts():
    spec = SyntheticSpec()
    for split, n in zip(SPLITS, (2000, 200, 200)):
        assert spec.count(split) == n
    clips = synthesize(spec, "val")
    assert len(clips) == 200 and clips.num_classes == 10
    assert np.bincount(clips.labels).tolist() == [20] * 10


def _nearest_template(train, test, features):
    templates = np.stack([features(train)[train.labels == k].mean(axis=0) for k in range(train.num_classes)])
    d = ((features(test)[:, None] - templates[None]) ** 2).sum(axis=2)
    return d.argmin(axis=1)


@pytest.mark.parametrize("modality", ["video", "audio"])
def test_clean_consistent_data_is_template_separable(modality):
    spec = SyntheticSpec(train=50, val=10, test=100, noise_std=0.0, consistency=1.0, seed=5)
    train, test = synthesize(spec, "train"), synthesize(spec, "test")
    if modality == "video":
        feats = lambda c: c.frames.reshape(len(c), -1).astype(float)
    else:
        feats = lambda c: np.abs(np.fft.rfft(c.waves.astype(float), axis=1))
    assert (_nearest_template(train, test, feats) == test.labels).all()
    assert (template_classify(test, spec, modality) == test.labels).all()


def test_inconsistent_clips_confuse_each_stream():
    spec = SyntheticSpec(train=10, val=10, test=400, noise_std=0.0, consistency=0.9, seed=2)
    test = synthesize(spec, "test")
    wrong = {m: template_classify(test, spec, m) != test.labels for m in ("video", "audio")}
    # an inconsistent clip mixes the true class with a different distractor per stream
    assert 0.0 < wrong["video"].mean() < 0.2
    assert 0.0 < wrong["audio"].mean() < 0.2


def test_signal_steps_mask_is_centred():
    assert SyntheticSpec(signal_steps=3).signal_mask().tolist() == [False, False, True, True, True,
                                                                     False, False]


def test_test_noise_override():
    spec = SyntheticSpec(train=4, val=4, test=4, num_classes=3, test_noise_std=0.4)
    assert spec.noise_for("test") == 0.4 and spec.noise_for("train") == 0.1


def test_invalid_specs():
    with pytest.raises(DataError):
        SyntheticSpec(consistency=1.5)
    with pytest.raises(DataError):
        SyntheticSpec(signal_steps=9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_augmented_batches_keep_ranges_labels_and_ids(seed):
    clips = _clipset(12)
    aug = AugmentConfig(enabled=True, prob=1.0, audio_noise_std=0.3)
    for plain, noisy in zip(batch_iter(clips, 5, seed), batch_iter(clips, 5, seed, aug)):
        assert plain.ids == noisy.ids and np.array_equal(plain.labels, noisy.labels)
        assert noisy.video.shape == plain.video.shape and noisy.audio.shape == plain.audio.shape
        assert noisy.video.min() >= 0.0 and noisy.video.max() <= 1.0
        assert np.isfinite(noisy.audio).all()
