import json

import numpy as np
import pytest

from neurofuse import dataio, synthgen
from neurofuse.dataio import (
    BimodalSubject,
    EEGTrialSet,
    FMRIBetaSet,
    LabelVocab,
    plan_folds,
    read_dataset,
    write_dataset,
)

from conftest import balanced_labels, tiny_profile


def test_default_vocab_is_the_eight_words():
    v = LabelVocab()
    assert len(v.words) == 8
    assert v.words[:4] == ("four", "three", "ten", "six")
    assert {v.categories[w] for w in v.words} == {"numbers", "social"}


def test_vocab_rejects_wrong_word_count():
    with pytest.raises(ValueError, match="8 words"):
        LabelVocab(words=("a",) * 9, categories={})


def test_vocab_rejects_unbalanced_categories():
    words = tuple("abcdefgh")
    cats = {w: ("x" if i < 5 else "y") for i, w in enumerate(words)}
    with pytest.raises(ValueError, match="4 words each"):
        LabelVocab(words=words, categories=cats)


def test_label_range_checked():
    with pytest.raises(ValueError, match="label out of range"):
        EEGTrialSet(
            data=np.zeros((2, 3, 4)),
            labels=np.array([0, 8]),
            fs=128.0,
            channel_names=["a", "b", "c"],
        )


def test_nan_data_rejected():
    data = np.zeros((2, 3, 4))
    data[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="NaN"):
        EEGTrialSet(data=data, labels=[0, 1], fs=128.0, channel_names=list("abc"))


def test_beta_set_requires_mask_match():
    mask = np.zeros((4, 4, 4), dtype=bool)
    mask[:2] = True
    with pytest.raises(ValueError, match="mask"):
        FMRIBetaSet(data=np.zeros((3, 5)), labels=[0, 1, 2], mask=mask)


def test_empty_exemplar_set_rejected(tiny_subject):
    empty = EEGTrialSet(
        data=np.zeros((0, 2, 4)), labels=np.zeros(0, int), fs=128.0,
        channel_names=["a", "b"],
    )
    with pytest.raises(ValueError, match="empty exemplar set"):
        BimodalSubject(subject_id="x", eeg=empty, fmri=tiny_subject.fmri)


def test_round_trip_exact(tmp_path, tiny_subject):
    write_dataset(tiny_subject, tmp_path / "subj")
    back = read_dataset(tmp_path / "subj")
    assert back.subject_id == tiny_subject.subject_id
    assert back.seed == tiny_subject.seed
    assert back.vocab == tiny_subject.vocab
    assert back.eeg.fs == tiny_subject.eeg.fs
    assert back.eeg.channel_names == tiny_subject.eeg.channel_names
    np.testing.assert_array_equal(back.eeg.data, tiny_subject.eeg.data)
    np.testing.assert_array_equal(back.eeg.labels, tiny_subject.eeg.labels)
    np.testing.assert_array_equal(back.fmri.data, tiny_subject.fmri.data)
    np.testing.assert_array_equal(back.fmri.mask, tiny_subject.fmri.mask)
    assert back.fmri.voxel_size_mm == tiny_subject.fmri.voxel_size_mm
    assert back.fmri.data.shape[1] == int(back.fmri.mask.sum())


def test_rewrite_is_byte_identical(tmp_path, tiny_subject):
    write_dataset(tiny_subject, tmp_path / "a")
    back = read_dataset(tmp_path / "a")
    write_dataset(back, tmp_path / "b")
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, f"{name} differs between writes"


def test_round_trip_with_raw_sections(tmp_path):
    profile = tiny_profile(seed=3, with_raw=True, n_per_class=4,
                           fmri_mode="glm", mask_shape=(6, 6, 6), n_voxels_info=8)
    subject = synthgen.generate_subject(profile)
    assert subject.raw_eeg is None  # epochs mode keeps no raw record
    assert subject.bold is not None
    write_dataset(subject, tmp_path / "s")
    back = read_dataset(tmp_path / "s")
    np.testing.assert_allclose(back.bold.data, subject.bold.data, atol=1e-6)
    assert back.bold.tr_s == subject.bold.tr_s
    assert back.bold.events == subject.bold.events


def test_read_rejects_nine_word_manifest(tmp_path, tiny_subject):
    path = tmp_path / "subj"
    write_dataset(tiny_subject, path)
    manifest = json.loads((path / "manifest.json").read_text())
    manifest["vocab"]["words"].append("extra")
    (path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="vocab must have 8 words"):
        read_dataset(path)


def test_read_detects_corruption(tmp_path, tiny_subject):
    path = tmp_path / "subj"
    write_dataset(tiny_subject, path)
    blob = bytearray((path / "fmri_data.f32").read_bytes())
    blob[0] ^= 0xFF
    (path / "fmri_data.f32").write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="checksum mismatch"):
        read_dataset(path)


def test_read_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "nowhere")


# --- fold planning ---------------------------------------------------------


def test_fold_sizes_match_the_480_160_split():
    labels = balanced_labels(80)
    plan = plan_folds(labels, 4, seed=0)
    for fold in range(4):
        assert plan.train_indices(fold).size == 480
        assert plan.test_indices(fold).size == 160


def test_folds_partition_exemplars():
    labels = balanced_labels(12, seed=5)
    plan = plan_folds(labels, 4, seed=2)
    seen = np.concatenate([plan.test_indices(f) for f in range(4)])
    assert np.array_equal(np.sort(seen), np.arange(labels.size))


def test_stratification_within_one():
    rng = np.random.default_rng(7)
    labels = rng.integers(0, 8, size=203)
    labels = np.concatenate([np.arange(8).repeat(5), labels])  # every class >= k
    plan = plan_folds(labels, 5, seed=1)
    for c in range(8):
        per_fold = [
            int(((labels == c) & (plan.assignments == f)).sum()) for f in range(5)
        ]
        assert max(per_fold) - min(per_fold) <= 1


def test_single_member_classes_rejected():
    labels = np.arange(8)
    with pytest.raises(ValueError, match="stratification impossible"):
        plan_folds(labels, 4, seed=0)


def test_fold_plan_deterministic_in_seed():
    labels = balanced_labels(8, seed=3)
    a = plan_folds(labels, 4, seed=42)
    b = plan_folds(labels, 4, seed=42)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    c = plan_folds(labels, 4, seed=43)
    assert not np.array_equal(a.assignments, c.assignments)
    # different seed still preserves per-fold class counts
    for cls in range(8):
        for f in range(4):
            n_a = int(((labels == cls) & (a.assignments == f)).sum())
            n_c = int(((labels == cls) & (c.assignments == f)).sum())
            assert n_a == n_c
