"""Portable on-disk bimodal dataset container, label vocabulary and fold planning.

A subject lives in one directory: a JSON manifest plus one raw binary per
array (little-endian float32 for tensors, little-endian int32 for labels,
C order).  Every binary is checksummed so truncated multi-hundred-MB voxel
matrices are caught at read time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DEFAULT_WORDS",
    "DEFAULT_CATEGORIES",
    "LabelVocab",
    "EEGTrialSet",
    "FMRIBetaSet",
    "BimodalSubject",
    "FoldPlan",
    "plan_folds",
    "write_dataset",
    "read_dataset",
]

N_CLASSES = 8

DEFAULT_WORDS = ("four", "three", "ten", "six", "daughter", "father", "wife", "child")
DEFAULT_CATEGORIES = {
    "four": "numbers",
    "three": "numbers",
    "ten": "numbers",
    "six": "numbers",
    "daughter": "social",
    "father": "social",
    "wife": "social",
    "child": "social",
}


@dataclass(frozen=True)
class LabelVocab:
    """Fixed 8-word vocabulary; word order defines class indices 0-7."""

    words: tuple = DEFAULT_WORDS
    categories: dict = field(default_factory=lambda: dict(DEFAULT_CATEGORIES))

    def __post_init__(self):
        if len(self.words) != N_CLASSES:
            raise ValueError("vocab must have 8 words")
        if len(set(self.words)) != N_CLASSES:
            raise ValueError("vocab words must be distinct")
        cats = {}
        for w in self.words:
            if w not in self.categories:
                raise ValueError(f"word {w!r} has no category")
            cats.setdefault(self.categories[w], []).append(w)
        if len(cats) != 2 or any(len(v) != 4 for v in cats.values()):
            raise ValueError("vocab needs exactly 2 categories with 4 words each")

    def index(self, word):
        return self.words.index(word)


def _as_labels(labels):
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D vector")
    if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
        raise ValueError("label out of range [0, 8)")
    return labels


def _check_finite(arr, name):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")


@dataclass
class EEGTrialSet:
    """Epoched EEG: trials x channels x samples, float32."""

    data: np.ndarray
    labels: np.ndarray
    fs: float
    channel_names: list

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.labels = _as_labels(self.labels)
        if self.data.ndim != 3:
            raise ValueError("EEG data must be trials x channels x samples")
        if self.data.shape[0] != self.labels.size:
            raise ValueError("EEG trials/labels length mismatch")
        if self.data.shape[1] != len(self.channel_names):
            raise ValueError("EEG channels/names length mismatch")
        if self.fs <= 0:
            raise ValueError("sampling rate must be positive")
        _check_finite(self.data, "EEG data")

    @property
    def n_trials(self):
        return self.data.shape[0]


@dataclass
class FMRIBetaSet:
    """Per-trial beta maps flattened through a brain mask: trials x voxels."""

    data: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    voxel_size_mm: tuple = (2.0, 2.0, 2.0)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.labels = _as_labels(self.labels)
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        self.voxel_size_mm = tuple(float(v) for v in self.voxel_size_mm)
        if self.data.ndim != 2:
            raise ValueError("beta data must be trials x voxels")
        if self.mask.ndim != 3:
            raise ValueError("mask must be a 3-D volume")
        if self.data.shape[0] != self.labels.size:
            raise ValueError("fMRI trials/labels length mismatch")
        if self.data.shape[1] != int(self.mask.sum()):
            raise ValueError("n_voxels != number of true mask voxels")
        if len(self.voxel_size_mm) != 3:
            raise ValueError("voxel_size_mm must have 3 entries")
        _check_finite(self.data, "beta data")

    @property
    def n_trials(self):
        return self.data.shape[0]


@dataclass
class BimodalSubject:
    """Paired EEG/fMRI exemplar sets sharing one vocabulary.

    ``raw_eeg`` and ``bold`` are optional precursors (continuous EEG record,
    BOLD run) carried alongside the exemplar sets so the preprocessing CLI
    can re-derive trials/betas from them.
    """

    subject_id: str
    eeg: EEGTrialSet
    fmri: FMRIBetaSet
    vocab: LabelVocab = field(default_factory=LabelVocab)
    seed: int = 0
    raw_eeg: object = None
    bold: object = None

    def __post_init__(self):
        if self.eeg.n_trials == 0 or self.fmri.n_trials == 0:
            raise ValueError("empty exemplar set")

    def class_counts(self):
        """Per-class trial counts, one row per modality."""
        return (
            np.bincount(self.eeg.labels, minlength=N_CLASSES),
            np.bincount(self.fmri.labels, minlength=N_CLASSES),
        )


# ---------------------------------------------------------------------------
# fold planning


@dataclass(frozen=True)
class FoldPlan:
    """Stratified assignment of exemplars to test folds."""

    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold):
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold):
        return np.flatnonzero(self.assignments != fold)


def plan_folds(labels, k, seed):
    """Stratified k-fold plan, a pure function of (labels, k, seed).

    Each class is shuffled with the seeded generator, then dealt onto folds
    in a running rotation so per-class counts across folds differ by at most
    one and global fold sizes stay balanced.
    """
    labels = _as_labels(labels)
    if k < 2:
        raise ValueError("fold count must be >= 2")
    counts = np.bincount(labels, minlength=N_CLASSES)
    short = np.flatnonzero((counts > 0) & (counts < k))
    if short.size:
        raise ValueError(
            f"stratification impossible: class {short[0]} has "
            f"{counts[short[0]]} members < k={k}"
        )
    rng = np.random.default_rng(seed)
    assignments = np.empty(labels.size, dtype=np.int32)
    offset = 0
    for c in np.flatnonzero(counts):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        assignments[idx] = (np.arange(idx.size) + offset) % k
        offset = (offset + idx.size) % k
    return FoldPlan(k=int(k), assignments=assignments, seed=int(seed))


# ---------------------------------------------------------------------------
# container I/O

_MANIFEST = "manifest.json"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_raw(path, arr, dtype):
    np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tofile(path)


def _read_raw(path, dtype, shape):
    arr = np.fromfile(path, dtype=np.dtype(dtype).newbyteorder("<"))
    fixed = [d for d in shape if d != -1]
    expected = int(np.prod(fixed)) if fixed else 1
    if -1 in tuple(shape):
        if expected == 0 or arr.size % expected:
            raise ValueError(f"{Path(path).name}: size {arr.size} incompatible with shape {shape}")
    elif arr.size != expected:
        raise ValueError(f"{Path(path).name}: expected {expected} values, got {arr.size}")
    return arr.astype(dtype, copy=False).reshape(shape)


def write_dataset(subject, path):
    """Write ``subject`` into directory ``path``; returns the manifest path.

    Layout: one JSON manifest plus raw little-endian binaries (float32
    tensors, int32 labels).  Re-writing a read-back subject is byte
    identical.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    eeg, fmri = subject.eeg, subject.fmri
    if eeg.n_trials == 0 or fmri.n_trials == 0:
        raise ValueError("empty exemplar set")

    files = {
        "eeg_data.f32": (eeg.data, np.float32),
        "fmri_data.f32": (fmri.data, np.float32),
        "mask.f32": (fmri.mask.astype(np.float32), np.float32),
        "eeg_labels.i32": (eeg.labels, np.int32),
        "fmri_labels.i32": (fmri.labels, np.int32),
    }
    manifest = {
        "subject_id": subject.subject_id,
        "seed": int(subject.seed),
        "vocab": {
            "words": list(subject.vocab.words),
            "categories": dict(subject.vocab.categories),
        },
        "eeg": {
            "file": "eeg_data.f32",
            "shape": list(eeg.data.shape),
            "fs_hz": float(eeg.fs),
            "channel_names": list(eeg.channel_names),
        },
        "fmri": {
            "file": "fmri_data.f32",
            "shape": list(fmri.data.shape),
            "mask_file": "mask.f32",
            "mask_shape": list(fmri.mask.shape),
            "voxel_size_mm": list(fmri.voxel_size_mm),
        },
        "labels": {"eeg_file": "eeg_labels.i32", "fmri_file": "fmri_labels.i32"},
    }

    if subject.raw_eeg is not None:
        raw = subject.raw_eeg
        ev = np.asarray([(s, c) for s, c in raw.events], dtype=np.int32).reshape(-1, 2)
        files["raw_eeg.f32"] = (raw.data, np.float32)
        files["raw_eeg_events.i32"] = (ev, np.int32)
        manifest["raw_eeg"] = {
            "file": "raw_eeg.f32",
            "shape": list(np.asarray(raw.data).shape),
            "fs_hz": float(raw.fs),
            "channel_names": list(raw.channel_names),
            "events_file": "raw_eeg_events.i32",
        }
    if subject.bold is not None:
        bold = subject.bold
        ev = np.asarray(
            [(o, d, c) for o, d, c in bold.events], dtype=np.float32
        ).reshape(-1, 3)
        files["bold.f32"] = (bold.data, np.float32)
        files["bold_events.f32"] = (ev, np.float32)
        files["bold_motion.f32"] = (bold.motion, np.float32)
        manifest["bold"] = {
            "file": "bold.f32",
            "shape": list(np.asarray(bold.data).shape),
            "tr_s": float(bold.tr_s),
            "events_file": "bold_events.f32",
            "motion_file": "bold_motion.f32",
        }

    for section in ("eeg", "fmri"):
        arr = files[manifest[section]["file"]][0]
        if list(arr.shape) != manifest[section]["shape"]:
            raise ValueError(f"{section}: tensor/manifest shape mismatch")

    checksums = {}
    for name, (arr, dtype) in files.items():
        _write_raw(path / name, arr, dtype)
        checksums[name] = _sha256(path / name)

    manifest["checksums"] = checksums
    manifest_path = path / _MANIFEST
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path


def read_dataset(path):
    """Read a subject container, validating checksums and all invariants."""
    path = Path(path)
    manifest_path = path / _MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing manifest: {manifest_path}")
    with open(manifest_path) as f:
        manifest = json.load(f)

    for name, expected in manifest.get("checksums", {}).items():
        target = path / name
        if not target.exists():
            raise FileNotFoundError(f"missing file: {target}")
        actual = _sha256(target)
        if actual != expected:
            raise ValueError(f"checksum mismatch for {name}")

    vocab = LabelVocab(
        words=tuple(manifest["vocab"]["words"]),
        categories=dict(manifest["vocab"]["categories"]),
    )

    m_eeg = manifest["eeg"]
    eeg = EEGTrialSet(
        data=_read_raw(path / m_eeg["file"], np.float32, m_eeg["shape"]),
        labels=_read_raw(path / manifest["labels"]["eeg_file"], np.int32, (m_eeg["shape"][0],)),
        fs=float(m_eeg["fs_hz"]),
        channel_names=list(m_eeg["channel_names"]),
    )
    m_fmri = manifest["fmri"]
    mask = _read_raw(path / m_fmri["mask_file"], np.float32, m_fmri["mask_shape"]) != 0.0
    fmri = FMRIBetaSet(
        data=_read_raw(path / m_fmri["file"], np.float32, m_fmri["shape"]),
        labels=_read_raw(path / manifest["labels"]["fmri_file"], np.int32, (m_fmri["shape"][0],)),
        mask=mask,
        voxel_size_mm=tuple(m_fmri["voxel_size_mm"]),
    )

    raw_eeg = None
    if "raw_eeg" in manifest:
        from .eegprep import ContinuousEEG

        m = manifest["raw_eeg"]
        ev = _read_raw(path / m["events_file"], np.int32, (-1, 2))
        raw_eeg = ContinuousEEG(
            data=_read_raw(path / m["file"], np.float32, m["shape"]).astype(np.float64),
            fs=float(m["fs_hz"]),
            channel_names=list(m["channel_names"]),
            events=[(int(s), int(c)) for s, c in ev],
        )
    bold = None
    if "bold" in manifest:
        from .fmriprep import BoldRun

        m = manifest["bold"]
        ev = _read_raw(path / m["events_file"], np.float32, (-1, 3))
        bold = BoldRun(
            data=_read_raw(path / m["file"], np.float32, m["shape"]).astype(np.float64),
            tr_s=float(m["tr_s"]),
            events=[(float(o), float(d), int(c)) for o, d, c in ev],
            motion=_read_raw(path / m["motion_file"], np.float32, (m["shape"][3], 6)).astype(np.float64),
        )

    return BimodalSubject(
        subject_id=manifest["subject_id"],
        eeg=eeg,
        fmri=fmri,
        vocab=vocab,
        seed=int(manifest["seed"]),
        raw_eeg=raw_eeg,
        bold=bold,
    )
