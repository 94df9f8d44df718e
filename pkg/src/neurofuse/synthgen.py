"""Synthetic bimodal subjects with independently controllable class structure.

Class means live in a latent space and are projected to sensors/voxels by
seeded orthonormal-column maps, so planted geometry survives into the
observed data (and into 2-D embeddings).  EEG trials carry a 1/f background,
a 50 Hz line contaminant and slow drift; the continuous-record variant adds
blink-like ocular artifacts on the frontal channels and mastoid reference
channels, giving the cleaning chain real work to do.  fMRI exemplars are
produced through a planted single-trial BOLD run and the GLM path by
default, or directly as beta maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import eegprep, fmriprep
from .dataio import BimodalSubject, EEGTrialSet, FMRIBetaSet, LabelVocab, N_CLASSES
from .eegprep import ContinuousEEG
from .fmriprep import BoldRun

__all__ = [
    "SubjectProfile",
    "generate_subject",
    "generate_continuous_eeg",
    "generate_bold_run",
    "build_mask",
    "regime_presets",
    "preset",
]

LINE_HZ = 50.0
LINE_AMP_FACTOR = 5.0  # line amplitude relative to the noise scale
DRIFT_AMP_FACTOR = 2.0
EOG_AMP_FACTOR = 20.0


@dataclass(frozen=True)
class SubjectProfile:
    """Knobs for one synthetic subject; defaults are desk scale."""

    n_per_class: int = 80
    eeg_sep: float = 0.0
    fmri_sep: float = 0.0
    noise_sd: float = 1.0
    latent_dim: int = 8
    n_channels: int = 64
    n_samples: int = 1024
    fs: float = 512.0
    n_voxels_info: int = 60
    mask_shape: tuple = (20, 20, 20)
    voxel_size_mm: tuple = (2.0, 2.0, 2.0)
    tr_s: float = 2.16
    task_s: float = 4.0
    rest_s: float = 10.0
    bold_noise_sd: float = None  # defaults to noise_sd
    smooth_fwhm_mm: float = 8.0
    eeg_mode: str = "epochs"  # "epochs" | "chain" (continuous + cleaning chain)
    fmri_mode: str = "glm"  # "glm" | "direct"
    with_raw: bool = False
    subject_id: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 4:
            raise ValueError("n_per_class must be >= the fold count (4)")
        if not (math.isfinite(self.eeg_sep) and self.eeg_sep >= 0):
            raise ValueError("eeg_sep must be finite and >= 0")
        if not (math.isfinite(self.fmri_sep) and self.fmri_sep >= 0):
            raise ValueError("fmri_sep must be finite and >= 0")
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")
        if self.latent_dim > min(self.n_channels, self.n_voxels_info):
            raise ValueError("latent_dim exceeds sensor/voxel dimensions")
        if self.eeg_mode not in ("epochs", "chain"):
            raise ValueError(f"unknown eeg_mode {self.eeg_mode!r}")
        if self.fmri_mode not in ("glm", "direct"):
            raise ValueError(f"unknown fmri_mode {self.fmri_mode!r}")

    @property
    def bold_noise(self):
        return self.noise_sd if self.bold_noise_sd is None else self.bold_noise_sd


def _streams(seed):
    """Named independent substreams so every block is seed-deterministic."""
    names = ("structure", "eeg_noise", "fmri_noise", "eeg_order", "fmri_order", "eog")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def _orthonormal_columns(rng, n_rows, n_cols):
    q, _ = np.linalg.qr(rng.normal(size=(n_rows, n_cols)))
    return q[:, :n_cols]


def _class_means(rng, sep, latent_dim):
    """8 latent class means with RMS pairwise distance equal to ``sep``."""
    m = rng.normal(size=(N_CLASSES, latent_dim))
    m -= m.mean(axis=0)
    d2 = ((m[:, None, :] - m[None, :, :]) ** 2).sum(-1)
    rms = np.sqrt(d2[np.triu_indices(N_CLASSES, 1)].mean())
    return m * (sep / rms) if rms > 0 else m * 0.0


def _pink_noise(rng, n_channels, n_samples):
    """1/f-shaped noise, unit RMS per channel."""
    white = rng.normal(size=(n_channels, n_samples))
    spec = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n_samples)
    freqs[0] = freqs[1] if n_samples > 1 else 1.0
    pink = np.fft.irfft(spec / np.sqrt(freqs), n=n_samples, axis=-1)
    return pink / pink.std(axis=-1, keepdims=True)


def _label_sequence(rng, n_per_class):
    labels = np.repeat(np.arange(N_CLASSES), n_per_class)
    rng.shuffle(labels)
    return labels


def _channel_names(n):
    names = ["Fp1", "Fp2"] + [f"ch{i:02d}" for i in range(2, n)]
    return names[:n]


def build_mask(mask_shape):
    """Spherical brain mask centred in the volume (~3000 voxels at 20^3)."""
    grid = np.indices(mask_shape)
    center = [(s - 1) / 2.0 for s in mask_shape]
    r = 0.45 * min(mask_shape)
    dist2 = sum((g - c) ** 2 for g, c in zip(grid, center))
    return dist2 <= r * r


def _informative_voxels(mask, n_info):
    """The n_info in-mask voxels nearest the volume centre (a compact blob,
    so Gaussian smoothing keeps planted signal together)."""
    grid = np.indices(mask.shape)
    center = [(s - 1) / 2.0 for s in mask.shape]
    dist2 = sum((g - c) ** 2 for g, c in zip(grid, center))
    flat_order = np.flatnonzero(mask.ravel())
    if n_info > flat_order.size:
        raise ValueError("n_voxels_info exceeds mask size")
    order = np.argsort(dist2.ravel()[flat_order], kind="stable")
    return np.sort(order[:n_info])  # positions within the masked vector


def _eeg_trial_background(rng, n_channels, n_samples, fs, noise_sd):
    t = np.arange(n_samples) / fs
    white = rng.normal(0.0, noise_sd, size=(n_channels, n_samples))
    pink = noise_sd * _pink_noise(rng, n_channels, n_samples)
    phase = rng.uniform(0, 2 * np.pi)
    line = LINE_AMP_FACTOR * noise_sd * np.sin(2 * np.pi * LINE_HZ * t + phase)
    slope = rng.normal(0.0, DRIFT_AMP_FACTOR * noise_sd, size=(n_channels, 1))
    drift = slope * np.linspace(-0.5, 0.5, n_samples)
    return white + pink + line + drift


def generate_eeg_trials(profile, labels, streams):
    """Direct epoched EEG: planted class signal plus structured background."""
    p = profile
    means = _class_means(streams["structure"], p.eeg_sep, p.latent_dim)
    mixing = _orthonormal_columns(streams["structure"], p.n_channels, p.latent_dim)
    env = np.hanning(p.n_samples)
    rng = streams["eeg_noise"]
    data = np.empty((labels.size, p.n_channels, p.n_samples), dtype=np.float32)
    for i, c in enumerate(labels):
        signal = np.outer(mixing @ means[c], env)
        data[i] = signal + _eeg_trial_background(
            rng, p.n_channels, p.n_samples, p.fs, p.noise_sd
        )
    return EEGTrialSet(
        data=data, labels=labels, fs=p.fs, channel_names=_channel_names(p.n_channels)
    )


def _blink_source(rng, n_total, fs):
    """Sparse super-Gaussian blink train (~0.25 blinks/s, ~300 ms bumps)."""
    src = np.zeros(n_total)
    width = max(int(0.3 * fs), 3)
    bump = np.hanning(width) ** 2
    n_blinks = max(1, int(0.25 * n_total / fs))
    starts = rng.integers(0, max(n_total - width, 1), size=n_blinks)
    for s in starts:
        src[s : s + width] += bump[: n_total - s]
    return src


def generate_continuous_eeg(profile, labels=None):
    """Continuous record for the full cleaning chain.

    Layout per trial: 1 s fixation, 2 s inner speech (event marked at
    onset), 1 s rest.  Channels: the data channels plus mastoid references
    M1/M2; all data channels share a common reference contamination that
    re-referencing cancels, and a blink source is mixed into the two
    frontal channels for ICA to find.
    """
    p = profile
    streams = _streams(p.seed)
    if labels is None:
        labels = _label_sequence(streams["eeg_order"], p.n_per_class)
    epoch_s = p.n_samples / p.fs
    trial_s = 1.0 + epoch_s + 1.0
    lead = int(2.0 * p.fs)
    n_total = lead + int(round(labels.size * trial_s * p.fs)) + int(2.0 * p.fs)

    means = _class_means(streams["structure"], p.eeg_sep, p.latent_dim)
    mixing = _orthonormal_columns(streams["structure"], p.n_channels, p.latent_dim)
    env = np.hanning(p.n_samples)
    rng = streams["eeg_noise"]

    data = rng.normal(0.0, p.noise_sd, size=(p.n_channels, n_total))
    data += p.noise_sd * _pink_noise(rng, p.n_channels, n_total)
    t = np.arange(n_total) / p.fs
    data += LINE_AMP_FACTOR * p.noise_sd * np.sin(2 * np.pi * LINE_HZ * t)
    for k in range(3):  # slow drift well below the 1 Hz high-pass corner
        f = 0.03 * (k + 1)
        amp = rng.normal(0.0, DRIFT_AMP_FACTOR * p.noise_sd, size=(p.n_channels, 1))
        data += amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))

    events = []
    for i, c in enumerate(labels):
        onset = lead + int(round((i * trial_s + 1.0) * p.fs))
        events.append((onset, int(c)))
        data[:, onset : onset + p.n_samples] += np.outer(mixing @ means[c], env)

    eog = EOG_AMP_FACTOR * p.noise_sd * _blink_source(streams["eog"], n_total, p.fs)
    data[0] += eog
    data[1] += 0.9 * eog

    common = 3.0 * p.noise_sd * _pink_noise(rng, 1, n_total)[0]
    data += common
    m1 = common + 0.2 * p.noise_sd * rng.normal(size=n_total)
    m2 = common + 0.2 * p.noise_sd * rng.normal(size=n_total)

    return ContinuousEEG(
        data=np.vstack([data, m1, m2]),
        fs=p.fs,
        channel_names=_channel_names(p.n_channels) + ["M1", "M2"],
        events=events,
    )


def generate_bold_run(profile, labels=None):
    """BOLD run with planted single-trial responses; returns (run, mask).

    Trial i activates the informative-voxel pattern of its class through the
    canonical HRF; smooth motion nuisance series leak into all in-mask
    voxels and are reported in ``run.motion``.
    """
    p = profile
    streams = _streams(p.seed)
    if labels is None:
        labels = _label_sequence(streams["fmri_order"], p.n_per_class)
    mask = build_mask(p.mask_shape)
    n_mask = int(mask.sum())
    info = _informative_voxels(mask, p.n_voxels_info)

    means = _class_means(streams["structure"], p.fmri_sep, p.latent_dim)
    mixing = _orthonormal_columns(streams["structure"], p.n_voxels_info, p.latent_dim)
    patterns = np.zeros((N_CLASSES, n_mask))
    patterns[:, info] = means @ mixing.T

    lead = p.rest_s
    onsets = lead + np.arange(labels.size) * (p.task_s + p.rest_s)
    events = [(float(o), float(p.task_s), int(c)) for o, c in zip(onsets, labels)]
    n_scans = int(np.ceil((onsets[-1] + p.task_s + 32.0) / p.tr_s))

    design = fmriprep.build_design(events, n_scans, p.tr_s)
    X_trials = design.matrix[:, design.trial_columns()]  # scans x trials

    rng = streams["fmri_noise"]
    motion = np.cumsum(rng.normal(0.0, 1.0, size=(n_scans, 6)), axis=0)
    motion -= motion.mean(axis=0)
    motion /= np.maximum(motion.std(axis=0), 1e-12)
    loadings = rng.normal(0.0, 0.3 * p.bold_noise, size=(6, n_mask))

    y_masked = X_trials @ patterns[labels]
    y_masked += motion @ loadings
    y_masked += rng.normal(0.0, p.bold_noise, size=(n_scans, n_mask))

    vol = rng.normal(0.0, p.bold_noise, size=mask.shape + (n_scans,))
    vol[mask] = y_masked.T
    run = BoldRun(data=vol, tr_s=p.tr_s, events=events, motion=motion)
    return run, mask


def _direct_beta_set(profile, labels, streams):
    p = profile
    mask = build_mask(p.mask_shape)
    n_mask = int(mask.sum())
    info = _informative_voxels(mask, p.n_voxels_info)
    means = _class_means(streams["structure"], p.fmri_sep, p.latent_dim)
    mixing = _orthonormal_columns(streams["structure"], p.n_voxels_info, p.latent_dim)
    patterns = np.zeros((N_CLASSES, n_mask))
    patterns[:, info] = means @ mixing.T
    rng = streams["fmri_noise"]
    data = patterns[labels] + rng.normal(0.0, p.noise_sd, size=(labels.size, n_mask))
    return FMRIBetaSet(
        data=data, labels=labels, mask=mask, voxel_size_mm=p.voxel_size_mm
    )


def generate_subject(profile):
    """Generate a full bimodal subject from a profile; pure in the profile."""
    p = profile
    streams = _streams(p.seed)
    eeg_labels = _label_sequence(streams["eeg_order"], p.n_per_class)
    fmri_labels = _label_sequence(streams["fmri_order"], p.n_per_class)

    raw = None
    if p.eeg_mode == "chain":
        raw = generate_continuous_eeg(p, labels=eeg_labels)
        epoch_s = p.n_samples / p.fs
        eeg = eegprep.preprocess(raw, seed=p.seed, tmin_s=0.0, tmax_s=epoch_s)
    else:
        eeg = generate_eeg_trials(p, eeg_labels, streams)

    bold = None
    if p.fmri_mode == "glm":
        bold, mask = generate_bold_run(p, labels=fmri_labels)
        volumes = fmriprep.estimate_betas(bold)
        if p.smooth_fwhm_mm > 0:
            volumes = fmriprep.smooth_betas(volumes, p.smooth_fwhm_mm, p.voxel_size_mm)
        fmri = fmriprep.apply_mask(volumes, mask, p.voxel_size_mm)
    else:
        fmri = _direct_beta_set(p, fmri_labels, streams)

    return BimodalSubject(
        subject_id=p.subject_id or f"synth-seed{p.seed}",
        eeg=eeg,
        fmri=fmri,
        vocab=LabelVocab(),
        seed=p.seed,
        raw_eeg=raw if p.with_raw else None,
        bold=bold if p.with_raw else None,
    )


# Regime presets mirror the three qualitative data regimes: no structure in
# either modality, structure in fMRI only, structure in both.
_PRESETS = {
    "none": dict(eeg_sep=0.0, fmri_sep=0.0),
    "fmri_only": dict(eeg_sep=0.0, fmri_sep=3.0),
    "both": dict(eeg_sep=3.0, fmri_sep=3.0),
}


def regime_presets():
    """Named profiles for the three class-structure regimes."""
    return {name: SubjectProfile(**kw) for name, kw in _PRESETS.items()}


def preset(name, **overrides):
    """A regime preset with field overrides applied."""
    try:
        base = regime_presets()[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None
    return replace(base, **overrides) if overrides else base
