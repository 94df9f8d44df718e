"""EEG cleaning chain: mastoid re-reference, zero-phase high-pass, notch bank
at the line frequency and its harmonics, two-pass ICA ocular-artifact removal,
and epoching.

The two-pass arrangement avoids double filtering: ICA weights are fitted on a
filtered (sanitized) copy, then applied to the record as it was at the point
of re-referencing; the band filters run once more afterwards.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal
from sklearn.decomposition import FastICA
from sklearn.exceptions import ConvergenceWarning

from .dataio import EEGTrialSet

__all__ = [
    "ContinuousEEG",
    "ICADecomposition",
    "rereference",
    "highpass",
    "notch_bank",
    "fit_ica",
    "remove_eog",
    "epoch",
    "preprocess",
    "highpass_array",
    "notch_bank_array",
    "notch_frequencies",
]


@dataclass
class ContinuousEEG:
    """Continuous multichannel record with event markers.

    ``history`` accumulates one tag per cleaning operation, so the pipeline
    order contract can be asserted on provenance alone.
    """

    data: np.ndarray
    fs: float
    channel_names: list
    events: list = field(default_factory=list)
    history: tuple = ()

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("continuous data must be channels x samples")
        if self.data.shape[0] != len(self.channel_names):
            raise ValueError("channel count does not match channel_names")
        if self.fs <= 0:
            raise ValueError("sampling rate must be positive")
        n = self.data.shape[1]
        for sample, _ in self.events:
            if not 0 <= sample < n:
                raise ValueError(f"event sample {sample} outside record")

    def channel_index(self, name):
        try:
            return self.channel_names.index(name)
        except ValueError:
            raise KeyError(f"unknown channel name {name!r}") from None

    def drop_channels(self, names):
        keep = [i for i, n in enumerate(self.channel_names) if n not in set(names)]
        return replace(
            self,
            data=self.data[keep],
            channel_names=[self.channel_names[i] for i in keep],
            history=self.history + (f"drop({','.join(names)})",),
        )


def rereference(x, ref_channels):
    """Subtract the mean of the named reference channels from every channel."""
    idx = [x.channel_index(n) for n in ref_channels]
    ref = x.data[idx].mean(axis=0)
    return replace(x, data=x.data - ref, history=x.history + ("rereference",))


def highpass_array(data, fs, cutoff_hz, order=4):
    """Zero-phase Butterworth high-pass along the last axis."""
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, fs/2)")
    sos = signal.butter(order, cutoff_hz, btype="highpass", fs=fs, output="sos")
    return signal.sosfiltfilt(sos, data, axis=-1)


def highpass(x, cutoff_hz=1.0):
    return replace(
        x,
        data=highpass_array(x.data, x.fs, cutoff_hz),
        history=x.history + ("highpass",),
    )


def notch_frequencies(base_hz, fs):
    """Every multiple of the base frequency strictly below Nyquist."""
    if not 0 < base_hz < fs / 2:
        raise ValueError(f"notch base {base_hz} Hz outside (0, fs/2)")
    freqs = []
    f = base_hz
    while f < fs / 2:
        freqs.append(f)
        f += base_hz
    return freqs


def notch_bank_array(data, fs, base_hz, q=30.0):
    """Cascaded zero-phase IIR notches at the base frequency and harmonics."""
    out = np.asarray(data, dtype=np.float64)
    for f in notch_frequencies(base_hz, fs):
        b, a = signal.iirnotch(f, q, fs=fs)
        out = signal.filtfilt(b, a, out, axis=-1)
    return out


def notch_bank(x, base_hz=50.0, q=30.0):
    return replace(
        x,
        data=notch_bank_array(x.data, x.fs, base_hz, q),
        history=x.history + ("notch_bank",),
    )


@dataclass
class ICADecomposition:
    """Unmixing/mixing pair with per-component ocular-artifact scores."""

    unmixing: np.ndarray  # components x channels
    mixing: np.ndarray  # channels x components
    component_scores: np.ndarray
    n_iter: int
    converged: bool
    fit_history: tuple = ()  # provenance of the record the weights came from

    @property
    def n_components(self):
        return self.unmixing.shape[0]

    def sources(self, data):
        """Component time courses of a (channels x samples) record."""
        mean = data.mean(axis=1, keepdims=True)
        return self.unmixing @ (data - mean), mean


def _frontal_template(x, frontal_channels):
    if frontal_channels is None:
        frontal = [n for n in x.channel_names if n.lower().startswith("fp")][:2]
        if len(frontal) < 2:
            frontal = x.channel_names[:2]
        frontal_channels = frontal
    idx = [x.channel_index(n) for n in frontal_channels]
    return x.data[idx].mean(axis=0)


def fit_ica(x, seed, frontal_channels=None, template=None, max_iter=200, tol=1e-4):
    """Fixed-point negentropy ICA of a (high-passed) record.

    Components are scored for ocular-artifact likeness by absolute
    correlation between their time course and ``template`` (default: the
    mean of the two most frontal channels of the record).  The scorer is a
    plain ranking hook; swap ``template`` for any other reference signal.

    Rank-deficient records keep only as many components as the data rank,
    so silent or duplicated channels cannot blow up the whitening step.
    """
    centered = x.data - x.data.mean(axis=1, keepdims=True)
    sv = np.linalg.svd(centered, compute_uv=False)
    rank = int((sv > sv[0] * 1e-10).sum()) if sv.size else 0
    if rank < 1:
        raise ValueError("record has no variance to decompose")

    def _make():
        return FastICA(
            n_components=rank,
            algorithm="parallel",
            whiten="unit-variance",
            fun="logcosh",
            max_iter=max_iter,
            tol=tol,
            random_state=int(seed),
        )

    ica = _make()
    converged = True
    with np.errstate(invalid="ignore", divide="ignore"):
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConvergenceWarning)
            try:
                sources = ica.fit_transform(x.data.T).T
            except ConvergenceWarning:
                converged = False
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    ica = _make()
                    sources = ica.fit_transform(x.data.T).T
    if not converged:
        warnings.warn(
            f"ICA did not converge within {max_iter} iterations "
            f"(ran {ica.n_iter_}); proceeding with current estimate",
            RuntimeWarning,
            stacklevel=2,
        )

    if template is None:
        template = _frontal_template(x, frontal_channels)
    template = np.asarray(template, dtype=np.float64)
    t = template - template.mean()
    t_norm = np.linalg.norm(t)
    scores = np.zeros(sources.shape[0])
    for k, s in enumerate(sources):
        s = s - s.mean()
        denom = np.linalg.norm(s) * t_norm
        scores[k] = abs(float(np.dot(s, t)) / denom) if denom > 0 else 0.0

    return ICADecomposition(
        unmixing=np.asarray(ica.components_, dtype=np.float64),
        mixing=np.asarray(ica.mixing_, dtype=np.float64),
        component_scores=scores,
        n_iter=int(ica.n_iter_),
        converged=converged,
        fit_history=tuple(x.history),
    )


def remove_eog(x_target, ica, n_remove=1):
    """Zero the top ``n_remove`` artifact-ranked components of a record.

    The decomposition may come from a differently filtered copy of the same
    recording (weight transfer); the target's own channel means are used for
    centering and restored after reconstruction.
    """
    if n_remove >= ica.n_components:
        raise ValueError(
            f"cannot remove {n_remove} of {ica.n_components} components"
        )
    sources, mean = ica.sources(x_target.data)
    if n_remove > 0:
        worst = np.argsort(ica.component_scores)[::-1][:n_remove]
        sources = sources.copy()
        sources[worst] = 0.0
    cleaned = ica.mixing @ sources + mean
    return replace(
        x_target,
        data=cleaned,
        history=x_target.history + (f"remove_eog({n_remove})",),
    )


def epoch(x, tmin_s=0.0, tmax_s=2.0):
    """Cut one trial per event over the window [tmin, tmax) around onset."""
    if tmax_s <= tmin_s:
        raise ValueError("tmax must exceed tmin")
    n_win = int(round((tmax_s - tmin_s) * x.fs))
    offset = int(round(tmin_s * x.fs))
    n_total = x.data.shape[1]
    trials, labels = [], []
    for sample, cls in x.events:
        start = sample + offset
        if start < 0 or start + n_win > n_total:
            raise ValueError(
                f"epoch window [{start}, {start + n_win}) out of record bounds"
            )
        trials.append(x.data[:, start : start + n_win])
        labels.append(cls)
    if not trials:
        raise ValueError("record has no events to epoch")
    return EEGTrialSet(
        data=np.stack(trials),
        labels=np.asarray(labels),
        fs=x.fs,
        channel_names=list(x.channel_names),
    )


# provenance contracts: weights are fitted on the filtered (sanitized) copy,
# component removal is applied to the copy taken at re-referencing, and the
# band filters run once afterwards -- never twice on the same lineage.
SANITIZED_CHAIN = ("rereference", "drop", "highpass", "notch_bank")
FINAL_CHAIN = ("rereference", "drop", "remove_eog", "highpass", "notch_bank")


def _tags(history):
    return tuple(t.split("(")[0] for t in history)


def preprocess(
    raw,
    ref_channels=("M1", "M2"),
    hp_hz=1.0,
    notch_hz=50.0,
    n_remove=1,
    seed=0,
    tmin_s=0.0,
    tmax_s=2.0,
    max_iter=200,
):
    """Full cleaning chain from a continuous record to an epoched trial set.

    Order: re-reference -> filters -> ICA on the sanitized copy -> component
    removal applied to the re-referenced copy -> filters again -> epoching.
    Raises if the provenance tags of either lineage violate the contract.
    """
    referenced = rereference(raw, ref_channels).drop_channels(ref_channels)
    sanitized = notch_bank(highpass(referenced, hp_hz), notch_hz)
    ica = fit_ica(
        sanitized, seed, template=_frontal_template(referenced, None),
        max_iter=max_iter,
    )
    cleaned = remove_eog(referenced, ica, n_remove)
    final = notch_bank(highpass(cleaned, hp_hz), notch_hz)

    if _tags(ica.fit_history) != SANITIZED_CHAIN:
        raise RuntimeError(f"ICA fitted on wrong lineage: {ica.fit_history}")
    if _tags(final.history) != FINAL_CHAIN:
        raise RuntimeError(f"pipeline order violated: {final.history}")
    return epoch(final, tmin_s, tmax_s)
