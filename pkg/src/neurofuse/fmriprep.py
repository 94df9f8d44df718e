"""Single-trial GLM beta estimation: canonical HRF regressors, per-voxel OLS,
Gaussian volume smoothing and mask flattening.

Volume registration (motion/slice-time correction, normalization) is out of
scope; motion parameters arrive as precomputed nuisance regressors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, ndimage
from scipy.stats import gamma as gamma_dist

from .dataio import FMRIBetaSet

__all__ = [
    "BoldRun",
    "DesignMatrix",
    "BetaVolumes",
    "canonical_hrf",
    "build_design",
    "estimate_betas",
    "smooth_volume",
    "smooth_betas",
    "apply_mask",
    "unmask",
]

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass
class BoldRun:
    """4-D BOLD series with trial events and nuisance motion regressors."""

    data: np.ndarray  # X x Y x Z x n_scans
    tr_s: float
    events: list  # (onset_s, duration_s, class_index)
    motion: np.ndarray = None  # n_scans x 6, may be zeros

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ValueError("BOLD data must be X x Y x Z x scans")
        if self.tr_s <= 0:
            raise ValueError("repetition time must be positive")
        if self.motion is None:
            self.motion = np.zeros((self.n_scans, 6))
        self.motion = np.asarray(self.motion, dtype=np.float64)
        if self.motion.shape[0] != self.n_scans:
            raise ValueError("motion rows must match scan count")
        duration = self.n_scans * self.tr_s
        for onset, dur, _ in self.events:
            if onset < 0 or onset + dur > duration:
                raise ValueError(f"event ({onset}s + {dur}s) outside run of {duration}s")

    @property
    def n_scans(self):
        return self.data.shape[3]


@dataclass
class DesignMatrix:
    """Scan-by-regressor design; one column per trial, nuisance, intercept last."""

    matrix: np.ndarray
    column_roles: list

    @property
    def n_trials(self):
        return sum(r.startswith("trial:") for r in self.column_roles)

    def trial_columns(self):
        return [i for i, r in enumerate(self.column_roles) if r.startswith("trial:")]


def canonical_hrf(dt_s, duration_s=32.0, peak_s=6.0, undershoot_s=16.0,
                  ratio=1.0 / 6.0, dispersion=1.0):
    """Double-gamma haemodynamic response sampled on [0, duration) at dt.

    Each lobe is a gamma density whose mode sits at the stated delay
    (shape = delay/dispersion + 1, scale = dispersion), so the kernel peaks
    at ``peak_s``; the undershoot is scaled by ``ratio``.  Peak-normalized
    to 1.
    """
    if dt_s <= 0:
        raise ValueError("dt must be positive")
    t = np.arange(0.0, duration_s, dt_s)
    pos = gamma_dist.pdf(t, peak_s / dispersion + 1.0, scale=dispersion)
    neg = gamma_dist.pdf(t, undershoot_s / dispersion + 1.0, scale=dispersion)
    h = pos - ratio * neg
    return h / h.max()


def _rank_check(matrix, roles):
    rank = np.linalg.matrix_rank(matrix)
    if rank < matrix.shape[1]:
        _, r, piv = linalg.qr(matrix, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        bad = np.sort(piv[rank:]) if diag.size else []
        names = [roles[i] for i in bad]
        raise ValueError(
            f"design matrix rank deficient ({rank}/{matrix.shape[1]}); "
            f"offending columns: {names}"
        )


def build_design(events, n_scans, tr_s, motion=None, oversample=16):
    """Least-squares-all single-trial design.

    One column per trial (boxcar convolved with the canonical HRF on a grid
    of tr/oversample, sampled at scan onsets), then any non-zero motion
    regressors, then the intercept.  Identically zero motion columns are
    dropped (placeholder motion is allowed to be all zeros).
    """
    events = list(events)
    if not events:
        raise ValueError("no events to model")
    dt = tr_s / oversample
    n_fine = n_scans * oversample
    hrf = canonical_hrf(dt)
    columns, roles = [], []
    for i, (onset, dur, _) in enumerate(events):
        box = np.zeros(n_fine)
        a = int(round(onset / dt))
        b = int(round((onset + dur) / dt))
        if a < 0 or a >= n_fine:
            raise ValueError(f"trial {i} onset outside run")
        box[a : min(b, n_fine)] = 1.0
        reg = np.convolve(box, hrf)[:n_fine]
        columns.append(reg[::oversample])
        roles.append(f"trial:{i}")
    if motion is not None:
        motion = np.asarray(motion, dtype=np.float64)
        if motion.shape[0] != n_scans:
            raise ValueError("motion rows must match scan count")
        for j in range(motion.shape[1]):
            if np.any(motion[:, j] != 0.0):
                columns.append(motion[:, j])
                roles.append(f"motion:{j}")
    columns.append(np.ones(n_scans))
    roles.append("intercept")
    matrix = np.column_stack(columns)
    _rank_check(matrix, roles)
    return DesignMatrix(matrix=matrix, column_roles=roles)


@dataclass
class BetaVolumes:
    """Per-trial volumetric GLM coefficients (pre-mask)."""

    data: np.ndarray  # n_trials x X x Y x Z
    labels: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.data.ndim != 4:
            raise ValueError("beta volumes must be trials x X x Y x Z")
        if self.data.shape[0] != self.labels.size:
            raise ValueError("beta volumes/labels length mismatch")


def estimate_betas(run, design=None):
    """Ordinary least squares per voxel; returns one beta volume per trial.

    Nuisance (motion, intercept) coefficients are estimated jointly and
    discarded.  Rank deficiency and non-finite voxels raise.
    """
    if design is None:
        design = build_design(run.events, run.n_scans, run.tr_s, run.motion)
    X = design.matrix
    if X.shape[0] != run.n_scans:
        raise ValueError("design rows must match scan count")
    vol_shape = run.data.shape[:3]
    Y = run.data.reshape(-1, run.n_scans).T  # scans x voxels
    if not np.all(np.isfinite(Y)):
        n_bad = int((~np.isfinite(Y)).any(axis=0).sum())
        raise ValueError(f"{n_bad} voxels contain non-finite values")
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    trial_rows = design.trial_columns()
    betas = beta[trial_rows].reshape(len(trial_rows), *vol_shape)
    labels = np.asarray([c for _, _, c in run.events], dtype=np.int32)
    return BetaVolumes(data=betas, labels=labels)


def smooth_volume(vol, fwhm_mm, voxel_size_mm=(2.0, 2.0, 2.0)):
    """Separable Gaussian smoothing; sigma per axis = FWHM/voxel/(2*sqrt(2 ln 2)).

    Reflect padding preserves constant volumes exactly.
    """
    if fwhm_mm < 0:
        raise ValueError("FWHM must be non-negative")
    vol = np.asarray(vol, dtype=np.float64)
    if fwhm_mm == 0:
        return vol.copy()
    sigma = [fwhm_mm / vs * FWHM_TO_SIGMA for vs in voxel_size_mm]
    return ndimage.gaussian_filter(vol, sigma=sigma, mode="reflect")


def smooth_betas(volumes, fwhm_mm, voxel_size_mm=(2.0, 2.0, 2.0)):
    """Smooth every trial's beta volume."""
    smoothed = np.stack(
        [smooth_volume(v, fwhm_mm, voxel_size_mm) for v in volumes.data]
    )
    return BetaVolumes(data=smoothed, labels=volumes.labels)


def apply_mask(vol_series, mask, voxel_size_mm=(2.0, 2.0, 2.0)):
    """Flatten per-trial volumes to trials x in-mask voxels (scan order)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no voxels")
    if vol_series.data.shape[1:] != mask.shape:
        raise ValueError("volume and mask shapes differ")
    flat = vol_series.data.reshape(vol_series.data.shape[0], -1)
    return FMRIBetaSet(
        data=flat[:, mask.ravel()],
        labels=vol_series.labels,
        mask=mask,
        voxel_size_mm=voxel_size_mm,
    )


def unmask(rows, mask):
    """Scatter masked rows back into volumes (zeros outside the mask)."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    out = np.zeros((rows.shape[0],) + mask.shape)
    out.reshape(rows.shape[0], -1)[:, mask.ravel()] = rows
    return out
