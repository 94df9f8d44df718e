"""Bimodal fusion: probability-vector stacking (late), joint feature
concatenation with percentile selection (early), and same-label
cross-pairing augmentation.

A :class:`PairedExemplarSet` references rows of the base modality matrices
by index, so augmented sets (16x the originals by default) never copy the
full feature blocks; only selected columns are ever gathered.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .classify import LinearSVM
from .dataio import N_CLASSES, plan_folds
from .features import (
    Standardizer,
    anova_f_from_counts,
    class_counts_matrix,
    select_percentile,
)
from .pipelines import eeg_pipeline, fmri_pipeline

__all__ = [
    "PairedExemplarSet",
    "pair_exemplars",
    "augment_pairs",
    "FusionConfig",
    "FusionModel",
    "late_fuse_train",
    "early_fuse_train",
    "fusion_predict",
]


@dataclass
class PairedExemplarSet:
    """Label-matched EEG/fMRI exemplar pairs over two base feature blocks."""

    eeg_X: np.ndarray
    fmri_X: np.ndarray
    eeg_index: np.ndarray
    fmri_index: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.eeg_index = np.asarray(self.eeg_index, dtype=np.intp)
        self.fmri_index = np.asarray(self.fmri_index, dtype=np.intp)
        self.labels = np.asarray(self.labels)
        n = self.labels.size
        if self.eeg_index.shape != (n,) or self.fmri_index.shape != (n,):
            raise ValueError("pair indices and labels must have equal length")
        if n and (self.eeg_index.max() >= self.eeg_X.shape[0]
                  or self.fmri_index.max() >= self.fmri_X.shape[0]):
            raise ValueError("pair index out of range")

    @property
    def n(self):
        return self.labels.size

    @property
    def pairing(self):
        return list(zip(self.eeg_index.tolist(), self.fmri_index.tolist()))

    @property
    def eeg_features(self):
        return self.eeg_X[self.eeg_index]

    @property
    def fmri_features(self):
        return self.fmri_X[self.fmri_index]

    def subset(self, rows):
        """Pairs at the given positions (base blocks shared, not copied)."""
        rows = np.asarray(rows)
        return replace(
            self,
            eeg_index=self.eeg_index[rows],
            fmri_index=self.fmri_index[rows],
            labels=self.labels[rows],
        )


def pair_exemplars(eeg_X, eeg_labels, fmri_X, fmri_labels):
    """Canonical pairing: the k-th exemplar of each class in one modality is
    paired with the k-th of the same class in the other, in EEG order."""
    eeg_labels = np.asarray(eeg_labels)
    fmri_labels = np.asarray(fmri_labels)
    fmri_index = np.empty(eeg_labels.size, dtype=np.intp)
    for c in np.unique(eeg_labels):
        e_pos = np.flatnonzero(eeg_labels == c)
        f_pos = np.flatnonzero(fmri_labels == c)
        if e_pos.size != f_pos.size:
            raise ValueError(
                f"class {c}: {e_pos.size} EEG vs {f_pos.size} fMRI exemplars"
            )
        fmri_index[e_pos] = f_pos
    return PairedExemplarSet(
        eeg_X=np.asarray(eeg_X),
        fmri_X=np.asarray(fmri_X),
        eeg_index=np.arange(eeg_labels.size, dtype=np.intp),
        fmri_index=fmri_index,
        labels=eeg_labels.copy(),
    )


def augment_pairs(pairs, factor=15, seed=0):
    """Add ``factor`` same-label cross-pairings per original pair.

    New pairs re-combine the EEG and fMRI exemplars already present in
    ``pairs`` (within label), sampling without duplicates while the class's
    pair capacity allows, then with replacement.  Output keeps the originals
    first and is n*(factor+1) long; deterministic in the seed.
    """
    if factor < 0:
        raise ValueError("augmentation factor must be >= 0")
    if factor == 0:
        return pairs.subset(np.arange(pairs.n))
    rng = np.random.default_rng(seed)
    new_e, new_f, new_y = [], [], []
    for c in np.unique(pairs.labels):
        at = np.flatnonzero(pairs.labels == c)
        e_pool = np.unique(pairs.eeg_index[at])
        f_pool = np.unique(pairs.fmri_index[at])
        needed = factor * at.size
        grid_e, grid_f = np.meshgrid(e_pool, f_pool, indexing="ij")
        cand = np.stack([grid_e.ravel(), grid_f.ravel()], axis=1)
        used = set(zip(pairs.eeg_index[at].tolist(), pairs.fmri_index[at].tolist()))
        fresh = np.asarray(
            [i for i, (a, b) in enumerate(map(tuple, cand)) if (a, b) not in used],
            dtype=np.intp,
        )
        if needed <= fresh.size:
            take = cand[rng.choice(fresh, size=needed, replace=False)]
        else:
            extra = cand[rng.choice(cand.shape[0], size=needed - fresh.size, replace=True)]
            take = np.concatenate([cand[rng.permutation(fresh)], extra])
        new_e.append(take[:, 0])
        new_f.append(take[:, 1])
        new_y.append(np.full(needed, c, dtype=pairs.labels.dtype))
    return replace(
        pairs,
        eeg_index=np.concatenate([pairs.eeg_index] + new_e),
        fmri_index=np.concatenate([pairs.fmri_index] + new_f),
        labels=np.concatenate([pairs.labels] + new_y),
    )


@dataclass(frozen=True)
class FusionConfig:
    eeg_percentile: float = 2.0
    fmri_percentile: float = 1.0
    joint_percentile: float = 1.0
    svm_c: float = 0.1
    rf_trees: int = 100
    stack_folds: int = 4
    scale_joint: bool = True
    seed: int = 0


@dataclass
class FusionModel:
    """Trained fusion model; ``strategy`` selects which parts are present."""

    strategy: str
    config: FusionConfig
    eeg_pipe: object = None
    fmri_pipe: object = None
    stacker: object = None
    selector: object = None
    standardizer: object = None
    eeg_width: int = 0


def _submodels(cfg):
    return (
        eeg_pipeline(seed=cfg.seed, percentile=cfg.eeg_percentile, n_trees=cfg.rf_trees),
        fmri_pipeline(seed=cfg.seed, percentile=cfg.fmri_percentile, C=cfg.svm_c),
    )


def late_fuse_train(train, cfg=FusionConfig()):
    """EEG RF + fMRI SVM submodels, stacked by a linear SVM on concatenated
    out-of-fold probability vectors (width 16).

    The stacker is trained on out-of-fold probabilities from an inner
    stratified split so it never sees in-sample submodel outputs; the
    submodels are then refitted on the full training set.
    """
    E, F, y = train.eeg_features, train.fmri_features, train.labels
    inner = plan_folds(y, cfg.stack_folds, cfg.seed)
    oof = np.zeros((train.n, 2 * N_CLASSES))
    for fold in range(cfg.stack_folds):
        tr, te = inner.train_indices(fold), inner.test_indices(fold)
        e_pipe, f_pipe = _submodels(cfg)
        e_pipe.fit(E[tr], y[tr])
        f_pipe.fit(F[tr], y[tr])
        oof[te, :N_CLASSES] = e_pipe.predict_proba(E[te])
        oof[te, N_CLASSES:] = f_pipe.predict_proba(F[te])

    stacker = LinearSVM(C=cfg.svm_c, seed=cfg.seed).fit(oof, y)
    e_pipe, f_pipe = _submodels(cfg)
    e_pipe.fit(E, y)
    f_pipe.fit(F, y)
    return FusionModel(
        strategy="late", config=cfg, eeg_pipe=e_pipe, fmri_pipe=f_pipe, stacker=stacker
    )


def joint_anova_scores(pairs):
    """ANOVA F over the concatenated [EEG | fMRI] representation of a paired
    set, computed from per-class multiplicities of the base rows (exact, and
    augmentation-safe: no gathered copy of the feature blocks is made)."""
    _, counts_e = class_counts_matrix(pairs.labels, pairs.eeg_X.shape[0], pairs.eeg_index)
    _, counts_f = class_counts_matrix(pairs.labels, pairs.fmri_X.shape[0], pairs.fmri_index)
    return np.concatenate(
        [anova_f_from_counts(pairs.eeg_X, counts_e),
         anova_f_from_counts(pairs.fmri_X, counts_f)]
    )


def _gather_joint(pairs, selector, eeg_width):
    sel = selector.selected
    sel_e = sel[sel < eeg_width]
    sel_f = sel[sel >= eeg_width] - eeg_width
    blocks = []
    if sel_e.size:
        blocks.append(pairs.eeg_X[np.ix_(pairs.eeg_index, sel_e)])
    if sel_f.size:
        blocks.append(pairs.fmri_X[np.ix_(pairs.fmri_index, sel_f)])
    return np.concatenate(blocks, axis=1).astype(np.float64)


def early_fuse_train(train, cfg=FusionConfig()):
    """Joint [EEG | fMRI] concatenation, top-percentile ANOVA selection on
    the joint representation, then a linear SVM (C=0.1)."""
    eeg_width = train.eeg_X.shape[1]
    selector = select_percentile(joint_anova_scores(train), cfg.joint_percentile)
    X = _gather_joint(train, selector, eeg_width)
    standardizer = None
    if cfg.scale_joint:
        standardizer = Standardizer.fit(X)
        X = standardizer.apply(X)
    svm = LinearSVM(C=cfg.svm_c, seed=cfg.seed).fit(X, train.labels)
    return FusionModel(
        strategy="early",
        config=cfg,
        selector=selector,
        standardizer=standardizer,
        eeg_width=eeg_width,
        stacker=svm,
    )


def fusion_predict(model, test):
    """Per-exemplar simplex probabilities and argmax labels on a paired set;
    every test-side transform uses train-fitted state only."""
    if model.strategy == "late":
        pe = model.eeg_pipe.predict_proba(test.eeg_features)
        pf = model.fmri_pipe.predict_proba(test.fmri_features)
        proba = model.stacker.predict_proba(np.hstack([pe, pf]))
    elif model.strategy == "early":
        X = _gather_joint(test, model.selector, model.eeg_width)
        if model.standardizer is not None:
            X = model.standardizer.apply(X)
        proba = model.stacker.predict_proba(X)
    else:
        raise ValueError(f"unknown fusion strategy {model.strategy!r}")
    return np.argmax(proba, axis=1), proba
