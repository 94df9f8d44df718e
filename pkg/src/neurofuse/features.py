"""Univariate ANOVA-F scoring, top-percentile selection, train-fitted scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "anova_f",
    "anova_f_from_counts",
    "class_counts_matrix",
    "select_percentile",
    "FeatureSelector",
    "Standardizer",
    "standardize",
]


def class_counts_matrix(labels, n_rows, weights=None):
    """Class-by-row multiplicity matrix for (possibly repeated) row indices.

    ``labels[i]`` is the class of occurrence i and ``weights[i]`` the base-row
    index it refers to (defaults to ``arange``, i.e. one occurrence per row).
    Used to score augmented exemplar multisets without materializing them.
    """
    labels = np.asarray(labels)
    if weights is None:
        weights = np.arange(labels.size)
    classes = np.unique(labels)
    counts = np.zeros((classes.size, n_rows), dtype=np.float64)
    for r, c in enumerate(classes):
        counts[r] = np.bincount(np.asarray(weights)[labels == c], minlength=n_rows)
    return classes, counts


def anova_f_from_counts(X, counts):
    """One-way ANOVA F per column for a weighted multiset of the rows of X.

    ``counts[c, i]`` is the multiplicity of row i in class c.  With one-hot
    counts this is the plain per-feature one-way ANOVA
    F = (SS_between/df_between) / (SS_within/df_within); 0/0 maps to 0.
    """
    X = np.asarray(X)
    counts = np.asarray(counts, dtype=np.float64)
    n_c = counts.sum(axis=1)
    if counts.shape[0] < 2:
        raise ValueError("ANOVA needs at least 2 classes")
    if np.any(n_c < 2):
        raise ValueError("every class needs at least 2 members")
    n = n_c.sum()
    Xd = X.astype(np.float64, copy=False)
    sums = counts @ Xd                    # class sums      (C x d)
    sqsums = counts @ (Xd * Xd)           # class sum-of-sq (C x d)
    means = sums / n_c[:, None]
    grand = sums.sum(axis=0) / n
    ss_between = (n_c[:, None] * (means - grand) ** 2).sum(axis=0)
    ss_within = np.maximum((sqsums - n_c[:, None] * means**2).sum(axis=0), 0.0)
    df_between = counts.shape[0] - 1
    df_within = n - counts.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ss_between / df_between) / (ss_within / df_within)
    f[~np.isfinite(f) & (ss_between <= 0)] = 0.0  # constant feature: 0/0 -> 0
    return f


def anova_f(X, y):
    """Per-feature one-way ANOVA F statistic of X columns against labels y."""
    X = np.asarray(X)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must match rows of X")
    _, counts = class_counts_matrix(y, X.shape[0])
    return anova_f_from_counts(X, counts)


@dataclass(frozen=True)
class FeatureSelector:
    """Top-percentile feature subset; ties broken by lower index."""

    scores: np.ndarray
    selected: np.ndarray
    percentile: float

    def apply(self, X):
        return np.asarray(X)[:, self.selected]


def select_percentile(scores, p):
    """Keep the max(1, ceil(p/100 * d)) highest-scoring feature indices."""
    if not 0 < p <= 100:
        raise ValueError("percentile must be in (0, 100]")
    scores = np.asarray(scores, dtype=np.float64)
    d = scores.size
    k = max(1, math.ceil(p / 100.0 * d))
    # sort by descending score, ascending index on ties
    order = np.lexsort((np.arange(d), -scores))
    selected = np.sort(order[:k])
    return FeatureSelector(scores=scores, selected=selected, percentile=float(p))


@dataclass(frozen=True)
class Standardizer:
    """Column-wise (x - mean)/sd with statistics fitted on training rows only."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, train_X):
        train_X = np.asarray(train_X)
        if train_X.shape[0] == 0:
            raise ValueError("cannot fit standardizer on empty training set")
        mean = train_X.mean(axis=0, dtype=np.float64)
        sd = train_X.std(axis=0, dtype=np.float64)
        return cls(mean=mean, sd=sd)

    def apply(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = X - self.mean
        nz = self.sd > 0
        out[:, nz] /= self.sd[nz]
        out[:, ~nz] = 0.0  # constant training columns map to 0
        return out


def standardize(train_X, apply_X):
    """Transform ``apply_X`` with mean/sd fitted on ``train_X``."""
    return Standardizer.fit(train_X).apply(apply_X)
