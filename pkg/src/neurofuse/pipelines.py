"""Per-modality decoding stacks: ANOVA percentile selection, optional
train-fitted scaling, then the configured classifier.

EEG uses the top 2 percentile of flattened epoch features and a random
forest with no scaling; fMRI standardizes the top 1 percentile of beta
features into a linear SVM (C=0.1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classify import LinearSVM, RandomForest
from .features import Standardizer, anova_f, select_percentile

__all__ = ["UnimodalPipeline", "eeg_pipeline", "fmri_pipeline"]


@dataclass
class UnimodalPipeline:
    """select-percentile -> (standardize) -> classifier, fitted on train only."""

    percentile: float
    scale: bool
    model: object
    selector: object = None
    standardizer: object = None

    def fit(self, X, y):
        X = np.asarray(X)
        self.selector = select_percentile(anova_f(X, y), self.percentile)
        Xs = self.selector.apply(X)
        if self.scale:
            self.standardizer = Standardizer.fit(Xs)
            Xs = self.standardizer.apply(Xs)
        self.model.fit(Xs, y)
        return self

    def _transform(self, X):
        if self.selector is None:
            raise ValueError("pipeline not fitted")
        Xs = self.selector.apply(np.asarray(X))
        if self.scale:
            Xs = self.standardizer.apply(Xs)
        return Xs

    def predict_proba(self, X):
        return self.model.predict_proba(self._transform(X))

    def predict(self, X):
        return self.model.predict(self._transform(X))


def eeg_pipeline(seed=0, percentile=2.0, n_trees=100):
    return UnimodalPipeline(
        percentile=percentile, scale=False, model=RandomForest(n_trees=n_trees, seed=seed)
    )


def fmri_pipeline(seed=0, percentile=1.0, C=0.1):
    return UnimodalPipeline(
        percentile=percentile, scale=True, model=LinearSVM(C=C, seed=seed)
    )
