"""Classical decoders: soft-margin linear SVM and random forest.

Both expose 8-class probability rows on the simplex; ``predict`` is defined
as the argmax of ``predict_proba`` so the two can never disagree.  The SVM
penalty applies to the mean slack, which makes the objective invariant to
duplicating every training row (the sum form is not).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.svm import LinearSVC

from .dataio import N_CLASSES, plan_folds

__all__ = [
    "LinearSVM",
    "RandomForest",
    "train_linear_svm",
    "train_random_forest",
    "predict_proba",
    "GridSearchResult",
    "grid_search",
]


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_training_input(X, y):
    X = np.asarray(X)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be n x d with matching label vector")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    if np.unique(y).size < 2:
        raise ValueError("training labels contain a single class")
    return X, y


def _platt_fit(scores, positive, max_iter=100):
    """Fit a sigmoid p = 1/(1+exp(A*s+B)) to decision scores (Platt, with
    target smoothing); Newton iterations on the cross-entropy."""
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    t = np.where(positive, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, b = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    for _ in range(max_iter):
        z = np.clip(a * scores + b, -500.0, 500.0)
        p = 1.0 / (1.0 + np.exp(z))
        d = t - p  # dE/dz has opposite sign convention folded in below
        g_a = np.dot(scores, d)
        g_b = d.sum()
        w = p * (1.0 - p)
        h_aa = np.dot(scores * scores, w) + 1e-12
        h_ab = np.dot(scores, w)
        h_bb = w.sum() + 1e-12
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 0:
            break
        da = (h_bb * g_a - h_ab * g_b) / det
        db = (h_aa * g_b - h_ab * g_a) / det
        a, b = a + da, b + db
        if abs(da) < 1e-10 and abs(db) < 1e-10:
            break
    return a, b


class LinearSVM:
    """One-vs-rest soft-margin linear SVM with calibrated probabilities.

    ``calibration`` is "softmax" (default: softmax over the per-class
    decision values) or "platt" (per-class sigmoid fit on the training
    decisions, then renormalized).
    """

    kind = "linear_svm"

    def __init__(self, C=0.1, seed=0, n_classes=N_CLASSES, calibration="softmax"):
        if calibration not in ("softmax", "platt"):
            raise ValueError(f"unknown calibration {calibration!r}")
        self.C = float(C)
        self.seed = int(seed)
        self.n_classes = int(n_classes)
        self.calibration = calibration
        self._svc = None
        self._seen = None
        self._platt = None

    def fit(self, X, y):
        X, y = _check_training_input(X, y)
        # mean-slack objective: liblinear uses C * sum(loss), so rescale
        self._svc = LinearSVC(
            C=self.C / X.shape[0],
            loss="squared_hinge",
            dual=False,
            tol=1e-8,
            max_iter=50000,
            random_state=self.seed,
        )
        self._svc.fit(X, y)
        self._seen = np.asarray(self._svc.classes_, dtype=int)
        if self.calibration == "platt":
            d = self._decision_matrix(X)
            self._platt = [
                _platt_fit(d[:, c], y == c) if c in self._seen else (0.0, 0.0)
                for c in range(self.n_classes)
            ]
        return self

    def _decision_matrix(self, X):
        """Per-class decision values in the global class space; classes the
        model never saw score -inf."""
        if self._svc is None:
            raise ValueError("model not fitted")
        X = np.asarray(X)
        if X.shape[1] != self._svc.coef_.shape[1]:
            raise ValueError(
                f"feature dimension mismatch: got {X.shape[1]}, "
                f"expected {self._svc.coef_.shape[1]}"
            )
        raw = self._svc.decision_function(X)
        if raw.ndim == 1:  # binary: single column scores classes_[1]
            raw = np.c_[-raw, raw]
        out = np.full((X.shape[0], self.n_classes), -np.inf)
        out[:, self._seen] = raw
        return out

    def decision_values(self, X):
        return self._decision_matrix(X)

    def predict_proba(self, X):
        d = self._decision_matrix(X)
        if self.calibration == "softmax":
            return softmax(d)
        p = np.zeros_like(d)
        for c in self._seen:
            a, b = self._platt[c]
            z = np.clip(a * d[:, c] + b, -500.0, 500.0)
            p[:, c] = 1.0 / (1.0 + np.exp(z))
        s = p.sum(axis=1, keepdims=True)
        zero = np.flatnonzero(s[:, 0] <= 0)
        if zero.size:
            p[np.ix_(zero, self._seen)] = 1.0 / self._seen.size
            s = p.sum(axis=1, keepdims=True)
        return p / s

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


class RandomForest:
    """Bootstrap forest of fully grown decision trees (100 by default)."""

    kind = "random_forest"

    def __init__(self, n_trees=100, seed=0, n_classes=N_CLASSES):
        self.n_trees = int(n_trees)
        self.seed = int(seed)
        self.n_classes = int(n_classes)
        self._forest = None
        self._seen = None

    def fit(self, X, y):
        X, y = _check_training_input(X, y)
        self._forest = RandomForestClassifier(
            n_estimators=self.n_trees,
            bootstrap=True,
            random_state=self.seed,
            n_jobs=1,
        )
        self._forest.fit(X, y)
        self._seen = np.asarray(self._forest.classes_, dtype=int)
        return self

    def predict_proba(self, X):
        if self._forest is None:
            raise ValueError("model not fitted")
        X = np.asarray(X)
        if X.shape[1] != self._forest.n_features_in_:
            raise ValueError(
                f"feature dimension mismatch: got {X.shape[1]}, "
                f"expected {self._forest.n_features_in_}"
            )
        out = np.zeros((X.shape[0], self.n_classes))
        out[:, self._seen] = self._forest.predict_proba(X)
        return out

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


def train_linear_svm(X, y, C=0.1, seed=0, calibration="softmax"):
    return LinearSVM(C=C, seed=seed, calibration=calibration).fit(X, y)


def train_random_forest(X, y, n_trees=100, seed=0):
    return RandomForest(n_trees=n_trees, seed=seed).fit(X, y)


def predict_proba(model, X):
    """Probability rows on the 8-class simplex for a trained model."""
    return model.predict_proba(X)


@dataclass
class GridSearchResult:
    grid: dict
    scores: list  # (params, mean CV accuracy) per evaluated point
    best: dict
    skipped: list = field(default_factory=list)  # (params, error message)


def _grid_points(grid):
    keys = list(grid)
    points = [{}]
    for key in keys:
        points = [{**p, key: v} for p in points for v in grid[key]]
    return points


def grid_search(X, y, grid, k=4, seed=0, kind="linear_svm"):
    """Inner stratified k-fold CV over every grid point.

    Best point attains the maximal mean accuracy; exact ties go to the
    smallest C, then to grid order.  Points whose training fails are
    recorded and skipped.
    """
    if not grid or not all(len(v) for v in grid.values()):
        raise ValueError("empty grid")
    X = np.asarray(X)
    y = np.asarray(y)
    plan = plan_folds(y, k, seed)
    factories = {
        "linear_svm": lambda params: LinearSVM(seed=seed, **params),
        "random_forest": lambda params: RandomForest(seed=seed, **params),
    }
    if kind not in factories:
        raise ValueError(f"unknown model kind {kind!r}")

    scores, skipped = [], []
    for params in _grid_points(grid):
        try:
            accs = []
            for fold in range(k):
                tr, te = plan.train_indices(fold), plan.test_indices(fold)
                model = factories[kind](params).fit(X[tr], y[tr])
                accs.append(float(np.mean(model.predict(X[te]) == y[te])))
            scores.append((params, float(np.mean(accs))))
        except Exception as exc:  # noqa: BLE001 - record the point, move on
            skipped.append((params, str(exc)))
    if not scores:
        raise ValueError("every grid point failed")

    top = max(s for _, s in scores)
    tied = [p for p, s in scores if s == top]
    if "C" in grid:
        best = min(tied, key=lambda p: p["C"])
    else:
        best = tied[0]
    return GridSearchResult(grid=dict(grid), scores=scores, best=best, skipped=skipped)
