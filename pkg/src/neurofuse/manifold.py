"""2-D nonlinear embeddings for visualizing class structure.

Methods: isometric mapping (k-NN graph geodesics + classical MDS), spectral
embedding (eigenvectors 2..3 of the symmetric-normalized graph Laplacian)
and locally linear embedding.  Disconnected neighbor graphs are an error,
never silently truncated, since truncation would corrupt the structure
diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from sklearn.metrics import silhouette_score

__all__ = ["Embedding2D", "embed", "structure_score", "render_embedding"]

METHODS = ("isomap", "spectral", "lle")


@dataclass
class Embedding2D:
    coords: np.ndarray
    labels: np.ndarray
    method: str
    n_neighbors: int
    diagnostic: float

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError("coords must be n x 2")
        if self.coords.shape[0] != self.labels.size:
            raise ValueError("coords/labels length mismatch")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("coords contain NaN or Inf")


def _pairwise_distances(X):
    sq = (X * X).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def _knn_edges(dist, k):
    """Symmetric (union) k-nearest-neighbor edge list with distances."""
    n = dist.shape[0]
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.repeat(np.arange(n), k)
    cols = order[:, 1 : k + 1].ravel()  # skip self at position 0
    w = np.maximum(dist[rows, cols], 1e-300)  # keep zero-length edges present
    rows2 = np.concatenate([rows, cols])
    cols2 = np.concatenate([cols, rows])
    w2 = np.concatenate([w, w])
    graph = csr_matrix((w2, (rows2, cols2)), shape=(n, n))
    graph.sum_duplicates()
    # duplicate (i,j) entries were added, halve them back to the distance
    mutual = csr_matrix((np.ones_like(w2), (rows2, cols2)), shape=(n, n))
    mutual.sum_duplicates()
    graph.data /= mutual.data
    return graph


def _check_connected(graph):
    n_comp, _ = connected_components(graph, directed=False)
    if n_comp > 1:
        raise ValueError(
            f"neighbor graph is disconnected ({n_comp} components); "
            "increase n_neighbors"
        )


def _fix_signs(coords):
    for j in range(coords.shape[1]):
        i = np.argmax(np.abs(coords[:, j]))
        if coords[i, j] < 0:
            coords[:, j] = -coords[:, j]
    return coords


def _isomap(X, k):
    dist = _pairwise_distances(X)
    graph = _knn_edges(dist, k)
    _check_connected(graph)
    geo = shortest_path(graph, method="D", directed=False)
    n = geo.shape[0]
    d2 = geo**2
    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ d2 @ j
    w, v = np.linalg.eigh((b + b.T) / 2.0)
    top = np.argsort(w)[::-1][:2]
    lam = np.maximum(w[top], 0.0)
    coords = v[:, top] * np.sqrt(lam)
    emb_d = _pairwise_distances(coords)
    stress = float(np.sqrt(((emb_d - geo) ** 2).sum() / max((geo**2).sum(), 1e-300)))
    return _fix_signs(coords), stress


def _spectral(X, k):
    dist = _pairwise_distances(X)
    graph = _knn_edges(dist, k)
    _check_connected(graph)
    a = (graph > 0).toarray().astype(np.float64)
    np.fill_diagonal(a, 0.0)
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    l_sym = np.eye(a.shape[0]) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    w, v = np.linalg.eigh((l_sym + l_sym.T) / 2.0)
    coords = v[:, 1:3].copy()  # eigenvectors 2..3; the first is trivial
    return _fix_signs(coords), float(w[1])


def _lle(X, k, reg=1e-3):
    dist = _pairwise_distances(X)
    graph = _knn_edges(dist, k)
    _check_connected(graph)
    n = X.shape[0]
    order = np.argsort(dist, axis=1, kind="stable")
    nbrs = order[:, 1 : k + 1]
    W = np.zeros((n, n))
    for i in range(n):
        z = X[nbrs[i]] - X[i]
        g = z @ z.T
        g = g + np.eye(k) * reg * max(np.trace(g), 1e-12) / k
        w_i = np.linalg.solve(g, np.ones(k))
        W[i, nbrs[i]] = w_i / w_i.sum()
    m = np.eye(n) - W
    m = m.T @ m
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    coords = v[:, 1:3].copy()  # skip the constant eigenvector
    return _fix_signs(coords), float(w[1] + w[2])


def embed(X, labels, method="isomap", n_neighbors=10):
    """Project rows of X to 2-D; ``diagnostic`` is the method's own residual
    (isomap: geodesic stress; spectral: algebraic connectivity; lle: bottom
    non-trivial eigenvalue mass)."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if labels.size != X.shape[0]:
        raise ValueError("labels must match rows of X")
    if not 2 <= n_neighbors < X.shape[0]:
        raise ValueError("need n > n_neighbors >= 2")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    fn = {"isomap": _isomap, "spectral": _spectral, "lle": _lle}[method]
    coords, diagnostic = fn(X, int(n_neighbors))
    return Embedding2D(
        coords=coords,
        labels=labels,
        method=method,
        n_neighbors=int(n_neighbors),
        diagnostic=diagnostic,
    )


def structure_score(emb):
    """Silhouette coefficient of the class labels in embedding space."""
    if np.unique(emb.labels).size < 2:
        raise ValueError("structure score needs at least 2 classes")
    return float(silhouette_score(emb.coords, emb.labels))


def render_embedding(emb, path, class_names=None):
    """Scatter plot (one color per class, class legend, method and score in
    the title) plus a CSV of the coordinates beside the image.

    Returns (image_path, coords_path).  The CSV is the deterministic
    artifact: identical embeddings produce byte-identical files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if emb.coords.shape[0] == 0:
        raise ValueError("empty embedding")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    score = structure_score(emb) if np.unique(emb.labels).size > 1 else float("nan")

    fig, ax = plt.subplots(figsize=(6, 5))
    cmap = plt.get_cmap("tab10")
    for c in np.unique(emb.labels):
        at = emb.labels == c
        name = class_names[c] if class_names is not None else f"class {c}"
        ax.scatter(*emb.coords[at].T, s=14, color=cmap(int(c) % 10), label=name)
    ax.set_title(f"{emb.method} (k={emb.n_neighbors}, silhouette={score:.3f})")
    ax.legend(fontsize=7, markerscale=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

    coords_path = path.with_suffix(".coords.csv")
    table = np.column_stack([emb.coords, emb.labels.astype(np.float64)])
    np.savetxt(coords_path, table, delimiter=",", fmt="%.12e", header="x,y,label")
    return path, coords_path
