"""Spectral dimension reduction from pairwise repulsion structure, with a
PCA baseline and ROC evaluation.

The embedding treats dataset rows as a point pattern and forms the same
matrix as the scattering estimator: an identity term minus the (scaled)
sum of outer products of pairwise differences.  Only the data-dependent
term carries directional information, and neither the identity shift nor
the positive scale factor moves the eigenvectors, so components are
ranked by the spectrum of the pair-difference sum itself, descending.
That matches extracting singular vectors of the data term, puts the
direction of strongest pairwise spread first, and is the ordering that
reproduces the published benchmark behavior; the scree reports the same
spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimator import unit_ball_volume


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional per-row labels.

    Labels may be binary (0/1 integers) or raw categorical values; ROC
    evaluation requires the binary form.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        f = np.array(self.features, dtype=float, copy=True)
        if f.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("features contain non-finite values")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (f.shape[0],):
                raise ValueError(
                    f"labels have shape {lab.shape}, expected ({f.shape[0]},)")
            object.__setattr__(self, "labels", lab)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ProjectionResult:
    """Embedded coordinates plus the spectrum behind them.

    eigvals is the full descending spectrum used for ranking (pair-term
    spectrum for the DPP method, correlation/covariance spectrum for PCA);
    eigvecs holds the top-k components column-wise.
    """

    coords: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    method: str
    r_used: float | None = None

    def __post_init__(self):
        for arr in (self.coords, self.eigvals, self.eigvecs):
            arr.setflags(write=False)


def _fix_column_signs(vecs: np.ndarray) -> np.ndarray:
    """Largest-magnitude coordinate of each column made positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _standardize(x: np.ndarray, center: bool, scale: bool) -> np.ndarray:
    out = x
    if center:
        out = out - out.mean(axis=0)
    if scale:
        sd = x.std(axis=0, ddof=1)
        bad = np.nonzero(sd == 0)[0]
        if bad.size:
            raise ValueError(f"zero-variance feature column(s) {bad.tolist()} "
                             "cannot be scaled")
        out = out / sd
    return out


def pair_difference_sum(x: np.ndarray, r: float | None = None,
                        block: int = 64) -> tuple[np.ndarray, int]:
    """Sum of (Xi - Xj)(Xi - Xj)' over ordered pairs i != j.

    With a cutoff r, only pairs at distance strictly below r contribute.
    Computed in row blocks to keep the O(N^2 d^2) work vectorized without
    materializing all pairwise differences at once.  Returns the matrix
    and the number of contributing ordered pairs.
    """
    n, d = x.shape
    total = np.zeros((d, d))
    pairs = 0
    for start in range(0, n, block):
        xb = x[start:start + block]
        diff = xb[:, None, :] - x[None, :, :]
        if r is None:
            for i in range(xb.shape[0]):
                diff[i, start + i, :] = 0.0
            pairs += xb.shape[0] * (n - 1)
            total += np.einsum("ibk,ibl->kl", diff, diff)
        else:
            dist2 = np.einsum("ibk,ibk->ib", diff, diff)
            mask = dist2 < r * r
            for i in range(xb.shape[0]):
                mask[i, start + i] = False
            pairs += int(mask.sum())
            sel = diff[mask]
            total += sel.T @ sel
    return total, pairs


def dpp_embed(dataset: Dataset, k: int, r_mode: str | float = "all_pairs",
              standardize: bool = False) -> ProjectionResult:
    """Project rows onto the leading repulsion directions.

    r_mode "all_pairs" uses r = 1 + the maximum pairwise distance so every
    point is in every other point's neighborhood (the parameter-free
    choice); an explicit float keeps only pairs strictly closer than r.
    The pair sum is scaled by 1/N; since eigenvectors are invariant to any
    positive scaling (and to the identity shift of the full estimator
    formula), this choice has no effect on the embedding.

    Rows are projected as-is unless `standardize`, which centers and
    scales columns first (off by default; the raw-coordinate form is the
    published benchmark configuration).
    """
    x = dataset.features
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two rows")
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= {d}, got k={k}")
    if standardize:
        x = _standardize(x, center=True, scale=True)

    if r_mode == "all_pairs":
        max_d2 = 0.0
        for start in range(0, n, 64):
            diff = x[start:start + 64, None, :] - x[None, :, :]
            max_d2 = max(max_d2, float(np.einsum("ibk,ibk->ib", diff, diff).max()))
        r = 1.0 + math.sqrt(max_d2)
        pair_sum, pairs = pair_difference_sum(x)
    elif isinstance(r_mode, (int, float)) and not isinstance(r_mode, bool):
        r = float(r_mode)
        if not r > 0:
            raise ValueError("explicit cutoff r must be positive")
        pair_sum, pairs = pair_difference_sum(x, r=r)
    else:
        raise ValueError(f"r_mode must be 'all_pairs' or a positive float, got {r_mode!r}")

    w, v = np.linalg.eigh(pair_sum / n)
    order = np.argsort(w)[::-1]
    eigvals = w[order]
    eigvecs = _fix_column_signs(v[:, order[:k]])
    coords = x @ eigvecs
    return ProjectionResult(coords=coords, eigvals=eigvals, eigvecs=eigvecs,
                            method="dpp", r_used=r)


def pca_embed(dataset: Dataset, k: int, center: bool = True,
              scale: bool = True) -> ProjectionResult:
    """PCA baseline: eigenvectors of the sample correlation matrix (the
    default center+scale configuration) or of the covariance matrix when
    scale is off.  Rows are transformed by the same center/scale flags
    before projection."""
    x = dataset.features
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two rows")
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= {d}, got k={k}")
    if scale:
        sd = x.std(axis=0, ddof=1)
        if np.any(sd == 0):
            raise ValueError("zero-variance feature column cannot be scaled")
        matrix = np.corrcoef(x, rowvar=False)
    else:
        matrix = np.cov(x, rowvar=False)
    w, v = np.linalg.eigh(matrix)
    order = np.argsort(w)[::-1]
    eigvals = w[order]
    eigvecs = _fix_column_signs(v[:, order[:k]])
    coords = _standardize(x, center=center, scale=scale) @ eigvecs
    return ProjectionResult(coords=coords, eigvals=eigvals, eigvecs=eigvecs,
                            method="pca")


def risk_scores(coords: np.ndarray, component: int = 0,
                flip: bool = False) -> np.ndarray:
    """Per-row risk score: the negated coordinate along one component.

    The eigenvector sign convention is arbitrary relative to which end of
    the axis means "high risk"; `flip` negates the scores to resolve the
    orientation.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2:
        raise ValueError("coords must be 2-D")
    if not 0 <= component < coords.shape[1]:
        raise ValueError(f"component {component} out of range for k={coords.shape[1]}")
    scores = -coords[:, component]
    return -scores if flip else scores


@dataclass(frozen=True)
class RocCurve:
    """Operating points from thresholding scores in descending order.

    One vertex per distinct score value (ties grouped), prefixed by the
    (0, 0) origin; both coordinates are nondecreasing and the curve ends
    at (1, 1).  `auc` is the exact trapezoidal area, equal to the
    Mann-Whitney statistic with ties counted one half.
    """

    points: np.ndarray       # (m, 2) columns fpr, tpr
    thresholds: np.ndarray   # (m,) score at each vertex; +inf at the origin
    auc: float

    def __post_init__(self):
        self.points.setflags(write=False)
        self.thresholds.setflags(write=False)


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve and AUC for binary labels (1 = positive class).

    Counting is done in integers, so the AUC matches the pairwise
    Mann-Whitney computation exactly, not merely to rounding.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D of equal length")
    lab = labels.astype(np.int64)
    if not np.all((lab == 0) | (lab == 1)):
        raise ValueError("labels must be binary 0/1")
    n_pos = int(lab.sum())
    n_neg = lab.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = lab[order]
    boundary = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([boundary, [s.size - 1]])
    tp = np.cumsum(l)[ends]
    fp = (ends + 1) - tp
    tp = np.concatenate([[0], tp])
    fp = np.concatenate([[0], fp])

    area2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = area2 / (2 * n_pos * n_neg)
    points = np.column_stack([fp / n_neg, tp / n_pos]).astype(float)
    thresholds = np.concatenate([[math.inf], s[ends]])
    return RocCurve(points=points, thresholds=thresholds, auc=float(auc))


def scree(eigvals) -> list[tuple[int, float]]:
    """Rank/value pairs (1-based) of a descending spectrum, for plotting."""
    w = np.asarray(eigvals, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("expected a nonempty vector of eigenvalues")
    if np.any(np.diff(w) > 0):
        raise ValueError("eigenvalues must be in descending order")
    return [(i + 1, float(v)) for i, v in enumerate(w)]
