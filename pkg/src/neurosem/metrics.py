"""Generative-quality and similarity metrics over ingested feature files.

All deep-feature extraction happens upstream; these functions consume
plain arrays (feature matrices, class-probability rows, 8-bit images)
and return scalars with uncertainty where defined.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .rng import stream_generator

REC601 = np.array([0.299, 0.587, 0.114])


@dataclass
class MetricReport:
    metric: str
    value: float
    std: float | None = None
    params: dict | None = None

    def to_json(self) -> str:
        payload = {"metric": self.metric, "value": self.value}
        if self.std is not None:
            payload["std"] = self.std
        if self.params:
            payload["params"] = self.params
        return json.dumps(payload, sort_keys=True)


def _check_features(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("feature sets must be 2-d (n x d)")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ContractError("feature sets must be finite")
    return a, b


def _psd_sqrt(sym: np.ndarray, clamp: float = 1e-10) -> np.ndarray:
    """Square root of a symmetric matrix, eigenvalues clamped at zero."""
    vals, vecs = np.linalg.eigh((sym + sym.T) / 2.0)
    vals = np.where(vals < clamp, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: np.ndarray, b: np.ndarray) -> float:
    """Frechet distance between Gaussians fit to two feature sets.

    ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), with the cross term
    evaluated through the symmetric form Sa^(1/2) Sb Sa^(1/2) so only
    symmetric eigendecompositions are needed.
    """
    a, b = _check_features(a, b)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ContractError("fid needs at least 2 samples per set")
    d = a.shape[1]
    if min(a.shape[0], b.shape[0]) < d:
        warnings.warn(
            f"fewer samples ({min(a.shape[0], b.shape[0])}) than feature "
            f"dimensions ({d}); covariance estimate is rank-deficient")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ca = np.cov(a, rowvar=False, ddof=1)
    cb = np.cov(b, rowvar=False, ddof=1)
    ca = np.atleast_2d(ca)
    cb = np.atleast_2d(cb)
    sa_half = _psd_sqrt(ca)
    cross = _psd_sqrt(sa_half @ cb @ sa_half)
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(ca) + np.trace(cb) - 2.0 * np.trace(cross))


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def _mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    m, n = x.shape[0], y.shape[0]
    kxx = _poly_kernel(x, x)
    kyy = _poly_kernel(y, y)
    kxy = _poly_kernel(x, y)
    sum_xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    sum_yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(sum_xx + sum_yy - 2.0 * kxy.mean())


def kid(a: np.ndarray, b: np.ndarray, subset_size: int = 100,
        n_subsets: int = 100, seed: int = 0):
    """Unbiased MMD^2 with cubic polynomial kernel over random subsets.

    Returns (mean, std) across the seeded subsets. ``subset_size`` is
    clipped to the smaller set when necessary.
    """
    a, b = _check_features(a, b)
    m = min(subset_size, a.shape[0], b.shape[0])
    if m < 2:
        raise ContractError("kid needs subsets of at least 2 samples")
    if subset_size > min(a.shape[0], b.shape[0]):
        warnings.warn(
            f"subset_size {subset_size} larger than smallest set; using {m}")
    gen = stream_generator(seed, "kid/subsets")
    vals = np.empty(n_subsets)
    for s in range(n_subsets):
        ia = gen.choice(a.shape[0], size=m, replace=False)
        ib = gen.choice(b.shape[0], size=m, replace=False)
        vals[s] = _mmd2_unbiased(a[ia], b[ib])
    return float(vals.mean()), float(vals.std())


def inception_score(p: np.ndarray, n_splits: int = 10):
    """exp(mean KL(p(y|x) || marginal)) per split; returns (mean, std)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise DimensionError("probability matrix must be 2-d (n x C)")
    if (p < 0).any() or not np.isfinite(p).all():
        raise ContractError("probabilities must be finite and non-negative")
    if np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
        raise ContractError("probability rows must sum to 1 (within 1e-6)")
    n = p.shape[0]
    n_splits = max(1, min(n_splits, n))
    bounds = np.linspace(0, n, n_splits + 1).astype(int)
    scores = np.empty(n_splits)
    for s in range(n_splits):
        part = p[bounds[s]:bounds[s + 1]]
        marginal = part.mean(axis=0)
        # only p > 0 contributes; there marginal >= p / split_size > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0.0,
                             part * (np.log(part) - np.log(marginal)), 0.0)
        scores[s] = np.exp(terms.sum(axis=1).mean())
    return float(scores.mean()), float(scores.std())


# ---------------------------------------------------------------------------
# image metrics
# ---------------------------------------------------------------------------

def to_luminance(img: np.ndarray) -> np.ndarray:
    """8-bit RGB (H, W, 3) or grayscale (H, W) to float64 luma in [0, 255]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] != 3:
            raise DimensionError(f"expected 3 color channels, got {img.shape[2]}")
        return img @ REC601
    if img.ndim != 2:
        raise DimensionError(f"image must be (H, W) or (H, W, 3), got {img.shape}")
    return img


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _check_pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
         data_range: float = 255.0) -> float:
    """Single-scale SSIM on Rec.601 luminance, 11x11 Gaussian window.

    Windows are fully interior ('valid'); statistics use the weighted
    (biased) moments of the original formulation.
    """
    a, b = _check_pair(a, b)
    x = to_luminance(a)
    y = to_luminance(b)
    if min(x.shape) < window:
        raise ContractError(
            f"image sides must be >= {window}, got {x.shape}")
    w = _gaussian_window(window, sigma)
    from numpy.lib.stride_tricks import sliding_window_view
    wx = sliding_window_view(x, (window, window))
    wy = sliding_window_view(y, (window, window))
    mu_x = np.tensordot(wx, w, axes=([2, 3], [0, 1]))
    mu_y = np.tensordot(wy, w, axes=([2, 3], [0, 1]))
    xx = np.tensordot(wx * wx, w, axes=([2, 3], [0, 1]))
    yy = np.tensordot(wy * wy, w, axes=([2, 3], [0, 1]))
    xy = np.tensordot(wx * wy, w, axes=([2, 3], [0, 1]))
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov = xy - mu_x * mu_y
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float((num / den).mean())


def pixcorr(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation over flattened pixel values."""
    a, b = _check_pair(a, b)
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.linalg.norm(xc)
    ny = np.linalg.norm(yc)
    if nx == 0.0 or ny == 0.0:
        raise ContractError("pixcorr is undefined for constant images")
    return float(xc @ yc / (nx * ny))


# ---------------------------------------------------------------------------
# embedding similarity
# ---------------------------------------------------------------------------

def cosine_score(img_emb: np.ndarray, txt_emb: np.ndarray) -> float:
    """Mean cosine similarity over matched rows."""
    a, b = _check_features(img_emb, txt_emb)
    if a.shape[0] != b.shape[0]:
        raise ContractError(
            f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    na = np.maximum(np.linalg.norm(a, axis=1), 1e-12)
    nb = np.maximum(np.linalg.norm(b, axis=1), 1e-12)
    return float(((a * b).sum(axis=1) / (na * nb)).mean())


def _rowwise_corr(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    nx = np.maximum(np.linalg.norm(xc, axis=1), 1e-12)
    ny = np.maximum(np.linalg.norm(yc, axis=1), 1e-12)
    return (xc * yc).sum(axis=1) / (nx * ny)


def two_way_identification(gen_feat: np.ndarray, gt_feat: np.ndarray,
                           seed: int = 0, exhaustive: bool = False) -> float:
    """Probability that gen_i correlates higher with gt_i than a distractor.

    Default samples one distractor j != i per row (seeded); ``exhaustive``
    averages over all distractors. Ties count one half.
    """
    a, b = _check_features(gen_feat, gt_feat)
    n = a.shape[0]
    if a.shape[0] != b.shape[0]:
        raise ContractError(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    if n < 2:
        raise ContractError("two-way identification needs at least 2 rows")
    own = _rowwise_corr(a, b)
    if exhaustive:
        ac = a - a.mean(axis=1, keepdims=True)
        bc = b - b.mean(axis=1, keepdims=True)
        ac /= np.maximum(np.linalg.norm(ac, axis=1, keepdims=True), 1e-12)
        bc /= np.maximum(np.linalg.norm(bc, axis=1, keepdims=True), 1e-12)
        cross = ac @ bc.T
        wins = (own[:, None] > cross) + 0.5 * (own[:, None] == cross)
        np.fill_diagonal(wins, 0.0)
        return float(wins.sum() / (n * (n - 1)))
    rng = stream_generator(seed, "two_way/distractors")
    score = 0.0
    for i in range(n):
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        other = _rowwise_corr(a[i:i + 1], b[j:j + 1])[0]
        if own[i] > other:
            score += 1.0
        elif own[i] == other:
            score += 0.5
    return score / n


def swav_distance(gen_emb: np.ndarray, gt_emb: np.ndarray) -> float:
    """Cosine distance (1 - mean cosine) on upstream-provided features."""
    return 1.0 - cosine_score(gen_emb, gt_emb)
