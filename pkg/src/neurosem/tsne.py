"""Exact t-SNE for head-embedding visualization.

O(n^2) affinities with per-point bandwidths found by binary search, then
momentum gradient descent on KL(P || Q) with a one-degree Student-t
low-dimensional kernel. Early exaggeration for the first 250 iterations.

Points are internally processed in a canonical (lexicographic) order and
unsorted at the end, which makes the output equivariant to input
permutations for a fixed seed.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, svgplot
from .errors import ConfigError, ContractError
from .rng import stream_generator

BANDWIDTH_STEPS = 50
BANDWIDTH_TOL = 1e-5


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0

    def validate(self, n: int):
        if self.iterations < 250:
            raise ConfigError(f"iterations must be >= 250, got {self.iterations}")
        if not self.perplexity < (n - 1) / 3.0:
            raise ConfigError(
                f"perplexity {self.perplexity} too large for n={n}; "
                f"needs perplexity < (n-1)/3")
        if self.perplexity <= 1.0:
            raise ConfigError("perplexity must be > 1")


@dataclass
class Embedding2D:
    coords: np.ndarray  # n x 2
    labels: list = field(default_factory=list)


def squared_distances(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def perplexity_calibration(sq_distances: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-point Gaussian bandwidths sigma_i hitting the target perplexity.

    Binary search on the precision (50 steps, entropy tolerance 1e-5).
    Rows where the target is unreachable (for example all-equal distances)
    fall back to an infinite bandwidth, i.e. uniform conditionals, with a
    calibration warning.
    """
    sqd = np.ascontiguousarray(sq_distances, dtype=np.float64)
    n = sqd.shape[0]
    if sqd.shape != (n, n):
        raise ContractError(f"distance matrix must be square, got {sqd.shape}")
    betas = np.asarray(_kernels.calibrate_bandwidths(
        sqd, perplexity, BANDWIDTH_STEPS, BANDWIDTH_TOL))
    achieved = conditional_entropy(sqd, betas)
    bad = np.abs(achieved - np.log(perplexity)) > 1e-3
    if bad.any():
        warnings.warn(
            f"{int(bad.sum())} point(s) could not reach the target perplexity; "
            "falling back to uniform conditionals",
            category=UserWarning)
        betas = betas.copy()
        betas[bad] = 0.0  # exp(0) = 1 -> uniform row
    with np.errstate(divide="ignore"):
        return np.where(betas > 0.0, np.sqrt(0.5 / np.maximum(betas, 1e-300)), np.inf)


def _betas_from_sigmas(sigmas: np.ndarray) -> np.ndarray:
    betas = np.zeros_like(sigmas)
    finite = np.isfinite(sigmas)
    betas[finite] = 0.5 / sigmas[finite] ** 2
    return betas


def conditional_probabilities(sqd: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Row-normalized Gaussian conditionals p_{j|i} with zero diagonal."""
    w = np.exp(-sqd * betas[:, None])
    np.fill_diagonal(w, 0.0)
    return w / np.maximum(w.sum(axis=1, keepdims=True), 1e-300)


def conditional_entropy(sqd: np.ndarray, betas: np.ndarray) -> np.ndarray:
    p = conditional_probabilities(sqd, betas)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(p > 0.0, np.log(p), 0.0)
    return -(p * logs).sum(axis=1)


def joint_affinities(x: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinity matrix P (non-negative, zero diagonal, sums to 1)."""
    sqd = squared_distances(x)
    sigmas = perplexity_calibration(sqd, perplexity)
    cond = conditional_probabilities(sqd, _betas_from_sigmas(sigmas))
    p = (cond + cond.T) / (2.0 * x.shape[0])
    return p


def tsne(x: np.ndarray, config: TsneConfig, labels=None):
    """Embed n x d points into 2-D; returns (Embedding2D, kl_trace).

    Deterministic per seed; the KL trace holds the objective value of each
    iteration (against the exaggerated P during the exaggeration phase).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 10:
        raise ContractError(f"t-SNE needs at least 10 points, got {n}")
    config.validate(n)
    if labels is not None and len(labels) != n:
        raise ContractError("labels length must match the number of points")

    # canonical (lexicographic) processing order -> permutation equivariance
    order = np.lexsort(x.T[::-1])
    xc = x[order]

    p = joint_affinities(xc, config.perplexity)
    gen = stream_generator(config.seed, "tsne/init")
    y = 1e-4 * gen.standard_normal((n, 2))
    update = np.zeros_like(y)
    trace = []
    for it in range(config.iterations):
        pe = p * config.exaggeration if it < config.exaggeration_iters else p
        if it == config.exaggeration_iters:
            update[:] = 0.0  # objective switches here; stale velocity overshoots
        grad, kl = _kernels.studentt_forces(np.ascontiguousarray(pe), y)
        trace.append(float(kl))
        mom = (config.momentum_start if it < config.momentum_switch
               else config.momentum_final)
        update = mom * update - config.learning_rate * grad
        y = y + update
        y = y - y.mean(axis=0)

    out = np.empty_like(y)
    out[order] = y
    emb = Embedding2D(coords=out, labels=list(labels) if labels is not None else [])
    return emb, trace


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def export_csv(emb: Embedding2D, path) -> None:
    labels = emb.labels or [""] * len(emb.coords)
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write("x,y,label\n")
        for (x, y), lab in zip(emb.coords, labels):
            fp.write(f"{float(x)!r},{float(y)!r},{lab}\n")


def export_scatter(emb: Embedding2D, path) -> None:
    labels = emb.labels or [""] * len(emb.coords)
    svg = svgplot.scatter_svg(emb.coords, labels)
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(svg)
