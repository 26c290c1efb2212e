"""Pure-numpy reference implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable
(and the ground truth the extension is tested against). Signatures and
semantics must match ``_fast.pyx`` exactly.
"""

import numpy as np

BACKEND = "python"


def adam_update(param, grad, m, v, bc1, bc2, lr, beta1, beta2, eps):
    """One fused in-place Adam update on flat arrays.

    ``bc1``/``bc2`` are the bias corrections 1 - beta^t for the current step.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    mhat = m / bc1
    vhat = v / bc2
    param -= lr * mhat / (np.sqrt(vhat) + eps)


def calibrate_bandwidths(sqd, perplexity, n_steps=50, tol=1e-5):
    """Per-point precisions beta_i = 1/(2 sigma_i^2) matching a target entropy.

    For each row of the squared-distance matrix, binary-search beta so the
    Shannon entropy of the conditional distribution p_{j|i} ~ exp(-d_ij beta)
    equals log(perplexity). Rows that converge stop updating; all rows run
    the same fixed iteration protocol.
    """
    sqd = np.asarray(sqd, dtype=np.float64)
    n = sqd.shape[0]
    target = np.log(perplexity)
    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(n_steps):
        if not active.any():
            break
        w = np.exp(-sqd * beta[:, None]) * offdiag
        sw = w.sum(axis=1)
        sw = np.maximum(sw, 1e-300)
        sdw = (sqd * w).sum(axis=1)
        entropy = np.log(sw) + beta * sdw / sw
        diff = entropy - target
        done = np.abs(diff) <= tol
        active = active & ~done
        too_flat = active & (diff > 0.0)  # entropy too high -> raise beta
        lo = np.where(too_flat, beta, lo)
        hi = np.where(active & ~too_flat, beta, hi)
        grow = too_flat & np.isinf(hi)
        shrink = active & ~too_flat & np.isinf(lo)
        mid_up = too_flat & ~grow
        mid_dn = active & ~too_flat & ~shrink
        beta = np.where(grow, beta * 2.0, beta)
        beta = np.where(shrink, beta * 0.5, beta)
        beta = np.where(mid_up, (lo + hi) * 0.5, beta)
        beta = np.where(mid_dn, (lo + hi) * 0.5, beta)
    return beta


def studentt_forces(p, y, eps=1e-12):
    """KL value and gradient of the heavy-tailed embedding objective.

    ``p`` is the symmetrized affinity matrix (zero diagonal, sums to ~1),
    ``y`` the current n x 2 embedding. Uses the Student-t kernel with one
    degree of freedom: w_ij = 1 / (1 + ||y_i - y_j||^2).

    Returns (grad, kl) with grad_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j).
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    diff = y[:, None, :] - y[None, :, :]
    w = 1.0 / (1.0 + (diff * diff).sum(axis=2))
    np.fill_diagonal(w, 0.0)
    z = max(w.sum(), eps)
    q = np.maximum(w / z, eps)
    mask = p > 0.0
    kl = float((p[mask] * np.log(p[mask] / q[mask])).sum())
    pq = (p - q) * w
    grad = 4.0 * (pq[:, :, None] * diff).sum(axis=1)
    return grad, kl


def idw_grid(px, py, values, grid_n, power=2.0, eps=1e-12):
    """Inverse-distance-weighted field on a grid_n x grid_n unit-square grid.

    Cells outside the unit circle are NaN. Cell centers coinciding with a
    sample point (within eps) take that sample's value exactly.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    coords = (np.arange(grid_n) + 0.5) / grid_n * 2.0 - 1.0
    gx = coords[None, :]
    gy = coords[:, None]
    outside = gx * gx + gy * gy > 1.0
    dx = gx[:, :, None] - px[None, None, :]
    dy = gy[:, :, None] - py[None, None, :]
    d2 = dx * dx + dy * dy
    hit = d2 <= eps * eps
    with np.errstate(divide="ignore"):
        if power == 2.0:  # common case, skip sqrt and pow entirely
            wgt = 1.0 / np.maximum(d2, eps * eps)
        else:
            wgt = 1.0 / np.maximum(np.sqrt(d2), eps) ** power
    field = (wgt * values).sum(axis=2) / wgt.sum(axis=2)
    any_hit = hit.any(axis=2)
    if any_hit.any():
        first = hit.argmax(axis=2)
        field = np.where(any_hit, values[first], field)
    field[outside] = np.nan
    return field
