"""Gradient-based input attribution and topographic rendering.

The saliency of a channel is the mean absolute gradient of the alignment
loss with respect to the raw input, aggregated over batch and time.
Restricting the loss to a single head's contrastive term yields per-head
(per-semantic-level) maps.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import encoder as enc
from . import svgplot
from .errors import ContractError, LayoutError
from .rng import SeedHub
from .training import batch_pair, infonce_symmetric

GRID_N = 64
IDW_POWER = 2.0


@dataclass
class SaliencyMap:
    per_channel: np.ndarray  # non-negative, one score per channel
    channel_names: list[str]
    head_scope: str  # one head name, or "all"

    def to_csv(self) -> str:
        lines = ["channel,score"]
        for name, score in zip(self.channel_names, self.per_channel):
            lines.append(f"{name},{float(score)!r}")
        return "\n".join(lines) + "\n"


def compute_saliency(checkpoint: enc.Checkpoint, dataset, bank,
                     head_scope: str = "all", tau: float = 0.07,
                     seed: int = 0, batch_size: int = 64) -> SaliencyMap:
    """Mean |d loss / d input| per channel over a dataset.

    The loss is the symmetric contrastive term of the scoped head (or the
    sum over all heads), against caption targets paired by epoch class.
    """
    cfg = checkpoint.config
    if len(dataset) == 0:
        raise ContractError("saliency needs a non-empty batch")
    if head_scope != "all" and head_scope not in cfg.head_categories:
        raise ContractError(f"unknown head scope {head_scope!r}")
    scoped = cfg.head_categories if head_scope == "all" else (head_scope,)

    hub = SeedHub(seed)
    xs = dataset.stacked()
    labels = dataset.labels()
    total = np.zeros(cfg.channels)
    count = 0
    for start in range(0, len(xs), batch_size):
        idx = slice(start, start + batch_size)
        batch = xs[idx]
        if batch.shape[0] < 2:
            continue  # contrastive term needs >= 2 rows
        targets, _ = batch_pair(labels[idx], bank, scoped,
                                hub.stream(f"pair/batch={start}"))

        def loss_fn(g, heads):
            loss = None
            for head in scoped:
                term = infonce_symmetric(heads[head], g.constant(targets[head]), tau)
                loss = term if loss is None else loss + term
            return loss

        _, grad = enc.encode_with_input_grad(batch, checkpoint.params, cfg, loss_fn)
        total += np.abs(grad).sum(axis=(0, 2))
        count += batch.shape[0] * cfg.samples
    if count == 0:
        raise ContractError("no batch had at least 2 epochs")
    return SaliencyMap(per_channel=total / count,
                       channel_names=list(dataset.channel_names),
                       head_scope=head_scope)


def render_topomap(smap: SaliencyMap, layout: dict, out_path,
                   grid_n: int = GRID_N) -> None:
    """Inverse-distance-weighted interpolation on the head circle, to SVG."""
    missing = [n for n in smap.channel_names if n not in layout]
    if missing:
        raise LayoutError(f"layout is missing channels: {missing}")
    pts = np.array([layout[n] for n in smap.channel_names], dtype=np.float64)
    values = np.asarray(smap.per_channel, dtype=np.float64)
    field = _kernels.idw_grid(np.ascontiguousarray(pts[:, 0]),
                              np.ascontiguousarray(pts[:, 1]),
                              np.ascontiguousarray(values),
                              grid_n, IDW_POWER)
    used = {n: layout[n] for n in smap.channel_names}
    svg = svgplot.topomap_svg(field, used, dict(zip(smap.channel_names, values)),
                              float(values.min()), float(values.max()),
                              title=f"saliency [{smap.head_scope}]")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(svg)
