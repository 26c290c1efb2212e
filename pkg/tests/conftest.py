"""Shared test utilities: finite-difference oracle and small fixtures."""

import numpy as np
import pytest

from neurosem.autodiff import Graph


def finite_difference_check(build_fn, arrays, n_coords=20, step=1e-3, seed=0):
    """Max relative error between analytic and central-difference gradients.

    ``build_fn(graph, tensors) -> scalar Tensor`` is rebuilt per evaluation
    (define-by-run), always in float64. Coordinates are sampled uniformly
    across all input arrays. Relative error uses
    |fd - an| / max(|fd| + |an|, 1e-6).
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    rng = np.random.default_rng(seed)
    g = Graph(np.float64)
    tensors = [g.tensor(a, requires_grad=True) for a in arrays]
    loss = build_fn(g, tensors)
    g.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    def eval_loss(mod_arrays):
        g2 = Graph(np.float64)
        ts = [g2.tensor(a, requires_grad=False) for a in mod_arrays]
        return float(build_fn(g2, ts).data)

    max_rel = 0.0
    for _ in range(n_coords):
        ti = int(rng.integers(len(arrays)))
        flat = int(rng.integers(arrays[ti].size))
        plus = [a.copy() for a in arrays]
        minus = [a.copy() for a in arrays]
        plus[ti].flat[flat] += step
        minus[ti].flat[flat] -= step
        fd = (eval_loss(plus) - eval_loss(minus)) / (2.0 * step)
        an = float(analytic[ti].flat[flat])
        rel = abs(fd - an) / max(abs(fd) + abs(an), 1e-6)
        max_rel = max(max_rel, rel)
    return max_rel


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def tiny_encoder_config(**overrides):
    """Small but complete encoder configuration for fast tests."""
    from neurosem.captions import Taxonomy
    defaults = dict(
        channels=4, samples=32, proj_dim=6, head_categories=Taxonomy().names,
        patch_len=8, d_model=8, n_spatial_layers=1, n_temporal_layers=1,
        n_attn_heads=2, ff_mult=2, dropout=0.0, seed=0)
    defaults.update(overrides)
    from neurosem.encoder import EncoderConfig
    return EncoderConfig(**defaults)


def tiny_synth(classes=4, epochs_per_class=6, channels=8, samples=64,
               snr=10.0, seed=0, **kw):
    from neurosem.data import SynthSpec, synth_generate
    spec = SynthSpec(classes=classes, epochs_per_class=epochs_per_class,
                     channels=channels, samples=samples, snr=snr, seed=seed,
                     informative_channels={c: (1, 3) for c in range(classes)},
                     embed_dim=kw.pop("embed_dim", 8), **kw)
    return synth_generate(spec)
