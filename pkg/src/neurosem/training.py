"""Contrastive alignment of head embeddings to caption embeddings.

The objective is a symmetric InfoNCE over scaled cosine logits (matched
rows are positives, everything else repels); an MSE alternative exists for
the loss ablation. Head losses are summed unweighted and optimized with
Adam over shuffled batches.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import captions as cap
from . import encoder as enc
from .autodiff import Graph
from .errors import ConfigError, ContractError, CoverageError, DimensionError
from .optim import AdamState, adam_step
from .rng import SeedHub

LOSS_KINDS = ("contrastive", "mse")


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    temperature: float = 0.07
    loss_kind: str = "contrastive"
    active_heads: tuple = ()  # empty means all heads
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        self.active_heads = tuple(self.active_heads)
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.loss_kind == "contrastive" and self.batch_size < 2:
            raise ConfigError("contrastive loss needs batch_size >= 2")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # {"epoch", "loss", "val_acc": {head: acc}}

    def head_names(self):
        if not self.epochs or not self.epochs[0]["val_acc"]:
            return []
        return list(self.epochs[0]["val_acc"].keys())

    def to_csv(self) -> str:
        heads = self.head_names()
        lines = ["epoch,loss" + "".join(f",{h}:acc" for h in heads)]
        for rec in self.epochs:
            row = f"{rec['epoch']},{rec['loss']!r}"
            for h in heads:
                row += f",{rec['val_acc'][h]!r}"
            lines.append(row)
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def infonce_symmetric(e, t, tau: float):
    """Symmetric InfoNCE on a graph: 0.5 * (row CE + column CE) of E T'/tau.

    ``e`` and ``t`` are (B, D) tensors on the same graph with unit rows;
    matched rows are the positive pairs (diagonal targets).
    """
    if tau <= 0:
        raise ContractError(f"temperature must be > 0, got {tau}")
    if e.data.shape != t.data.shape:
        raise DimensionError(
            f"embedding/target shapes differ: {e.data.shape} vs {t.data.shape}")
    if e.data.shape[0] < 2:
        raise ContractError("contrastive loss needs a batch of at least 2")
    logits = ad.scale(ad.matmul(e, ad.transpose(t, (1, 0))), 1.0 / tau)
    diag = ad.diagonal(logits)
    row = ad.mean(ad.sub(ad.logsumexp(logits, axis=1), diag))
    col = ad.mean(ad.sub(ad.logsumexp(logits, axis=0), diag))
    return ad.scale(ad.add(row, col), 0.5)


def mse_alignment_loss(e, t):
    """Mean squared error over all entries of matched pairs."""
    if e.data.shape != t.data.shape:
        raise DimensionError(
            f"embedding/target shapes differ: {e.data.shape} vs {t.data.shape}")
    return ad.mean(ad.square(ad.sub(e, t)))


def infonce_value(e: np.ndarray, t: np.ndarray, tau: float) -> float:
    """Numeric convenience wrapper (float64 throwaway graph)."""
    g = Graph(dtype=np.float64)
    return float(infonce_symmetric(g.constant(e), g.constant(t), tau).data)


def mse_value(e: np.ndarray, t: np.ndarray) -> float:
    g = Graph(dtype=np.float64)
    return float(mse_alignment_loss(g.constant(e), g.constant(t)).data)


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------

def batch_pair(classes, bank: cap.CaptionBank, active_heads, gen):
    """Per-head caption target matrix for a batch of class labels.

    Row i of head h is the embedding of a caption with that row's class and
    category h; when several captions qualify one is drawn uniformly from
    ``gen`` (single candidates consume no randomness).
    """
    targets = {}
    ids = {}
    for head in active_heads:
        rows = np.empty((len(classes), bank.dim))
        chosen = []
        for i, c in enumerate(classes):
            cands = bank.candidates(int(c), head)
            if not cands:
                raise CoverageError(f"bank has no caption for (class={c}, {head})")
            pick = cands[int(gen.integers(len(cands)))] if len(cands) > 1 else cands[0]
            rows[i] = pick.embedding
            chosen.append(pick.id)
        targets[head] = rows
        ids[head] = chosen
    return targets, ids


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _check_bank_match(cfg: enc.EncoderConfig, bank: cap.CaptionBank):
    if tuple(cfg.head_categories) != bank.taxonomy.names:
        raise ConfigError(
            "encoder head categories do not match the bank taxonomy: "
            f"{cfg.head_categories} vs {bank.taxonomy.names}")
    if cfg.proj_dim != bank.dim:
        raise DimensionError(
            f"encoder proj_dim {cfg.proj_dim} != bank embedding dim {bank.dim}")


def train(train_set, bank: cap.CaptionBank, encoder_config: enc.EncoderConfig,
          train_config: TrainConfig, val_set=None, checkpoint_dir=None):
    """Full training run; returns (Checkpoint, TrainHistory).

    The checkpoint holds the best-validation parameters when a validation
    set is given, else the final parameters. Deterministic per seed.
    """
    _check_bank_match(encoder_config, bank)
    active = train_config.active_heads or encoder_config.head_categories
    for head in active:
        if head not in encoder_config.head_categories:
            raise ConfigError(f"active head {head!r} is not an encoder head")

    hub = SeedHub(train_config.seed)
    params = enc.init_params(encoder_config)
    state = AdamState.for_params(params, learning_rate=train_config.learning_rate)
    xs = np.ascontiguousarray(train_set.stacked(), dtype=np.float32)
    labels = train_set.labels()
    n = len(xs)
    min_batch = 2 if train_config.loss_kind == "contrastive" else 1

    history = TrainHistory()
    best = None  # (mean val acc, epoch, params snapshot)
    for epoch in range(train_config.epochs):
        order = hub.stream(f"shuffle/epoch={epoch}").permutation(n)
        losses = []
        n_batches = 0
        for start in range(0, n, train_config.batch_size):
            idx = order[start:start + train_config.batch_size]
            if len(idx) < min_batch:
                continue
            g = Graph(dtype=np.float32)
            x = g.constant(xs[idx])
            p = enc.graph_params(g, params, requires_grad=True)
            drop_gen = hub.stream(f"dropout/epoch={epoch}/batch={n_batches}")
            heads = enc.encode_graph(x, p, encoder_config, train_mode=True,
                                     drop_gen=drop_gen)
            pair_gen = hub.stream(f"pair/epoch={epoch}/batch={n_batches}")
            targets, _ = batch_pair(labels[idx], bank, active, pair_gen)
            loss = None
            for head in active:
                t = g.constant(targets[head])
                if train_config.loss_kind == "contrastive":
                    term = infonce_symmetric(heads[head], t, train_config.temperature)
                else:
                    term = mse_alignment_loss(heads[head], t)
                loss = term if loss is None else ad.add(loss, term)
            g.backward(loss)
            grads = {name: p[name].grad for name in params if p[name].grad is not None}
            adam_step(params, grads, state)
            losses.append(float(loss.data))
            g.release()
            n_batches += 1
        record = {"epoch": epoch, "loss": float(np.mean(losses)), "val_acc": {}}
        if val_set is not None:
            record["val_acc"] = evaluate_retrieval_params(
                params, encoder_config, val_set, bank, k=1, heads=active)
            mean_acc = float(np.mean(list(record["val_acc"].values())))
            if best is None or mean_acc > best[0]:
                best = (mean_acc, epoch, {k: v.copy() for k, v in params.items()})
        history.epochs.append(record)
        if (checkpoint_dir and train_config.checkpoint_every
                and (epoch + 1) % train_config.checkpoint_every == 0):
            snap = enc.Checkpoint(encoder_config, params,
                                  {"epoch": epoch, "seed": train_config.seed})
            enc.save_checkpoint(snap, f"{checkpoint_dir}/epoch_{epoch:04d}")

    if best is not None:
        best_acc, best_epoch, best_params = best
    else:
        best_acc, best_epoch, best_params = float("nan"), train_config.epochs - 1, params
    manifest = {
        "seed": train_config.seed,
        "epoch": best_epoch,
        "loss_history": [rec["loss"] for rec in history.epochs],
        "val_history": [rec["val_acc"] for rec in history.epochs],
        "best_val_acc": best_acc,
        "train": {
            "batch_size": train_config.batch_size,
            "epochs": train_config.epochs,
            "learning_rate": train_config.learning_rate,
            "temperature": train_config.temperature,
            "loss_kind": train_config.loss_kind,
            "active_heads": list(active),
        },
    }
    return enc.Checkpoint(encoder_config, best_params, manifest), history


# ---------------------------------------------------------------------------
# retrieval evaluation
# ---------------------------------------------------------------------------

def evaluate_retrieval_params(params, cfg, dataset, bank, k=1, heads=None):
    """Per-head top-k retrieval accuracy within each head's category subset."""
    heads = heads or cfg.head_categories
    embs = enc.encode_dataset(dataset, params, cfg)
    labels = dataset.labels()
    out = {}
    for head in heads:
        cands = cap.category_subset(bank, head)  # id-sorted -> stable tie-break
        mat = np.stack([e.embedding for e in cands])
        classes = np.array([e.class_label for e in cands])
        scores = embs[head].astype(np.float64) @ mat.T
        hits = 0
        for i in range(len(labels)):
            top = np.argsort(-scores[i], kind="stable")[:k]
            hits += int((classes[top] == labels[i]).any())
        out[head] = hits / max(len(labels), 1)
    return out


def evaluate_retrieval(checkpoint: enc.Checkpoint, dataset, bank, k=1, heads=None):
    return evaluate_retrieval_params(checkpoint.params, checkpoint.config,
                                     dataset, bank, k=k, heads=heads)


# ---------------------------------------------------------------------------
# loss ablation
# ---------------------------------------------------------------------------

def run_loss_ablation(train_set, bank, encoder_config, train_config,
                      val_set=None, eval_set=None):
    """Train once per loss kind on identical data; returns comparison rows.

    Each row: {"loss_kind", "final_loss", "mean_acc", "per_head": {...}}
    evaluated on ``eval_set`` (falls back to ``val_set``).
    """
    target = eval_set if eval_set is not None else val_set
    rows = []
    for kind in LOSS_KINDS:
        cfg = TrainConfig(
            batch_size=train_config.batch_size, epochs=train_config.epochs,
            learning_rate=train_config.learning_rate,
            temperature=train_config.temperature, loss_kind=kind,
            active_heads=train_config.active_heads, seed=train_config.seed,
            checkpoint_every=0)
        ckpt, history = train(train_set, bank, encoder_config, cfg, val_set=val_set)
        per_head = evaluate_retrieval(ckpt, target, bank, k=1) if target is not None else {}
        rows.append({
            "loss_kind": kind,
            "final_loss": history.epochs[-1]["loss"],
            "mean_acc": float(np.mean(list(per_head.values()))) if per_head else float("nan"),
            "per_head": per_head,
        })
    return rows


def ablation_csv(rows) -> str:
    heads = list(rows[0]["per_head"].keys()) if rows and rows[0]["per_head"] else []
    lines = ["loss_kind,final_loss,mean_acc" + "".join(f",{h}:acc" for h in heads)]
    for row in rows:
        line = f"{row['loss_kind']},{row['final_loss']!r},{row['mean_acc']!r}"
        for h in heads:
            line += f",{row['per_head'][h]!r}"
        lines.append(line)
    return "\n".join(lines) + "\n"
