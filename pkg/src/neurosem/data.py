"""EEG dataset ingestion, preprocessing, splitting, and synthesis.

Dataset files are a single JSON header line followed by two binary
tensors: the epochs (epochs x channels x samples) and the labels
(epochs x 2, class then subject). The synthetic generator plants
class-specific sinusoids so downstream claims can be verified
quantitatively without the original recordings.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import captions, tensorfile
from .errors import (ContractError, DataError, DimensionError,
                     StratificationError)
from .rng import stream_generator


@dataclass
class EegEpoch:
    data: np.ndarray  # channels x samples, microvolts
    class_label: int
    subject_id: int = 0


@dataclass
class EegDataset:
    epochs: list[EegEpoch]
    channel_names: list[str]
    sample_rate: float

    @property
    def channels(self) -> int:
        return len(self.channel_names)

    @property
    def samples(self) -> int:
        return self.epochs[0].data.shape[1] if self.epochs else 0

    def __len__(self) -> int:
        return len(self.epochs)

    def stacked(self) -> np.ndarray:
        """All epochs as one epochs x channels x samples array."""
        return np.stack([e.data for e in self.epochs])

    def labels(self) -> np.ndarray:
        return np.array([e.class_label for e in self.epochs], dtype=np.int64)


@dataclass
class SynthSpec:
    """Planted-structure dataset description.

    Every class emits a sinusoid at 4 + 2c Hz (unit amplitude, random phase
    per epoch) on its informative channels, buried in white noise so that
    the per-channel signal-to-noise power ratio equals ``snr``. The paired
    caption bank encodes class identity as a one-hot-plus-noise direction
    per category; categories outside ``informative_categories`` get
    class-independent directions instead.
    """

    classes: int = 8
    epochs_per_class: int = 40
    channels: int = 32
    samples: int = 256
    informative_channels: dict[int, tuple[int, ...]] = field(default_factory=dict)
    snr: float = 10.0
    seed: int = 0
    sample_rate: float = 256.0
    embed_dim: int = 16
    bank_noise: float = 0.1
    informative_categories: tuple[str, ...] | None = None

    def channel_set(self, class_label: int) -> tuple[int, ...]:
        chans = self.informative_channels.get(class_label, (3, 7, 11))
        for ch in chans:
            if not 0 <= ch < self.channels:
                raise ContractError(
                    f"informative channel {ch} out of range for {self.channels} channels")
        return chans


def default_channel_names(channels: int) -> list[str]:
    return [f"C{i:02d}" for i in range(channels)]


def save_dataset(dataset: EegDataset, path) -> None:
    header = {
        "channels": dataset.channels,
        "samples": dataset.samples,
        "sample_rate": dataset.sample_rate,
        "channel_names": dataset.channel_names,
        "epochs": len(dataset),
    }
    data = dataset.stacked().astype(np.float32)
    labels = np.array([[e.class_label, e.subject_id] for e in dataset.epochs],
                      dtype=np.float64)
    with open(path, "wb") as fp:
        fp.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        tensorfile.write_tensor(fp, data)
        tensorfile.write_tensor(fp, labels)


def load_dataset(path) -> EegDataset:
    """Read a dataset file, validating shapes and finiteness."""
    with open(path, "rb") as fp:
        header_line = fp.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"invalid dataset header: {exc}") from None
        for key in ("channels", "samples", "sample_rate", "channel_names", "epochs"):
            if key not in header:
                raise DataError(f"dataset header is missing {key!r}")
        data = tensorfile.read_tensor(fp)
        labels = tensorfile.read_tensor(fp)
    n, channels, samples = (header["epochs"], header["channels"], header["samples"])
    if len(header["channel_names"]) != channels:
        raise DimensionError(
            f"header lists {len(header['channel_names'])} channel names for "
            f"{channels} channels")
    if data.shape != (n, channels, samples):
        raise DimensionError(
            f"epoch tensor shape {data.shape} does not match header "
            f"({n}, {channels}, {samples})")
    if labels.shape != (n, 2):
        raise DimensionError(f"label tensor shape {labels.shape}, expected ({n}, 2)")
    epochs = []
    for i in range(n):
        if not np.isfinite(data[i]).all():
            raise DataError(f"epoch {i} contains non-finite values")
        epochs.append(EegEpoch(data=np.asarray(data[i], dtype=np.float64),
                               class_label=int(labels[i, 0]),
                               subject_id=int(labels[i, 1])))
    return EegDataset(epochs=epochs, channel_names=list(header["channel_names"]),
                      sample_rate=float(header["sample_rate"]))


def zscore(epoch: EegEpoch, eps: float = 1e-8) -> EegEpoch:
    """Standardize each channel to zero mean, unit variance (1/n convention)."""
    if epoch.data.shape[1] < 2:
        raise ContractError("z-scoring needs at least 2 samples per channel")
    x = epoch.data
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    std = np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    return EegEpoch(data=xc / std, class_label=epoch.class_label,
                    subject_id=epoch.subject_id)


def split(dataset: EegDataset, ratios, seed: int):
    """Class-stratified partition into len(ratios) disjoint datasets.

    Deterministic per seed. Within each class the epochs are shuffled, then
    allocated by largest-remainder rounding with every part guaranteed at
    least one epoch.
    """
    ratios = [float(r) for r in ratios]
    if any(r <= 0 for r in ratios):
        raise ContractError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ContractError(f"split ratios must sum to 1, got {sum(ratios)}")
    parts = len(ratios)
    by_class: dict[int, list[int]] = {}
    for idx, ep in enumerate(dataset.epochs):
        by_class.setdefault(ep.class_label, []).append(idx)
    short = {c: len(ix) for c, ix in by_class.items() if len(ix) < parts}
    if short:
        raise StratificationError(
            f"classes with fewer epochs than split parts: {short}")
    buckets: list[list[int]] = [[] for _ in range(parts)]
    for c in sorted(by_class):
        idxs = list(by_class[c])
        gen = stream_generator(seed, f"split/class={c}")
        gen.shuffle(idxs)
        n = len(idxs)
        quotas = [int(math.floor(r * n)) for r in ratios]
        remainders = [r * n - q for r, q in zip(ratios, quotas)]
        while sum(quotas) < n:
            k = max(range(parts), key=lambda i: (remainders[i], -i))
            quotas[k] += 1
            remainders[k] = -1.0
        for k in range(parts):  # every part gets at least one epoch per class
            while quotas[k] == 0:
                donor = max(range(parts), key=lambda i: quotas[i])
                quotas[donor] -= 1
                quotas[k] += 1
        start = 0
        for k, q in enumerate(quotas):
            buckets[k].extend(idxs[start:start + q])
            start += q
    out = []
    for bucket in buckets:
        bucket.sort()
        out.append(EegDataset(epochs=[dataset.epochs[i] for i in bucket],
                              channel_names=list(dataset.channel_names),
                              sample_rate=dataset.sample_rate))
    return tuple(out)


def synth_generate(spec: SynthSpec):
    """Deterministic planted-structure dataset plus matching caption bank."""
    if spec.embed_dim < max(2, spec.classes):
        raise ContractError(
            f"embed_dim {spec.embed_dim} too small for {spec.classes} classes")
    taxonomy = captions.Taxonomy()
    informative = (tuple(taxonomy.names) if spec.informative_categories is None
                   else tuple(spec.informative_categories))
    for name in informative:
        if name not in taxonomy:
            raise ContractError(f"unknown category {name!r}")

    noise_std = math.sqrt(0.5 / spec.snr) if math.isfinite(spec.snr) else 0.0
    t = np.arange(spec.samples) / spec.sample_rate
    epochs = []
    for c in range(spec.classes):
        freq = 4.0 + 2.0 * c
        chans = spec.channel_set(c)
        for k in range(spec.epochs_per_class):
            gen = stream_generator(spec.seed, f"synth/epoch/class={c}/rep={k}")
            phase = gen.uniform(0.0, 2.0 * math.pi)
            x = gen.normal(0.0, noise_std, size=(spec.channels, spec.samples)) \
                if noise_std > 0 else np.zeros((spec.channels, spec.samples))
            burst = np.sin(2.0 * math.pi * freq * t + phase)
            for ch in chans:
                x[ch] += burst
            epochs.append(EegEpoch(data=x, class_label=c, subject_id=0))
    dataset = EegDataset(epochs=epochs,
                         channel_names=default_channel_names(spec.channels),
                         sample_rate=spec.sample_rate)

    entries = []
    for c in range(spec.classes):
        for name in taxonomy.names:
            gen = stream_generator(spec.seed, f"synth/caption/class={c}/cat={name}")
            if name in informative:
                vec = np.zeros(spec.embed_dim)
                vec[c] = 1.0
                vec += spec.bank_noise * gen.normal(size=spec.embed_dim)
            else:
                # Class-independent direction: one anchor per category plus
                # per-entry jitter, so no head can decode class from it.
                anchor_gen = stream_generator(spec.seed, f"synth/anchor/cat={name}")
                vec = anchor_gen.normal(size=spec.embed_dim)
                vec /= np.linalg.norm(vec)
                vec += 3.0 * spec.bank_noise * gen.normal(size=spec.embed_dim)
            vec /= np.linalg.norm(vec)
            cat = taxonomy[name]
            entries.append(captions.CaptionEntry(
                id=f"c{c}_{name}",
                class_label=c,
                category=cat,
                text=f"{name.lower()} cue for class {c}",
                embedding=vec,
            ))
    bank = captions.CaptionBank(entries=entries, dim=spec.embed_dim,
                                classes=spec.classes, taxonomy=taxonomy)
    return dataset, bank


# ---------------------------------------------------------------------------
# channel layout (for topographic rendering)
# ---------------------------------------------------------------------------

def sunflower_layout(channel_names: list[str]) -> dict[str, tuple[float, float]]:
    """Evenly spread channels over the unit head circle (golden-angle spiral)."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    n = len(channel_names)
    layout = {}
    for i, name in enumerate(channel_names):
        r = 0.95 * math.sqrt((i + 0.5) / n)
        theta = i * golden
        layout[name] = (r * math.cos(theta), r * math.sin(theta))
    return layout


def save_layout(layout: dict[str, tuple[float, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write("name,x,y\n")
        for name, (x, y) in layout.items():
            fp.write(f"{name},{x:.6f},{y:.6f}\n")


def load_layout(path) -> dict[str, tuple[float, float]]:
    layout = {}
    with open(path, "r", encoding="utf-8") as fp:
        header = fp.readline().strip()
        if header != "name,x,y":
            raise DataError(f"layout header must be 'name,x,y', got {header!r}")
        for line_no, line in enumerate(fp, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 3:
                raise DataError(f"layout line {line_no}: expected 3 fields")
            name, xs, ys = fields
            try:
                x, y = float(xs), float(ys)
            except ValueError:
                raise DataError(f"layout line {line_no}: bad coordinates") from None
            if not (-1.0 <= x <= 1.0 and -1.0 <= y <= 1.0):
                raise DataError(
                    f"layout line {line_no}: coordinates out of [-1, 1]")
            layout[name] = (x, y)
    return layout
