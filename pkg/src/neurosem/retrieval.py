"""Caption retrieval, prompt assembly, ensemble classification, dominance.

Each head searches only its own category subset; unit-norm embeddings make
the dot product a cosine. Prompts concatenate the retrieved texts in
low -> mid -> high order for the external text-to-image endpoint.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import requests

from . import captions as cap
from . import encoder as enc
from .errors import ContractError, TransportError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PROMPT_POLICIES = ("all", "top2")


@dataclass
class RetrievalResult:
    """Ranked (caption_id, cosine) per head for one epoch."""

    per_head: dict[str, list[tuple[str, float]]]
    epoch_index: int = 0
    true_class: int | None = None


@dataclass
class PromptBundle:
    prompt: str
    sources: dict[str, list[str]]
    epoch_index: int = 0


@dataclass
class DominanceReport:
    fractions: dict[str, float]

    def to_csv(self) -> str:
        lines = ["head,fraction"]
        for head, frac in self.fractions.items():
            lines.append(f"{head},{frac!r}")
        return "\n".join(lines) + "\n"


def topk_captions(embedding: np.ndarray, candidates: list, k: int):
    """Top-k candidates by cosine; ties broken by ascending caption id."""
    if not candidates:
        raise ContractError("topk_captions needs a non-empty candidate list")
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    ordered = sorted(candidates, key=lambda e: e.id)
    scores = np.array([float(np.dot(embedding, e.embedding)) for e in ordered])
    top = np.argsort(-scores, kind="stable")[:k]
    return [(ordered[i].id, float(scores[i])) for i in top]


def retrieve_dataset(checkpoint: enc.Checkpoint, dataset, bank: cap.CaptionBank,
                     k: int = 1) -> list[RetrievalResult]:
    """Per-head top-k retrieval for every epoch of a dataset."""
    cfg = checkpoint.config
    embs = enc.encode_dataset(dataset, checkpoint.params, cfg)
    labels = dataset.labels()
    subsets = {head: cap.category_subset(bank, head) for head in cfg.head_categories}
    results = []
    for i in range(len(dataset)):
        per_head = {
            head: topk_captions(embs[head][i].astype(np.float64), subsets[head], k)
            for head in cfg.head_categories
        }
        results.append(RetrievalResult(per_head=per_head, epoch_index=i,
                                       true_class=int(labels[i])))
    return results


def assemble_prompt(result: RetrievalResult, bank: cap.CaptionBank,
                    policy: str = "all") -> PromptBundle:
    """Join each contributing head's top caption text into one prompt.

    Heads contribute in low -> mid -> high order (taxonomy order within a
    level); exact duplicate texts are collapsed keeping the first. The
    ``top2`` policy keeps only the two heads with the highest top-1 cosine.
    """
    if policy not in PROMPT_POLICIES:
        raise ContractError(f"unknown prompt policy {policy!r}")
    order = [h for h in bank.taxonomy.names if result.per_head.get(h)]
    if policy == "top2":
        ranked = sorted(order, key=lambda h: (-result.per_head[h][0][1],
                                              bank.taxonomy.index(h)))
        keep = set(ranked[:2])
        order = [h for h in order if h in keep]
    pieces = []
    seen = set()
    sources: dict[str, list[str]] = {}
    for head in order:
        cid = result.per_head[head][0][0]
        sources[head] = [cid]
        text = bank.entry(cid).text
        if text not in seen:
            seen.add(text)
            pieces.append(text)
    return PromptBundle(prompt=", ".join(pieces), sources=sources,
                        epoch_index=result.epoch_index)


def ensemble_classify(result: RetrievalResult, bank: cap.CaptionBank) -> int:
    """Majority vote over the heads' top-1 caption classes.

    Ties go to the class with the highest summed cosine, then to the lowest
    class index. Head processing order does not matter.
    """
    votes: dict[int, int] = {}
    cos_sum: dict[int, float] = {}
    for head, ranked in result.per_head.items():
        if not ranked:
            raise ContractError(f"head {head!r} has no retrievals")
        cid, score = ranked[0]
        c = cap.class_of(bank, cid)
        votes[c] = votes.get(c, 0) + 1
        cos_sum[c] = cos_sum.get(c, 0.0) + score
    best = max(votes.values())
    tied = [c for c, v in votes.items() if v == best]
    tied.sort(key=lambda c: (-cos_sum[c], c))
    return tied[0]


def head_dominance(results: list[RetrievalResult],
                   taxonomy: cap.Taxonomy) -> DominanceReport:
    """Fraction of epochs on which each head holds the best top-1 cosine.

    Ties go to the lowest taxonomy index; fractions sum to one.
    """
    if not results:
        raise ContractError("head_dominance needs at least one epoch")
    counts = {name: 0 for name in taxonomy.names}
    for res in results:
        winner = None
        best = -np.inf
        for name in taxonomy.names:
            ranked = res.per_head.get(name)
            if not ranked:
                continue
            score = ranked[0][1]
            if score > best:
                best = score
                winner = name
        if winner is None:
            raise ContractError("an epoch has no retrievals in any head")
        counts[winner] += 1
    n = len(results)
    return DominanceReport({name: counts[name] / n for name in taxonomy.names})


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def manifest_row(result: RetrievalResult, predicted: int | None,
                 prompt: str) -> dict:
    return {
        "epoch": result.epoch_index,
        "true_class": result.true_class,
        "predicted_class": predicted,
        "per_head": {
            head: [{"id": cid, "score": score} for cid, score in ranked]
            for head, ranked in result.per_head.items()
        },
        "prompt": prompt,
    }


def write_manifest(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for row in rows:
            fp.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fp:
        for line in fp:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def result_from_manifest(row: dict) -> RetrievalResult:
    per_head = {
        head: [(r["id"], float(r["score"])) for r in ranked]
        for head, ranked in row["per_head"].items()
    }
    return RetrievalResult(per_head=per_head, epoch_index=int(row["epoch"]),
                           true_class=row.get("true_class"))


# ---------------------------------------------------------------------------
# endpoint dispatch
# ---------------------------------------------------------------------------

def dispatch_prompt(bundle: PromptBundle, endpoint_url: str, out_dir,
                    timeout: float = 30.0, seed: int | None = None) -> str:
    """POST one prompt; write the returned PNG; return the file path.

    Raises TransportError on network failure, non-success status, or a
    payload that is not a PNG.
    """
    body = {"prompt": bundle.prompt}
    if seed is not None:
        body["seed"] = int(seed)
    try:
        resp = requests.post(endpoint_url, json=body, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"endpoint request failed: {exc}") from exc
    if resp.status_code != 200:
        raise TransportError(
            f"endpoint returned status {resp.status_code}",
            status=resp.status_code, body=resp.content[:512])
    if not resp.content.startswith(PNG_SIGNATURE):
        raise TransportError("endpoint payload is not a PNG",
                             status=resp.status_code, body=resp.content[:512])
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"epoch_{bundle.epoch_index:05d}.png")
    with open(path, "wb") as fp:
        fp.write(resp.content)
    return path


def dispatch_all(bundles: list[PromptBundle], endpoint_url: str, out_dir,
                 timeout: float = 30.0, max_workers: int = 4,
                 seed: int | None = None) -> list[dict]:
    """Dispatch every bundle with bounded concurrency.

    Per-epoch failures are recorded, never raised, so one bad epoch cannot
    abort the batch. Rows come back sorted by epoch.
    """
    def one(bundle):
        try:
            path = dispatch_prompt(bundle, endpoint_url, out_dir,
                                   timeout=timeout, seed=seed)
            return {"epoch": bundle.epoch_index, "prompt": bundle.prompt,
                    "status": "ok", "file": os.path.basename(path)}
        except TransportError as exc:
            return {"epoch": bundle.epoch_index, "prompt": bundle.prompt,
                    "status": "error", "error": str(exc)}

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(one, bundles))
    return sorted(rows, key=lambda r: r["epoch"])
