"""Command-line surface.

Subcommands: synth, train, retrieve, classify, saliency, tsne, metrics,
prompt. Every run writes a manifest (effective options, config hash,
package version, outputs) under <out>/manifests/ so it can be reproduced
exactly. Exit codes: 0 ok, 2 config, 3 data, 4 runtime/numeric, 5
transport.
"""

import json
import os
import sys

import click
import numpy as np

from . import __version__
from . import captions as cap
from . import config as cfgmod
from . import data as datamod
from . import encoder as enc
from . import metrics as metricsmod
from . import retrieval as ret
from . import saliency as salmod
from . import tensorfile
from . import training as trainmod
from . import tsne as tsnemod
from .errors import (ConfigError, ContractError, DataError, NeurosemError,
                     NumericError, TransportError)

ENDPOINT_ENV = "NEUROSEM_ENDPOINT"


def _ensure_dirs(out_dir):
    for sub in ("checkpoints", "logs", "figures", "manifests"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)


def _write_manifest(out_dir, command, options: dict, outputs: list,
                    config: cfgmod.RunConfig | None = None):
    payload = {
        "command": command,
        "options": options,
        "outputs": sorted(outputs),
        "version": __version__,
    }
    if config is not None:
        payload["config"] = config.to_dict()
        payload["config_hash"] = config.config_hash()
    path = os.path.join(out_dir, "manifests", f"{command}.json")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _load_split(dataset_path, which, ratios, split_seed):
    dataset = datamod.load_dataset(dataset_path)
    if which == "all":
        return dataset
    parts = datamod.split(dataset, ratios, split_seed)
    return dict(zip(("train", "val", "test"), parts))[which]


def _parse_ratios(text):
    ratios = [float(x) for x in text.split(",")]
    if len(ratios) != 3:
        raise ConfigError("--ratios wants three comma-separated values")
    return ratios


@click.group()
@click.version_option(__version__)
def cli():
    """EEG-to-caption alignment toolkit."""


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

@cli.command()
@click.option("--classes", default=8, show_default=True)
@click.option("--epochs-per-class", default=40, show_default=True)
@click.option("--channels", default=32, show_default=True)
@click.option("--samples", default=256, show_default=True)
@click.option("--snr", default=10.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--informative", default="3,7,11", show_default=True,
              help="Comma-separated informative channel indices (all classes).")
@click.option("--informative-categories", default="", show_default=True,
              help="Comma-separated categories carrying class info (default all).")
@click.option("--dim", default=16, show_default=True,
              help="Caption embedding dimension.")
@click.option("--sample-rate", default=256.0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def synth(classes, epochs_per_class, channels, samples, snr, seed, informative,
          informative_categories, dim, sample_rate, out):
    """Generate a planted-structure dataset plus caption bank."""
    chans = tuple(int(x) for x in informative.split(",") if x.strip() != "")
    cats = tuple(x.strip() for x in informative_categories.split(",")
                 if x.strip()) or None
    spec = datamod.SynthSpec(
        classes=classes, epochs_per_class=epochs_per_class, channels=channels,
        samples=samples, informative_channels={c: chans for c in range(classes)},
        snr=snr, seed=seed, sample_rate=sample_rate, embed_dim=dim,
        informative_categories=cats)
    dataset, bank = datamod.synth_generate(spec)
    os.makedirs(out, exist_ok=True)
    dataset_path = os.path.join(out, "dataset.eeg")
    bank_path = os.path.join(out, "bank.jsonl")
    layout_path = os.path.join(out, "layout.csv")
    datamod.save_dataset(dataset, dataset_path)
    cap.save_bank(bank, bank_path)
    datamod.save_layout(datamod.sunflower_layout(dataset.channel_names), layout_path)
    _write_manifest(out, "synth", {
        "classes": classes, "epochs_per_class": epochs_per_class,
        "channels": channels, "samples": samples, "snr": snr, "seed": seed,
        "informative": list(chans),
        "informative_categories": list(cats) if cats else [],
        "dim": dim, "sample_rate": sample_rate,
    }, ["dataset.eeg", "bank.jsonl", "layout.csv"])
    click.echo(f"wrote {dataset_path} ({len(dataset)} epochs), {bank_path} "
               f"({len(bank.entries)} captions), {layout_path}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML run configuration.")
@click.option("--dataset", type=click.Path(), help="Overrides paths.dataset.")
@click.option("--bank", type=click.Path(), help="Overrides paths.bank.")
@click.option("--out", type=click.Path(), help="Overrides paths.out_dir.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--loss", type=click.Choice(trainmod.LOSS_KINDS), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--ablate-loss", is_flag=True,
              help="Train both loss kinds and emit a comparison table.")
def train(config_path, dataset, bank, out, epochs, batch_size, lr, temperature,
          loss, seed, ablate_loss):
    """Train the encoder against a caption bank (flags override config)."""
    cfg = cfgmod.parse_config(config_path) if config_path else cfgmod.RunConfig()
    if dataset:
        cfg.paths.dataset = dataset
    if bank:
        cfg.paths.bank = bank
    if out:
        cfg.paths.out_dir = out
    for attr, val in (("epochs", epochs), ("batch_size", batch_size),
                      ("learning_rate", lr), ("temperature", temperature),
                      ("loss_kind", loss), ("seed", seed)):
        if val is not None:
            setattr(cfg.train, attr, val)
    if not cfg.paths.dataset or not cfg.paths.bank:
        raise ConfigError("train needs paths.dataset and paths.bank "
                          "(config file or --dataset/--bank)")

    taxonomy = cap.Taxonomy(cfg.taxonomy)
    bank_obj = cap.load_bank(cfg.paths.bank, taxonomy)
    full = datamod.load_dataset(cfg.paths.dataset)
    train_set, val_set, _ = datamod.split(full, cfg.train.split,
                                          cfg.train.split_seed)
    enc_cfg = enc.EncoderConfig(
        channels=full.channels, samples=full.samples, proj_dim=bank_obj.dim,
        head_categories=taxonomy.names, patch_len=cfg.encoder.patch_len,
        d_model=cfg.encoder.d_model,
        n_spatial_layers=cfg.encoder.n_spatial_layers,
        n_temporal_layers=cfg.encoder.n_temporal_layers,
        n_attn_heads=cfg.encoder.n_attn_heads, ff_mult=cfg.encoder.ff_mult,
        dropout=cfg.encoder.dropout, seed=cfg.encoder.seed)
    tr_cfg = trainmod.TrainConfig(
        batch_size=cfg.train.batch_size, epochs=cfg.train.epochs,
        learning_rate=cfg.train.learning_rate,
        temperature=cfg.train.temperature, loss_kind=cfg.train.loss_kind,
        active_heads=tuple(cfg.train.active_heads), seed=cfg.train.seed,
        checkpoint_every=cfg.train.checkpoint_every)

    out_dir = cfg.paths.out_dir
    _ensure_dirs(out_dir)
    outputs = []

    if ablate_loss:
        rows = trainmod.run_loss_ablation(train_set, bank_obj, enc_cfg, tr_cfg,
                                          val_set=val_set)
        table = trainmod.ablation_csv(rows)
        abl_path = os.path.join(out_dir, "logs", "ablation.csv")
        with open(abl_path, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(table)
        outputs.append("logs/ablation.csv")
        click.echo(table.rstrip())
    else:
        ckpt, history = trainmod.train(
            train_set, bank_obj, enc_cfg, tr_cfg, val_set=val_set,
            checkpoint_dir=os.path.join(out_dir, "checkpoints"))
        enc.save_checkpoint(ckpt, os.path.join(out_dir, "checkpoints", "best"))
        log_path = os.path.join(out_dir, "logs", "train_log.csv")
        with open(log_path, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(history.to_csv())
        outputs += ["checkpoints/best", "logs/train_log.csv"]
        last = history.epochs[-1]
        click.echo(f"epoch {last['epoch']}: loss {last['loss']:.4f}  "
                   f"best val acc {ckpt.manifest.get('best_val_acc'):.4f} "
                   f"(epoch {ckpt.manifest.get('epoch')})")

    eff_path = os.path.join(out_dir, "manifests", "effective_config.toml")
    cfgmod.write_effective(cfg, eff_path)
    outputs.append("manifests/effective_config.toml")
    _write_manifest(out_dir, "train", {
        "config": config_path or "", "ablate_loss": bool(ablate_loss),
    }, outputs, config=cfg)


# ---------------------------------------------------------------------------
# retrieve / classify
# ---------------------------------------------------------------------------

def _retrieval_options(f):
    f = click.option("--ckpt", required=True, type=click.Path(exists=True))(f)
    f = click.option("--dataset", required=True, type=click.Path(exists=True))(f)
    f = click.option("--bank", required=True, type=click.Path(exists=True))(f)
    f = click.option("--split", default="test", show_default=True,
                     type=click.Choice(["all", "train", "val", "test"]))(f)
    f = click.option("--ratios", default="0.8,0.1,0.1", show_default=True)(f)
    f = click.option("--split-seed", default=0, show_default=True)(f)
    return f


@cli.command()
@_retrieval_options
@click.option("--topk", default=1, show_default=True)
@click.option("--classify", "do_classify", is_flag=True,
              help="Add ensemble-vote predictions and report accuracy.")
@click.option("--policy", default="all", show_default=True,
              type=click.Choice(ret.PROMPT_POLICIES))
@click.option("--out", required=True, type=click.Path())
def retrieve(ckpt, dataset, bank, split, ratios, split_seed, topk, do_classify,
             policy, out):
    """Per-head caption retrieval; writes the JSONL manifest and dominance CSV."""
    checkpoint = enc.load_checkpoint(ckpt)
    taxonomy = cap.Taxonomy()
    bank_obj = cap.load_bank(bank, taxonomy)
    subset = _load_split(dataset, split, _parse_ratios(ratios), split_seed)
    results = ret.retrieve_dataset(checkpoint, subset, bank_obj, k=topk)

    rows = []
    correct = 0
    for res in results:
        predicted = ret.ensemble_classify(res, bank_obj) if do_classify else None
        if do_classify and predicted == res.true_class:
            correct += 1
        bundle = ret.assemble_prompt(res, bank_obj, policy=policy)
        rows.append(ret.manifest_row(res, predicted, bundle.prompt))
    _ensure_dirs(out)
    manifest_path = os.path.join(out, "logs", "retrieval.jsonl")
    ret.write_manifest(rows, manifest_path)
    dom = ret.head_dominance(results, bank_obj.taxonomy)
    dom_path = os.path.join(out, "logs", "dominance.csv")
    with open(dom_path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(dom.to_csv())

    acc = trainmod.evaluate_retrieval(checkpoint, subset, bank_obj, k=topk)
    for head, a in acc.items():
        click.echo(f"{head}: top-{topk} acc {a:.4f}")
    if do_classify:
        click.echo(f"ensemble accuracy: {correct / max(len(results), 1):.4f}")
    _write_manifest(out, "retrieve", {
        "ckpt": ckpt, "dataset": dataset, "bank": bank, "split": split,
        "ratios": ratios, "split_seed": split_seed, "topk": topk,
        "classify": bool(do_classify), "policy": policy,
    }, ["logs/retrieval.jsonl", "logs/dominance.csv"])


@cli.command()
@_retrieval_options
def classify(ckpt, dataset, bank, split, ratios, split_seed):
    """Ensemble classification accuracy over a split."""
    checkpoint = enc.load_checkpoint(ckpt)
    bank_obj = cap.load_bank(bank, cap.Taxonomy())
    subset = _load_split(dataset, split, _parse_ratios(ratios), split_seed)
    results = ret.retrieve_dataset(checkpoint, subset, bank_obj, k=1)
    correct = sum(int(ret.ensemble_classify(r, bank_obj) == r.true_class)
                  for r in results)
    click.echo(f"ensemble accuracy: {correct / max(len(results), 1):.4f} "
               f"({correct}/{len(results)})")


# ---------------------------------------------------------------------------
# saliency
# ---------------------------------------------------------------------------

@cli.command(name="saliency")
@_retrieval_options
@click.option("--layout", required=True, type=click.Path(exists=True))
@click.option("--head", default="all", show_default=True,
              help="One head name, 'all', or 'each' for every head.")
@click.option("--tau", default=0.07, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def saliency_cmd(ckpt, dataset, bank, split, ratios, split_seed, layout, head,
                 tau, seed, out):
    """Per-channel gradient saliency scores and topographic SVG maps."""
    checkpoint = enc.load_checkpoint(ckpt)
    bank_obj = cap.load_bank(bank, cap.Taxonomy())
    subset = _load_split(dataset, split, _parse_ratios(ratios), split_seed)
    layout_map = datamod.load_layout(layout)
    scopes = (list(checkpoint.config.head_categories) if head == "each"
              else [head])
    _ensure_dirs(out)
    outputs = []
    for scope in scopes:
        smap = salmod.compute_saliency(checkpoint, subset, bank_obj,
                                       head_scope=scope, tau=tau, seed=seed)
        csv_path = os.path.join(out, "logs", f"saliency_{scope}.csv")
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(smap.to_csv())
        svg_path = os.path.join(out, "figures", f"topomap_{scope}.svg")
        salmod.render_topomap(smap, layout_map, svg_path)
        outputs += [f"logs/saliency_{scope}.csv", f"figures/topomap_{scope}.svg"]
        top = np.argsort(-smap.per_channel)[:5]
        names = [smap.channel_names[i] for i in top]
        click.echo(f"[{scope}] top channels: {', '.join(names)}")
    _write_manifest(out, "saliency", {
        "ckpt": ckpt, "dataset": dataset, "bank": bank, "split": split,
        "ratios": ratios, "split_seed": split_seed, "layout": layout,
        "head": head, "tau": tau, "seed": seed,
    }, outputs)


# ---------------------------------------------------------------------------
# tsne
# ---------------------------------------------------------------------------

@cli.command(name="tsne")
@_retrieval_options
@click.option("--perplexity", default=30.0, show_default=True)
@click.option("--iterations", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def tsne_cmd(ckpt, dataset, bank, split, ratios, split_seed, perplexity,
             iterations, seed, out):
    """2-D embedding of head outputs, one point per (epoch, head)."""
    checkpoint = enc.load_checkpoint(ckpt)
    subset = _load_split(dataset, split, _parse_ratios(ratios), split_seed)
    embs = enc.encode_dataset(subset, checkpoint.params, checkpoint.config)
    points = []
    labels = []
    for head in checkpoint.config.head_categories:
        points.append(embs[head])
        labels += [head] * len(embs[head])
    x = np.concatenate(points)
    cfg = tsnemod.TsneConfig(perplexity=perplexity, iterations=iterations,
                             seed=seed)
    emb, trace = tsnemod.tsne(x, cfg, labels=labels)
    _ensure_dirs(out)
    tsnemod.export_csv(emb, os.path.join(out, "logs", "tsne.csv"))
    tsnemod.export_scatter(emb, os.path.join(out, "figures", "tsne.svg"))
    click.echo(f"embedded {len(x)} points; final KL {trace[-1]:.4f}")
    _write_manifest(out, "tsne", {
        "ckpt": ckpt, "dataset": dataset, "bank": bank, "split": split,
        "ratios": ratios, "split_seed": split_seed, "perplexity": perplexity,
        "iterations": iterations, "seed": seed,
    }, ["logs/tsne.csv", "figures/tsne.svg"])


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@cli.group()
def metrics():
    """Generative-quality metrics over feature/probability/image files."""


def _echo_report(report: metricsmod.MetricReport):
    click.echo(report.to_json())


@metrics.command(name="fid")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
def metrics_fid(path_a, path_b):
    value = metricsmod.fid(tensorfile.load(path_a), tensorfile.load(path_b))
    _echo_report(metricsmod.MetricReport("fid", value))


@metrics.command(name="kid")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
@click.option("--subset-size", default=100, show_default=True)
@click.option("--n-subsets", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
def metrics_kid(path_a, path_b, subset_size, n_subsets, seed):
    mean, std = metricsmod.kid(tensorfile.load(path_a), tensorfile.load(path_b),
                               subset_size=subset_size, n_subsets=n_subsets,
                               seed=seed)
    _echo_report(metricsmod.MetricReport(
        "kid", mean, std=std,
        params={"subset_size": subset_size, "n_subsets": n_subsets, "seed": seed}))


@metrics.command(name="is")
@click.option("--probs", required=True, type=click.Path(exists=True))
@click.option("--splits", default=10, show_default=True)
def metrics_is(probs, splits):
    mean, std = metricsmod.inception_score(tensorfile.load(probs), n_splits=splits)
    _echo_report(metricsmod.MetricReport("inception_score", mean, std=std,
                                         params={"splits": splits}))


def _load_image(path) -> np.ndarray:
    from PIL import Image
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


@metrics.command(name="ssim")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
def metrics_ssim(path_a, path_b):
    value = metricsmod.ssim(_load_image(path_a), _load_image(path_b))
    _echo_report(metricsmod.MetricReport("ssim", value))


@metrics.command(name="pixcorr")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
def metrics_pixcorr(path_a, path_b):
    value = metricsmod.pixcorr(_load_image(path_a), _load_image(path_b))
    _echo_report(metricsmod.MetricReport("pixcorr", value))


@metrics.command(name="cosine")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
def metrics_cosine(path_a, path_b):
    value = metricsmod.cosine_score(tensorfile.load(path_a), tensorfile.load(path_b))
    _echo_report(metricsmod.MetricReport("cosine_score", value))


@metrics.command(name="twoway")
@click.option("--gen", "gen_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--exhaustive", is_flag=True)
def metrics_twoway(gen_path, gt_path, seed, exhaustive):
    value = metricsmod.two_way_identification(
        tensorfile.load(gen_path), tensorfile.load(gt_path), seed=seed,
        exhaustive=exhaustive)
    _echo_report(metricsmod.MetricReport(
        "two_way_identification", value,
        params={"seed": seed, "exhaustive": bool(exhaustive)}))


# ---------------------------------------------------------------------------
# prompt
# ---------------------------------------------------------------------------

@cli.command(name="prompt")
@click.option("--retrieval", "retrieval_path", required=True,
              type=click.Path(exists=True),
              help="Retrieval manifest JSONL from the retrieve command.")
@click.option("--bank", required=True, type=click.Path(exists=True))
@click.option("--policy", default="all", show_default=True,
              type=click.Choice(ret.PROMPT_POLICIES))
@click.option("--endpoint", default=None,
              help=f"Text-to-image endpoint URL (or ${ENDPOINT_ENV}).")
@click.option("--timeout", default=30.0, show_default=True)
@click.option("--max-workers", default=4, show_default=True)
@click.option("--seed", default=None, type=int,
              help="Generation seed forwarded to the endpoint.")
@click.option("--out", required=True, type=click.Path())
def prompt_cmd(retrieval_path, bank, policy, endpoint, timeout, max_workers,
               seed, out):
    """Assemble prompts from retrievals; optionally dispatch for images."""
    bank_obj = cap.load_bank(bank, cap.Taxonomy())
    rows = ret.read_manifest(retrieval_path)
    bundles = [ret.assemble_prompt(ret.result_from_manifest(row), bank_obj,
                                   policy=policy) for row in rows]
    _ensure_dirs(out)
    prompts_path = os.path.join(out, "logs", "prompts.jsonl")
    with open(prompts_path, "w", encoding="utf-8", newline="\n") as fp:
        for b in bundles:
            fp.write(json.dumps({"epoch": b.epoch_index, "prompt": b.prompt,
                                 "sources": b.sources}, sort_keys=True) + "\n")
    outputs = ["logs/prompts.jsonl"]

    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if endpoint:
        img_dir = os.path.join(out, "figures", "generated")
        dispatch_rows = ret.dispatch_all(bundles, endpoint, img_dir,
                                         timeout=timeout,
                                         max_workers=max_workers, seed=seed)
        dispatch_path = os.path.join(out, "logs", "dispatch.jsonl")
        with open(dispatch_path, "w", encoding="utf-8", newline="\n") as fp:
            for row in dispatch_rows:
                fp.write(json.dumps(row, sort_keys=True) + "\n")
        ok = sum(1 for r in dispatch_rows if r["status"] == "ok")
        click.echo(f"dispatched {len(bundles)} prompts: {ok} ok, "
                   f"{len(bundles) - ok} failed")
        outputs += ["logs/dispatch.jsonl", "figures/generated"]
    else:
        click.echo(f"assembled {len(bundles)} prompts (no endpoint configured)")
    _write_manifest(out, "prompt", {
        "retrieval": retrieval_path, "bank": bank, "policy": policy,
        "endpoint": endpoint or "", "timeout": timeout,
        "max_workers": max_workers, "seed": seed,
    }, outputs)


# ---------------------------------------------------------------------------
# entry point with exit-code mapping
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 2
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3
    except TransportError as exc:
        click.echo(f"transport error: {exc}", err=True)
        return 5
    except (ContractError, NumericError, NeurosemError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 4
    except OSError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
