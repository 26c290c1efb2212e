"""Losses, pairing, training loop, and retrieval evaluation."""

import math

import numpy as np
import pytest

import neurosem.autodiff as ad
from neurosem import data as dm
from neurosem import encoder as enc
from neurosem import training as tr
from neurosem.autodiff import Graph
from neurosem.errors import ConfigError, ContractError, DimensionError
from neurosem.rng import stream_generator

from conftest import finite_difference_check, tiny_encoder_config, tiny_synth


class TestInfoNCE:
    def test_identity_pair_closed_form(self):
        e = np.eye(2)
        val = tr.infonce_value(e, e, tau=1.0)
        assert abs(val - math.log(1.0 + math.exp(-1.0))) < 1e-9

    def test_orthogonal_rows_give_log_n(self):
        for b in (2, 5, 16):
            e = np.eye(2 * b)[:b]
            t = np.eye(2 * b)[b:]
            val = tr.infonce_value(e, t, tau=1.0)
            assert abs(val - math.log(b)) < 1e-9

    def test_random_unit_rows_near_log_b(self):
        b, d = 64, 512
        vals = []
        for seed in range(20):
            gen = stream_generator(seed, "infonce/random")
            e = gen.normal(size=(b, d))
            t = gen.normal(size=(b, d))
            e /= np.linalg.norm(e, axis=1, keepdims=True)
            t /= np.linalg.norm(t, axis=1, keepdims=True)
            vals.append(tr.infonce_value(e, t, tau=1.0))
        assert abs(np.mean(vals) - math.log(b)) < 0.1 * math.log(b)

    def test_contract_errors(self, rng):
        e = rng.normal(size=(1, 4))
        with pytest.raises(ContractError):
            tr.infonce_value(e, e, tau=1.0)
        e2 = rng.normal(size=(3, 4))
        with pytest.raises(ContractError):
            tr.infonce_value(e2, e2, tau=0.0)
        with pytest.raises(DimensionError):
            tr.infonce_value(e2, rng.normal(size=(3, 5)), tau=1.0)

    def test_rotation_invariance(self, rng):
        b, d = 8, 16
        e = rng.normal(size=(b, d))
        t = rng.normal(size=(b, d))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        base = tr.infonce_value(e, t, tau=0.2)
        rotated = tr.infonce_value(e @ q, t @ q, tau=0.2)
        assert abs(base - rotated) < 1e-10

    def test_symmetry_in_arguments(self, rng):
        e = rng.normal(size=(6, 8))
        t = rng.normal(size=(6, 8))
        assert abs(tr.infonce_value(e, t, 0.3) - tr.infonce_value(t, e, 0.3)) < 1e-12

    def test_row_permutation_invariance(self, rng):
        e = rng.normal(size=(7, 5))
        t = rng.normal(size=(7, 5))
        perm = rng.permutation(7)
        assert abs(tr.infonce_value(e, t, 0.5)
                   - tr.infonce_value(e[perm], t[perm], 0.5)) < 1e-12

    def test_duplicate_positives_stay_finite(self, rng):
        # two rows share the same target (same class in one batch)
        t = rng.normal(size=(3, 4))
        t[1] = t[0]
        e = rng.normal(size=(3, 4))
        assert np.isfinite(tr.infonce_value(e, t, 0.07))

    def test_gradcheck(self, rng):
        e = rng.normal(size=(5, 6))
        t = rng.normal(size=(5, 6))

        def build(g, ts):
            return tr.infonce_symmetric(ts[0], ts[1], 0.3)

        assert finite_difference_check(build, [e, t]) < 1e-4


class TestMSE:
    def test_equal_inputs_zero(self, rng):
        e = rng.normal(size=(4, 8))
        assert tr.mse_value(e, e) == 0.0

    def test_negated_unit_rows(self, rng):
        d = 16
        e = rng.normal(size=(6, d))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        # entries (e - (-e))^2 = 4 e^2; mean over rows of unit norm = 4/d
        assert abs(tr.mse_value(e, -e) - 4.0 / d) < 1e-12

    def test_homogeneity(self, rng):
        e = rng.normal(size=(4, 4))
        t = rng.normal(size=(4, 4))
        base = tr.mse_value(e, t)
        doubled = tr.mse_value(t + 2 * (e - t), t)
        assert abs(doubled - 4.0 * base) < 1e-12

    def test_gradient_zero_at_match(self, rng):
        e = rng.normal(size=(3, 4))
        g = Graph(np.float64)
        te = g.tensor(e, requires_grad=True)
        loss = tr.mse_alignment_loss(te, g.constant(e.copy()))
        g.backward(loss)
        np.testing.assert_array_equal(te.grad, np.zeros_like(e))


class TestBatchPair:
    def test_single_candidate_deterministic(self):
        _, bank = tiny_synth()
        classes = np.array([0, 1, 2])
        gen = stream_generator(0, "pair")
        targets, ids = tr.batch_pair(classes, bank, bank.taxonomy.names, gen)
        for head in bank.taxonomy.names:
            assert ids[head] == [f"c{c}_{head}" for c in classes]
            for i, c in enumerate(classes):
                np.testing.assert_array_equal(
                    targets[head][i], bank.entry(f"c{c}_{head}").embedding)

    def test_multiple_candidates_both_sampled(self):
        from neurosem import captions as cap
        _, bank = tiny_synth()
        # duplicate every ObjectSnap caption under a new id
        extra = []
        for e in bank.entries:
            if e.category.name == "ObjectSnap":
                extra.append(cap.CaptionEntry(
                    id=e.id + "_alt", class_label=e.class_label,
                    category=e.category, text=e.text + " alt",
                    embedding=e.embedding.copy()))
        bank2 = cap.CaptionBank(entries=bank.entries + extra, dim=bank.dim,
                                classes=bank.classes, taxonomy=bank.taxonomy)
        counts = {}
        gen = stream_generator(1, "pair")
        for _ in range(300):
            _, ids = tr.batch_pair(np.array([0]), bank2, ("ObjectSnap",), gen)
            counts[ids["ObjectSnap"][0]] = counts.get(ids["ObjectSnap"][0], 0) + 1
        assert len(counts) == 2
        # chi-square against the uniform draw, p > 0.01 <=> chi2 < 6.63 (df 1)
        n = sum(counts.values())
        chi2 = sum((c - n / 2) ** 2 / (n / 2) for c in counts.values())
        assert chi2 < 6.63

    def test_missing_coverage_raises(self):
        from neurosem.errors import CoverageError
        _, bank = tiny_synth(classes=2)
        gen = stream_generator(0, "pair")
        with pytest.raises(CoverageError):
            tr.batch_pair(np.array([5]), bank, ("ObjectSnap",), gen)


@pytest.fixture(scope="module")
def setup():
    dataset, bank = tiny_synth(classes=3, epochs_per_class=8, channels=4,
                               samples=32, seed=2)
    cfg = tiny_encoder_config(channels=4, samples=32,
                              proj_dim=bank.dim, dropout=0.1)
    return dataset, bank, cfg


class TestTrainLoop:
    def test_loss_decreases_on_synthetic_data(self, setup):
        dataset, bank, cfg = setup
        tcfg = tr.TrainConfig(batch_size=8, epochs=8, learning_rate=2e-3,
                              seed=0)
        ckpt, history = tr.train(dataset, bank, cfg, tcfg)
        assert history.epochs[-1]["loss"] < history.epochs[0]["loss"]
        assert len(history.epochs) == 8

    def test_lr_zero_keeps_init(self, setup):
        dataset, bank, cfg = setup
        tcfg = tr.TrainConfig(batch_size=8, epochs=2, learning_rate=0.0, seed=0)
        ckpt, _ = tr.train(dataset, bank, cfg, tcfg)
        init = enc.init_params(cfg)
        for k in init:
            assert np.array_equal(ckpt.params[k], init[k])

    def test_identical_seeds_identical_history(self, setup):
        dataset, bank, cfg = setup
        tcfg = tr.TrainConfig(batch_size=8, epochs=3, learning_rate=1e-3, seed=4)
        _, h1 = tr.train(dataset, bank, cfg, tcfg)
        _, h2 = tr.train(dataset, bank, cfg, tcfg)
        assert h1.epochs == h2.epochs

    def test_bank_mismatch_rejected(self, setup):
        dataset, bank, cfg = setup
        bad = tiny_encoder_config(channels=4, samples=32, proj_dim=bank.dim + 1)
        with pytest.raises(DimensionError):
            tr.train(dataset, bank, bad, tr.TrainConfig(epochs=1))

    def test_unknown_active_head_rejected(self, setup):
        dataset, bank, cfg = setup
        with pytest.raises(ConfigError):
            tr.train(dataset, bank, cfg,
                     tr.TrainConfig(epochs=1, active_heads=("Nope",)))


class TestEvaluateRetrieval:
    def test_untrained_is_chance_level(self):
        accs = []
        for seed in range(6):
            dataset, bank = tiny_synth(classes=8, epochs_per_class=4,
                                       channels=4, samples=32, seed=seed,
                                       embed_dim=16)
            cfg = tiny_encoder_config(channels=4, samples=32, proj_dim=16,
                                      seed=seed)
            params = enc.init_params(cfg)
            acc = tr.evaluate_retrieval_params(params, cfg, dataset, bank, k=1)
            accs.extend(acc.values())
        assert abs(np.mean(accs) - 1.0 / 8) < 0.1

    def test_oracle_embeddings_are_perfect(self):
        dataset, bank = tiny_synth(classes=3, epochs_per_class=4, channels=4,
                                   samples=32)
        cfg = tiny_encoder_config(channels=4, samples=32, proj_dim=bank.dim)

        labels = dataset.labels()
        embs = {head: np.stack([bank.candidates(int(c), head)[0].embedding
                                for c in labels])
                for head in bank.taxonomy.names}

        import neurosem.training as trmod
        orig = trmod.enc.encode_dataset
        trmod.enc.encode_dataset = lambda *a, **k: embs
        try:
            acc = tr.evaluate_retrieval_params({}, cfg, dataset, bank, k=1)
        finally:
            trmod.enc.encode_dataset = orig
        assert all(v == 1.0 for v in acc.values())

    def test_topk_monotone_in_k(self):
        dataset, bank = tiny_synth(classes=4, epochs_per_class=4, channels=4,
                                   samples=32)
        cfg = tiny_encoder_config(channels=4, samples=32, proj_dim=bank.dim)
        params = enc.init_params(cfg)
        prev = None
        for k in (1, 2, 3, 4):
            acc = tr.evaluate_retrieval_params(params, cfg, dataset, bank, k=k)
            mean = np.mean(list(acc.values()))
            if prev is not None:
                assert mean >= prev - 1e-12
            prev = mean


def test_history_csv_format():
    h = tr.TrainHistory()
    h.epochs.append({"epoch": 0, "loss": 2.5,
                     "val_acc": {"ObjectSnap": 0.5, "ThemeTag": 0.25}})
    csv = h.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "epoch,loss,ObjectSnap:acc,ThemeTag:acc"
    assert lines[1] == "0,2.5,0.5,0.25"
