import math

import numpy as np
import pytest

from star.tensor import Tensor
from star.text import BiEncoderModel, LossConfig, compute_loss, mine_semi_hard
from star.text.loss import contrastive_loss
from star.text.model import bce_loss

from gradcheck import check_gradients


class TestMineSemiHard:
    def test_picks_hardest_below_positive(self):
        row = np.array([0.9, 0.7, 0.95, 0.6])
        assert mine_semi_hard(0, row, 0.9) == 1

    def test_none_when_all_exceed_positive(self):
        assert mine_semi_hard(0, np.array([0.5, 0.8, 0.9]), 0.5) is None

    def test_tie_breaks_to_lowest_index(self):
        assert mine_semi_hard(0, np.array([0.9, 0.7, 0.7]), 0.9) == 1

    def test_batch_of_one(self):
        assert mine_semi_hard(0, np.array([0.4]), 0.4) is None

    def test_excludes_anchor_even_if_below(self):
        # anchor slot below the claimed positive sim must still be excluded
        assert mine_semi_hard(1, np.array([0.2, 0.3, 0.1]), 0.5) == 0

    def test_agrees_with_exhaustive_scan_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 65))
            row = rng.normal(size=n)
            if rng.random() < 0.3:  # force ties
                row = np.round(row, 1)
            anchor = int(rng.integers(n))
            pos = float(row[anchor])

            cands = [(row[j], -j) for j in range(n)
                     if j != anchor and row[j] < pos]
            expected = -max(cands)[1] if cands else None
            assert mine_semi_hard(anchor, row, pos) == expected


def transcribe_composite_loss(zd, zp, zr, labels, probs, lam, tau):
    """Direct float transcription of the published objective: mean BCE plus
    lam times the summed two-way softmax over positive anchors, semi-hard
    negatives mined per request component."""
    bce = -np.mean([y * math.log(p) + (1 - y) * math.log(1 - p)
                    for y, p in zip(labels, probs)])
    contrast = 0.0
    for comp in (zp, zr):
        for i, y in enumerate(labels):
            if y != 1:
                continue
            sims = [float(comp[j] @ zd[i]) for j in range(len(labels))]
            pos = float(comp[i] @ zd[i])
            feasible = [(s, -j) for j, s in enumerate(sims) if j != i and s < pos]
            if not feasible:
                continue
            s_neg = max(feasible)[0]
            num = math.exp(pos / tau)
            contrast += -math.log(num / (num + math.exp(s_neg / tau)))
    return bce + lam * contrast


@pytest.fixture(scope="module")
def model():
    return BiEncoderModel(vocab_size=256, dim=8, layers=2, max_tokens=16, seed=7)


class TestComputeLoss:
    def test_bce_at_half_is_ln2(self, model):
        p = Tensor(np.array([0.5]))
        assert bce_loss(p, np.array([1.0])).item() == pytest.approx(math.log(2), rel=1e-12)

    def test_all_negative_labels_kill_contrastive(self, model):
        rng = np.random.default_rng(0)
        z = [Tensor(rng.normal(size=(4, 8))) for _ in range(3)]
        labels = np.zeros(4)
        c, n = contrastive_loss(z[0], z[1], z[2], labels, tau=0.1)
        assert c.item() == 0.0 and n == 0

    def test_matches_equation_transcription_oracle(self, model):
        rng = np.random.default_rng(123)
        for _ in range(20):
            zd = rng.normal(size=(4, 8))
            zd /= np.linalg.norm(zd, axis=1, keepdims=True)
            zp = rng.normal(size=(4, 8))
            zp /= np.linalg.norm(zp, axis=1, keepdims=True)
            zr = rng.normal(size=(4, 8))
            zr /= np.linalg.norm(zr, axis=1, keepdims=True)
            labels = rng.integers(0, 2, size=4).astype(float)
            if labels.sum() == 0:
                labels[0] = 1.0
            lam, tau = 0.7, 0.2
            td, tp, tr = Tensor(zd), Tensor(zp), Tensor(zr)
            loss, _ = compute_loss(td, tp, tr, labels, model,
                                   LossConfig(lam=lam, tau=tau))
            probs = model.predict_pairs(tp, tr, td).data
            expected = transcribe_composite_loss(zd, zp, zr, labels, probs,
                                                 lam, tau)
            assert loss.item() == pytest.approx(expected, rel=1e-10)

    def test_lambda_zero_equals_pure_bce_transcription(self, model):
        rng = np.random.default_rng(9)
        zd, zp, zr = (Tensor(rng.normal(size=(5, 8))) for _ in range(3))
        labels = np.array([1.0, 0, 1, 0, 1])
        loss, detail = compute_loss(zd, zp, zr, labels, model, LossConfig(lam=0.0))
        probs = model.predict_pairs(zp, zr, zd).data
        expected = -np.mean(labels * np.log(probs) + (1 - labels) * np.log(1 - probs))
        assert loss.item() == pytest.approx(expected, rel=1e-12)
        assert detail["contrastive_terms"] == 0

    def test_bad_temperature_rejected(self):
        with pytest.raises(ValueError, match="temperature"):
            LossConfig(tau=0.0)

    def test_gradient_matches_finite_differences(self, model):
        rng = np.random.default_rng(31)
        from star.text import TextRecord
        recs_p = [TextRecord(i, "member_profile", f"alpha beta w{i}") for i in range(3)]
        recs_r = [TextRecord(i, "member_resume", f"gamma delta w{i}") for i in range(3)]
        recs_d = [TextRecord(i, "job_description", f"epsilon w{i} zeta") for i in range(3)]
        labels = np.array([1.0, 0.0, 1.0])
        cfg = LossConfig(lam=0.5, tau=0.3)

        def loss_fn():
            zp = model.embed_records(recs_p)
            zr = model.embed_records(recs_r)
            zd = model.embed_records(recs_d)
            return compute_loss(zd, zp, zr, labels, model, cfg)[0]

        leaves = {k: v for k, v in model.parameters().items()
                  if not k.startswith("tok_embed")}
        leaves["tok_embed"] = model.params["tok_embed"]
        check_gradients(loss_fn, leaves, rng, samples_per_leaf=2)
