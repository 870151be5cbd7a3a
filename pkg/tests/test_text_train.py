import numpy as np
import pytest

from star.optim import TrainConfig
from star.rng import child_rng
from star.text import (BiEncoderModel, LossConfig, TrainSettings, TrainingPair,
                       balance_pairs, load_pairs, train)
from star.text.model import TextRecord
from star.text.train import save_pairs


def planted_pairs(n_pairs=200, n_topics=4, seed=0):
    """Linearly separable toy data: label 1 iff member topic == job topic."""
    rng = child_rng(seed, "planted-pairs")
    pairs = []
    for i in range(n_pairs):
        mt = int(rng.integers(n_topics))
        match = bool(rng.integers(2))
        jt = mt if match else int((mt + 1 + rng.integers(n_topics - 1)) % n_topics)
        prof = " ".join([f"topic{mt}"] * 3 + [f"fill{rng.integers(50)}"])
        res = " ".join([f"topic{mt}" for _ in range(2)])
        job = " ".join([f"topic{jt}"] * 3 + [f"jfill{rng.integers(50)}"])
        pairs.append(TrainingPair(
            profile=TextRecord(i, "member_profile", prof, 10),
            resume=TextRecord(i, "member_resume", res, 10),
            document=TextRecord(1000 + i, "job_description", job, 10),
            label=int(match),
        ))
    return pairs


def test_balance_downsamples_majority():
    pairs = planted_pairs(60)
    skewed = [p for p in pairs if p.label == 1][:5] + [p for p in pairs if p.label == 0]
    rng = child_rng(0, "bal")
    out = balance_pairs(skewed, rng)
    labels = [p.label for p in out]
    assert labels.count(1) == labels.count(0) == 5


def test_empty_dataset_rejected():
    model = BiEncoderModel(vocab_size=64, dim=8, seed=0)
    with pytest.raises(ValueError, match="empty"):
        train([], model, LossConfig(), TrainConfig(), TrainSettings())


def test_separable_set_reaches_high_auc():
    pairs = planted_pairs(200)
    model = BiEncoderModel(vocab_size=2048, dim=16, layers=2, max_tokens=16, seed=0)
    result = train(pairs, model, LossConfig(lam=0.0),
                   TrainConfig(per_worker_batch_size=16, seed=0),
                   TrainSettings(epochs=1, lr=0.02, eval_cadence=0.5))
    assert result.best_auc >= 0.95


def test_training_reproducible(tmp_path):
    pairs = planted_pairs(80)

    def run():
        model = BiEncoderModel(vocab_size=512, dim=8, layers=2, max_tokens=16, seed=3)
        train(pairs, model, LossConfig(lam=0.5, tau=0.2),
              TrainConfig(per_worker_batch_size=8, grad_accumulation_steps=2, seed=5),
              TrainSettings(epochs=1, lr=0.01))
        return model.snapshot()

    s1, s2 = run(), run()
    for k in s1:
        np.testing.assert_array_equal(s1[k], s2[k])


def test_pairs_file_round_trip(tmp_path):
    pairs = planted_pairs(10)
    path = tmp_path / "pairs.jsonl"
    save_pairs(path, pairs)
    loaded = load_pairs(path)
    assert len(loaded) == 10
    assert loaded[3].document.text == pairs[3].document.text
    assert loaded[3].label == pairs[3].label
    assert loaded[3].profile.kind == "member_profile"
