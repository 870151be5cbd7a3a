"""Mini-batch training for the bi-encoder with gradient accumulation,
1:1 class rebalancing and best-checkpoint tracking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..metrics import compute_auc
from ..optim import AdamW, TrainConfig
from ..rng import child_rng
from ..tensor import Tensor, mul
from .loss import LossConfig, compute_loss
from .model import BiEncoderModel, TextRecord


@dataclass
class TrainingPair:
    profile: TextRecord
    resume: TextRecord
    document: TextRecord
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass
class TrainSettings:
    epochs: int = 1
    lr: float = 1e-3
    weight_decay: float = 0.0
    warmup_steps: int = 30
    eval_cadence: float = 0.25   # fraction of an epoch between validation checks
    val_fraction: float = 0.2
    trainable: str = "all"       # "all" or "head" (frozen encoder baseline)


@dataclass
class TrainResult:
    best_auc: float
    auc_trace: list[tuple[int, float]] = field(default_factory=list)
    effective_batch_size: int = 0
    steps: int = 0


def load_pairs(path: str | Path) -> list[TrainingPair]:
    """Read the JSON-lines pairs file with inline snapshot texts."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad JSON") from exc
            t = int(row.get("event_time", 0))
            pairs.append(TrainingPair(
                profile=TextRecord(int(row["member_id"]), "member_profile",
                                   row["profile_text"], t),
                resume=TextRecord(int(row["member_id"]), "member_resume",
                                  row["resume_text"], t),
                document=TextRecord(int(row["job_id"]), "job_description",
                                    row["job_text"], t),
                label=int(row["label"]),
            ))
    return pairs


def save_pairs(path: str | Path, pairs: list[TrainingPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "member_id": p.profile.entity_id,
                "job_id": p.document.entity_id,
                "label": p.label,
                "event_time": p.document.snapshot_time,
                "profile_text": p.profile.text,
                "resume_text": p.resume.text,
                "job_text": p.document.text,
            }, sort_keys=True) + "\n")


def balance_pairs(pairs: list[TrainingPair],
                  rng: np.random.Generator) -> list[TrainingPair]:
    """Downsample the majority class to a 1:1 ratio, preserving order."""
    pos = [i for i, p in enumerate(pairs) if p.label == 1]
    neg = [i for i, p in enumerate(pairs) if p.label == 0]
    if not pos or not neg:
        return list(pairs)
    keep = min(len(pos), len(neg))
    if len(pos) > keep:
        pos = sorted(rng.choice(pos, size=keep, replace=False).tolist())
    if len(neg) > keep:
        neg = sorted(rng.choice(neg, size=keep, replace=False).tolist())
    return [pairs[i] for i in sorted(pos + neg)]


@dataclass
class _Prepared:
    profiles: list[list[int]]
    resumes: list[list[int]]
    docs: list[list[int]]
    labels: np.ndarray


def _prepare(pairs: list[TrainingPair], model: BiEncoderModel) -> _Prepared:
    return _Prepared(
        profiles=[model.tokenize_record(p.profile) for p in pairs],
        resumes=[model.tokenize_record(p.resume) for p in pairs],
        docs=[model.tokenize_record(p.document) for p in pairs],
        labels=np.array([p.label for p in pairs], dtype=np.float64),
    )


def _subset(prep: _Prepared, idx) -> _Prepared:
    return _Prepared(
        profiles=[prep.profiles[i] for i in idx],
        resumes=[prep.resumes[i] for i in idx],
        docs=[prep.docs[i] for i in idx],
        labels=prep.labels[list(idx)],
    )


def score_pairs(model: BiEncoderModel, prep: _Prepared,
                batch_size: int = 256) -> np.ndarray:
    scores = np.empty(len(prep.docs))
    for start in range(0, len(prep.docs), batch_size):
        idx = range(start, min(start + batch_size, len(prep.docs)))
        sub = _subset(prep, idx)
        zp = model.embed_ids(sub.profiles)
        zr = model.embed_ids(sub.resumes)
        zd = model.embed_ids(sub.docs)
        scores[list(idx)] = model.predict_pairs(zp, zr, zd).data
    return scores


def validation_auc(model: BiEncoderModel, prep: _Prepared) -> float:
    return compute_auc(score_pairs(model, prep), prep.labels.astype(int))


def train(pairs: list[TrainingPair], model: BiEncoderModel, loss_cfg: LossConfig,
          train_cfg: TrainConfig, settings: TrainSettings) -> TrainResult:
    """Train with AdamW + gradient accumulation; keeps the best-AUC snapshot.

    The dataset is rebalanced to 1:1 by downsampling, then split into
    train/validation. The best checkpoint (by validation AUC) is restored
    into ``model`` before returning.
    """
    if not pairs:
        raise ValueError("empty dataset")
    rng = child_rng(train_cfg.seed, "text-train")
    balanced = balance_pairs(pairs, rng)
    order = rng.permutation(len(balanced))
    n_val = max(1, int(round(settings.val_fraction * len(balanced))))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        raise ValueError("dataset too small for the requested validation split")

    prep_all = _prepare(balanced, model)
    prep_val = _subset(prep_all, val_idx.tolist())

    trainable = (model.parameters() if settings.trainable == "all"
                 else model.head_parameters())
    opt = AdamW(trainable, lr=settings.lr, weight_decay=settings.weight_decay,
                warmup_steps=settings.warmup_steps)

    micro = train_cfg.per_worker_batch_size
    accum = train_cfg.grad_accumulation_steps
    micro_per_epoch = max(1, len(train_idx) // micro)
    steps_per_epoch = max(1, micro_per_epoch // accum)
    eval_every = max(1, int(round(settings.eval_cadence * steps_per_epoch)))

    best_auc = -1.0
    best_snapshot = model.snapshot()
    trace: list[tuple[int, float]] = []
    step = 0
    for _ in range(settings.epochs):
        epoch_order = rng.permutation(train_idx)
        cursor = 0
        for _ in range(steps_per_epoch):
            model.zero_grad()
            for _ in range(accum):
                take = epoch_order[cursor:cursor + micro]
                cursor += micro
                if len(take) == 0:
                    continue
                sub = _subset(prep_all, take.tolist())
                zp = model.embed_ids(sub.profiles)
                zr = model.embed_ids(sub.resumes)
                zd = model.embed_ids(sub.docs)
                loss, _ = compute_loss(zd, zp, zr, sub.labels, model, loss_cfg)
                mul(loss, Tensor(1.0 / accum)).backward()
            opt.step()
            step += 1
            if step % eval_every == 0:
                auc = validation_auc(model, prep_val)
                trace.append((step, auc))
                if auc > best_auc:
                    best_auc = auc
                    best_snapshot = model.snapshot()
    if not trace:
        best_auc = validation_auc(model, prep_val)
        trace.append((step, best_auc))
        best_snapshot = model.snapshot()
    model.restore(best_snapshot)
    return TrainResult(best_auc=best_auc, auc_trace=trace,
                       effective_batch_size=train_cfg.effective_batch_size,
                       steps=step)
