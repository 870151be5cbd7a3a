"""BCE + semi-hard in-batch contrastive objective for the bi-encoder.

The contrastive term runs over positive-labeled anchors only. For each
document anchor, a semi-hard negative is mined independently from the
profile and the resume sides of the batch; both terms are summed. Anchors
with no qualifying negative contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import Tensor, add, clamp, dot_sim, log, lookup, mul, sigmoid, tsum
from .model import BiEncoderModel, bce_loss


@dataclass
class LossConfig:
    lam: float = 0.5
    tau: float = 0.1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("contrastive weight must be >= 0")
        if self.tau <= 0:
            raise ValueError("temperature must be > 0")


def mine_semi_hard(anchor_index: int, similarity_row: np.ndarray,
                   positive_sim: float) -> int | None:
    """Hardest candidate still easier than the positive.

    Returns the index maximizing similarity among entries strictly below
    ``positive_sim``, excluding the anchor's own positive; ties go to the
    lowest index; None when nothing qualifies.
    """
    row = np.asarray(similarity_row, dtype=np.float64)
    best: int | None = None
    for j in range(row.size):
        if j == anchor_index or row[j] >= positive_sim:
            continue
        if best is None or row[j] > row[best]:
            best = j
    return best


def _contrastive_pairs(doc_emb: Tensor, component_emb: Tensor,
                       labels: np.ndarray) -> tuple[list[int], list[int]]:
    """Mined (anchor, negative) index pairs for one request component."""
    sims = component_emb.data @ doc_emb.data.T  # sims[j, i] = sim(comp_j, doc_i)
    anchors, negatives = [], []
    for i in np.flatnonzero(labels == 1):
        j = mine_semi_hard(int(i), sims[:, i], float(sims[i, i]))
        if j is not None:
            anchors.append(int(i))
            negatives.append(j)
    return anchors, negatives


def contrastive_loss(doc_emb: Tensor, profile_emb: Tensor, resume_emb: Tensor,
                     labels: np.ndarray, tau: float) -> tuple[Tensor, int]:
    """Summed two-way softmax terms against mined semi-hard negatives.

    Returns (loss tensor, number of contributing terms).
    """
    if tau <= 0:
        raise ValueError("temperature must be > 0")
    anchor_idx: list[int] = []
    neg_idx: list[int] = []
    comp_sel: list[Tensor] = []
    for comp in (profile_emb, resume_emb):
        a, n = _contrastive_pairs(doc_emb, comp, labels)
        anchor_idx.extend(a)
        neg_idx.extend(n)
        comp_sel.extend([comp] * len(a))
    if not anchor_idx:
        return Tensor(0.0), 0

    # group by component tensor so each gather stays a single lookup
    terms = []
    for comp in (profile_emb, resume_emb):
        rows = [(a, n) for a, n, c in zip(anchor_idx, neg_idx, comp_sel) if c is comp]
        if not rows:
            continue
        a_i = np.array([r[0] for r in rows], dtype=np.int64)
        n_i = np.array([r[1] for r in rows], dtype=np.int64)
        docs = lookup(doc_emb, a_i)
        s_pos = dot_sim(docs, lookup(comp, a_i))
        s_neg = dot_sim(docs, lookup(comp, n_i))
        margin = mul(add(s_pos, mul(s_neg, Tensor(-1.0))), Tensor(1.0 / tau))
        # exp(a)/(exp(a)+exp(b)) == sigmoid(a-b)
        terms.append(mul(tsum(log(clamp(sigmoid(margin), 1e-12, 1.0))),
                         Tensor(-1.0)))
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return total, len(anchor_idx)


def compute_loss(doc_emb: Tensor, profile_emb: Tensor, resume_emb: Tensor,
                 labels: np.ndarray, model: BiEncoderModel,
                 cfg: LossConfig) -> tuple[Tensor, dict]:
    """Composite loss on an embedded batch: mean BCE plus lam * contrastive.

    Returns (scalar loss tensor, detail dict with the pieces as floats).
    """
    if cfg.tau <= 0:
        raise ValueError("temperature must be > 0")
    labels = np.asarray(labels, dtype=np.float64)
    probs = model.predict_pairs(profile_emb, resume_emb, doc_emb)
    loss = bce_loss(probs, labels)
    detail = {"bce": loss.item(), "contrastive": 0.0, "contrastive_terms": 0}
    if cfg.lam > 0:
        c_loss, n_terms = contrastive_loss(doc_emb, profile_emb, resume_emb,
                                           labels, cfg.tau)
        detail["contrastive"] = c_loss.item()
        detail["contrastive_terms"] = n_terms
        if n_terms:
            loss = add(loss, mul(c_loss, Tensor(cfg.lam)))
    detail["total"] = loss.item()
    return loss, detail
