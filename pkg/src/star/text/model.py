"""Bi-encoder: one shared encoder for documents, profiles and resumes,
distinguished by input prefixes, plus a pairwise prediction head.

Encoder: token-hash bag embeddings mean-pooled over positions, then a stack
of dense layers; the pooled outputs of all layers are averaged and
L2-normalized. The head takes hadamard products (profile x document,
resume x document), concatenated, through two linear layers to a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..checkpoint import load_tensors, pack_meta, save_tensors, unpack_meta
from ..rng import child_rng
from ..tensor import (Tensor, add, clamp, concat, dot_sim, l2_normalize, leaky_relu,
                      log, lookup, matmul, mean, mul, reshape, sigmoid, tsum)
from .tokenizer import PREFIXES, tokenize

HEAD_HIDDEN = 64


@dataclass
class TextRecord:
    entity_id: int
    kind: str  # job_description | member_profile | member_resume
    text: str
    snapshot_time: int = 0

    def __post_init__(self):
        if self.kind not in PREFIXES:
            raise ValueError(f"unknown record kind {self.kind!r}")


class BiEncoderModel:
    def __init__(self, vocab_size: int = 32768, dim: int = 64, layers: int = 2,
                 max_tokens: int = 256, seed: int = 0):
        if layers < 1:
            raise ValueError("need at least one encoder layer")
        self.vocab_size = vocab_size
        self.dim = dim
        self.layers = layers
        self.max_tokens = max_tokens
        rng = child_rng(seed, "bi-encoder-init")
        self.params: dict[str, Tensor] = {}
        self.params["tok_embed"] = Tensor(
            rng.normal(0.0, 1.0, size=(vocab_size, dim)), requires_grad=True)
        for i in range(layers):
            self.params[f"enc{i}.w"] = Tensor(
                rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim)),
                requires_grad=True)
            self.params[f"enc{i}.b"] = Tensor(np.zeros(dim), requires_grad=True)
        self.params["head.w1"] = Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(2 * dim), size=(2 * dim, HEAD_HIDDEN)),
            requires_grad=True)
        self.params["head.b1"] = Tensor(np.zeros(HEAD_HIDDEN), requires_grad=True)
        self.params["head.w2"] = Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(HEAD_HIDDEN), size=(HEAD_HIDDEN, 1)),
            requires_grad=True)
        self.params["head.b2"] = Tensor(np.zeros(1), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def head_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith("head.")}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def tokenize_record(self, record: TextRecord) -> list[int]:
        return tokenize(PREFIXES[record.kind] + record.text, self.vocab_size,
                        self.max_tokens)

    def embed_ids(self, id_lists: list[list[int]]) -> Tensor:
        """Embed a batch of token-id sequences -> unit-norm (B, dim) tensor."""
        if not id_lists:
            raise ValueError("empty batch")
        if any(len(ids) == 0 for ids in id_lists):
            raise ValueError("sequence with no tokens (prefix missing?)")
        width = max(len(ids) for ids in id_lists)
        padded = np.zeros((len(id_lists), width), dtype=np.int64)
        mask = np.zeros((len(id_lists), width))
        for r, ids in enumerate(id_lists):
            padded[r, :len(ids)] = ids
            mask[r, :len(ids)] = 1.0
        rows = lookup(self.params["tok_embed"], padded)          # (B, T, d)
        rows = mul(rows, Tensor(mask[:, :, None]))
        counts = mask.sum(axis=1, keepdims=True)
        pooled = mul(tsum(rows, axis=1), Tensor(1.0 / counts))   # (B, d)
        h = pooled
        layer_sum = None
        for i in range(self.layers):
            h = leaky_relu(add(matmul(h, self.params[f"enc{i}.w"]),
                               self.params[f"enc{i}.b"]))
            layer_sum = h if layer_sum is None else add(layer_sum, h)
        avg = mul(layer_sum, Tensor(1.0 / self.layers))
        return l2_normalize(avg)

    def embed_records(self, records: list[TextRecord]) -> Tensor:
        return self.embed_ids([self.tokenize_record(r) for r in records])

    def embed(self, record: TextRecord) -> np.ndarray:
        """Value-level single-record embedding (unit vector of length dim)."""
        return self.embed_records([record]).data[0].copy()

    def predict_scores(self, profile_emb: Tensor, resume_emb: Tensor,
                       doc_emb: Tensor) -> Tensor:
        """Pre-sigmoid head logits for a batch of embedded pairs -> (B,)."""
        features = concat([mul(profile_emb, doc_emb), mul(resume_emb, doc_emb)],
                          axis=-1)
        h = leaky_relu(add(matmul(features, self.params["head.w1"]),
                           self.params["head.b1"]))
        logits = add(matmul(h, self.params["head.w2"]), self.params["head.b2"])
        return reshape(logits, (features.shape[0],))

    def predict_pairs(self, profile_emb: Tensor, resume_emb: Tensor,
                      doc_emb: Tensor) -> Tensor:
        return sigmoid(self.predict_scores(profile_emb, resume_emb, doc_emb))

    def predict_pair(self, profile_emb, resume_emb, doc_emb) -> float:
        """Apply probability for one embedded pair; value in (0, 1)."""
        def as_row(x):
            x = x if isinstance(x, Tensor) else Tensor(x)
            return reshape(x, (1, self.dim)) if x.data.ndim == 1 else x
        p = self.predict_pairs(as_row(profile_emb), as_row(resume_emb),
                               as_row(doc_emb))
        return float(p.data[0])

    def similarity(self, a: Tensor, b: Tensor) -> Tensor:
        return dot_sim(a, b)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            self.params[k].data = v.copy()

    def save(self, path: str | Path) -> None:
        tensors = self.snapshot()
        tensors["__meta__"] = pack_meta({
            "kind": "bi_encoder",
            "vocab_size": self.vocab_size,
            "dim": self.dim,
            "layers": self.layers,
            "max_tokens": self.max_tokens,
        })
        save_tensors(path, tensors)

    @classmethod
    def load(cls, path: str | Path) -> "BiEncoderModel":
        tensors = load_tensors(path)
        meta = unpack_meta(tensors.pop("__meta__"))
        model = cls(vocab_size=meta["vocab_size"], dim=meta["dim"],
                    layers=meta["layers"], max_tokens=meta["max_tokens"])
        model.restore(tensors)
        return model


def bce_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy; probabilities clamped at 1e-12."""
    y = Tensor(np.asarray(labels, dtype=np.float64))
    p = clamp(probs, 1e-12, 1.0 - 1e-12)
    ll = add(mul(y, log(p)), mul(1.0 - y, log(1.0 - p)))
    return mul(mean(ll), Tensor(-1.0))
