"""AdamW with decoupled weight decay, bias correction and linear warmup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import NumericsError, Tensor


@dataclass
class TrainConfig:
    """Batch bookkeeping. Execution is single-process; worker_count is a
    pure multiplier in the effective-batch accounting."""

    per_worker_batch_size: int = 32
    grad_accumulation_steps: int = 1
    worker_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.per_worker_batch_size, self.grad_accumulation_steps,
               self.worker_count) < 1:
            raise ValueError("TrainConfig fields must be positive")

    @property
    def effective_batch_size(self) -> int:
        return (self.worker_count * self.per_worker_batch_size
                * self.grad_accumulation_steps)


class AdamW:
    """Decoupled-weight-decay Adam over a name -> Tensor parameter dict.

    The learning rate ramps linearly from 0 over ``warmup_steps`` optimizer
    steps, then stays at ``lr``.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, warmup_steps: int = 0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def effective_lr(self, t: int | None = None) -> float:
        t = self.t if t is None else t
        if self.warmup_steps > 0 and t <= self.warmup_steps:
            return self.lr * t / self.warmup_steps
        return self.lr

    def step(self) -> None:
        """One update using each parameter's accumulated ``.grad``.

        NaN/Inf in any gradient aborts before touching optimizer or params.
        """
        grads = {}
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericsError(f"AdamW.step: non-finite gradient for {name!r}")
            grads[name] = g

        self.t += 1
        lr_t = self.effective_lr()
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - lr_t * update

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
