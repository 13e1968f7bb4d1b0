"""Adam optimizer and the generic seeded training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, finite_checks


class Diverged(RuntimeError):
    def __init__(self, message: str, batch_index: int):
        super().__init__(message)
        self.batch_index = batch_index


class Adam:
    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(sorted(params.items()))  # fixed update order
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in self.params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in self.params.items()}

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.grad = None

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for key, tensor in self.params.items():
            grad = tensor.grad
            if grad is None:
                continue
            m = self.m[key]
            v = self.v[key]
            m *= b1
            m += (1 - b1) * grad
            v *= b2
            v += (1 - b2) * grad * grad
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            tensor.data -= self.lr * update


@dataclass
class TrainingReport:
    seed: int
    epochs: int
    batch_size: int
    epoch_losses: list[float] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def iterate_batches(
    n: int, batch_size: int, rng: np.random.Generator, shuffle: bool = True
):
    """Deterministic index batches; the last short batch is kept."""
    order = np.arange(n)
    if shuffle:
        rng.shuffle(order)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_loop(
    params: dict[str, Tensor],
    loss_fn,
    n_examples: int,
    epochs: int,
    batch_size: int,
    seed: int,
    lr: float = 1e-3,
    lr_schedule: str = "constant",
    on_epoch=None,
) -> TrainingReport:
    """Generic loop: loss_fn(batch_indices, train_rng) -> scalar Tensor.

    Deterministic given the seed: shuffling, dropout and parameter updates
    all derive from one seeded generator. Raises Diverged when a loss stops
    being finite, reporting the offending batch index.
    """
    if n_examples < 1:
        raise ValueError("dataset is empty")
    batch_size = min(batch_size, n_examples)
    opt = Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    report = TrainingReport(seed=seed, epochs=epochs, batch_size=batch_size)
    with finite_checks(True):
        for epoch in range(epochs):
            if lr_schedule == "cosine":
                opt.lr = lr * 0.5 * (1.0 + np.cos(np.pi * epoch / max(epochs - 1, 1)))
            total = 0.0
            count = 0
            for batch_idx, indices in enumerate(
                iterate_batches(n_examples, batch_size, rng)
            ):
                opt.zero_grad()
                try:
                    loss = loss_fn(indices, rng)
                except FloatingPointError as exc:
                    raise Diverged(f"non-finite loss: {exc}", batch_idx) from exc
                value = float(loss.data)
                if not np.isfinite(value):
                    raise Diverged("loss is NaN/Inf", batch_idx)
                loss.backward()
                opt.step()
                total += value
                count += 1
            report.epoch_losses.append(total / max(count, 1))
            if on_epoch is not None:
                on_epoch(epoch, report.epoch_losses[-1])
    return report
