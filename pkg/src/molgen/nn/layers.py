"""Layers: dense stacks, gated recurrent cells, embeddings.

Parameters are float64 Tensors with seeded uniform fan-in initialization.
Every layer exposes parameters() as a flat name -> Tensor mapping so the
optimizer and checkpoint code stay model-agnostic.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, concat, dropout

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def apply_activation(x: Tensor, name: str) -> Tensor:
    if name == "relu":
        return x.relu()
    if name == "sigmoid":
        return x.sigmoid()
    if name == "tanh":
        return x.tanh()
    if name == "identity":
        return x
    raise ValueError(f"unknown activation {name!r}")


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = init_uniform(rng, (in_dim, out_dim), in_dim)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class DenseNet:
    """Fully connected stack with per-layer activation and dropout."""

    def __init__(
        self,
        widths: list[int],
        activations: list[str],
        dropout_rates: list[float] | None,
        rng: np.random.Generator,
    ):
        n_layers = len(widths) - 1
        if len(activations) != n_layers:
            raise ValueError("one activation per layer required")
        dropout_rates = dropout_rates or [0.0] * n_layers
        if any(not 0.0 <= r < 1.0 for r in dropout_rates):
            raise ValueError("dropout rates must be in [0, 1)")
        self.widths = list(widths)
        self.activations = list(activations)
        self.dropout_rates = list(dropout_rates)
        self.layers = [Linear(widths[i], widths[i + 1], rng) for i in range(n_layers)]

    def __call__(
        self, x: Tensor, train: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        for layer, act, rate in zip(self.layers, self.activations, self.dropout_rates):
            x = apply_activation(layer(x), act)
            if train and rate > 0.0:
                if rng is None:
                    raise ValueError("training forward pass with dropout needs an rng")
                x = dropout(x, rate, rng)
        return x

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.layers):
            for name, tensor in layer.parameters().items():
                out[f"layer{i}.{name}"] = tensor
        return out

    def topology(self) -> dict:
        return {
            "type": "dense",
            "widths": self.widths,
            "activations": self.activations,
            "dropout": self.dropout_rates,
        }


class GatedRecurrentCell:
    """GRU cell. Gate layout in the fused input/bias matrices: update,
    reset, candidate. h' = (1 - z) * candidate + z * h."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        h = hidden_size
        self.w_in = init_uniform(rng, (input_size, 3 * h), input_size)
        self.bias = Tensor(np.zeros(3 * h), requires_grad=True)
        self.u_gates = init_uniform(rng, (h, 2 * h), h)
        self.u_cand = init_uniform(rng, (h, h), h)

    def precompute_inputs(self, xs: Tensor) -> Tensor:
        """Input projection for any number of stacked steps in one matmul."""
        return xs @ self.w_in + self.bias

    def step_pre(self, pre: Tensor, h: Tensor) -> Tensor:
        """One step given the precomputed input projection [B, 3H]."""
        hsz = self.hidden_size
        gates = (pre.slice_cols(0, 2 * hsz) + h @ self.u_gates).sigmoid()
        z = gates.slice_cols(0, hsz)
        r = gates.slice_cols(hsz, 2 * hsz)
        cand = (pre.slice_cols(2 * hsz, 3 * hsz) + (r * h) @ self.u_cand).tanh()
        return (1.0 - z) * cand + z * h

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        return self.step_pre(self.precompute_inputs(x), h)

    def initial_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden_size)))

    def run(self, inputs: list[Tensor], h0: Tensor | None = None, reverse: bool = False
            ) -> list[Tensor]:
        """Unrolled scan over a token-major list of [B, in] tensors."""
        if h0 is None:
            h0 = self.initial_state(inputs[0].shape[0])
        seq = list(reversed(inputs)) if reverse else inputs
        states = []
        h = h0
        for x in seq:
            h = self.step(x, h)
            states.append(h)
        if reverse:
            states.reverse()
        return states

    def scan_precomputed(
        self, pre_big: Tensor, batch: int, steps: int,
        h0: Tensor | None = None, reverse: bool = False,
    ) -> list[Tensor]:
        """Scan over a time-major [steps*batch, 3H] precomputed projection.

        Returns the hidden state per step in forward time order regardless of
        scan direction.
        """
        if h0 is None:
            h0 = self.initial_state(batch)
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        states: list[Tensor | None] = [None] * steps
        h = h0
        for t in order:
            pre = pre_big.slice_rows(t * batch, (t + 1) * batch)
            h = self.step_pre(pre, h)
            states[t] = h
        return states  # type: ignore[return-value]

    def parameters(self) -> dict[str, Tensor]:
        return {
            "w_in": self.w_in,
            "bias": self.bias,
            "u_gates": self.u_gates,
            "u_cand": self.u_cand,
        }


class Embedding:
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        self.vocab_size = vocab_size
        self.dim = dim
        self.weight = init_uniform(rng, (vocab_size, dim), dim)

    def __call__(self, indices: np.ndarray) -> Tensor:
        return self.weight.select_rows(indices)

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight}


class BidirectionalGru:
    """Two independent cells scanned in opposite directions, concatenated."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.forward_cell = GatedRecurrentCell(input_size, hidden_size, rng)
        self.backward_cell = GatedRecurrentCell(input_size, hidden_size, rng)

    def final_states(self, inputs: list[Tensor]) -> Tensor:
        fwd = self.forward_cell.run(inputs)
        bwd = self.backward_cell.run(inputs, reverse=True)
        return concat([fwd[-1], bwd[0]], axis=1)

    def final_states_big(self, xs_big: Tensor, batch: int, steps: int) -> Tensor:
        """Fused variant over a time-major [steps*batch, in] input block."""
        pre_f = self.forward_cell.precompute_inputs(xs_big)
        pre_b = self.backward_cell.precompute_inputs(xs_big)
        fwd = self.forward_cell.scan_precomputed(pre_f, batch, steps)
        bwd = self.backward_cell.scan_precomputed(pre_b, batch, steps, reverse=True)
        return concat([fwd[-1], bwd[0]], axis=1)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for prefix, cell in (("fwd", self.forward_cell), ("bwd", self.backward_cell)):
            for name, tensor in cell.parameters().items():
                out[f"{prefix}.{name}"] = tensor
        return out


def merge_parameters(parts: dict[str, dict[str, Tensor]]) -> dict[str, Tensor]:
    merged: dict[str, Tensor] = {}
    for prefix, params in parts.items():
        for name, tensor in params.items():
            merged[f"{prefix}.{name}"] = tensor
    return merged
