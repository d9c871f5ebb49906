"""Tied-weight deep autoencoder shared by the user and item towers.

Layers are numbered from the input: ``h[0]`` is the input batch (one
profile per column), ``h[1..K]`` the encoder with ``h[K]`` the code layer,
``h[K+1..2K-1]`` the decoder hidden layers and ``h[2K]`` the reconstruction.
Encoder layer ``j`` uses ``W[j-1]``; decoder layer ``l > K`` reuses
``W[2K-l]`` transposed. Biases ``b[0..2K-1]`` are one per layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .exceptions import ConfigError
from .tensor import add_bias, as_matrix, matmul, tanh_map


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    encoder_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "encoder_sizes", tuple(int(s) for s in self.encoder_sizes))
        if self.input_dim < 1 or not self.encoder_sizes or min(self.encoder_sizes) < 1:
            raise ConfigError(f"invalid architecture {self.input_dim} -> {self.encoder_sizes}")

    @classmethod
    def from_hidden_sizes(cls, input_dim: int, hidden_sizes: Sequence[int]) -> Architecture:
        """Build from the full hidden-layer list, e.g. ``[2000, 300, 128, 300, 2000]``.

        The list must be palindromic with odd length ``2K - 1``.
        """
        hidden = [int(s) for s in hidden_sizes]
        if len(hidden) % 2 != 1 or hidden != hidden[::-1]:
            raise ConfigError(f"hidden sizes must be an odd-length palindrome, got {hidden}")
        return cls(input_dim, tuple(hidden[: len(hidden) // 2 + 1]))

    @property
    def depth(self) -> int:
        """Number of encoder layers, K."""
        return len(self.encoder_sizes)

    @property
    def code_dim(self) -> int:
        return self.encoder_sizes[-1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.encoder_sizes + self.encoder_sizes[-2::-1]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """Sizes of ``h[0] .. h[2K]``."""
        return (self.input_dim, *self.hidden_sizes, self.input_dim)

    def weight_shapes(self) -> list[tuple[int, int]]:
        sizes = (self.input_dim, *self.encoder_sizes)
        return [(sizes[j + 1], sizes[j]) for j in range(self.depth)]

    def bias_sizes(self) -> list[int]:
        return list(self.layer_sizes[1:])

    def n_params(self) -> int:
        return sum(r * c for r, c in self.weight_shapes()) + sum(self.bias_sizes())


@dataclass
class ModelParams:
    arch: Architecture
    W: list[np.ndarray]
    b: list[np.ndarray]
    rng_seed: int | None = None

    def __post_init__(self):
        if [w.shape for w in self.W] != self.arch.weight_shapes():
            raise ValueError("weight shapes do not match the architecture")
        if [v.shape[0] for v in self.b] != self.arch.bias_sizes():
            raise ValueError("bias sizes do not match the architecture")

    @classmethod
    def zeros(cls, arch: Architecture) -> ModelParams:
        return cls(arch, [np.zeros(s) for s in arch.weight_shapes()],
                   [np.zeros(n) for n in arch.bias_sizes()])

    def arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """All parameter arrays in declaration order with readable names."""
        for j, w in enumerate(self.W, 1):
            yield f"W{j}", w
        for j, v in enumerate(self.b, 1):
            yield f"b{j}", v

    def copy(self) -> ModelParams:
        return ModelParams(self.arch, [w.copy() for w in self.W],
                           [v.copy() for v in self.b], self.rng_seed)

    def n_params(self) -> int:
        return sum(a.size for _, a in self.arrays())

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.arrays())

    def equals(self, other: ModelParams) -> bool:
        """Bitwise equality of every parameter array."""
        return self.arch == other.arch and all(
            a.shape == c.shape and a.tobytes() == c.tobytes()
            for (_, a), (_, c) in zip(self.arrays(), other.arrays()))


def init_params(arch: Architecture, seed: int = 0, stddev: float = 0.1) -> ModelParams:
    """Normal(0, stddev**2) weights and zero biases from a seeded generator."""
    if not stddev > 0:
        raise ConfigError("init stddev must be positive")
    rng = np.random.default_rng(seed)
    W = [rng.normal(0.0, stddev, size=s) for s in arch.weight_shapes()]
    b = [np.zeros(n) for n in arch.bias_sizes()]
    return ModelParams(arch, W, b, rng_seed=seed)


@dataclass
class ForwardTrace:
    """Pre-activations ``a[l]`` and activations ``h[l]`` of one batch.

    ``a[0]`` is unused (``None``); ``h`` grows to length ``2K + 1`` once the
    decoder has run.
    """
    depth: int
    h: list[np.ndarray] = field(default_factory=list)
    a: list[np.ndarray | None] = field(default_factory=list)

    @property
    def codes(self) -> np.ndarray:
        return self.h[self.depth]

    @property
    def reconstruction(self) -> np.ndarray | None:
        return self.h[2 * self.depth] if len(self.h) == 2 * self.depth + 1 else None

    @property
    def decoded(self) -> bool:
        return self.reconstruction is not None


def _layer(w, bias, x):
    pre = add_bias(matmul(w, x), bias)
    return pre, tanh_map(pre)


def encode(params: ModelParams, batch) -> tuple[np.ndarray, ForwardTrace]:
    batch = as_matrix(batch, "batch")
    if batch.shape[0] != params.arch.input_dim:
        raise ValueError(f"batch has {batch.shape[0]} rows, expected {params.arch.input_dim}")
    K = params.arch.depth
    trace = ForwardTrace(K, [batch], [None])
    for j in range(K):
        pre, h = _layer(params.W[j], params.b[j], trace.h[-1])
        trace.a.append(pre)
        trace.h.append(h)
    return trace.codes, trace


def decode(params: ModelParams, codes, trace: ForwardTrace | None = None
           ) -> tuple[np.ndarray, ForwardTrace]:
    """Run the transposed-weight decoder on code columns.

    If ``trace`` comes from :func:`encode` it is extended in place; otherwise a
    fresh trace whose encoder part holds only the codes is returned.
    """
    codes = as_matrix(codes, "codes")
    K = params.arch.depth
    if codes.shape[0] != params.arch.code_dim:
        raise ValueError(f"codes have {codes.shape[0]} rows, expected {params.arch.code_dim}")
    if trace is None:
        trace = ForwardTrace(K, [None] * K + [codes], [None] * (K + 1))
    elif len(trace.h) != K + 1:
        raise ValueError("trace is not at the code layer")
    for layer in range(K + 1, 2 * K + 1):
        w = params.W[2 * K - layer]
        pre, h = _layer(w.T, params.b[layer - 1], trace.h[-1])
        trace.a.append(pre)
        trace.h.append(h)
    return trace.h[-1], trace


def forward_full(params: ModelParams, batch) -> tuple[np.ndarray, np.ndarray, ForwardTrace]:
    codes, trace = encode(params, batch)
    recon, trace = decode(params, codes, trace)
    return codes, recon, trace
