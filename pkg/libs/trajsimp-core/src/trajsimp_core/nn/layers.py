"""
Neural building blocks on top of the tensor kernel.

Every block is a ``Module`` holding named ``Parameter``s; sub-modules and lists of sub-modules are
discovered by attribute so ``parameters()`` names are stable dotted paths
(``blocks.0.attn.query.weight``).
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping

import numpy as np

from ..exceptions import CheckpointError, ContractError, InvalidArgumentError, ShapeMismatchError
from .tensor import Parameter, Tensor

LAYER_NORM_EPS = 1e-5
GAT_NEGATIVE_SLOPE = 0.2


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Module:
    """Base class: parameter discovery and state (de)serialization."""

    def parameters(self) -> dict[str, Parameter]:
        found: dict[str, Parameter] = {}
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                found[name] = value
            elif isinstance(value, Module):
                found.update({f"{name}.{k}": v for k, v in value.parameters().items()})
            elif isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        found.update(
                            {f"{name}.{i}.{k}": v for k, v in item.parameters().items()}
                        )
        return found

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """
        Copy arrays from ``state`` into this module's parameters.

        Raises:
            CheckpointError: If a parameter is missing (or unexpected, when ``strict``) or a shape
                differs.
        """
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        if missing:
            raise CheckpointError(f"Checkpoint is missing parameters: {', '.join(missing)}")
        unexpected = sorted(set(state) - set(params))
        if strict and unexpected:
            raise CheckpointError(f"Checkpoint has unexpected parameters: {', '.join(unexpected)}")
        for name, param in params.items():
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != param.shape:
                raise CheckpointError(
                    f"Parameter {name} has shape {array.shape}, expected {param.shape}"
                )
            param.data = array.copy()


class Linear(Module):
    """``x @ weight + bias`` with Xavier-uniform weights and zero bias."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        bias: bool = True,
        scale: float = 1.0,
    ):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(scale * xavier_uniform(rng, in_dim, out_dim))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatchError("linear", x.shape, self.weight.shape)
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS):
        self.dim = dim
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def normalize(self, x: Tensor) -> Tensor:
        """Zero-mean, unit-variance rows before the affine transform."""
        centered = x - x.mean(axis=-1, keepdims=True)
        variance = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (variance + self.eps).sqrt()

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dim:
            raise ShapeMismatchError("layer_norm", x.shape, (self.dim,))
        return self.normalize(x) * self.gamma + self.beta


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator, scale: float = 0.1):
        self.count = count
        self.dim = dim
        self.table = Parameter(rng.normal(0.0, scale, size=(count, dim)))

    def __call__(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.count):
            raise ContractError(f"Embedding ids outside [0, {self.count})")
        return self.table[ids]


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.expand = Linear(dim, hidden, rng)
        self.project = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.project(self.expand(x).relu())


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over a (seq, dim) input."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if heads < 1 or dim % heads:
            raise InvalidArgumentError(f"Head count {heads} must divide model dimension {dim}")
        self.dim = dim
        self.heads = heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.output = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        return x.reshape(n, self.heads, self.dim // self.heads).transpose(1, 0, 2)

    def attention_weights(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        """(heads, seq, seq) weights; ``mask[i, j]`` False blocks query ``i`` from key ``j``."""
        q, k = self._split(self.query(x)), self._split(self.key(x))
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(self.dim // self.heads))
        return scores.softmax(axis=-1, mask=None if mask is None else mask[None, :, :])

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeMismatchError("attention", x.shape, (self.dim,))
        weights = self.attention_weights(x, mask)
        context = weights @ self._split(self.value(x))
        return self.output(context.transpose(1, 0, 2).reshape(x.shape[0], self.dim))


class AttentionBlock(Module):
    """Pre-norm encoder layer: ``x + attn(ln(x))`` then ``x + ffn(ln(x))``."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, ffn_mult: int = 2):
        self.attn_norm = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.ffn_norm = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_mult * dim, rng)

    @property
    def dim(self) -> int:
        return self.attn.dim

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.attn_norm(x), mask)
        return x + self.ffn(self.ffn_norm(x))


def forward_attention(block: AttentionBlock, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    return block(x, mask)


class AttentionStack(Module):
    """``layers`` attention blocks followed by a final layer norm."""

    def __init__(self, dim: int, layers: int, heads: int, rng: np.random.Generator):
        self.blocks = [AttentionBlock(dim, heads, rng) for _ in range(layers)]
        self.final_norm = LayerNorm(dim)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        for block in self.blocks:
            x = block(x, mask)
        return self.final_norm(x)


# ============================================================================
# Graph attention
# ============================================================================


def build_adjacency(num_nodes: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    """
    Boolean (nodes, nodes) neighborhood matrix from undirected edges.

    Nodes left without any neighbor get a self-loop.

    Raises:
        ContractError: If an edge endpoint is not a valid node index.
    """
    adjacency = np.zeros((num_nodes, num_nodes), dtype=bool)
    pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        raise ContractError(f"Edge endpoint outside [0, {num_nodes})")
    adjacency[pairs[:, 0], pairs[:, 1]] = True
    adjacency[pairs[:, 1], pairs[:, 0]] = True
    isolated = ~adjacency.any(axis=1)
    adjacency[isolated, isolated] = True
    return adjacency


class GraphAttentionLayer(Module):
    """
    Multi-head graph attention with LeakyReLU edge scoring.

    ``e_ij = LeakyReLU(a_src . Wh_i + a_dst . Wh_j)``, normalized over the neighborhood of ``i``.
    Heads are concatenated, or averaged when ``concat`` is False (the last layer of a stack).
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        heads: int,
        rng: np.random.Generator,
        concat: bool = True,
    ):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.concat = concat
        self.transform = Linear(in_dim, heads * out_dim, rng, bias=False)
        self.attn_src = Parameter(xavier_uniform(rng, heads, out_dim))
        self.attn_dst = Parameter(xavier_uniform(rng, heads, out_dim))

    @property
    def output_dim(self) -> int:
        return self.heads * self.out_dim if self.concat else self.out_dim

    def _project(self, features: Tensor) -> Tensor:
        n = features.shape[0]
        return self.transform(features).reshape(n, self.heads, self.out_dim).transpose(1, 0, 2)

    def attention(self, features: Tensor, adjacency: np.ndarray) -> Tensor:
        """(heads, nodes, nodes) coefficients; each row sums to 1 over the neighborhood."""
        return self._attention(self._project(features), adjacency)

    def _attention(self, wh: Tensor, adjacency: np.ndarray) -> Tensor:
        n = wh.shape[1]
        src = (wh * self.attn_src.reshape(self.heads, 1, self.out_dim)).sum(axis=-1)
        dst = (wh * self.attn_dst.reshape(self.heads, 1, self.out_dim)).sum(axis=-1)
        scores = (src.reshape(self.heads, n, 1) + dst.reshape(self.heads, 1, n)).leaky_relu(
            GAT_NEGATIVE_SLOPE
        )
        return scores.softmax(axis=-1, mask=adjacency[None, :, :])

    def __call__(self, features: Tensor, adjacency: np.ndarray) -> Tensor:
        n = features.shape[0]
        if features.ndim != 2 or features.shape[1] != self.in_dim:
            raise ShapeMismatchError("graph_attention", features.shape, (self.in_dim,))
        if adjacency.shape != (n, n):
            raise ShapeMismatchError("graph_attention", adjacency.shape, (n, n))
        wh = self._project(features)
        aggregated = self._attention(wh, adjacency) @ wh
        if self.concat:
            return aggregated.transpose(1, 0, 2).reshape(n, self.heads * self.out_dim)
        return aggregated.mean(axis=0)


def forward_gat(
    layer: GraphAttentionLayer,
    features: Tensor,
    edges: Iterable[tuple[int, int]] | np.ndarray,
) -> Tensor:
    """Apply ``layer`` to a graph given as an edge list or a boolean adjacency matrix."""
    n = features.shape[0]
    if isinstance(edges, np.ndarray) and edges.dtype == bool:
        adjacency = edges.copy()
        isolated = ~adjacency.any(axis=1)
        adjacency[isolated, isolated] = True
    else:
        adjacency = build_adjacency(n, edges)
    return layer(features, adjacency)


class GraphAttentionStack(Module):
    """GAT layers with ELU between them; the last layer averages its heads."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        layers: int,
        heads: int,
        rng: np.random.Generator,
    ):
        self.layers: list[GraphAttentionLayer] = []
        dim = in_dim
        for i in range(layers):
            last = i == layers - 1
            layer = GraphAttentionLayer(dim, out_dim, heads, rng, concat=not last)
            self.layers.append(layer)
            dim = layer.output_dim
        self.output_dim = dim

    def __call__(self, features: Tensor, adjacency: np.ndarray) -> Tensor:
        for i, layer in enumerate(self.layers):
            features = layer(features, adjacency)
            if i < len(self.layers) - 1:
                features = features.elu()
        return features
