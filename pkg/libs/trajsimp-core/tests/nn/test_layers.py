"""Tests for modules: linear, normalization, attention and graph attention."""

import numpy as np
import pytest
from trajsimp_core.exceptions import (
    CheckpointError,
    ContractError,
    InvalidArgumentError,
    ShapeMismatchError,
)
from trajsimp_core.nn.gradcheck import check_gradients
from trajsimp_core.nn.layers import (
    AttentionBlock,
    AttentionStack,
    Embedding,
    GraphAttentionLayer,
    GraphAttentionStack,
    LayerNorm,
    Linear,
    MultiHeadSelfAttention,
    build_adjacency,
    forward_attention,
    forward_gat,
)
from trajsimp_core.nn.tensor import Parameter, Tensor


@pytest.mark.unit
class TestLinearAndNorm:
    """Tests for Linear, LayerNorm and Embedding."""

    def test_linear_output(self, rng: np.random.Generator) -> None:
        """Test that Linear computes x @ W + b."""
        layer = Linear(3, 2, rng)
        assert layer.bias is not None
        layer.bias.data = np.array([0.5, -0.5])
        x = rng.normal(size=(4, 3))
        np.testing.assert_allclose(layer(Tensor(x)).numpy(), x @ layer.weight.data + [0.5, -0.5])
        assert layer.num_parameters() == 8

    def test_linear_wrong_width_raises(self, rng: np.random.Generator) -> None:
        """Test that the input width must match."""
        with pytest.raises(ShapeMismatchError):
            Linear(3, 2, rng)(Tensor(np.zeros((4, 5))))

    def test_layer_norm_statistics(self, rng: np.random.Generator) -> None:
        """Test that normalized rows have zero mean and unit variance."""
        out = LayerNorm(6).normalize(Tensor(rng.normal(3.0, 2.0, size=(5, 6)))).numpy()
        np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-4)

    def test_embedding_lookup(self, rng: np.random.Generator) -> None:
        """Test that ids select table rows."""
        table = Embedding(5, 3, rng)
        rows = table(np.array([4, 0, 4])).numpy()
        np.testing.assert_array_equal(rows, table.table.data[[4, 0, 4]])

    @pytest.mark.parametrize("ids", [[5], [-1]])
    def test_embedding_bad_id_raises(self, rng: np.random.Generator, ids: list[int]) -> None:
        """Test that ids outside the table are rejected."""
        with pytest.raises(ContractError):
            Embedding(5, 3, rng)(np.array(ids))


@pytest.mark.unit
class TestAttention:
    """Tests for multi-head self-attention and encoder blocks."""

    def test_weights_are_row_stochastic(self, rng: np.random.Generator) -> None:
        """Test that each query's weights sum to one."""
        attn = MultiHeadSelfAttention(8, 2, rng)
        weights = attn.attention_weights(Tensor(rng.normal(size=(5, 8)))).numpy()
        assert weights.shape == (2, 5, 5)
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0)

    def test_mask_blocks_keys(self, rng: np.random.Generator) -> None:
        """Test that masked keys receive no weight."""
        attn = MultiHeadSelfAttention(4, 2, rng)
        mask = np.ones((4, 4), dtype=bool)
        mask[:, 3] = False
        weights = attn.attention_weights(Tensor(rng.normal(size=(4, 4))), mask).numpy()
        assert np.all(weights[:, :, 3] == 0.0)

    def test_heads_must_divide_dim(self, rng: np.random.Generator) -> None:
        """Test head count validation."""
        with pytest.raises(InvalidArgumentError):
            MultiHeadSelfAttention(6, 4, rng)

    def test_block_gradients(self, rng: np.random.Generator) -> None:
        """Test an encoder block's gradients for its input and every parameter."""
        block = AttentionBlock(4, 2, rng)
        x = Parameter(rng.normal(size=(3, 4)))
        weights = rng.normal(size=(3, 4))
        params = [x, *block.parameters().values()]
        result = check_gradients(lambda: (forward_attention(block, x) * weights).sum(), params)
        assert result.passed, result

    def test_masked_block_gradients(self, rng: np.random.Generator) -> None:
        """Test gradients through a padding mask."""
        block = AttentionBlock(4, 2, rng)
        x = Parameter(rng.normal(size=(4, 4)))
        mask = np.ones((4, 4), dtype=bool)
        mask[:, 2:] = False
        weights = rng.normal(size=(4, 4))
        result = check_gradients(lambda: (block(x, mask) * weights).sum(), [x])
        assert result.passed, result

    def test_parameter_names_are_dotted_paths(self, rng: np.random.Generator) -> None:
        """Test stable parameter naming through lists of sub-modules."""
        names = set(AttentionStack(8, 2, 2, rng).parameters())
        expected = {"blocks.0.attn.query.weight", "blocks.1.ffn.expand.bias", "final_norm.gamma"}
        assert expected <= names


@pytest.mark.unit
class TestStateDict:
    """Tests for state_dict / load_state_dict."""

    def test_round_trip_reproduces_outputs(self) -> None:
        """Test that loading a state into a differently seeded module gives the same outputs."""
        source = AttentionStack(4, 1, 2, np.random.default_rng(1))
        target = AttentionStack(4, 1, 2, np.random.default_rng(2))
        target.load_state_dict(source.state_dict())
        x = Tensor(np.random.default_rng(3).normal(size=(3, 4)))
        np.testing.assert_array_equal(source(x).numpy(), target(x).numpy())

    def test_missing_parameter_raises(self, rng: np.random.Generator) -> None:
        """Test that every parameter must be present."""
        layer = Linear(2, 2, rng)
        with pytest.raises(CheckpointError):
            layer.load_state_dict({"weight": np.zeros((2, 2))})

    def test_unexpected_parameter(self, rng: np.random.Generator) -> None:
        """Test that extra entries fail only in strict mode."""
        layer = Linear(2, 2, rng)
        state = {**layer.state_dict(), "extra": np.zeros(1)}
        with pytest.raises(CheckpointError):
            layer.load_state_dict(state)
        layer.load_state_dict(state, strict=False)

    def test_shape_mismatch_raises(self, rng: np.random.Generator) -> None:
        """Test that shapes must match exactly."""
        layer = Linear(2, 2, rng)
        with pytest.raises(CheckpointError):
            layer.load_state_dict({"weight": np.zeros((3, 2)), "bias": np.zeros(2)})


@pytest.mark.unit
class TestGraphAttention:
    """Tests for adjacency construction and GAT layers."""

    def test_adjacency_symmetric_with_self_loops_for_isolated(self) -> None:
        """Test that edges are undirected and isolated nodes attend to themselves."""
        adjacency = build_adjacency(4, [(0, 1), (1, 2)])
        np.testing.assert_array_equal(adjacency, adjacency.T)
        assert adjacency[3, 3]
        assert not adjacency[0, 0]

    def test_adjacency_bad_endpoint_raises(self) -> None:
        """Test that edges must reference existing nodes."""
        with pytest.raises(ContractError):
            build_adjacency(3, [(0, 3)])

    def test_isolated_node_keeps_its_projection(self, rng: np.random.Generator) -> None:
        """Test that an isolated node's output is its own transformed features."""
        layer = GraphAttentionLayer(3, 2, 2, rng)
        features = rng.normal(size=(3, 3))
        out = forward_gat(layer, Tensor(features), [(0, 1)]).numpy()
        np.testing.assert_allclose(out[2], features[2] @ layer.transform.weight.data)

    def test_attention_stays_in_neighborhood(self, rng: np.random.Generator) -> None:
        """Test that coefficients are row-stochastic and zero off the neighborhood."""
        layer = GraphAttentionLayer(3, 2, 2, rng)
        adjacency = build_adjacency(4, [(0, 1), (1, 2), (2, 3)])
        coefficients = layer.attention(Tensor(rng.normal(size=(4, 3))), adjacency).numpy()
        np.testing.assert_allclose(coefficients.sum(axis=-1), 1.0)
        assert np.all(coefficients[:, ~adjacency] == 0.0)

    def test_matrix_and_edge_list_agree(self, rng: np.random.Generator) -> None:
        """Test that a boolean adjacency gives the same output as its edge list."""
        layer = GraphAttentionLayer(3, 2, 2, rng, concat=False)
        features = Tensor(rng.normal(size=(4, 3)))
        edges = [(0, 1), (1, 2)]
        by_matrix = forward_gat(layer, features, build_adjacency(4, edges))
        by_edges = forward_gat(layer, features, edges)
        np.testing.assert_array_equal(by_matrix.numpy(), by_edges.numpy())
        assert by_edges.shape == (4, 2)

    def test_stack_output_dim_and_gradients(self, rng: np.random.Generator) -> None:
        """Test a two-layer GAT stack's width and gradients."""
        stack = GraphAttentionStack(3, 2, 2, 2, rng)
        assert stack.output_dim == 2
        features = Parameter(rng.normal(size=(4, 3)))
        adjacency = build_adjacency(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
        weights = rng.normal(size=(4, 2))
        params = [features, *stack.parameters().values()]
        result = check_gradients(lambda: (stack(features, adjacency) * weights).sum(), params)
        assert result.passed, result

    def test_wrong_adjacency_shape_raises(self, rng: np.random.Generator) -> None:
        """Test that the adjacency must be square over the nodes."""
        layer = GraphAttentionLayer(3, 2, 2, rng)
        with pytest.raises(ShapeMismatchError):
            layer(Tensor(np.zeros((4, 3))), np.ones((3, 3), dtype=bool))
