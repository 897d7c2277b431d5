import math

import numpy as np
import pytest

from rmna import numerics as nx
from rmna.application.aggregator import (
    AggregatorDims,
    AggregatorModel,
    aggregate_head,
    attention_weights,
    build_input,
    forward,
    forward_entities,
    materialize,
    model_params,
    na_energy,
    na_loss_and_grads,
    neighbor_attention,
    self_attention_fuse,
    train_aggregator,
)
from rmna.application.events import create_bus, wire_events
from rmna.config import AggregatorConfig
from rmna.domain.embeddings import EmbeddingTable
from rmna.domain.errors import ConsistencyError, ShapeError
from rmna.domain.neighbors import NeighborSets
from rmna.domain.rules import TransformedNeighbor

BASE_DIM = 4
SMALL = dict(
    dim1=6,
    dim2=5,
    query_dim1=3,
    key_dim1=3,
    value_dim1=2,
    query_dim2=3,
    key_dim2=3,
    value_dim2=2,
    num_attention_heads=2,
    num_self_attention_heads=2,
)
TOY_ROWS = [
    ("a", "r", "b"),
    ("b", "s", "c"),
    ("c", "r", "d"),
    ("d", "s", "e"),
    ("a", "s", "c"),
    ("e", "r", "a"),
]


def _config(**overrides):
    return AggregatorConfig(**{**SMALL, **overrides})


def _tn(rel, entity, hc=0.8, conf=0.75, l_norm=2 / 3, s=0.4):
    return TransformedNeighbor(rel=rel, entity=entity, hc=hc, conf=conf, l_norm=l_norm, s=s)


@pytest.fixture
def toy(make_kg):
    kg = make_kg(TOY_ROWS)
    a, b, c, d, e = range(5)
    r, s = 0, 1
    transformed = [[_tn(r, c)], [_tn(r, d, s=1.0)], [], [_tn(s, a, hc=0.9)], []]
    neighbors = NeighborSets.from_graph(kg, transformed)
    rng = np.random.default_rng(0)
    base = EmbeddingTable(
        rng.normal(size=(kg.entity_count, BASE_DIM)),
        rng.normal(size=(kg.relation_count + 1, BASE_DIM)),
    )
    return kg, neighbors, base


def _model(dtype=np.float64, **overrides):
    return AggregatorModel.initialize(BASE_DIM, _config(**overrides), seed=1, dtype=dtype)


# input construction


def test_transformed_width_follows_mask():
    assert AggregatorDims.from_config(100, AggregatorConfig()).transformed_width(1) == 304
    assert AggregatorDims.from_config(100, AggregatorConfig(ablation="nh")).transformed_width(1) == 303
    off = AggregatorConfig(use_hc=False, use_conf=False, use_lnorm=False, use_s=False)
    assert AggregatorDims.from_config(100, off).transformed_width(1) == 300


def test_published_dimensions():
    dims = AggregatorDims.from_config(100, AggregatorConfig())
    assert dims.fused_width(1) == 400
    assert dims.out_dim == 200
    assert dims.shapes()["l1.Wco"] == (100, 300)


def test_build_input_widths():
    model = _model()
    v = np.ones(BASE_DIM)
    assert build_input(model, 1, v, v, v).shape == (6,)
    assert build_input(model, 1, v, v, v, "transformed", (0.5, 0.5, 0.5, 0.5)).shape == (6,)
    with pytest.raises(ConsistencyError):
        build_input(model, 1, v, v, v, "transformed")
    with pytest.raises(ConsistencyError):
        build_input(model, 1, v, v, v, "transformed", (0.5, 0.5))


def test_build_input_masks_metadata():
    model = _model(ablation="ns")
    w = dict(model.weights)
    # the last column of the transformed weight sees l_norm once s is masked
    w["l1.Wct"] = np.zeros_like(w["l1.Wct"])
    w["l1.Wct"][0, -1] = 1.0
    model = model.with_weights(w)
    v = np.zeros(BASE_DIM)
    c = build_input(model, 1, v, v, v, "transformed", (0.1, 0.2, 0.3, 0.4))
    assert c[0] == pytest.approx(0.3)


def test_zero_weights_give_zero_input():
    model = _model()
    w = dict(model.weights)
    w["l1.Wco"] = np.zeros_like(w["l1.Wco"])
    c = build_input(model.with_weights(w), 1, np.ones(BASE_DIM), np.ones(BASE_DIM), np.ones(BASE_DIM))
    np.testing.assert_array_equal(c, np.zeros(6))


# attention


def test_equal_inputs_get_equal_weights():
    model = _model()
    inputs = np.ones((2, 6))
    np.testing.assert_allclose(neighbor_attention(model, 1, inputs, 0, "original"), [0.5, 0.5])


def test_zero_attention_vector_is_uniform():
    model = _model()
    w = dict(model.weights)
    w["l1.Wbt"] = np.zeros_like(w["l1.Wbt"])
    inputs = np.random.default_rng(4).normal(size=(4, 6))
    out = neighbor_attention(model.with_weights(w), 1, inputs, 1, "transformed")
    np.testing.assert_allclose(out, np.full(4, 0.25))


def test_attention_from_known_logits():
    model = _model()
    w = dict(model.weights)
    w["l1.Wbo"] = np.zeros_like(w["l1.Wbo"])
    w["l1.Wbo"][0, 0] = 1.0
    inputs = np.zeros((2, 6))
    inputs[1, 0] = math.log(3.0)
    out = neighbor_attention(model.with_weights(w), 1, inputs, 0, "original")
    np.testing.assert_allclose(out, [0.25, 0.75])


def test_attention_over_empty_set_is_an_error():
    with pytest.raises(ValueError):
        neighbor_attention(_model(), 1, np.zeros((0, 6)), 0, "original")


def test_aggregate_head_examples():
    np.testing.assert_allclose(
        aggregate_head(np.array([[1.0, -2.0], [3.0, 0.0]]), np.array([0.5, 0.5])),
        [2.0, math.exp(-1.0) - 1.0],
    )
    one_hot = aggregate_head(np.array([[1.0, -2.0], [3.0, 0.0]]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(one_hot, nx.elu(np.array([1.0, -2.0])))
    np.testing.assert_array_equal(aggregate_head(np.zeros((0, 6)), np.zeros(0), 6), np.zeros(6))


# self-attention fusion


def test_zero_dense_layer_gives_zero_output():
    model = _model()
    w = dict(model.weights)
    w["l1.Wf"] = np.zeros_like(w["l1.Wf"])
    hidden = np.random.default_rng(2).normal(size=(4, 6))
    np.testing.assert_array_equal(self_attention_fuse(model.with_weights(w), 1, hidden), np.zeros(6))


def test_zero_query_gives_uniform_attention():
    model = _model()
    w = dict(model.weights)
    w["l1.WQ"] = np.zeros_like(w["l1.WQ"])
    model = model.with_weights(w)
    hidden = np.random.default_rng(3).normal(size=(4, 6))

    heads = [np.tile((hidden @ w["l1.WV"][k]).mean(axis=0), (4, 1)) for k in range(2)]
    z = np.concatenate(heads, axis=1).reshape(-1)
    expected = nx.elu(w["l1.Wf"] @ z + w["l1.bf"])
    np.testing.assert_allclose(self_attention_fuse(model, 1, hidden), expected, rtol=1e-10)


def test_fuse_needs_two_k_m_hidden_vectors():
    with pytest.raises(ShapeError):
        self_attention_fuse(_model(), 1, np.zeros((3, 6)))


# full forward


def test_forward_shape_and_determinism(toy):
    kg, neighbors, base = toy
    model = _model()
    out = forward(0, model, neighbors, base)
    assert out.shape == (5,)
    np.testing.assert_array_equal(out, forward(0, model, neighbors, base))
    with pytest.raises(IndexError):
        forward(kg.entity_count, model, neighbors, base)


def test_forward_matches_materialize(toy):
    _, neighbors, base = toy
    model = _model()
    emb = materialize(model, neighbors, base, chunk_size=2, progress=False)
    assert emb.entity.shape == (5, 5)
    assert emb.relation.shape == (3, 5)
    for e in range(5):
        np.testing.assert_allclose(forward(e, model, neighbors, base), emb.entity[e], rtol=1e-9, atol=1e-12)


def test_isolated_entity_depends_only_on_itself(make_kg):
    kg = make_kg([("a", "r", "b")], extra_entities=["c"])
    neighbors = NeighborSets.from_graph(kg)
    rng = np.random.default_rng(5)
    base = EmbeddingTable(rng.normal(size=(3, BASE_DIM)), rng.normal(size=(2, BASE_DIM)))
    model = _model()
    before = forward(2, model, neighbors, base)
    moved = EmbeddingTable(base.entity_emb.copy(), base.relation_emb.copy())
    moved.entity_emb[:2] += 1.0
    np.testing.assert_array_equal(forward(2, model, neighbors, moved), before)


def test_forward_ignores_neighbor_storage_order(toy):
    _, neighbors, base = toy
    model = _model(dtype=np.float32)
    base32 = EmbeddingTable(base.entity_emb.astype(np.float32), base.relation_emb.astype(np.float32))
    shuffled = neighbors.with_original_order(0, [2, 0, 1])
    for e in range(5):
        np.testing.assert_allclose(
            forward(e, model, shuffled, base32), forward(e, model, neighbors, base32), atol=1e-5
        )


@pytest.mark.parametrize("layer", [1, 2])
@pytest.mark.parametrize("kind", ["original", "transformed"])
def test_attention_sums_to_one_per_entity(toy, layer, kind):
    _, neighbors, base = toy
    seg, alpha = attention_weights(_model(), neighbors, base, layer, kind)
    totals = np.zeros((5, alpha.shape[1]))
    np.add.at(totals, seg, alpha)
    present = np.unique(seg)
    np.testing.assert_allclose(totals[present], 1.0, atol=1e-6)


def test_na_energy_examples():
    assert na_energy([1.0, 1.0], [0.0, 1.0], [1.0, 2.0]) == 0.0
    assert na_energy([1.0, 1.0], [0.0, 1.0], [0.0, 0.0]) == 3.0
    v = np.array([0.5, -2.0])
    assert na_energy(v, np.zeros(2), v) == 0.0
    with pytest.raises(ShapeError):
        na_energy([1.0], [1.0, 2.0], [1.0])


# training


def _kink_free_model(neighbors, base, rows):
    """First seeded model whose attention logits all stay clear of the LeakyReLU kink."""
    for seed in range(50):
        model = AggregatorModel.initialize(BASE_DIM, _config(norm="L2"), seed=seed, dtype=np.float64)
        _, _, cache = forward_entities(
            model, model_params(model, base), neighbors, rows, train=True, rng=np.random.default_rng(7), dropout=0.2
        )
        logits = [
            branch["L"]
            for layer in (cache["c1"], cache["c2"])
            for branch in (layer["co"], layer["ct"])
            if branch is not None
        ]
        if min(np.abs(x).min() for x in logits) > 1e-2:
            return model
    raise AssertionError("no kink-free sample point found")


def test_gradients_match_finite_differences(toy):
    kg, neighbors, base = toy
    pos = kg.triples[:4]
    neg = pos.copy()
    neg[:, 2] = (pos[:, 2] + 2) % kg.entity_count
    rows = np.concatenate([pos[:, 0], pos[:, 2], neg[:, 0], neg[:, 2]])
    model = _kink_free_model(neighbors, base, rows)
    params = model_params(model, base)
    margin = 50.0

    def run(p):
        return na_loss_and_grads(
            model, p, neighbors, pos, neg, margin, train=True, rng=np.random.default_rng(7), dropout=0.2
        )

    loss, grads = run(params)
    assert loss > 0
    assert set(grads) == set(params)
    err = nx.grad_check(lambda p: run(p)[0], params, grads, coords_per_tensor=3, seed=11)
    assert err < 1e-3


def test_zero_epochs_keeps_initialization(toy):
    kg, neighbors, base = toy
    config = _config(epochs=0)
    model, table = train_aggregator(kg, neighbors, base, config, seed=9)
    init = AggregatorModel.initialize(BASE_DIM, config, 9, dtype=base.entity_emb.dtype)
    for name, w in init.weights.items():
        assert model.weights[name].tobytes() == w.tobytes()
    assert table.entity_emb.tobytes() == base.entity_emb.tobytes()


def test_freeze_base_keeps_base_embeddings(toy):
    kg, neighbors, base = toy
    _, table = train_aggregator(kg, neighbors, base, _config(epochs=2, batch_size=3, freeze_base=True), seed=0)
    np.testing.assert_array_equal(table.entity_emb, base.entity_emb)


def test_training_loss_goes_down(make_kg):
    from rmna.application.rules import filter_rules, match_rules, mine_path_rules
    from rmna.application.transe import init_embeddings
    from rmna.config import MiningConfig
    from rmna.infra.synthetic import PlantedSpec, generate_planted

    kg = make_kg(generate_planted(PlantedSpec(entities=30, seed=2)).train, inverse=True)
    base = init_embeddings(kg, BASE_DIM, 0)
    rules = filter_rules(mine_path_rules(kg, MiningConfig(l_max=2)), 0.5, 0.5)
    neighbors = NeighborSets.from_graph(kg, match_rules(kg, rules, base, 2))

    bus = create_bus()
    history = wire_events(bus)
    config = _config(epochs=40, batch_size=64, learning_rate=0.01, dropout=0.0)
    train_aggregator(kg, neighbors, base, config, seed=0, bus=bus)
    losses = [loss for _, loss in history.get("agg")]
    assert len(losses) == 40
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
