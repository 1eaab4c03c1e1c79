import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgnav.graph import (EmptyGraph, EmptyLabel, GraphError, ObjectNode, SceneGraph, ZeroVector, cosine_sim,
                         encode_graph, graph_noise, ground_truth_graph, load_graph, pooling_weights, pseudo_embed,
                         save_graph, target_only_encoding)
from sgnav.scene import Box, Scene, TargetCandidate
from sgnav.scenes import CHAIR_LAYOUTS, Family, scene_variants


def node(label, pos=(0.0, 0.0, 0.0), ext=(1.0, 1.0, 1.0), dim=16, target=False, emb=None):
    return ObjectNode(label, tuple(pos), tuple(ext), pseudo_embed(label, dim) if emb is None else emb, target)


def softmax_oracle(graph, target, tau):
    """Plain-loop softmax pooling, written independently of the library."""
    sims = []
    for n in graph.nodes:
        a, b = n.text_embedding, target
        sims.append(sum(x * y for x, y in zip(a, b)) / (np.sqrt(sum(x * x for x in a)) * np.sqrt(sum(y * y for y in b))))
    m = max(sims)
    ex = [np.exp((s - m) / tau) for s in sims]
    w = [e / sum(ex) for e in ex]
    feats = [np.concatenate([n.bbox_position, n.bbox_extent, n.text_embedding]) for n in graph.nodes]
    return np.array(w), sum(wi * f for wi, f in zip(w, feats))


labels = st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12)


def random_graph(rng, n, dim=16):
    out = []
    for i in range(n):
        out.append(node(f"obj{rng.integers(1000)}-{i}", rng.uniform(-5, 5, 3), rng.uniform(0.1, 2, 3), dim))
    return SceneGraph(tuple(out))


def test_pseudo_embed_deterministic_and_unit():
    a, b = pseudo_embed("bowl"), pseudo_embed("bowl")
    np.testing.assert_array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1) < 1e-6
    assert a.shape == (512,)


def test_pseudo_embed_empty_label():
    with pytest.raises(EmptyLabel):
        pseudo_embed("")


def test_pseudo_embed_synonyms():
    syn = {"bowl near red wall": "bowl"}
    np.testing.assert_array_equal(pseudo_embed("bowl near red wall", 32, syn), pseudo_embed("bowl", 32))
    assert cosine_sim(pseudo_embed("bowl near red wall", 32), pseudo_embed("bowl", 32)) < 0.99


def test_unrelated_labels_nearly_orthogonal():
    assert abs(cosine_sim(pseudo_embed("bowl"), pseudo_embed("red wall"))) < 0.2
    words = ["bowl", "table", "chair", "pole", "wall", "cup", "plate", "lamp", "sofa", "door", "box"]
    pairs = list(itertools.combinations(words, 2))[:50] + [(f"a{i}", f"b{i}") for i in range(50)]
    sims = [abs(cosine_sim(pseudo_embed(a), pseudo_embed(b))) for a, b in pairs]
    # random unit vectors in 512-d have cosine sd ~ 1/sqrt(512) = 0.044
    assert max(sims) < 0.2


@settings(max_examples=50, deadline=None)
@given(labels)
def test_pseudo_embed_unit_property(label):
    assert abs(np.linalg.norm(pseudo_embed(label, 32)) - 1.0) < 1e-6


def test_cosine_sim_basic():
    v = np.array([0.3, -1.2, 2.0])
    assert cosine_sim(v, v) == pytest.approx(1.0)
    assert cosine_sim(v, -v) == pytest.approx(-1.0)
    assert cosine_sim([1, 0, 0], [0, 1, 0]) == 0.0
    with pytest.raises(ZeroVector):
        cosine_sim([0, 0], [1, 0])


def test_node_validation():
    with pytest.raises(GraphError):
        ObjectNode("x", (0, 0, 0), (1, 0, 1), pseudo_embed("x", 8))
    with pytest.raises(GraphError):
        ObjectNode("x", (0, 0, 0), (1, 1, 1), np.ones(8))


def test_single_node_identity():
    g = SceneGraph((node("table", (1, 2, 0.3), (2, 1, 0.7)),))
    np.testing.assert_array_equal(encode_graph(g, pseudo_embed("bowl", 16)), g.nodes[0].feature)


def test_identical_embeddings_give_mean():
    e = pseudo_embed("chair", 16)
    g = SceneGraph((node("chair", (0, 0, 0), emb=e), node("chair", (2, 4, 6), (3, 3, 3), emb=e)))
    out = encode_graph(g, pseudo_embed("bowl", 16))
    np.testing.assert_allclose(out, 0.5 * (g.nodes[0].feature + g.nodes[1].feature), atol=1e-15)


def test_low_temperature_selects_target():
    t = pseudo_embed("bowl", 16)
    g = SceneGraph((node("table", (1, 1, 0)), node("bowl", (5, 5, 1), (0.2, 0.2, 0.1)), node("wall", (9, 0, 2))))
    out = encode_graph(g, t, tau=1e-3)
    assert np.max(np.abs(out - g.nodes[1].feature)) <= 1e-3


def test_encoder_matches_oracle():
    rng = np.random.default_rng(4)
    for n in (1, 2, 5, 9):
        g = random_graph(rng, n)
        t = pseudo_embed("bowl", 16)
        w_ref, out_ref = softmax_oracle(g, t, 0.1)
        np.testing.assert_allclose(pooling_weights(g, t, 0.1), w_ref, atol=1e-12)
        np.testing.assert_allclose(encode_graph(g, t, 0.1), out_ref, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(0.01, 2.0))
def test_permutation_invariance_and_normalization(n, seed, tau):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    t = pseudo_embed("bowl", 16)
    w = pooling_weights(g, t, tau)
    assert abs(w.sum() - 1.0) <= 1e-9
    perm = rng.permutation(n)
    shuffled = SceneGraph(tuple(g.nodes[i] for i in perm))
    assert np.max(np.abs(encode_graph(shuffled, t, tau) - encode_graph(g, t, tau))) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_argmax_weight_on_most_similar_node(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    t = rng.standard_normal(16)
    sims = [cosine_sim(nd.text_embedding, t) for nd in g.nodes]
    assert int(np.argmax(pooling_weights(g, t))) == int(np.argmax(sims))


def test_empty_graph():
    with pytest.raises(EmptyGraph):
        encode_graph(SceneGraph(()), pseudo_embed("bowl", 16))


def test_output_dimension():
    g = ground_truth_graph(scene_variants(Family.TWO_WALL)[0], 512)
    assert encode_graph(g, pseudo_embed("bowl")).shape == (518,)


def test_ground_truth_graph_cardinality():
    bowl = (TargetCandidate("bowl", (2.0, 2.0, 0.7)),)
    s = Scene((0, 0, 5, 5), (Box((4, 4), (0.5, 0.3), "table", "brown", 0.7),), bowl)
    assert len(ground_truth_graph(s, 16)) == 2
    assert len(ground_truth_graph(Scene((0, 0, 5, 5), (), bowl), 16)) == 1


def test_ground_truth_graph_chair_scene():
    k = next(i for i, lay in enumerate(CHAIR_LAYOUTS) if len(lay) == 3)
    s = scene_variants(Family.RANDOM_CHAIRS)[k]
    g = ground_truth_graph(s, 16)
    assert len(g) == 6  # 2 tables + 3 chairs + the bowl
    for ob, nd in zip(s.obstacles, g.nodes):
        assert nd.label == f"{ob.color} {ob.label}"
        if isinstance(ob, Box):
            assert nd.bbox_extent[:2] == (2 * ob.half_extents[0], 2 * ob.half_extents[1])
        else:
            assert nd.bbox_extent[:2] == (2 * ob.radius, 2 * ob.radius)
        assert nd.bbox_position[:2] == ob.center
    assert g.nodes[-1].is_target and g.nodes[-1].bbox_position == s.target.position


def test_noise_identity():
    g = random_graph(np.random.default_rng(0), 4)
    out = graph_noise(g, np.random.default_rng(1), 0.0, 0.0)
    assert out == g
    for a, b in zip(out.nodes, g.nodes):
        np.testing.assert_array_equal(a.text_embedding, b.text_embedding)


def test_noise_keeps_target():
    base = random_graph(np.random.default_rng(0), 4).nodes
    g = SceneGraph(base + (node("bowl", target=True),))
    rng = np.random.default_rng(2)
    kept = [len(graph_noise(g, rng, 0.0, 0.999)) for _ in range(200)]
    assert min(kept) >= 1
    assert np.mean(kept) - 1 < 0.05
    assert all(graph_noise(g, rng, 0.0, 0.999).target_index() is not None for _ in range(50))


def test_noise_displacement_rms():
    g = SceneGraph((node("bowl", (1, 2, 3), target=True),))
    rng = np.random.default_rng(3)
    d = [np.linalg.norm(np.subtract(graph_noise(g, rng, 0.1, 0.0).nodes[0].bbox_position, (1, 2, 3)))
         for _ in range(1000)]
    assert np.sqrt(np.mean(np.square(d))) == pytest.approx(0.1 * np.sqrt(3), rel=0.05)


def test_noise_rejects_bad_probability():
    with pytest.raises(ValueError):
        graph_noise(SceneGraph(()), np.random.default_rng(0), 0.0, 1.0)


def test_target_only_encoding():
    g = SceneGraph((node("table"), node("bowl", (3, 3, 1), target=True)))
    np.testing.assert_array_equal(target_only_encoding(g), g.nodes[1].feature)


def test_graph_file_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    g = SceneGraph(random_graph(rng, 5, 32).nodes + (node("bowl", rng.uniform(0, 1, 3), dim=32, target=True),))
    p = tmp_path / "g.jsonl"
    save_graph(g, p)
    back = load_graph(p, 32)
    assert [n.label for n in back.nodes] == [n.label for n in g.nodes]
    np.testing.assert_array_equal(back.features(), g.features())
    assert back.target_index() == g.target_index()


def test_graph_file_without_embeddings(tmp_path):
    g = SceneGraph((node("table", dim=32), node("bowl", dim=32, target=True)))
    p = tmp_path / "g.jsonl"
    save_graph(g, p, include_embeddings=False)
    np.testing.assert_array_equal(load_graph(p, 32).features(), g.features())
