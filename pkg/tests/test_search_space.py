"""Cell topology, candidate ops, genotype validation, discretization."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cardionas import search_space as ss
from cardionas.autodiff import Tensor
from cardionas.errors import GenotypeError, InputError

from oracles import best_two_pairs, candidate_reference


def test_edge_enumeration_is_node_major():
    assert ss.NUM_EDGES == 14
    assert ss.EDGES[:2] == ((0, 2), (1, 2))
    assert ss.EDGES[2:5] == ((0, 3), (1, 3), (2, 3))
    assert ss.EDGES[-1] == (4, 5)
    for k, (pred, node) in enumerate(ss.EDGES):
        assert ss.edge_index(pred, node) == k
    with pytest.raises(InputError):
        ss.edge_index(2, 2)
    with pytest.raises(InputError):
        ss.edge_index(0, 6)


def test_op_menu_order_and_zero_position():
    assert ss.OP_NAMES == ("conv3", "conv5", "conv9", "conv13", "conv17",
                           "conv27", "maxpool3", "maxpool5", "skip_connect",
                           "zero")
    assert ss.ZERO_INDEX == 9
    assert ss.CONCAT_NODES == (2, 3, 4, 5)


@pytest.mark.parametrize("stride", [1, 2])
def test_make_op_builds_every_candidate(rng, stride):
    x = Tensor(rng.standard_normal((2, 3, 12)))
    lout = 12 if stride == 1 else 6
    for name in ss.OP_NAMES:
        op = ss.make_op(name, 3, stride, False, rng, prefix=f"t.{name}",
                        dtype=np.float64)
        out = op(x, training=True, tape=None)
        assert out.data.shape == (2, 3, lout), name
    with pytest.raises(InputError):
        ss.make_op("conv4", 3, 1, False, rng, prefix="bad")


def test_skip_connect_variants(rng):
    x = Tensor(rng.standard_normal((1, 2, 8)))
    flat = ss.make_op("skip_connect", 2, 1, False, rng, prefix="s1")
    assert isinstance(flat, ss.Identity)
    assert flat(x, training=True, tape=None) is x
    strided = ss.make_op("skip_connect", 2, 2, False, rng, prefix="s2",
                         dtype=np.float64)
    assert isinstance(strided, ss.StridedSkip)
    assert strided.conv.stride == 2
    assert strided.conv.weight.data.shape == (2, 2, 1)


def test_zero_op_blocks_everything(rng):
    x = Tensor(rng.standard_normal((2, 3, 9)), requires_grad=True)
    out = ss.ZeroOp(stride=2)(x, training=True, tape=None)
    assert out.data.shape == (2, 3, 5)
    assert not out.data.any()
    assert not out.requires_grad


def test_candidate_ops_match_reference(rng):
    """Each op built by make_op agrees with a straight-line numpy rebuild."""
    from cardionas import autodiff as ad
    from cardionas.supernet import MAX_CONV_KERNEL, MixedEdge

    for stride in (1, 2):
        edge = MixedEdge("e", 0, 4, stride, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((2, 4, 16)))
        cols = ad.unfold(x, MAX_CONV_KERNEL, stride=stride)
        outs = edge.candidate_outputs(x, cols, training=True, tape=None)
        want = candidate_reference(edge, x.data)
        assert len(outs) == len(want) == ss.NUM_OPS
        for name, got, ref in zip(ss.OP_NAMES, outs, want):
            np.testing.assert_allclose(got.data, ref, rtol=1e-9, atol=1e-10,
                                       err_msg=name)


def test_arch_params_shape_and_scale():
    rng = np.random.Generator(np.random.PCG64(3))
    arch = ss.ArchParams.init(rng, dtype=np.float64)
    assert arch.alpha_normal.id == "alpha.normal"
    assert arch.alpha_reduce.id == "alpha.reduce"
    for p in arch.parameters():
        assert p.group == "arch"
        assert p.data.shape == (ss.NUM_EDGES, ss.NUM_OPS)
        assert np.abs(p.data).max() < 1e-2  # near-uniform start


def test_mixing_weights_is_rowwise_softmax(rng):
    row = rng.normal(0, 2, size=ss.NUM_OPS)
    w = ss.mixing_weights(row)
    assert abs(w.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(w, np.exp(row) / np.exp(row).sum(), rtol=1e-12)
    with pytest.raises(InputError):
        ss.mixing_weights(np.zeros(3))


# -- genotypes -----------------------------------------------------------------

def pairings():
    return (((0, "conv3"), (1, "conv5")),
            ((0, "maxpool3"), (2, "skip_connect")),
            ((1, "conv27"), (3, "conv9")),
            ((2, "conv13"), (4, "maxpool5")))


def test_genotype_round_trips_through_json():
    g = ss.Genotype(normal=pairings(), reduce=pairings())
    text = g.to_json_text()
    assert text.endswith("\n")
    back = ss.Genotype.from_json_text(text)
    assert back == g
    assert back.concat == (2, 3, 4, 5)


@pytest.mark.parametrize("mutate", [
    lambda n: n[:3],                                           # wrong node count
    lambda n: (n[0][:1],) + n[1:],                             # one pick only
    lambda n: (((0, "conv3"), (0, "conv5")),) + n[1:],         # repeated pred
    lambda n: (((0, "conv3"), (2, "conv5")),) + n[1:],         # pred >= node
    lambda n: (((0, "zero"), (1, "conv5")),) + n[1:],          # excluded op
    lambda n: (((0, "conv4"), (1, "conv5")),) + n[1:],         # unknown op
    lambda n: (((-1, "conv3"), (1, "conv5")),) + n[1:],        # negative pred
])
def test_genotype_rejects_malformed_cells(mutate):
    with pytest.raises(GenotypeError):
        ss.Genotype(normal=mutate(pairings()), reduce=pairings())


def test_genotype_rejects_bad_concat_and_json():
    with pytest.raises(GenotypeError):
        ss.Genotype(normal=pairings(), reduce=pairings(), concat=(2, 3, 4))
    with pytest.raises(GenotypeError):
        ss.Genotype.from_json_text("{not json")
    with pytest.raises(GenotypeError):
        ss.Genotype.from_json_text("[]")
    with pytest.raises(GenotypeError):
        ss.Genotype.from_json_text('{"format_version": 2}')
    g = ss.Genotype(normal=pairings(), reduce=pairings())
    with pytest.raises(GenotypeError):
        ss.Genotype.from_json_text(g.to_json_text().replace('"normal"', '"nermal"'))


# -- discretization ------------------------------------------------------------

def test_discretize_matches_bruteforce_reference():
    for seed in range(1000):
        g = np.random.Generator(np.random.PCG64(seed))
        an = g.normal(0, 1, size=(ss.NUM_EDGES, ss.NUM_OPS))
        ar = g.normal(0, 1, size=(ss.NUM_EDGES, ss.NUM_OPS))
        got = ss.discretize(an, ar)
        assert got.normal == best_two_pairs(an)
        assert got.reduce == best_two_pairs(ar)


def test_discretize_tie_breaking():
    # all-equal scores: every edge picks conv3, every node keeps the two
    # lowest predecessors
    flat = np.zeros((ss.NUM_EDGES, ss.NUM_OPS))
    g = ss.discretize(flat, flat)
    for cell in (g.normal, g.reduce):
        assert cell == (((0, "conv3"), (1, "conv3")),) * 4


def test_discretize_never_picks_zero():
    alpha = np.zeros((ss.NUM_EDGES, ss.NUM_OPS))
    alpha[:, ss.ZERO_INDEX] = 50.0  # zero dominates every row
    alpha[:, 7] = 1.0               # best real op is maxpool5
    g = ss.discretize(alpha, alpha)
    for cell in (g.normal, g.reduce):
        for node in cell:
            for _, op in node:
                assert op == "maxpool5"


def test_discretize_shape_guard():
    with pytest.raises(InputError):
        ss.discretize(np.zeros((13, 10)), np.zeros((14, 10)))


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_random_genotype_always_validates(seed):
    g = ss.random_genotype(np.random.Generator(np.random.PCG64(seed)))
    assert ss.Genotype.from_json_text(g.to_json_text()) == g
    for cell in (g.normal, g.reduce):
        for offset, node in enumerate(cell):
            preds = [p for p, _ in node]
            assert preds == sorted(preds)
            assert len(set(preds)) == 2
            assert all(p < offset + 2 for p in preds)
