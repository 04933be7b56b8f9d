import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwcoupling.rng import RngStream
from gwcoupling.treecore import (
    DTree,
    WindowedTree,
    compare_vertices,
    decode,
    enumerate_trees,
    vertex_key,
    window_dot,
)


def t(d, *verts):
    return DTree(d, verts)


def test_prefix_closure_enforced():
    with pytest.raises(ValueError):
        DTree(2, [(1, 1)])
    with pytest.raises(ValueError):
        DTree(2, [(), (3,)])
    DTree(2, [(), (1,), (1, 2)])


def test_subtree_at():
    tree = t(2, (), (1,), (1, 2))
    assert tree.subtree_at((1,)) == t(2, (), (2,))
    assert tree.subtree_at(()) == tree
    assert t(2, ()).subtree_at((2,)) == DTree.empty(2)
    assert tree.subtree_at((2,)) == DTree.empty(2)


def test_contains():
    assert t(2, (), (1,)).contains(t(2, ()))
    assert not t(2, (), (1,)).contains(t(2, (), (2,)))
    assert t(2, ()).contains(DTree.empty(2))
    assert DTree.empty(2).contains(DTree.empty(2))


def test_vertex_order_chains():
    chain2 = [(), (1,), (2,), (1, 1), (1, 2), (2, 1)]
    for a, b in zip(chain2, chain2[1:]):
        assert compare_vertices(a, b) == -1
    chain3 = [(), (1,), (2,), (3,), (1, 1), (1, 2)]
    assert sorted(chain3, key=vertex_key) == chain3


def test_truncate():
    tree = t(2, (), (1,), (1, 1))
    w = tree.truncate(1)
    assert w.vertices == frozenset({(), (1,)})
    assert w.alive == frozenset({(1,)})
    assert t(2, ()).truncate(3).alive == frozenset()
    assert DTree.empty(2).truncate(2) == WindowedTree.empty(2, 2)


def test_encode_examples():
    assert t(2, ()).encode() == bytes([0b00000000])
    assert t(2, (), (1,), (2,)).encode() == bytes([0b11000000])
    assert DTree.empty(2).encode() == b""
    assert decode(2, b"") == DTree.empty(2)
    assert decode(2, bytes([0b11000000])) == t(2, (), (1,), (2,))


def test_decode_rejects_garbage():
    with pytest.raises(ValueError):
        decode(2, bytes([0b11000001]))  # trailing set bit
    with pytest.raises(ValueError):
        decode(2, bytes([0b11]))  # children promised but masks missing... wrong pad
    decode(2, bytes([0b11000000]))


def random_tree(d, seed, grow_steps):
    rng = RngStream(seed)
    verts = {()}
    for _ in range(grow_steps):
        base = sorted(verts, key=vertex_key)[rng.randbelow(len(verts))]
        child = base + (1 + rng.randbelow(d),)
        verts.add(child)
    return DTree(d, verts)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 3), st.integers(0, 25))
def test_encode_roundtrip(seed, d, steps):
    tree = random_tree(d, seed, steps)
    assert decode(d, tree.encode()) == tree


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 3), st.integers(0, 20), st.integers(0, 3))
def test_truncate_invariants(seed, d, steps, depth):
    tree = random_tree(d, seed, steps)
    w = tree.truncate(depth)
    assert all(len(v) <= depth for v in w.vertices)
    assert all(len(v) == depth for v in w.alive)
    assert w.alive <= w.vertices


def test_enumeration_distinct_encodings():
    for d, kmax in [(2, 7), (3, 5)]:
        for k in range(kmax + 1):
            trees = enumerate_trees(d, k)
            encs = {tr.encode() for tr in trees}
            assert len(encs) == len(trees)


def test_window_key_roundtrip():
    w = WindowedTree(2, 1, [(), (1,), (2,)], [(1,)])
    from gwcoupling.treecore import window_from_json

    assert window_from_json(2, w.to_json()) == w


def test_subtree_nonempty_iff_member():
    tree = t(2, (), (1,), (2,), (2, 2))
    for v in [(), (1,), (2,), (2, 2), (1, 1), (2, 1)]:
        assert (len(tree.subtree_at(v)) > 0) == (v in tree)


def test_dot_output():
    w = WindowedTree(2, 1, [(), (1,)], [(1,)])
    dot = window_dot([(w, "black")])
    assert dot.count("->") == 1
    assert "doublecircle" in dot
