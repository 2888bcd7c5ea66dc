import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdilation.dilate import min_unitary_dilation, schaffer_isometric
from qdilation.graded import (
    Block,
    BlockSpace,
    BlockVector,
    EnlargeWindowError,
    GradedOperator,
    InputError,
    UnsupportedStructureError,
    adjoint,
    apply,
    backward_shift_operator,
    compose,
    compress_power,
    direct_sum,
    head_embedding,
    identity_operator,
    leaf_prefix_embedding,
    materialize,
    scalar_operator,
    shift_operator,
    window_operator,
    window_projection,
)

from conftest import contractions

L2 = BlockSpace.nat(BlockSpace.leaf(1))
L2Z = BlockSpace.integers(BlockSpace.leaf(2))


def e(space, n, k=0):
    return BlockVector.basis(space, (n,), k)


def test_space_window_order():
    sp = BlockSpace.nat(BlockSpace.leaf(2), {0: BlockSpace.leaf(3)})
    assert sp.window(2) == [(0,), (1,), (2,)]
    assert sp.leaf_dim((0,)) == 3 and sp.leaf_dim((5,)) == 2
    assert L2Z.window(2) == [(0,), (-1,), (1,), (-2,), (2,)]
    fin = BlockSpace.finite(BlockSpace.leaf(1), L2)
    assert fin.window(1) == [(0,), (1, 0), (1, 1)]


def test_vector_canonical_form():
    x = BlockVector(L2, {(0,): [1.0], (1,): [0.0], (2,): [1e-16]})
    assert x.support == {(0,)}
    with pytest.raises(InputError):
        BlockVector(L2, {(0,): [1.0, 2.0]})


def test_identity_and_shift_apply():
    x = e(L2, 3) * 2.0 + e(L2, 0)
    assert (apply(identity_operator(L2), x) - x).norm() == 0
    S = shift_operator(L2)
    assert (apply(S, e(L2, 4)) - e(L2, 5)).norm() == 0


def test_schaffer_apply_example():
    V = schaffer_isometric([[0.5]])
    y = apply(V.operator, V.base_embedding.embed([1.0]))
    assert y.support == {(0,), (1,)}
    assert y.blocks[(0,)][0] == pytest.approx(0.5)
    assert abs(y.blocks[(1,)][0]) == pytest.approx(np.sqrt(0.75))


def test_adjoint_examples():
    I = identity_operator(L2)
    x = e(L2, 2)
    assert (apply(adjoint(I), x) - x).norm() == 0
    B = backward_shift_operator(L2)
    assert (apply(adjoint(shift_operator(L2)), e(L2, 3)) - apply(B, e(L2, 3))).norm() == 0
    T = np.array([[0.3, 0.4j], [0.1, -0.2]])
    V = schaffer_isometric(T)
    emb = V.base_embedding
    for j in range(2):
        h = np.eye(2)[:, j]
        got = emb.project(apply(adjoint(V.operator), emb.embed(h)))
        assert np.allclose(got, T.conj().T @ h, atol=1e-14)


def test_adjoint_needs_row_rule():
    A = GradedOperator(L2, L2, lambda p: [(p, Block.identity(1))], None)
    with pytest.raises(UnsupportedStructureError):
        adjoint(A)


def test_compose_examples():
    S, B = shift_operator(L2), backward_shift_operator(L2)
    SB = compose(S, B)
    assert apply(SB, e(L2, 0)).norm() == 0
    for n in range(1, 6):
        assert (apply(SB, e(L2, n)) - e(L2, n)).norm() == 0
    A = schaffer_isometric([[0.5]]).operator
    AI = compose(A, identity_operator(A.domain))
    x = e(A.domain, 0)
    assert (apply(AI, x) - apply(A, x)).norm() == 0
    T = np.array([[0.2, 0.5], [0.0, 0.6]])
    V = schaffer_isometric(T)
    y = apply(compose(V.operator, V.operator), V.base_embedding.embed([1.0, 0.0]))
    assert np.allclose(y.blocks[(0,)], T @ T @ [1.0, 0.0])


def test_compose_space_mismatch():
    with pytest.raises(InputError):
        compose(shift_operator(L2), shift_operator(L2Z))


def test_compress_power_examples():
    V = schaffer_isometric([[0.5]])
    assert np.allclose(compress_power(V.operator, V.base_embedding, 0), [[1.0]])
    assert np.allclose(compress_power(V.operator, V.base_embedding, 3), [[0.125]])
    Z = schaffer_isometric([[0.0]])
    for n in range(1, 5):
        assert np.allclose(compress_power(Z.operator, Z.base_embedding, n), [[0.0]])


def test_materialize_examples():
    M, idx = materialize(identity_operator(L2), L2.window(4))
    assert np.array_equal(M, np.eye(5))
    M, _ = materialize(shift_operator(L2), L2.window(3))
    assert np.array_equal(M, np.eye(4, k=-1))
    V = schaffer_isometric([[0.6]])
    M, _ = materialize(V.operator, V.operator.domain.window(2))
    assert np.allclose(M, [[0.6, 0, 0], [0.8, 0, 0], [0, 1, 0]])


def test_direct_sum_examples():
    I = direct_sum(identity_operator(L2), identity_operator(L2))
    x = BlockVector.basis(I.domain, (1, 3), 0)
    assert (apply(I, x) - x).norm() == 0
    D = direct_sum(shift_operator(L2), backward_shift_operator(L2))
    y = apply(D, BlockVector.basis(D.domain, (0, 0), 0) + BlockVector.basis(D.domain, (1, 1), 0))
    want = BlockVector.basis(D.domain, (0, 1), 0) + BlockVector.basis(D.domain, (1, 0), 0)
    assert (y - want).norm() == 0
    V1 = schaffer_isometric([[0.5]]).operator
    V2 = schaffer_isometric(np.diag([0.3, 0.9])).operator
    Vs = direct_sum(V1, V2)
    M, _ = materialize(Vs, Vs.domain.window(6), Vs.domain.window(7))
    assert np.linalg.norm(M.conj().T @ M - np.eye(M.shape[1]), 2) <= 1e-14


def test_embeddings_are_isometric():
    big = BlockSpace.nat(BlockSpace.leaf(2), {0: BlockSpace.leaf(3)})
    emb = head_embedding(BlockSpace.leaf(3), big, (0,))
    for v in emb.basis():
        assert v.norm() == pytest.approx(1.0)
    h = np.array([1.0, 2j, -1.0])
    assert np.allclose(emb.project(emb.embed(h)), h)
    pe = leaf_prefix_embedding(2, big, (0,))
    assert np.allclose(pe.project(pe.embed([1.0, 1j])), [1.0, 1j])
    with pytest.raises(InputError):
        head_embedding(BlockSpace.leaf(2), big, (0,))


def test_window_operator_outside_window():
    A = window_operator(np.eye(3), L2, L2, L2.window(2), L2.window(2), "A")
    assert (apply(A, e(L2, 2)) - e(L2, 2)).norm() == 0
    with pytest.raises(EnlargeWindowError):
        apply(A, e(L2, 3))


def test_window_projection():
    P = window_projection(L2, L2.window(2))
    assert apply(P, e(L2, 3)).norm() == 0
    assert (apply(P, e(L2, 1)) - e(L2, 1)).norm() == 0


# ---------------------------------------------------------------------------
# properties


def _operators():
    T = np.array([[0.3, 0.5j], [0.2, -0.4]])
    V = schaffer_isometric(T).operator
    U = min_unitary_dilation(T).operator
    return [
        shift_operator(L2),
        backward_shift_operator(L2),
        shift_operator(L2Z),
        scalar_operator(L2, 0.3 - 0.2j),
        V,
        adjoint(V),
        compose(V, V),
        U,
        compose(adjoint(U), U),
        direct_sum(V, shift_operator(L2)),
    ]


OPS = _operators()


@st.composite
def finite_vectors(draw, space, depth=6):
    win = space.window(depth)
    paths = draw(st.lists(st.sampled_from(win), min_size=1, max_size=5, unique=True))
    blocks = {}
    for p in paths:
        n = space.leaf_dim(p)
        re = draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n))
        im = draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n))
        blocks[p] = np.array(re) + 1j * np.array(im)
    return BlockVector(space, blocks)


@given(st.data())
@settings(max_examples=120, deadline=None)
def test_adjoint_consistency(data):
    A = data.draw(st.sampled_from(OPS))
    x = data.draw(finite_vectors(A.domain))
    y = data.draw(finite_vectors(A.codomain))
    lhs = apply(A, x).inner(y)
    rhs = x.inner(apply(adjoint(A), y))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, x.norm() * y.norm())


@given(st.data())
@settings(max_examples=80, deadline=None)
def test_apply_support_exact(data):
    A = data.draw(st.sampled_from(OPS))
    x = data.draw(finite_vectors(A.domain))
    allowed = set().union(*[A.column_support(p) for p in x.support])
    assert apply(A, x).support <= allowed


@given(st.sampled_from(OPS), st.integers(1, 4), st.integers(0, 3))
@settings(max_examples=40, deadline=None)
def test_materialize_nested_windows(A, d1, extra):
    # every operator in OPS is an endomorphism, so one index map serves both sides
    M1, idx1 = materialize(A, A.domain.window(d1))
    M2, idx2 = materialize(A, A.domain.window(d1 + extra))
    sel = np.concatenate([np.arange(idx2[p][0], idx2[p][0] + idx2[p][1]) for p in idx1])
    assert np.array_equal(M2[np.ix_(sel, sel)], M1)
    if A.domain.kind != "finite":
        n = M1.shape[0]
        assert np.array_equal(M2[:n, :n], M1)


@given(contractions(1, 5))
@settings(max_examples=30, deadline=None)
def test_schaffer_compressions(T):
    V = schaffer_isometric(T)
    for n in range(11):
        err = np.linalg.norm(compress_power(V.operator, V.base_embedding, n) - np.linalg.matrix_power(T, n), 2)
        assert err <= 1e-10
