import numpy as np
import pytest
from hypothesis import given, settings

from qdilation import numerics as nm
from qdilation.dilate import (
    PreconditionError,
    QExtension,
    build_qbar,
    lemma_coisometry_S,
    min_coisometric_extension,
    min_unitary_dilation,
    schaffer_isometric,
    shift_space,
    unitary_extension_of_isometry,
    wandering_analysis,
)
from qdilation.graded import (
    BlockSpace,
    BlockVector,
    EnlargeWindowError,
    adjoint,
    apply,
    backward_shift_operator,
    compose,
    compress_power,
    identity_operator,
    shift_operator,
)
from qdilation.verify import check_isometry_class, window_basis

from conftest import contractions, random_contraction, random_unitary

L2 = shift_space(1)


def e(n, k=0, space=L2):
    return BlockVector.basis(space, (n,), k)


def powers_err(A, emb, T, depth):
    return max(np.linalg.norm(compress_power(A, emb, n) - np.linalg.matrix_power(T, n), 2) for n in range(depth + 1))


class TestSchaffer:
    def test_zero_gives_shift(self):
        V = schaffer_isometric([[0.0]])
        for n in range(1, 5):
            assert np.allclose(compress_power(V.operator, V.base_embedding, n), 0)
        x = V.base_embedding.embed([1.0])
        for n in range(4):
            x = apply(V.operator, x)
            assert x.support == {(n + 1,)}

    def test_scalar_half(self):
        V = schaffer_isometric([[0.5]])
        assert np.allclose(compress_power(V.operator, V.base_embedding, 3), [[0.125]])
        assert V.certificate.passed

    def test_isometry_input_has_no_tail(self, rng):
        U = random_unitary(rng, 3)
        V = schaffer_isometric(U)
        assert V.form.e == 0
        assert powers_err(V.operator, V.base_embedding, U, 5) <= 1e-12

    def test_rejects_expansion(self):
        with pytest.raises(nm.NotAContractionError):
            schaffer_isometric([[1.2]])

    @given(contractions(1, 5))
    @settings(max_examples=25, deadline=None)
    def test_identities_and_isometry(self, T):
        V = schaffer_isometric(T)
        assert powers_err(V.operator, V.base_embedding, T, 8) <= 1e-10
        rep = check_isometry_class(V.operator, "isometry", window_basis(V.operator.domain, 10), 1e-12)
        assert rep.passed, rep.text()


class TestCoisometric:
    def test_unitary_is_fixed(self, rng):
        U = random_unitary(rng, 2)
        W = min_coisometric_extension(U)
        assert powers_err(W.operator, W.base_embedding, U, 4) <= 1e-12

    def test_zero_gives_backward_shift(self):
        W = min_coisometric_extension([[0.0]])
        x = e(3, space=W.operator.domain)
        assert (apply(W.operator, x) - e(2, space=W.operator.domain)).norm() == 0

    def test_scalar_half(self):
        W = min_coisometric_extension([[0.5]])
        assert powers_err(W.operator, W.base_embedding, np.array([[0.5]]), 6) <= 1e-14
        assert W.certificate.passed

    def test_extension_property(self, rng):
        T = random_contraction(rng, 3)
        W = min_coisometric_extension(T)
        for j in range(3):
            h = np.eye(3)[:, j]
            y = apply(W.operator, W.base_embedding.embed(h))
            assert (y - W.base_embedding.embed(T @ h)).norm() <= 1e-14


class TestUnitary:
    def test_scalar_0_6(self):
        U = min_unitary_dilation([[0.6]])
        assert np.allclose(compress_power(U.operator, U.base_embedding, 2), [[0.36]])
        assert np.allclose(compress_power(adjoint(U.operator), U.base_embedding, 2), [[0.36]])

    def test_zero_gives_bilateral_shift(self):
        U = min_unitary_dilation([[0.0]])
        for n in range(1, 5):
            assert np.allclose(compress_power(U.operator, U.base_embedding, n), 0)
        sp = U.operator.domain
        assert (apply(U.operator, e(3, space=sp)) - e(4, space=sp)).norm() == 0
        assert (apply(U.operator, e(-3, space=sp)) - e(-2, space=sp)).norm() == 0

    def test_unitary_input(self, rng):
        Q = random_unitary(rng, 3)
        U = min_unitary_dilation(Q)
        assert U.operator.domain.leaf_dim((1,)) == 0
        assert powers_err(U.operator, U.base_embedding, Q, 4) <= 1e-12

    @given(contractions(1, 4))
    @settings(max_examples=20, deadline=None)
    def test_both_directions(self, T):
        U = min_unitary_dilation(T)
        assert powers_err(U.operator, U.base_embedding, T, 6) <= 1e-10
        assert powers_err(adjoint(U.operator), U.base_embedding, T.conj().T, 6) <= 1e-10
        rep = check_isometry_class(U.operator, "unitary", window_basis(U.operator.domain, 6), 1e-10)
        assert rep.passed, rep.text()


class TestUnitaryExtension:
    def test_unitary_is_unchanged(self, rng):
        Q = random_unitary(rng, 2)
        V = min_unitary_dilation(Q).operator
        ue = unitary_extension_of_isometry(V, 3)
        assert ue.info["cokernel_dim"] == 0
        assert ue.operator is V

    def test_shift_becomes_bilateral(self):
        ue = unitary_extension_of_isometry(shift_operator(L2), 2)
        U = ue.operator
        assert ue.info["cokernel_dim"] == 1
        rep = check_isometry_class(U, "unitary", window_basis(U.domain, 6), 1e-14)
        assert rep.passed
        # the chain feeds e_0: U (chain level 0) = e_0 of K
        x = BlockVector.basis(U.domain, (0, 0), 0)
        assert (apply(U, x) - BlockVector.basis(U.domain, (1, 0), 0)).norm() == 0

    def test_extends_schaffer(self):
        V = schaffer_isometric([[0.5]])
        ue = unitary_extension_of_isometry(V.operator, 3)
        U, inner = ue.operator, ue.base_embedding
        for x in window_basis(V.operator.domain, 5):
            assert (apply(U, inner.embed(x)) - inner.embed(apply(V.operator, x))).norm() <= 1e-12
        h = inner.embed(V.base_embedding.embed([1.0]))
        for n in range(1, 6):
            h = apply(U, h)
            # the depth-0 window of K is H itself
            assert inner.project(h) == pytest.approx([0.5**n])

    def test_leaky_cokernel_raises(self):
        # V = S^2 has cokernel spanned by e_0, e_1; a depth-0 window misses e_1
        S = shift_operator(L2)
        with pytest.raises(EnlargeWindowError):
            unitary_extension_of_isometry(compose(S, S), 0)


class TestQbar:
    def test_identity(self):
        V = schaffer_isometric(np.diag([0.5, 0.2]))
        Qb = build_qbar(QExtension(np.eye(2), 1.0, V.operator.domain))
        for x in window_basis(Qb.domain, 4):
            assert (apply(Qb, x) - x).norm() == 0

    def test_example_matrix_on_head(self):
        Q = np.diag([-1.0, 1.0])
        V = schaffer_isometric(np.array([[0, 0], [1, 1]]) / np.sqrt(2))
        Qb = build_qbar(QExtension(Q, 1.0, V.operator.domain))
        emb = V.base_embedding
        for j in range(2):
            h = np.eye(2)[:, j]
            assert np.allclose(emb.project(apply(Qb, emb.embed(h))), Q @ h)

    def test_unitary_and_reducing(self, rng):
        Q = random_unitary(rng, 2)
        V = schaffer_isometric(random_contraction(rng, 2))
        Qb = build_qbar(QExtension(Q, 1j, V.operator.domain))
        win = window_basis(Qb.domain, 5)
        assert check_isometry_class(Qb, "unitary", win, 1e-12).passed
        head = {(0,)}
        for x in win:
            y = apply(Qb, x)
            # H reduces Qbar: head vectors stay in the head, the rest stays out
            assert (y.support <= head) == (x.support <= head)


class TestWandering:
    def test_backward_shift(self):
        w = wandering_analysis(backward_shift_operator(L2), 10)
        assert len(w.wandering_basis) == 1
        v = w.wandering_basis[0]
        assert v.support == {(0,)} and abs(v.blocks[(0,)][0]) == pytest.approx(1.0)
        assert w.purity_certificate == 0

    def test_unitary_not_pure(self):
        sp = BlockSpace.nat(BlockSpace.leaf(1))
        w = wandering_analysis(identity_operator(sp), 5)
        assert w.wandering_basis == []
        assert w.purity_certificate == pytest.approx(1.0)

    def test_block_shift(self):
        sp = shift_space(2)
        w = wandering_analysis(backward_shift_operator(sp), 6)
        assert len(w.wandering_basis) == 2
        G = np.array([[a.inner(b) for b in w.wandering_basis] for a in w.wandering_basis])
        assert np.allclose(G, np.eye(2))


class TestLemma:
    L = backward_shift_operator(L2)
    R = shift_operator(L2)

    def test_q_identity_gives_shift(self):
        res = lemma_coisometry_S(self.L, identity_operator(L2), 20)
        for n in range(20):
            assert (apply(res.S0, e(n)) - e(n + 1)).norm() == 0
        assert res.report["TS=STQ*"].max_residual == 0
        assert res.report["TS=STQ (reported)"].max_residual == 0

    def test_q_shift_brute_force(self):
        res = lemma_coisometry_S(self.L, self.R, 30)
        # oracle: expand x = e_n = T*^n e_0, so S0 e_n = (R R)^(n+1) e_0 = e_(2n+2) (0-based)
        for n in range(30):
            x = e(0)
            for _ in range(2 * (n + 1)):
                x = apply(self.R, x)
            assert (apply(res.S0, e(n)) - x).norm() == 0
        # S e_(2n+2) = e_n, S kills e_0 and the odd 0-based slots
        for n in range(14):
            assert (apply(res.S, e(2 * n + 2)) - e(n)).norm() == 0
            assert apply(res.S, e(2 * n + 1)).norm() == 0
        assert apply(res.S, e(0)).norm() == 0

    def test_adjoint_forms(self):
        res = lemma_coisometry_S(self.L, self.R, 50)
        assert res.report["TS=STQ*"].max_residual <= 1e-12
        assert res.report["S0T*=QT*S0"].max_residual <= 1e-12
        assert res.report["TS=STQ (reported)"].max_residual >= 1
        # direct check on e_3 (1-based), i.e. index 2
        x = e(2)
        diff = apply(self.L, apply(res.S, x)) - apply(res.S, apply(self.L, apply(self.R, x)))
        assert diff.norm() >= 1

    def test_non_isometric_q_rejected(self):
        with pytest.raises(PreconditionError):
            lemma_coisometry_S(self.L, self.L, 10)

    def test_non_pure_rejected(self):
        with pytest.raises(PreconditionError):
            lemma_coisometry_S(identity_operator(L2), identity_operator(L2), 10)
