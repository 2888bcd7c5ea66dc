import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdilation.cli import shift_pair
from qdilation.dilate import min_unitary_dilation, schaffer_isometric
from qdilation.graded import (
    BlockSpace,
    dense_operator,
    head_embedding,
    identity_operator,
    shift_operator,
)
from qdilation.lift import _tilde_target
from qdilation.verify import (
    ResidualReport,
    check_dilation_identities,
    check_isometry_class,
    check_q_commutation,
    check_structure,
    find_q_witness,
    window_basis,
)

from conftest import EX22_T1, EX22_T2, complex_matrices, lstsq_oracle, random_contraction

EX24_T1 = np.array([[0, 1], [0, 0]], dtype=complex)
EX24_T2 = np.array([[0, 0], [2, 0]], dtype=complex)


def test_report_basics():
    rep = ResidualReport()
    rep.add("a", -1e-3, "w", 1e-2)
    rep.add("b", 0.5, "w", 0.1)
    assert rep["a"].max_residual == pytest.approx(1e-3)
    assert rep["a"].passed and not rep["b"].passed
    assert not rep.passed
    d = rep.to_dict()
    assert d["pass"] is False and d["checks"][1]["max-residual"] == 0.5
    assert "[FAIL] b" in rep.text()


class TestWitness:
    def test_example_22(self):
        for slot in ("right", "middle"):
            w = find_q_witness(EX22_T1, EX22_T2, slot)
            assert w.feasible and w.residual <= 1e-10
        w = find_q_witness(EX22_T1, EX22_T2, "left")
        assert not w.feasible and w.residual > 0.1
        # columns of Q T1 T2 are -Q e2 and Q e2 while both target columns are e2
        assert w.residual == pytest.approx(np.sqrt(2), abs=1e-12)
        assert w.residual == pytest.approx(lstsq_oracle(EX22_T1, EX22_T2, "left"), abs=1e-12)

    def test_example_22_paper_matrices_solve(self):
        Q = np.diag([-1.0, 1.0])
        Qp = np.diag([0.0, 1.0])
        assert np.abs(EX22_T2 @ EX22_T1 - EX22_T1 @ EX22_T2 @ Q).max() == 0
        assert np.abs(EX22_T2 @ EX22_T1 - EX22_T1 @ Qp @ EX22_T2).max() == 0

    def test_example_24(self):
        for slot in ("left", "middle", "right"):
            w = find_q_witness(EX24_T1, EX24_T2, slot)
            assert not w.feasible
            # the second row of T2 T1 is (0, 2); every slot leaves it out of reach
            assert w.residual == pytest.approx(2.0, abs=1e-12)
            assert w.residual == pytest.approx(lstsq_oracle(EX24_T1, EX24_T2, slot), abs=1e-12)

    def test_bad_slot(self):
        with pytest.raises(ValueError):
            find_q_witness(EX22_T1, EX22_T2, "top")

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_matches_oracle(self, data):
        T1 = data.draw(complex_matrices(2, 3))
        n = T1.shape[0]
        T2 = data.draw(complex_matrices(n, n))
        slot = data.draw(st.sampled_from(["left", "middle", "right"]))
        w = find_q_witness(T1, T2, slot)
        assert w.residual == pytest.approx(lstsq_oracle(T1, T2, slot), abs=1e-8)

    @given(st.sampled_from([(EX22_T1, EX22_T2), (EX24_T1, EX24_T2)]),
           st.sampled_from(["left", "middle", "right"]),
           st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False))
    @settings(max_examples=40, deadline=None)
    def test_scaling_invariance(self, pair, slot, s, t):
        T1, T2 = pair
        w = find_q_witness(T1, T2, slot)
        ws = find_q_witness(s * T1, t * T2, slot)
        assert w.feasible == ws.feasible
        if w.feasible:
            f = {"left": lambda Q: Q @ T1 @ T2, "middle": lambda Q: T1 @ Q @ T2, "right": lambda Q: T1 @ T2 @ Q}[slot]
            assert np.linalg.norm(s * t * (T2 @ T1 - f(w.Q))) <= 1e-8 * max(1, abs(s * t))


class TestQCommutation:
    def test_commuting_shifts(self):
        sp = BlockSpace.nat(BlockSpace.leaf(1))
        S = shift_operator(sp)
        rep = check_q_commutation(S, S, identity_operator(sp), "QAB", window_basis(sp, 10), 0.0)
        assert rep.passed

    def test_example_23(self):
        ops = shift_pair()
        win = window_basis(ops["space"], 50)
        L, R = ops["L"], ops["R"]
        assert len(win) >= 50
        assert check_q_commutation(L, R, ops["Q"], "QAB", win, 0.0).passed
        assert check_q_commutation(L, R, ops["Qp"], "AQB", win, 0.0).passed
        assert check_q_commutation(L, R, ops["Q"], "ABQ", win, 0.0).passed
        # R L - q L R is |q| on e_0 and |1 - q| on e_1, so no scalar q works
        for q in (0.0, 1.0, -1.0, 1j, 0.5):
            diff = [(R.apply(L.apply(x)) - L.apply(R.apply(x)) * q).norm() for x in win[:2]]
            assert max(diff) > 0.4

    def test_example_22_left_form_fails(self):
        w = find_q_witness(EX22_T1, EX22_T2, "left")
        A, B, Qb = dense_operator(EX22_T1), dense_operator(EX22_T2), dense_operator(w.Q)
        win = window_basis(A.domain, 0)
        rep = check_q_commutation(A, B, Qb, "QAB", win, 1e-8)
        assert not rep.passed and rep.checks[0].max_residual > 0.5


class TestStructure:
    def test_identity_lifting(self):
        sp = BlockSpace.nat(BlockSpace.leaf(1), {0: BlockSpace.leaf(2)})
        emb = head_embedding(BlockSpace.leaf(2), sp, (0,))
        assert check_structure(identity_operator(sp), emb, emb, np.eye(2), "lifting", window_basis(sp, 3)).passed

    def test_schaffer_is_lifting_not_extension(self):
        T = np.array([[0.5, 0.1], [0.0, 0.3]])
        V = schaffer_isometric(T)
        win = window_basis(V.operator.domain, 5)
        rep = check_structure(V.operator, V.base_embedding, V.base_embedding, T, "lifting", win, 1e-12)
        assert rep.passed
        assert rep.checks[1].max_residual == 0
        ext = check_structure(V.operator, V.base_embedding, V.base_embedding, T, "extension", win, 1e-8)
        assert not ext.passed


class TestIsometryClass:
    def test_bilateral_shift(self):
        sp = BlockSpace.integers(BlockSpace.leaf(1))
        rep = check_isometry_class(shift_operator(sp), "unitary", window_basis(sp, 5), 0.0)
        assert rep.passed

    def test_unilateral_shift(self):
        sp = BlockSpace.nat(BlockSpace.leaf(1))
        S = shift_operator(sp)
        assert check_isometry_class(S, "isometry", window_basis(sp, 5), 0.0).passed
        rep = check_isometry_class(S, "co-isometry", window_basis(sp, 5), 1e-8)
        assert not rep.passed and rep.checks[0].max_residual == pytest.approx(1.0)

    def test_tilde_lifting_is_isometric(self, rng):
        T = random_contraction(rng, 2)
        V = schaffer_isometric(T)
        Q = 0.6 * random_contraction(rng, 2)
        form, k0 = _tilde_target(V.form, Q, 1j, "i", 1e-8)
        assert k0 > 0
        Vt = form.operator()
        assert check_isometry_class(Vt, "isometry", window_basis(Vt.domain, 6), 1e-12).passed

    def test_unknown_class(self):
        sp = BlockSpace.nat(BlockSpace.leaf(1))
        with pytest.raises(ValueError):
            check_isometry_class(shift_operator(sp), "normal", window_basis(sp, 1))


class TestDilationIdentities:
    def test_trivial_depth(self):
        T = np.array([[0.5]])
        V = schaffer_isometric(T)
        rep = check_dilation_identities(T, T, V.operator, V.operator, V.base_embedding, 0)
        assert all(c.max_residual == 0 for c in rep.checks)

    def test_single_operator_reduction(self):
        T = np.array([[0.2, 0.7], [0.0, -0.4]])
        V = schaffer_isometric(T)
        I = identity_operator(V.operator.domain)
        rep = check_dilation_identities(T, np.eye(2), V.operator, I, V.base_embedding, 6, 1e-12)
        assert rep.passed

    def test_unitary_dilation_both_families(self):
        T = np.array([[0.6]])
        U = min_unitary_dilation(T)
        rep = check_dilation_identities(T, T, U.operator, U.operator, U.base_embedding, 5, 1e-12)
        assert rep.passed
