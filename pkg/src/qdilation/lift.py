"""Lifting engines for intertwiners and Q-commutants.

The core is a level-by-level construction of a lower-triangular operator
``Y`` with ``Y V1 = V2 Y``, where both V's are isometries in generalized
Schäffer form ``V(h; e1, e2, ...) = (A h; G h, C e1, ...)``.  On the
image of the previous window the new column block is forced by the
intertwining relation; on the cokernel of ``V1`` (which sits in levels 0
and 1) it is filled by a central contractive completion, so the norm never
exceeds ``|X|``.  The Q-variants reduce to this engine by changing the
target (or source) isometry, and the extension results follow by taking
adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .dilate import (
    DilationResult,
    PreconditionError,
    QExtension,
    SchafferForm,
    build_qbar,
    min_coisometric_extension,
    qbar_head_block,
    schaffer_isometric,
    unitary_extension_of_isometry,
)
from .graded import (
    Block,
    BlockSpace,
    BlockVector,
    EnlargeWindowError,
    GradedOperator,
    adjoint,
    apply,
    compose,
    head_embedding,
    materialize,
    window_operator,
    window_projection,
)
from .verify import (
    ResidualReport,
    check_dilation_identities,
    check_isometry_class,
    check_q_commutation,
    check_structure,
    window_basis,
)

__all__ = [
    "WindowedLifting",
    "LiftReduction",
    "lift_engine",
    "margin_depth",
    "UnitaryQCommutant",
    "unitary_q_commutant",
    "intertwine_lift",
    "q_intertwine_lift",
    "q_commutant_lift",
    "q_commutant_extend",
]


def margin_depth(depth: int, bandwidth: int = 1, stages: int = 1) -> int:
    """Internal window depth needed to certify identities up to ``depth``."""
    return depth + bandwidth * stages + 2


# ----------------------------------------------------------------------------
# engine


def lift_engine(X, src: SchafferForm, tgt: SchafferForm, depth: int, tol: float = nm.TOL) -> np.ndarray:
    """Matrix of the central lifting on levels ``0..depth`` of both spaces.

    Requires ``X src.A = tgt.A X``.  The result is block lower triangular
    and ``Y[:d2, :d1] = X``.
    """
    X = nm.as_matrix(X)
    d1, e1, d2, e2 = src.d, src.e, tgt.d, tgt.e
    if X.shape != (d2, d1):
        raise nm.InputError(f"X has shape {X.shape}, expected {(d2, d1)}")
    rel = nm.opnorm(X @ src.A - tgt.A @ X) if X.size else 0.0
    if rel > tol:
        raise PreconditionError(f"X does not intertwine the base operators (residual {rel:.3e})", rel)
    L01 = src.cokernel()  # (d1 + e1) x e1, orthonormal
    Y = X.copy()
    for n in range(depth):
        V1 = src.window_matrix(n)
        V2 = tgt.window_matrix(n)
        full = V2 @ Y
        rows = d2 + n * e2
        A, Cc = full[:rows], full[rows:]
        dim_next = d1 + (n + 1) * e1
        L = np.zeros((dim_next, L01.shape[1]), dtype=complex)
        L[: L01.shape[0]] = L01
        Yext = np.hstack([Y, np.zeros((rows, e1), dtype=complex)])
        B = Yext @ L
        Z = nm.dkw_complete(A, B, Cc, tol).completion
        M = np.block([[A, B], [Cc, Z]])
        basis = np.hstack([V1, L])
        Y = M @ basis.conj().T
    return Y


def _rescale_if_needed(M: np.ndarray, bound: float, tol: float) -> np.ndarray:
    nrm = nm.opnorm(M) if M.size else 0.0
    if bound > 0 and nrm > bound:
        if nrm > bound * (1 + tol) + tol:
            raise PreconditionError(f"window norm {nrm:.12g} exceeds bound {bound:.12g}", nrm - bound)
        return M * (bound / nrm)
    return M


# ----------------------------------------------------------------------------
# results


@dataclass(eq=False)
class WindowedLifting:
    """A lifting known on the depth window of source and target spaces."""

    Y_window: np.ndarray
    source_space: BlockSpace
    target_space: BlockSpace
    source_window: list
    target_window: list
    norm_bound: float
    residual_profile: dict
    valid_depth: int
    report: ResidualReport = field(default_factory=ResidualReport)
    extension: bool = False

    @property
    def operator(self) -> GradedOperator:
        return window_operator(self.Y_window, self.source_space, self.target_space, self.source_window, self.target_window, "Y")

    def apply(self, x):
        return apply(self.operator, x)


@dataclass(eq=False)
class LiftReduction:
    """Data of the reduction to the classical engine.

    ``V_tilde`` is the isometric lifting used as target (or source) and
    ``extracted_corner`` names how Y is read off the engine output.
    """

    T_hat: np.ndarray
    X_hat: np.ndarray
    V_tilde: SchafferForm
    source: SchafferForm
    extracted_corner: str


def _schaffer_form_of(V: DilationResult) -> SchafferForm:
    if V.form is None:
        raise nm.InputError("dilation is not in Schäffer normal form")
    return V.form


def _embedded_projection(form_big: SchafferForm, e_small: int, depth: int) -> np.ndarray:
    """Rows of the window of ``H (+) (E (+) E0)^n`` that belong to ``H (+) E^n``."""
    d, e = form_big.d, form_big.e
    idx = list(range(d))
    for j in range(depth):
        base = d + j * e
        idx.extend(range(base, base + e_small))
    return np.array(idx, dtype=int)


# ----------------------------------------------------------------------------
# public lifting operations


def intertwine_lift(T1, T2, X, V1: DilationResult, V2: DilationResult, window: int, tol: float = nm.TOL) -> WindowedLifting:
    """Central lifting Y of X with ``Y V1 = V2 Y`` (classical intertwining lifting)."""
    T1, T2, X = nm.as_matrix(T1), nm.as_matrix(T2), nm.as_matrix(X)
    if window < 2:
        raise EnlargeWindowError("window must be at least 2")
    res = nm.opnorm(X @ T1 - T2 @ X)
    if res > tol:
        raise PreconditionError(f"X T1 != T2 X (residual {res:.3e})", res)
    f1, f2 = _schaffer_form_of(V1), _schaffer_form_of(V2)
    N = margin_depth(window)
    Y = lift_engine(X, f1, f2, N, tol)
    Y = _rescale_if_needed(Y, nm.opnorm(X), tol)
    K2 = f2.space()
    ident = build_qbar(QExtension(np.eye(f2.d), 1.0, K2))
    return _certify(Y, X, T1, T2, V1, V2, ident, "QAB", N, window, tol)


def _relation_residual(Yop, V1op, V2op, Qbar, form: str, vecs: list, P) -> float:
    worst = 0.0
    for x in vecs:
        lhs = apply(Yop, apply(V1op, x))
        if form == "weak":
            # V2 Y = Y V1 Qbar*, with Qbar passed already adjointed
            lhs = apply(V2op, apply(Yop, x))
            rhs = apply(Yop, apply(V1op, apply(Qbar, x)))
        elif form == "QAB":
            rhs = apply(Qbar, apply(V2op, apply(Yop, x)))
        elif form == "AQB":
            rhs = apply(V2op, apply(Qbar, apply(Yop, x)))
        else:
            rhs = apply(V2op, apply(Yop, apply(Qbar, x)))
        diff = lhs - rhs
        worst = max(worst, (apply(P, diff) if P is not None else diff).norm())
    return worst


def _certify(Y, X, T1, T2, V1: DilationResult, V2: DilationResult, Qbar, form, N, depth, tol) -> WindowedLifting:
    K1, K2 = V1.operator.domain, V2.operator.domain
    lift = WindowedLifting(Y, K1, K2, K1.window(N), K2.window(N), 0.0, {}, depth)
    Yop = lift.operator
    rep = ResidualReport()
    d2, d1 = X.shape
    rep.add("corner", np.abs(Y[:d2, :d1] - X).max() if X.size else 0.0, "H1 -> H2 block", 1e-12)
    blk = Y[:d2, d1:]
    rep.add("triangularity", np.abs(blk).max() if blk.size else 0.0, f"H1-perp window depth {N} into H2", 1e-12)
    nx = nm.opnorm(X) if X.size else 0.0
    ny = nm.opnorm(Y) if Y.size else 0.0
    rep.add("norm-bound", max(0.0, ny - nx), f"|Y_window|={ny:.15g}, |X|={nx:.15g}", tol)
    # both operators are causal, so compressing to depth N is exact for depth N-1 inputs
    P = window_projection(K2, K2.window(N))
    vecs = window_basis(K1, N - 1)
    worst = _relation_residual(Yop, V1.operator, V2.operator, Qbar, form, vecs, P)
    name = "relation-weak" if form == "weak" else f"relation-{form}"
    rep.add(name, worst, f"{len(vecs)} basis vectors of depth {N - 1}, compressed to depth {N}", tol)
    if K1 == K2 and d1 == d2 and np.allclose(T1, T2):
        rep.extend(check_dilation_identities(T1, X, V1.operator, Yop, V1.base_embedding, depth, 1e-7))
    else:
        rep.extend(_intertwine_compressions(T1, T2, X, V1, V2, Yop, depth))
    lift.norm_bound = ny
    lift.report = rep
    lift.residual_profile = {c.name: c.max_residual for c in rep.checks}
    return lift


def _intertwine_compressions(T1, T2, X, V1, V2, Yop, depth: int) -> ResidualReport:
    """``P_H2 V2^n Y|_H1 = T2^n X`` and ``P_H2 Y V1^n|_H1 = X T1^n``."""
    rep = ResidualReport()
    e1, e2 = V1.base_embedding, V2.base_embedding
    d1 = X.shape[1]
    worst_l = worst_r = 0.0
    for j in range(d1):
        h = np.eye(d1)[:, j]
        a = apply(Yop, e1.embed(h))
        b = e1.embed(h)
        for n in range(depth + 1):
            Tn2, Tn1 = np.linalg.matrix_power(T2, n), np.linalg.matrix_power(T1, n)
            worst_l = max(worst_l, np.linalg.norm(e2.project(a) - Tn2 @ X @ h))
            worst_r = max(worst_r, np.linalg.norm(e2.project(apply(Yop, b)) - X @ Tn1 @ h))
            a = apply(V2.operator, a)
            b = apply(V1.operator, b)
    rep.add("compressions-V2^nY", worst_l, f"n<={depth}", 1e-7)
    rep.add("compressions-YV1^n", worst_r, f"n<={depth}", 1e-7)
    return rep


def _tilde_target(form2: SchafferForm, Q: np.ndarray, q: complex, variant: str, tol: float) -> tuple:
    """Isometric lifting Ṽ of ``Qbar V`` (variant i) or ``V Qbar`` (variant ii).

    Ṽ has head ``QT`` (resp. ``TQ``), defect rows ``(q G, D_Q T)``
    (resp. ``(G Q, D_Q)``) and level map ``diag(q C, I)``.  The first
    ``e`` coordinates of every level reproduce the original dilation space,
    and their compression is exactly ``Qbar V`` (resp. ``V Qbar``).
    """
    T, G, C = form2.A, form2.G, form2.C
    DQ = nm.defect_rows(Q, tol=tol)
    k0 = DQ.shape[0]
    if variant == "i":
        A = Q @ T
        Gt = np.vstack([q * G, DQ @ T])
    else:
        A = T @ Q
        Gt = np.vstack([G @ Q, DQ])
    e = G.shape[0]
    Ct = np.zeros((e + k0, e + k0), dtype=complex)
    Ct[:e, :e] = q * C
    Ct[e:, e:] = np.eye(k0)
    return SchafferForm(A, Gt, Ct), k0


def _check_unit(q) -> complex:
    q = complex(q)
    if abs(abs(q) - 1) > 1e-12:
        raise PreconditionError(f"|q| = {abs(q):.15g} is not 1", abs(abs(q) - 1))
    return q


def q_intertwine_lift(
    T1,
    T2,
    X,
    Q,
    V1: DilationResult,
    V2: DilationResult,
    q,
    variant: str,
    window: int,
    tol: float = nm.TOL,
    accept_weak_relation: bool = False,
):
    """Lifting Y of X with ``Y V1 = Qbar V2 Y`` (i), ``V2 Qbar Y`` (ii) or ``V2 Y Qbar`` (iii).

    Preconditions: ``X T1 = Q T2 X`` (i), ``X T1 = T2 Q X`` (ii), or
    ``X T1 = T2 X Q`` with Q unitary on H1 (iii).  Returns the windowed
    lifting and the QExtension describing ``Qbar = Q (+) qI``.
    """
    T1, T2, X, Q = (nm.as_matrix(a) for a in (T1, T2, X, Q))
    q = _check_unit(q)
    if window < 2:
        raise EnlargeWindowError("window must be at least 2")
    f1, f2 = _schaffer_form_of(V1), _schaffer_form_of(V2)
    N = margin_depth(window)
    if variant in ("i", "ii"):
        if nm.opnorm(Q) > 1 + tol:
            raise PreconditionError("Q must be a contraction", nm.opnorm(Q) - 1)
        res = nm.opnorm(X @ T1 - (Q @ T2 @ X if variant == "i" else T2 @ Q @ X))
        if res > tol:
            raise PreconditionError(f"variant ({variant}) relation fails on H (residual {res:.3e})", res)
        tgt, k0 = _tilde_target(f2, Q, q, variant, tol)
        Yt = lift_engine(X, f1, tgt, N, tol)
        keep = _embedded_projection(tgt, f2.e, N)
        Y = Yt[keep]
        qe = QExtension(Q, q, f2.space())
        form = "QAB" if variant == "i" else "AQB"
    elif variant == "iii":
        res = nm.opnorm(X @ T1 - T2 @ X @ Q)
        if res > tol:
            raise PreconditionError(f"variant (iii) relation fails on H (residual {res:.3e})", res)
        if not nm.classify(Q, tol).unitary:
            if not accept_weak_relation:
                raise PreconditionError("variant (iii) needs a unitary Q", nm.opnorm(Q @ Q.conj().T - np.eye(Q.shape[0])))
            return _weak_variant_iii(T1, T2, X, Q, V1, V2, q, window, tol)
        Qs = Q.conj().T
        src = SchafferForm(f1.A @ Qs, f1.G @ Qs, np.conj(q) * f1.C)
        Y = lift_engine(X, src, f2, N, tol)
        qe = QExtension(Q, q, f1.space())
        form = "ABQ"
    else:
        raise nm.InputError(f"unknown variant {variant!r}")
    Y = _rescale_if_needed(Y, nm.opnorm(X), tol)
    return _certify(Y, X, T1, T2, V1, V2, build_qbar(qe), form, N, window, tol), qe


def _weak_variant_iii(T1, T2, X, Q, V1, V2, q, window, tol):
    """For co-isometric Q only ``V2 Y = Y V1 Qbar*`` is available; certify that."""
    f1, f2 = V1.form, V2.form
    N = margin_depth(window)
    # X (T1 Q*) = T2 X still holds when Q Q* = I; lift along V1 Qbar*, which is a contraction
    Qs = Q.conj().T
    res = nm.opnorm(X @ T1 @ Qs - T2 @ X)
    if res > tol:
        raise PreconditionError(f"X T1 Q* != T2 X (residual {res:.3e})", res)
    DQs = nm.defect_rows(Qs, tol=tol)
    k0 = DQs.shape[0]
    # isometric lifting of V1 Qbar*: add the defect of Qbar* as extra coordinates
    Gs = np.vstack([f1.G @ Qs, DQs])
    e = f1.e
    Cs = np.zeros((e + k0, e + k0), dtype=complex)
    Cs[:e, :e] = np.conj(q) * f1.C
    Cs[e:, e:] = np.eye(k0)
    src = SchafferForm(f1.A @ Qs, Gs, Cs)
    Ybig = lift_engine(X, src, f2, N, tol)
    keep = _embedded_projection(src, e, N)
    Y = Ybig[:, keep]
    Y = _rescale_if_needed(Y, nm.opnorm(X), tol)
    qe = QExtension(Q, q, f1.space())
    qbar_s = adjoint(build_qbar(qe))
    return _certify(Y, X, T1, T2, V1, V2, qbar_s, "weak", N, window, tol), qe


def q_commutant_lift(T, X, Q, V: DilationResult, q, variant: str, window: int, tol: float = nm.TOL, accept_weak_relation: bool = False):
    """Q-commutant lifting: the intertwining version with ``T1 = T2 = T``."""
    return q_intertwine_lift(T, T, X, Q, V, V, q, variant, window, tol, accept_weak_relation)


# ----------------------------------------------------------------------------
# extensions via adjoints


def q_commutant_extend(T, X, Q, W: DilationResult, q, variant: str, window: int, tol: float = nm.TOL):
    """Extension Y of X along the co-isometric extension W of T.

    Variants: (i) ``X T Q = T X`` gives ``W Y = Y W Qbar``; (ii)
    ``X Q T = T X`` gives ``W Y = Y Qbar W``; (iii) ``Q X T = T X`` (Q
    unitary) gives ``W Y = Qbar Y W``.  Built as the adjoint of a lifting
    of ``X*`` along ``W* = V``, the Schäffer dilation of ``T*``.
    """
    T, X, Q = nm.as_matrix(T), nm.as_matrix(X), nm.as_matrix(Q)
    q = _check_unit(q)
    if W.form is None or W.kind != "co-isometric-extension":
        raise nm.InputError("W must come from min_coisometric_extension")
    res = {
        "i": nm.opnorm(X @ T @ Q - T @ X),
        "ii": nm.opnorm(X @ Q @ T - T @ X),
        "iii": nm.opnorm(Q @ X @ T - T @ X),
    }.get(variant)
    if res is None:
        raise nm.InputError(f"unknown variant {variant!r}")
    if res > tol:
        raise PreconditionError(f"variant ({variant}) extension relation fails on H (residual {res:.3e})", res)
    Vdil = DilationResult(adjoint(W.operator), W.base_embedding, "isometric-lifting", W.certificate, W.form)
    Ts, Xs, Qs = T.conj().T, X.conj().T, Q.conj().T
    lift, qe_s = q_commutant_lift(Ts, Xs, Qs, Vdil, np.conj(q), variant, window, tol)
    Y = lift.Y_window.conj().T
    K = lift.source_space
    N = margin_depth(window)
    ext = WindowedLifting(Y, K, K, lift.target_window, lift.source_window, lift.norm_bound, {}, window, extension=True)
    qe = QExtension(Q, q, K)
    qbar = build_qbar(qe)
    Yop = ext.operator
    Wop = W.operator
    rep = ResidualReport()
    d = X.shape[0]
    rep.add("restriction", np.abs(Y[:d, :d] - X).max(), "H block", 1e-12)
    rep.add("triangularity", np.abs(Y[d:, :d]).max() if Y[d:, :d].size else 0.0, f"H into H-perp, depth {N}", 1e-12)
    rep.add("norm-bound", max(0.0, ext.norm_bound - nm.opnorm(X)), f"|Y_window|={ext.norm_bound:.15g}", tol)
    worst = 0.0
    vecs = window_basis(K, N - 1)
    for x in vecs:
        lhs = apply(Wop, apply(Yop, x))
        if variant == "i":
            rhs = apply(Yop, apply(Wop, apply(qbar, x)))
        elif variant == "ii":
            rhs = apply(Yop, apply(qbar, apply(Wop, x)))
        else:
            rhs = apply(qbar, apply(Yop, apply(Wop, x)))
        worst = max(worst, (lhs - rhs).norm())
    rep.add(f"relation-ext-{variant}", worst, f"{len(vecs)} basis vectors of depth {N - 1}", tol)
    # W and Y both map each window into itself, so these are exact
    rep.extend(check_dilation_identities(T, X, Wop, Yop, W.base_embedding, window, 1e-7))
    ext.report = rep
    ext.residual_profile = {c.name: c.max_residual for c in rep.checks}
    return ext, qe




# ----------------------------------------------------------------------------
# unitary dilation version


@dataclass(eq=False)
class UnitaryQCommutant:
    """Output of unitary_q_commutant.

    ``lifting`` holds ``Y`` compressed to a window of the big space; the
    window is a band of grades ``[-chain_depth, top]`` where chain level j
    has grade ``-(j + 1)`` and level k of the co-isometric extension space
    has grade k.  Both Y and U never raise the grade, so words in them are
    exact on the band.
    """

    lifting: WindowedLifting
    qext: QExtension
    unitary: DilationResult
    Y_operator: GradedOperator
    U_operator: GradedOperator
    qbar: GradedOperator
    base_embedding: object
    report: ResidualReport
    stagelog: list


def unitary_q_commutant(T, X, Q, q, relation: str, window: int, tol: float = nm.TOL) -> UnitaryQCommutant:
    """Dilation Y of X that Q-commutes with a unitary dilation U of T.

    ``relation="XT=QTX"`` gives ``Y U = Qbar U Y``; ``"XT=TXQ"`` gives
    ``Y U = U Y Qbar``.  Stage 1 extends X along the minimal co-isometric
    extension W of T.  Stage 2 takes the unitary U' extending the
    isometry ``V = W*`` and extends ``Y0*`` to the chain part of U' by
    the forced formula ``Y' e_j = (s U'*)^(j+1) Y0* w`` (scalar case) or
    ``(U'* Qbar*)^(j+1) Y0* w``; then ``U = U'*`` and ``Y = Y'*``.
    """
    T, X, Q = nm.as_matrix(T), nm.as_matrix(X), nm.as_matrix(Q)
    q = _check_unit(q)
    d = T.shape[0]
    if not nm.classify(Q, tol).unitary:
        raise PreconditionError("Q must be unitary", nm.opnorm(Q @ Q.conj().T - np.eye(Q.shape[0])))
    if relation == "XT=QTX":
        res = nm.opnorm(X @ T - Q @ T @ X)
        ext_variant, form = "iii", "QAB"
    elif relation == "XT=TXQ":
        res = nm.opnorm(X @ T - T @ X @ Q)
        ext_variant, form = "i", "ABQ"
    else:
        raise nm.InputError(f"unknown relation {relation!r}")
    if res > tol:
        raise PreconditionError(f"{relation} fails (residual {res:.3e})", res)
    if window < 1:
        raise EnlargeWindowError("window must be at least 1")
    chain_depth, top = window + 2, window + 1
    w1 = chain_depth + top - 2
    N0 = margin_depth(w1)
    stagelog = []

    # stage 1: Y0 with W Y0 = Qbar0* Y0 W (resp. W Y0 = Y0 W Qbar0*)
    Wd = min_coisometric_extension(T)
    stagelog.append(("coisometric-extension", Wd.certificate))
    ext, _ = q_commutant_extend(T, X, Q.conj().T, Wd, np.conj(q), ext_variant, w1, tol)
    stagelog.append(("extension-Y0", ext.report))
    if not ext.report.passed:
        raise PreconditionError("stage 1 extension failed its certificate", max(c.max_residual for c in ext.report.checks))
    Y0s = ext.Y_window.conj().T  # causal on the depth-N0 window of K0
    V = adjoint(Wd.operator)
    K0 = V.domain
    Y0op = window_operator(Y0s, K0, K0, K0.window(N0), K0.window(N0), "Y0*")

    # stage 2: unitary extension U' of V and the forced extension Y' of Y0*
    ue = unitary_extension_of_isometry(V, 2, tol=tol)
    stagelog.append(("unitary-extension", ue.certificate))
    c = ue.info["cokernel_dim"]
    Up = ue.operator
    big = Up.domain
    Ups = adjoint(Up)
    inj = ue.base_embedding.injection
    head = (1, 0) if c else (0,)
    qbar = build_qbar(QExtension(Q, q, big, head))
    qbar_s = adjoint(qbar)

    k0_paths = [(1,) + p if c else p for p in K0.window(top)]
    chain_paths = [(0, j) for j in range(chain_depth)] if c else []
    win = chain_paths + k0_paths
    images = {}
    for p in k0_paths:
        kp = p[1:] if c else p
        for k in range(big.leaf_dim(p)):
            images[(p, k)] = apply(inj, apply(Y0op, BlockVector.basis(K0, kp, k)))
    if c:
        Wc, cwin = ue.info["cokernel"], ue.info["window"]
        for k in range(c):
            y = apply(inj, apply(Y0op, BlockVector.from_dense(K0, cwin, Wc[:, k])))
            for j in range(chain_depth):
                y = apply(Ups, y) * np.conj(q) if form == "QAB" else apply(Ups, apply(qbar_s, y))
                images[((0, j), k)] = y
    cols = []
    for p in win:
        for k in range(big.leaf_dim(p)):
            cols.append(images[(p, k)].to_dense(win))
    M = np.array(cols).T  # Y' compressed to the band
    Yw = M.conj().T
    Y = window_operator(Yw, big, big, win, win, "Y")
    P = window_projection(big, win)
    U = adjoint(Up)
    Uw = compose(P, U)

    rep = ResidualReport()
    emb = head_embedding(BlockSpace.leaf(d), big, head)
    corner = max(np.linalg.norm(emb.project(apply(Y, emb.embed(h))) - X @ h) for h in np.eye(d))
    rep.add("corner", corner, "P_H Y|_H against X", 1e-12)
    nx, ny = nm.opnorm(X), nm.opnorm(Yw)
    rep.add("norm-bound", max(0.0, ny - nx), f"|Y_window|={ny:.15g}, |X|={nx:.15g}", tol)
    vecs = [BlockVector.basis(big, p, k) for p in win for k in range(big.leaf_dim(p))]
    rep.extend(check_q_commutation(Uw, Y, qbar, form, vecs, tol, name=f"relation-{form}", project=P))
    rep.extend(check_isometry_class(U, "unitary", vecs, 1e-10, name="U"))
    rep.extend(check_dilation_identities(X, T, Y, Uw, emb, window, 1e-7, label="XT-"))
    rep.extend(check_dilation_identities(T, T, U, U, emb, window, 1e-10, label="U-dilates-T-"))
    lifting = WindowedLifting(Yw, big, big, win, win, ny, {}, window, rep, extension=False)
    lifting.residual_profile = {ch.name: ch.max_residual for ch in rep.checks}
    dil = DilationResult(U, emb, "unitary-dilation", ue.certificate, info={"cokernel_dim": c, "band": (chain_depth, top)})
    return UnitaryQCommutant(lifting, QExtension(Q, q, big, head), dil, Y, U, qbar, emb, rep, stagelog)
