"""Q-commuting dilations of contraction pairs.

Isometric pipeline: ``V1 hat`` is the Schäffer dilation of T1, ``V2 hat`` a
Q-commutant lifting of T2 along it (so ``V2^ V1^ = Qbar V1^ V2^``).  Both
are materialized on a window ``F`` of the first dilation space; V2 is the
Schäffer dilation of the window block of ``V2 hat`` and V1 is a
Q*-commutant lifting of the window block of ``V1 hat`` along V2.

Unitary pipeline: V2 is extended to a unitary ``V2 hat`` on
``chain (+) K``; ``V1`` is extended to ``V1 hat`` by the forced rule
``V1^ (V2^-n h) = (Q^* V2^)^-n V1 h``; ``U1`` is the minimal unitary
extension of ``V1 hat``, realized on orbit pairs ``(n, x) = U1^-n x``, and
``U2 (U1^-n x) = (Qbar U1)^-n V2^ x``.

The window of ``F`` is chosen adaptively: the level ``N`` block of F is a
truncation artifact (the window map kills it), so N is enlarged until the
columns that matter have negligible mass there.
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
    qbar_head_block,
    schaffer_isometric,
    unitary_extension_of_isometry,
)
from .graded import (
    BlockSpace,
    BlockVector,
    Block,
    Embedding,
    EnlargeWindowError,
    GradedOperator,
    adjoint,
    apply,
    compose,
    head_embedding,
    leaf_prefix_embedding,
    window_operator,
    window_projection,
)
from .lift import _tilde_target, lift_engine, margin_depth
from .verify import (
    ResidualReport,
    check_dilation_identities,
    check_isometry_class,
    check_q_commutation,
    check_structure,
    window_basis,
)

__all__ = [
    "AndoPipelineResult",
    "SpanningFamilyOperator",
    "GramMismatchError",
    "OrbitVector",
    "q_ando_isometric",
    "q_ando_coisometric",
    "isometries_to_unitaries",
    "coisometries_to_unitaries",
    "q_ando_unitary",
]

ISOMETRIC_DEPTH = 6
UNITARY_DEPTH = 4
TAIL_TOL = 1e-13
MAX_WINDOW = 512
# dense second-stage windows beyond this size are refused rather than run for minutes
MAX_STAGE2_DIM = 1200


class GramMismatchError(PreconditionError):
    """A spanning family whose input and output Gram matrices disagree."""


@dataclass(eq=False)
class AndoPipelineResult:
    space: object
    op1: object
    op2: object
    qbar: object
    base_embedding: object
    stagelog: list
    report: ResidualReport
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.report.passed and all(rep.passed for _, rep in self.stagelog)


# ----------------------------------------------------------------------------
# spanning families


def pivoted_gram_basis(G: np.ndarray, rank_tol: float = nm.RANK_TOL) -> tuple:
    """Coefficients ``C`` with ``C* G C = I`` from a pivoted Cholesky of G.

    If G is the Gram matrix of generators x_i, the vectors ``sum_i C[i, k] x_i``
    are orthonormal and span the generators up to residual ``rank_tol``
    (relative, on squared norms).  Returns ``(C, pivots)``.
    """
    G = (G + G.conj().T) / 2
    n = G.shape[0]
    d = G.diagonal().real.copy()
    scale = max(d.max(), 1.0) if n else 1.0
    L = np.zeros((n, 0), dtype=complex)
    piv: list = []
    while len(piv) < n:
        cand = d.copy()
        cand[piv] = -np.inf
        j = int(np.argmax(cand))
        if cand[j] <= rank_tol * scale:
            break
        col = (G[:, j] - L @ L[j].conj()) / np.sqrt(cand[j])
        L = np.hstack([L, col[:, None]])
        d = d - np.abs(col) ** 2
        piv.append(j)
    C = np.zeros((n, len(piv)), dtype=complex)
    if piv:
        C[piv] = np.linalg.inv(L[piv]).conj().T
    return C, piv


def _gram(vecs: list) -> np.ndarray:
    n = len(vecs)
    G = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            G[i, j] = vecs[j].inner(vecs[i])
            G[j, i] = np.conj(G[i, j])
    return G


def _cross_gram(left: list, right: list) -> np.ndarray:
    return np.array([[r.inner(l) for r in right] for l in left], dtype=complex).reshape(len(left), len(right))


@dataclass(eq=False)
class SpanningFamilyOperator:
    """Operator defined by ``x_i -> y_i`` on the span of its generators.

    It is a well defined isometry exactly when the Gram matrices of inputs
    and images agree.  ``synthesized`` is its matrix from an orthonormal
    basis of the input span to one of the image span.
    """

    generators: list
    gram_in: np.ndarray
    gram_out: np.ndarray
    synthesized: np.ndarray
    labels: list = field(default_factory=list)

    @classmethod
    def from_pairs(cls, pairs: list, labels: "list | None" = None, rank_tol: float = nm.RANK_TOL) -> "SpanningFamilyOperator":
        xs = [x for x, _ in pairs]
        ys = [y for _, y in pairs]
        Gi, Go = _gram(xs), _gram(ys)
        Ci, _ = pivoted_gram_basis(Gi, rank_tol)
        Co, _ = pivoted_gram_basis(Go, rank_tol)
        S = Co.conj().T @ Go @ Ci
        return cls(list(pairs), Gi, Go, S, list(labels or range(len(pairs))))

    @property
    def gram_residual(self) -> float:
        return float(np.abs(self.gram_in - self.gram_out).max()) if self.gram_in.size else 0.0

    def worst_pair(self) -> tuple:
        D = np.abs(self.gram_in - self.gram_out)
        i, j = np.unravel_index(int(np.argmax(D)), D.shape)
        return self.labels[i], self.labels[j]

    @property
    def isometry_residual(self) -> float:
        S = self.synthesized
        if S.size == 0:
            return 0.0
        return nm.opnorm(S.conj().T @ S - np.eye(S.shape[1]))

    @property
    def sigma_min(self) -> float:
        S = self.synthesized
        if S.size == 0:
            return 1.0
        s = np.linalg.svd(S, compute_uv=False)
        return float(s.min()) if S.shape[0] == S.shape[1] else 0.0

    def require(self, tol: float, what: str) -> None:
        r = self.gram_residual
        if r > tol:
            a, b = self.worst_pair()
            raise GramMismatchError(f"{what}: Gram mismatch {r:.3e} at generator pair {a} / {b}", r)


def _interleaved(window: int) -> list:
    out = [0]
    for k in range(1, window + 1):
        out += [-k, k]
    return out


# ----------------------------------------------------------------------------
# isometric pipeline


def _tail_mass(Y: np.ndarray, rows_from: int, cols: np.ndarray) -> float:
    block = Y[rows_from:] @ cols
    return float(np.linalg.norm(block, axis=0).max()) if block.size else 0.0


def _prefix_columns(total: int, count: int) -> np.ndarray:
    return np.eye(total, min(count, total), dtype=complex)


def _next_window(N: int, tail: float, history: list, tail_tol: float, cap: int) -> int:
    """Double the window, or jump ahead using the geometric decay seen so far."""
    target = 2 * N
    if history and tail > 0:
        N0, t0 = history[-1]
        rate = (tail / t0) ** (1.0 / (N - N0)) if t0 > 0 else 1.0
        if rate < 0.999:
            jump = N + int(np.ceil(1.1 * np.log(tail_tol / tail) / np.log(rate))) + 4
            target = max(N + 4, min(target * 4, jump))
    return min(target, cap)


def _stage_one(T1, T2, Q, q, need: int, tail_tol: float, max_window: int, tol: float):
    """Lifting ``V2 hat`` of T2 along ``V1 hat = Schäffer(T1)`` on levels ``0..N``."""
    V1hat = schaffer_isometric(T1)
    f1 = V1hat.form
    d, e1 = f1.d, f1.e
    tgt, k0 = _tilde_target(f1, Q, q, "i", tol)
    N = max(margin_depth(need), 8)
    history: list = []
    while True:
        Yt = lift_engine(T2, f1, tgt, N, tol)
        keep = np.array([i for i in range(Yt.shape[0]) if i < d or (i - d) % (e1 + k0) < e1], dtype=int)
        B = Yt[keep]
        if e1 == 0:
            return V1hat, B, 0, N, 0.0
        tail = _tail_mass(B, d + (N - 1) * e1, _prefix_columns(B.shape[1], d + need * e1))
        if tail <= tail_tol:
            return V1hat, B, e1, N, tail
        if N >= max_window:
            raise EnlargeWindowError(f"first-stage window {N}: column tail {tail:.3e} above {tail_tol:.1e}")
        N, history = _next_window(N, tail, history, tail_tol, max_window), history + [(N, tail)]


def _stage_two(A1, f2: SchafferForm, Qhat, q, probes: np.ndarray, need: int, tail_tol: float, max_window: int, tol: float):
    """Lifting V1 of A1 along V2 with ``V1 V2 = Qbar* V2 V1``."""
    tgt, _ = _tilde_target(f2, Qhat.conj().T, np.conj(q), "i", tol)
    F, e2 = f2.d, f2.e
    M = max(margin_depth(2 * need - 2), 8)
    history: list = []
    while True:
        if F + M * e2 > MAX_STAGE2_DIM:
            raise EnlargeWindowError(
                f"second-stage window needs dimension {F + M * e2} (first-stage block {F}, defect {e2}, depth {M}); "
                f"above the limit {MAX_STAGE2_DIM}"
            )
        Y = lift_engine(A1, f2, tgt, M, tol)
        if e2 == 0:
            return Y, M, 0.0
        P = np.zeros((Y.shape[1], probes.shape[1]), dtype=complex)
        P[: probes.shape[0]] = probes[: Y.shape[1]]
        tail = _tail_mass(Y, F + (M - 1) * e2, P)
        if tail <= tail_tol:
            return Y, M, tail
        if M >= max_window:
            raise EnlargeWindowError(f"second-stage window {M}: orbit tail {tail:.3e} above {tail_tol:.1e}")
        M, history = _next_window(M, tail, history, tail_tol, max_window), history + [(M, tail)]


def q_ando_isometric(
    T1,
    T2,
    Q,
    q=1.0,
    depth: int = ISOMETRIC_DEPTH,
    tol: float = nm.TOL,
    tail_tol: float = TAIL_TOL,
    max_window: int = MAX_WINDOW,
) -> AndoPipelineResult:
    """Isometric liftings V1, V2 of T1, T2 with ``V2 V1 = Qbar V1 V2``.

    Needs ``T2 T1 = Q T1 T2`` with Q unitary and ``|q| = 1``.
    """
    T1, T2, Q = nm.as_matrix(T1), nm.as_matrix(T2), nm.as_matrix(Q)
    q = complex(q)
    d = T1.shape[0]
    for name, T in (("T1", T1), ("T2", T2)):
        if T.shape != (d, d):
            raise nm.InputError(f"{name} must be {d}x{d}")
        if nm.opnorm(T) > 1 + tol:
            raise nm.NotAContractionError(f"{name} has norm {nm.opnorm(T):.12g}")
    if abs(abs(q) - 1) > 1e-12:
        raise PreconditionError(f"|q| = {abs(q):.15g} is not 1", abs(abs(q) - 1))
    if not nm.classify(Q, tol).unitary:
        raise PreconditionError("Q must be unitary", nm.opnorm(Q @ Q.conj().T - np.eye(d)))
    res = nm.opnorm(T2 @ T1 - Q @ T1 @ T2)
    if res > tol:
        raise PreconditionError(f"T2 T1 != Q T1 T2 (residual {res:.3e})", res)
    # levels reached by the certificates; the final checks catch a too-small choice
    need = depth + 2
    stagelog = []

    # stage 1
    V1hat, B, e1, N, tail1 = _stage_one(T1, T2, Q, q, need, tail_tol, max_window, tol)
    stagelog.append(("schaffer-T1", V1hat.certificate))
    F = B.shape[0]
    f1 = V1hat.form
    A1 = np.zeros((F, F), dtype=complex)
    if e1:
        A1[:, : F - e1] = f1.window_matrix(N - 1)[:F]
    else:
        A1[:] = f1.A
    Qhat = qbar_head_block(Q, q, F)
    rep1 = ResidualReport()
    rep1.add("stage1-corner", np.abs(B[:d, :d] - T2).max(), "H block", 1e-12)
    rep1.add("stage1-triangularity", np.abs(B[:d, d:]).max() if F > d else 0.0, f"depth {N}", 1e-12)
    rep1.add("stage1-norm", max(0.0, nm.opnorm(B) - 1.0), f"|V2 hat| on depth {N}", tol)
    rep1.add("stage1-relation", nm.opnorm(B @ A1 - Qhat @ A1 @ B), f"depth {N}", tol)
    rep1.add("stage1-tail", tail1, f"level {N} mass of columns up to level {need}", max(tail_tol, 1e-13))
    stagelog.append(("q-commutant-lift-V2hat", rep1))
    if not rep1.passed:
        raise PreconditionError("first Ando stage failed its certificate", max(c.max_residual for c in rep1.checks))

    # stage 2
    f2 = SchafferForm(B, nm.defect_rows(B), np.eye(nm.defect_rows(B).shape[0], dtype=complex))
    e2 = f2.e
    # probe vectors V2^n k, k in the first `need` levels of F
    kdim = min(d + need * e1, F)
    probes = []
    W = f2.window_matrix(need)
    cur = np.zeros((F + need * e2, kdim), dtype=complex)
    cur[:kdim, :kdim] = np.eye(kdim)
    for n in range(need + 1):
        probes.append(cur.copy())
        if n < need:
            cur = (W @ cur)[: F + need * e2]
    probes = np.hstack(probes)
    Y1, M, tail2 = _stage_two(A1, f2, Qhat, q, probes, need, tail_tol, max_window, tol)
    # roundoff entries would otherwise drag support out to the window edge
    noise = np.abs(Y1) <= tail_tol
    cleanup = nm.opnorm(np.where(noise, Y1, 0))
    Y1 = np.where(noise, 0, Y1)

    K = f2.space()
    V2op = f2.operator("V2")
    V1op = window_operator(Y1, K, K, K.window(M), K.window(M), "V1")
    embH = leaf_prefix_embedding(d, K, (0,))
    qbar = build_qbar(QExtension(Q, q, K))
    rep2 = ResidualReport()
    rep2.add("stage2-corner", np.abs(Y1[:F, :F] - A1).max(), "F block", 1e-12)
    rep2.add("stage2-triangularity", np.abs(Y1[:F, F:]).max() if Y1.shape[1] > F else 0.0, f"depth {M}", 1e-12)
    rep2.add("stage2-tail", tail2, f"level {M} mass of V1 on V2^n k", max(tail_tol, 1e-13))
    rep2.add("stage2-cleanup", cleanup, f"norm of entries below {tail_tol:.0e}", tol)
    # norm chain: |V1 V2^n k| = |k| for k in the first-stage window
    Yp = np.zeros((Y1.shape[1], probes.shape[1]), dtype=complex)
    Yp[: probes.shape[0]] = probes[: Y1.shape[1]]
    chain = np.abs(np.linalg.norm(Y1 @ Yp, axis=0) - np.linalg.norm(Yp, axis=0)).max()
    rep2.add("V1-norm-chain", chain, f"|V1 V2^n k| - |k|, n<={need}, {kdim} vectors k", tol)
    stagelog.append(("q-commutant-lift-V1", rep2))

    report = ResidualReport()
    report.extend(ResidualReport([c for c in rep2.checks if c.name == "V1-norm-chain"]))
    cert_win = window_basis(K, min(depth + 2, M - 1))
    report.extend(check_isometry_class(V2op, "isometry", cert_win, tol, name="V2"))
    report.extend(check_structure(V1op, embH, embH, T1, "lifting", cert_win, tol, name="V1-lifting"))
    report.extend(check_structure(V2op, embH, embH, T2, "lifting", cert_win, tol, name="V2-lifting"))
    P = window_projection(K, K.window(M))
    report.extend(check_q_commutation(V1op, V2op, qbar, "QAB", window_basis(K, M - 1), tol, name="relation-V2V1=QbarV1V2", project=P))
    report.extend(check_dilation_identities(T1, T2, V1op, V2op, embH, depth, tol))
    info = {"first_window": N, "second_window": M, "F_dim": F, "defect_dims": (e1, e2), "tails": (tail1, tail2), "form2": f2, "A1": A1}
    return AndoPipelineResult(K, V1op, V2op, qbar, embH, stagelog, report, info)


def q_ando_coisometric(
    T1,
    T2,
    Q,
    q=1.0,
    depth: int = ISOMETRIC_DEPTH,
    tol: float = nm.TOL,
    tail_tol: float = TAIL_TOL,
    max_window: int = MAX_WINDOW,
) -> AndoPipelineResult:
    """Co-isometric extensions W1, W2 of T1, T2 with ``W2 W1 = W1 W2 Qbar``.

    Needs ``T2 T1 = T1 T2 Q``; then ``T2* T1* = Q T1* T2*`` and the
    isometric pipeline on the adjoints gives ``W_i = V_i*``.
    """
    T1, T2, Q = nm.as_matrix(T1), nm.as_matrix(T2), nm.as_matrix(Q)
    res = nm.opnorm(T2 @ T1 - T1 @ T2 @ Q)
    if res > tol:
        raise PreconditionError(f"T2 T1 != T1 T2 Q (residual {res:.3e})", res)
    iso = q_ando_isometric(T1.conj().T, T2.conj().T, Q, q, depth, tol, tail_tol, max_window)
    K, emb = iso.space, iso.base_embedding
    W1, W2 = adjoint(iso.op1), adjoint(iso.op2)
    M = iso.info["second_window"]
    report = ResidualReport()
    report.extend(ResidualReport([c for c in iso.report.checks if c.name == "V1-norm-chain"]))
    win = window_basis(K, min(depth + 2, M - 1))
    report.extend(check_isometry_class(W2, "co-isometry", win, tol, name="W2"))
    report.extend(check_structure(W1, emb, emb, T1, "extension", win, tol, name="W1-extension"))
    report.extend(check_structure(W2, emb, emb, T2, "extension", win, tol, name="W2-extension"))
    report.extend(check_q_commutation(W1, W2, iso.qbar, "ABQ", window_basis(K, M - 1), tol, name="relation-W2W1=W1W2Qbar"))
    report.extend(check_dilation_identities(T1, T2, W1, W2, emb, depth, tol))
    stagelog = list(iso.stagelog) + [("isometric-pipeline-on-adjoints", iso.report)]
    info = dict(iso.info, isometric=iso)
    return AndoPipelineResult(K, W1, W2, iso.qbar, emb, stagelog, report, info)


# ----------------------------------------------------------------------------
# orbit realization of the minimal unitary extension of an isometry


class OrbitVector:
    """The vector ``U^-level x`` of the minimal unitary extension of ``base``.

    Two representatives are compared at a common level by applying the
    isometry ``base`` to the lower one.
    """

    __slots__ = ("realization", "level", "vec")

    def __init__(self, realization: "_OrbitRealization", level: int, vec: BlockVector):
        self.realization = realization
        self.level = int(level)
        self.vec = vec

    def at(self, n: int) -> BlockVector:
        return self.realization.raise_vec(self.vec, n - self.level)

    def _pair(self, other: "OrbitVector") -> tuple:
        n = max(self.level, other.level)
        return n, self.at(n), other.at(n)

    def __add__(self, other: "OrbitVector") -> "OrbitVector":
        n, a, b = self._pair(other)
        return OrbitVector(self.realization, n, a + b)

    def __sub__(self, other: "OrbitVector") -> "OrbitVector":
        n, a, b = self._pair(other)
        return OrbitVector(self.realization, n, a - b)

    def __mul__(self, c) -> "OrbitVector":
        return OrbitVector(self.realization, self.level, self.vec * c)

    __rmul__ = __mul__

    def __neg__(self) -> "OrbitVector":
        return self * (-1.0)

    def inner(self, other: "OrbitVector") -> complex:
        _, a, b = self._pair(other)
        return a.inner(b)

    def norm(self) -> float:
        return self.vec.norm() if self.level == 0 else self.at(self.level).norm()

    def __repr__(self) -> str:
        return f"OrbitVector(level={self.level}, {self.vec!r})"


class _OrbitRealization:
    def __init__(self, base: GradedOperator):
        self.base = base

    def raise_vec(self, x: BlockVector, k: int) -> BlockVector:
        for _ in range(k):
            x = apply(self.base, x)
        return x

    def vector(self, x: BlockVector, level: int = 0) -> OrbitVector:
        return OrbitVector(self, level, x)


class _OrbitOperator:
    """Operator on orbit vectors given by callables (duck-typed for verify)."""

    def __init__(self, fwd, bwd, name: str):
        self._fwd, self._bwd, self.name = fwd, bwd, name

    def apply(self, x):
        return self._fwd(x)

    def apply_adjoint(self, x):
        return self._bwd(x)

    def adjoint(self) -> "_OrbitOperator":
        return _OrbitOperator(self._bwd, self._fwd, f"({self.name})*")


class _OrbitEmbedding:
    """H inside the orbit space via an embedding of H into the base space."""

    def __init__(self, realization: _OrbitRealization, emb: Embedding):
        self.realization, self.inner_emb = realization, emb
        self.small = emb.small
        d = emb.small.dimension
        self._basis = [emb.embed(np.eye(d)[:, j]) for j in range(d)]
        self._raised = {0: self._basis}

    def _basis_at(self, n: int) -> list:
        if n not in self._raised:
            prev = self._basis_at(n - 1)
            self._raised[n] = [apply(self.realization.base, b) for b in prev]
        return self._raised[n]

    def embed(self, h) -> OrbitVector:
        return self.realization.vector(self.inner_emb.embed(h), 0)

    def project(self, x: OrbitVector) -> np.ndarray:
        return np.array([x.vec.inner(b) for b in self._basis_at(x.level)], dtype=complex)

    def basis(self) -> list:
        return [self.realization.vector(b, 0) for b in self._basis]


def _hat_v1(V1: GradedOperator, V2hat: GradedOperator, Qhat: GradedOperator, ue: DilationResult) -> GradedOperator:
    """``V1 hat`` on ``chain (+) K``: V1 on K and ``(V2^* Q^)^(j+1) V1 w`` on chain level j."""
    big = V2hat.domain
    c = ue.info.get("cokernel_dim", 0)
    if c == 0:
        return V1
    K = V1.domain
    Kin = head_embedding(K, big, (1,))
    Wc, win = ue.info["cokernel"], ue.info["window"]
    V2s = adjoint(V2hat)
    level_imgs = {-1: [Kin.embed(apply(V1, BlockVector.from_dense(K, win, Wc[:, a]))) for a in range(c)]}

    def images(j):
        if j not in level_imgs:
            level_imgs[j] = [apply(V2s, apply(Qhat, y)) for y in images(j - 1)]
        return level_imgs[j]

    def col(p):
        if p[0] == 1:
            return [((1,) + t, b) for t, b in V1.column(p[1:])]
        imgs = images(p[1])
        targets = sorted(set().union(*(y.support for y in imgs)))
        out = []
        for t in targets:
            n = big.leaf_dim(t)
            blk = np.column_stack([y.blocks.get(t, np.zeros(n, dtype=complex)) for y in imgs])
            out.append((t, Block.dense(blk)))
        return out

    return GradedOperator(big, big, col, None, None, "V1hat")


def _words(ops: list, seeds: list, length: int) -> list:
    out, frontier = list(seeds), list(seeds)
    for _ in range(length):
        frontier = [op(x) for x in frontier for op in ops]
        out += frontier
    return out


def _compression_table(A1, A2, emb, depth: int) -> dict:
    d = emb.small.dimension
    table = {}
    for first, second, tag in ((A1, A2, "12"), (A2, A1, "21")):
        for m in range(depth + 1):
            cols = [emb.embed(np.eye(d)[:, j]) for j in range(d)]
            for _ in range(m):
                cols = [second.apply(x) for x in cols]
            for n in range(depth - m + 1):
                table[(tag, n, m)] = np.array([emb.project(x) for x in cols]).T.reshape(d, d)
                if n < depth - m:
                    cols = [first.apply(x) for x in cols]
    return table


def isometries_to_unitaries(
    V1: GradedOperator,
    V2: GradedOperator,
    Q,
    q=1.0,
    window: int = UNITARY_DEPTH,
    tol: float = nm.TOL,
    base_embedding: "Embedding | None" = None,
    head_path: tuple = (0,),
    rank_tol: float = nm.RANK_TOL,
) -> AndoPipelineResult:
    """Unitaries U1, U2 extending V1, V2 with ``U2 U1 = Qbar U1 U2``.

    V1 and V2 act on a common space K with ``V2 V1 = Qbar V1 V2``, where
    ``Qbar`` is Q on the first coordinates of the leaf at ``head_path``
    and ``q I`` elsewhere.  V2 must be row-finite (its cokernel is
    computed on a window); V1 is only applied.
    """
    Q = nm.as_matrix(Q)
    q = complex(q)
    d = Q.shape[0]
    K = V2.domain
    head_path = tuple(head_path)
    embK = base_embedding or leaf_prefix_embedding(d, K, head_path)
    stagelog = []

    # generators of K: V1^a V2^b h with a + b <= window
    hbasis = [embK.embed(np.eye(d)[:, j]) for j in range(d)]
    gens = []
    for h in hbasis:
        col = [h]
        for _ in range(window):
            col.append(apply(V2, col[-1]))
        for b, x in enumerate(col):
            for _ in range(window - b + 1):
                gens.append(x)
                x = apply(V1, x)

    # (a) unitary extension of V2
    ue = unitary_extension_of_isometry(V2, (V2.bandwidth or 1), tol=tol)
    stagelog.append(("unitary-extension-V2", ue.certificate))
    V2hat = ue.operator
    big = V2hat.domain
    c = ue.info.get("cokernel_dim", 0)
    hp_big = ((1,) + head_path) if c else head_path
    Kin = head_embedding(K, big, (1,)) if c else head_embedding(K, K, ())
    Qhat = build_qbar(QExtension(Q, q, big, hp_big))
    Qhat_s = adjoint(Qhat)
    V2hat_s = adjoint(V2hat)

    # (b) V1 hat and its well-definedness certificate on (V2^n h, (Q^* V2^)^n V1 h)
    V1hat = _hat_v1(V1, V2hat, Qhat, ue)
    pairs, labels = [], []
    for gi, g in enumerate(gens):
        x = Kin.embed(g)
        y = Kin.embed(apply(V1, g))
        fwd = {0: (x, y)}
        for sgn in (1, -1):
            a, b = x, y
            for k in range(1, window + 1):
                if sgn > 0:
                    a, b = apply(V2hat, a), apply(Qhat_s, apply(V2hat, b))
                else:
                    a, b = apply(V2hat_s, a), apply(V2hat_s, apply(Qhat, b))
                fwd[sgn * k] = (a, b)
        for n in _interleaved(window):
            pairs.append(fwd[n])
            labels.append(f"(n={n}, generator {gi})")
    fam1 = SpanningFamilyOperator.from_pairs(pairs, labels, rank_tol)
    rep_b = ResidualReport()
    rep_b.add("V1hat-gram", fam1.gram_residual, f"{len(pairs)} generator pairs, |n|<={window}", tol)
    rep_b.add("V1hat-synthesized-isometry", fam1.isometry_residual, f"rank {fam1.synthesized.shape[1]}", tol)
    lazy = max((apply(V1hat, x) - y).norm() for x, y in pairs)
    rep_b.add("V1hat-rule-consistency", lazy, "lazy rule against generator images", tol)
    stagelog.append(("spanning-family-V1hat", rep_b))
    fam1.require(tol, "V1 hat")

    # (c) U1: minimal unitary extension of V1 hat on orbit pairs
    orb = _OrbitRealization(V1hat)
    embH = _OrbitEmbedding(orb, Embedding(embK.small, big, _compose_embed(Kin, embK)))

    def u1(x):
        if x.level > 0:
            return OrbitVector(orb, x.level - 1, x.vec)
        return OrbitVector(orb, 0, apply(V1hat, x.vec))

    def u1s(x):
        return OrbitVector(orb, x.level + 1, x.vec)

    Qd, Qsd = Q - q * np.eye(d), Q.conj().T - np.conj(q) * np.eye(d)

    def qb(x):
        return x * q + embH.embed(Qd @ embH.project(x))

    def qbs(x):
        return x * np.conj(q) + embH.embed(Qsd @ embH.project(x))

    # (d) U2 (U1^-n x) = (Qbar U1)^-n V2^ x
    def u2(x):
        y = OrbitVector(orb, 0, apply(V2hat, x.vec))
        for _ in range(x.level):
            y = u1s(qbs(y))
        return y

    def u2s(x):
        z = x
        for _ in range(x.level):
            z = qb(u1(z))
        return OrbitVector(orb, x.level, apply(V2hat_s, z.vec))

    U1 = _OrbitOperator(u1, u1s, "U1")
    U2 = _OrbitOperator(u2, u2s, "U2")
    Qbar = _OrbitOperator(qb, qbs, "Qbar")
    stagelog.append(("minimal-unitary-extension-V1hat", ResidualReport()))

    # (e) U2 on the family (U1^-n x, (Qbar U1)^-n V2^ x) and its surjectivity
    base_vecs = [orb.vector(Kin.embed(g)) for g in gens[: max(d, len(gens) // 2)]]
    pairs2, labels2 = [], []
    for gi, g in enumerate(base_vecs):
        a = g
        for n in range(window + 1):
            pairs2.append((a, u2(a)))
            labels2.append(f"(n={n}, generator {gi})")
            a = u1s(a)
    fam2 = SpanningFamilyOperator.from_pairs(pairs2, labels2, rank_tol)
    targets = [x for x, _ in pairs2]
    onto = max((u2(u2s(y)) - y).norm() for y in targets)
    rep_e = ResidualReport()
    rep_e.add("U2-gram", fam2.gram_residual, f"{len(pairs2)} generator pairs", tol)
    rep_e.add("U2-synthesized-sigma-min", max(0.0, 1.0 - fam2.sigma_min), "1 - smallest singular value", tol)
    rep_e.add("U2-onto", onto, f"|U2 U2* y - y| on {len(targets)} orbit vectors", tol)
    stagelog.append(("spanning-family-U2", rep_e))
    fam2.require(tol, "U2")

    # final certificates on an orbit window of H
    seeds = embH.basis()
    words = _words([u1, u1s, u2, u2s], seeds, 2)
    report = ResidualReport()
    report.extend(check_isometry_class(U1, "unitary", words, tol, name="U1"))
    report.extend(check_isometry_class(U2, "unitary", words, tol, name="U2"))
    report.extend(check_q_commutation(U1, U2, Qbar, "QAB", words, tol, name="relation-U2U1=QbarU1U2"))
    ext1 = max((u1(orb.vector(Kin.embed(g))) - orb.vector(Kin.embed(apply(V1, g)))).norm() for g in gens)
    ext2 = max((u2(orb.vector(Kin.embed(g))) - orb.vector(Kin.embed(apply(V2, g)))).norm() for g in gens)
    report.add("U1-extends-V1", ext1, f"{len(gens)} vectors of K", 1e-10)
    report.add("U2-extends-V2", ext2, f"{len(gens)} vectors of K", 1e-10)
    want = _compression_table(V1, V2, embK, window)
    got = _compression_table(U1, U2, embH, window)
    for tag in ("12", "21"):
        worst = max(nm.opnorm(got[k] - want[k]) for k in want if k[0] == tag)
        report.add(f"identities-{tag}-vs-V", worst, f"n+m<={window}", tol)
    info = {"cokernel_dim": c, "V1hat": V1hat, "V2hat": V2hat, "Qhat": Qhat, "families": (fam1, fam2), "words": len(words)}
    return AndoPipelineResult(orb, U1, U2, Qbar, embH, stagelog, report, info)


def _compose_embed(outer: Embedding, inner: Embedding) -> GradedOperator:
    return compose(outer.injection, inner.injection)


def coisometries_to_unitaries(
    W1: GradedOperator,
    W2: GradedOperator,
    Q,
    q=1.0,
    window: int = UNITARY_DEPTH,
    tol: float = nm.TOL,
    base_embedding: "Embedding | None" = None,
    head_path: tuple = (0,),
    rank_tol: float = nm.RANK_TOL,
) -> AndoPipelineResult:
    """Unitaries U1, U2 with ``U_i* |_K = W_i*`` and ``U2 U1 = U1 U2 Qbar``.

    Input: co-isometries with ``W2 W1 = W1 W2 Qbar``; then ``V_i = W_i*``
    satisfy ``V2 V1 = Qbar V1 V2`` and the result is the adjoint of
    isometries_to_unitaries.
    """
    V1, V2 = adjoint(W1), adjoint(W2)
    res = isometries_to_unitaries(V1, V2, Q, q, window, tol, base_embedding, head_path, rank_tol)
    U1, U2, Qb = res.op1.adjoint(), res.op2.adjoint(), res.qbar.adjoint()
    emb = res.base_embedding
    seeds = emb.basis()
    words = _words([U1.apply, U1.apply_adjoint, U2.apply, U2.apply_adjoint], seeds, 2)
    report = ResidualReport()
    report.extend(check_isometry_class(U1, "unitary", words, tol, name="U1"))
    report.extend(check_isometry_class(U2, "unitary", words, tol, name="U2"))
    report.extend(check_q_commutation(U1, U2, res.qbar, "ABQ", words, tol, name="relation-U2U1=U1U2Qbar"))
    for c in res.report.checks:
        if c.name.endswith("-vs-V") or c.name.startswith(("U1-extends", "U2-extends")):
            report.checks.append(c)
    stagelog = list(res.stagelog) + [("isometric-to-unitary-on-adjoints", res.report)]
    info = dict(res.info, isometric=res)
    return AndoPipelineResult(res.space, U1, U2, res.qbar, emb, stagelog, report, info)


def q_ando_unitary(
    T1,
    T2,
    Q,
    q=1.0,
    relation: str = "QT1T2",
    depth: int = UNITARY_DEPTH,
    tol: float = nm.TOL,
    tail_tol: float = TAIL_TOL,
    max_window: int = MAX_WINDOW,
) -> AndoPipelineResult:
    """Unitary dilation with ``U2 U1 = Qbar U1 U2`` (QT1T2) or ``U1 U2 Qbar`` (T1T2Q)."""
    T1, T2, Q = nm.as_matrix(T1), nm.as_matrix(T2), nm.as_matrix(Q)
    if relation == "QT1T2":
        first = q_ando_isometric(T1, T2, Q, q, depth, tol, tail_tol, max_window)
        second = isometries_to_unitaries(first.op1, first.op2, Q, q, depth, tol, first.base_embedding)
        form = "QAB"
    elif relation == "T1T2Q":
        first = q_ando_coisometric(T1, T2, Q, q, depth, tol, tail_tol, max_window)
        second = coisometries_to_unitaries(first.op1, first.op2, Q, q, depth, tol, first.base_embedding)
        form = "ABQ"
    else:
        raise nm.InputError(f"unknown relation {relation!r}")
    U1, U2, emb = second.op1, second.op2, second.base_embedding
    words = _words([U1.apply, U1.apply_adjoint, U2.apply, U2.apply_adjoint], emb.basis(), 2)
    report = ResidualReport()
    report.extend(check_isometry_class(U1, "unitary", words, tol, name="U1"))
    report.extend(check_isometry_class(U2, "unitary", words, tol, name="U2"))
    rel_name = "relation-U2U1=QbarU1U2" if form == "QAB" else "relation-U2U1=U1U2Qbar"
    report.extend(check_q_commutation(U1, U2, second.qbar, form, words, tol, name=rel_name))
    report.extend(check_dilation_identities(T1, T2, U1, U2, emb, depth, tol))
    # Qbar acts as Q on H and as q on H-perp
    hq = max(np.linalg.norm(emb.project(second.qbar.apply(x)) - Q @ np.eye(Q.shape[0])[:, j]) for j, x in enumerate(emb.basis()))
    perp = [w - emb.embed(emb.project(w)) for w in words]
    qperp = max(((second.qbar.apply(w) - w * complex(q))).norm() for w in perp)
    report.add("Qbar-structure", max(hq, qperp), f"H basis and {len(perp)} vectors of H-perp", tol)
    stagelog = [("isometric-stage" if form == "QAB" else "coisometric-stage", first.report)] + list(first.stagelog)
    stagelog += [("unitary-stage", second.report)] + list(second.stagelog)
    info = {"first": first, "second": second}
    return AndoPipelineResult(second.space, U1, U2, second.qbar, emb, stagelog, report, info)
