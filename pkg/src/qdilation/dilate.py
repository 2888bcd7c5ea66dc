"""Constructive dilations of a single contraction.

Schäffer isometric dilations, minimal co-isometric extensions, Z-graded
unitary dilations, unitary extensions of isometries, the operator
``Qbar = Q (+) qI`` and the wandering-subspace construction of a
co-isometry S with ``S0 T* = Q T* S0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .graded import (
    Block,
    BlockSpace,
    BlockVector,
    Embedding,
    EnlargeWindowError,
    GradedOperator,
    InputError,
    adjoint,
    apply,
    head_embedding,
    materialize,
)
from .verify import ResidualReport, check_isometry_class, check_structure, window_basis

__all__ = [
    "EnlargeWindowError",
    "PreconditionError",
    "SchafferForm",
    "QExtension",
    "DilationResult",
    "WoldData",
    "schaffer_isometric",
    "min_coisometric_extension",
    "min_unitary_dilation",
    "unitary_extension_of_isometry",
    "build_qbar",
    "wandering_analysis",
    "lemma_coisometry_S",
    "LemmaResult",
    "shift_space",
]

CERT_DEPTH = 10


class PreconditionError(InputError):
    """A hypothesis of a construction failed; carries the failing residual."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


# ----------------------------------------------------------------------------
# Schäffer normal form


@dataclass(frozen=True, eq=False)
class SchafferForm:
    """Isometry ``V(h; e1, e2, ...) = (A h; G h, C e1, C e2, ...)``.

    Requires ``G* G = I - A* A`` and C unitary, so V is an isometric
    lifting of A on ``H (+) E (+) E (+) ...``.  The plain Schäffer
    dilation is ``G = defect rows of A``, ``C = I``.
    """

    A: np.ndarray
    G: np.ndarray
    C: np.ndarray

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def e(self) -> int:
        return self.G.shape[0]

    def space(self) -> BlockSpace:
        return BlockSpace.nat(BlockSpace.leaf(self.e), {0: BlockSpace.leaf(self.d)})

    def level_dims(self, n: int) -> int:
        return self.d + n * self.e

    def window_matrix(self, n: int) -> np.ndarray:
        """Matrix of V restricted to levels ``0..n`` into levels ``0..n+1``."""
        d, e = self.d, self.e
        V = np.zeros((d + (n + 1) * e, d + n * e), dtype=complex)
        V[:d, :d] = self.A
        V[d:d + e, :d] = self.G
        for j in range(1, n + 1):
            V[d + j * e:d + (j + 1) * e, d + (j - 1) * e:d + j * e] = self.C
        return V

    def cokernel(self, rank_tol: float = nm.RANK_TOL) -> np.ndarray:
        """Orthonormal basis of ``ker V*``; it lives in levels 0 and 1."""
        top = np.vstack([self.A, self.G])
        if top.shape[0] == top.shape[1]:
            return np.zeros((top.shape[0], 0), dtype=complex)
        Qf, _ = np.linalg.qr(top, mode="complete")
        return Qf[:, self.d:]

    def operator(self, name: str = "V") -> GradedOperator:
        A, G, C, e = Block.dense(self.A), Block.dense(self.G), Block.dense(self.C), self.e

        def col(p):
            j = p[0]
            if j == 0:
                return [((0,), A), ((1,), G)] if e else [((0,), A)]
            return [((j + 1,), C)]

        def row(p):
            j = p[0]
            if j == 0:
                return [((0,), A)]
            if j == 1:
                return [((0,), G)]
            return [((j - 1,), C)]

        return GradedOperator(self.space(), self.space(), col, row, 1, name)

    def embedding(self) -> Embedding:
        sp = self.space()
        return head_embedding(BlockSpace.leaf(self.d), sp, (0,))


def shift_space(dim: int = 1) -> BlockSpace:
    """``l2(N, C^dim)`` as an N-node of uniform leaves."""
    return BlockSpace.nat(BlockSpace.leaf(dim))


# ----------------------------------------------------------------------------
# results


@dataclass(frozen=True, eq=False)
class QExtension:
    """``Qbar = Q (+) qI``; Q acts on the first rows of the leaf at head_path."""

    Q: np.ndarray
    q: complex
    target: BlockSpace
    head_path: tuple = (0,)


@dataclass(eq=False)
class DilationResult:
    operator: GradedOperator
    base_embedding: Embedding
    kind: str
    certificate: ResidualReport
    form: "SchafferForm | None" = None
    info: dict = field(default_factory=dict)


@dataclass(eq=False)
class WoldData:
    wandering_basis: list
    purity_certificate: float
    window_depth: int


def _base_certificate(V: GradedOperator, emb: Embedding, T: np.ndarray, kind: str, depth: int) -> ResidualReport:
    rep = ResidualReport()
    win = window_basis(V.domain, depth)
    cls = {"isometric-lifting": "isometry", "co-isometric-extension": "co-isometry"}.get(kind, "unitary")
    rep.extend(check_isometry_class(V, cls, win, 1e-10, name=kind))
    struct = "lifting" if kind == "isometric-lifting" else "extension"
    if kind in ("isometric-lifting", "co-isometric-extension"):
        rep.extend(check_structure(V, emb, emb, T, struct, win, 1e-10, name=struct))
    return rep


def schaffer_isometric(T, rank_tol: float = nm.RANK_TOL, tol: float = nm.TOL) -> DilationResult:
    """Minimal isometric dilation ``V(h; d1, d2, ...) = (Th; D_T h, d1, d2, ...)``."""
    T = nm.as_matrix(T)
    if T.shape[0] != T.shape[1]:
        raise InputError("T must be square")
    G = nm.defect_rows(T, rank_tol, tol)
    form = SchafferForm(T, G, np.eye(G.shape[0], dtype=complex))
    V = form.operator("V")
    emb = form.embedding()
    cert = _base_certificate(V, emb, T, "isometric-lifting", CERT_DEPTH)
    return DilationResult(V, emb, "isometric-lifting", cert, form)


def min_coisometric_extension(T, rank_tol: float = nm.RANK_TOL, tol: float = nm.TOL) -> DilationResult:
    """Adjoint of the Schäffer dilation of ``T*``."""
    T = nm.as_matrix(T)
    iso = schaffer_isometric(T.conj().T, rank_tol, tol)
    W = adjoint(iso.operator)
    cert = _base_certificate(W, iso.base_embedding, T, "co-isometric-extension", CERT_DEPTH)
    return DilationResult(W, iso.base_embedding, "co-isometric-extension", cert, iso.form)


def min_unitary_dilation(T, rank_tol: float = nm.RANK_TOL, tol: float = nm.TOL) -> DilationResult:
    """Z-graded unitary dilation wired through the rotation ``[[T, D_T*], [D_T, -T*]]``.

    Level 0 is H, level j > 0 carries coordinates of ran D_T and level
    j < 0 coordinates of ran D_T*.
    """
    T = nm.as_matrix(T)
    if T.shape[0] != T.shape[1]:
        raise InputError("T must be square")
    dd = nm.defect_decomp(T, rank_tol, tol)
    ds = nm.defect_decomp(T.conj().T, rank_tol, tol)
    r = dd.defect_rank
    if ds.defect_rank != r:
        raise nm.InputError("defect ranks of T and T* differ numerically; adjust rank_tol")
    d = T.shape[0]
    E, Es = dd.defect_basis, ds.defect_basis
    G = dd.singular_values[:, None] * E.conj().T  # D_T h in E coordinates
    into_H = ds.defect_operator @ Es  # level -1 -> H
    into_1 = -(E.conj().T @ T.conj().T @ Es)  # level -1 -> level 1
    sp = BlockSpace.integers(BlockSpace.leaf(r), {0: BlockSpace.leaf(d)})
    bT, bG, bH, b1, I = Block.dense(T), Block.dense(G), Block.dense(into_H), Block.dense(into_1), Block.identity(r)

    def col(p):
        j = p[0]
        if j == 0:
            return [((0,), bT), ((1,), bG)]
        if j == -1:
            return [((0,), bH), ((1,), b1)]
        return [((j + 1,), I)]

    def row(p):
        j = p[0]
        if j == 0:
            return [((0,), bT), ((-1,), bH)]
        if j == 1:
            return [((0,), bG), ((-1,), b1)]
        return [((j - 1,), I)]

    U = GradedOperator(sp, sp, col, row, 2, "U")
    emb = head_embedding(BlockSpace.leaf(d), sp, (0,))
    cert = _base_certificate(U, emb, T, "unitary-dilation", CERT_DEPTH)
    return DilationResult(U, emb, "unitary-dilation", cert)


def unitary_extension_of_isometry(V: GradedOperator, depth: int, rank_tol: float = nm.RANK_TOL, tol: float = nm.TOL) -> DilationResult:
    """Unitary ``U`` on ``(+)_{n<0} W' (+) K`` with ``U|_K = V``.

    ``W' = ker V*`` is computed on the depth window of K; basis vectors
    one bandwidth beyond the window must already lie in ran V, otherwise
    the cokernel is not confined and EnlargeWindowError is raised.
    """
    K = V.domain
    bw = V.bandwidth or 1
    win = K.window(depth)
    Vs = adjoint(V)
    Ms, _ = materialize(Vs, win, K.window(depth + bw))
    # cokernel inside the window: kernel of V* restricted to it
    _, s, Vh = np.linalg.svd(Ms) if Ms.size else (None, np.zeros(0), np.zeros((0, 0)))
    n = Ms.shape[1]
    rank = int((s > rank_tol).sum()) if s.size else 0
    Wc = Vh[rank:].conj().T if n else np.zeros((0, 0))
    if Wc.shape[1] and np.abs(Ms @ Wc).max() > tol:
        raise EnlargeWindowError("cokernel basis does not solve V* x = 0 on the window")
    outside = [p for p in K.window(depth + bw) if p not in set(win)]
    leak = 0.0
    for p in outside:
        for k in range(K.leaf_dim(p)):
            x = BlockVector.basis(K, p, k)
            leak = max(leak, (x - apply(V, apply(Vs, x))).norm())
    if leak > tol:
        raise EnlargeWindowError(f"cokernel of V not confined to depth {depth} (boundary leak {leak:.3e})")
    c = Wc.shape[1]
    cert = ResidualReport()
    cert.add("cokernel-confinement", leak, f"boundary of depth {depth}", tol)
    if c == 0:
        emb = head_embedding(K, K, ())
        cert.extend(check_isometry_class(V, "unitary", window_basis(K, depth), tol, name="unitary-extension"))
        return DilationResult(V, emb, "unitary-extension", cert, info={"cokernel_dim": 0})
    chain = BlockSpace.nat(BlockSpace.leaf(c))
    big = BlockSpace.finite(chain, K)
    _, offsets = materialize(V, win)
    wblocks = {}
    for p, (o, dd) in offsets.items():
        blk = Wc[o:o + dd, :]
        if np.abs(blk).max() > 0:
            wblocks[p] = Block.dense(blk)
    I = Block.identity(c)

    def col(p):
        if p[0] == 0:
            j = p[1]
            if j == 0:
                return [((1,) + t, b) for t, b in wblocks.items()]
            return [((0, j - 1), I)]
        return [((1,) + t, b) for t, b in V.column(p[1:])]

    def row(p):
        if p[0] == 0:
            return [((0, p[1] + 1), I)]
        t = p[1:]
        out = [((1,) + s, b) for s, b in V.row_rule(t)]
        if t in wblocks:
            out.append(((0, 0), wblocks[t]))
        return out

    U = GradedOperator(big, big, col, row, max(bw, depth + 1), "U")
    emb = head_embedding(K, big, (1,))
    cert.extend(check_isometry_class(U, "unitary", window_basis(big, depth), tol, name="unitary-extension"))
    return DilationResult(U, emb, "unitary-extension", cert, info={"cokernel_dim": c, "cokernel": Wc, "window": win})


def qbar_head_block(Q, q, leaf_dim: int) -> np.ndarray:
    """``Q (+) q I`` on a leaf whose first coordinates carry H."""
    Q = nm.as_matrix(Q)
    d = Q.shape[0]
    M = q * np.eye(leaf_dim, dtype=complex)
    M[:d, :d] = Q
    return M


def build_qbar(qe: QExtension) -> GradedOperator:
    """Graded ``Qbar``: Q on the head leaf, ``q I`` on every other leaf."""
    sp, hp, q = qe.target, tuple(qe.head_path), complex(qe.q)
    head = Block.dense(qbar_head_block(qe.Q, q, sp.leaf_dim(hp)))

    def col(p):
        if p == hp:
            return [(p, head)]
        return [(p, Block.scalar(q, sp.leaf_dim(p)))]

    return GradedOperator(sp, sp, col, col, 0, "Qbar")


# ----------------------------------------------------------------------------
# wandering subspaces and the co-isometry S


def wandering_analysis(T: GradedOperator, depth: int, n_max: "int | None" = None, rank_tol: float = nm.RANK_TOL) -> WoldData:
    """Orthonormal basis of ``W = (T* H)^perp = ker T`` inside the depth window.

    The purity certificate is ``max ||T^n_max x||`` over window basis
    vectors (a pure co-isometry has ``T^n -> 0`` strongly).
    """
    K = T.domain
    win = K.window(depth)
    if not win:
        raise EnlargeWindowError("empty window")
    bw = T.bandwidth or 1
    M, offsets = materialize(T, win, K.window(depth + bw))
    if M.shape[1] == 0:
        raise EnlargeWindowError("window too small")
    _, s, Vh = np.linalg.svd(M)
    rank = int((s > rank_tol).sum())
    null = Vh[rank:].conj().T
    basis = [BlockVector.from_dense(K, win, null[:, j]) for j in range(null.shape[1])]
    # one step past the window so a shift-type T clears every window vector
    n_max = depth + 1 if n_max is None else n_max
    purity = 0.0
    for x in window_basis(K, depth):
        for _ in range(n_max):
            x = apply(T, x)
        purity = max(purity, x.norm())
    return WoldData(basis, purity, depth)


@dataclass(eq=False)
class LemmaResult:
    S0: GradedOperator
    S: GradedOperator
    wold: WoldData
    report: ResidualReport


def lemma_coisometry_S(T: GradedOperator, Q: GradedOperator, depth: int, tol: float = nm.TOL, cert_count: int = 50) -> LemmaResult:
    """Co-isometry ``S = S0*`` with ``S0 (sum T*^n w_n) = sum (Q T*)^(n+1) w_n``.

    ``T`` must be a pure co-isometry in shift form and ``Q`` an isometry
    leaving ``ran T*`` invariant.  The expansion of x uses
    ``w_n = P_W T^n x``.  The adjoint S is evaluated by scanning sources
    in the depth window, so it is exact for targets whose preimages lie
    there.
    """
    K = T.domain
    wold = wandering_analysis(T, depth)
    if wold.purity_certificate > 0.5:
        raise PreconditionError("T is not a pure co-isometry on the window", wold.purity_certificate)
    Ts = adjoint(T)
    win_vecs = window_basis(K, depth)
    rep = ResidualReport()
    rep.add("purity", wold.purity_certificate, f"||T^{depth + 1} x||, depth {depth}", 0.5)
    # hypotheses: Q isometric, Q(ran T*) in ran T*
    rep.extend(check_isometry_class(Q, "isometry", win_vecs, tol, name="Q"))
    inv = 0.0
    for x in win_vecs:
        y = apply(Q, apply(Ts, x))
        inv = max(inv, (y - apply(Ts, apply(T, y))).norm())  # T*T projects onto ran T*
    rep.add("Q-invariance-of-ranT*", inv, f"{len(win_vecs)} window vectors", tol)
    if not rep.passed:
        bad = [c for c in rep.checks if not c.passed][0]
        raise PreconditionError(f"lemma hypothesis failed: {bad.name}", bad.max_residual)

    W = wold.wandering_basis

    def S0_vec(x: BlockVector) -> BlockVector:
        out = BlockVector.zero(K)
        y = x
        n = 0
        while y.norm() > 0 and n <= 4 * depth + 4:
            term = BlockVector.zero(K)
            for w in W:
                term = term + w * y.inner(w)
            for _ in range(n + 1):
                term = apply(Q, apply(Ts, term))
            out = out + term
            y = apply(T, y)
            n += 1
        return out

    def col(p):
        blocks = []
        dim = K.leaf_dim(p)
        imgs = [S0_vec(BlockVector.basis(K, p, k)) for k in range(dim)]
        paths = sorted(set().union(*[im.support for im in imgs])) if imgs else []
        for t in paths:
            M = np.array([im.blocks.get(t, np.zeros(K.leaf_dim(t))) for im in imgs]).T
            blocks.append((t, Block.dense(M)))
        return blocks

    scan = K.window(depth)
    holder = {}

    def row(t):
        out = []
        for s in scan:
            for tt, b in holder["S0"].column(s):
                if tt == t:
                    out.append((s, b))
        return out

    S0 = GradedOperator(K, K, col, row, None, "S0")
    holder["S0"] = S0
    S = adjoint(S0)

    cert_vecs = window_basis(K, depth)[:cert_count]
    gram = 0.0
    imgs = [apply(S0, x) for x in cert_vecs]
    for i, a in enumerate(imgs):
        for j, b in enumerate(imgs):
            gram = max(gram, abs(b.inner(a) - (1.0 if i == j else 0.0)))
    rep.add("S0-isometry", gram, f"{len(cert_vecs)} window vectors, gram", 1e-12)
    rel = max((apply(S0, apply(Ts, x)) - apply(Q, apply(Ts, apply(S0, x)))).norm() for x in cert_vecs)
    rep.add("S0T*=QT*S0", rel, f"{len(cert_vecs)} window vectors", 1e-12)
    Qs = adjoint(Q)
    rel_star = max((apply(T, apply(S, x)) - apply(S, apply(T, apply(Qs, x)))).norm() for x in cert_vecs)
    rel_plain = max((apply(T, apply(S, x)) - apply(S, apply(T, apply(Q, x)))).norm() for x in cert_vecs)
    rep.add("TS=STQ*", rel_star, f"{len(cert_vecs)} window vectors", 1e-12)
    # the unstarred form is reported, not asserted: it fails for non-selfadjoint Q
    rep.add("TS=STQ (reported)", rel_plain, f"{len(cert_vecs)} window vectors", float("inf"))
    return LemmaResult(S0, S, wold, rep)
