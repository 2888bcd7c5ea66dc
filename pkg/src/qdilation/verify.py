"""Residual checkers and the Q-witness solver.

The checkers only use ``apply``, ``apply_adjoint``, inner products and the
embedding of the base space, so they work for graded operators as well as
for the orbit-realized unitaries built by the Ando pipelines.  None of them
import a construction module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graded import BlockSpace, BlockVector, UnsupportedStructureError
from .numerics import TOL, as_matrix

__all__ = [
    "Check",
    "ResidualReport",
    "WitnessResult",
    "window_basis",
    "check_dilation_identities",
    "check_q_commutation",
    "check_structure",
    "check_isometry_class",
    "find_q_witness",
]


@dataclass(frozen=True)
class Check:
    name: str
    max_residual: float
    window: str
    tolerance: float
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name}: {self.max_residual:.3e} (tol {self.tolerance:.1e}; {self.window})"


@dataclass
class ResidualReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, residual: float, window: str, tolerance: float) -> Check:
        r = float(abs(residual))
        c = Check(name, r, window, float(tolerance), bool(r <= tolerance))
        self.checks.append(c)
        return c

    def extend(self, other: "ResidualReport", prefix: str = "") -> "ResidualReport":
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.max_residual, c.window, c.tolerance, c.passed))
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self) -> list:
        return [c.name for c in self.checks]

    def text(self) -> str:
        return "\n".join(c.line() for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "max-residual": c.max_residual,
                    "window": c.window,
                    "tolerance": c.tolerance,
                    "pass": c.passed,
                }
                for c in self.checks
            ],
        }


def window_basis(space: BlockSpace, depth: int) -> list:
    """Standard basis vectors of the depth window of a graded space."""
    out = []
    for p in space.window(depth):
        for k in range(space.leaf_dim(p)):
            out.append(BlockVector.basis(space, p, k))
    return out


def _power_images(A, x, n: int) -> list:
    out = [x]
    for _ in range(n):
        out.append(A.apply(out[-1]))
    return out


def check_dilation_identities(T1, T2, A1, A2, emb, depth: int, tol: float = TOL, label: str = "") -> ResidualReport:
    """``P_H A1^n A2^m |_H`` against ``T1^n T2^m``, and the swapped family."""
    T1, T2 = as_matrix(T1), as_matrix(T2)
    d = T1.shape[0]
    basis = [np.eye(d)[:, j] for j in range(d)]
    rep = ResidualReport()
    for first, second, F, S, tag in ((A1, A2, T1, T2, "12"), (A2, A1, T2, T1, "21")):
        worst, where = 0.0, (0, 0)
        for m in range(depth + 1):
            cols_img = []
            for h in basis:
                cols_img.append(_power_images(second, emb.embed(h), m)[-1])
            Sm = np.linalg.matrix_power(S, m)
            for n in range(depth - m + 1):
                got = np.array([emb.project(v) for v in cols_img]).T.reshape(d, d)
                want = np.linalg.matrix_power(F, n) @ Sm
                r = np.linalg.norm(got - want, 2)
                if r > worst:
                    worst, where = r, (n, m)
                if n < depth - m:
                    cols_img = [first.apply(v) for v in cols_img]
        name = f"{label}identities-{tag}" if label else f"identities-{tag}"
        rep.add(name, worst, f"n+m<={depth}, worst (n,m)={where}", tol)
    return rep


def _normalized(window: list) -> list:
    out = []
    for x in window:
        nx = x.norm()
        if nx > 0:
            out.append(x * (1.0 / nx))
    return out


def _relation_rhs(A, B, Q, form: str, x):
    if form == "QAB":
        return Q.apply(A.apply(B.apply(x)))
    if form == "AQB":
        return A.apply(Q.apply(B.apply(x)))
    if form == "ABQ":
        return A.apply(B.apply(Q.apply(x)))
    raise ValueError(f"unknown relation form {form!r}")


def check_q_commutation(A, B, Qbar, form: str, window: list, tol: float = TOL, name: str = "", project=None) -> ResidualReport:
    """Max over the window of ``|(BA - form(Qbar, A, B)) x|`` for unit x.

    ``project`` (an operator) is applied to the difference first; it is used
    for operators that are only known on a window.
    """
    worst = 0.0
    vecs = _normalized(window)
    for x in vecs:
        diff = B.apply(A.apply(x)) - _relation_rhs(A, B, Qbar, form, x)
        if project is not None:
            diff = project.apply(diff)
        r = diff.norm()
        worst = max(worst, r)
    rep = ResidualReport()
    rep.add(name or f"relation-{form}", worst, f"{len(vecs)} window vectors", tol)
    return rep


def check_structure(Y, H1_embed, H2_embed, X, kind: str, window: list, tol: float = TOL, name: str = "") -> ResidualReport:
    """Block structure of Y relative to (H1, H2).

    lifting: ``P_H2 Y|_H1 = X`` and ``P_H2 Y x = 0`` for x orthogonal to H1.
    extension: ``Y h = X h`` inside H2 for h in H1.
    """
    X = as_matrix(X)
    d1 = X.shape[1]
    rep = ResidualReport()
    base = name or kind
    if kind == "lifting":
        corner = 0.0
        for j in range(d1):
            e = np.eye(d1)[:, j]
            corner = max(corner, np.linalg.norm(H2_embed.project(Y.apply(H1_embed.embed(e))) - X @ e))
        zero = 0.0
        for x in window:
            x = x - H1_embed.embed(H1_embed.project(x))
            nx = x.norm()
            if nx == 0:
                continue
            zero = max(zero, np.linalg.norm(H2_embed.project(Y.apply(x))) / nx)
        rep.add(f"{base}-corner", corner, f"H1 basis ({d1})", tol)
        rep.add(f"{base}-zero-block", zero, f"{len(window)} window vectors", tol)
    elif kind == "extension":
        corner = 0.0
        for j in range(d1):
            e = np.eye(d1)[:, j]
            img = Y.apply(H1_embed.embed(e))
            corner = max(corner, (img - H2_embed.embed(X @ e)).norm())
        rep.add(f"{base}-restriction", corner, f"H1 basis ({d1})", tol)
    else:
        raise ValueError(f"unknown structure kind {kind!r}")
    return rep


def check_isometry_class(A, cls: str, window: list, tol: float = TOL, name: str = "") -> ResidualReport:
    """Residuals of ``A*A - I`` and/or ``AA* - I`` on unit window vectors.

    When the adjoint of A is not available the isometry part falls back to
    the Gram comparison ``<Ax, Ay> = <x, y>`` over the window.
    """
    vecs = _normalized(window)
    rep = ResidualReport()
    base = name or "op"
    if cls in ("isometry", "unitary"):
        try:
            r = max((A.apply_adjoint(A.apply(x)) - x).norm() for x in vecs)
            how = "A*A-I"
        except UnsupportedStructureError:
            imgs = [A.apply(x) for x in vecs]
            G_in = np.array([[y.inner(x) for y in vecs] for x in vecs])
            G_out = np.array([[y.inner(x) for y in imgs] for x in imgs])
            r = float(np.abs(G_in - G_out).max())
            how = "gram"
        rep.add(f"{base}-isometry", r, f"{len(vecs)} window vectors, {how}", tol)
    if cls in ("co-isometry", "coisometry", "unitary"):
        r = max((A.apply(A.apply_adjoint(x)) - x).norm() for x in vecs)
        rep.add(f"{base}-coisometry", r, f"{len(vecs)} window vectors, AA*-I", tol)
    if cls not in ("isometry", "co-isometry", "coisometry", "unitary"):
        raise ValueError(f"unknown class {cls!r}")
    return rep


@dataclass(frozen=True)
class WitnessResult:
    feasible: bool
    Q: np.ndarray
    residual: float
    slot: str


def find_q_witness(T1, T2, slot: str, tol: float = TOL) -> WitnessResult:
    """Least-squares Q with ``T2 T1 = f_slot(Q)``.

    slot ``left``: ``Q T1 T2``; ``middle``: ``T1 Q T2``; ``right``:
    ``T1 T2 Q``.  Uses column-major vectorization
    ``vec(A X B) = (B^T kron A) vec(X)`` and the least-norm solution.
    """
    T1, T2 = as_matrix(T1), as_matrix(T2)
    n = T1.shape[0]
    if T1.shape != (n, n) or T2.shape != (n, n):
        raise ValueError("find_q_witness needs square matrices of equal size")
    I = np.eye(n)
    if slot == "left":
        L, R = I, T1 @ T2
    elif slot == "middle":
        L, R = T1, T2
    elif slot == "right":
        L, R = T1 @ T2, I
    else:
        raise ValueError(f"unknown slot {slot!r}")
    M = np.kron(R.T, L)
    b = (T2 @ T1).reshape(-1, order="F")
    q = np.linalg.pinv(M, rcond=1e-12) @ b
    Q = q.reshape(n, n, order="F")
    res = float(np.linalg.norm(L @ Q @ R - T2 @ T1))
    return WitnessResult(res <= tol, Q, res, slot)
