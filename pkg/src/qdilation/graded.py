"""Lazy graded spaces and column-finite block operators.

A ``BlockSpace`` is a tree.  Leaves are finite dimensional; an internal
node is a direct sum indexed by a finite list, by N or by Z.  Infinite
nodes carry optional head children at chosen indices and one uniform
child shape for every other index.  Vectors are finitely supported maps
from leaf paths to coordinate blocks, and operators are given by a rule
returning the nonzero blocks of a column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Iterator

import numpy as np

from .numerics import InputError

__all__ = [
    "ZERO_PRUNE",
    "UnsupportedStructureError",
    "EnlargeWindowError",
    "window_operator",
    "window_projection",
    "BlockSpace",
    "BlockVector",
    "Block",
    "GradedOperator",
    "Embedding",
    "apply",
    "adjoint",
    "compose",
    "compress_power",
    "materialize",
    "direct_sum",
    "identity_operator",
    "scalar_operator",
    "shift_operator",
    "backward_shift_operator",
    "dense_operator",
    "head_embedding",
    "leaf_prefix_embedding",
]

ZERO_PRUNE = 1e-14

Path = tuple


class UnsupportedStructureError(InputError):
    """Raised for operations that need row-finiteness the operator lacks."""


class EnlargeWindowError(RuntimeError):
    """A window was too small to certify the requested construction."""


# ----------------------------------------------------------------------------
# spaces


@dataclass(frozen=True)
class BlockSpace:
    """Node of a graded index tree.

    kind is ``"leaf"``, ``"finite"``, ``"N"`` or ``"Z"``.  ``heads`` holds
    ``(index, child)`` pairs; for a finite node they are the children in
    order.  ``tail`` is the uniform child of an infinite node.
    """

    kind: str
    dim: int = 0
    heads: tuple = ()
    tail: "BlockSpace | None" = None

    def __post_init__(self):
        if self.kind not in ("leaf", "finite", "N", "Z"):
            raise InputError(f"unknown node kind {self.kind!r}")
        if self.kind == "leaf" and self.dim < 0:
            raise InputError("negative leaf dimension")
        if self.kind in ("N", "Z") and self.tail is None:
            raise InputError("infinite node needs a tail shape")
        if self.kind == "N" and any(i < 0 for i, _ in self.heads):
            raise InputError("N-indexed heads must be nonnegative")

    # constructors
    @staticmethod
    def leaf(dim: int) -> "BlockSpace":
        return BlockSpace("leaf", dim=int(dim))

    @staticmethod
    def finite(*children: "BlockSpace") -> "BlockSpace":
        return BlockSpace("finite", heads=tuple(enumerate(children)))

    @staticmethod
    def nat(tail: "BlockSpace", heads: "dict | None" = None) -> "BlockSpace":
        return BlockSpace("N", heads=tuple(sorted((heads or {}).items())), tail=tail)

    @staticmethod
    def integers(tail: "BlockSpace", heads: "dict | None" = None) -> "BlockSpace":
        return BlockSpace("Z", heads=tuple(sorted((heads or {}).items())), tail=tail)

    @property
    def is_infinite(self) -> bool:
        if self.kind in ("N", "Z"):
            return True
        return any(c.is_infinite for _, c in self.heads)

    def child(self, i: int) -> "BlockSpace":
        for j, c in self.heads:
            if j == i:
                return c
        if self.kind == "finite" or self.kind == "leaf":
            raise InputError(f"index {i} not present in finite node")
        if self.kind == "N" and i < 0:
            raise InputError(f"negative index {i} in N-indexed node")
        return self.tail

    def resolve(self, path: Path) -> "BlockSpace":
        node = self
        for i in path:
            node = node.child(i)
        return node

    def leaf_dim(self, path: Path) -> int:
        node = self.resolve(path)
        if node.kind != "leaf":
            raise InputError(f"path {path} does not end at a leaf")
        return node.dim

    def indices(self) -> Iterator[int]:
        """Canonical index order: heads first, then tail ascending (Z tails 0, -1, 1, ...)."""
        if self.kind == "finite":
            yield from (i for i, _ in self.heads)
        elif self.kind == "N":
            yield from count()
        elif self.kind == "Z":
            yield 0
            for k in count(1):
                yield -k
                yield k

    @property
    def dimension(self) -> int:
        if self.kind == "leaf":
            return self.dim
        if self.is_infinite:
            raise InputError("infinite-dimensional space")
        return sum(c.dimension for _, c in self.heads)

    def window(self, depth: int) -> list:
        """Leaf paths of the depth window, in canonical order.

        N-nodes keep indices ``0..depth``, Z-nodes ``|i| <= depth``; finite
        nodes keep all children.  Zero-dimensional leaves are skipped.
        """
        if self.kind == "leaf":
            return [()] if self.dim > 0 else []
        out = []
        if self.kind == "finite":
            idx = [i for i, _ in self.heads]
        elif self.kind == "N":
            idx = list(range(depth + 1))
        else:
            idx = [0] + [s * k for k in range(1, depth + 1) for s in (-1, 1)]
        for i in idx:
            out.extend((i,) + p for p in self.child(i).window(depth))
        return out


def _window_index(space: BlockSpace, window: list) -> tuple[dict, int]:
    offsets, pos = {}, 0
    for p in window:
        d = space.leaf_dim(p)
        offsets[p] = (pos, d)
        pos += d
    return offsets, pos


# ----------------------------------------------------------------------------
# vectors


class BlockVector:
    """Finitely supported vector on a BlockSpace."""

    __slots__ = ("space", "blocks")

    def __init__(self, space: BlockSpace, blocks: "dict | None" = None):
        self.space = space
        self.blocks = {}
        for p, v in (blocks or {}).items():
            v = np.asarray(v, dtype=complex).reshape(-1)
            if v.shape[0] != space.leaf_dim(p):
                raise InputError(f"block at {p} has length {v.shape[0]}, leaf has {space.leaf_dim(p)}")
            if np.linalg.norm(v) > ZERO_PRUNE:
                self.blocks[tuple(p)] = v

    @classmethod
    def _raw(cls, space, blocks):
        out = cls.__new__(cls)
        out.space = space
        out.blocks = {p: v for p, v in blocks.items() if np.linalg.norm(v) > ZERO_PRUNE}
        return out

    @classmethod
    def zero(cls, space: BlockSpace) -> "BlockVector":
        return cls._raw(space, {})

    @classmethod
    def basis(cls, space: BlockSpace, path: Path, k: int) -> "BlockVector":
        v = np.zeros(space.leaf_dim(path), dtype=complex)
        v[k] = 1.0
        return cls._raw(space, {tuple(path): v})

    @classmethod
    def from_dense(cls, space: BlockSpace, window: list, vec) -> "BlockVector":
        offsets, n = _window_index(space, window)
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if vec.shape[0] != n:
            raise InputError(f"vector length {vec.shape[0]} does not match window dimension {n}")
        return cls._raw(space, {p: vec[o:o + d].copy() for p, (o, d) in offsets.items()})

    def to_dense(self, window: list) -> np.ndarray:
        offsets, n = _window_index(self.space, window)
        out = np.zeros(n, dtype=complex)
        for p, v in self.blocks.items():
            if p in offsets:
                o, d = offsets[p]
                out[o:o + d] = v
        return out

    @property
    def support(self) -> set:
        return set(self.blocks)

    def _check(self, other):
        if other.space != self.space:
            raise InputError("vectors live in different spaces")

    def __add__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        out = dict(self.blocks)
        for p, v in other.blocks.items():
            out[p] = out[p] + v if p in out else v
        return BlockVector._raw(self.space, out)

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        return self + other * (-1.0)

    def __mul__(self, c) -> "BlockVector":
        return BlockVector._raw(self.space, {p: c * v for p, v in self.blocks.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "BlockVector":
        return self * (-1.0)

    def inner(self, other: "BlockVector") -> complex:
        """``<self, other>``, linear in the first slot."""
        self._check(other)
        s = 0j
        for p, v in self.blocks.items():
            w = other.blocks.get(p)
            if w is not None:
                s += np.vdot(w, v)
        return complex(s)

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(v, v).real for v in self.blocks.values())))

    def __repr__(self) -> str:
        return f"BlockVector(support={sorted(self.blocks)})"


# ----------------------------------------------------------------------------
# block entries


@dataclass(frozen=True)
class Block:
    """Block of a graded operator: a dense matrix or a structural tag."""

    kind: str  # "dense", "zero", "identity", "scalar"
    rows: int
    cols: int
    value: object = None

    @staticmethod
    def dense(M) -> "Block":
        M = np.asarray(M, dtype=complex)
        return Block("dense", M.shape[0], M.shape[1], M)

    @staticmethod
    def identity(n: int) -> "Block":
        return Block("identity", n, n)

    @staticmethod
    def scalar(c, n: int) -> "Block":
        return Block("scalar", n, n, complex(c))

    @staticmethod
    def zero(r: int, c: int) -> "Block":
        return Block("zero", r, c)

    def matrix(self) -> np.ndarray:
        if self.kind == "dense":
            return self.value
        if self.kind == "identity":
            return np.eye(self.rows, dtype=complex)
        if self.kind == "scalar":
            return self.value * np.eye(self.rows, dtype=complex)
        return np.zeros((self.rows, self.cols), dtype=complex)

    def act(self, v: np.ndarray) -> np.ndarray:
        if self.kind == "dense":
            return self.value @ v
        if self.kind == "identity":
            return v.copy()
        if self.kind == "scalar":
            return self.value * v
        return np.zeros(self.rows, dtype=complex)

    def adj(self) -> "Block":
        if self.kind == "dense":
            return Block("dense", self.cols, self.rows, self.value.conj().T)
        if self.kind == "scalar":
            return Block("scalar", self.rows, self.cols, np.conj(self.value))
        return Block(self.kind, self.cols, self.rows, self.value)

    def __matmul__(self, other: "Block") -> "Block":
        if self.kind == "zero" or other.kind == "zero":
            return Block.zero(self.rows, other.cols)
        if self.kind == "identity":
            return other
        if other.kind == "identity":
            return self
        if self.kind == "scalar" and other.kind == "scalar":
            return Block.scalar(self.value * other.value, self.rows)
        return Block.dense(self.matrix() @ other.matrix())

    def __add__(self, other: "Block") -> "Block":
        if self.kind == "zero":
            return other
        if other.kind == "zero":
            return self
        return Block.dense(self.matrix() + other.matrix())

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero" or self.rows == 0 or self.cols == 0:
            return True
        if self.kind == "dense":
            return not np.any(np.abs(self.value) > 0)
        if self.kind == "scalar":
            return self.value == 0
        return False


# ----------------------------------------------------------------------------
# operators

ColumnRule = Callable[[Path], list]


@dataclass(frozen=True, eq=False)
class GradedOperator:
    """Column-finite block operator between BlockSpaces.

    ``column_rule(source_path)`` returns ``[(target_path, Block), ...]``;
    ``row_rule(target_path)`` returns ``[(source_path, Block), ...]`` for
    the same blocks and is ``None`` when the operator is not row-finite.
    """

    domain: BlockSpace
    codomain: BlockSpace
    column_rule: ColumnRule
    row_rule: "ColumnRule | None" = None
    bandwidth: "int | None" = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def column(self, path: Path) -> list:
        path = tuple(path)
        hit = self._cache.get(path)
        if hit is None:
            hit = [(tuple(t), b) for t, b in self.column_rule(path) if not b.is_zero]
            self._cache[path] = hit
        return hit

    def column_support(self, path: Path) -> set:
        return {t for t, _ in self.column(path)}

    def row_support(self, path: Path) -> set:
        if self.row_rule is None:
            raise UnsupportedStructureError(f"operator {self.name or ''} is not row-finite")
        return {s for s, b in self.row_rule(tuple(path)) if not b.is_zero}

    def block_rule(self, target: Path, source: Path) -> Block:
        for t, b in self.column(source):
            if t == tuple(target):
                return b
        return Block.zero(self.codomain.leaf_dim(target), self.domain.leaf_dim(source))

    def apply(self, x: BlockVector) -> BlockVector:
        return apply(self, x)

    def apply_adjoint(self, x: BlockVector) -> BlockVector:
        return apply(adjoint(self), x)

    def __matmul__(self, other):
        if isinstance(other, GradedOperator):
            return compose(self, other)
        if isinstance(other, BlockVector):
            return apply(self, other)
        return NotImplemented


def apply(A: GradedOperator, x: BlockVector) -> BlockVector:
    if x.space != A.domain:
        raise InputError("vector is not in the operator's domain")
    out: dict = {}
    for p, v in x.blocks.items():
        for t, b in A.column(p):
            w = b.act(v)
            if t in out:
                out[t] = out[t] + w
            else:
                out[t] = w
    return BlockVector._raw(A.codomain, out)


def adjoint(A: GradedOperator) -> GradedOperator:
    if A.row_rule is None:
        raise UnsupportedStructureError(f"adjoint of row-infinite operator {A.name}")
    col, row = A.column_rule, A.row_rule
    return GradedOperator(
        A.codomain,
        A.domain,
        lambda p: [(s, b.adj()) for s, b in row(p)],
        lambda p: [(t, b.adj()) for t, b in col(p)],
        A.bandwidth,
        f"({A.name})*" if A.name else "",
    )


def _compose_rule(outer: ColumnRule, inner: ColumnRule) -> ColumnRule:
    def rule(p):
        acc: dict = {}
        for t1, b1 in inner(p):
            for t2, b2 in outer(t1):
                prod = b2 @ b1
                acc[t2] = acc[t2] + prod if t2 in acc else prod
        return list(acc.items())

    return rule


def _compose_row_rule(outer_row: ColumnRule, inner_row: ColumnRule) -> ColumnRule:
    # row blocks are forward blocks, so the product keeps the order outer @ inner
    def rule(t):
        acc: dict = {}
        for m, b1 in outer_row(t):
            for s, b2 in inner_row(m):
                prod = b1 @ b2
                acc[s] = acc[s] + prod if s in acc else prod
        return list(acc.items())

    return rule


def compose(A: GradedOperator, B: GradedOperator) -> GradedOperator:
    """The product ``A B`` (apply B first)."""
    if B.codomain != A.domain:
        raise InputError("compose: codomain of B differs from domain of A")
    col = _compose_rule(A.column, B.column)
    row = None
    if A.row_rule is not None and B.row_rule is not None:
        row = _compose_row_rule(A.row_rule, B.row_rule)
    bw = None if A.bandwidth is None or B.bandwidth is None else A.bandwidth + B.bandwidth
    return GradedOperator(B.domain, A.codomain, col, row, bw, f"{A.name}{B.name}")


def materialize(A: GradedOperator, window: list, codomain_window: "list | None" = None):
    """Dense matrix of ``P_W A|_W`` plus the index map ``path -> (offset, dim)``."""
    if not window:
        raise InputError("empty window")
    cwin = window if codomain_window is None else codomain_window
    src, n = _window_index(A.domain, window)
    dst, m = _window_index(A.codomain, cwin)
    M = np.zeros((m, n), dtype=complex)
    for p, (o, d) in src.items():
        for t, b in A.column(p):
            if t in dst:
                ot, dt = dst[t]
                M[ot:ot + dt, o:o + d] += b.matrix()
    return M, src


def compress_power(A: GradedOperator, emb: "Embedding", n: int) -> np.ndarray:
    """Dense matrix of ``P_H A^n |_H`` by repeated exact application."""
    k = emb.small.dimension
    cols = []
    for j in range(k):
        x = emb.embed(np.eye(k)[:, j])
        for _ in range(n):
            x = apply(A, x)
        cols.append(emb.project(x))
    return np.array(cols).T.reshape(k, k)


def direct_sum(A: GradedOperator, B: GradedOperator) -> GradedOperator:
    dom = BlockSpace.finite(A.domain, B.domain)
    cod = BlockSpace.finite(A.codomain, B.codomain)

    def lift_rule(rule):
        if rule is None:
            return None

        def r(p):
            inner = (rule[0] if p[0] == 0 else rule[1])(p[1:])
            return [((p[0],) + t, b) for t, b in inner]

        return r

    col = lift_rule((A.column, B.column))
    row = None
    if A.row_rule is not None and B.row_rule is not None:
        row = lift_rule((A.row_rule, B.row_rule))
    bw = None if A.bandwidth is None or B.bandwidth is None else max(A.bandwidth, B.bandwidth)
    return GradedOperator(dom, cod, col, row, bw, f"{A.name}+{B.name}")


# ----------------------------------------------------------------------------
# common operators


def identity_operator(space: BlockSpace) -> GradedOperator:
    rule = lambda p: [(p, Block.identity(space.leaf_dim(p)))]
    return GradedOperator(space, space, rule, rule, 0, "I")


def scalar_operator(space: BlockSpace, c) -> GradedOperator:
    c = complex(c)
    col = lambda p: [(p, Block.scalar(c, space.leaf_dim(p)))]
    row = lambda p: [(p, Block.scalar(c, space.leaf_dim(p)))]
    return GradedOperator(space, space, col, row, 0, f"{c}I")


def shift_operator(space: BlockSpace) -> GradedOperator:
    """Unilateral (N) or bilateral (Z) shift of a node with uniform children."""
    if space.kind not in ("N", "Z") or space.heads:
        raise InputError("shift needs an infinite node without head children")
    lo = 0 if space.kind == "N" else None

    def col(p):
        return [((p[0] + 1,) + p[1:], Block.identity(space.leaf_dim(p)))]

    def row(p):
        if lo is not None and p[0] == lo:
            return []
        return [((p[0] - 1,) + p[1:], Block.identity(space.leaf_dim(p)))]

    return GradedOperator(space, space, col, row, 1, "S")


def backward_shift_operator(space: BlockSpace) -> GradedOperator:
    return adjoint(shift_operator(space))


def dense_operator(M, space: "BlockSpace | None" = None, codomain: "BlockSpace | None" = None) -> GradedOperator:
    """A dense matrix as an operator on single-leaf spaces."""
    M = np.asarray(M, dtype=complex)
    dom = space or BlockSpace.leaf(M.shape[1])
    cod = codomain or (dom if M.shape[0] == M.shape[1] and space is not None else BlockSpace.leaf(M.shape[0]))
    if dom.kind != "leaf" or cod.kind != "leaf":
        raise InputError("dense_operator needs leaf spaces")
    blk = Block.dense(M)
    return GradedOperator(dom, cod, lambda p: [((), blk)], lambda p: [((), blk)], 0, "M")


# ----------------------------------------------------------------------------
# embeddings


@dataclass(frozen=True, eq=False)
class Embedding:
    """Isometric inclusion of a small space into a bigger one."""

    small: BlockSpace
    big: BlockSpace
    injection: GradedOperator

    def embed(self, h) -> BlockVector:
        """Image of a coordinate vector (dense on the small space's full window)."""
        if isinstance(h, BlockVector):
            return apply(self.injection, h)
        win = self.small.window(0)
        return apply(self.injection, BlockVector.from_dense(self.small, win, h))

    def project(self, x: BlockVector) -> np.ndarray:
        """Coordinates of ``P_small x`` (small space must be finite)."""
        y = apply(adjoint(self.injection), x)
        return y.to_dense(self.small.window(0))

    def basis(self) -> list:
        k = self.small.dimension
        return [self.embed(np.eye(k)[:, j]) for j in range(k)]


def head_embedding(small: BlockSpace, big: BlockSpace, prefix: Path) -> Embedding:
    """Embedding of ``small`` as the subtree of ``big`` rooted at ``prefix``."""
    prefix = tuple(prefix)
    if big.resolve(prefix) != small:
        raise InputError(f"subtree at {prefix} does not match the small space")
    n = len(prefix)

    def col(p):
        return [(prefix + p, Block.identity(small.leaf_dim(p)))]

    def row(p):
        if p[:n] == prefix:
            return [(p[n:], Block.identity(big.leaf_dim(p)))]
        return []

    inj = GradedOperator(small, big, col, row, 0, "J")
    return Embedding(small, big, inj)


def window_operator(M, domain: BlockSpace, codomain: BlockSpace, dom_window: list, cod_window: list, name: str = "") -> GradedOperator:
    """Operator known only through its dense block ``P_cod M|_dom`` on windows.

    Applying it to a vector supported outside ``dom_window`` raises
    EnlargeWindowError; its range is confined to ``cod_window``.
    """
    M = np.asarray(M, dtype=complex)
    src, n = _window_index(domain, dom_window)
    dst, m = _window_index(codomain, cod_window)
    if M.shape != (m, n):
        raise InputError(f"window matrix has shape {M.shape}, expected {(m, n)}")

    def col(p):
        if p not in src:
            raise EnlargeWindowError(f"{name or 'operator'} unknown outside its window (source {p})")
        o, d = src[p]
        out = []
        for t, (ot, dt) in dst.items():
            blk = M[ot:ot + dt, o:o + d]
            if np.any(blk != 0):
                out.append((t, Block.dense(blk)))
        return out

    def row(t):
        if t not in dst:
            return []
        ot, dt = dst[t]
        out = []
        for p, (o, d) in src.items():
            blk = M[ot:ot + dt, o:o + d]
            if np.any(blk != 0):
                out.append((p, Block.dense(blk)))
        return out

    return GradedOperator(domain, codomain, col, row, None, name)


def window_projection(space: BlockSpace, window: list) -> GradedOperator:
    """Orthogonal projection onto the span of the window leaves."""
    keep = set(window)

    def rule(p):
        return [(p, Block.identity(space.leaf_dim(p)))] if p in keep else []

    return GradedOperator(space, space, rule, rule, 0, "P")


def leaf_prefix_embedding(small_dim: int, big: BlockSpace, path: Path) -> Embedding:
    """Embedding of ``C^small_dim`` as the first coordinates of the leaf at ``path``."""
    path = tuple(path)
    n = big.leaf_dim(path)
    if small_dim > n:
        raise InputError(f"leaf at {path} has dimension {n} < {small_dim}")
    small = BlockSpace.leaf(small_dim)
    J = Block.dense(np.eye(n, small_dim))

    def col(p):
        return [(path, J)]

    def row(t):
        return [((), J)] if t == path else []

    return Embedding(small, big, GradedOperator(small, big, col, row, 0, "J"))
