"""Scenario runner and fixture registry.

A scenario is a JSON object with lower-kebab-case keys::

    {"mode": "ando-unitary", "relation": "QT1T2", "T1": [[[0, 0], [1, 0]], ...],
     "Q": ..., "q": [0, 1], "depth": 4, "tol": 1e-8}

Complex scalars are ``[re, im]`` pairs and matrices are row-major lists.
Exit status: 0 when every check passes, 1 when a check fails, 2 on input,
precondition or window errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import numerics as nm
from .ando import q_ando_coisometric, q_ando_isometric, q_ando_unitary
from .dilate import (
    lemma_coisometry_S,
    min_coisometric_extension,
    min_unitary_dilation,
    schaffer_isometric,
)
from .graded import (
    Block,
    BlockSpace,
    BlockVector,
    EnlargeWindowError,
    GradedOperator,
    adjoint,
    backward_shift_operator,
    compress_power,
    shift_operator,
)
from .lift import q_commutant_extend, q_commutant_lift, q_intertwine_lift, unitary_q_commutant
from .verify import ResidualReport, check_q_commutation, find_q_witness, window_basis

__all__ = ["Scenario", "FIXTURES", "list_fixtures", "load_fixture", "run_scenario", "main"]

MODES = (
    "ando-unitary",
    "ando-isometric",
    "ando-coisometric",
    "q-commutant-lift",
    "q-commutant-extend",
    "q-intertwine-lift",
    "unitary-q-commutant",
    "lemma-S",
    "dilate",
    "verify-only",
    "find-q",
)
RELATIONS = ("QT1T2", "T1QT2", "T1T2Q")

# relation name -> engine variant, reading the relation as "T2 T1 = ..." with
# (T1, T2) = (T, X) for liftings and (X, T) for extensions
LIFT_VARIANT = {"QT1T2": "i", "T1QT2": "ii", "T1T2Q": "iii"}
EXTEND_VARIANT = {"QT1T2": "iii", "T1QT2": "ii", "T1T2Q": "i"}


class ScenarioError(nm.InputError):
    """Malformed scenario or unknown fixture."""


def default_tol() -> float:
    env = os.environ.get("DILATION_TOL")
    if env:
        try:
            return float(env)
        except ValueError:
            raise ScenarioError(f"DILATION_TOL={env!r} is not a number") from None
    return nm.TOL


@dataclass
class Scenario:
    mode: str
    relation: "str | None" = None
    T1: "np.ndarray | None" = None
    T2: "np.ndarray | None" = None
    X: "np.ndarray | None" = None
    Q: "np.ndarray | None" = None
    q: complex = 1.0
    depth: "int | None" = None
    tol: "float | None" = None
    rank_tol: float = nm.RANK_TOL
    variant: "str | None" = None
    fixture: "str | None" = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if self.relation is not None and self.relation not in RELATIONS:
            raise ScenarioError(f"unknown relation {self.relation!r}")
        mats = {k: getattr(self, k) for k in ("T1", "T2", "X", "Q") if getattr(self, k) is not None}
        dims = {m.shape for m in mats.values()}
        for k, m in mats.items():
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ScenarioError(f"{k} must be square, got shape {m.shape}")
        if len(dims) > 1:
            raise ScenarioError(f"operator dimensions disagree: {sorted(dims)}")
        if self.depth is not None and self.depth < 0:
            raise ScenarioError("depth must be nonnegative")

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            key = f.name.replace("_", "-")
            if isinstance(v, np.ndarray):
                v = encode_matrix(v)
            elif f.name == "q":
                v = encode_complex(v)
            out[key] = v
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        known = {f.name.replace("_", "-"): f.name for f in fields(cls)}
        kw = {}
        for key, v in data.items():
            if key not in known:
                raise ScenarioError(f"unknown scenario field {key!r}")
            name = known[key]
            if name in ("T1", "T2", "X", "Q"):
                v = decode_matrix(v, name)
            elif name == "q":
                v = decode_complex(v, "q")
            kw[name] = v
        if "mode" not in kw:
            raise ScenarioError("scenario needs a mode")
        s = cls(**kw)
        s.validate()
        return s


def encode_complex(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def decode_complex(v, what: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(a, (int, float)) for a in v):
        return complex(v[0], v[1])
    raise ScenarioError(f"{what}: expected a number or [re, im], got {v!r}")


def encode_matrix(M) -> list:
    M = nm.as_matrix(M)
    return [[encode_complex(z) for z in row] for row in M]


def decode_matrix(v, what: str) -> np.ndarray:
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        raise ScenarioError(f"{what}: expected a list of rows")
    rows = [[decode_complex(z, what) for z in r] for r in v]
    if len({len(r) for r in rows}) != 1:
        raise ScenarioError(f"{what}: ragged rows")
    return np.array(rows, dtype=complex)


# ----------------------------------------------------------------------------
# fixtures


def _ell2() -> BlockSpace:
    return BlockSpace.nat(BlockSpace.leaf(1))


def tail_projection(space: BlockSpace, k: int) -> GradedOperator:
    """Projection of l2(N) killing the first k coordinates."""

    def rule(p):
        return [(p, Block.identity(1))] if p[0] >= k else []

    return GradedOperator(space, space, rule, rule, 0, f"P{k}")


def shift_pair() -> dict:
    """L, R and the projections Q (kills e_0) and Q' (kills e_0, e_1) on l2(N)."""
    sp = _ell2()
    return {
        "space": sp,
        "L": backward_shift_operator(sp),
        "R": shift_operator(sp),
        "Q": tail_projection(sp, 1),
        "Qp": tail_projection(sp, 2),
    }


_S5 = np.sqrt(3 + np.sqrt(5))

FIXTURES = {
    "example-2.2": {
        "mode": "find-q",
        "T1": np.array([[0, 0], [1, 1]], dtype=complex),
        "T2": np.array([[-2, 0], [1, 1]], dtype=complex),
        "Q": np.diag([-1.0, 1.0]).astype(complex),
        "Qp": np.diag([0.0, 1.0]).astype(complex),
        "relation": "T1T2Q",
        "q": 1.0,
    },
    "example-2.3": {"mode": "verify-only", "depth": 50},
    "example-2.4": {
        "mode": "find-q",
        "T1": np.array([[0, 1], [0, 0]], dtype=complex),
        "T2": np.array([[0, 0], [2, 0]], dtype=complex),
    },
    "lemma-2.5-shift": {"mode": "lemma-S", "depth": 50},
    "q-pair": {
        "mode": "ando-unitary",
        "T1": np.array([[0, 1], [0, 0]], dtype=complex),
        "T2": np.diag([1, 1j]).astype(complex),
        "Q": -1j * np.eye(2, dtype=complex),
        "q": 1j,
        "relation": "QT1T2",
        "depth": 4,
    },
    "commuting-classic": {
        "mode": "ando-unitary",
        "T1": np.array([[0.5]], dtype=complex),
        "T2": np.array([[0.5]], dtype=complex),
        "Q": np.eye(1, dtype=complex),
        "q": 1.0,
        "relation": "QT1T2",
        "depth": 4,
    },
}

CONTRACTIVE_MODES = {m for m in MODES if m not in ("find-q", "verify-only", "lemma-S")}


def list_fixtures() -> list:
    return sorted(FIXTURES)


def load_fixture(name: str, mode: "str | None" = None) -> Scenario:
    """Scenario of a registered fixture.

    For modes that need contractions the matrices of example-2.2 are
    divided by their operator norms.
    """
    if name not in FIXTURES:
        raise ScenarioError(f"unknown fixture {name!r}; known: {', '.join(list_fixtures())}")
    fx = FIXTURES[name]
    mode = mode or fx["mode"]
    kw = {k: fx[k] for k in ("T1", "T2", "X", "Q", "relation", "q", "depth") if k in fx}
    if name == "example-2.2" and mode in CONTRACTIVE_MODES:
        kw["T1"] = kw["T1"] / nm.opnorm(kw["T1"])
        kw["T2"] = kw["T2"] / nm.opnorm(kw["T2"])
    s = Scenario(mode=mode, fixture=name, **kw)
    s.validate()
    return s


# ----------------------------------------------------------------------------
# dispatch


def _need(s: Scenario, *names) -> list:
    out = []
    for n in names:
        v = getattr(s, n)
        if v is None:
            raise ScenarioError(f"mode {s.mode} needs {n}")
        out.append(v)
    return out


def _power_identities(A, emb, T, depth: int, tol: float, name: str, rep: ResidualReport) -> None:
    worst = max(nm.opnorm(compress_power(A, emb, n) - np.linalg.matrix_power(T, n)) for n in range(depth + 1))
    rep.add(name, worst, f"n<={depth}", tol)


def _run_dilate(s: Scenario, tol: float, depth: int):
    (T,) = _need(s, "T1")
    rep, log = ResidualReport(), []
    iso = schaffer_isometric(T, s.rank_tol, tol)
    uni = min_unitary_dilation(T, s.rank_tol, tol)
    co = min_coisometric_extension(T, s.rank_tol, tol)
    for label, d in (("schaffer-isometric", iso), ("unitary-dilation", uni), ("coisometric-extension", co)):
        log.append((label, d.certificate))
        rep.extend(d.certificate, prefix=f"{label}:")
    _power_identities(iso.operator, iso.base_embedding, T, depth, tol, "V-identities", rep)
    _power_identities(uni.operator, uni.base_embedding, T, depth, tol, "U-identities", rep)
    _power_identities(adjoint(uni.operator), uni.base_embedding, T.conj().T, depth, tol, "U*-identities", rep)
    _power_identities(co.operator, co.base_embedding, T, depth, tol, "W-identities", rep)
    return rep, log, {}


def _run_find_q(s: Scenario, tol: float, depth: int):
    T1, T2 = _need(s, "T1", "T2")
    rep, info = ResidualReport(), {}
    for slot in ("left", "middle", "right"):
        w = find_q_witness(T1, T2, slot, tol)
        # feasibility is an outcome, not a failure: the residual is reported
        rep.add(f"witness-{slot}", w.residual, "feasible" if w.feasible else "infeasible", float("inf"))
        info[f"{slot}-feasible"] = w.feasible
        info[f"{slot}-Q"] = encode_matrix(w.Q)
    return rep, [], info


def _run_example_23(tol: float, depth: int):
    ops = shift_pair()
    L, R, Q, Qp = ops["L"], ops["R"], ops["Q"], ops["Qp"]
    win = window_basis(ops["space"], depth)
    rep = ResidualReport()
    rep.extend(check_q_commutation(L, R, Q, "QAB", win, 0.0, name="RL=QLR"))
    rep.extend(check_q_commutation(L, R, Qp, "AQB", win, 0.0, name="RL=LQ'R"))
    rep.extend(check_q_commutation(L, R, Q, "ABQ", win, 0.0, name="RL=LRQ"))
    return rep, [], {}


def _run_verify_only(s: Scenario, tol: float, depth: int):
    if s.fixture == "example-2.3":
        return _run_example_23(tol, depth)
    T1, T2, Q = _need(s, "T1", "T2", "Q")
    relation = s.relation or "QT1T2"
    target = {"QT1T2": Q @ T1 @ T2, "T1QT2": T1 @ Q @ T2, "T1T2Q": T1 @ T2 @ Q}[relation]
    rep = ResidualReport()
    rep.add(f"relation-{relation}", nm.opnorm(T2 @ T1 - target), "matrices", tol)
    return rep, [], {}


def _run_lemma(s: Scenario, tol: float, depth: int):
    if s.T1 is not None:
        raise ScenarioError("lemma-S runs on the shift model only (T = L, Q = R on l2)")
    ops = shift_pair()
    res = lemma_coisometry_S(ops["L"], ops["R"], depth, tol)
    sp = ops["space"]
    exact = 0.0
    for n in range(depth):
        img = res.S0.apply(BlockVector.basis(sp, (n,), 0))
        # 0-based indices: e_n -> e_(2n+2), i.e. e_n -> e_(2n+1) counting from 1
        want = BlockVector.basis(sp, (2 * n + 2,), 0)
        exact = max(exact, (img - want).norm())
    rep = ResidualReport()
    rep.extend(res.report)
    rep.add("S0-on-basis", exact, f"e_n, n<{depth}", 0.0)
    return rep, [], {"purity": res.wold.purity_certificate}


def _run_lift(s: Scenario, tol: float, depth: int):
    T, X, Q = _need(s, "T1", "X", "Q")
    q = s.q
    if s.mode == "q-commutant-lift":
        variant = s.variant or LIFT_VARIANT[s.relation or "QT1T2"]
        V = schaffer_isometric(T, s.rank_tol, tol)
        lift, _ = q_commutant_lift(T, X, Q, V, q, variant, depth, tol)
        return lift.report, [("schaffer-isometric", V.certificate)], {"variant": variant, "norm-bound": lift.norm_bound}
    if s.mode == "q-commutant-extend":
        variant = s.variant or EXTEND_VARIANT[s.relation or "T1T2Q"]
        W = min_coisometric_extension(T, s.rank_tol, tol)
        ext, _ = q_commutant_extend(T, X, Q, W, q, variant, depth, tol)
        return ext.report, [("coisometric-extension", W.certificate)], {"variant": variant, "norm-bound": ext.norm_bound}
    if s.mode == "q-intertwine-lift":
        (T2,) = _need(s, "T2")
        variant = s.variant or LIFT_VARIANT[s.relation or "QT1T2"]
        V1 = schaffer_isometric(T, s.rank_tol, tol)
        V2 = schaffer_isometric(T2, s.rank_tol, tol)
        lift, _ = q_intertwine_lift(T, T2, X, Q, V1, V2, q, variant, depth, tol)
        log = [("schaffer-T1", V1.certificate), ("schaffer-T2", V2.certificate)]
        return lift.report, log, {"variant": variant, "norm-bound": lift.norm_bound}
    # unitary-q-commutant
    rel = {"QT1T2": "XT=QTX", "T1T2Q": "XT=TXQ"}.get(s.relation or "QT1T2")
    if rel is None:
        raise ScenarioError("unitary-q-commutant supports relations QT1T2 and T1T2Q")
    res = unitary_q_commutant(T, X, Q, q, rel, depth, tol)
    return res.report, list(res.stagelog), {"relation": rel}


def _run_ando(s: Scenario, tol: float, depth: int):
    T1, T2, Q = _need(s, "T1", "T2", "Q")
    if s.mode == "ando-isometric":
        res = q_ando_isometric(T1, T2, Q, s.q, depth, tol)
    elif s.mode == "ando-coisometric":
        res = q_ando_coisometric(T1, T2, Q, s.q, depth, tol)
    else:
        relation = s.relation or "QT1T2"
        if relation == "T1QT2":
            raise ScenarioError("ando-unitary supports relations QT1T2 and T1T2Q")
        res = q_ando_unitary(T1, T2, Q, s.q, relation, depth, tol)
    return res.report, list(res.stagelog), {}


DEFAULT_DEPTH = {"ando-unitary": 4, "ando-isometric": 6, "ando-coisometric": 6, "lemma-S": 50, "verify-only": 50}


def run_scenario(s: Scenario, tol: "float | None" = None, depth: "int | None" = None) -> dict:
    """Run a scenario and return the serialized report (``pass`` decides the exit code)."""
    s.validate()
    tol = tol if tol is not None else (s.tol if s.tol is not None else default_tol())
    depth = depth if depth is not None else (s.depth if s.depth is not None else DEFAULT_DEPTH.get(s.mode, 6))
    if s.mode == "dilate":
        rep, log, info = _run_dilate(s, tol, depth)
    elif s.mode == "find-q":
        rep, log, info = _run_find_q(s, tol, depth)
    elif s.mode == "verify-only":
        rep, log, info = _run_verify_only(s, tol, depth)
    elif s.mode == "lemma-S":
        rep, log, info = _run_lemma(s, tol, depth)
    elif s.mode.startswith("ando"):
        rep, log, info = _run_ando(s, tol, depth)
    else:
        rep, log, info = _run_lift(s, tol, depth)
    out = {"scenario": s.to_json(), "tol": tol, "depth": depth}
    out.update(rep.to_dict())
    out["stagelog"] = [dict(stage=name, **r.to_dict()) for name, r in log]
    out["info"] = info
    return out


def report_text(report: dict) -> str:
    lines = []
    sc = report["scenario"]
    lines.append(f"mode {sc['mode']}" + (f", fixture {sc['fixture']}" if "fixture" in sc else ""))
    for st in report["stagelog"]:
        verdict = "PASS" if st["pass"] else "FAIL"
        lines.append(f"  stage {st['stage']}: {verdict}")
    for c in report["checks"]:
        verdict = "PASS" if c["pass"] else "FAIL"
        lines.append(f"[{verdict}] {c['name']}: {c['max-residual']:.3e} (tol {c['tolerance']:.1e}; {c['window']})")
    lines.append("overall: " + ("PASS" if report["pass"] else "FAIL"))
    return "\n".join(lines)


def _json_default(o):
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, complex):
        return encode_complex(o)
    raise TypeError(f"not serializable: {type(o)}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdilation", description="Run a dilation scenario and print its residual report.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="JSON scenario file")
    src.add_argument("--fixture", help="registered fixture name")
    p.add_argument("--mode", choices=MODES, help="override the fixture's default mode")
    p.add_argument("--depth", type=int, help="certificate depth")
    p.add_argument("--tol", type=float, help="residual tolerance (default: DILATION_TOL or 1e-8)")
    p.add_argument("--json", dest="json_out", help="write the JSON report here ('-' for stdout)")
    p.add_argument("--quiet", action="store_true", help="print only the overall verdict")
    p.add_argument("--list-fixtures", action="store_true", help="list fixture names and exit")
    return p


def main(argv: "list | None" = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_fixtures:
        print("\n".join(list_fixtures()))
        return 0
    try:
        if args.scenario:
            with open(args.scenario) as fh:
                s = Scenario.from_json(json.load(fh))
            if args.mode:
                s.mode = args.mode
                s.validate()
        elif args.fixture:
            s = load_fixture(args.fixture, args.mode)
        else:
            print("error: give --scenario, --fixture or --list-fixtures", file=sys.stderr)
            return 2
        report = run_scenario(s, args.tol, args.depth)
    except (OSError, json.JSONDecodeError, nm.InputError, EnlargeWindowError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.json_out:
        text = json.dumps(report, indent=2, default=_json_default)
        if args.json_out == "-":
            print(text)
        else:
            with open(args.json_out, "w") as fh:
                fh.write(text + "\n")
    if args.quiet:
        print("PASS" if report["pass"] else "FAIL")
    elif args.json_out != "-":
        print(report_text(report))
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
