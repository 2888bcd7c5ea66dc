#!/usr/bin/env python3
"""Walk through the main constructions on small examples.

Usage: python scripts/demo.py [--depth N]
"""

import argparse

import numpy as np

from qdilation import numerics as nm
from qdilation.ando import q_ando_unitary
from qdilation.dilate import min_unitary_dilation, schaffer_isometric
from qdilation.graded import compress_power
from qdilation.lift import q_commutant_lift
from qdilation.verify import find_q_witness


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--depth", type=int, default=4)
    args = ap.parse_args()
    np.set_printoptions(precision=4, suppress=True)

    T = np.array([[0.3, 0.5], [0.0, -0.4]])
    print("T =\n", T)
    V = schaffer_isometric(T)
    U = min_unitary_dilation(T)
    for n in range(1, 4):
        err_v = nm.opnorm(compress_power(V.operator, V.base_embedding, n) - np.linalg.matrix_power(T, n))
        err_u = nm.opnorm(compress_power(U.operator, U.base_embedding, n) - np.linalg.matrix_power(T, n))
        print(f"n={n}: |P V^n - T^n| = {err_v:.1e}, |P U^n - T^n| = {err_u:.1e}")

    # a q-commuting pair: T2 T1 = Q T1 T2 with Q = -iI
    T1 = np.array([[0, 1], [0, 0]], dtype=complex)
    T2 = np.diag([1, 1j])
    Q = -1j * np.eye(2)
    print("\n|T2 T1 - Q T1 T2| =", nm.opnorm(T2 @ T1 - Q @ T1 @ T2))

    V1 = schaffer_isometric(T1)
    lift, _ = q_commutant_lift(T1, T2, Q, V1, 1j, "i", args.depth)
    print(f"lifting of T2 along V1: norm {lift.norm_bound:.6f} (|T2| = {nm.opnorm(T2):.6f})")
    print(lift.report.text())

    res = q_ando_unitary(T1, T2, Q, 1j, "QT1T2", args.depth)
    print("\nunitary pair with U2 U1 = Qbar U1 U2:", "PASS" if res.passed else "FAIL")
    print(res.report.text())

    A = np.array([[0, 0], [1, 1]])
    B = np.array([[-2, 0], [1, 1]])
    print("\nwhere can Q sit in B A = ...?")
    for slot in ("left", "middle", "right"):
        w = find_q_witness(A, B, slot)
        print(f"  {slot:6s}: residual {w.residual:.3e} ({'feasible' if w.feasible else 'infeasible'})")


if __name__ == "__main__":
    main()
