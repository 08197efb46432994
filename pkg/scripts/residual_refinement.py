#!/usr/bin/env python3
"""Convergence-order study for the angle evolution identity.

Computes the pointwise residual of (d/dt - Lap) cos(a) =
|dJ|^2 cos(a) + lam sin^2(a) cos(a) on three consecutive flow states and
reports how its max norm shrinks under grid refinement, for a torus graph
in the flat 4-torus and a perturbed degree-1 curve in CP^2.

Usage: python3 scripts/residual_refinement.py [--case torus|sphere|both]
"""

import argparse

import numpy as np

from kflow.verify import check_residual_refinement_sphere, check_residual_refinement_torus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", choices=("torus", "sphere", "both"), default="both")
    args = ap.parse_args()

    checks = []
    if args.case in ("torus", "both"):
        checks.append(check_residual_refinement_torus)
    if args.case in ("sphere", "both"):
        checks.append(check_residual_refinement_sphere)
    ok_all = True
    for check in checks:
        name, ok, detail = check()
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    raise SystemExit(0 if ok_all else 1)


if __name__ == "__main__":
    main()
