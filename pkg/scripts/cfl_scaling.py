"""Stability constants of the explicit pressure space as the coarse mesh is refined.

Writes one CSV row per H with gamma_c, lambda_max, tau_max and C1 = H sqrt(lambda_max).
"""
import argparse
import csv
import warnings

from pecem.assembly import assemble_forms
from pecem.cem import build_auxiliary, build_cem_basis
from pecem.coeff import PhysicsConstants, constant_field, generate_streak_field
from pecem.grid import build_grid_pair
from pecem.qh2 import build_qh2_aux, build_qh2_basis, stability_report


def report_for(coarse_n, ratio, seed, contrast, ell, J):
    gp = build_grid_pair(coarse_n, ratio)
    field = constant_field(gp) if seed is None else generate_streak_field(gp, 1.0, contrast, seed)
    forms = assemble_forms(gp, field, PhysicsConstants())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        aux = build_auxiliary(forms, gp, J, J)
    Q1 = build_cem_basis(forms, aux, gp, ell, "Q")
    Q2 = build_qh2_basis(forms, aux, build_qh2_aux(forms, aux, gp, J), gp, ell)
    return stability_report(forms, Q1, Q2, gp.H, 0.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--coarse", type=int, nargs="+", default=[5, 10, 20])
    ap.add_argument("--ratio", type=int, default=4)
    ap.add_argument("--seed", type=int, default=None, help="streak seed; constant field if omitted")
    ap.add_argument("--contrast", type=float, default=1e4)
    ap.add_argument("--ell", type=int, default=2)
    ap.add_argument("--J", type=int, default=2)
    ap.add_argument("--csv", default="cfl_scaling.csv")
    args = ap.parse_args()
    rows, prev = [], None
    for n in args.coarse:
        r = report_for(n, args.ratio, args.seed, args.contrast, args.ell, args.J)
        factor = r.lambda_max / prev if prev else float("nan")
        prev = r.lambda_max
        rows.append([r.H, r.gamma_c, r.lambda_max, r.tau_max, r.C1, factor])
        print(f"H=1/{n:<3d} gamma_c={r.gamma_c:.4f} lambda_max={r.lambda_max:.4e} "
              f"tau_max={r.tau_max:.3e} C1={r.C1:.3f} factor={factor:.3f}")
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["H", "gamma_c", "lambda_max", "tau_max", "C1", "factor"])
        w.writerows([[f"{v:.17g}" for v in row] for row in rows])


if __name__ == "__main__":
    main()
