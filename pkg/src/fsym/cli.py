"""Command-line interface: fit, decompose, simulate, design.

Input tables are JSON documents with r, T, optional scores/labels, and a flat
``counts`` array in lexicographic cell order.  Exit codes: 0 success, 2 unusable
input, 3 non-convergence, 4 invalid model or f-function choice.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import design as design_mod
from .datasets import load_table_document
from .divergences import parse_f
from .fitting import (
    FitError,
    FitResult,
    ModelSpec,
    discrepancy_measure,
    fit_model,
    potential_params,
)
from .simulate import SimConfig, power_study
from .tables import CountTable, TableShape, all_cells, orbit_structure
from .wald import decompose

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_BAD_MODEL = 4

MODEL_NAMES = ("s", "gs", "els", "ls", "me2", "me", "ve", "ce")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _sig3(x: float) -> str:
    return f"{x:.3g}"


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def _read_table(path: str, scores: str | None) -> CountTable:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read table document {path}: {exc}", EXIT_INPUT)
    if scores:
        doc = dict(doc)
        doc["scores"] = [float(s) for s in scores.split(",")]
    try:
        return load_table_document(doc)
    except (ValueError, TypeError) as exc:
        raise CliError(f"bad table document {path}: {exc}", EXIT_INPUT)


def _model_spec(model: str, f_name: str | None) -> ModelSpec:
    model = model.lower()
    if model not in MODEL_NAMES:
        raise CliError(
            f"unknown model {model!r} (choose from {', '.join(MODEL_NAMES)})",
            EXIT_BAD_MODEL,
        )
    ff = None
    if model in design_mod.ASYMMETRY_FAMILIES:
        try:
            ff = parse_f(f_name or "kl")
        except ValueError as exc:
            raise CliError(str(exc), EXIT_BAD_MODEL)
    return ModelSpec(model, ff)


def _fit_report(fit: FitResult, counts: CountTable) -> dict:
    report = {
        "model": fit.spec.family if fit.spec else None,
        "f": fit.spec.ff.name if fit.spec and fit.spec.ff else None,
        "label": fit.spec.label if fit.spec else None,
        "r": counts.shape.r,
        "T": counts.shape.T,
        "scores": list(counts.shape.scores),
        "n": counts.n,
        "g2": fit.g2,
        "df": fit.df,
        "pvalue": fit.pvalue,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "constraint_residual": fit.constraint_residual,
        "counts": [int(c) for c in counts.counts],
        "pihat": fit.pihat.probs.tolist(),
        "mhat": fit.mhat.tolist(),
    }
    if fit.theta_prime is not None:
        report["theta_prime"] = fit.theta_prime.tolist()
        theta = potential_params(fit)
        report["potential"] = [
            {"cell": list(cell), "theta": value} for cell, value in theta.items()
        ]
        report["discrepancies"] = _discrepancy_rows(fit)
    return report


def _discrepancy_rows(fit: FitResult) -> list[dict]:
    """Family-appropriate measures of each cell against its orbit representative."""
    rows = []
    struct = orbit_structure(fit.shape)
    cells = list(all_cells(fit.shape))
    for members in struct.members:
        if len(members) < 2:
            continue
        rep = cells[members[0]]
        for idx in members[1:]:
            cell = cells[idx]
            rows.append(
                {
                    "cell": list(cell),
                    "against": list(rep),
                    "measure": discrepancy_measure(fit, cell, rep),
                }
            )
    return rows


def cmd_fit(args) -> int:
    counts = _read_table(args.input, args.scores)
    spec = _model_spec(args.model, args.f)
    try:
        fit = fit_model(counts, spec, max_iter=args.max_iter)
    except FitError as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    if args.json:
        print(json.dumps(_fit_report(fit, counts), indent=2))
    else:
        print(f"model {spec.label}  r={counts.shape.r} T={counts.shape.T}  n={counts.n:g}")
        print(f"G2 = {_sig3(fit.g2)}  df = {fit.df}  p = {_fmt_p(fit.pvalue)}")
        print(
            f"converged in {fit.iterations} iterations, "
            f"constraint residual {fit.constraint_residual:.2e}"
        )
    return EXIT_OK


def cmd_decompose(args) -> int:
    counts = _read_table(args.input, args.scores)
    try:
        ff = parse_f(args.f or "kl")
    except ValueError as exc:
        raise CliError(str(exc), EXIT_BAD_MODEL)
    try:
        report = decompose(counts, ff, fit_kwargs={"max_iter": args.max_iter})
    except FitError as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    if args.json:
        doc = {
            "f": ff.name,
            "n": report.n,
            "wald": {
                "gs": {"w": report.w_gs, "df": report.df_gs, "pvalue": report.p_gs},
                "me2": {"w": report.w_me2, "df": report.df_me2, "pvalue": report.p_me2},
                "s": {"w": report.w_s, "df": report.df_s, "pvalue": report.p_s},
                "additivity_gap": report.additivity_gap,
                "evaluation_point": report.evaluation_point,
                "ridged": report.ridged,
            },
            "orthogonality_residual": report.orthogonality_residual,
            "g2_partition": [
                {"model": r.family, "g2": r.g2, "df": r.df, "pvalue": r.pvalue}
                for r in report.g2_partition
            ],
            "g2_gap": report.g2_gap,
        }
        print(json.dumps(doc, indent=2))
    else:
        print(f"decomposition of complete symmetry, f = {ff.name}, n = {report.n:g}")
        print(f"{'model':<16s} {'G2':>8s} {'df':>4s} {'p':>8s}")
        for r in report.g2_partition:
            print(f"{r.family:<16s} {_sig3(r.g2):>8s} {r.df:>4d} {_fmt_p(r.pvalue):>8s}")
        print(f"G2 additivity gap |S - gs - me2| = {_sig3(report.g2_gap)}")
        print(f"{'Wald':<16s} {'W':>8s} {'df':>4s} {'p':>8s}   (at {report.evaluation_point} proportions)")
        for label, w, df, p in [
            ("gs", report.w_gs, report.df_gs, report.p_gs),
            ("me2", report.w_me2, report.df_me2, report.p_me2),
            ("s", report.w_s, report.df_s, report.p_s),
        ]:
            print(f"{label:<16s} {_sig3(w):>8s} {df:>4d} {_fmt_p(p):>8s}")
        print(f"Wald additivity gap = {report.additivity_gap:.3e}")
        print(f"orthogonality residual at symmetrized table = {report.orthogonality_residual:.3e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}", EXIT_INPUT)
    try:
        config = SimConfig.from_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(f"bad simulation config: {exc}", EXIT_INPUT)
    overrides = {}
    if args.reps is not None:
        overrides["n_reps"] = args.reps
    if args.full_scale:
        overrides["n_reps"] = 10_000
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    result = power_study(config, workers=args.workers)
    doc = result.to_dict()
    if args.out:
        path = Path(args.out)
        if path.suffix == ".csv":
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["model", "rate", "ci_low", "ci_high", "rejections", "n_used", "failures"]
                )
                for row in doc["rows"]:
                    writer.writerow(
                        [row["model"], row["rate"], row["ci_low"], row["ci_high"],
                         row["rejections"], row["n_used"], row["failures"]]
                    )
        else:
            path.write_text(json.dumps(doc, indent=2) + "\n")
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(
            f"power study: {config.n_reps} replicates of n = {config.n_obs}, "
            f"alpha = {config.alpha}, seed = {config.seed}"
        )
        print(f"{'model':<16s} {'rate':>8s} {'95% CI':>19s} {'failures':>9s}")
        for row in result.rows:
            ci = f"[{row.ci_low:.4f}, {row.ci_high:.4f}]"
            print(f"{row.model:<16s} {row.rate:>8.4f} {ci:>19s} {row.failures:>9d}")
    return EXIT_OK


def cmd_design(args) -> int:
    spec = _model_spec(args.model, None)
    if spec.family not in design_mod.ASYMMETRY_FAMILIES:
        raise CliError(
            f"design matrices exist for {design_mod.ASYMMETRY_FAMILIES}, not {args.model!r}",
            EXIT_BAD_MODEL,
        )
    scores = tuple(float(s) for s in args.scores.split(",")) if args.scores else None
    try:
        shape = TableShape(args.r, args.T, scores)
        ds = design_mod.design_matrix(shape, spec.family)
    except (ValueError, design_mod.ConfigurationError) as exc:
        raise CliError(str(exc), EXIT_INPUT)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "X.csv", ds.X, delimiter=",")
    np.savetxt(out / "Xs.csv", ds.Xs, delimiter=",", fmt="%d")
    np.savetxt(out / "U.csv", ds.U, delimiter=",")
    np.savetxt(out / "M.csv", design_mod.moment_matrix(shape), delimiter=",")
    manifest = {
        "r": shape.r,
        "T": shape.T,
        "scores": list(shape.scores),
        "family": spec.family,
        "columns": {name: [sl.start, sl.stop] for name, sl in ds.column_layout.items()},
        "d1": ds.d1,
        "d2": ds.d2,
        "n_orbits": shape.n_orbits,
        "pair_chain": [list(p) for p in ds.v2_chain],
    }
    (out / "layout.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote X ({ds.X.shape[0]}x{ds.X.shape[1]}), Xs, U ({ds.U.shape[1]} cols), M to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsym",
        description="Fit symmetry and f-divergence asymmetry models to r^T ordinal tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model to a table document")
    p_fit.add_argument("--input", required=True, help="JSON table document")
    p_fit.add_argument("--model", required=True, help="s, gs, els, ls, me2, me, ve, ce")
    p_fit.add_argument("--f", help="kl, pearson, hellinger, or power:LAMBDA")
    p_fit.add_argument("--scores", help="comma-separated category scores")
    p_fit.add_argument("--max-iter", type=int, default=200)
    p_fit.add_argument("--json", action="store_true", help="machine-readable report")
    p_fit.set_defaults(func=cmd_fit)

    p_dec = sub.add_parser("decompose", help="symmetry decomposition report")
    p_dec.add_argument("--input", required=True)
    p_dec.add_argument("--f", help="f-function for the asymmetry component")
    p_dec.add_argument("--scores", help="comma-separated category scores")
    p_dec.add_argument("--max-iter", type=int, default=200)
    p_dec.add_argument("--json", action="store_true")
    p_dec.set_defaults(func=cmd_decompose)

    p_sim = sub.add_parser("simulate", help="empirical power study from a JSON config")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--reps", type=int, help="override replicate count")
    p_sim.add_argument("--full-scale", action="store_true", help="10,000 replicates")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--out", help="write results to FILE (.json or .csv)")
    p_sim.add_argument("--json", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_des = sub.add_parser("design", help="dump design matrices as CSV")
    p_des.add_argument("--r", type=int, required=True)
    p_des.add_argument("--T", type=int, required=True)
    p_des.add_argument("--model", required=True)
    p_des.add_argument("--scores")
    p_des.add_argument("--out", required=True, help="output directory")
    p_des.set_defaults(func=cmd_design)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
