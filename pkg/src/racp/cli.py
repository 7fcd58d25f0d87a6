"""Command-line front end: ``racp {generate,solve,spectrum,partition,compare}``.

Every command writes into ``--out`` (created if needed).  JSON files carry a
``schema`` tag and validate against the schemas shipped in ``racp/schemas``.
Unless ``--no-plot`` is given, a PNG figure is written next to the CSV/JSON.

Settings are resolved as command-line flags > ``--config`` JSON file >
built-in defaults.  The config file is a flat object whose keys are the
long flag names with dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .augmentation import LocalBlockError
from .krylov import GmresConfig, solve_saddle
from .partition import assign_multipliers, comm_volume, edge_cut, partition_rows
from .preconditioners import FactorizationError, build_preconditioner
from .problem_gen import (GeneratorError, GridParams, SaddleSystem, generate_floating_side,
                          generate_fracture_cube, generate_random_spd_saddle, verify_system)
from .sparse import DenseCapExceeded, DimensionError, MatrixMarketError, read_matrix_market, write_matrix_market

RESULT_SCHEMA = "racp.result/1"
RECIPES = {"local": "local_solve", "norm": "norm_ratio", "global": "global_gamma"}
INNERS = {"exact": "exact_factor", "jacobi": "jacobi", "ic0": "ic0"}
OMEGA_SWEEP = (0.01, 0.1, 1.0, 10.0, 100.0)

DEFAULTS = {
    "gen": None, "a": None, "b": None,
    "nx": 2, "ny": 2, "nz": 2, "e": 1.0, "nu": 0.25, "distortion": 0.0,
    "fracture_axis": "x", "fracture_index": 1, "dirichlet": None,
    "n_u": 60, "n_t": 12, "seed": 0,
    "precond": "racp-m", "c_recipe": "norm", "omega": 1.0, "inner": "exact",
    "restart": 100, "tol": 1e-8, "maxit": 1000,
    "out": "racp_out", "no_plot": False,
    "procs": 4, "refine": False, "concurrent": False,
    "preset": "omega",
}


class UsageError(ValueError):
    """Malformed command-line or config input."""


# -- argument parsing --------------------------------------------------------

def _positive(kind):
    def conv(s):
        v = kind(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return conv


def _input_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--gen", choices=["fracture_cube", "floating_side", "random"],
                     help="generate the system instead of reading it")
    src.add_argument("--a", help="Matrix Market file holding A (requires --b)")
    p.add_argument("--b", help="Matrix Market file holding B")
    g = p.add_argument_group("generator")
    g.add_argument("--nx", type=_positive(int))
    g.add_argument("--ny", type=_positive(int))
    g.add_argument("--nz", type=_positive(int))
    g.add_argument("--e", type=float, help="Young's modulus")
    g.add_argument("--nu", type=float, help="Poisson ratio")
    g.add_argument("--distortion", type=float)
    g.add_argument("--fracture-axis", choices=["x", "y", "z"])
    g.add_argument("--fracture-index", type=int)
    g.add_argument("--dirichlet", help="comma-separated faces, e.g. x0,x1")
    g.add_argument("--n-u", type=_positive(int), help="random generator: displacement unknowns")
    g.add_argument("--n-t", type=_positive(int), help="random generator: multipliers")
    g.add_argument("--seed", type=int)


def _precond_args(p, choices):
    p.add_argument("--precond", choices=choices)
    p.add_argument("--c-recipe", choices=sorted(RECIPES))
    p.add_argument("--omega", type=_positive(float))
    p.add_argument("--inner", choices=sorted(INNERS))


def _gmres_args(p):
    p.add_argument("--restart", type=_positive(int))
    p.add_argument("--tol", type=_positive(float))
    p.add_argument("--maxit", type=_positive(int))


def _common_args(p):
    p.add_argument("--out")
    p.add_argument("--config", help="JSON file with default settings")
    p.add_argument("--no-plot", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="racp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"racp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write A.mtx, B.mtx and meta.json")
    _input_args(p)
    _common_args(p)

    p = sub.add_parser("solve", help="GMRES on the saddle system with one preconditioner")
    _input_args(p)
    _precond_args(p, ["racp-m", "racp-ma", "mcp", "none"])
    _gmres_args(p)
    _common_args(p)

    p = sub.add_parser("spectrum", help="eigenvalues of the preconditioned operator and bounds")
    _input_args(p)
    _precond_args(p, ["racp-m", "racp-ma", "ideal-hat", "ideal-bar"])
    _common_args(p)

    p = sub.add_parser("partition", help="row partition and multiplier ownership")
    _input_args(p)
    p.add_argument("--procs", type=_positive(int))
    p.add_argument("--refine", action="store_true", default=None)
    p.add_argument("--concurrent", action="store_true", default=None)
    _common_args(p)

    p = sub.add_parser("compare", help="run a preset list of preconditioner specs")
    _input_args(p)
    _precond_args(p, ["racp-m", "racp-ma", "mcp", "none"])
    _gmres_args(p)
    p.add_argument("--preset", choices=["omega", "variants", "mcp"],
                   help="omega: sweep over omega; variants: M vs Ma; mcp: RACP vs MCP")
    _common_args(p)
    return parser


def resolve_args(argv=None) -> argparse.Namespace:
    """Parse ``argv`` and fill unset options from the config file, then defaults."""
    args = build_parser().parse_args(argv)
    config = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(config) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    if args.a is not None and args.gen is not None:
        raise UsageError("--a/--b and --gen are mutually exclusive")
    if (args.a is None) != (args.b is None):
        raise UsageError("--a and --b must be given together")
    if args.a is None and args.gen is None:
        raise UsageError("give either --gen or --a/--b")
    if getattr(args, "omega", 1.0) <= 0:
        raise UsageError("omega must be positive")
    return args


# -- system loading ----------------------------------------------------------

def _grid_params(args) -> GridParams:
    faces = tuple(f.strip() for f in args.dirichlet.split(",") if f.strip()) if args.dirichlet else None
    if faces is None:
        faces = ("x0",) if args.gen == "floating_side" else ("x0", "x1")
    return GridParams(nx=args.nx, ny=args.ny, nz=args.nz, young_modulus=args.e,
                      poisson_ratio=args.nu, fracture_axis=args.fracture_axis,
                      fracture_index=args.fracture_index, dirichlet_faces=faces,
                      distortion=args.distortion)


def load_system(args) -> SaddleSystem:
    if args.gen == "fracture_cube":
        return generate_fracture_cube(_grid_params(args))
    if args.gen == "floating_side":
        return generate_floating_side(_grid_params(args))
    if args.gen == "random":
        return generate_random_spd_saddle(args.n_u, args.n_t, seed=args.seed)
    a = read_matrix_market(args.a)
    b = read_matrix_market(args.b)
    labels = {"generator": "matrix_market", "params": {"a": str(args.a), "b": str(args.b)}}
    return SaddleSystem(a, b, None, labels)


def _system_meta(s: SaddleSystem) -> dict:
    return {"generator": s.labels.get("generator", "unknown"), "n_u": s.n_u, "n_t": s.n_t,
            "nnz_a": s.a.nnz, "nnz_b": s.b.nnz, "params": s.labels.get("params", {})}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- solving -----------------------------------------------------------------

def run_spec(system: SaddleSystem, name: str, recipe: str, omega: float, inner: str,
             cfg: GmresConfig, label: str = ""):
    """Build one preconditioner and run GMRES; returns ``(record, history)``.

    A factorization failure while building the preconditioner produces a
    record with ``converged=False`` and no history rather than an exception.
    """
    is_racp = name.startswith("racp")
    record = {
        "schema": RESULT_SCHEMA,
        "label": label or name,
        "system": _system_meta(system),
        "preconditioner": {"name": name,
                           "recipe": RECIPES.get(recipe, recipe) if is_racp else None,
                           "omega": float(omega) if is_racp else None,
                           "inner": inner if name != "none" else None,
                           "flops_per_apply": None},
        "n_it": None, "converged": False, "c_app": None, "C_s": None,
        "final_relative_residual": None, "wall_time": 0.0, "reason": "", "history_csv": None,
    }
    t0 = time.perf_counter()
    try:
        p = build_preconditioner(system, name, RECIPES.get(recipe, recipe), omega, INNERS.get(inner, inner))
    except FactorizationError as exc:
        record["reason"] = "leading block singular" if name == "mcp" else f"factorization failed: {exc}"
        record["wall_time"] = time.perf_counter() - t0
        return record, None
    except LocalBlockError as exc:
        record["reason"] = f"augmentation failed: {exc}"
        record["wall_time"] = time.perf_counter() - t0
        return record, None
    _, hist = solve_saddle(system, p, cfg)
    record.update({
        "n_it": hist.iterations, "converged": hist.converged, "c_app": hist.c_app,
        "C_s": hist.solve_cost_Cs,
        "final_relative_residual": float(hist.final_true / hist.residual_norms[0]),
        "reason": "converged" if hist.converged else hist.reason,
        "wall_time": time.perf_counter() - t0,
    })
    record["preconditioner"]["flops_per_apply"] = int(p.flops_per_apply)
    return record, hist


def _gmres_cfg(args) -> GmresConfig:
    return GmresConfig(restart=args.restart, rel_tol=args.tol, max_iters=args.maxit)


# -- commands ----------------------------------------------------------------

def cmd_generate(args) -> dict:
    system = load_system(args)
    out = _out_dir(args)
    write_matrix_market(system.a, out / "A.mtx", comment="leading block A")
    write_matrix_market(system.b, out / "B.mtx", comment="constraint block B")
    try:
        report = verify_system(system)
    except DenseCapExceeded:
        report = None
    meta = {"schema": "racp.meta/1", "labels": system.labels, "verify": report}
    _write_json(out / "meta.json", meta)
    return meta


def cmd_solve(args) -> dict:
    system = load_system(args)
    out = _out_dir(args)
    record, hist = run_spec(system, args.precond, args.c_recipe, args.omega, args.inner, _gmres_cfg(args))
    if hist is not None:
        hist.to_csv(out / "history.csv")
        record["history_csv"] = "history.csv"
        if not args.no_plot:
            from .plotting import plot_convergence
            plot_convergence({record["label"]: hist}, out / "convergence.png", args.tol)
    _write_json(out / "result.json", record)
    return record


def cmd_spectrum(args) -> dict:
    from .preconditioners import RacpPreconditioner
    from .spectral import ideal_report, verify_preconditioner

    system = load_system(args)
    out = _out_dir(args)
    if args.precond in ("ideal-hat", "ideal-bar"):
        report = ideal_report(system, args.precond.split("-")[1])
    else:
        variant = "M" if args.precond == "racp-m" else "Ma"
        p = RacpPreconditioner.build(system, variant, RECIPES[args.c_recipe], args.omega, INNERS[args.inner])
        report = verify_preconditioner(system, p)
    data = report.to_json()
    _write_json(out / "spectrum.json", data)
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "inside"])
        for (re, im), ok in zip(data["eigenvalues"], data["containment"]):
            w.writerow([f"{re:.16e}", f"{im:.16e}", int(ok)])
    with open(out / "bounds.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        for key, val in (data["bounds"] or {}).items():
            w.writerow([key, f"{val:.16e}"])
        for key, val in _flat_intervals(data["intervals"]):
            w.writerow([key, "" if val is None else f"{val:.16e}"])
    if not args.no_plot:
        from .plotting import plot_spectrum
        plot_spectrum(report, out / "spectrum.png")
    return data


def _flat_intervals(iv: dict):
    for key, val in iv.items():
        if isinstance(val, bool):
            continue
        if isinstance(val, (list, tuple)):
            yield f"{key}_lo", val[0]
            yield f"{key}_hi", val[1]
        else:
            yield key, val


def cmd_partition(args) -> dict:
    system = load_system(args)
    out = _out_dir(args)
    rp = partition_rows(system.a, args.procs, refine=args.refine)
    ma = assign_multipliers(system.b, rp, concurrent=args.concurrent)
    cv = comm_volume(system.b, rp, ma)
    ma.to_csv(out / "assignment.csv")
    data = {"schema": "racp.partition/1", "n_procs": rp.n_procs,
            "row_sizes": rp.sizes().tolist(), "multiplier_counts": ma.counts.tolist(),
            "rows_exchanged": cv["rows_exchanged"], "balance_ratio": cv["balance_ratio"],
            "rows_received_per_process": cv["rows_received_per_process"],
            "edge_cut": edge_cut(system.a, rp), "normative": ma.normative,
            "strategy": dict(rp.meta, concurrent=bool(args.concurrent))}
    _write_json(out / "partition.json", data)
    return data


def compare_specs(args) -> list[dict]:
    """Expand ``--preset`` into a list of (label, name, recipe, omega, inner) specs."""
    base = {"name": args.precond if args.precond.startswith("racp") else "racp-m",
            "recipe": args.c_recipe, "omega": args.omega, "inner": args.inner}
    if args.preset == "omega":
        return [dict(base, omega=w, label=f"omega={w:g}") for w in OMEGA_SWEEP]
    if args.preset == "variants":
        return [dict(base, name="racp-m", label="M"), dict(base, name="racp-ma", label="Ma")]
    return [dict(base, name="racp-m", label="racp-m"), dict(base, name="racp-ma", label="racp-ma"),
            dict(base, name="mcp", label="mcp")]


def cmd_compare(args) -> dict:
    system = load_system(args)
    out = _out_dir(args)
    cfg = _gmres_cfg(args)
    records, histories = [], {}
    for k, spec in enumerate(compare_specs(args)):
        try:
            rec, hist = run_spec(system, spec["name"], spec["recipe"], spec["omega"], spec["inner"],
                                 cfg, spec["label"])
        except (ValueError, ArithmeticError) as exc:
            rec, hist = run_spec_failure(system, spec, exc), None
        if hist is not None:
            fname = f"history_{k:02d}.csv"
            hist.to_csv(out / fname)
            rec["history_csv"] = fname
            histories[spec["label"]] = hist
        records.append(rec)
    data = {"schema": "racp.compare/1", "preset": args.preset, "records": records}
    _write_json(out / "compare.json", data)
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "precond", "omega", "n_it", "converged", "c_app", "C_s", "reason"])
        for r in records:
            w.writerow([r["label"], r["preconditioner"]["name"], r["preconditioner"]["omega"],
                        r["n_it"], r["converged"], r["c_app"], r["C_s"], r["reason"]])
    if not args.no_plot:
        from .plotting import plot_compare, plot_convergence
        plot_compare(records, out / "compare.png")
        if histories:
            plot_convergence(histories, out / "compare_convergence.png", args.tol)
    return data


def run_spec_failure(system: SaddleSystem, spec: dict, exc: Exception) -> dict:
    return {"schema": RESULT_SCHEMA, "label": spec["label"], "system": _system_meta(system),
            "preconditioner": {"name": spec["name"], "recipe": RECIPES.get(spec["recipe"]),
                               "omega": float(spec["omega"]), "inner": spec["inner"],
                               "flops_per_apply": None},
            "n_it": None, "converged": False, "c_app": None, "C_s": None,
            "final_relative_residual": None, "wall_time": 0.0,
            "reason": f"{type(exc).__name__}: {exc}", "history_csv": None}


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "spectrum": cmd_spectrum,
            "partition": cmd_partition, "compare": cmd_compare}


def main(argv=None) -> int:
    try:
        args = resolve_args(argv)
    except UsageError as exc:
        print(f"racp: error: {exc}", file=sys.stderr)
        return 2
    try:
        result = COMMANDS[args.command](args)
    except (UsageError, GeneratorError, MatrixMarketError, DimensionError, DenseCapExceeded,
            LocalBlockError, FactorizationError, ValueError, OSError) as exc:
        print(f"racp: error: {exc}", file=sys.stderr)
        return 1
    summary = _summary(args.command, result)
    if summary:
        print(summary)
    return 0


def _summary(command: str, result: dict) -> str:
    if command == "generate":
        v = result["verify"]
        return f"wrote A.mtx, B.mtx, meta.json ({v['summary'] if v else 'verification skipped'})"
    if command == "solve":
        return (f"{result['preconditioner']['name']}: converged={result['converged']} "
                f"n_it={result['n_it']} reason={result['reason']}")
    if command == "spectrum":
        return f"{result['variant']}: n={result['n']} passed={result['passed']}"
    if command == "partition":
        return f"rows_exchanged={result['rows_exchanged']} balance_ratio={result['balance_ratio']:.3f}"
    if command == "compare":
        return "\n".join(f"{r['label']}: n_it={r['n_it']} converged={r['converged']}"
                         for r in result["records"])
    return ""


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
