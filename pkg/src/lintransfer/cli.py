"""Command-line front end.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
Outputs depend only on the inputs and the seed, so a rerun with the same
manifest reproduces every CSV byte for byte.

Exit codes: 0 on success, 2 when some rows were flagged as degenerate,
1 on fatal errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import FittedModel, TaskTag, fit_ols
from .data import (
    PolynomialTaskConfig,
    gen_polynomial_task,
    load_dataset_csv,
    load_records_csv,
    polynomial_features,
    read_matrix_csv,
    save_dataset_csv,
    simulate_load_pair,
    write_csv,
)
from .decision import DEFAULT_LEVEL, batch_test
from .errors import TransferError
from .experiments import (
    RMSE_COLUMNS,
    SYNTHETIC_LOAD_BETA_S,
    SYNTHETIC_LOAD_BETA_T,
    run_load_experiment,
    run_poly_experiment,
)
from .finetune import make_transfer_operator
from .gain import gain_at, gain_matrix, plug_in_truth
from .phases import PHASE_COLUMNS, PhaseConfig, desk_config, full_config, run_phase_grid
from .tuning import DEFAULT_ALPHA_DIVISOR, pick_alpha, tune

EXIT_OK, EXIT_FATAL, EXIT_FLAGGED = 0, 1, 2
DECISION_COLUMNS = ("row", "gain_plugin", "psi", "p_value", "decision", "chosen_model", "degenerate")


class CommandError(Exception):
    """Bad combination of command-line inputs."""


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "isoformat"):
        return obj.isoformat()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path: Path, doc) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Output directory of one command; collects artifacts for the manifest."""

    def __init__(self, out: str, command: str, config: dict, seed: int | None, inputs=()):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.seed = seed
        self.inputs = {str(p): _sha256(p) for p in inputs if p is not None}
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.dir / name

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows)

    def json(self, name, doc):
        write_json(self.path(name), doc)

    def finish(self):
        write_json(self.dir / "manifest.json", {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "artifacts": sorted(self.artifacts),
            "version": __version__,
        })


def _load_model(path) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        return FittedModel.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    data = load_dataset_csv(args.data, TaskTag(args.task))
    model = fit_ols(data)
    run = Run(args.out, "fit", {"data": args.data, "task": args.task}, args.seed, [args.data])
    run.json("model.json", model.to_dict())
    run.finish()
    return EXIT_OK


def cmd_transfer(args) -> int:
    src = _load_model(args.source_model)
    tgt = _load_model(args.target_model)
    X, _ = read_matrix_csv(args.x, require_y=False)
    config = {
        "source_model": args.source_model,
        "target_model": args.target_model,
        "x": args.x,
        "alpha_divisor": args.alpha_div,
        "k": args.k,
        "rho": args.rho,
        "level": args.level,
        "source_data": args.source_data,
        "target_data": args.target_data,
    }
    if args.k is None or args.rho is None:
        if not (args.source_data and args.target_data):
            raise CommandError("tuning k or rho needs --source-data and --target-data; pass --k and --rho to skip it")
        source = load_dataset_csv(args.source_data, TaskTag.SOURCE)
        target = load_dataset_csv(args.target_data, TaskTag.TARGET)
        tuning = tune(source, target, src, tgt, args.alpha_div, k=args.k, rho=args.rho, level=args.level)
        alpha, k, rho = tuning.alpha, tuning.k_hat, tuning.rho_hat
    else:
        tuning = None
        alpha = pick_alpha(tgt.gram, args.alpha_div)
        k, rho = args.k, args.rho
    op = make_transfer_operator(tgt.gram, alpha, k)
    dec = batch_test(X, src, tgt, op, rho, args.level)
    plug = np.atleast_1d(gain_at(X, gain_matrix(plug_in_truth(src, tgt), src.gram_inv, tgt.gram_inv, op)))
    rows = []
    for i in range(X.shape[0]):
        transfer = bool(dec.reject[i])
        rows.append((i + 1, float(plug[i]), float(dec.psi[i]), float(dec.p_value[i]),
                     "transfer" if transfer else "target", "finetuned" if transfer else "target",
                     int(dec.degenerate[i])))
    run = Run(args.out, "transfer", config, args.seed,
              [args.source_model, args.target_model, args.x, args.source_data, args.target_data])
    run.csv("decisions.csv", DECISION_COLUMNS, rows)
    summary = {"alpha": alpha, "k": int(k), "rho": rho, "level": args.level, "dof": list(dec.dof),
               "n_rows": int(X.shape[0]), "n_transfer": int(dec.reject.sum()), "n_degenerate": int(dec.degenerate.sum())}
    if tuning is not None:
        summary["tuning"] = tuning.to_dict()
    run.json("tuning.json", summary)
    run.finish()
    return EXIT_FLAGGED if dec.degenerate.any() else EXIT_OK


def _write_experiment(run: Run, result) -> int:
    run.json("report.json", result.report)
    run.csv("curves.csv", RMSE_COLUMNS, result.rmse_rows)
    for stem, (header, rows) in result.tables.items():
        run.csv(f"{stem}.csv", header, rows)
    run.finish()
    return EXIT_FLAGGED if result.report["degenerate_rows"] else EXIT_OK


def cmd_experiment(args) -> int:
    seed = 0 if args.seed is None else args.seed
    common = {"alpha_divisor": args.alpha_div, "k": args.k, "rho": args.rho, "level": args.level}
    if args.preset == "poly":
        cfg = PolynomialTaskConfig(seed=seed)
        result = run_poly_experiment(cfg, args.alpha_div, args.k, args.rho, args.level)
        run = Run(args.out, "experiment", {"preset": "poly", **common, "task": cfg.to_dict()}, seed)
        return _write_experiment(run, result)
    if not args.data:
        raise CommandError(f"preset {args.preset} needs --data (a load CSV with one column per zone)")
    kw = {"hour": args.hour, "station": args.station}
    source = load_records_csv(args.data, load_column=args.source_column, **kw)
    target = load_records_csv(args.data, load_column=args.target_column, **kw)
    result = run_load_experiment(source, target, args.preset, args.alpha_div, args.k, args.rho, args.level)
    config = {"preset": args.preset, "data": args.data, "source_column": args.source_column,
              "target_column": args.target_column, **kw, **common}
    run = Run(args.out, "experiment", config, args.seed, [args.data])
    return _write_experiment(run, result)


def cmd_phases(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        if args.seed is not None:
            doc["seed"] = args.seed
        config = PhaseConfig.from_dict(doc)
    elif args.full_scale:
        config = full_config(seed)
    else:
        config = desk_config(seed)
    if args.reps is not None:
        config = PhaseConfig.from_dict({**config.to_dict(), "reps": args.reps})
    def report(k, n_s):
        print(f"k={k} N_S={n_s} done", file=sys.stderr)

    grid = run_phase_grid(config, report if args.verbose else None)
    run = Run(args.out, "phases", config.to_dict(), config.seed, [args.config] if args.config else ())
    run.csv("phases.csv", PHASE_COLUMNS, grid.rows())
    run.finish()
    failed = any(np.isnan(v).any() for v in grid.raw.values())
    return EXIT_FLAGGED if failed else EXIT_OK


def cmd_generate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.kind == "poly":
        cfg = PolynomialTaskConfig(n_T=args.n_target, n_S=args.n_source, coef_noise_sd=args.coef_noise_sd, seed=seed)
        source, target, truth = gen_polynomial_task(cfg)
        run = Run(args.out, "generate poly", cfg.to_dict(), seed)
        save_dataset_csv(run.path("source.csv"), source)
        save_dataset_csv(run.path("target.csv"), target)
        u = np.linspace(-3.0, 3.0, 100)
        X = polynomial_features(u)
        write_csv(run.path("x_grid.csv"), [f"x{j}" for j in range(1, 5)], (list(map(float, r)) for r in X))
        run.json("truth.json", truth.to_dict())
    else:
        src, tgt, spec = simulate_load_pair(SYNTHETIC_LOAD_BETA_S, SYNTHETIC_LOAD_BETA_T, seed=seed)
        config = {"beta_S": list(SYNTHETIC_LOAD_BETA_S), "beta_T": list(SYNTHETIC_LOAD_BETA_T),
                  "generation_features": spec.to_dict(), "columns": ["source", "target"]}
        run = Run(args.out, "generate load", config, seed)
        write_csv(run.path("loads.csv"), ["date", "hour", "source", "target", "temp1"],
                  ([s.timestamp.date().isoformat(), s.timestamp.hour, s.load, t.load, s.temperature]
                   for s, t in zip(src, tgt)))
    run.finish()
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _tuning_flags(p):
    p.add_argument("--alpha-div", type=float, default=DEFAULT_ALPHA_DIVISOR, help="alpha = alpha* / ALPHA_DIV")
    p.add_argument("--k", type=int, default=None, help="fixed number of fine-tuning steps (default: tuned)")
    p.add_argument("--rho", type=float, default=None, help="fixed prior radius (default: calibrated)")
    p.add_argument("--level", type=float, default=DEFAULT_LEVEL, help="test level a")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0 where randomness is used)")
    common.add_argument("--out", required=True, help="output directory")

    parser = argparse.ArgumentParser(prog="lintransfer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit OLS on a dataset CSV and write model.json")
    p.add_argument("data", help="CSV with header x1,...,xD,y")
    p.add_argument("--task", choices=[t.value for t in TaskTag], default=TaskTag.TARGET.value)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transfer", parents=[common], help="per-row transfer decisions for an input CSV")
    p.add_argument("--source-model", required=True)
    p.add_argument("--target-model", required=True)
    p.add_argument("--x", required=True, help="CSV with header x1,...,xD (a trailing y column is ignored)")
    p.add_argument("--source-data", help="source training CSV, needed for tuning")
    p.add_argument("--target-data", help="target training CSV, needed for tuning")
    _tuning_flags(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("experiment", parents=[common], help="run a preset experiment end to end")
    p.add_argument("preset", choices=["poly", "gefcom-A", "gefcom-B"])
    p.add_argument("--data", help="load CSV (date,hour,<zones>,temp1,...) for the gefcom presets")
    p.add_argument("--source-column", default="source")
    p.add_argument("--target-column", default="target")
    p.add_argument("--hour", type=int, default=8)
    p.add_argument("--station", type=int, default=None, help="use one temperature station instead of the mean")
    _tuning_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("phases", parents=[common], help="Monte-Carlo gain map over (N_S, N_T)")
    p.add_argument("--config", help="PhaseConfig JSON")
    p.add_argument("--full-scale", action="store_true", help="full grid (30..1000 x 30..500, B = 50)")
    p.add_argument("--reps", type=int, default=None, help="override the number of replications")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_phases)

    p = sub.add_parser("generate", parents=[common], help="write synthetic data sets")
    p.add_argument("kind", choices=["poly", "load"])
    p.add_argument("--n-target", type=int, default=60)
    p.add_argument("--n-source", type=int, default=600)
    p.add_argument("--coef-noise-sd", type=float, default=0.3)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TransferError, CommandError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"lintransfer {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
