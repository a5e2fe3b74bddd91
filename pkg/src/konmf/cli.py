"""Command-line entry point: ``konmf run ...``.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
failures while running (numerical breakdown, unwritable output).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import KonmfError, ValidationError
from .factorize import HyperParams
from .harness import ExperimentConfig, GridResult, HoldoutReport, SigmaGrid, run_experiment

log = logging.getLogger("konmf")

# config keys -> defaults; anything left as None on the command line falls back to the file, then here
DEFAULTS = {
    "data": None,
    "variant": None,
    "k": None,
    "sigma": None,
    "sigma_grid": None,
    "alpha": 10.0,
    "mu": 100.0,
    "lambda": 10.0,
    "restarts": 256,
    "seed": 0,
    "max_iter": 300,
    "kappa": 1e-3,
    "kernel": "gaussian",
    "label_col": None,
    "out": None,
    "holdout": False,
    "workers": 1,
    "shift_nonneg": False,
    "no_damping": False,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="konmf", description="Kernel orthogonal NMF clustering experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    r = sub.add_parser("run", help="run restarts, a sigma grid search or the hold-out protocol")
    r.add_argument("--config", help="JSON file with any of the options below (flags take precedence)")
    r.add_argument("--data", help="CSV file, one sample per row, with a header")
    r.add_argument("--variant", choices=("ncut", "rcut", "kognmf"))
    r.add_argument("--k", type=int, help="number of clusters (default: number of label classes)")
    r.add_argument("--sigma", type=float)
    r.add_argument("--sigma-grid", dest="sigma_grid", metavar="LO:HI:STEP")
    r.add_argument("--alpha", type=float)
    r.add_argument("--mu", type=float)
    r.add_argument("--lambda", dest="lambda", type=float)
    r.add_argument("--restarts", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--max-iter", dest="max_iter", type=int)
    r.add_argument("--kappa", type=float)
    r.add_argument("--kernel", choices=("gaussian", "linear"))
    r.add_argument("--label-col", dest="label_col", help="label column name or zero-based index")
    r.add_argument("--out", help="output directory")
    r.add_argument("--holdout", action="store_true", default=None)
    r.add_argument("--workers", type=int)
    r.add_argument("--shift-nonneg", dest="shift_nonneg", action="store_true", default=None,
                   help="shift signed features to a zero minimum before building the kernel")
    r.add_argument("--no-damping", dest="no_damping", action="store_true", default=None,
                   help="disable the step-halving safeguard of the H update")
    return p


def _read_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read config ({exc.strerror or exc})") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    norm = {str(key).replace("-", "_"): v for key, v in raw.items()}
    unknown = sorted(set(norm) - set(DEFAULTS))
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {', '.join(unknown)}")
    return norm


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, the JSON config and command-line flags, in increasing priority."""
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(_read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def config_from_options(opts: dict) -> ExperimentConfig:
    if opts["data"] is None:
        raise ValidationError("--data is required")
    if opts["variant"] is None:
        raise ValidationError("--variant is required")
    label = opts["label_col"]
    if isinstance(label, str) and label.lstrip("-").isdigit():
        label = int(label)
    try:
        hp = HyperParams(alpha=float(opts["alpha"]), mu=float(opts["mu"]), lam=float(opts["lambda"]),
                         kappa=float(opts["kappa"]), max_iter=int(opts["max_iter"]),
                         damping=not bool(opts["no_damping"]))
        return ExperimentConfig(
            variant=opts["variant"],
            k=None if opts["k"] is None else int(opts["k"]),
            kernel=opts["kernel"],
            sigma=None if opts["sigma"] is None else float(opts["sigma"]),
            sigma_grid=None if opts["sigma_grid"] is None else SigmaGrid.parse(opts["sigma_grid"]),
            hp=hp,
            restarts=int(opts["restarts"]),
            base_seed=int(opts["seed"]),
            data=str(opts["data"]),
            label_col=label,
            out=opts["out"],
            holdout=bool(opts["holdout"]),
            workers=int(opts["workers"]),
            shift_nonneg=bool(opts["shift_nonneg"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"invalid option value: {exc}") from None


def _report(result) -> str:
    if isinstance(result, HoldoutReport):
        return (f"tuned sigma={result.tuned_sigma} train mean acc={result.train_mean_acc:.4f} "
                f"held-out mean acc={result.held_out_mean_acc:.4f}")
    if isinstance(result, GridResult):
        best = result.best
        return f"best sigma={result.best_sigma} mean acc={result.best_mean_acc:.4f} best-run acc={best.best_run.accuracy}"
    acc = "n/a" if result.mean_acc is None else f"{result.mean_acc:.4f}"
    return f"sigma={result.sigma} mean acc={acc} best-run objective={result.best_run.objective:.6g}"


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="konmf: %(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.command != "run":
            raise ValidationError("usage: konmf run --data <csv> --variant {ncut|rcut|kognmf} ...")
        cfg = config_from_options(resolve_options(args))
        result, _ = run_experiment(cfg)
    except ValidationError as exc:
        print(f"konmf: error: {exc}", file=sys.stderr)
        return 1
    except KonmfError as exc:
        print(f"konmf: runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected failures still map to the runtime exit code
        print(f"konmf: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(_report(result))
    if cfg.out is not None:
        print(f"results written to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
