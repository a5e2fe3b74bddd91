"""Experiment orchestration: restarts, sigma grid search, hold-out protocol, output files."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .cluster import accuracy, assign
from .data import Dataset, load_csv, shift_nonneg, stratified_holdout
from .errors import ConvergenceError, KonmfError, ValidationError
from .factorize import FactorState, HyperParams, Variant, factorize
from .graph import KernelSpec, build_kernel

log = logging.getLogger(__name__)

# restarts per solver batch; fixed so results do not depend on worker count
CHUNK = 32

RUN_COLUMNS = ("seed", "sigma", "acc", "objective", "iters", "orthogonality", "ms")


@dataclass(frozen=True)
class SigmaGrid:
    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and math.isfinite(self.step)):
            raise ValidationError("sigma grid bounds must be finite")
        if self.step <= 0:
            raise ValidationError(f"sigma grid step must be > 0, got {self.step}")
        if self.lo > self.hi:
            raise ValidationError(f"sigma grid needs lo <= hi, got {self.lo} > {self.hi}")
        if self.lo <= 0:
            raise ValidationError(f"sigma grid must be positive, got lo={self.lo}")

    @classmethod
    def parse(cls, text) -> "SigmaGrid":
        """Accept ``"lo:hi:step"``, a 3-sequence or a mapping with lo/hi/step."""
        if isinstance(text, SigmaGrid):
            return text
        if isinstance(text, dict):
            try:
                return cls(float(text["lo"]), float(text["hi"]), float(text["step"]))
            except KeyError as exc:
                raise ValidationError(f"sigma grid is missing {exc.args[0]!r}") from None
        parts = text.split(":") if isinstance(text, str) else list(text)
        if len(parts) != 3:
            raise ValidationError(f"sigma grid must be lo:hi:step, got {text!r}")
        try:
            lo, hi, step = (float(p) for p in parts)
        except (TypeError, ValueError):
            raise ValidationError(f"sigma grid must be numeric, got {text!r}") from None
        return cls(lo, hi, step)

    def values(self) -> list[float]:
        count = int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        return [round(self.lo + i * self.step, 10) for i in range(count)]


@dataclass(frozen=True)
class ExperimentConfig:
    variant: Variant = Variant.KNSC_NCUT
    k: Optional[int] = None
    kernel: str = "gaussian"
    sigma: Optional[float] = None
    sigma_grid: Optional[SigmaGrid] = None
    hp: HyperParams = field(default_factory=HyperParams)
    restarts: int = 256
    base_seed: int = 0
    data: Optional[str] = None
    label_col: Union[int, str, None] = None
    out: Optional[str] = None
    holdout: bool = False
    workers: int = 1
    shift_nonneg: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.sigma_grid is not None:
            object.__setattr__(self, "sigma_grid", SigmaGrid.parse(self.sigma_grid))
        if self.kernel not in ("gaussian", "linear"):
            raise ValidationError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "gaussian":
            if self.sigma is None and self.sigma_grid is None:
                raise ValidationError("gaussian kernel needs --sigma or --sigma-grid")
            if self.sigma is not None and self.sigma_grid is not None:
                raise ValidationError("give either a single sigma or a sigma grid, not both")
            if self.sigma is not None:
                KernelSpec.gaussian(self.sigma)
        elif self.sigma_grid is not None:
            raise ValidationError("a sigma grid only applies to the gaussian kernel")
        if self.k is not None and self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1:
            raise ValidationError(f"restarts must be >= 1, got {self.restarts}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")

    def sigmas(self) -> list:
        if self.kernel == "linear":
            return [None]
        if self.sigma_grid is not None:
            return self.sigma_grid.values()
        return [float(self.sigma)]

    def at_sigma(self, sigma) -> "ExperimentConfig":
        if self.kernel == "linear":
            return self
        return replace(self, sigma=float(sigma), sigma_grid=None)


@dataclass(frozen=True)
class RunResult:
    seed: int
    sigma: Optional[float]
    accuracy: Optional[float]
    objective: float
    iterations: int
    orthogonality: float
    ms: float


@dataclass
class RunSummary:
    sigma: Optional[float]
    runs: list
    mean_acc: Optional[float]
    acc_by_prefix: dict
    best_index: int
    best_state: FactorState
    best_labels: np.ndarray

    @property
    def best_run(self) -> RunResult:
        return self.runs[self.best_index]


@dataclass
class GridResult:
    best_sigma: float
    best_mean_acc: float
    table: list
    summaries: list

    @property
    def best(self) -> RunSummary:
        return next(s for s in self.summaries if s.sigma == self.best_sigma)


@dataclass
class HoldoutReport:
    tuned_sigma: Optional[float]
    train_mean_acc: Optional[float]
    held_out_mean_acc: Optional[float]
    grid: Optional[GridResult]
    held: RunSummary


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data is None:
        raise ValidationError("no dataset given")
    ds = load_csv(cfg.data, label_column=cfg.label_col)
    return shift_nonneg(ds) if cfg.shift_nonneg else ds


def _kernel_for(ds: Dataset, cfg: ExperimentConfig, sigma) -> np.ndarray:
    spec = KernelSpec.linear() if cfg.kernel == "linear" else KernelSpec.gaussian(sigma)
    return build_kernel(ds.x, spec)


def _resolve_k(ds: Dataset, cfg: ExperimentConfig) -> int:
    k = cfg.k if cfg.k is not None else ds.k_hint
    if k is None:
        raise ValidationError("k not given and the dataset has no labels to infer it from")
    if k > ds.n:
        raise ValidationError(f"k={k} exceeds the number of samples {ds.n}")
    return int(k)


def _run_chunk(variant, kmat, k, seeds, hp, truth, sigma):
    """Solve one batch of restarts and score them; runs in worker processes too."""
    start = time.perf_counter()
    states = factorize(variant, kmat, k, seeds, hp)
    per_run_ms = (time.perf_counter() - start) * 1000.0 / len(seeds)
    rows, labels = [], []
    for seed, st in zip(seeds, states):
        lab = assign(st.h)
        acc = None if truth is None else accuracy(lab, truth).acc
        orth = st.orthogonality_trace[-1]
        rows.append(RunResult(seed=int(seed), sigma=sigma, accuracy=acc, objective=st.objective_trace[-1],
                              iterations=st.iteration, orthogonality=orth, ms=per_run_ms))
        labels.append(lab.labels)
    return rows, states, labels


def _prefix_means(acc: list) -> dict:
    out = {}
    i = 1
    while 2**i <= len(acc) and i <= 8:
        out[2**i] = float(np.mean(acc[: 2**i]))
        i += 1
    return out


def _summarise(sigma, rows, states, labels) -> RunSummary:
    objectives = [r.objective for r in rows]
    best = int(np.argmin(objectives))  # first minimum on ties
    accs = [r.accuracy for r in rows]
    if any(a is None for a in accs):
        mean_acc, prefixes = None, {}
    else:
        mean_acc, prefixes = float(np.mean(accs)), _prefix_means(accs)
    return RunSummary(sigma=sigma, runs=rows, mean_acc=mean_acc, acc_by_prefix=prefixes,
                      best_index=best, best_state=states[best], best_labels=labels[best])


def _evaluate(ds: Dataset, cfg: ExperimentConfig, sigmas: list) -> list[RunSummary]:
    """multi_run for each sigma; all (sigma, chunk) batches share one worker pool."""
    k = _resolve_k(ds, cfg)
    seeds = [cfg.base_seed + i for i in range(cfg.restarts)]
    chunks = [seeds[i : i + CHUNK] for i in range(0, len(seeds), CHUNK)]
    tasks = []
    for sigma in sigmas:
        kmat = _kernel_for(ds, cfg, sigma)
        for ch in chunks:
            tasks.append((cfg.variant, kmat, k, ch, cfg.hp, ds.truth, sigma))

    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_chunk, *t) for t in tasks]
            outs = [_collect(f.result, t, cfg) for f, t in zip(futures, tasks)]
    else:
        outs = [_collect(lambda t=t: _run_chunk(*t), t, cfg) for t in tasks]

    summaries = []
    per_sigma = len(chunks)
    for si, sigma in enumerate(sigmas):
        rows, states, labels = [], [], []
        for r, s, lab in outs[si * per_sigma : (si + 1) * per_sigma]:
            rows += r
            states += s
            labels += lab
        summaries.append(_summarise(sigma, rows, states, labels))
    return summaries


def _collect(call, task, cfg):
    try:
        return call()
    except ConvergenceError as exc:
        seeds, sigma = task[3], task[6]
        seed = seeds[exc.restart] if exc.restart is not None else seeds[0]
        where = "" if sigma is None else f" at sigma={sigma}"
        raise ConvergenceError(
            f"run {seed - cfg.base_seed} (seed {seed}){where} failed: {exc}", restart=exc.restart
        ) from exc


def multi_run(cfg: ExperimentConfig, ds: Optional[Dataset] = None) -> RunSummary:
    """``cfg.restarts`` runs with seeds base_seed + 0, 1, ... at the configured sigma."""
    ds = load_dataset(cfg) if ds is None else ds
    if cfg.kernel == "gaussian" and cfg.sigma is None:
        raise ValidationError("multi_run needs a single sigma; use grid_search for a grid")
    return _evaluate(ds, cfg, cfg.sigmas())[0]


def grid_search(cfg: ExperimentConfig, ds: Optional[Dataset] = None) -> GridResult:
    """multi_run at every sigma of the grid; the best mean accuracy wins, ties go to the smaller sigma."""
    ds = load_dataset(cfg) if ds is None else ds
    if ds.truth is None:
        raise ValidationError("grid search selects sigma by accuracy and needs ground-truth labels")
    if cfg.kernel != "gaussian":
        raise ValidationError("grid search applies to the gaussian kernel only")
    sigmas = cfg.sigmas()
    if not sigmas:
        raise ValidationError("sigma grid is empty")
    log.warning("sigma is selected by accuracy against the labels: this is supervised model selection")
    summaries = _evaluate(ds, cfg, sigmas)
    best = None
    table = []
    for s in summaries:
        table.append({"sigma": s.sigma, "mean_acc": s.mean_acc,
                      "mean_objective": float(np.mean([r.objective for r in s.runs]))})
        if best is None or s.mean_acc > best.mean_acc:
            best = s
    return GridResult(best_sigma=best.sigma, best_mean_acc=best.mean_acc, table=table, summaries=summaries)


def holdout_protocol(cfg: ExperimentConfig, ds: Optional[Dataset] = None) -> HoldoutReport:
    """Tune sigma on one stratified half, then evaluate it on the other half."""
    ds = load_dataset(cfg) if ds is None else ds
    if ds.truth is None:
        raise ValidationError("hold-out validation needs ground-truth labels")
    train, held = stratified_holdout(ds, seed=cfg.base_seed)
    cfg = replace(cfg, k=_resolve_k(ds, cfg))
    grid = None
    if cfg.kernel == "gaussian" and cfg.sigma_grid is not None:
        grid = grid_search(cfg, train)
        tuned = grid.best_sigma
        train_acc = grid.best_mean_acc
    else:
        tuned = cfg.sigma
        train_acc = multi_run(cfg, train).mean_acc
    held_summary = multi_run(cfg.at_sigma(tuned), held)
    return HoldoutReport(tuned_sigma=tuned, train_mean_acc=train_acc,
                         held_out_mean_acc=held_summary.mean_acc, grid=grid, held=held_summary)


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _run_record(r: RunResult) -> dict:
    return {"seed": r.seed, "acc": _num(r.accuracy), "objective": _num(r.objective),
            "iterations": r.iterations, "orthogonality": _num(r.orthogonality)}


def _summary_record(s: RunSummary) -> dict:
    return {
        "sigma": s.sigma,
        "mean_acc": s.mean_acc,
        "acc_by_prefix": {str(k): v for k, v in s.acc_by_prefix.items()},
        "mean_orthogonality": _num(np.nanmean([r.orthogonality for r in s.runs])),
        "best_run": _run_record(s.best_run),
    }


def summary_dict(result, ds: Dataset, cfg: ExperimentConfig) -> dict:
    """JSON-ready description of a run summary, grid result or hold-out report (no timings)."""
    hp = asdict(cfg.hp)
    hp["lambda"] = hp.pop("lam")
    out = {
        "dataset": {"name": ds.name, "n": ds.n, "m": ds.m},
        "variant": cfg.variant.value,
        "kernel": cfg.kernel,
        "k": _resolve_k(ds, cfg),
        "hyperparams": hp,
        "restarts": cfg.restarts,
        "base_seed": cfg.base_seed,
    }
    if isinstance(result, RunSummary):
        out["result"] = _summary_record(result)
    elif isinstance(result, GridResult):
        out["grid"] = result.table
        out["best_sigma"] = result.best_sigma
        out["result"] = _summary_record(result.best)
    elif isinstance(result, HoldoutReport):
        out["holdout"] = {"tuned_sigma": result.tuned_sigma, "train_mean_acc": result.train_mean_acc,
                          "held_out_mean_acc": result.held_out_mean_acc}
        if result.grid is not None:
            out["grid"] = result.grid.table
        out["result"] = _summary_record(result.held)
    else:
        raise ValidationError(f"cannot summarise {type(result).__name__}")
    return out


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _final_summary(result) -> RunSummary:
    if isinstance(result, RunSummary):
        return result
    if isinstance(result, GridResult):
        return result.best
    return result.held


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def scatter_svg(points: np.ndarray, labels: np.ndarray, size: int = 400) -> str:
    """Minimal SVG scatter plot of 2 x n points coloured by label."""
    pad = 10.0
    lo = points.min(axis=1)
    span = np.maximum(points.max(axis=1) - lo, 1e-12)
    scale = (size - 2 * pad) / float(span.max())
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for (px, py), lab in zip(points.T, labels):
        cx = pad + (px - lo[0]) * scale
        cy = size - pad - (py - lo[1]) * scale
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="{_PALETTE[int(lab) % len(_PALETTE)]}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_results(result, ds: Dataset, cfg: ExperimentConfig, out_dir: Union[str, Path]) -> list[Path]:
    """Write runs.csv, summary.json, trace_best.csv, grid.csv (grids) and scatter.svg (2-D data)."""
    out_dir = Path(out_dir)
    written = []
    final = _final_summary(result)
    eval_ds = ds
    if isinstance(result, HoldoutReport):
        eval_ds = stratified_holdout(ds, seed=cfg.base_seed)[1]
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "runs.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RUN_COLUMNS)
            for r in final.runs:
                w.writerow([_cell(v) for v in (r.seed, r.sigma, r.accuracy, r.objective,
                                               r.iterations, r.orthogonality, r.ms)])
        written.append(path)

        path = out_dir / "summary.json"
        path.write_text(dump_json(summary_dict(result, ds, cfg)), encoding="utf-8")
        written.append(path)

        path = out_dir / "trace_best.csv"
        st = final.best_state
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iteration", "objective", "orthogonality"))
            for i, (e, o) in enumerate(zip(st.objective_trace, st.orthogonality_trace)):
                w.writerow((i, _cell(float(e)), _cell(float(o))))
        written.append(path)

        grid = result if isinstance(result, GridResult) else getattr(result, "grid", None)
        if grid is not None:
            path = out_dir / "grid.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("sigma", "mean_acc", "mean_objective"))
                for row in grid.table:
                    w.writerow([_cell(row["sigma"]), _cell(row["mean_acc"]), _cell(row["mean_objective"])])
            written.append(path)

        if eval_ds.m == 2:
            path = out_dir / "scatter.svg"
            path.write_text(scatter_svg(eval_ds.x.matrix, final.best_labels), encoding="utf-8")
            written.append(path)
    except OSError as exc:
        target = exc.filename or out_dir
        raise KonmfError(f"cannot write results to {target}: {exc.strerror or exc}") from exc
    return written


def run_experiment(cfg: ExperimentConfig, ds: Optional[Dataset] = None):
    """Dispatch to multi_run, grid_search or holdout_protocol according to ``cfg``."""
    ds = load_dataset(cfg) if ds is None else ds
    if cfg.holdout:
        result = holdout_protocol(cfg, ds)
    elif cfg.kernel == "gaussian" and cfg.sigma_grid is not None:
        result = grid_search(cfg, ds)
    else:
        result = multi_run(cfg, ds)
    if cfg.out is not None:
        emit_results(result, ds, cfg, cfg.out)
    return result, ds
