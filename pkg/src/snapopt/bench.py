"""Experiment harness: spec files, grid runs, CSV traces and figures.

Spec files are INI documents::

    [experiment]
    preset = nmf-small            # problem preset (see oracle.PROBLEM_PRESETS)
    algorithms = pgd, snap-plus   # any of pgd, pgd-ls, snap, snap-plus, snap-simplified
    seeds = 0, 1, 2               # one problem instance and start point per seed
    init_scales = 1, 1e-10        # c in x1 = c * proj(gaussian)
    max_iter = 20000
    perturb_q = 0.1, 0.1          # optional linear tilt (or one number: its norm)
    output = runs/nmf-small       # optional; relative to $SNAPOPT_OUTPUT_ROOT if set

    [problem]                     # overrides of the preset's parameters
    k = 10

    [solver]                      # SolverConfig fields, plus spgd_T, spgd_R,
    eps_G = 1e-3                  # spgd_F, beta, c_hat, probe_policy
    no_stop = true

    [solver.snap-plus]            # per-algorithm overrides
    r_th = 100

Outputs land in ``<output>/traces/<algo>_seed<s>_c<c>.csv``,
``<output>/summary.csv`` and ``<output>/figures/*.svg``.
"""

from __future__ import annotations

import configparser
import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from snapopt.eigen import SpGdConfig
from snapopt.errors import ParameterError, SnapError
from snapopt.oracle import PROBLEM_PRESETS, initial_point, make_problem, perturb_linear
from snapopt.solver import SolverConfig, TraceRecord, solve

log = logging.getLogger(__name__)

ALGORITHMS = {
    "pgd": {"variant": "pgd"},
    "pgd-ls": {"variant": "pgd-ls"},
    "snap": {"variant": "snap", "oracle_kind": "hessian"},
    "snap-plus": {"variant": "snap", "oracle_kind": "spgd"},
    "snap-simplified": {"variant": "snap-simplified", "oracle_kind": "hessian"},
}
OUTPUT_ENV = "SNAPOPT_OUTPUT_ROOT"
SUMMARY_FIELDS = ("algorithm", "seed", "c", "status", "f_last", "f_best", "iterations",
                  "oracle_calls", "fosp1_gap", "wall_time", "trace")

_FLOAT_KEYS = {"eps_G", "eps_H", "alpha_pi", "delta", "active_tol", "rank_tol", "feas_tol"}
_INT_KEYS = {"r_th", "max_iter", "seed"}
_BOOL_KEYS = {"no_stop"}
_SPGD_KEYS = {"spgd_T", "spgd_R", "spgd_F", "beta", "c_hat", "probe_policy"}


@dataclass
class ExperimentSpec:
    preset: str
    algorithms: list
    seeds: list
    init_scales: list = field(default_factory=lambda: [1.0])
    max_iter: int = 20000
    problem: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    perturb_q: list | None = None
    output: str = "runs"

    def __post_init__(self):
        if self.preset not in PROBLEM_PRESETS:
            raise ParameterError(f"unknown preset {self.preset!r}")
        if not self.seeds:
            raise ParameterError("an experiment needs at least one seed")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ParameterError(f"unknown algorithms {bad}; choose from {sorted(ALGORITHMS)}")

    def solver_config(self, algorithm, seed, max_iter=None):
        opts = dict(self.solver)
        opts.update(self.overrides.get(algorithm, {}))
        return build_solver_config(opts, ALGORITHMS[algorithm], seed,
                                   self.max_iter if max_iter is None else max_iter)

    def build_problem(self, seed):
        kind, base = PROBLEM_PRESETS[self.preset]
        params = dict(base)
        params.update(self.problem)
        prob = make_problem(kind, params, seed=seed, name=self.preset)
        if self.perturb_q:
            if len(self.perturb_q) == 1:
                prob = perturb_linear(prob, self.perturb_q[0], seed=seed)
            else:
                prob = perturb_linear(prob, 0.0, q=self.perturb_q)
        return prob


def _number(text):
    return float(text) if any(ch in text for ch in ".eE") else int(text)


def _list(text, conv):
    return [conv(t.strip()) for t in text.split(",") if t.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {text!r}")


def _solver_opts(section):
    out = {}
    for key, val in section.items():
        if key in _FLOAT_KEYS:
            out[key] = float(val)
        elif key in _INT_KEYS:
            out[key] = int(float(val))
        elif key in _BOOL_KEYS:
            out[key] = _bool(val)
        elif key == "oracle_kind":
            out[key] = val.strip()
        elif key in _SPGD_KEYS:
            out[key] = val.strip() if key == "probe_policy" else float(val)
        else:
            raise ParameterError(f"unknown solver option {key!r}")
    return out


def build_solver_config(opts, algo_fields, seed, max_iter):
    """Assemble a ``SolverConfig`` from flat options (as in a spec file)."""
    opts = dict(opts)
    spgd_opts = {k: opts.pop(k) for k in list(opts) if k in _SPGD_KEYS}
    fields = dict(opts)
    fields.update(algo_fields)
    fields.setdefault("seed", seed)
    fields["max_iter"] = max_iter
    if spgd_opts:
        eps_G = fields.get("eps_G", 1e-3)
        eps_H = fields.get("eps_H") or float(np.sqrt(eps_G))
        if "beta" not in spgd_opts and "alpha_pi" not in fields:
            raise ParameterError("set beta (or alpha_pi) when overriding SP-GD constants")
        R = float(spgd_opts.get("spgd_R", 1e-4))
        fields["spgd"] = SpGdConfig(
            T=int(spgd_opts.get("spgd_T", 200)),
            script_R=R,
            script_F=float(spgd_opts.get("spgd_F", R * R * eps_H / 8.0)),
            beta=float(spgd_opts.get("beta", fields.get("alpha_pi"))),
            c_hat=float(spgd_opts.get("c_hat", 51.0)),
            eps_H=eps_H,
            delta=fields.get("delta", 0.1),
            practical_override=True,
            probe_policy=spgd_opts.get("probe_policy", "shrink"),
        )
    return SolverConfig(**fields)


def load_spec(path):
    """Parse a spec file into an :class:`ExperimentSpec`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"spec file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read(path)
    return _spec_from_parser(cp)


def load_preset_spec(name):
    """Spec shipped with the package for a named preset."""
    ref = resources.files("snapopt").joinpath("presets").joinpath(f"{name}.ini")
    if not ref.is_file():
        raise ParameterError(f"no shipped spec for preset {name!r}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(ref.read_text())
    spec = _spec_from_parser(cp)
    spec.output = spec.output if spec.output != "runs" else f"runs/{name}"
    return spec


def preset_names():
    return sorted(p.name[:-4] for p in resources.files("snapopt").joinpath("presets").iterdir()
                  if p.name.endswith(".ini"))


def _spec_from_parser(cp):
    if "experiment" not in cp:
        raise ParameterError("spec file needs an [experiment] section")
    ex = cp["experiment"]
    try:
        kw = dict(
            preset=ex["preset"].strip(),
            algorithms=_list(ex.get("algorithms", "pgd, snap-plus"), str),
            seeds=_list(ex.get("seeds", "0"), int),
            init_scales=_list(ex.get("init_scales", "1"), float),
            max_iter=int(float(ex.get("max_iter", "20000"))),
        )
    except KeyError as exc:
        raise ParameterError(f"missing experiment key {exc}") from None
    if "perturb_q" in ex:
        kw["perturb_q"] = _list(ex["perturb_q"], float)
    if "output" in ex:
        kw["output"] = ex["output"].strip()
    if "problem" in cp:
        kw["problem"] = {k: _number(v.strip()) for k, v in cp["problem"].items()}
    if "solver" in cp:
        kw["solver"] = _solver_opts(cp["solver"])
    kw["overrides"] = {
        name.split(".", 1)[1]: _solver_opts(cp[name])
        for name in cp.sections() if name.startswith("solver.")
    }
    return ExperimentSpec(**kw)


def resolve_output(path):
    """Apply the ``SNAPOPT_OUTPUT_ROOT`` override to a relative output path."""
    p = Path(path)
    root = os.environ.get(OUTPUT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


@dataclass
class RunArtifact:
    output: Path
    traces: dict
    summary_path: Path
    summary: list
    figures: list = field(default_factory=list)


def _tag(c):
    return ("%g" % c).replace("+", "")


def trace_name(algorithm, seed, c):
    return f"{algorithm}_seed{seed}_c{_tag(c)}.csv"


def write_trace(path, trace, canonical=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TraceRecord.CSV_FIELDS)
        for rec in trace:
            w.writerow(rec.csv_row(canonical))


def read_trace(path):
    """Trace CSV as a dict of columns (numbers parsed, step_kind kept as text)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {k: [] for k in TraceRecord.CSV_FIELDS}
    for r in rows:
        for k in TraceRecord.CSV_FIELDS:
            v = r[k]
            if k == "step_kind":
                cols[k].append(v)
            elif k == "curvature_est":
                cols[k].append(float(v) if v else None)
            elif k in ("iter", "active_count", "free_dim"):
                cols[k].append(int(v))
            else:
                cols[k].append(float(v))
    return cols


def summary_row(algorithm, seed, c, status, trace, oracle_calls, wall_time, trace_file):
    fs = [r.f for r in trace]
    return {
        "algorithm": algorithm,
        "seed": seed,
        "c": c,
        "status": status,
        "f_last": fs[-1] if fs else float("nan"),
        "f_best": min(fs) if fs else float("nan"),
        "iterations": trace[-1].iter if trace else 0,
        "oracle_calls": oracle_calls,
        "fosp1_gap": trace[-1].fosp1_gap if trace else float("nan"),
        "wall_time": wall_time,
        "trace": trace_file,
    }


def run_cell(spec, algorithm, seed, c, out_dir=None, canonical=False, max_iter=None):
    """Solve one grid cell.  Returns ``(summary_row, SolveResult or None)``."""
    trace_file = trace_name(algorithm, seed, c)
    try:
        prob = spec.build_problem(seed)
        x1 = initial_point(prob, c, seed)
        cfg = spec.solver_config(algorithm, seed, max_iter)
        res = solve(prob, x1, cfg)
        status, trace, calls, wall = res.status, res.trace, res.oracle_calls, res.wall_time
    except (SnapError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("cell %s seed=%s c=%g failed: %s", algorithm, seed, c, exc)
        res, status, trace, calls, wall = None, f"error: {exc}", [], 0, 0.0
    if out_dir is not None:
        write_trace(Path(out_dir) / "traces" / trace_file, trace, canonical)
    row = summary_row(algorithm, seed, c, status, trace, calls, 0.0 if canonical else wall,
                      f"traces/{trace_file}")
    return row, res


def _run_cell_job(args):
    spec, algorithm, seed, c, out_dir, canonical = args
    row, _ = run_cell(spec, algorithm, seed, c, out_dir, canonical)
    return row


def run_experiment(spec, output=None, workers=1, canonical=False, plots=True):
    """Run every (algorithm, seed, c) cell and write traces, summary and figures.

    Cells are independent; ``workers > 1`` runs them in separate processes.
    A failing cell is recorded in the summary with an ``error:`` status.
    """
    out = resolve_output(output or spec.output)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    jobs = [(spec, a, s, c, str(out), canonical)
            for s in spec.seeds for c in spec.init_scales for a in spec.algorithms]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell_job, jobs))
    else:
        rows = [_run_cell_job(j) for j in jobs]
    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("%.17g" % v if isinstance(v, float) else v) for k, v in r.items()})
    traces = {(r["algorithm"], r["seed"], r["c"]): out / r["trace"] for r in rows}
    art = RunArtifact(out, traces, summary_path, rows)
    if plots:
        art.figures = emit_plots(art)
    return art


def emit_plots(artifact):
    """One SVG per (seed, c) and x-axis: loss against iteration and against time.

    The loss axis is logarithmic, or symmetric-log when some loss is not
    positive.  Cells with empty traces are skipped with a warning.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "snapopt"
    fig_dir = Path(artifact.output) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    groups = {}
    for (algo, seed, c), path in sorted(artifact.traces.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0])):
        cols = read_trace(path) if Path(path).is_file() else None
        if not cols or not cols["iter"]:
            log.warning("empty trace for %s seed=%s c=%g; skipped", algo, seed, c)
            continue
        groups.setdefault((seed, c), []).append((algo, cols))
    written = []
    for (seed, c), series in groups.items():
        for xkey, xlabel, stem in (("iter", "iteration", "loss_iter"), ("elapsed_s", "time (s)", "loss_time")):
            fig, ax = plt.subplots(figsize=(6, 4))
            lowest = min(min(cols["f"]) for _, cols in series)
            for algo, cols in series:
                ax.plot(cols[xkey], cols["f"], label=algo, linewidth=1.2)
            if lowest > 0:
                ax.set_yscale("log")
            else:
                ax.set_yscale("symlog", linthresh=1e-12)
            ax.set_xlabel(xlabel)
            ax.set_ylabel("loss")
            ax.set_title(f"seed {seed}, c = {c:g}")
            ax.legend()
            fig.tight_layout()
            path = fig_dir / f"{stem}_seed{seed}_c{_tag(c)}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
