"""Batch front end.

    genfun run --config PATH [--seed N] [--out DIR] [--strict] [--threads N]
    genfun list
    genfun plots RUN_DIR

Exit codes: 0 success, 1 validation error, 2 numeric failure,
3 inconclusive result under ``--strict``.  Diagnostics go to stderr as
``key=value`` lines.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np
from scipy import stats

from . import ARTIFACT_VERSION
from .errors import (DivergenceSuspected, GenfunError, IntegrandError, NumericFailure)
from .experiments import (EXPERIMENT_DEFAULTS, EXPERIMENTS, MODEL_PARAMS, ExperimentConfig,
                          _atomic_write, parse_config, report_json, run_experiment, write_report)
from .kernels import kernel_by_name, verify_order

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 1, 2, 3

_NUMERIC = (NumericFailure, DivergenceSuspected, IntegrandError, FloatingPointError)

# files each experiment kind must leave behind for `plots`
EXPECTED_FILES = {
    "rate": ("summary.txt", "rmse.csv", "fit.csv"),
    "gaussianity": ("summary.txt", "draws.csv", "normality.csv"),
    "cantor-rescale": ("summary.txt", "rescaled.csv"),
    "bias": ("summary.txt", "bias.csv"),
}


def _diag(**kw) -> None:
    print(" ".join(f"{k}={json.dumps(v) if isinstance(v, str) and ' ' in v else v}"
                   for k, v in kw.items()), file=sys.stderr)


def _threads(arg: int | None, cfg: ExperimentConfig) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("GENFUN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            _diag(level="warning", message=f"ignoring GENFUN_THREADS={env!r}")
    return cfg.threads


def cmd_run(args) -> int:
    started = time.time()
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        _diag(level="error", kind="validation", message=f"cannot read config: {exc}")
        return EXIT_VALIDATION
    try:
        cfg = parse_config(text, seed=args.seed)
    except GenfunError as exc:
        _diag(level="error", kind="validation", error=type(exc).__name__, message=str(exc))
        return EXIT_VALIDATION
    # thread count changes wall time only, so it is kept out of the config hash
    run_cfg = replace(cfg, threads=_threads(args.threads, cfg))
    out_dir = os.path.join(args.out, f"{cfg.which}-{cfg.config_hash()}")
    try:
        report = run_experiment(run_cfg)
    except _NUMERIC as exc:
        _diag(level="error", kind="numeric", error=type(exc).__name__, message=str(exc))
        return EXIT_NUMERIC
    except GenfunError as exc:
        _diag(level="error", kind="validation", error=type(exc).__name__, message=str(exc))
        return EXIT_VALIDATION
    report.config = cfg
    files = write_report(report, out_dir)
    _atomic_write(os.path.join(out_dir, "report.json"), report_json(report) + "\n")
    files.append("report.json")
    code = EXIT_INCONCLUSIVE if (args.strict and report.status == "inconclusive") else EXIT_OK
    manifest = {
        "config_path": os.path.abspath(args.config),
        "config_hash": cfg.config_hash(),
        "version": ARTIFACT_VERSION,
        "experiment": cfg.which,
        "status": report.status,
        "start": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "end": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "runtime_seconds": round(report.runtime, 3),
        "outputs": sorted(files),
        "exit_status": code,
    }
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(report.summary_text(), end="")
    print(f"output_dir = {out_dir}")
    if code == EXIT_INCONCLUSIVE:
        _diag(level="error", kind="inconclusive", message="result is inconclusive under --strict")
    return code


def list_components() -> str:
    lines = ["models:"]
    for name, params in MODEL_PARAMS.items():
        schema = ", ".join(f"model.{k} (default {v if not isinstance(v, tuple) else list(v)})"
                           for k, v in params.items()) or "no parameters"
        lines.append(f"  {name}: {schema}")
    lines.append("kernels:")
    for order in (2, 4, 6):
        name = "epanechnikov" if order == 2 else "poly"
        K = kernel_by_name(name, order)
        rep = verify_order(K, order)
        lines.append(f"  {name} order={order} (kernel = {name}, order = {order}; "
                     f"order-{order} moment {rep.order_moments[(order,)]:.6g})")
    lines.append("  indicator (empirical-cdf limit of a smoothed cdf)")
    lines.append("test functions:")
    lines.append("  bump:c:r[:p]   polynomial bump (1 - ((x-c)/r)^2)^p, p defaults to 8")
    lines.append("  mollifier:c:r  exp(-1/(1 - ((x-c)/r)^2))")
    lines.append("experiments:")
    for which in EXPERIMENTS:
        dflt = ", ".join(f"{k}={v}" for k, v in EXPERIMENT_DEFAULTS[which].items()
                         if k not in ("h_grid",))
        lines.append(f"  {which}" + (f": {dflt}" if dflt else ""))
    lines.append("config keys:")
    lines.append("  " + ", ".join(f.name for f in ExperimentConfig.__dataclass_fields__.values()
                                  if f.name != "model_params") + ", model.<param>")
    return "\n".join(lines) + "\n"


def cmd_list(args) -> int:
    print(list_components(), end="")
    return EXIT_OK


def _read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _kind(run_dir: str) -> str | None:
    path = os.path.join(run_dir, "summary.txt")
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("experiment = "):
                return line.split("=", 1)[1].strip()
    return None


def _datablock(name: str, rows) -> str:
    body = "\n".join(" ".join(str(v) for v in r) for r in rows)
    return f"${name} << EOD\n{body}\nEOD\n"


def _rate_plot(run_dir: str) -> dict[str, str]:
    h, rows = _read_csv(os.path.join(run_dir, "rmse.csv"))
    fh, frows = _read_csv(os.path.join(run_dir, "fit.csv"))
    ci, cp, cr = h.index("n"), h.index("psi"), h.index("rmse")
    slopes = {r[fh.index("psi")]: float(r[fh.index("slope")]) for r in frows}
    psis = list(dict.fromkeys(r[cp] for r in rows))
    script = ["# gnuplot script: log-log RMSE against n with fitted slopes",
              "set logscale xy 2", "set xlabel 'n'", "set ylabel 'RMSE'", "set key left bottom"]
    plots = []
    for k, p in enumerate(psis):
        script.append(_datablock(f"d{k}", [(r[ci], r[cr]) for r in rows if r[cp] == p]))
        plots.append(f"$d{k} using 1:2 with linespoints title '{p} slope {slopes[p]:.3f}'")
    script.append("set label 1 'reference slope -0.5' at graph 0.6, graph 0.9")
    script.append("plot " + ", \\\n     ".join(plots))
    return {"rate_loglog.gp": "\n".join(script) + "\n"}


def _qq_plots(run_dir: str) -> dict[str, str]:
    header, rows = _read_csv(os.path.join(run_dir, "draws.csv"))
    cols = [c for c in header[1:] if c not in ("config_hash", "seed", "version")]
    out = {}
    for k, name in enumerate(cols):
        j = header.index(name)
        z = np.sort(np.array([float(r[j]) for r in rows]))
        q = stats.norm.ppf((np.arange(1, z.size + 1) - 0.5) / z.size)
        script = [f"# gnuplot script: normal QQ plot of standardised draws for {name}",
                  "set xlabel 'normal quantile'", "set ylabel 'sample quantile'",
                  "set size square", _datablock("qq", [(repr(float(a)), repr(float(b)))
                                                       for a, b in zip(q, z)]),
                  f"plot $qq using 1:2 with points pt 7 ps 0.4 title '{name}', x title 'y = x'"]
        out[f"qq_{k}.gp"] = "\n".join(script) + "\n"
    return out


def _cantor_plot(run_dir: str) -> dict[str, str]:
    h, rows = _read_csv(os.path.join(run_dir, "rescaled.csv"))
    ix, iw, ih, ir = h.index("x"), h.index("where"), h.index("h"), h.index("rescaled")
    script = ["# gnuplot script: h^(1-d) f_hat(x) against h at Cantor-set points",
              "set logscale x 2", "set xlabel 'h'", "set ylabel 'h^(1-d) f_hat(x)'"]
    plots = []
    for k, x in enumerate(dict.fromkeys(r[ix] for r in rows if r[iw] == "set")):
        script.append(_datablock(f"c{k}", [(r[ih], r[ir]) for r in rows
                                           if r[ix] == x and r[iw] == "set"]))
        plots.append(f"$c{k} using 1:2 with linespoints title 'x = {x}'")
    script.append("plot " + ", \\\n     ".join(plots))
    return {"cantor_rescaled.gp": "\n".join(script) + "\n"}


def _bias_plot(run_dir: str) -> dict[str, str]:
    h, rows = _read_csv(os.path.join(run_dir, "bias.csv"))
    ip, ih, ib, io = h.index("psi"), h.index("h"), h.index("bias_estimate"), h.index("oracle_bias")
    script = ["# gnuplot script: |bias| against h, estimate and leading-term oracle",
              "set logscale xy 2", "set xlabel 'h'", "set ylabel '|bias|'", "set key left top"]
    plots = []
    for k, p in enumerate(dict.fromkeys(r[ip] for r in rows)):
        script.append(_datablock(f"b{k}", [(r[ih], abs(float(r[ib])), abs(float(r[io])))
                                           for r in rows if r[ip] == p]))
        plots.append(f"$b{k} using 1:2 with points title '{p} estimate'")
        plots.append(f"$b{k} using 1:3 with lines title '{p} leading term'")
    script.append("plot " + ", \\\n     ".join(plots))
    return {"bias_loglog.gp": "\n".join(script) + "\n"}


_PLOTTERS = {"rate": _rate_plot, "gaussianity": _qq_plots, "cantor-rescale": _cantor_plot,
             "bias": _bias_plot}


def emit_plots(run_dir: str) -> list[str]:
    """Write gnuplot scripts for a finished run; raises FileNotFoundError naming missing inputs."""
    kind = _kind(run_dir)
    if kind is None:
        expected = sorted({f for fs in EXPECTED_FILES.values() for f in fs})
        raise FileNotFoundError(f"{run_dir} has no summary.txt; expected files such as "
                                f"{', '.join(expected)}")
    need = EXPECTED_FILES.get(kind, ("summary.txt",))
    missing = [f for f in need if not os.path.exists(os.path.join(run_dir, f))]
    if missing:
        raise FileNotFoundError(f"missing {', '.join(missing)} in {run_dir}")
    scripts = _PLOTTERS[kind](run_dir) if kind in _PLOTTERS else {}
    for name, text in scripts.items():
        _atomic_write(os.path.join(run_dir, name), text)
    return sorted(scripts)


def cmd_plots(args) -> int:
    try:
        names = emit_plots(args.run_dir)
    except FileNotFoundError as exc:
        _diag(level="error", kind="validation", message=str(exc))
        return EXIT_VALIDATION
    if not names:
        print("no plots defined for this experiment kind")
    for n in names:
        print(os.path.join(args.run_dir, n))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genfun", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=ARTIFACT_VERSION)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("--config", required=True, help="flat key = value config file")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default="runs", help="parent directory for run outputs")
    r.add_argument("--strict", action="store_true", help="exit 3 on inconclusive results")
    r.add_argument("--threads", type=int, default=None,
                   help="replication threads (falls back to GENFUN_THREADS)")
    r.set_defaults(func=cmd_run)
    lst = sub.add_parser("list", help="print available components")
    lst.set_defaults(func=cmd_list)
    pl = sub.add_parser("plots", help="write gnuplot scripts for a run directory")
    pl.add_argument("run_dir")
    pl.set_defaults(func=cmd_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        _diag(level="error", kind="validation", message="--threads must be >= 1")
        return EXIT_VALIDATION
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
