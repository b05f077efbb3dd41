"""
Command-line front end and batch runner.

Verbs::

    symctl run --scenario parametric-fig2 --out results/
    symctl sweep --scenario nonparametric-fig3 --alphas 1,3,9
    symctl composite --a 1 --b 2 --rho 0.1 --out kappa.csv
    symctl validate --config my_run.cfg

``--scenario`` takes a preset name or a config file (see
:mod:`symctl.config`). Output goes to ``--out``, else ``$SYMCTL_OUT``, else
the current directory.

Exit codes: 0 success, 1 invalid configuration, 2 a run diverged, 3 I/O error.
"""

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .composite import build_composite, sample
from .config import config_hash, load_scenario
from .errors import CompositeError, ConfigError, Diverged, ValidationError
from .scenarios import Scenario
from .sim import metrics, nominal_config, simulate

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3
FLOAT_FMT = "%.10g"


@dataclass
class RunRecord:
    scenario: str
    label: str
    variant: str
    ise: float
    sup_err: float
    effort: float
    csv_path: str
    wall_seconds: float
    config_hash: str
    status: str = "ok"
    t_diverged: float = math.nan

    @property
    def diverged(self):
        return self.status == "diverged"


# --------------------------------------------------------------------------
# CSV


def csv_header(n, m):
    """``t,x1..xn,xn1..xnn,e_norm,u,un,uf,ua,ug,V`` with ``u`` columns expanded when ``m > 1``."""
    cols = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"xn{i}" for i in range(1, n + 1)] + ["e_norm"]
    for name in ("u", "un", "uf", "ua", "ug"):
        cols += [name] if m == 1 else [f"{name}{j}" for j in range(1, m + 1)]
    return cols + ["V"]


def trajectory_table(tr):
    """Rows matching :func:`csv_header`."""
    sig = tr.signals
    k = len(tr.times)
    e_norm = np.sqrt(np.sum(sig["e"] ** 2, axis=1))
    V = sig.get("V", np.full(k, np.nan))
    blocks = [tr.times[:, None], tr.x, tr.x_n, e_norm[:, None]]
    blocks += [np.reshape(sig[name], (k, -1)) for name in ("u", "u_n", "u_f", "u_a", "u_g")]
    blocks.append(np.reshape(V[:k], (k, 1)))
    return np.hstack(blocks)


def write_csv(tr, path):
    n = tr.layout.n
    m = tr.layout.m
    table = trajectory_table(tr)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(csv_header(n, m)) + "\n")
        np.savetxt(fh, table, fmt=FLOAT_FMT, delimiter=",")


def read_csv_header(path):
    with open(path, encoding="utf-8") as fh:
        return fh.readline().strip().split(",")


# --------------------------------------------------------------------------
# batch runs


def _simulate_safely(cfg):
    start = time.perf_counter()
    try:
        tr = simulate(cfg)
        err = None
    except Diverged as exc:
        tr, err = exc.trajectory, exc
    return tr, err, time.perf_counter() - start


def _parallel(fn, items, workers):
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _file_label(text):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def run_scenario(sc: Scenario, out_dir, workers=None):
    """
    Simulate every run of `sc` and write one CSV per run, a metrics summary
    and a gnuplot script.

    Runs execute concurrently; the returned records keep the scenario's
    label order. A diverged run is recorded with ``status = "diverged"``,
    NaN metrics and the trajectory up to the failure.

    Returns
    -------
    list of RunRecord
    """
    os.makedirs(out_dir, exist_ok=True)
    runs = sc.runs()
    results = _parallel(lambda lc: _simulate_safely(lc[1]), runs, workers)
    nominal_tr = results[0][0] if results[0][1] is None else None
    stem = _file_label(sc.name)
    records = []
    for (label, cfg), (tr, err, wall) in zip(runs, results):
        path = os.path.join(out_dir, f"{stem}_{_file_label(label)}.csv")
        write_csv(tr, path)
        if err is None and nominal_tr is not None:
            ise, sup, effort = metrics(tr, nominal_tr)
        else:
            ise = sup = effort = math.nan
        rec = RunRecord(sc.name, label, cfg.variant.value, ise, sup, effort, path, wall, config_hash(cfg))
        if err is not None:
            rec.status = "diverged"
            rec.t_diverged = err.t_last
        records.append(rec)
    write_metrics(records, os.path.join(out_dir, f"{stem}_metrics.csv"))
    emit_plot_script(records, os.path.join(out_dir, f"{stem}.gp"), title=sc.name)
    return records


def write_metrics(records, path):
    cols = "label,variant,status,ise,sup_err,effort,t_diverged,wall_seconds,config_hash,csv\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cols)
        for r in records:
            nums = (FLOAT_FMT % v for v in (r.ise, r.sup_err, r.effort, r.t_diverged))
            fh.write(",".join([r.label, r.variant, r.status, *nums, "%.3f" % r.wall_seconds,
                               r.config_hash, os.path.basename(r.csv_path)]) + "\n")


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    ise: float
    sup_err: float
    status: str = "ok"


def sweep_alpha(base, alphas, workers=None):
    """
    Rerun `base` once per alpha and compare each to the nominal loop.

    Returns rows of ``(alpha, ise, sup_err)`` sorted by alpha. Diverged runs
    get NaN metrics and ``status = "diverged"``.
    """
    alphas = [float(a) for a in alphas]
    if len(alphas) < 2:
        raise ValidationError("an alpha sweep needs at least two values")
    nominal_tr, err, _ = _simulate_safely(nominal_config(base))
    if err is not None:
        raise err
    cfgs = [base.with_params(alpha=a) for a in alphas]
    results = _parallel(_simulate_safely, cfgs, workers)
    rows = []
    for a, (tr, err, _) in zip(alphas, results):
        if err is None:
            ise, sup, _ = metrics(tr, nominal_tr)
            rows.append(SweepRow(a, ise, sup))
        else:
            rows.append(SweepRow(a, math.nan, math.nan, "diverged"))
    return sorted(rows, key=lambda r: r.alpha)


def write_sweep(rows, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("alpha,ise,sup_err,status\n")
        for r in rows:
            fh.write(",".join([FLOAT_FMT % r.alpha, FLOAT_FMT % r.ise, FLOAT_FMT % r.sup_err, r.status]) + "\n")


# --------------------------------------------------------------------------
# plot scripts


def _plot_cmd(path, col, title, nominal):
    style = "lw 3 lc rgb 'black' dt 2" if nominal else "lw 1.5"
    return f"'{os.path.basename(path)}' using 1:{col} with lines {style} title '{title}'"


def emit_plot_script(records, out, title=None):
    """
    gnuplot script overlaying every state and control channel of `records`.

    The nominal run is drawn thick, black and dashed. Paths in the script
    are relative to its own directory.
    """
    if not records:
        raise ValueError("no runs to plot")
    header = read_csv_header(records[0].csv_path)
    panels = [c for c in header if c[0] == "x" and c[1:].isdigit()]
    panels += [c for c in header if c == "u" or (c[0] == "u" and c[1:].isdigit())]
    lines = [
        "# gnuplot script; run with: gnuplot -p " + os.path.basename(out),
        "set datafile separator ','",
        "set key outside right",
        "set grid",
        f"set multiplot layout {len(panels)},1" + (f" title '{title}'" if title else ""),
    ]
    for i, name in enumerate(panels):
        lines.append(f"set ylabel '{name}'")
        lines.append("set xlabel 't [s]'" if i == len(panels) - 1 else "unset xlabel")
        cmds = []
        for r in records:
            cols = read_csv_header(r.csv_path)
            cmds.append(_plot_cmd(r.csv_path, cols.index(name) + 1, r.label, r.label == "nominal"))
        lines.append("plot " + ", \\\n     ".join(cmds))
    lines.append("unset multiplot")
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return out


def write_composite(f, csv_path, z_max=None, num=601):
    """Dump ``z, kappa, dkappa, ddkappa`` and a three-panel gnuplot script next to it."""
    z_max = 1.5 * f.b if z_max is None else z_max
    table = sample(f, z_max, num)
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("z,kappa,dkappa,ddkappa\n")
        np.savetxt(fh, table, fmt=FLOAT_FMT, delimiter=",")
    script = os.path.splitext(csv_path)[0] + ".gp"
    name = os.path.basename(csv_path)
    lines = [
        "# gnuplot script; run with: gnuplot -p " + os.path.basename(script),
        "set datafile separator ','",
        "set grid",
        f"set multiplot layout 3,1 title 'kappa: a={f.a:g}, b={f.b:g}, rho={f.rho:g}'",
    ]
    for col, label in ((2, "kappa(z)"), (3, "kappa'(z)"), (4, "kappa''(z)")):
        lines.append(f"set ylabel \"{label}\"")
        lines.append(f"set arrow from {f.a:g}, graph 0 to {f.a:g}, graph 1 nohead dt 3")
        lines.append(f"set arrow from {f.b:g}, graph 0 to {f.b:g}, graph 1 nohead dt 3")
        lines.append(f"plot '{name}' using 1:{col} with lines lw 2 notitle")
        lines.append("unset arrow")
    lines.append("unset multiplot")
    with open(script, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return csv_path, script


# --------------------------------------------------------------------------
# argparse


def _default_out():
    return os.environ.get("SYMCTL_OUT", ".")


def _parse_alphas(text):
    try:
        return [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"alphas must be comma-separated numbers, got {text!r}") from None


def _sim_overrides(args):
    out = {}
    if args.dt is not None:
        out["dt"] = args.dt
    if args.t_final is not None:
        out["t_final"] = args.t_final
    if args.full_rate:
        out["record_stride"] = 1
    return out


def _with_overrides(sc, over):
    if not over:
        return sc
    from .sim import validate_config

    cfg = sc.config.replace(**over)
    validate_config(cfg)
    return Scenario(sc.name, cfg, sc.comparisons)


def build_parser():
    ap = argparse.ArgumentParser(prog="symctl", description="Fixed-gain plus adaptive control simulations.")
    sub = ap.add_subparsers(dest="verb", required=True)

    def sim_flags(p):
        p.add_argument("--scenario", required=True, help="preset name or config file")
        p.add_argument("--out", default=None, help="output directory (default: $SYMCTL_OUT or .)")
        p.add_argument("--dt", type=float, default=None, help="override the step size")
        p.add_argument("--t-final", type=float, default=None, help="override the horizon")
        p.add_argument("--full-rate", action="store_true", help="record every step")
        p.add_argument("--workers", type=int, default=None, help="concurrent runs")

    p = sub.add_parser("run", help="simulate every run of a scenario")
    sim_flags(p)

    p = sub.add_parser("sweep", help="rerun a scenario's base config over several alphas")
    sim_flags(p)
    p.add_argument("--alphas", type=_parse_alphas, required=True, help="e.g. 1,3,9")

    p = sub.add_parser("composite", help="dump kappa and its derivatives")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--out", default=None, help="CSV path (default: $SYMCTL_OUT/kappa.csv)")
    p.add_argument("--z-max", type=float, default=None)
    p.add_argument("--num", type=int, default=601)

    p = sub.add_parser("validate", help="check a config file without running it")
    p.add_argument("--config", required=True)
    return ap


def _cmd_run(args):
    sc = _with_overrides(load_scenario(args.scenario), _sim_overrides(args))
    out = args.out or _default_out()
    records = run_scenario(sc, out, workers=args.workers)
    print(f"{'label':34s} {'status':9s} {'ise':>12s} {'sup_err':>12s} {'effort':>12s} {'wall[s]':>8s}")
    for r in records:
        print(f"{r.label:34s} {r.status:9s} {r.ise:12.6g} {r.sup_err:12.6g} {r.effort:12.6g} {r.wall_seconds:8.2f}")
    print(f"wrote {len(records)} CSV files, metrics and plot script to {out}")
    return EXIT_DIVERGED if any(r.diverged for r in records) else EXIT_OK


def _cmd_sweep(args):
    sc = _with_overrides(load_scenario(args.scenario), _sim_overrides(args))
    out = args.out or _default_out()
    rows = sweep_alpha(sc.config, args.alphas, workers=args.workers)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{_file_label(sc.name)}_sweep.csv")
    write_sweep(rows, path)
    print(f"{'alpha':>8s} {'ise':>12s} {'sup_err':>12s} status")
    for r in rows:
        print(f"{r.alpha:8g} {r.ise:12.6g} {r.sup_err:12.6g} {r.status}")
    print(f"wrote {path}")
    return EXIT_DIVERGED if any(r.status != "ok" for r in rows) else EXIT_OK


def _cmd_composite(args):
    try:
        f = build_composite(args.a, args.b, args.rho)
    except CompositeError as exc:
        raise ValidationError(str(exc)) from exc
    path = args.out or os.path.join(_default_out(), "kappa.csv")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    csv_path, script = write_composite(f, path, args.z_max, args.num)
    print(f"psi = {', '.join(f'{c:.10g}' for c in f.psi)}")
    print(f"slope range = [{f.min_slope:.6g}, {f.max_slope:.6g}]")
    print(f"wrote {csv_path} and {script}")
    return EXIT_OK


def _cmd_validate(args):
    sc = load_scenario(args.config)
    print(f"ok: {sc.name} ({len(sc.comparisons) + 1} runs), config hash {config_hash(sc.config)}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "composite": _cmd_composite, "validate": _cmd_validate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"symctl: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Diverged as exc:
        print(f"symctl: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"symctl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
