"""Command-line front end.

Exit codes: 0 success, 1 runtime failure or failed check, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .config import format_settings, load_settings
from .errors import GatelabError
from .network import Variant
from .report import emit_csv, emit_svg_lineplot, read_manifest, write_manifest

COMMANDS = ["spectrum", "train", "gram-trace", "theory-check", "oracle-check", "nu-track",
            "gate-compare", "dln", "conv-invariance", "info"]

TRAJECTORY_COLUMNS = ["step", "loss", "residual_ratio"]
ECDF_COLUMNS = ["d", "w", "seed_count", "index", "actual_cum", "ideal_cum"]
GRAM_TRACE_COLUMNS = ["d", "entry_kind", "mc_mean", "mc_se", "theory"]
GATES_COLUMNS = ["example", "layer", "node", "G", "active", "sensitive", "max_dG"]
CONV_COLUMNS = ["shift", "gating", "expectation", "mc_mean", "mc_se", "draws"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="line-oriented 'key = value' file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one setting (repeatable)")
    common.add_argument("--seed", type=int, help="single seed")
    common.add_argument("--seeds", type=_seed_range, metavar="N..M", help="inclusive seed range")
    common.add_argument("--out", metavar="DIR", help="output directory (default $GATELAB_OUT or ./runs)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=["csv", "csv+svg"], default="csv")
    common.add_argument("--manifest", metavar="PATH", help="re-run the settings and seeds of a manifest")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="gatelab", description="Numerical laboratory for deep gated networks.")
    parser.add_argument("--version", action="version", version=f"gatelab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "spectrum": "eigenvalue ECDF of K_0 against the ideal FRG spectrum",
        "train": "train one configuration; train.mode = sweep runs a depth sweep",
        "gram-trace": "Monte Carlo Gram entries against their expectation",
        "theory-check": "closed-form predictions against computation",
        "oracle-check": "layerwise computations against brute-force path sums",
        "nu-track": "nu_t along training",
        "gate-compare": "adaptive vs frozen and transplanted vs random gates",
        "dln": "deep linear network dynamics",
        "conv-invariance": "shift invariance of circular convolutions with pooling",
        "info": "version and defaults",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        if name == "oracle-check":
            p.add_argument("--grid", choices=sorted(experiments.GRIDS), default=None)
    return parser


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("GATELAB_OUT", "runs"))


def _seeds(args, default: list[int]) -> list[int]:
    if args.seeds is not None and args.seed is not None:
        raise UsageError("give --seed or --seeds, not both")
    if args.seeds is not None:
        return args.seeds
    if args.seed is not None:
        return [args.seed]
    return default


DEFAULT_SEEDS = {
    "gram-trace": list(range(20)), "spectrum": list(range(20)), "theory-check": list(range(20)),
    "dln": list(range(5)), "train": [0], "nu-track": [0], "gate-compare": [0],
    "conv-invariance": [0], "oracle-check": [0], "info": [0],
}


class Run:
    """Collects outputs of one invocation and writes the manifest at the end."""

    def __init__(self, args, settings: dict, seeds: list[int]):
        self.args = args
        self.settings = settings
        self.seeds = seeds
        self.out = _out_dir(args)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def csv(self, name: str, rows: list[dict], columns=None):
        self.files.append(emit_csv(rows, self.out / name, columns))

    def svg(self, name: str, series, labels, **kw):
        if self.args.format == "csv+svg":
            self.files.append(emit_svg_lineplot(series, labels, self.out / name, **kw))

    def finish(self):
        inputs = [p for p in (self.args.config, self.settings.get("data.path"),
                              self.settings.get("data.images"), self.settings.get("data.labels")) if p]
        write_manifest(self.out / "manifest.json", self.args.command, _jsonable(self.settings),
                       self.seeds, inputs, self.files)
        for f in self.files:
            print(f)


def _jsonable(settings: dict) -> dict:
    return {k: v for k, v in settings.items()}


def _load(args) -> tuple[dict, list[int]]:
    if args.manifest:
        doc = read_manifest(args.manifest)
        if doc.get("command") != args.command:
            raise UsageError(f"manifest was written by '{doc.get('command')}', not '{args.command}'")
        text = format_settings(doc["settings"])
        settings = load_settings(None, [line for line in text.splitlines() if line] + args.overrides)
        return settings, _seeds(args, doc["seeds"])
    settings = load_settings(args.config, args.overrides)
    return settings, _seeds(args, DEFAULT_SEEDS[args.command])


def _series_by(rows, key, xkey, ykey):
    groups = {}
    for r in rows:
        groups.setdefault(r[key], ([], []))
        groups[r[key]][0].append(r[xkey])
        groups[r[key]][1].append(r[ykey])
    return groups


def cmd_spectrum(run: Run, spec) -> int:
    spec.net = replace(spec.net, variant=Variant.FRG)
    rows = experiments.run_ecdf_sweep(spec)
    run.csv("ecdf.csv", rows, ECDF_COLUMNS)
    series, labels = [], []
    for (d, w) in sorted({(r["d"], r["w"]) for r in rows}):
        sel = [r for r in rows if r["d"] == d and r["w"] == w]
        series.append(([r["index"] for r in sel], [r["actual_cum"] for r in sel]))
        labels.append(f"d={d} w={w}")
        series.append(([r["index"] for r in sel], [r["ideal_cum"] for r in sel]))
        labels.append(f"ideal d={d}")
    run.svg("ecdf.svg", series, labels, title="ECDF of K0/d", xlabel="index", ylabel="cumulative")
    return 0


def cmd_train(run: Run, spec) -> int:
    if run.settings["train.mode"] == "sweep":
        rows = experiments.run_convergence_sweep(spec)
        run.csv("convergence.csv", rows)
        groups = _series_by(rows, "d", "step", "mean_ratio")
        run.svg("convergence.svg", list(groups.values()), [f"d={d}" for d in groups], log_y=True,
                title="residual ratio", xlabel="step", ylabel="|e_t|^2/|e_0|^2")
        return 0
    rows = experiments.run_train(spec)
    cols = TRAJECTORY_COLUMNS + (["nu", "rho_max", "rho_min"] if spec.snapshot_every else [])
    if len(spec.seeds) > 1:
        cols = ["seed"] + cols
    run.csv("trajectory.csv", rows, cols)
    groups = _series_by(rows, "seed", "step", "residual_ratio")
    run.svg("trajectory.svg", list(groups.values()), [f"seed {s}" for s in groups], log_y=True,
            title="residual ratio", xlabel="step", ylabel="|e_t|^2/|e_0|^2")
    return 0


def cmd_gram_trace(run: Run, spec) -> int:
    rows = experiments.run_gram_trace(spec)
    cols = GRAM_TRACE_COLUMNS if len(spec.widths) == 1 else ["w"] + GRAM_TRACE_COLUMNS
    run.csv("gram_trace.csv", rows, cols)
    series, labels = [], []
    for kind in ("diagonal", "off_diagonal"):
        sel = [r for r in rows if r["entry_kind"] == kind]
        series += [([r["d"] for r in sel], [r["mc_mean"] for r in sel]),
                   ([r["d"] for r in sel], [r["theory"] for r in sel])]
        labels += [f"{kind} MC", f"{kind} theory"]
    run.svg("gram_trace.svg", series, labels, title="K0 entries", xlabel="depth", ylabel="value")
    return 0


def cmd_theory_check(run: Run, spec) -> int:
    rows = experiments.run_theory_check(spec)
    run.csv("theory_check.csv", rows)
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']}: measured {r['measured']:.6g}, "
              f"expected {r['expected']:.6g} +- {r['tolerance']:.3g}")
    return 0 if all(r["passed"] for r in rows) else 1


def cmd_oracle_check(run: Run, spec) -> int:
    grid = run.args.grid or run.settings["check.grid"]
    rows = experiments.run_oracle_check(grid, run.seeds[0], spec.jobs)
    run.csv("oracle_check.csv", rows)
    bad = [r for r in rows if not r["passed"]]
    print(f"{len(rows) - len(bad)}/{len(rows)} configurations agree with the path oracle")
    for r in bad:
        print(f"FAIL d={r['d']} w={r['w']} d_in={r['d_in']} {r['variant']}")
    return 0 if not bad else 1


def cmd_nu_track(run: Run, spec) -> int:
    rows = experiments.run_nu_track(spec)
    cols = ["seed", "step", "loss", "residual_ratio", "rho_max", "rho_min"]
    cols += sorted({k for r in rows for k in r if k.startswith("nu_")})
    run.csv("nu_track.csv", rows, cols)
    nu_cols = [c for c in cols if c.startswith("nu_")]
    run.svg("nu_track.svg", [([r["step"] for r in rows], [r[c] for r in rows]) for c in nu_cols], nu_cols,
            log_y=True, title="nu_t", xlabel="step", ylabel="nu")
    bad = [r for r in rows for c in nu_cols if not (np.isfinite(r[c]) and r[c] > 0)]
    return 0 if not bad else 1


def cmd_gate_compare(run: Run, spec) -> int:
    rows, gate_rows, checks = experiments.run_gate_comparison(spec)
    run.csv("gate_compare.csv", rows)
    cols = (["seed"] if len(spec.seeds) > 1 else []) + GATES_COLUMNS
    run.csv("gates.csv", gate_rows, cols)
    names = ["adaptive", "frozen", "transplant", "random"]
    run.svg("gate_compare.svg", [([r["step"] for r in rows], [r[f"test_loss_{k}"] for r in rows]) for k in names],
            names, title="held-out loss", xlabel="step", ylabel="mean squared error")
    for note in checks.pop("notes"):
        print(note)
    for k, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {k}")
    return 0 if all(checks.values()) else 1


def cmd_dln(run: Run, spec) -> int:
    traj, summary = experiments.run_dln_dynamics(spec)
    run.csv("dln.csv", traj)
    run.csv("dln_k0.csv", summary)
    groups = _series_by(traj, "d", "step", "residual_ratio")
    run.svg("dln.svg", list(groups.values()), [f"d={d}" for d in groups], log_y=True,
            title="deep linear network", xlabel="step", ylabel="residual ratio")
    return 0


def cmd_conv_invariance(run: Run, spec) -> int:
    rows = experiments.run_conv_invariance(spec)
    run.csv("conv_invariance.csv", rows, CONV_COLUMNS)
    return 0


def cmd_info(run: Run, spec) -> int:
    print(f"gatelab {__version__} (python {platform.python_version()}, numpy {np.__version__})")
    print("variants: " + ", ".join(v.value for v in Variant))
    print("settings:")
    sys.stdout.write(format_settings(run.settings))
    return 0


HANDLERS = {
    "spectrum": cmd_spectrum, "train": cmd_train, "gram-trace": cmd_gram_trace,
    "theory-check": cmd_theory_check, "oracle-check": cmd_oracle_check, "nu-track": cmd_nu_track,
    "gate-compare": cmd_gate_compare, "dln": cmd_dln, "conv-invariance": cmd_conv_invariance,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        settings, seeds = _load(args)
    except UsageError as exc:
        print(f"gatelab: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except GatelabError as exc:
        print(f"gatelab: error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "info":
            run = argparse.Namespace(settings=settings)
            return cmd_info(run, None)
        run = Run(args, settings, seeds)
        spec = experiments.spec_from_settings(args.command, settings, seeds, args.jobs)
        code = HANDLERS[args.command](run, spec)
        run.finish()
        return code
    except (GatelabError, ValueError, OSError) as exc:
        if args.verbose:
            raise
        print(f"gatelab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
