"""``aoscl`` command line.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from aoscl.datastream import PRESETS, eval_sets, export_dataset, generate_initial_dataset, preset, task_utterances
from aoscl.errors import NumericError, SpecError
from aoscl.harness import report as report_mod
from aoscl.harness.pretrain import PretrainConfig, pretrain
from aoscl.harness.runner import METHODS, RunConfig, run
from aoscl.harness.sweep import sweep
from aoscl.seqmodel import ModelConfig

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p, stream_default="seq1"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", choices=PRESETS, default=stream_default)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--epochs", type=int, default=PretrainConfig.epochs, help="pretraining epochs")


def _method_args(p):
    d = RunConfig()
    p.add_argument("--method", choices=METHODS, default=d.method)
    p.add_argument("--tau", type=float, default=d.tau)
    p.add_argument("--tau2", type=float, default=d.tau2)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--memory", type=int, default=d.memory)
    p.add_argument("--weight-er", type=float, default=d.weight_er)
    p.add_argument("--lambda-ewc", type=float, default=d.lambda_ewc)
    p.add_argument("--eval-every", type=int, default=d.eval_every)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aoscl", description="Online continual learning with weight averaging on synthetic speech.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pretrain", help="train the initial model on the initial task")
    _common(p)

    p = sub.add_parser("run", help="one online pass of a learner over a stream")
    _common(p)
    _method_args(p)

    p = sub.add_parser("sweep", help="grid search on the small test stream")
    _common(p, stream_default="test")
    _method_args(p)
    p.add_argument("--grid-tau", type=_floats, default=None)
    p.add_argument("--grid-lambda", type=_floats, default=None)
    p.add_argument("--grid-tau2", type=_floats, default=None)
    p.add_argument("--grid-alpha", type=_floats, default=None)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("report", help="table of finished runs")
    p.add_argument("runs", nargs="+", type=Path, help="run directories or record.json files")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--with-initial", action="store_true", help="add a row for the initial model")

    p = sub.add_parser("export-data", help="write the initial data, stream and evaluation sets to flat files")
    _common(p)
    return parser


def _run_config(args) -> RunConfig:
    return RunConfig(
        method=args.method, tau=args.tau, tau2=args.tau2, lam=args.lam, alpha=args.alpha,
        memory=args.memory, weight_er=args.weight_er, lambda_ewc=args.lambda_ewc,
        stream=args.stream, seed=args.seed, eval_every=args.eval_every,
        output_dir=str(args.out) if args.out else None, pretrain_epochs=args.epochs,
    )


def _cmd_pretrain(args):
    spec = preset(args.stream, args.seed)
    pre = pretrain(spec, ModelConfig(d_i=spec.d_i, C=spec.vocab), PretrainConfig(epochs=args.epochs), seed=args.seed)
    print(f"F0={pre.F0} W0={pre.W0} final_loss={pre.losses[-1]:.6f}" if pre.losses else f"F0={pre.F0} W0={pre.W0}")
    if args.out:
        from aoscl import flatio

        archive = flatio.FlatArchive(meta={"F0": pre.F0, "W0": pre.W0, "stream": asdict(spec)})
        flatio.add_params(archive, "theta.", pre.theta0)
        flatio.write(Path(args.out) / "theta0", archive)
    return EXIT_OK


def _cmd_run(args):
    rec = run(_run_config(args))
    if rec.reports:
        print(report_mod.render_text(report_mod.summary_rows([rec])), end="")
    if not rec.ok:
        print(f"run failed: {rec.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_sweep(args):
    grid = {k: v for k, v in {"tau": args.grid_tau, "lam": args.grid_lambda, "tau2": args.grid_tau2,
                              "alpha": args.grid_alpha}.items() if v is not None}
    result = sweep(_run_config(args), grid, jobs=args.jobs, out_dir=args.out)
    width = max(len(r["key"]) for r in result.leaderboard)
    for r in result.leaderboard:
        print(f"{r['key']:<{width}}  {r['score']:.4f}")
    print(f"best: {result.best.key()}")
    return EXIT_OK


def _cmd_report(args):
    records = report_mod.load_records(args.runs)
    print(report_mod.report(records, args.out, include_initial=args.with_initial), end="")
    return EXIT_OK


def _cmd_export(args):
    spec = preset(args.stream, args.seed)
    out = args.out or Path(".")
    data = generate_initial_dataset(spec)
    export_dataset(out / "initial_train", data.train, {"F0": data.F0, "W0": data.W0})
    export_dataset(out / "initial_validation", data.validation)
    for t in spec.task_order:
        export_dataset(out / f"task{t}_stream", task_utterances(spec, t))
    for split in ("validation", "test"):
        for t, utts in eval_sets(spec, split).items():
            export_dataset(out / f"task{t}_{split}", utts)
    print(f"wrote {spec.name} data to {out}")
    return EXIT_OK


_COMMANDS = {"pretrain": _cmd_pretrain, "run": _cmd_run, "sweep": _cmd_sweep,
             "report": _cmd_report, "export-data": _cmd_export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except SpecError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
