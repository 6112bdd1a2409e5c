"""``ordpool`` command line.

Exit codes: 0 success, 1 verification or training failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis, experiment, gradcheck
from .errors import OrdpoolError
from .network import ACTIVATIONS, NETWORKS
from .pooling import INIT_SCHEMES, MODES, OrdinalKernelSet

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _training_flags(p, seeds: bool):
    p.add_argument("--network", choices=NETWORKS, default="baseline")
    p.add_argument("--init", choices=INIT_SCHEMES, default="average")
    p.add_argument("--activation", choices=ACTIVATIONS, default="relu")
    if seeds:
        p.add_argument("--seeds", type=_positive, default=5, help="run seeds 1..N")
    else:
        p.add_argument("--seed", type=int, default=1)
    p.add_argument("--epochs", type=_nonneg, default=5)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch", type=_positive, default=64)
    p.add_argument("--train-size", type=_positive, default=10000)
    p.add_argument("--test-size", type=_positive, default=2000)
    p.add_argument("--data-dir", default=None, help="MNIST IDX directory (default: $ORD_DATA_DIR)")
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ordpool", description="Ordinal pooling experiments on MNIST")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one network")
    t.add_argument("--pooling", choices=MODES, default="ordinal")
    _training_flags(t, seeds=False)

    c = sub.add_parser("compare", help="paired classic vs ordinal runs over several seeds")
    c.add_argument("--classic", choices=[m for m in MODES if m != "ordinal"], default="avg")
    _training_flags(c, seeds=True)

    s = sub.add_parser("sweep", help="init x activation grid of average test errors")
    s.add_argument("--inits", nargs="+", choices=INIT_SCHEMES, default=list(INIT_SCHEMES))
    s.add_argument("--activations", nargs="+", choices=ACTIVATIONS, default=list(ACTIVATIONS))
    s.add_argument("--config", default=None, help="JSON file overriding experiment fields")
    _training_flags(s, seeds=True)

    a = sub.add_parser("analyze", help="template distribution of learned kernels")
    a.add_argument("--kernels", nargs="+", required=True, help="kernels.json files")
    a.add_argument("--out", required=True)

    g = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    g.add_argument("--trials", type=_positive, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--inject-fault", choices=gradcheck.LAYER_KINDS, default=None,
                   help=argparse.SUPPRESS)

    e = sub.add_parser("export", help="flatten kernels.json into a long-format CSV")
    e.add_argument("--kernels", required=True)
    e.add_argument("--out", required=True)
    return p


# ------------------------------------------------------------------ helpers

def _say(args, msg):
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _config(args, arms, seeds) -> experiment.ExperimentConfig:
    return experiment.ExperimentConfig(
        network=args.network, arms=tuple(arms), activation=args.activation, init=args.init,
        seeds=tuple(seeds), epochs=args.epochs, batch_size=args.batch, lr=args.lr,
        momentum=args.momentum, train_size=args.train_size, test_size=args.test_size)


def _load_data(cfg, data_dir):
    train = experiment.load_mnist(data_dir, "train", cfg.train_size)
    test = experiment.load_mnist(data_dir, "test", cfg.test_size)
    return train, test


def _snapshot(out: Path, args, cfg):
    doc = {"command": args.command, "experiment": cfg.to_dict(),
           "data_dir": str(args.data_dir) if args.data_dir else None}
    _write(out / "config.json", experiment.dumps(doc))


def _write_distributions(out: Path, kernels_doc: dict) -> dict:
    """One ``distributions.csv`` per pooling layer, under ``out/<layer>/``."""
    by_layer: dict[str, tuple[list, list]] = {}
    for run_id, layers in sorted(kernels_doc["runs"].items()):
        for name, d in sorted(layers.items()):
            sets, ids = by_layer.setdefault(name, ([], []))
            sets.append(OrdinalKernelSet.from_dict(d))
            ids.append(run_id)
    if not by_layer:
        raise OrdpoolError("no ordinal kernels to analyze")
    summary = {}
    for name, (sets, ids) in sorted(by_layer.items()):
        dist = analysis.distribution(sets, ids)
        _write(out / name / "distributions.csv", dist.to_csv())
        summary[name] = {"total": dist.total,
                         "by_support_size": {str(k): v for k, v in dist.grouped("support_size").items()},
                         "by_argmax": {str(k): v for k, v in dist.grouped("argmax").items()},
                         "by_template": dict(sorted(dist.grouped("template").items()))}
    return summary


def _write_runs(out: Path, runs) -> dict:
    _write(out / "metrics.csv", experiment.metrics_csv(runs))
    kdoc = experiment.kernels_document(runs)
    _write(out / "kernels.json", experiment.dumps(kdoc))
    return kdoc


# ------------------------------------------------------------------ commands

def cmd_train(args) -> int:
    cfg = _config(args, [args.pooling], [args.seed])
    out = Path(args.out)
    _snapshot(out, args, cfg)
    train, test = _load_data(cfg, args.data_dir)
    run = experiment.run_arms(cfg, args.seed, train, test, log=lambda m: _say(args, m))
    kdoc = _write_runs(out, [run])
    res = run.arms[args.pooling]
    summary = {"run_id": run.run_id, "arm": args.pooling, "param_count": res.param_count,
               "final": vars(res.final)}
    if kdoc["runs"]:
        summary["distributions"] = _write_distributions(out, kdoc)
    _write(out / "summary.json", experiment.dumps(summary))
    _say(args, f"final test error {res.final.test_error:.2f}%")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args, [args.classic, "ordinal"], range(1, args.seeds + 1))
    out = Path(args.out)
    _snapshot(out, args, cfg)
    train, test = _load_data(cfg, args.data_dir)
    runs = [experiment.paired_run(cfg, s, train, test, log=lambda m: _say(args, m))
            for s in cfg.seeds]
    kdoc = _write_runs(out, runs)
    summary = experiment.summarize(cfg, runs)
    summary["distributions"] = _write_distributions(out, kdoc)
    _write(out / "summary.json", experiment.dumps(summary))
    if not all(p["same_batches"] for p in summary["pairs"]):
        print("error: arms consumed different batch sequences", file=sys.stderr)
        return EXIT_FAIL
    wins = summary["win_fraction"]
    print(f"ordinal wins: train loss {wins['train_loss']:.0%}, test loss {wins['test_loss']:.0%}, "
          f"test error {wins['test_error']:.0%}; extra parameters "
          f"+{summary['parameters']['percent']:.2f}%")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args, ["ordinal"], range(1, args.seeds + 1))
    inits, acts = args.inits, args.activations
    if args.config:
        try:
            over = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read --config: {exc}") from exc
        inits = over.pop("inits", inits)
        acts = over.pop("activations", acts)
        for k in ("arms", "seeds"):
            if k in over:
                over[k] = tuple(over[k])
        try:
            cfg = replace(cfg, **over)
        except TypeError as exc:
            raise UsageError(f"bad --config field: {exc}") from exc
    out = Path(args.out)
    _snapshot(out, args, cfg)
    train, test = _load_data(cfg, args.data_dir)
    res = experiment.sweep(cfg, inits, acts, train, test, log=lambda m: _say(args, m))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("init", "activation", "arm", "mean_test_error", "test_errors"))
    for row in res.rows():
        w.writerow([row["init"], row["activation"], row["arm"], repr(row["mean_test_error"]),
                    " ".join(repr(v) for v in row["test_errors"])])
    _write(out / "metrics.csv", buf.getvalue())
    _write(out / "summary.json", experiment.dumps({"cells": list(res.rows())}))
    print(buf.getvalue(), end="")
    return EXIT_OK


def cmd_analyze(args) -> int:
    merged = {"runs": {}}
    for path in args.kernels:
        doc = json.loads(Path(path).read_text())
        for run_id, layers in doc["runs"].items():
            key = run_id if len(args.kernels) == 1 else f"{Path(path).parent.name}/{run_id}"
            merged["runs"][key] = layers
    out = Path(args.out)
    summary = _write_distributions(out, merged)
    _write(out / "summary.json", experiment.dumps(summary))
    for name, s in summary.items():
        print(f"{name}: {s['total']} kernels; by support size {s['by_support_size']}; "
              f"by argmax {s['by_argmax']}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = gradcheck.run_suite(args.trials, args.seed, fault_kind=args.inject_fault)
    ok = True
    for kind, err in worst.items():
        passed = err <= gradcheck.TOLERANCE
        ok &= passed
        print(f"{kind:16s} max rel error {err:.3e}  {'ok' if passed else 'FAIL'}")
    print(f"overall max {max(worst.values()):.3e} ({'pass' if ok else 'fail'})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_export(args) -> int:
    doc = json.loads(Path(args.kernels).read_text())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("run_id", "layer", "channel", "rank", "weight"))
    for run_id, layers in sorted(doc["runs"].items()):
        for name, d in sorted(layers.items()):
            ks = OrdinalKernelSet.from_dict(d)
            for c, row in enumerate(ks.weights):
                for r, v in enumerate(row, start=1):
                    w.writerow([run_id, name, c, r, repr(float(v))])
    _write(Path(args.out), buf.getvalue())
    return EXIT_OK


COMMANDS = {"train": cmd_train, "compare": cmd_compare, "sweep": cmd_sweep,
            "analyze": cmd_analyze, "gradcheck": cmd_gradcheck, "export": cmd_export}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OrdpoolError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
