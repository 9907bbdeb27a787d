"""Command-line interface.

Subcommands: gen-matrix, train, eval, compare, simulate. Every option may
also come from a ``--config`` file of ``key=value`` lines; flags on the
command line win. ``ECOC_SEED`` supplies the seed when no flag or config
value does.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import codec, kernels, models, synth, trainer
from .data import SplitSpec, Standardizer, load_table, split, standardize
from .errors import EcocError, IncompatibleModels, InvalidArgs, IoFailure, ParseError

SCALER_FILE = "scaler.txt"


def _default_seed():
    raw = os.environ.get("ECOC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InvalidArgs(f"ECOC_SEED must be an integer, got {raw!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fractions(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'train,val' fractions, got {text!r}") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randecoc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value file supplying option defaults")
        sp.add_argument("--seed", type=int)

    g = sub.add_parser("gen-matrix", help="generate a random code matrix")
    common(g)
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--length", type=int, required=True)
    g.add_argument("--ternary", action="store_true")
    g.add_argument("--zero-fraction", type=float, default=0.0)
    g.add_argument("--out", required=True)

    def data_opts(sp):
        sp.add_argument("--features", required=True)
        sp.add_argument("--format", choices=("csv", "binary"))
        sp.add_argument("--classes", type=int, help="override the class count of the feature file")
        sp.add_argument("--metric", choices=codec.METRICS, default="hamming")
        sp.add_argument("--report", help="append key=value records to this file")

    t = sub.add_parser("train", help="train an ensemble and write a checkpoint")
    common(t)
    data_opts(t)
    t.add_argument("--model", choices=models.KINDS, required=True)
    t.add_argument("--matrix", required=True)
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--lr", type=float, default=3e-4)
    t.add_argument("--decay", type=float, default=0.99)
    t.add_argument("--batch", type=int, default=512)
    t.add_argument("--dropout", type=float, default=0.5)
    t.add_argument("--split", type=_fractions, default=(0.8, 0.1), help="train,val fractions")
    t.add_argument("--split-seed", type=int, default=0)
    t.add_argument("--hidden", type=_int_list, help="hidden widths (independent) or trunk widths (MTL)")
    t.add_argument("--head-hidden", type=int)
    t.add_argument("--no-standardize", action="store_true")
    t.add_argument("--workers", type=int, default=1)

    for name, helptext in (("eval", "evaluate one checkpoint"), ("compare", "evaluate and average checkpoints")):
        e = sub.add_parser(name, help=helptext)
        common(e)
        data_opts(e)
        if name == "eval":
            e.add_argument("--checkpoint", required=True)
        else:
            e.add_argument("--checkpoints", nargs="+", required=True)
        e.add_argument("--subset", choices=("test", "all"), default="test",
                       help="'test' re-applies the checkpoint's split to the feature file")

    s = sub.add_parser("simulate", help="bit-flip channel accuracy versus code length")
    common(s)
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--flip-prob", type=float, required=True)
    s.add_argument("--lengths", type=_int_list, default=[5, 10, 20, 30])
    s.add_argument("--trials", type=int, default=100000)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="CSV path; stdout when omitted")
    return p


def _read_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    return models.parse_manifest(text)


def _apply_config(parser, argv):
    """Parse with config-file values as defaults; explicit flags override."""
    argv = list(sys.argv[1:] if argv is None else argv)
    config = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
    choices = parser._subparsers._group_actions[0].choices
    if config is None or not argv or argv[0] not in choices:
        return parser.parse_args(argv)
    command = argv[0]
    subparser = choices[command]
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in _read_config(config).items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise InvalidArgs(f"unknown config key {key!r} for {command}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        elif act.nargs == "+":
            val = raw.split()
        elif act.type is not None:
            try:
                val = act.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise InvalidArgs(f"bad value for {key}: {exc}") from None
        else:
            val = raw
        if act.choices is not None and val not in act.choices:
            raise InvalidArgs(f"{key} must be one of {list(act.choices)}")
        defaults[dest] = val
        act.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _effective(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("command", "config") or v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join(map(str, v))
        out[k] = str(v).replace(" ", "_")
    return out


def _record(metrics, args, **fields):
    """Metrics line with the effective configuration echoed; ``fields`` win."""
    return metrics.record(**{**_effective(args), **fields})


def _emit(line, report=None):
    print(line)
    if report:
        try:
            with open(report, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot append to {report}: {exc}") from exc


def checkpoint_checksum(directory) -> str:
    h = hashlib.sha256()
    for f in sorted(Path(directory).glob("*.ecnn")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _save_scaler(stats: Standardizer, path):
    lines = [" ".join(repr(float(v)) for v in stats.mean), " ".join(repr(float(v)) for v in stats.std)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_scaler(path):
    try:
        mean_line, std_line = Path(path).read_text(encoding="utf-8").splitlines()[:2]
        mean = np.array([float(v) for v in mean_line.split()])
        std = np.array([float(v) for v in std_line.split()])
    except (OSError, ValueError) as exc:
        raise ParseError(f"bad scaler file {path}: {exc}") from None
    return Standardizer(mean, std, std < 1e-12)


def cmd_gen_matrix(args):
    kind = "ternary" if args.ternary else "binary"
    M = codec.generate_random_matrix(args.classes, args.length, kind, args.zero_fraction, args.seed)
    codec.save_matrix(M, args.out)
    st = codec.matrix_stats(M)
    print(f"K={M.K} L={M.L} kind={kind} min_hd={st.min_hamming} correctable={st.correctable} seed={args.seed} out={args.out}")
    return 0


def _load_features(args):
    return load_table(args.features, args.format, args.classes)


def cmd_train(args):
    M = codec.load_matrix(args.matrix)
    table = _load_features(args)
    spec = SplitSpec(args.split[0], args.split[1], args.split_seed)
    tr, va, te = split(table, spec)
    stats = None
    if not args.no_standardize:
        tr, stats = standardize(tr)
        va, te = stats.apply(va), stats.apply(te)
    hp = trainer.HyperParams(args.lr, args.decay, args.batch, args.epochs, args.dropout, args.seed)
    arch = {}
    if args.hidden:
        arch["hidden" if args.model == "independent" else "trunk_hidden"] = tuple(args.hidden)
    if args.head_hidden and args.model != "independent":
        arch["head_hidden"] = args.head_hidden
    model = trainer.train(args.model, tr, va, M, hp, workers=args.workers, **arch)
    metrics = trainer.evaluate(model, te, args.metric)
    extra = {
        "train_seconds": repr(model.train_seconds),
        "lr": repr(hp.lr),
        "decay": repr(hp.decay),
        "batch_size": hp.batch_size,
        "epochs": hp.epochs,
        "split": f"{spec.train_fraction},{spec.val_fraction}",
        "split_seed": spec.seed,
        "standardized": int(stats is not None),
    }
    out = models.save_model(model, args.out, extra)
    if stats is not None:
        _save_scaler(stats, out / SCALER_FILE)
    _emit(
        _record(metrics, args, model=args.model, checksum=checkpoint_checksum(out), backend=kernels.BACKEND),
        args.report,
    )
    return 0


def _eval_table(args, manifest, directory):
    table = _load_features(args)
    if args.subset == "test":
        fr = [float(v) for v in manifest.get("split", "0.8,0.1").split(",")]
        _, _, table = split(table, SplitSpec(fr[0], fr[1], int(manifest.get("split_seed", 0))))
    if manifest.get("standardized") == "1":
        table = _load_scaler(Path(directory) / SCALER_FILE).apply(table)
    return table


def cmd_eval(args):
    model, man = models.load_model(args.checkpoint)
    table = _eval_table(args, man, args.checkpoint)
    metrics = trainer.evaluate(model, table, args.metric)
    _emit(_record(metrics, args, model=man["kind"]), args.report)
    print(format_table([man["kind"]], [metrics]))
    return 0


def format_table(names, metrics_list) -> str:
    rows = [
        ("Testing Accuracy (%)", [f"{100 * m.accuracy:.2f}" for m in metrics_list]),
        ("Training Time (s)", [f"{m.train_seconds:.2f}" for m in metrics_list]),
        ("Testing Time (s)", [f"{m.test_seconds:.3f}" for m in metrics_list]),
    ]
    width = max(12, *(len(n) for n in names)) + 2
    out = [" " * 22 + "".join(n.rjust(width) for n in names)]
    out += [label.ljust(22) + "".join(v.rjust(width) for v in vals) for label, vals in rows]
    return "\n".join(out)


def cmd_compare(args):
    loaded = [models.load_model(d) for d in args.checkpoints]
    tables = [_eval_table(args, man, d) for d, (_, man) in zip(args.checkpoints, loaded)]
    names, results = [], []
    for d, (model, man), table in zip(args.checkpoints, loaded, tables):
        m = trainer.evaluate(model, table, args.metric)
        names.append(f"run{len(names) + 1}")
        results.append(m)
        _emit(_record(m, args, model=man["kind"], checkpoint=d), args.report)
    ref = tables[0]
    for t in tables[1:]:
        if not (np.array_equal(t.features, ref.features) and np.array_equal(t.labels, ref.labels)):
            raise IncompatibleModels("checkpoints use different splits or feature scaling")
    avg = trainer.average_ensembles([m for m, _ in loaded], tables[0], args.metric)
    _emit(_record(avg, args, model="averaged", runs=len(loaded)), args.report)
    print(format_table(names + ["averaged"], results + [avg]))
    return 0


def cmd_simulate(args):
    if args.classes < 2 or args.trials < 1 or not args.lengths:
        raise InvalidArgs("need --classes >= 2, --trials >= 1 and at least one length")
    if not 0.0 <= args.flip_prob < 0.5:
        raise InvalidArgs(f"--flip-prob must be in [0, 0.5), got {args.flip_prob}")
    curve = synth.convergence_curve(args.classes, args.flip_prob, args.lengths, args.trials, args.seed, args.workers)
    text = synth.curve_to_csv(curve)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "gen-matrix": cmd_gen_matrix,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.seed is None:
            args.seed = _default_seed()
        return COMMANDS[args.command](args)
    except EcocError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: InvalidArgs: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
