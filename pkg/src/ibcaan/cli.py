"""Command line entry point: gen-data, train, eval, ablate, report.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
The ``IBCAAN_SEED`` environment variable overrides the seed from a config
file; an explicit ``--seed`` flag overrides both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import DataError
from .metrics import compute_eer, read_scores
from .shiftbench import SPLITS, SyntheticSpec, generate_dataset, read_dataset, write_dataset
from .trainer import TrainConfig, evaluate_splits, load_checkpoint, run_ablation, run_experiment, write_report
from .variants import Variant


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read JSON ({exc})") from None


def _load_config(args) -> TrainConfig:
    raw = _read_json(args.config) if args.config else {}
    if os.environ.get("IBCAAN_SEED"):
        raw["seed"] = int(os.environ["IBCAAN_SEED"])
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "variant", None):
        raw["variant"] = args.variant
    if getattr(args, "epochs", None) is not None:
        raw["epochs"] = args.epochs
        raw.setdefault("topk", min(TrainConfig().topk, args.epochs))
        raw["topk"] = min(raw["topk"], args.epochs)
    try:
        return TrainConfig.from_dict(raw)
    except (TypeError, ValueError, KeyError) as exc:
        raise DataError(f"invalid config: {exc}") from None


def pct(x: float | None) -> str:
    return "-" if x is None else f"{100.0 * x:.2f}%"


def format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths)))
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), sep, *(line(r) for r in rows)])


def render_report(report: dict) -> str:
    if "rows" in report:
        splits = report["splits"]
        header = ["Configuration", *splits, "AVG"]
        rows = [[r["label"], *(pct(r["eer"][s]) for s in splits), pct(r["avg"])] for r in report["rows"]]
        return f"EER (mean over seeds {report['seeds']})\n" + format_table(header, rows)

    cfg = report["config"]
    out = [f"variant {cfg['variant']}  seed {cfg['seed']}  beta {cfg['beta']}  alpha {cfg['alpha']}"]
    fmt = lambda v: "-" if v is None else f"{v:.4f}"
    rows = [[str(e["epoch"]), fmt(e["l_c"]), fmt(e["l_z"]), fmt(e["l_d"]), f"{e['lambda']:.4f}", pct(e["val_eer"])]
            for e in report["epochs"]]
    out.append(format_table(["epoch", "l_c", "l_z", "l_d", "lambda", "val EER"], rows))
    kept = ", ".join(str(c["epoch"]) for c in report["checkpoints"])
    out.append(f"averaged epochs: {kept}")
    final = report["final"]
    out.append(format_table(["split", "EER"], [[k, pct(v)] for k, v in final.items()]))
    return "\n\n".join(out)


def cmd_gen_data(args) -> int:
    raw = _read_json(args.spec) if args.spec else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = SyntheticSpec.from_dict(raw)
        ds = generate_dataset(spec)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid spec: {exc}") from None
    write_dataset(ds, args.out)
    sizes = ", ".join(f"{k}={len(s)}" for k, s in ds.splits.items())
    print(f"wrote {args.out} ({sizes})")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    ds = read_dataset(args.data)
    report = run_experiment(config, ds, args.out_dir)
    print(render_report(report))
    return 0


def cmd_eval(args) -> int:
    if args.scores:
        if args.checkpoint or args.data:
            raise UsageError("eval: use either --scores or --checkpoint with --data")
        eer = compute_eer(read_scores(args.scores))
        print(f"EER {pct(eer)}")
        return 0
    if not (args.checkpoint and args.data):
        raise UsageError("eval: need --scores, or --checkpoint together with --data")
    params, _ = load_checkpoint(args.checkpoint)
    ds = read_dataset(args.data)
    if params.dims.input_dim != ds.spec.input_dim:
        raise DataError("checkpoint input width does not match the dataset")
    result = evaluate_splits(params, ds)
    if args.split:
        if args.split not in result:
            raise DataError(f"split {args.split!r} missing or single-class")
        result = {args.split: result[args.split]}
    print(format_table(["split", "EER"], [[k, pct(v)] for k, v in result.items()]))
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    ds = read_dataset(args.data)
    variants = [Variant(v) for v in args.variants] if args.variants else None
    kwargs = {"variants": variants} if variants else {}
    summary = run_ablation(ds, config, seeds=args.seeds, out_dir=args.out_dir, workers=args.workers, **kwargs)
    print(render_report(summary))
    return 0


def cmd_report(args) -> int:
    report = _read_json(args.report)
    try:
        print(render_report(report))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{args.report}: not a train or ablation report ({exc})") from None
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ibcaan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    g.add_argument("--spec", help="JSON file with SyntheticSpec fields (defaults otherwise)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON file with TrainConfig fields; may name a 'preset'")
    t.add_argument("--variant", choices=[v.value for v in Variant])
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="EER of a score file or of a checkpoint on a dataset")
    e.add_argument("--scores")
    e.add_argument("--checkpoint")
    e.add_argument("--data")
    e.add_argument("--split", choices=SPLITS)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="variant x seed grid with a summary table")
    a.add_argument("--data", required=True)
    a.add_argument("--config")
    a.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    a.add_argument("--variants", nargs="+", choices=[v.value for v in Variant])
    a.add_argument("--epochs", type=int)
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--out-dir")
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", help="render a report.json or ablation.json as text")
    r.add_argument("report")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
