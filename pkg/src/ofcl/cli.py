"""Command-line surface: generate streams, run the pipeline, evaluate, inspect."""

from __future__ import annotations

import argparse
import glob
import os
import sys

from .config import resolve_config
from .errors import OfclError, ParseError, UsageError
from .knowledge import load_knowledge, render_label
from .metrics import aggregate, merge_closed, read_records, render_report
from .pipeline import run as run_pipeline
from .stream import generate, write_stream
from .tokens import TokenBank


def _add_config_args(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides OFCL_SEED and the file)")


def cmd_generate(args) -> int:
    config = resolve_config(args.config, overrides={"seed": args.seed})
    episodes = generate(config.stream_spec())
    manifest = write_stream(args.out, episodes)
    print(f"wrote {len(episodes)} episodes, manifest at {manifest}")
    return 0


def cmd_run(args) -> int:
    overrides = {"seed": args.seed}
    if args.episodes:
        overrides["episodes"] = args.episodes
    config = resolve_config(args.config, overrides=overrides)
    result = run_pipeline(config, args.out)
    sys.stdout.write(render_report(result.report))
    print(f"artifacts in {args.out}")
    return 0


def _load_run_records(path):
    """Records plus optional closed companions and promotion map for a path
    that is either a run directory or a single records CSV."""
    if os.path.isdir(path):
        open_files = sorted(glob.glob(os.path.join(path, "records_task_*.csv")))
        if not open_files:
            raise UsageError(f"no records_task_*.csv files in {path}")
        per_pass = []
        for f in open_files:
            records = read_records(f)
            closed_file = os.path.join(
                os.path.dirname(f), os.path.basename(f).replace("records_", "records_closed_")
            )
            if os.path.exists(closed_file):
                records = merge_closed(records, read_records(closed_file, closed=True))
            per_pass.append(records)
        knowledge_file = os.path.join(path, "knowledge_final.txt")
        return per_pass, knowledge_file if os.path.exists(knowledge_file) else None, False
    return [read_records(path)], None, True


def cmd_eval(args) -> int:
    per_pass, discovered, single_file = _load_run_records(args.path)
    knowledge_file = args.knowledge or discovered
    promotions = {}
    if knowledge_file:
        promotions = load_knowledge(knowledge_file).promotion_map()
    # a lone CSV carries only its predicted column, so it is always scored
    # under the open-world rules (the column is taken literally)
    mode = "open-world" if (args.open_world or single_file) else "closed"
    report = aggregate(per_pass, mode=mode, promotions=promotions, tpr_target=args.tpr_target)
    text = render_report(report)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_inspect(args) -> int:
    with open(args.path) as fh:
        first = fh.readline().strip()
    if first.startswith("ofcl-knowledge-space"):
        space = load_knowledge(args.path)
        print(f"spheres ({len(space.spheres)})")
        print(f"{'provenance':<11} {'label':<8} {'task':<5} {'radius':<12} centroid")
        for s in space.spheres:
            head = " ".join(f"{v:.4f}" for v in s.centroid[:4])
            tail = " ..." if s.centroid.shape[0] > 4 else ""
            print(
                f"{s.provenance:<11} {render_label(s.label):<8} {s.task_of_origin:<5} "
                f"{s.radius:<12.6f} {head}{tail}"
            )
        print(f"promotions ({len(space.promotion_log)})")
        for p in space.promotion_log:
            print(f"task {p.task}: {render_label(p.pseudo_id)} -> {p.absorbed_into}")
        return 0
    if first.startswith("ofcl-token-bank"):
        bank = TokenBank.load(args.path)
        print(f"tokens ({len(bank.tokens)})")
        print(f"{'index':<6} {'task':<5} {'frequency':<10} key_norm")
        for i, tok in enumerate(bank.tokens):
            norm = float(sum(v * v for v in tok.key) ** 0.5)
            print(f"{i:<6} {tok.task_of_origin:<5} {tok.frequency:<10} {norm:.6f}")
        return 0
    raise ParseError(f"unrecognized dump type {first!r}", line=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ofcl",
        description=(
            "Open-world few-shot continual learning engine: synthetic task "
            "streams, hypersphere open boundaries, adaptive knowledge space."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write episode files and a manifest")
    _add_config_args(p)
    p.add_argument("--out", default="episodes", help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="train, evaluate and dump all artifacts")
    _add_config_args(p)
    p.add_argument("--episodes", help="episode manifest (otherwise generated)")
    p.add_argument("--out", default="run", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="recompute metrics from records")
    p.add_argument("path", help="run directory or records CSV")
    p.add_argument("--open-world", action="store_true", help="report open-world accuracy")
    p.add_argument("--knowledge", help="knowledge dump supplying the promotion log")
    p.add_argument("--tpr-target", type=float, default=0.95)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="pretty-print a knowledge or token dump")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OfclError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
