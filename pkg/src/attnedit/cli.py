"""Command-line entry point: ``attnedit <command> ...``.

Global flags go before the command. Failures exit nonzero and print a JSON
object ``{"error": <type>, "message": <text>}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import _backend
from .codec import TokenGrid
from .edit import HardInject, Refine, Replace, Reweight, SoftBlend, Strength, run_edit
from .metrics import EMBEDDING_NOTE, evaluate
from .model import generate, init_model
from .pipeline import (DEFAULT_SEEDS, compare_blending, default_vocabulary, dump_attention, fixture_path,
                       load_dataset, make_config, read_config, run_dataset, sweep_dataset, write_aggregate_csv,
                       write_blending_csv, write_records_jsonl, write_sweep_csv)
from .text import Prompt


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}") from None


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _blend(args):
    if args.strength is not None:
        return Strength(args.strength)
    return SoftBlend() if args.blend == "soft" else HardInject()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="attnedit", description="Prompt-to-Prompt attention editing on a toy codebook decoder")
    p.add_argument("--seed", type=int, default=1, help="sampling seed (default 1)")
    p.add_argument("--weight-seed", type=int, default=None, help="model weight seed (default 0)")
    p.add_argument("--config", type=Path, help="key = value file overriding model/codec defaults")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--backend", choices=["auto", "compiled", "python"], default="auto")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample one token grid")
    g.add_argument("--prompt", required=True)

    def blend_flags(sp):
        sp.add_argument("--blend", choices=["hard", "soft"], default="hard")
        sp.add_argument("--strength", type=float, help="use Strength(s) instead of --blend")

    e = sub.add_parser("edit", help="run one source/edited pair")
    e.add_argument("--source", required=True)
    e.add_argument("--target", help="edited prompt (defaults to --source for reweight)")
    e.add_argument("--edit", choices=["replace", "refine", "reweight"], required=True)
    e.add_argument("--tau", type=int, default=0)
    e.add_argument("--j-star-token", help="reweighted word")
    e.add_argument("--c", type=float, default=1.0)
    e.add_argument("--inject-self", action="store_true")
    blend_flags(e)

    ev = sub.add_parser("eval", help="score two token grid files")
    ev.add_argument("--source-grid", type=Path, required=True)
    ev.add_argument("--edited-grid", type=Path, required=True)
    ev.add_argument("--source-prompt", required=True)
    ev.add_argument("--target-prompt")

    def dataset_flags(sp):
        sp.add_argument("--dataset", type=Path, default=None, help="prompt-pair JSONL (default: shipped fixture)")
        sp.add_argument("--seeds", type=_seeds, default=list(DEFAULT_SEEDS))
        sp.add_argument("--limit", type=int, help="use only the first N pairs")

    rd = sub.add_parser("run-dataset", help="edit every pair under every seed")
    dataset_flags(rd)
    rd.add_argument("--tau", type=int, default=0)
    blend_flags(rd)

    cb = sub.add_parser("compare-blending", help="hard injection vs soft blending table")
    dataset_flags(cb)

    sw = sub.add_parser("sweep-strength", help="prompt-strength sweep table")
    dataset_flags(sw)
    sw.add_argument("--strengths", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])

    da = sub.add_parser("dump-attn", help="write the attention trace of one generation as CSV")
    da.add_argument("--prompt", required=True)
    da.add_argument("--kind", choices=["cross", "self"], default="cross")
    da.add_argument("--heatmap", action="store_true", help="also write the per-layer head-summed heatmap")
    return p


def _out_dir(args) -> Path:
    out = args.out or Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pairs(args):
    pairs = load_dataset(args.dataset or fixture_path())
    return pairs[: args.limit] if args.limit else pairs


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.backend != "auto":
        _backend.use(args.backend)
    vocab = default_vocabulary()
    overrides = read_config(args.config) if args.config else {}
    model = init_model(make_config(len(vocab), overrides, args.weight_seed))
    prompt = lambda text: Prompt.from_text(text, vocab)

    if args.command == "generate":
        grid, _ = generate(model, prompt(args.prompt), args.seed)
        result = {"grid": grid.to_dict()}
        if args.out:
            path = _out_dir(args) / "grid.json"
            path.write_text(grid.to_json())
            result = {"grid_path": str(path)}
        return result

    if args.command == "edit":
        target = args.target or args.source
        p, p_star = prompt(args.source), prompt(target)
        if args.edit == "replace":
            spec = Replace(args.tau)
        elif args.edit == "refine":
            spec = Refine(args.tau)
        else:
            if not args.j_star_token:
                raise UsageError("reweight needs --j-star-token")
            word = args.j_star_token.lower()
            if p.words.count(word) != 1:
                raise ValueError(f"{word!r} must occur exactly once in the source prompt")
            spec = Reweight(p.words.index(word), args.c)
        res = run_edit(model, p, p_star, spec, _blend(args), args.seed, inject_self=args.inject_self)
        report = evaluate(res.source_grid, res.edited_grid, p, p_star)
        result = {"metrics": json.loads(report.to_json()), "note": EMBEDDING_NOTE}
        if args.out:
            out = _out_dir(args)
            (out / "source_grid.json").write_text(res.source_grid.to_json())
            (out / "edited_grid.json").write_text(res.edited_grid.to_json())
            (out / "metrics.json").write_text(report.to_json())
        return result

    if args.command == "eval":
        rate = model.config.codec.frame_rate
        src = TokenGrid.from_json(args.source_grid.read_text(), rate)
        edit = TokenGrid.from_json(args.edited_grid.read_text(), rate)
        p = prompt(args.source_prompt)
        p_star = prompt(args.target_prompt) if args.target_prompt else p
        report = evaluate(src, edit, p, p_star)
        return {"metrics": json.loads(report.to_json()), "note": EMBEDDING_NOTE}

    if args.command == "run-dataset":
        out = _out_dir(args)
        records, table = run_dataset(model, _pairs(args), args.seeds, _blend(args), vocab, out / "runs", args.tau)
        write_records_jsonl(records, out / "records.jsonl")
        write_aggregate_csv(table, out / "aggregate.csv")
        return {"records": len(records), "failed": sum(r.error is not None for r in records),
                "aggregate": {k: {f: c.format() for f, c in row.items()} for k, row in table.items()},
                "note": EMBEDDING_NOTE}

    if args.command == "compare-blending":
        out = _out_dir(args)
        table = compare_blending(model, _pairs(args), args.seeds, vocab)
        write_blending_csv(table, out / "blending.csv")
        return {k: {c: cell.format() for c, cell in row.items()} for k, row in table.items()}

    if args.command == "sweep-strength":
        out = _out_dir(args)
        rows, baseline = sweep_dataset(model, _pairs(args), args.seeds, args.strengths, vocab)
        write_sweep_csv(rows, baseline, out / "sweep.csv")
        return {"columns": ["strength", "a2a", "t2a_source", "t2a_edited"], "rows": rows, "free": baseline}

    if args.command == "dump-attn":
        out = _out_dir(args)
        _, trace = generate(model, prompt(args.prompt), args.seed)
        heat = out / "heatmap.csv" if args.heatmap else None
        n = dump_attention(trace, out / "attention.csv", heat, kind=args.kind)
        return {"rows": n, "path": str(out / "attention.csv"), "heatmap": str(heat) if heat else None}

    raise UsageError(f"unknown command {args.command}")


def main(argv=None) -> int:
    try:
        result = run(argv)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
