"""Dataset ingestion, batch edit runs, aggregate tables and attention dumps."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .codec import CodecConfig
from .edit import (BlendMode, HardInject, Refine, Replace, Reweight, SoftBlend, blend_name,
                   free_similarities, prompt_strength_sweep, run_edit)
from .metrics import EMBEDDING_NOTE, MetricsReport, evaluate
from .model import AttentionTrace, Model, ModelConfig
from .text import Prompt, Vocabulary, tokenize

log = logging.getLogger(__name__)

EDIT_TYPES = ("replace", "refine", "reweight")
AXES = ("instrument_change", "mood_tonal", "genre_shift", "melodic_transformation",
        "harmonic_modification", "form_structure")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)


class DatasetError(ValueError):
    pass


def fixture_path() -> Path:
    return Path(str(resources.files("attnedit") / "data" / "prompt_pairs.jsonl"))


def vocab_path() -> Path:
    return Path(str(resources.files("attnedit") / "data" / "vocab.json"))


def default_vocabulary() -> Vocabulary:
    return Vocabulary.load(vocab_path())


@dataclass(frozen=True)
class PromptPair:
    id: str
    edit_type: str
    axis: str
    source_prompt: str
    target_prompt: str
    j_star_token: str | None = None
    c: float | None = None
    j_star: int | None = None

    def prompts(self, vocab: Vocabulary) -> tuple[Prompt, Prompt]:
        return Prompt.from_text(self.source_prompt, vocab), Prompt.from_text(self.target_prompt, vocab)

    def edit_spec(self, tau: int = 0):
        if self.edit_type == "replace":
            return Replace(tau)
        if self.edit_type == "refine":
            return Refine(tau)
        return Reweight(self.j_star, self.c)


def parse_pair(obj: dict) -> PromptPair:
    pid = obj.get("id")
    if not isinstance(pid, str) or not pid:
        raise DatasetError("pair without an id")
    try:
        edit_type, axis = obj["edit_type"], obj["axis"]
        source, target = obj["source_prompt"], obj["target_prompt"]
    except KeyError as exc:
        raise DatasetError(f"pair {pid}: missing field {exc.args[0]}") from None
    if edit_type not in EDIT_TYPES:
        raise DatasetError(f"pair {pid}: unknown edit_type {edit_type!r}")
    if axis not in AXES:
        raise DatasetError(f"pair {pid}: unknown axis {axis!r}")
    try:
        src_words, tgt_words = tokenize(source), tokenize(target)
    except ValueError as exc:
        raise DatasetError(f"pair {pid}: {exc}") from None
    pair = PromptPair(pid, edit_type, axis, source, target)
    if edit_type == "replace" and len(src_words) != len(tgt_words):
        raise DatasetError(f"pair {pid}: replace prompts tokenize to {len(src_words)} and {len(tgt_words)} tokens")
    if edit_type == "reweight":
        params = obj.get("params")
        if src_words != tgt_words:
            raise DatasetError(f"pair {pid}: reweight needs target_prompt == source_prompt")
        if not params or "j_star_token" not in params or "c" not in params:
            raise DatasetError(f"pair {pid}: reweight needs params.j_star_token and params.c")
        word = str(params["j_star_token"]).lower()
        hits = [n for n, w in enumerate(src_words) if w == word]
        if len(hits) != 1:
            raise DatasetError(f"pair {pid}: j_star_token {word!r} occurs {len(hits)} times in the source prompt")
        c = float(params["c"])
        if not math.isfinite(c) or not -2.0 <= c <= 2.0:
            raise DatasetError(f"pair {pid}: c={c} outside [-2, 2]")
        pair = replace(pair, j_star_token=word, c=c, j_star=hits[0])
    return pair


def load_dataset(path) -> list[PromptPair]:
    pairs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DatasetError(f"line {lineno}: expected a JSON object")
            try:
                pair = parse_pair(obj)
            except DatasetError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from None
            if pair.id in seen:
                raise DatasetError(f"line {lineno}: duplicate pair id {pair.id}")
            seen.add(pair.id)
            pairs.append(pair)
    return pairs


def build_vocabulary(pairs) -> Vocabulary:
    return Vocabulary.build([t for p in pairs for t in (p.source_prompt, p.target_prompt)])


# -- configuration -----------------------------------------------------------

_MODEL_KEYS = {"d_model": int, "n_layers": int, "n_heads": int, "top_k": int,
               "temperature": float, "ff_mult": int, "weight_seed": int}
_CODEC_KEYS = {"K": int, "M": int, "T": int, "frame_rate": float}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        kinds = {**_MODEL_KEYS, **_CODEC_KEYS}
        if key not in kinds:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = kinds[key](value)
    return out


def make_config(vocab_size: int, overrides: dict | None = None, weight_seed: int | None = None) -> ModelConfig:
    overrides = dict(overrides or {})
    codec = CodecConfig(**{k: overrides.pop(k) for k in list(overrides) if k in _CODEC_KEYS})
    if weight_seed is not None:
        overrides["weight_seed"] = weight_seed
    return ModelConfig(vocab_size=vocab_size, codec=codec, **overrides)


# -- batch runs --------------------------------------------------------------

@dataclass
class RunRecord:
    pair_id: str
    edit_type: str
    seed: int
    mode: str
    metrics: MetricsReport | None
    error: str | None = None
    paths: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"pair_id": self.pair_id, "edit_type": self.edit_type, "seed": self.seed, "mode": self.mode,
             "metrics": None if self.metrics is None else json.loads(self.metrics.to_json()),
             "error": self.error, "paths": self.paths}
        return d


@dataclass
class AggregateCell:
    mean: float
    std: float
    n: int
    complete: bool

    def format(self) -> str:
        if self.n == 0:
            return "n/a"
        text = f"{self.mean:.3f} ∓ {self.std:.3f}"
        return text if self.complete else text + " (incomplete)"


def _cell(values, complete: bool) -> AggregateCell:
    vals = np.asarray([v for v in values if not math.isnan(v)], dtype=np.float64)
    if vals.size == 0:
        return AggregateCell(math.nan, math.nan, 0, False)
    # a dropped NaN also makes the cell incomplete
    return AggregateCell(float(vals.mean()), float(vals.std()), int(vals.size),
                         complete and vals.size == len(values))


def aggregate(records, group_key=lambda r: r.edit_type) -> dict[str, dict[str, AggregateCell]]:
    """Mean and population std per metric per group."""
    groups: dict[str, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(group_key(r), []).append(r)
    table = {}
    for name, recs in groups.items():
        ok = [r for r in recs if r.metrics is not None]
        complete = len(ok) == len(recs)
        table[name] = {f: _cell([getattr(r.metrics, f) for r in ok], complete) for f in MetricsReport.FIELDS}
    return table


def _write_outputs(out_dir: Path, pair: PromptPair, seed: int, mode: str, result, report) -> dict:
    stem = f"{pair.id}_seed{seed}_{mode}".replace("=", "")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"source_grid": out_dir / f"{stem}_source.json", "edited_grid": out_dir / f"{stem}_edited.json",
             "report": out_dir / f"{stem}_metrics.json"}
    paths["source_grid"].write_text(result.source_grid.to_json())
    paths["edited_grid"].write_text(result.edited_grid.to_json())
    paths["report"].write_text(report.to_json())
    return {k: str(v) for k, v in paths.items()}


def run_pair(model: Model, vocab: Vocabulary, pair: PromptPair, seed: int, mode: BlendMode,
             out_dir: Path | None = None, tau: int = 0) -> RunRecord:
    name = blend_name(mode)
    try:
        p, p_star = pair.prompts(vocab)
        result = run_edit(model, p, p_star, pair.edit_spec(tau), mode, seed)
        report = evaluate(result.source_grid, result.edited_grid, p, p_star)
    except Exception as exc:  # recorded per run, never fatal to the batch
        log.warning("run %s seed %d failed: %s", pair.id, seed, exc)
        return RunRecord(pair.id, pair.edit_type, seed, name, None, f"{type(exc).__name__}: {exc}")
    paths = _write_outputs(out_dir, pair, seed, name, result, report) if out_dir else {}
    return RunRecord(pair.id, pair.edit_type, seed, name, report, None, paths)


def run_dataset(model: Model, pairs, seeds=DEFAULT_SEEDS, mode: BlendMode = HardInject(),
                vocab: Vocabulary | None = None, out_dir=None, tau: int = 0):
    """Run every pair under every seed; returns ``(records, aggregate table)``."""
    pairs = list(pairs)
    seeds = list(seeds)
    if not pairs or not seeds:
        raise ValueError("run_dataset needs at least one pair and one seed")
    vocab = vocab or default_vocabulary()
    out_dir = Path(out_dir) if out_dir else None
    records = [run_pair(model, vocab, pair, seed, mode, out_dir, tau) for pair in pairs for seed in seeds]
    return records, aggregate(records)


def compare_blending(model: Model, pairs, seeds=DEFAULT_SEEDS, vocab: Vocabulary | None = None):
    """Two-row table: hard injection vs soft blending, T2A (edited prompt) and A2A."""
    table = {}
    for name, mode in (("hard", HardInject()), ("soft", SoftBlend())):
        records, _ = run_dataset(model, pairs, seeds, mode, vocab)
        cells = aggregate(records, group_key=lambda r: "all")["all"]
        table[name] = {"T2A": cells["t2a_similarity_edited"], "A2A": cells["a2a_similarity"]}
    return table


def sweep_dataset(model: Model, pairs, seeds=DEFAULT_SEEDS, strengths=(0.0, 0.25, 0.5, 0.75, 1.0),
                  vocab: Vocabulary | None = None):
    """Dataset-mean prompt-strength sweep plus the unedited baseline row.

    Returns ``(rows, baseline)`` where each row is ``(s, a2a, t2a_source,
    t2a_edited)`` and ``baseline`` is the same triple for free generation.
    """
    vocab = vocab or default_vocabulary()
    pairs = list(pairs)
    per_pair = []
    base = []
    for pair in pairs:
        p, p_star = pair.prompts(vocab)
        per_pair.append(prompt_strength_sweep(model, p, p_star, pair.edit_spec(), seeds, strengths))
        base.append(free_similarities(model, p, p_star, seeds))
    rows = []
    for n, s in enumerate(strengths):
        vals = np.asarray([[r[n].a2a, r[n].t2a_source, r[n].t2a_edited] for r in per_pair])
        rows.append((float(s), *(float(x) for x in vals.mean(axis=0))))
    baseline = tuple(float(x) for x in np.asarray(base).mean(axis=0))
    return rows, baseline


# -- report writers ----------------------------------------------------------

def write_aggregate_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {EMBEDDING_NOTE}\n")
        w = csv.writer(fh)
        w.writerow(["edit_type", *MetricsReport.FIELDS])
        for name in sorted(table):
            w.writerow([name, *(table[name][f].format() for f in MetricsReport.FIELDS)])


def write_blending_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {EMBEDDING_NOTE}; values are not comparable to pretrained-model scores\n")
        w = csv.writer(fh)
        w.writerow(["configuration", "T2A", "A2A"])
        for name in ("hard", "soft"):
            w.writerow([name, table[name]["T2A"].format(), table[name]["A2A"].format()])


def write_sweep_csv(rows, baseline, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {EMBEDDING_NOTE}; strength s mixes s*free + (1-s)*edited maps (stand-in definition)\n")
        w = csv.writer(fh)
        w.writerow(["strength", "a2a", "t2a_source", "t2a_edited"])
        for row in rows:
            w.writerow([repr(x) for x in row])
        w.writerow(["free", *(repr(x) for x in baseline)])


def write_records_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


# -- attention dumps ---------------------------------------------------------

def dump_attention(trace: AttentionTrace, out_path, heatmap_path=None, kind: str = "cross"):
    """Write one CSV row per (step, layer, head, key_index, weight).

    Weights use Python's shortest round-trip float repr, so reading them back
    with ``float()`` reproduces the trace bit-for-bit. ``kind="self"`` dumps
    the causal self-attention maps (key width ``step + 1``).
    """
    if kind not in ("cross", "self"):
        raise ValueError(f"kind must be 'cross' or 'self', got {kind!r}")
    get = trace.cross_map if kind == "cross" else trace.self_map
    rows = 0
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "layer", "head", "key_index", "weight"])
        for s in range(trace.n_steps):
            for i in range(trace.n_layers):
                m = get(s, i)
                for h in range(m.shape[0]):
                    for j in range(m.shape[1]):
                        w.writerow([s, i, h, j, repr(float(m[h, j]))])
                        rows += 1
    if heatmap_path is not None:
        write_heatmap(trace, heatmap_path)
    return rows


def write_heatmap(trace: AttentionTrace, path):
    """Per-layer cross-attention summed over heads: one row per (layer, step)."""
    L = trace.cross.shape[3]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "step", *(f"key_{j}" for j in range(L))])
        summed = trace.cross.sum(axis=2)
        for i in range(trace.n_layers):
            for s in range(trace.n_steps):
                w.writerow([i, s, *(repr(float(x)) for x in summed[s, i])])


def load_attention_csv(path) -> dict[tuple[int, int], np.ndarray]:
    """Read a ``dump_attention`` file back into ``{(step, layer): heads x keys}``."""
    cells: dict[tuple[int, int], dict[tuple[int, int], float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["step"]), int(row["layer"]))
            cells.setdefault(key, {})[(int(row["head"]), int(row["key_index"]))] = float(row["weight"])
    out = {}
    for key, vals in cells.items():
        H = 1 + max(h for h, _ in vals)
        W = 1 + max(j for _, j in vals)
        m = np.zeros((H, W))
        for (h, j), v in vals.items():
            m[h, j] = v
        out[key] = m
    return out
