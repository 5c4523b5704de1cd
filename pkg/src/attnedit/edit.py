"""Prompt-to-Prompt attention editing for the autoregressive decoder.

A source run under prompt ``p`` is captured first. The edited run under
``p_star`` then replaces each freshly computed cross-attention map with an
edited one, built from the captured map by Replace, Refine or Reweight and
mixed with the free map according to the blend mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import TokenGrid
from .model import AttentionTrace, GenerationHook, Model, generate
from .text import Alignment, Prompt, align_prompts


@dataclass(frozen=True)
class Replace:
    tau: int = 0


@dataclass(frozen=True)
class Refine:
    tau: int = 0
    alignment: Alignment | None = None  # computed from the prompts when None


@dataclass(frozen=True)
class Reweight:
    j_star: int
    c: float

    def __post_init__(self):
        if not np.isfinite(self.c):
            raise ValueError("reweight factor c must be finite")
        if self.j_star < 0:
            raise ValueError("j_star must be nonnegative")


EditSpec = Replace | Refine | Reweight


@dataclass(frozen=True)
class HardInject:
    pass


@dataclass(frozen=True)
class SoftBlend:
    pass


@dataclass(frozen=True)
class Strength:
    """Fixed mix ``s * free + (1 - s) * edited`` at every layer.

    Stand-in for the unspecified "prompt strength" knob.
    """

    s: float

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"strength must lie in [0, 1], got {self.s}")


BlendMode = HardInject | SoftBlend | Strength


def blend_name(mode: BlendMode) -> str:
    if isinstance(mode, HardInject):
        return "hard"
    if isinstance(mode, SoftBlend):
        return "soft"
    return f"strength={mode.s:g}"


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def edit_replace(m_source, m_free, t: int, tau: int) -> np.ndarray:
    """Free map before step ``tau``, source map from ``tau`` on."""
    m_source = np.asarray(m_source, dtype=np.float64)
    m_free = np.asarray(m_free, dtype=np.float64)
    _same_shape(m_source, m_free, "replace requires prompts of equal length")
    return m_free if t < tau else m_source


def edit_refine(m_source, m_free, t: int, tau: int, align: Alignment) -> np.ndarray:
    """Copy aligned source columns into the free map from step ``tau`` on.

    Column ``j`` of the result is source column ``align[j]``, or free column
    ``j`` when the target token has no match.
    """
    m_source = np.asarray(m_source, dtype=np.float64)
    m_free = np.asarray(m_free, dtype=np.float64)
    if m_source.shape[:-1] != m_free.shape[:-1]:
        raise ValueError(f"head/query dimensions differ: {m_source.shape} vs {m_free.shape}")
    align.check_domain(m_source.shape[-1], m_free.shape[-1])
    if t < tau:
        return m_free
    out = m_free.copy()
    for j, src in enumerate(align.mapping):
        if src is not None:
            out[..., j] = m_source[..., src]
    return out


def edit_reweight(m_source, j_star: int, c: float) -> np.ndarray:
    """Scale column ``j_star`` by ``c`` in every head. Rows are not renormalized."""
    m_source = np.asarray(m_source, dtype=np.float64)
    if not 0 <= j_star < m_source.shape[-1]:
        raise IndexError(f"j_star={j_star} outside {m_source.shape[-1]} key columns")
    out = m_source.copy()
    out[..., j_star] = c * m_source[..., j_star]
    return out


def blend(x, y, layer: int, n_layers: int, mode: BlendMode) -> np.ndarray:
    """Mix the free map ``x`` with the edited map ``y``.

    Hard injection returns ``y``; soft blending uses ``alpha = layer / n_layers``
    (0-based layer, so layer 0 takes ``y`` unchanged); ``Strength(s)`` uses
    ``alpha = s`` at every layer.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _same_shape(x, y, "blend")
    if isinstance(mode, HardInject):
        return y
    if isinstance(mode, SoftBlend):
        if not 0 <= layer < n_layers:
            raise ValueError(f"layer {layer} outside 0..{n_layers - 1}")
        alpha = layer / n_layers
    elif isinstance(mode, Strength):
        alpha = mode.s
    else:
        raise TypeError(f"unknown blend mode {mode!r}")
    return alpha * x + (1.0 - alpha) * y


class EditHook(GenerationHook):
    """Drives the edited pass from a captured source trace.

    ``injected`` collects every ``(step, layer)`` where an edited map was
    used in place of the free one.
    """

    def __init__(self, source: AttentionTrace, spec: EditSpec, mode: BlendMode, n_layers: int,
                 inject_self: bool = False):
        self.source = source
        self.spec = spec
        self.mode = mode
        self.n_layers = n_layers
        self.edits_self = inject_self
        self.injected: set[tuple[int, int]] = set()

    def _active(self, step: int) -> bool:
        if isinstance(self.spec, Reweight):
            return True
        return step >= self.spec.tau

    def cross(self, step, layer, attn):
        if not self._active(step):
            return attn
        if step >= self.source.n_steps:
            raise AssertionError(f"source trace has no step {step}")
        m_source = self.source.cross_map(step, layer)
        spec = self.spec
        if isinstance(spec, Replace):
            y = edit_replace(m_source, attn, step, spec.tau)
        elif isinstance(spec, Refine):
            y = edit_refine(m_source, attn, step, spec.tau, spec.alignment)
        else:
            y = edit_reweight(m_source, spec.j_star, spec.c)
        self.injected.add((step, layer))
        return blend(attn, y, layer, self.n_layers, self.mode)

    def self_attn(self, step, layer, attn):
        if not self._active(step):
            return attn
        return self.source.self_map(step, layer)


@dataclass
class EditResult:
    source_grid: TokenGrid
    edited_grid: TokenGrid
    source_trace: AttentionTrace
    edited_trace: AttentionTrace
    injected: set = field(default_factory=set)


def resolve_spec(spec: EditSpec, p: Prompt, p_star: Prompt, n_steps: int) -> EditSpec:
    """Check preconditions and fill in a missing Refine alignment."""
    if isinstance(spec, (Replace, Refine)) and not 0 <= spec.tau <= n_steps:
        raise ValueError(f"tau={spec.tau} outside [0, {n_steps}]")
    if isinstance(spec, Replace):
        if len(p) != len(p_star):
            raise ValueError(f"replace needs prompts of equal length, got {len(p)} and {len(p_star)}")
        return spec
    if isinstance(spec, Refine):
        if spec.alignment is None:
            return Refine(spec.tau, align_prompts(p, p_star))
        spec.alignment.check_domain(len(p), len(p_star))
        return spec
    if isinstance(spec, Reweight):
        if p.tokens != p_star.tokens:
            raise ValueError("reweight edits the source prompt itself; p_star must equal p")
        if spec.j_star >= len(p):
            raise ValueError(f"j_star={spec.j_star} outside a {len(p)}-token prompt")
        return spec
    raise TypeError(f"unknown edit spec {spec!r}")


def run_edit(model: Model, p: Prompt, p_star: Prompt, spec: EditSpec, mode: BlendMode,
             sample_seed: int, inject_self: bool = False, source=None) -> EditResult:
    """Capture a run under ``p``, then generate under ``p_star`` with injection.

    ``source`` may pass a precomputed ``(grid, trace)`` capture of
    ``generate(model, p, sample_seed)`` to skip the first pass.
    """
    spec = resolve_spec(spec, p, p_star, model.config.codec.n_steps)
    if source is None:
        source = generate(model, p, sample_seed)
    source_grid, source_trace = source
    hook = EditHook(source_trace, spec, mode, model.config.n_layers, inject_self)
    edited_grid, edited_trace = generate(model, p_star, sample_seed, hook)
    return EditResult(source_grid, edited_grid, source_trace, edited_trace, hook.injected)


@dataclass(frozen=True)
class SweepRow:
    strength: float
    a2a: float
    t2a_source: float
    t2a_edited: float


def _mean_triplets(triplets) -> tuple[float, float, float]:
    arr = np.asarray(triplets, dtype=np.float64)
    return tuple(float(x) for x in arr.mean(axis=0))


def free_similarities(model: Model, p: Prompt, p_star: Prompt, seeds) -> tuple[float, float, float]:
    """Mean (a2a, t2a_source, t2a_edited) of unedited generation under ``p_star``."""
    from .metrics import similarity_triplet

    triplets = []
    for seed in seeds:
        a, _ = generate(model, p, seed)
        a_star, _ = generate(model, p_star, seed)
        triplets.append(similarity_triplet(a, a_star, p, p_star))
    return _mean_triplets(triplets)


def prompt_strength_sweep(model: Model, p: Prompt, p_star: Prompt, spec: EditSpec, seeds,
                          strengths) -> list[SweepRow]:
    """Mean similarities of ``run_edit`` under ``Strength(s)`` for each ``s``."""
    from .metrics import similarity_triplet

    strengths = list(strengths)
    seeds = list(seeds)
    if not strengths or not seeds:
        raise ValueError("sweep needs at least one strength and one seed")
    modes = [Strength(s) for s in strengths]
    captures = {seed: generate(model, p, seed) for seed in seeds}
    rows = []
    for mode in modes:
        triplets = []
        for seed in seeds:
            res = run_edit(model, p, p_star, spec, mode, seed, source=captures[seed])
            triplets.append(similarity_triplet(res.source_grid, res.edited_grid, p, p_star))
        rows.append(SweepRow(mode.s, *_mean_triplets(triplets)))
    return rows
