"""Analytic weight + optimizer-state memory for LLaMA-style architectures.

Only weights and optimizer states are counted: no activations, gradients or
allocator overhead. Matrices are charged the per-variant element counts of
:func:`apollo_optim.optimizers.state_element_count`; vectors (norm gains) are
always charged full AdamW state.

By default the rank-r variants (APOLLO, GaLore-RP) keep the token embedding
and output head on full AdamW state, as the usual pre-training recipe projects
only attention and MLP weights, while APOLLO-Mini compresses every matrix.
This pairing reproduces the reference per-size memory figures (GiB) to within
a few percent for the 130M and 350M configurations. Pass ``full_rank=()`` to
charge every matrix with the low-rank formula.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from .optimizers import LOW_RANK_VARIANTS, Variant, state_element_count

DENSE_BY_DEFAULT = ("embed_tokens", "lm_head")

GB = 1e9
GIB = float(1 << 30)

# hidden, intermediate, heads, layers
LLAMA_SIZES = {
    "60m": (512, 1376, 8, 8),
    "130m": (768, 2048, 12, 12),
    "350m": (1024, 2736, 16, 24),
    "1b": (2048, 5461, 24, 32),
    "7b": (4096, 11008, 32, 32),
}


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple

    @property
    def numel(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    @property
    def is_matrix(self) -> bool:
        return len(self.shape) == 2 and min(self.shape) > 1


@dataclass
class ArchSpec:
    name: str
    tensors: list
    bytes_per_elem: int = 2
    hidden: Optional[int] = None
    intermediate: Optional[int] = None
    layers: Optional[int] = None
    vocab: Optional[int] = None

    def __post_init__(self):
        for t in self.tensors:
            if not t.shape or any(d < 1 for d in t.shape):
                raise ConfigError(f"tensor {t.name} has non-positive dimension {t.shape}")

    @property
    def param_count(self) -> int:
        return sum(t.numel for t in self.tensors)


def build_llama(name: str, layers: int, hidden: int, intermediate: int, vocab: int = 32000, bytes_per_elem: int = 2) -> ArchSpec:
    if layers < 1:
        raise ConfigError(f"layers must be >= 1, got {layers}")
    if min(hidden, intermediate, vocab) < 1:
        raise ConfigError("hidden, intermediate and vocab must be positive")
    tensors = [TensorSpec("embed_tokens", (vocab, hidden))]
    for i in range(layers):
        p = f"layers.{i}."
        tensors += [TensorSpec(p + f"self_attn.{k}_proj", (hidden, hidden)) for k in "qkvo"]
        tensors += [
            TensorSpec(p + "mlp.gate_proj", (intermediate, hidden)),
            TensorSpec(p + "mlp.up_proj", (intermediate, hidden)),
            TensorSpec(p + "mlp.down_proj", (hidden, intermediate)),
            TensorSpec(p + "input_layernorm", (hidden,)),
            TensorSpec(p + "post_attention_layernorm", (hidden,)),
        ]
    tensors += [TensorSpec("norm", (hidden,)), TensorSpec("lm_head", (vocab, hidden))]
    return ArchSpec(name, tensors, bytes_per_elem, hidden, intermediate, layers, vocab)


def llama_arch(size: str, vocab: int = 32000, bytes_per_elem: int = 2) -> ArchSpec:
    key = size.lower().removeprefix("llama").removeprefix("-").replace(" ", "")
    if key not in LLAMA_SIZES:
        raise ConfigError(f"unknown LLaMA size {size!r}; known: {', '.join(LLAMA_SIZES)}")
    hidden, inter, _heads, layers = LLAMA_SIZES[key]
    return build_llama(f"llama-{key}", layers, hidden, inter, vocab, bytes_per_elem)


def load_arch(path) -> ArchSpec:
    """Read an architecture from JSON or YAML with keys ``name, layers, hidden,
    intermediate, vocab, bytes_per_elem``."""
    path = os.fspath(path)
    with open(path) as fh:
        if path.endswith((".yaml", ".yml")):
            import yaml

            cfg = yaml.safe_load(fh)
        else:
            cfg = json.load(fh)
    missing = {"layers", "hidden", "intermediate"} - set(cfg)
    if missing:
        raise ConfigError(f"architecture file {path} missing keys: {sorted(missing)}")
    return build_llama(
        cfg.get("name", os.path.splitext(os.path.basename(path))[0]),
        int(cfg["layers"]),
        int(cfg["hidden"]),
        int(cfg["intermediate"]),
        int(cfg.get("vocab", 32000)),
        int(cfg.get("bytes_per_elem", 2)),
    )


@dataclass
class MemoryReport:
    arch: str
    variant: str
    rank: Optional[int]
    bytes_per_elem: int
    param_count: int
    weight_bytes: int
    state_bytes: int
    total_bytes: int
    full_rank: tuple = ()
    tensors: list = field(default_factory=list)

    @property
    def total_gb(self) -> float:
        return self.total_bytes / GB

    @property
    def total_gib(self) -> float:
        return self.total_bytes / GIB

    def to_dict(self, breakdown: bool = True) -> dict:
        d = {
            "arch": self.arch,
            "variant": self.variant,
            "rank": self.rank,
            "bytes_per_elem": self.bytes_per_elem,
            "param_count": self.param_count,
            "weight_bytes": self.weight_bytes,
            "state_bytes": self.state_bytes,
            "total_bytes": self.total_bytes,
            "weight_gb": self.weight_bytes / GB,
            "state_gb": self.state_bytes / GB,
            "total_gb": self.total_gb,
            "total_gib": self.total_gib,
            "full_rank_tensors": list(self.full_rank),
        }
        if breakdown:
            d["tensors"] = self.tensors
        return d


def default_full_rank(variant) -> tuple:
    variant = Variant(variant)
    return DENSE_BY_DEFAULT if variant in (Variant.APOLLO, Variant.GALORE_RP) else ()


def estimate(
    arch: ArchSpec, variant, rank: Optional[int] = None, bytes_per_elem: Optional[int] = None, full_rank=None
) -> MemoryReport:
    """Weight and optimizer-state bytes for ``arch`` trained with ``variant``.

    ``full_rank`` names matrices that keep full AdamW state regardless of the
    variant; ``None`` selects :func:`default_full_rank`.
    """
    variant = Variant(variant)
    if full_rank is None:
        full_rank = default_full_rank(variant)
    full_rank = tuple(full_rank)
    nbytes = arch.bytes_per_elem if bytes_per_elem is None else bytes_per_elem
    if variant is Variant.APOLLO_MINI:
        rank = 1
    if variant in LOW_RANK_VARIANTS:
        if rank is None or rank < 1:
            raise ConfigError(f"{variant.value} needs rank >= 1, got {rank}")
        offending = [
            t.name for t in arch.tensors if t.is_matrix and t.name not in full_rank and rank > min(t.shape)
        ]
        if offending:
            raise ConfigError(f"rank {rank} exceeds the smaller dimension of: {', '.join(offending)}")
    rows = []
    weight_elems = state_elems = 0
    for t in arch.tensors:
        if not t.is_matrix or t.name in full_rank:
            s = 2 * t.numel
        else:
            s = state_element_count(variant, min(t.shape), max(t.shape), rank or 1)
        weight_elems += t.numel
        state_elems += s
        rows.append({"name": t.name, "shape": list(t.shape), "params": t.numel, "state_elements": s})
    return MemoryReport(
        arch=arch.name,
        variant=variant.value,
        rank=rank if variant in LOW_RANK_VARIANTS else None,
        bytes_per_elem=nbytes,
        param_count=weight_elems,
        weight_bytes=weight_elems * nbytes,
        state_bytes=state_elems * nbytes,
        total_bytes=(weight_elems + state_elems) * nbytes,
        full_rank=full_rank,
        tensors=rows,
    )
