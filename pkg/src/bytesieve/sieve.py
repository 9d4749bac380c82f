"""Byte masks and the pre-execution veto."""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .mutation import MutationProposal
from .neural.train import predict_heatmap

BASELINE = "baseline"
AUGMENTED = "augmented"

DEFAULT_CACHE_SIZE = 4096
MIN_THETA = 1e-9


def seed_hash(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=16).digest()


@dataclass(frozen=True)
class SieveConfig:
    alpha: int = 0
    theta: float = 0.5
    p_explore: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie strictly between 0 and 1")
        if not 0.0 <= self.p_explore <= 1.0:
            raise ValueError("p_explore must lie in [0, 1]")


@dataclass(frozen=True)
class ByteMask:
    bits: bytes  # one 0/1 byte per seed position
    seed_hash: bytes | None = None

    def __len__(self) -> int:
        return len(self.bits)

    def useful(self) -> list[int]:
        return [i for i, b in enumerate(self.bits) if b]

    @classmethod
    def all_true(cls, seed: bytes) -> "ByteMask":
        return cls(b"\x01" * len(seed), seed_hash(seed))


def build_bytemask(heat, theta: float = 0.5, seed: bytes | None = None) -> ByteMask:
    h = np.asarray(heat, dtype=np.float64)
    if h.size and (h.min() < 0.0 or h.max() > 1.0):
        raise ValueError("heat values must lie in [0, 1]")
    return ByteMask((h >= theta).astype(np.uint8).tobytes(), seed_hash(seed) if seed is not None else None)


def calibrate_theta(model, inputs, quantile: float = 0.5) -> float:
    """Threshold at the given quantile of predicted heat over ``inputs``.

    A model trained with an absolute-error loss on sparse labels predicts
    values far below 0.5 almost everywhere, so a fixed 0.5 cut marks nothing
    useful.  Cutting at the median of the heat seen on the campaign's own
    seeds keeps the hotter half of their bytes.
    """
    if not 0.0 <= quantile <= 1.0:
        raise ValueError("quantile must lie in [0, 1]")
    heat = np.concatenate([predict_heatmap(model, x) for x in inputs if x])
    if heat.size == 0:
        raise ValueError("need at least one non-empty input")
    return float(np.clip(np.quantile(heat, quantile), MIN_THETA, 1.0 - MIN_THETA))


def overlap(proposal: MutationProposal, mask: ByteMask) -> int:
    bits = mask.bits
    return sum(bits[i] for i in proposal.touched)


def should_execute(proposal: MutationProposal, mask: ByteMask, alpha: int = 0, seed: bytes | None = None) -> bool:
    """Execute only if the proposal touches more than ``alpha`` useful bytes."""
    if seed is not None and mask.seed_hash is not None and seed_hash(seed) != mask.seed_hash:
        raise ValueError("byte mask was computed for a different seed")
    bits = mask.bits
    if alpha < 0:
        return True
    if alpha == 0:
        for i in proposal.touched:
            if bits[i]:
                return True
        return False
    return sum(bits[i] for i in proposal.touched) > alpha


def choose_strategy(rng, p_explore: float) -> str:
    """Per-seed coin flip: with probability ``p_explore`` fuzz unaugmented."""
    return BASELINE if rng.random() < p_explore else AUGMENTED


class ConstantMasks:
    """Mask source that marks every byte useful (the degenerate sieve)."""

    queries = 0

    def __call__(self, seed: bytes) -> ByteMask:
        return ByteMask.all_true(seed)


class ModelMasks:
    """LRU-cached ``seed -> ByteMask`` lookups backed by a heat-map model."""

    def __init__(self, model, theta: float = 0.5, capacity: int = DEFAULT_CACHE_SIZE):
        self.model = model
        self.theta = theta
        self.capacity = capacity
        self.queries = 0  # model forward passes
        self._cache: OrderedDict[bytes, ByteMask] = OrderedDict()

    def __call__(self, seed: bytes) -> ByteMask:
        key = seed_hash(seed)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        self.queries += 1
        mask = build_bytemask(predict_heatmap(self.model, seed), self.theta, seed)
        self._cache[key] = mask
        if len(self._cache) > self.capacity:
            self._cache.popitem(last=False)
        return mask

    def __len__(self) -> int:
        return len(self._cache)


def query_model_cached(masks: ModelMasks, seed: bytes) -> ByteMask:
    return masks(seed)
