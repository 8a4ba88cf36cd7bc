"""Shared domain types and deterministic randomness.

Every stochastic component in the simulator draws from a tagged substream
derived from a single experiment seed, so any run is a pure function of
(config, seed).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Sample:
    """One data point: a dense integer id, a feature vector, and (for
    generated data) its true class label.

    Whether a label is *visible* to training is decided by the owning
    ClientShard, not by this record: the simulator keeps the true label
    around for diagnostics even when the sample is treated as unlabeled.
    """

    id: int
    embedding: np.ndarray
    gold_label: int | None = None


@dataclass(frozen=True)
class PseudoLabel:
    """A model-issued label for an unlabeled sample.

    confidence is the max of the issuing model's predictive distribution.
    At most one PseudoLabel exists per sample at any time; a re-labeling
    event replaces the old record.
    """

    sample_id: int
    label: int
    confidence: float
    issued_at_event: int


@dataclass
class ClientShard:
    """A client's local data: visible-label ids, unlabeled ids, and the
    pseudo labels currently attached to some of the unlabeled ids."""

    client_id: int
    gold: list[int] = field(default_factory=list)
    unlabeled: list[int] = field(default_factory=list)
    pseudo: list[PseudoLabel] = field(default_factory=list)

    def labeled_count(self) -> int:
        return len(self.gold) + len(self.pseudo)

    def validate(self, num_classes: int | None = None) -> None:
        """Assert the structural invariants; used by debug passes and tests."""
        gold = set(self.gold)
        unlabeled = set(self.unlabeled)
        if gold & unlabeled:
            raise AssertionError(f"client {self.client_id}: gold and unlabeled overlap")
        pseudo_ids = [p.sample_id for p in self.pseudo]
        if len(pseudo_ids) != len(set(pseudo_ids)):
            raise AssertionError(f"client {self.client_id}: duplicate pseudo labels")
        if not set(pseudo_ids) <= unlabeled:
            raise AssertionError(f"client {self.client_id}: pseudo label outside unlabeled pool")
        if num_classes is not None:
            for p in self.pseudo:
                if not 0 <= p.label < num_classes:
                    raise AssertionError(f"client {self.client_id}: pseudo label out of range")


def _tag_key(tag: str) -> tuple[int, ...]:
    # Stable 128-bit key for a tag; hash() is salted per process so it
    # cannot be used here.
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class Rng:
    """Deterministic random stream with keyed splitting.

    A stream is identified by (seed, tag path). Splitting never consumes
    state from the parent, so ``split_stream(rng, t)`` returns the same
    stream no matter how much the parent has been used. Draw methods
    delegate to a numpy Generator (PCG64), whose bit stream is stable for
    a fixed numpy version.
    """

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = np.random.SeedSequence(self.seed) if _seq is None else _seq
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def split(self, tag: str) -> "Rng":
        if not tag:
            raise ValueError("split tag must be nonempty")
        child = np.random.SeedSequence(
            entropy=self._seq.entropy, spawn_key=self._seq.spawn_key + _tag_key(tag)
        )
        return Rng(self.seed, _seq=child)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed}, path={self._seq.spawn_key})"


def split_stream(rng: Rng, tag: str) -> Rng:
    """Independent deterministic substream keyed by (seed, tag)."""
    return rng.split(tag)


def largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    """Round nonnegative real shares to integers summing exactly to total.

    Floors each quota, then hands the remaining units to the largest
    fractional parts (ties broken toward lower index so the result is
    deterministic).
    """
    shares = np.asarray(shares, dtype=float)
    if total < 0:
        raise ValueError("total must be nonnegative")
    s = shares.sum()
    if s <= 0:
        quotas = np.zeros(len(shares))
        quotas[: total % max(len(shares), 1)] = 0  # all zeros; spread below
        base = np.zeros(len(shares), dtype=int)
        for i in range(total):
            base[i % len(shares)] += 1
        return base
    quotas = shares / s * total
    base = np.floor(quotas).astype(int)
    remainder = total - int(base.sum())
    if remainder > 0:
        frac = quotas - base
        # argsort is stable, so equal fractions resolve to lower indices
        order = np.argsort(-frac, kind="stable")
        base[order[:remainder]] += 1
    return base
