"""Curriculum pacing: the AUG-E metric, the startup configuration search,
and the online controller that schedules labeling events and switches
configurations on accuracy-degradation alarms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence


@dataclass(frozen=True)
class PacingConfig:
    """<f, n, k>: label every f training rounds, on n clients, admitting a
    cumulative j*k percent of each client's selected pool at event j."""

    f: int
    n: int
    k: float

    def __post_init__(self):
        if self.f < 1 or self.n < 1:
            raise ValueError("f and n must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")

    def cumulative_fraction(self, event_index: int) -> float:
        return min(1.0, event_index * self.k / 100.0)

    def label(self) -> str:
        return f"<{self.f},{self.n},{self.k:g}>"


@dataclass(frozen=True)
class FixedCountPacing:
    """Static baseline pacing: every f rounds, each of n visited clients
    adds `count` more pseudo labels (no curriculum)."""

    count: int = 100
    f: int = 1
    n: int = 5

    def label(self) -> str:
        return f"fixed({self.count})/f={self.f},n={self.n}"


@dataclass(frozen=True)
class ControllerPacing:
    """Controller-managed pacing: startup search over candidates, then
    online switching restricted to the retained top-t list.

    alarm_patience is how many consecutive below-threshold checkpoints
    constitute a degradation alarm; a single dip at desk scale is usually
    evaluation noise rather than real degradation.
    """

    candidates: tuple[PacingConfig, ...] = ()
    top_t: int = 8
    trial_window: int = 20
    alarm_threshold: float = 0.0
    alarm_patience: int = 3

    def candidate_list(self) -> tuple[PacingConfig, ...]:
        return self.candidates if self.candidates else default_candidates()


def default_candidates() -> tuple[PacingConfig, ...]:
    """32 configurations spanning slow to aggressive pacing."""
    out = []
    for f in (1, 2, 5, 10):
        for n in (1, 2, 4, 8):
            for k in (1.0, 2.0):
                out.append(PacingConfig(f=f, n=n, k=k))
    return tuple(out)


@dataclass(frozen=True)
class AugEParams:
    """Weights and latencies in the augment-efficiency metric.

    l_i and l_t are the per-batch inference and training latencies of the
    reference model in simulator time units.
    """

    eta: float = 1.0
    theta: float = 1.0
    l_i: float = 1.0
    l_t: float = 1.0

    def __post_init__(self):
        if min(self.eta, self.theta, self.l_i, self.l_t) <= 0:
            raise ValueError("AUG-E parameters must be positive")


def auge_cost(cfg: PacingConfig | FixedCountPacing, p: AugEParams) -> float:
    """Cost denominator: per-round inference cost plus weighted training
    cost. For the fixed-count baseline the count plays the curriculum
    ratio's role at a 100-samples-per-unit scale (diagnostic only)."""
    if isinstance(cfg, FixedCountPacing):
        k = cfg.count / 100.0
    else:
        k = cfg.k
    return p.l_i * cfg.n / cfg.f + p.theta * p.l_t * k


def aug_e(delta_acc: float, cfg: PacingConfig | FixedCountPacing, p: AugEParams) -> float:
    """Accuracy gain per unit of combined inference + training cost."""
    denom = auge_cost(cfg, p)
    if denom <= 0:
        raise ValueError("AUG-E denominator must be positive")
    return p.eta * delta_acc / denom


class DecisionKind(Enum):
    CONTINUE = "continue"
    TRIGGER_LABELING = "trigger_labeling"
    SWITCH_CONFIG = "switch_config"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    new_config: PacingConfig | None = None


# probe(config, rounds) -> validation-accuracy delta measured over a
# self-contained simulation branched from the caller's current snapshot
ProbeFn = Callable[[PacingConfig, int], float]


@dataclass
class StartupResult:
    best: PacingConfig
    top: list[PacingConfig]
    ranked: list[tuple[PacingConfig, float]]
    all_nonpositive: bool


def startup_search(
    candidates: Sequence[PacingConfig],
    trial_window: int,
    probe: ProbeFn,
    params: AugEParams,
    top_t: int = 8,
) -> StartupResult:
    """Probe every candidate for trial_window rounds from one snapshot and
    rank by AUG-E over the probe.

    The winner becomes the active configuration; the top-t are retained
    for cheaper re-search later. If every candidate scores <= 0 the least
    negative one still wins, flagged so the caller can warn.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    scored = []
    for cfg in candidates:
        delta = probe(cfg, trial_window)
        scored.append((cfg, aug_e(delta, cfg, params)))
    ranked = sorted(scored, key=lambda t: -t[1])  # stable: candidate order on ties
    top = [cfg for cfg, _ in ranked[: max(1, top_t)]]
    return StartupResult(
        best=ranked[0][0],
        top=top,
        ranked=ranked,
        all_nonpositive=ranked[0][1] <= 0.0,
    )


class AccuracySmoother:
    """Exponential moving average over ~3 evaluation points."""

    def __init__(self, window: int = 3):
        self.alpha = 2.0 / (window + 1)
        self.value: float | None = None

    def update(self, x: float) -> float:
        self.value = x if self.value is None else (1 - self.alpha) * self.value + self.alpha * x
        return self.value


class StaticPacer:
    """Fixed schedule: labeling due every f-th training round. Tracks the
    windowed AUG-E of its config purely for the trace."""

    def __init__(self, cfg: PacingConfig | FixedCountPacing, params: AugEParams):
        self.cfg = cfg
        self.params = params
        self.smoother = AccuracySmoother()
        self._anchor: float | None = None
        self._since_event = 0
        self.last_aug_e = 0.0

    @property
    def active(self) -> PacingConfig | FixedCountPacing:
        return self.cfg

    def step(self, val_acc: float, probe: ProbeFn | None = None) -> Decision:
        ema = self.smoother.update(val_acc)
        if self._anchor is None:
            self._anchor = ema
        self._since_event += 1
        if self._since_event >= self.cfg.f:
            self.last_aug_e = aug_e(ema - self._anchor, self.cfg, self.params)
            self._anchor = ema
            self._since_event = 0
            return Decision(DecisionKind.TRIGGER_LABELING)
        return Decision(DecisionKind.CONTINUE)


class PacingController:
    """Online controller: schedules labeling under the active config and,
    when the windowed AUG-E drops below the alarm threshold, re-runs the
    probe over the retained top-t list and adopts its winner.

    Probes are self-contained simulations branched by the caller, so an
    alarm can never fire inside one.
    """

    def __init__(
        self,
        active: PacingConfig,
        top: Sequence[PacingConfig],
        params: AugEParams,
        alarm_threshold: float = 0.0,
        trial_window: int = 20,
        alarm_patience: int = 2,
    ):
        self.active = active
        self.top = list(top)
        self.params = params
        self.alarm_threshold = alarm_threshold
        self.trial_window = trial_window
        self.alarm_patience = max(1, alarm_patience)
        self.smoother = AccuracySmoother()
        self._anchor: float | None = None
        self._since_event = 0
        self._events_done = 0
        self._bad_checkpoints = 0
        self.switch_count = 0
        self.last_aug_e = 0.0

    def step(self, val_acc: float, probe: ProbeFn | None = None) -> Decision:
        ema = self.smoother.update(val_acc)
        if self._anchor is None:
            self._anchor = ema
        self._since_event += 1
        if self._since_event < self.active.f:
            return Decision(DecisionKind.CONTINUE)
        self.last_aug_e = aug_e(ema - self._anchor, self.active, self.params)
        self._anchor = ema
        self._since_event = 0
        # alarms only make sense once pseudo labels have had a chance to act
        if self._events_done >= 1 and self.last_aug_e < self.alarm_threshold:
            self._bad_checkpoints += 1
        else:
            self._bad_checkpoints = 0
        if self._bad_checkpoints >= self.alarm_patience and probe is not None:
            result = startup_search(self.top, self.trial_window, probe, self.params, top_t=len(self.top))
            self.active = result.best
            self.switch_count += 1
            self._events_done = 0
            self._bad_checkpoints = 0
            return Decision(DecisionKind.SWITCH_CONFIG, new_config=result.best)
        self._events_done += 1
        return Decision(DecisionKind.TRIGGER_LABELING)


class NullPacer:
    """No labeling ever (gold-only and oracle runs)."""

    active = None
    last_aug_e = 0.0

    def step(self, val_acc: float, probe: ProbeFn | None = None) -> Decision:
        return Decision(DecisionKind.CONTINUE)
