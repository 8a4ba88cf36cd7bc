"""Depth/capacity co-planning under a compute/network cost model.

The planner looks for the terraced layer plan (frozen prefix, bias-only
band, full suffix) that is cheapest per round while staying within an
accuracy budget of the all-full plan. Freezing saves backward compute,
bias-only tuning saves traffic; the search trades the two.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

from .model import LayerPlan, MlpModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostModel:
    """Converts simulated actions into time, energy, and traffic.

    bandwidth is in bytes per simulator time unit; compute terms are time
    units per batch per layer; power terms are energy per time unit.
    """

    bandwidth: float = 2.5e5
    bytes_per_param: int = 8
    compute_fwd_per_layer: float = 1.0
    compute_bwd_per_layer: float = 2.0
    power_compute: float = 1.0
    power_network: float = 0.5

    def __post_init__(self):
        vals = (
            self.bandwidth,
            self.bytes_per_param,
            self.compute_fwd_per_layer,
            self.compute_bwd_per_layer,
            self.power_compute,
            self.power_network,
        )
        if min(vals) <= 0:
            raise ValueError("cost model entries must be positive")

    def train_batch_latency(self, num_layers: int) -> float:
        return num_layers * (self.compute_fwd_per_layer + self.compute_bwd_per_layer)

    def infer_batch_latency(self, num_layers: int) -> float:
        return num_layers * self.compute_fwd_per_layer


@dataclass(frozen=True)
class RoundCost:
    compute_time: float
    comm_time: float
    energy: float
    traffic_bytes: float

    @property
    def total_time(self) -> float:
        return self.compute_time + self.comm_time


def round_cost(model: MlpModel, plan: LayerPlan, cost: CostModel, batches: int) -> RoundCost:
    """Per-client cost of one training round: full forward over all layers,
    backward only above the frozen prefix, model delta up + down."""
    if len(plan) != model.num_layers:
        raise ValueError("plan length does not match model depth")
    layers = model.num_layers
    bwd_layers = layers - plan.frozen_prefix()
    compute = batches * (
        layers * cost.compute_fwd_per_layer + bwd_layers * cost.compute_bwd_per_layer
    )
    traffic = 2.0 * cost.bytes_per_param * model.trainable_parameter_count(plan)
    comm = traffic / cost.bandwidth
    energy = cost.power_compute * compute + cost.power_network * comm
    return RoundCost(compute_time=compute, comm_time=comm, energy=energy, traffic_bytes=traffic)


@dataclass(frozen=True)
class PlanSearchConfig:
    epsilon_acc: float = 0.01
    probe_rounds: int = 30
    nominal_batches: int = 8  # batches/round assumed when comparing plan costs

    def __post_init__(self):
        if self.epsilon_acc < 0:
            raise ValueError("epsilon_acc must be >= 0")


@dataclass(frozen=True)
class PlanEval:
    plan: LayerPlan
    accuracy: float
    cost: RoundCost
    admissible: bool
    chosen: bool = False


@dataclass
class CoPlanResult:
    plan: LayerPlan
    full_accuracy: float
    frontier: list[PlanEval]
    fell_back_to_full: bool = False
    used_linear_scan: bool = False


# evaluate(plan) -> accuracy reached after probe_rounds simulated FL rounds
EvaluateFn = Callable[[LayerPlan], float]

_FEAS_SLACK = 1e-12  # guards == comparisons when epsilon_acc is 0


def co_plan(
    model: MlpModel,
    search: PlanSearchConfig,
    cost: CostModel,
    evaluate: EvaluateFn,
) -> CoPlanResult:
    """Two-phase search for the cheapest terraced plan within epsilon of
    the all-full plan's probe accuracy.

    Phase 1 binary-searches the largest frozen prefix; phase 2 the largest
    bias-only band above it. Binary search assumes accuracy is monotone in
    the searched depth; if the boundary check contradicts that, the phase
    re-runs as a linear scan.
    """
    L = model.num_layers
    cache: dict[tuple[int, int], float] = {}

    def acc(frozen: int, bias: int) -> float:
        key = (frozen, bias)
        if key not in cache:
            cache[key] = evaluate(LayerPlan.terraced(frozen, bias, L - frozen - bias))
        return cache[key]

    full_acc = acc(0, 0)
    target = full_acc - search.epsilon_acc

    def feasible(a: float) -> bool:
        return a >= target - _FEAS_SLACK

    used_linear = False

    def largest_feasible(limit: int, probe_acc: Callable[[int], float]) -> int:
        nonlocal used_linear
        lo, hi = 0, limit
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if feasible(probe_acc(mid)):
                lo = mid
            else:
                hi = mid - 1
        # boundary check: a feasible point above the found maximum means
        # the feasibility region is not a prefix; rescan linearly
        if lo < limit and feasible(probe_acc(lo + 1)):
            used_linear = True
            for cand in range(limit, -1, -1):
                if feasible(probe_acc(cand)):
                    return cand
        return lo

    fell_back = False
    if not feasible(full_acc):  # unreachable with epsilon >= 0; kept defensive
        log.warning("even the all-full plan misses the accuracy target; returning all-full")
        chosen = LayerPlan.all_full(L)
        fell_back = True
        frozen_star, bias_star = 0, 0
    else:
        frozen_star = largest_feasible(L, lambda F: acc(F, 0))
        bias_star = largest_feasible(L - frozen_star, lambda B: acc(frozen_star, B))
        chosen = LayerPlan.terraced(frozen_star, bias_star, L - frozen_star - bias_star)

    frontier = []
    for (frozen, bias), a in sorted(cache.items()):
        plan = LayerPlan.terraced(frozen, bias, L - frozen - bias)
        frontier.append(
            PlanEval(
                plan=plan,
                accuracy=a,
                cost=round_cost(model, plan, cost, search.nominal_batches),
                admissible=feasible(a),
                chosen=(frozen, bias) == (frozen_star, bias_star),
            )
        )
    return CoPlanResult(
        plan=chosen,
        full_accuracy=full_acc,
        frontier=frontier,
        fell_back_to_full=fell_back,
        used_linear_scan=used_linear,
    )


def enumerate_terraced(num_layers: int) -> list[LayerPlan]:
    """All terraced plans for a given depth (the oracle search space)."""
    plans = []
    for frozen in range(num_layers + 1):
        for bias in range(num_layers - frozen + 1):
            plans.append(LayerPlan.terraced(frozen, bias, num_layers - frozen - bias))
    return plans
