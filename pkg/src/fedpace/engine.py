"""The federated orchestrator: interleaves training rounds with pseudo-
labeling events under a pacing policy, applies the diversity selector and
label filters, aggregates with FedAvg, and accounts simulated cost.

Rounds are synchronous; the round clock advances by the slowest
participant. Every stochastic choice draws from a tagged substream, so a
run is a pure function of (dataset, shards, config, seed).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import ClientShard, PseudoLabel, Rng
from .datagen import Dataset
from .model import (
    LayerPlan,
    MlpModel,
    ModelSpec,
    TrainerConfig,
    accuracy,
    fed_avg,
    init_output_from_centroids,
    local_train,
    predict_proba,
)
from .pacing import (
    AugEParams,
    ControllerPacing,
    Decision,
    DecisionKind,
    FixedCountPacing,
    NullPacer,
    PacingConfig,
    PacingController,
    StaticPacer,
    startup_search,
)
from .planner import CostModel, round_cost
from .selector import SelectorConfig, budget_size, build_graph, random_select, select

log = logging.getLogger(__name__)

# fraction of a per-sample training pass charged once for the proxy
# embedding pass that the diversity selector runs ahead of training
EMBED_COST_FRACTION = 0.084

TRACE_FIELDS = [
    "round",
    "sim_time",
    "test_acc",
    "val_acc",
    "total_pseudo",
    "pseudo_correct_frac",
    "f",
    "n",
    "k",
    "aug_e",
    "traffic_bytes",
    "energy",
]


class EngineError(RuntimeError):
    pass


PacingPolicy = PacingConfig | FixedCountPacing | ControllerPacing | None


@dataclass(frozen=True)
class EngineConfig:
    clients_per_training_round: int = 5
    pacing: PacingPolicy = field(default_factory=ControllerPacing)
    confidence_threshold: float = 0.9
    capacity_filter: bool = True
    plan: LayerPlan | None = None  # None = all layers full
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    selector_mode: str = "diversity"  # "diversity" | "random"
    cost_model: CostModel = field(default_factory=CostModel)
    aug_e_params: AugEParams | None = None  # None = derived from cost model
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    pretrained_init: bool = True  # centroid-init output head from the public split
    max_rounds: int = 150
    target_accuracy: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")
        if self.selector_mode not in ("diversity", "random"):
            raise ValueError("selector_mode must be 'diversity' or 'random'")


@dataclass(frozen=True)
class RoundTrace:
    """One trace row per training round. traffic_bytes and energy are the
    round's deltas; sim_time is the accumulated clock."""

    round: int
    sim_time: float
    test_acc: float
    val_acc: float
    total_pseudo: int
    pseudo_correct_frac: float
    f: int
    n: int
    k: float
    aug_e: float
    traffic_bytes: float
    energy: float

    def as_row(self) -> list:
        return [getattr(self, name) for name in TRACE_FIELDS]


@dataclass
class SimState:
    """Mutable simulation state; probes run on branched copies."""

    model: MlpModel
    shards: list[ClientShard]
    sim_time: float = 0.0
    traffic: float = 0.0
    energy: float = 0.0
    inference_time: float = 0.0
    event_index: int = 0
    ns: str = "main"

    def branch(self, ns: str) -> "SimState":
        shards = [
            ClientShard(
                client_id=s.client_id,
                gold=list(s.gold),
                unlabeled=list(s.unlabeled),
                pseudo=list(s.pseudo),
            )
            for s in self.shards
        ]
        return SimState(
            model=self.model.copy(),
            shards=shards,
            sim_time=self.sim_time,
            traffic=self.traffic,
            energy=self.energy,
            inference_time=self.inference_time,
            event_index=self.event_index,
            ns=ns,
        )


@dataclass
class RunResult:
    trace: list[RoundTrace]
    model: MlpModel
    summary: dict


def _pacing_tag(cfg: PacingConfig) -> str:
    return f"{cfg.f}-{cfg.n}-{cfg.k:g}"


class Simulation:
    """One federated few-shot run over a dataset and its client shards."""

    def __init__(self, dataset: Dataset, shards: Sequence[ClientShard], cfg: EngineConfig, rng: Rng | None = None):
        self.dataset = dataset
        self.cfg = cfg
        self.rng = rng if rng is not None else Rng(cfg.seed)
        shards = sorted(shards, key=lambda s: s.client_id)
        dims = cfg.model.layer_dims(dataset.dim, dataset.num_classes)
        base = MlpModel.init(dims, self.rng.split("init"))
        if cfg.pretrained_init:
            X_pub, y_pub = dataset.split_arrays("public")
            base = init_output_from_centroids(base, X_pub, y_pub, dataset.num_classes)
        self.plan = cfg.plan if cfg.plan is not None else LayerPlan.all_full(len(dims) - 1)
        if len(self.plan) != len(dims) - 1:
            raise ValueError("plan length does not match model depth")
        depth = len(dims) - 1
        self.auge_params = cfg.aug_e_params or AugEParams(
            l_i=cfg.cost_model.infer_batch_latency(depth),
            l_t=cfg.cost_model.train_batch_latency(depth),
        )
        self.X_val, self.y_val = dataset.split_arrays("val")
        self.X_test, self.y_test = dataset.split_arrays("test")
        self.zero_shot_val_acc = accuracy(base, self.X_val, self.y_val)
        self.state = SimState(model=base, shards=list(shards))
        self._selection_cache: dict[int, list[int]] = {}
        self.probe_time = 0.0
        self.probe_energy = 0.0
        self.embed_time = 0.0
        self.skipped_events = 0
        self.startup_warning = False
        self._pacer = None  # built in run(); probes use ad-hoc schedules

    # ----- data plumbing -------------------------------------------------

    def _train_arrays(self, shard: ClientShard) -> tuple[np.ndarray, np.ndarray]:
        ids = list(shard.gold) + [p.sample_id for p in shard.pseudo]
        labels = list(self.dataset.labels(shard.gold)) + [p.label for p in shard.pseudo]
        return self.dataset.embeddings(ids), np.array(labels, dtype=int)

    def _selected_subset(self, shard: ClientShard) -> list[int]:
        """The per-client inference subset; pools and embeddings are static
        so the subset is computed once per run."""
        cid = shard.client_id
        if cid in self._selection_cache:
            return self._selection_cache[cid]
        pool = sorted(shard.unlabeled)
        budget = budget_size(len(pool), self.cfg.selector.budget_fraction)
        if budget >= len(pool) or len(pool) < 2:
            chosen = pool
        elif self.cfg.selector_mode == "random":
            chosen = sorted(
                random_select(pool, self.cfg.selector.budget_fraction, self.rng.split(f"select/c{cid}"))
            )
        else:
            graph = build_graph(self.dataset.embeddings(pool), self.cfg.selector.k, ids=pool)
            chosen = sorted(select(graph, self.cfg.selector, pool).ids)
        self._selection_cache[cid] = chosen
        return chosen

    def _charge_embedding_pass(self) -> None:
        """One-time proxy-embedding cost for the diversity selector."""
        if self.cfg.pacing is None or self.cfg.selector_mode != "diversity":
            return
        if self.cfg.selector.budget_fraction >= 1.0:
            return
        total_unlabeled = sum(len(s.unlabeled) for s in self.state.shards)
        per_sample_train = self.auge_params.l_t / self.cfg.trainer.batch_size
        self.embed_time = EMBED_COST_FRACTION * per_sample_train * total_unlabeled
        self.state.sim_time += self.embed_time
        self.state.energy += self.cfg.cost_model.power_compute * self.embed_time

    # ----- simulated operations ------------------------------------------

    def training_round(self, state: SimState, round_idx: int) -> None:
        eligible = [s for s in state.shards if s.labeled_count() > 0]
        if not eligible:
            raise EngineError("no labeled data anywhere: every client is ineligible")
        m = min(self.cfg.clients_per_training_round, len(eligible))
        ids = np.array([s.client_id for s in eligible])
        pick_rng = self.rng.split(f"{state.ns}/participants/r{round_idx}")
        picked = set(int(i) for i in pick_rng.gen.choice(ids, size=m, replace=False))
        participants = [s for s in state.shards if s.client_id in picked]
        updates = []
        clock = 0.0
        for shard in participants:  # client-id order keeps aggregation deterministic
            X, y = self._train_arrays(shard)
            trained, count = local_train(
                state.model,
                X,
                y,
                self.plan,
                self.cfg.trainer,
                self.rng.split(f"{state.ns}/train/r{round_idx}/c{shard.client_id}"),
            )
            updates.append((trained, count))
            batches = math.ceil(count / self.cfg.trainer.batch_size) * self.cfg.trainer.local_epochs
            cost = round_cost(state.model, self.plan, self.cfg.cost_model, batches)
            clock = max(clock, cost.total_time)
            state.traffic += cost.traffic_bytes
            state.energy += cost.energy
        state.model = fed_avg(updates)
        state.sim_time += clock

    def labeling_event(self, state: SimState, n_clients: int, policy) -> bool:
        """Dispatch the model to n clients for pseudo-labeling. Returns
        False when the capacity filter skipped the event."""
        if self.cfg.capacity_filter:
            if accuracy(state.model, self.X_val, self.y_val) < self.zero_shot_val_acc:
                self.skipped_events += 1
                return False
        state.event_index += 1
        j = state.event_index
        candidates = [s for s in state.shards if s.unlabeled]
        if not candidates:
            return True
        m = min(n_clients, len(candidates))
        ids = np.array([s.client_id for s in candidates])
        pick_rng = self.rng.split(f"{state.ns}/label/e{j}")
        picked = set(int(i) for i in pick_rng.gen.choice(ids, size=m, replace=False))
        clock = 0.0
        params = state.model.parameter_count()
        for shard in [s for s in state.shards if s.client_id in picked]:
            subset = self._selected_subset(shard)
            if subset:
                self._relabel_client(state, shard, subset, j, policy)
                batches = math.ceil(len(subset) / self.cfg.trainer.batch_size)
                compute = batches * self.auge_params.l_i
            else:
                compute = 0.0
            dispatch = self.cfg.cost_model.bytes_per_param * params  # model download
            comm = dispatch / self.cfg.cost_model.bandwidth
            clock = max(clock, compute + comm)
            state.traffic += dispatch
            state.energy += (
                self.cfg.cost_model.power_compute * compute
                + self.cfg.cost_model.power_network * comm
            )
            state.inference_time += compute
        state.sim_time += clock
        return True

    def _relabel_client(
        self, state: SimState, shard: ClientShard, subset: list[int], event_index: int, policy
    ) -> None:
        probs = predict_proba(state.model, self.dataset.embeddings(subset))
        conf = probs.max(axis=1)
        labels = probs.argmax(axis=1)
        by_id = {sid: (int(labels[i]), float(conf[i])) for i, sid in enumerate(subset)}
        # previously issued labels are re-predicted and replaced in place;
        # once admitted a sample stays admitted so eligibility never shrinks
        kept: list[PseudoLabel] = []
        kept_ids = set()
        for p in shard.pseudo:
            label, c = by_id.get(p.sample_id, (p.label, p.confidence))
            kept.append(PseudoLabel(p.sample_id, label, c, event_index))
            kept_ids.add(p.sample_id)
        if isinstance(policy, FixedCountPacing):
            target = min(len(subset), len(kept) + policy.count)
        else:
            # the curriculum ratio counts against the client's unlabeled
            # data; the selector subset caps what can actually be labeled
            want_of_pool = math.ceil(policy.cumulative_fraction(event_index) * len(shard.unlabeled))
            target = min(len(subset), want_of_pool)
        want = target - len(kept)
        if want > 0:
            ranked = sorted(
                (sid for sid in subset if sid not in kept_ids),
                key=lambda sid: (-by_id[sid][1], sid),
            )
            for sid in ranked:
                if want == 0:
                    break
                label, c = by_id[sid]
                if c < self.cfg.confidence_threshold:
                    continue  # low-confidence predictions are rejected
                kept.append(PseudoLabel(sid, label, c, event_index))
                want -= 1
        shard.pseudo = kept

    # ----- probes ---------------------------------------------------------

    def _run_probe(self, state: SimState, cfg: PacingConfig, rounds: int) -> float:
        """Self-contained mini-run on a branched state under a fixed
        schedule; cost is accounted to the probe totals, not the trace."""
        start_acc = accuracy(state.model, self.X_val, self.y_val)
        t0, e0 = state.sim_time, state.energy
        for r in range(1, rounds + 1):
            self.training_round(state, r)
            if r % cfg.f == 0:
                self.labeling_event(state, cfg.n, cfg)
        self.probe_time += state.sim_time - t0
        self.probe_energy += state.energy - e0
        return accuracy(state.model, self.X_val, self.y_val) - start_acc

    def _make_probe(self, phase: str):
        def probe(cfg: PacingConfig, rounds: int) -> float:
            branch = self.state.branch(f"{phase}/{_pacing_tag(cfg)}")
            return self._run_probe(branch, cfg, rounds)

        return probe

    # ----- main loop -------------------------------------------------------

    def _build_pacer(self):
        policy = self.cfg.pacing
        if policy is None:
            return NullPacer()
        if isinstance(policy, ControllerPacing):
            result = startup_search(
                policy.candidate_list(),
                policy.trial_window,
                self._make_probe("startup"),
                self.auge_params,
                top_t=policy.top_t,
            )
            if result.all_nonpositive:
                self.startup_warning = True
                log.warning("startup search: every candidate scored AUG-E <= 0")
            return PacingController(
                active=result.best,
                top=result.top,
                params=self.auge_params,
                alarm_threshold=policy.alarm_threshold,
                trial_window=policy.trial_window,
                alarm_patience=policy.alarm_patience,
            )
        return StaticPacer(policy, self.auge_params)

    def _active_fnk(self, pacer) -> tuple[int, int, float]:
        active = pacer.active
        if active is None:
            return 0, 0, 0.0
        if isinstance(active, FixedCountPacing):
            return active.f, active.n, float(active.count)
        return active.f, active.n, float(active.k)

    def run(self) -> RunResult:
        self._charge_embedding_pass()
        pacer = self._build_pacer()
        self._pacer = pacer
        trace: list[RoundTrace] = []
        state = self.state
        switch_rounds: list[int] = []
        prev_traffic, prev_energy = state.traffic, state.energy
        for r in range(1, self.cfg.max_rounds + 1):
            self.training_round(state, r)
            val_acc = accuracy(state.model, self.X_val, self.y_val)
            test_acc = accuracy(state.model, self.X_test, self.y_test)
            decision: Decision = pacer.step(val_acc, probe=self._make_probe(f"switch/r{r}"))
            if decision.kind is DecisionKind.TRIGGER_LABELING:
                active = pacer.active
                self.labeling_event(state, active.n, active)
            elif decision.kind is DecisionKind.SWITCH_CONFIG:
                switch_rounds.append(r)
            total_pseudo = sum(len(s.pseudo) for s in state.shards)
            correct = sum(
                1
                for s in state.shards
                for p in s.pseudo
                if p.label == int(self.dataset.y[p.sample_id])
            )
            f, n, k = self._active_fnk(pacer)
            trace.append(
                RoundTrace(
                    round=r,
                    sim_time=state.sim_time,
                    test_acc=test_acc,
                    val_acc=val_acc,
                    total_pseudo=total_pseudo,
                    pseudo_correct_frac=(correct / total_pseudo) if total_pseudo else 0.0,
                    f=f,
                    n=n,
                    k=k,
                    aug_e=pacer.last_aug_e,
                    traffic_bytes=state.traffic - prev_traffic,
                    energy=state.energy - prev_energy,
                )
            )
            prev_traffic, prev_energy = state.traffic, state.energy
            if self.cfg.target_accuracy is not None and test_acc >= self.cfg.target_accuracy:
                break
        summary = self._summary(trace, switch_rounds)
        return RunResult(trace=trace, model=state.model, summary=summary)

    def _summary(self, trace: list[RoundTrace], switch_rounds: list[int]) -> dict:
        final_acc = trace[-1].test_acc if trace else accuracy(self.state.model, self.X_test, self.y_test)
        best_acc = max((t.test_acc for t in trace), default=final_acc)
        targets = [0.5, 0.6, 0.7, 0.8, 0.9]
        time_to = {f"{x:.2f}": time_to_accuracy(trace, x) for x in targets}
        switch_count = getattr(self._pacer, "switch_count", 0)
        if switch_count > 3:
            log.warning("pacing switched %d times; expected <= 3 on standard tasks", switch_count)
        return {
            "rounds": len(trace),
            "final_test_acc": final_acc,
            "best_test_acc": best_acc,
            "final_val_acc": trace[-1].val_acc if trace else self.zero_shot_val_acc,
            "zero_shot_val_acc": self.zero_shot_val_acc,
            "sim_time": self.state.sim_time,
            "traffic_bytes": self.state.traffic,
            "energy": self.state.energy,
            "inference_time": self.state.inference_time,
            "embed_time": self.embed_time,
            "probe_time": self.probe_time,
            "probe_energy": self.probe_energy,
            "labeling_events": self.state.event_index,
            "skipped_events": self.skipped_events,
            "switch_count": switch_count,
            "switch_rounds": switch_rounds,
            "startup_warning": self.startup_warning,
            "total_pseudo": sum(len(s.pseudo) for s in self.state.shards),
            "time_to_accuracy": time_to,
        }


def time_to_accuracy(trace: Sequence[RoundTrace], target: float) -> float | None:
    """Simulated time of the first round whose test accuracy reaches the
    target; None when the run never gets there."""
    for row in trace:
        if row.test_acc >= target:
            return row.sim_time
    return None
