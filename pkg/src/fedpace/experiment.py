"""Experiment assembly: dataset + partition + engine for one seeded run,
plus the named baseline presets used throughout the evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .core import ClientShard, Rng
from .datagen import Dataset, PartitionSpec, SyntheticTaskSpec, gen_blobs, partition_dataset
from .engine import EngineConfig, RunResult, Simulation
from .pacing import ControllerPacing, FixedCountPacing
from .planner import PlanSearchConfig


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    task: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    engine: EngineConfig = field(default_factory=EngineConfig)
    planner: PlanSearchConfig | None = None
    output_dir: str = "out"
    seed: int = 0


def build_data(cfg: ExperimentConfig) -> tuple[Dataset, list[ClientShard]]:
    rng = Rng(cfg.seed)
    dataset = gen_blobs(cfg.task, rng.split("data"))
    shards = partition_dataset(dataset, cfg.partition, rng)
    return dataset, shards


def build_simulation(
    cfg: ExperimentConfig, dataset: Dataset | None = None, shards: list[ClientShard] | None = None
) -> Simulation:
    if dataset is None or shards is None:
        dataset, shards = build_data(cfg)
    return Simulation(dataset, shards, cfg.engine, Rng(cfg.seed).split("engine"))


def run_experiment(
    cfg: ExperimentConfig, dataset: Dataset | None = None, shards: list[ClientShard] | None = None
) -> RunResult:
    return build_simulation(cfg, dataset, shards).run()


def make_plan_evaluator(cfg: ExperimentConfig, probe_rounds: int):
    """Plan-evaluation handle for the co-planner.

    Plans are scored by supervised federated training on a fully labeled
    proxy (the same task with every label visible), mirroring offline
    planning on a public dataset: probe accuracy then reflects what the
    layer plan can learn, not label scarcity.
    """
    proxy = apply_preset(cfg, "oracle")
    dataset, shards = build_data(proxy)
    engine = replace(
        proxy.engine,
        pacing=None,
        max_rounds=probe_rounds,
        target_accuracy=None,
        pretrained_init=cfg.engine.pretrained_init,
    )

    def evaluate(plan) -> float:
        copies = [
            ClientShard(client_id=s.client_id, gold=list(s.gold), unlabeled=list(s.unlabeled))
            for s in shards
        ]
        sim = build_simulation(replace(proxy, engine=replace(engine, plan=plan)), dataset, copies)
        result = sim.run()
        return result.summary["final_val_acc"]

    return evaluate


# ----- presets ---------------------------------------------------------------
#
# fes          paced pseudo-labeling: centroid init, 5% diversity filter,
#              controller pacing, confidence + capacity filters
# fedfsl-static same pipeline but exhaustive inference and a static
#              add-100-labels-per-client-per-round schedule
# gold-only    trains on the revealed gold labels only, random init
# oracle       every training sample labeled, random init (the full-label
#              ceiling that relative accuracy is measured against)

PRESETS = ("fes", "fedfsl-static", "gold-only", "oracle")


def apply_preset(cfg: ExperimentConfig, preset: str) -> ExperimentConfig:
    if preset == "fes":
        engine = replace(
            cfg.engine,
            pacing=ControllerPacing(),
            pretrained_init=True,
            selector=replace(cfg.engine.selector, budget_fraction=0.05),
            selector_mode="diversity",
        )
        return replace(cfg, engine=engine)
    if preset == "fedfsl-static":
        engine = replace(
            cfg.engine,
            pacing=FixedCountPacing(count=100, f=1, n=cfg.engine.clients_per_training_round),
            pretrained_init=True,
            selector=replace(cfg.engine.selector, budget_fraction=1.0),
        )
        return replace(cfg, engine=engine)
    if preset == "gold-only":
        engine = replace(cfg.engine, pacing=None, pretrained_init=False)
        return replace(cfg, engine=engine)
    if preset == "oracle":
        engine = replace(cfg.engine, pacing=None, pretrained_init=False)
        partition = replace(
            cfg.partition,
            gold_total=10 ** 9,  # capped to the train size at assignment
            gold_gamma=100.0,
            gold_client_cap=cfg.partition.num_clients,
        )
        return replace(cfg, engine=engine, partition=partition)
    raise ValueError(f"unknown preset '{preset}' (expected one of {PRESETS})")
