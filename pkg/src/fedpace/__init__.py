"""fedpace: a desk-scale federated few-shot learning simulator.

Training proceeds on a handful of gold labels plus model-issued pseudo
labels whose injection rate is paced by an accuracy-gain-per-cost
controller; inference effort is bounded by a representativeness/diversity
filter, and per-layer training depth/capacity is co-planned under an
explicit compute/network cost model.
"""
from .core import ClientShard, PseudoLabel, Rng, Sample, split_stream
from .datagen import (
    Dataset,
    PartitionSpec,
    SyntheticTaskSpec,
    assign_gold_labels,
    gen_blobs,
    partition_dataset,
    partition_labels_dirichlet,
    partition_quantity_dirichlet,
)
from .engine import EngineConfig, EngineError, RoundTrace, RunResult, Simulation, time_to_accuracy
from .experiment import ExperimentConfig, apply_preset, build_data, build_simulation, run_experiment
from .model import (
    LayerMode,
    LayerPlan,
    MlpModel,
    ModelSpec,
    TrainerConfig,
    fed_avg,
    grad_check,
    load_model,
    local_train,
    predict_dist,
    save_model,
)
from .pacing import (
    AugEParams,
    ControllerPacing,
    FixedCountPacing,
    PacingConfig,
    PacingController,
    aug_e,
    startup_search,
)
from .planner import CostModel, PlanSearchConfig, co_plan, round_cost
from .selector import NeighborGraph, SelectorConfig, build_graph, random_select, select

__version__ = "0.1.0"
