"""Coded caching with learned partial popularity rankings."""

from .rate_core import (
    CutEvaluation,
    DemandStats,
    demand_stats,
    lemma2_prune,
    oracle_best_cut,
    total_rate,
)
from .ranker import Partitioning, RankerState, peel, stage_decompose, threshold
from .workload import Catalog, Demand, attack_demand, load_ratings_catalog, sample_demand, zipf_catalog
from .policies import NSKPolicy, OraclePolicy, PartitionPolicy, nsk_select_group, opm_select_group, oracle_step
from .simulator import SimConfig, RoundRecord, aggregate_replications, cumulative_regret, run, write_records

__version__ = "0.1.0"
