"""Bell tests between coin and position of a Hadamard quantum walk."""

__version__ = "0.1.0"

from .bell import (
    CoinObservable,
    DiagonalBinning,
    ResponseSet,
    batch_probabilities,
    correlator,
    evaluate_witness,
    joint_table,
    sign_binning,
    threshold_binning,
)
from .preparations import (
    BlochVector,
    SignedEnsemble,
    allocate_shots,
    emulate_shots,
    negativity_cost,
    sampling_overhead,
    shot_noise_scan,
    signed_decomposition,
)
from .schmidt import horodecki_max, optimal_chsh_settings, schmidt_decompose
from .search import (
    SearchConfig,
    WitnessRecord,
    benchmark_scan_r,
    build_benchmark,
    coarse_search,
    discover_benchmark_direction,
    finite_time_sweep,
)
from .tables import BellReport, JointTable, bell_report
from .walk import LatticeState, evolve, init_walker_state, position_distribution, step

__all__ = [
    "BellReport",
    "BlochVector",
    "CoinObservable",
    "DiagonalBinning",
    "JointTable",
    "LatticeState",
    "ResponseSet",
    "SearchConfig",
    "SignedEnsemble",
    "WitnessRecord",
    "allocate_shots",
    "batch_probabilities",
    "bell_report",
    "benchmark_scan_r",
    "build_benchmark",
    "coarse_search",
    "correlator",
    "discover_benchmark_direction",
    "emulate_shots",
    "evaluate_witness",
    "evolve",
    "finite_time_sweep",
    "horodecki_max",
    "init_walker_state",
    "joint_table",
    "negativity_cost",
    "optimal_chsh_settings",
    "position_distribution",
    "sampling_overhead",
    "schmidt_decompose",
    "shot_noise_scan",
    "sign_binning",
    "signed_decomposition",
    "step",
    "threshold_binning",
]
