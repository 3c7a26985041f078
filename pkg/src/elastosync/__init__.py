"""Distributed explicit elastodynamics with learned synchronization avoidance.

The package couples a lumped-mass central-difference finite element solver
for linear elastodynamics (structured tetrahedral cantilever meshes, element
ownership partitioning, per-step shared-node force reduction) with per-rank
LSTM encoder-decoder surrogates that replace the shared-node synchronization
during prediction blocks, plus the error-monitoring metrics and max-average
performance accounting used to evaluate the scheme.
"""

__version__ = "0.1.0"

from .bench import PerfSummary, max_average, speedup
from .comm import StepTiming, distributed_solve, reduce_shared_forces
from .evaluate import e_mse, refill_predict
from .fem import Material, cfl_time_step, lame_coefficients, mass_scale
from .integrator import LoadSpec, SimState, ramp_factor, serial_solve
from .mesh import Mesh, generate_beam_mesh, read_mesh, write_mesh
from .metrics import ErrorMetrics, error_metrics
from .partition import Partition, partition_mesh
from .sampling import Dataset, SampleConfig, build_dataset, make_ic_family
from .syncavoid import SyncAvoidConfig, SyncAvoidResult, sync_avoiding_solve
from .training import TrainConfig, train_model, train_rank_models

__all__ = [
    "Dataset",
    "ErrorMetrics",
    "LoadSpec",
    "Material",
    "Mesh",
    "Partition",
    "PerfSummary",
    "SampleConfig",
    "SimState",
    "StepTiming",
    "SyncAvoidConfig",
    "SyncAvoidResult",
    "TrainConfig",
    "build_dataset",
    "cfl_time_step",
    "distributed_solve",
    "e_mse",
    "error_metrics",
    "generate_beam_mesh",
    "lame_coefficients",
    "make_ic_family",
    "mass_scale",
    "max_average",
    "partition_mesh",
    "ramp_factor",
    "read_mesh",
    "reduce_shared_forces",
    "refill_predict",
    "serial_solve",
    "speedup",
    "sync_avoiding_solve",
    "train_model",
    "train_rank_models",
    "write_mesh",
]
