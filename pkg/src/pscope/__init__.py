"""Proximal SCOPE: distributed proximal variance-reduced sparse learning."""
from .lazy_recovery import GeomSequences, lazy_worker_epoch, recover_coordinate
from .objective import Loss, ModelSpec, evaluate_objective, prox_l1
from .partition import (PartitionPlan, estimate_gamma, local_global_gap, make_partition,
                        quadratic_gap_1d)
from .solver import (SolverConfig, TrainTrace, pgd_train, prox_svrg_train, pscope_train,
                     reference_solution)
from .sparse_data import Dataset, Instance, SparseVector, load_libsvm, parse_libsvm, sparse_dot

__version__ = "0.1.0"
