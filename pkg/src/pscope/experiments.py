"""Partition-effect experiment: same solver settings, different partitions."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .objective import ModelSpec
from .partition import make_partition
from .solver import SolverConfig, TrainTrace, pscope_train
from .sparse_data import Dataset

EFFECT_HEADER = ("partition", "iters_to_target", "final_suboptimality", "final_objective")


def iterations_to_reach(trace: TrainTrace, target: float) -> int | None:
    """First outer iteration whose suboptimality is <= target, or None."""
    for t, s in enumerate(trace.suboptimality):
        if s is not None and s <= target:
            return t
    return None


@dataclass
class EffectRow:
    partition: str
    iters: int | None
    final_suboptimality: float
    final_objective: float
    trace: TrainTrace

    def sort_key(self) -> tuple:
        """Iterations to target (never = inf), ties broken by final suboptimality."""
        return (math.inf if self.iters is None else self.iters, self.final_suboptimality)

    def csv_row(self) -> list:
        return [self.partition, "" if self.iters is None else self.iters,
                repr(self.final_suboptimality), repr(self.final_objective)]


def partition_effect(dataset: Dataset, spec: ModelSpec, kinds, config: SolverConfig,
                     reference: float, target: float = 1e-6, partition_seed: int = 0,
                     engine: str = "inproc") -> list[EffectRow]:
    """Run pSCOPE once per partition kind with identical eta, M, T and seed."""
    rows = []
    for kind in kinds:
        plan = make_partition(dataset, kind, config.workers, partition_seed)
        _, trace = pscope_train(dataset, spec, plan, replace(config, record_trace=True),
                                reference=reference, engine=engine)
        rows.append(EffectRow(kind, iterations_to_reach(trace, target), trace.suboptimality[-1],
                              trace.objective[-1], trace))
    return rows


def is_ordered(rows: list[EffectRow], strict_from: int = 1) -> bool:
    """rows[0] <= rows[1] < rows[2] < ... under ``EffectRow.sort_key``.

    Comparisons before index ``strict_from`` may be ties.
    """
    keys = [r.sort_key() for r in rows]
    for i in range(1, len(keys)):
        if keys[i - 1] > keys[i] or (i > strict_from and keys[i - 1] == keys[i]):
            return False
    return True
