#  /*******************************************************************************
#   * Copyright 2025 -- 2026 The capacity-dejavu Authors
#   *
#   * Licensed under the Apache License, Version 2.0 (the "License");
#   * you may not use this file except in compliance with the License.
#   * You may obtain a copy of the License at
#   *
#   *     http://www.apache.org/licenses/LICENSE-2.0
#   *
#   * Unless required by applicable law or agreed to in writing, software
#   * distributed under the License is distributed on an "AS IS" BASIS,
#   * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   * See the License for the specific language governing permissions and
#   * limitations under the License.
#  *******************************************************************************/
#

"""
Seeded Monte Carlo estimates of the long-run average cost of a policy.

Replication ``r`` draws its arrivals from
``numpy.random.default_rng(SeedSequence(seed).spawn(R)[r])``, so results do
not depend on the number of workers or their scheduling.
"""

import multiprocessing as mp
import time
from dataclasses import dataclass

import numpy as np

from .dejavu_utilities import (
    InvalidConfigError,
    flag_print_solves,
    get_worker_count,
    log_debug,
    __log_prefix__,
)
from .model import enumerate_states, post_decision_indices, stage_costs
from .policies import ThresholdPolicy, threshold_to_tabular

try:
    from numba import njit

    has_numba = True
except ImportError:
    has_numba = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


@dataclass(frozen=True)
class SimResult:
    mean_cost: float
    std_error: float
    horizon: int
    warmup: int
    replications: int
    seed: int
    runtime_sec: float = 0.0

    def to_dict(self):
        return {
            "mean_cost": self.mean_cost,
            "std_error": self.std_error,
            "horizon": self.horizon,
            "warmup": self.warmup,
            "replications": self.replications,
            "seed": self.seed,
        }


@njit(cache=True)
def _run_path(cost, post, arrival_offsets, warmup, size):
    idx = 0
    total = 0.0
    for t in range(arrival_offsets.shape[0]):
        if t >= warmup:
            total += cost[idx]
        idx = post[idx] + arrival_offsets[t]
        if idx < 0 or idx >= size:
            # unreachable as long as the state space is closed
            return -1.0
    return total / (arrival_offsets.shape[0] - warmup)


def replication_seeds(seed, replications):
    return np.random.SeedSequence(seed).spawn(replications)


def _sample_offsets(seed_seq, cdf, strides, horizon):
    rng = np.random.default_rng(seed_seq)
    u = rng.random((horizon, cdf.shape[0]))
    # inverse transform: number of cdf entries at or below u
    arrivals = (u[:, :, None] >= cdf[None, :, :-1]).sum(axis=2)
    return (arrivals @ strides).astype(np.int64)


def _replicate(args):
    seed_seq, cost, post, cdf, strides, horizon, warmup, size = args
    offsets = _sample_offsets(seed_seq, cdf, strides, horizon)
    mean = _run_path(cost, post, offsets, warmup, size)
    assert mean >= 0.0, "simulated trajectory left the state space"
    return float(mean)


def simulate(
    pi, config, model, horizon, warmup, replications, seed, workers=None
):
    """
    Average cost per period after ``warmup`` of ``replications`` independent
    runs of ``horizon`` periods, each starting from the empty queue.
    """
    if not horizon > warmup >= 0:
        raise InvalidConfigError(
            f"need horizon > warmup >= 0, got horizon={horizon}, warmup={warmup}."
        )
    if replications < 1:
        raise InvalidConfigError(f"need at least one replication, got {replications}.")
    start = time.time()
    space = enumerate_states(config)
    if isinstance(pi, ThresholdPolicy):
        pi = threshold_to_tabular(pi, space, config)
    pi.validate(space, config)
    cost = stage_costs(pi.actions, config).astype(np.float64)
    post = post_decision_indices(space.states(), pi.actions, space).astype(np.int64)
    cdf = np.cumsum(model.p, axis=1)
    strides = np.asarray(space.strides, dtype=np.int64)
    seeds = replication_seeds(seed, replications)
    jobs = [
        (s, cost, post, cdf, strides, horizon, warmup, space.size) for s in seeds
    ]
    if workers is None:
        workers = get_worker_count()
    if workers > 1 and replications > 1:
        ctx = mp.get_context("spawn")
        with ctx.Pool(min(workers, replications)) as pool:
            # map keeps replication order
            means = pool.map(_replicate, jobs)
    else:
        means = [_replicate(j) for j in jobs]
    means = np.asarray(means)
    mean_cost = float(means.mean())
    if replications > 1:
        std_error = float(means.std(ddof=1) / np.sqrt(replications))
    else:
        std_error = float("nan")
    runtime = time.time() - start
    log_debug(
        f"simulated {pi.name} with {replications} replications (numba: {has_numba}): "
        f"{mean_cost:.6f} +- {std_error:.6f}"
    )
    if flag_print_solves:
        print(
            f"{__log_prefix__} simulation of {pi.name} finished after {runtime:.2f}s."
        )
    return SimResult(
        mean_cost=mean_cost,
        std_error=std_error,
        horizon=horizon,
        warmup=warmup,
        replications=replications,
        seed=seed,
        runtime_sec=runtime,
    )
