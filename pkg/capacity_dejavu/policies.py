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

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .dejavu_utilities import (
    InvalidConfigError,
    ContractViolation,
    log_debug,
    log_verbose,
)
from .model import (
    ArrivalModel,
    StateSpace,
    feasible_mask,
)


RISK_DENOMINATOR_EPS = 1e-12
SCAN_TOL = 1e-10


@dataclass(frozen=True)
class ThresholdPolicy:
    """
    Serve early at lead time ``j`` only the jobs above ``s[j]``, as long as
    capacity is left. ``s[0]`` is always 0.
    """

    s: Tuple[int, ...]
    name: str = "threshold"

    def __post_init__(self):
        s = tuple(int(v) for v in self.s)
        if len(s) < 2 or s[0] != 0 or any(v < 0 for v in s):
            raise InvalidConfigError(
                f"thresholds must be non-negative with s[0] = 0, got {s}."
            )
        object.__setattr__(self, "s", s)

    @property
    def K(self):
        return len(self.s)

    def validate(self, config):
        if self.K != config.K:
            raise InvalidConfigError(
                f"threshold vector {self.s} does not match K={config.K}."
            )
        for j, v in enumerate(self.s):
            if v > (config.K - j) * config.A:
                raise InvalidConfigError(
                    f"threshold s[{j}]={v} exceeds its bound {(config.K - j) * config.A}."
                )


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Dense action table, row ``i`` is the action taken in state ``i``."""

    actions: np.ndarray
    name: str = "tabular"

    def __post_init__(self):
        a = np.array(self.actions, dtype=np.int64)
        if a.ndim != 2:
            raise ContractViolation("a tabular policy needs an action table (size, K).")
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    @property
    def action_of(self):
        return self.actions

    @property
    def size(self):
        return self.actions.shape[0]

    @property
    def K(self):
        return self.actions.shape[1]

    def __getitem__(self, i):
        return tuple(int(v) for v in self.actions[i])

    def __len__(self):
        return self.size

    def __eq__(self, other):
        if not isinstance(other, TabularPolicy):
            return NotImplemented
        return self.actions.shape == other.actions.shape and bool(
            np.array_equal(self.actions, other.actions)
        )

    __hash__ = object.__hash__

    def renamed(self, name):
        return TabularPolicy(self.actions, name=name)

    def early_service_states(self):
        return np.flatnonzero(np.any(self.actions[:, 1:] > 0, axis=1))

    def validate(self, space, config):
        if self.actions.shape != (space.size, space.K):
            raise ContractViolation(
                f"policy table of shape {self.actions.shape} does not match "
                f"the state space ({space.size}, {space.K})."
            )
        ok = feasible_mask(space.states(), self.actions, config)
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise ContractViolation(
                f"policy {self.name} takes the infeasible action {self[bad]} "
                f"in state {space.index_to_state(bad)}."
            )


def do_nothing_policy(space):
    states = space.states()
    actions = np.zeros_like(states)
    actions[:, 0] = states[:, 0]
    return TabularPolicy(actions, name="dn")


def apply_thresholds(s, x, config):
    if len(s.s) != len(x):
        raise ContractViolation(
            f"threshold vector {s.s} and state {tuple(x)} differ in length."
        )
    y = [int(x[0])]
    remaining = max(config.M - int(x[0]), 0)
    for j in range(1, len(x)):
        yj = min(max(int(x[j]) - s.s[j], 0), remaining)
        remaining -= yj
        y.append(yj)
    return tuple(y)


def threshold_to_tabular(s, space, config):
    s.validate(config)
    states = space.states()
    actions = np.zeros_like(states)
    actions[:, 0] = states[:, 0]
    remaining = np.maximum(config.M - states[:, 0], 0)
    for j in range(1, space.K):
        yj = np.minimum(np.maximum(states[:, j] - s.s[j], 0), remaining)
        remaining = remaining - yj
        actions[:, j] = yj
    return TabularPolicy(actions, name=s.name)


def never_early_thresholds(config):
    """Thresholds at the positional maxima, (0, A(K-1), ..., A)."""
    return ThresholdPolicy(
        (0,) + tuple((config.K - j) * config.A for j in range(1, config.K)),
        name="never-early",
    )


def risk_factor(p0, p1):
    """
    ``(1 + p0 - p0 p1 - p0^2) / (1 - p0^2 - p0 p1)`` for the probabilities of
    zero and one arrivals; +inf when arrivals never happen.
    """
    den = 1.0 - p0 * p0 - p0 * p1
    if den <= RISK_DENOMINATOR_EPS:
        return float("inf")
    return (1.0 + p0 - p0 * p1 - p0 * p0) / den


def closed_form_threshold(theta, config):
    # free early service is always taken, also when theta is infinite
    weighted = config.c_e * theta if config.c_e > 0 else 0.0
    if weighted <= config.c_o:
        return 0
    if config.c_e <= config.c_o:
        return 1
    return config.A


def closed_form_thresholds(config, model):
    if config.M != 1:
        raise InvalidConfigError(
            f"closed-form thresholds are defined for a single server, got M={config.M}."
        )
    s = [0]
    for j in range(1, config.K):
        theta = risk_factor(model.p[j - 1][0], model.p[j - 1][1])
        s.append(closed_form_threshold(theta, config))
    log_debug(f"closed-form thresholds {tuple(s)} for {config}")
    return ThresholdPolicy(tuple(s), name="th")


def auxiliary_problem(config, model, j):
    """
    Two-period instance with due-now arrivals ``p[j]`` and due-next arrivals
    ``p[j + 1]``, same servers and costs.
    """
    rates = np.array([model.lambda_j[j], model.lambda_j[j + 1]], dtype=np.float64)
    lam = float(rates.sum())
    if lam > 0:
        aux_config = config.replace(
            K=2, lam=lam, load="CUSTOM", q=(rates[0] / lam, 1.0 - rates[0] / lam)
        )
    else:
        aux_config = config.replace(K=2, lam=0.0, load="EL", q=None)
    aux_model = ArrivalModel(
        q=aux_config.q if aux_config.q is not None else np.full(2, 0.5),
        lambda_j=rates,
        p=np.vstack([model.p[j], model.p[j + 1]]),
    )
    return aux_config, aux_model


def local_optimal_thresholds(config, model):
    from .solver import evaluate_policy

    s = [0]
    space = StateSpace.from_bounds(2, config.A)
    for j in range(config.K - 1):
        aux_config, aux_model = auxiliary_problem(config, model, j)
        old = float("inf")
        threshold = 0
        for candidate in range(config.A, -1, -1):
            pi = threshold_to_tabular(
                ThresholdPolicy((0, candidate)), space, aux_config
            )
            g = evaluate_policy(pi, space, aux_model, aux_config).g
            log_verbose(f"lead time {j + 1}: threshold {candidate} has cost {g:.9f}")
            # ties keep scanning towards the smaller threshold
            if g > old + SCAN_TOL * max(1.0, abs(old)):
                threshold = candidate + 1
                break
            old = g
        s.append(threshold)
    log_debug(f"local optimal thresholds {tuple(s)} for {config}")
    return ThresholdPolicy(tuple(s), name="th")


def heuristic_thresholds(config, model):
    if config.M == 1:
        return closed_form_thresholds(config, model)
    return local_optimal_thresholds(config, model)
