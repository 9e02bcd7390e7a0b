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

import itertools
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .dejavu_utilities import InvalidConfigError, log_debug, log_warning
from .model import ProblemConfig


METHODS = ("opt", "dn", "dn1s", "th", "th1s")
LOADS = ("EL", "FL", "BL", "AL")
PUBLISHED_TOLERANCE = 0.005
LONG_A = 3
NEVER_EARLY_COSTS = ((10.0, 10.0), (20.0, 10.0), (20.0, 5.0))


class ScenarioSpace:
    """
    The space of problem instances spanned by lists of parameter values.

    example:
    .. highlight:: python
    .. code-block:: python

        space = ScenarioSpace(
            {"K": [2, 3], "M": [1, 2], "A": [1, 2], "load": ["EL"]},
            conditions=[lambda d: d["M"] <= d["A"]],
            lam=lambda d: 0.2 * d["A"],
            c_e=10.0,
            c_o=20.0,
        )
        configs = space.generate_config_list()

    :ivar params_with_lists: parameter name to the list of its values, names as in ``ProblemConfig``.
    :ivar conditions: callables on the parameter dict, only combinations where all return True are kept.
    :ivar fixed: further ``ProblemConfig`` fields, either values or callables of the parameter dict.
    """

    def __init__(self, params_with_lists, conditions=None, **fixed):
        if conditions is None:
            conditions = []
        self.params = params_with_lists
        self.conditions = conditions
        self.fixed = fixed
        self._num_of_invalid_configs = 0

    def __str__(self):
        res = [f"{k}: {v}" for k, v in self.params.items()]
        res += [f"{k}: {v}" for k, v in self.fixed.items()]
        return "ScenarioSpace: " + ", ".join(res)

    def generate_config_list(self):
        ks = list(self.params.keys())
        vs = list(self.params.values())
        config_list = []
        for cur_combination in itertools.product(*vs):
            nd = dict(zip(ks, cur_combination))
            # global AND
            if not all(condition(nd) for condition in self.conditions):
                self._num_of_invalid_configs += 1
                continue
            for k, v in self.fixed.items():
                nd[k] = v(nd) if callable(v) else v
            config_list.append(ProblemConfig(**nd))
        log_debug(f"generated {len(config_list)} scenarios out of {str(self)}.")
        return config_list


@dataclass(frozen=True)
class PublishedTable:
    table_id: int
    M: int
    K: int
    c_e: float
    c_o: float
    A_values: Tuple[int, ...]
    # load -> A -> costs in METHODS order
    costs: Dict[str, Dict[int, Tuple[float, ...]]]
    long_A: Tuple[int, ...] = ()

    def is_long(self, A):
        return A in self.long_A

    def config(self, load, A):
        # the load comparison fixes lambda = 0.2 A
        return ProblemConfig(
            K=self.K, M=self.M, A=A, lam=0.2 * A, c_e=self.c_e, c_o=self.c_o, load=load
        )

    def published_cost(self, load, A, method):
        row = self.costs.get(load, {}).get(A, None)
        if row is None:
            return None
        return row[METHODS.index(method)]


PUBLISHED_TABLES = {
    1: PublishedTable(
        table_id=1,
        M=1,
        K=4,
        c_e=5.0,
        c_o=20.0,
        A_values=(1, 2, 3),
        costs={
            "EL": {
                1: (0.18, 0.26, 0.19, 0.19, 0.18),
                2: (0.98, 1.38, 1.01, 1.01, 0.98),
                3: (2.27, 2.97, 2.30, 2.30, 2.27),
            },
            "FL": {
                1: (0.18, 0.21, 0.18, 0.18, 0.18),
                2: (1.18, 1.33, 1.18, 1.18, 1.18),
                3: (2.57, 2.95, 2.57, 2.57, 2.57),
            },
            "BL": {
                1: (0.09, 0.21, 0.10, 0.10, 0.09),
                2: (0.67, 1.33, 0.79, 0.79, 0.67),
                3: (1.78, 2.95, 1.92, 1.92, 1.78),
            },
        },
    ),
    2: PublishedTable(
        table_id=2,
        M=1,
        K=4,
        c_e=10.0,
        c_o=20.0,
        A_values=(1, 2, 3),
        costs={
            "EL": {
                1: (0.21, 0.26, 0.21, 0.22, 0.21),
                2: (1.13, 1.38, 1.20, 1.24, 1.13),
                3: (2.55, 2.97, 2.63, 2.71, 2.55),
            },
            "FL": {
                1: (0.19, 0.21, 0.19, 0.19, 0.19),
                2: (1.23, 1.33, 1.24, 1.24, 1.23),
                3: (2.77, 2.95, 2.78, 2.79, 2.77),
            },
            "BL": {
                1: (0.13, 0.21, 0.14, 0.17, 0.13),
                2: (0.95, 1.33, 1.12, 1.27, 0.95),
                3: (2.32, 2.95, 2.53, 2.77, 2.32),
            },
        },
    ),
    3: PublishedTable(
        table_id=3,
        M=5,
        K=4,
        c_e=10.0,
        c_o=20.0,
        A_values=(1, 2, 3),
        costs={
            "EL": {
                1: (0.0, 0.0, 0.0, 0.09, 0.0),
                2: (0.0, 0.0, 0.0, 0.04, 0.0),
                3: (0.0, 0.0, 0.0, 0.01, 0.0),
            },
            "FL": {
                1: (0.0, 0.0, 0.0, 0.02, 0.0),
                2: (0.0, 0.0, 0.0, 0.01, 0.0),
                3: (0.0, 0.0, 0.0, 0.0, 0.0),
            },
            "BL": {
                1: (0.0, 0.0, 0.0, 0.15, 0.0),
                2: (0.0, 0.0, 0.0, 0.09, 0.0),
                3: (0.0, 0.0, 0.0, 0.04, 0.0),
            },
        },
    ),
    4: PublishedTable(
        table_id=4,
        M=1,
        K=3,
        c_e=10.0,
        c_o=20.0,
        A_values=(1, 2, 5, 10),
        costs={
            "EL": {
                1: (0.20, 0.23, 0.20, 0.20, 0.20),
                2: (1.16, 1.36, 1.19, 1.19, 1.16),
                5: (6.81, 7.36, 6.86, 6.86, 6.81),
                10: (22.09, 22.71, 22.20, 22.20, 22.09),
            },
            "FL": {
                1: (0.16, 0.17, 0.16, 0.16, 0.16),
                2: (1.23, 1.30, 1.23, 1.24, 1.23),
                5: (7.16, 7.35, 7.17, 7.20, 7.16),
                10: (22.23, 22.71, 22.23, 22.23, 22.23),
            },
            "BL": {
                1: (0.12, 0.17, 0.12, 0.12, 0.12),
                2: (0.95, 1.30, 1.05, 1.05, 0.95),
                5: (6.46, 7.35, 6.59, 6.59, 6.46),
                10: (21.94, 22.71, 21.96, 21.98, 21.94),
            },
        },
        long_A=(10,),
    ),
    5: PublishedTable(
        table_id=5,
        M=1,
        K=5,
        c_e=5.0,
        c_o=20.0,
        A_values=(1, 2),
        costs={
            "EL": {
                1: (0.18, 0.28, 0.19, 0.19, 0.18),
                2: (0.92, 1.39, 1.00, 1.00, 0.92),
            },
            "FL": {
                1: (0.19, 0.24, 0.20, 0.20, 0.19),
                2: (1.14, 1.36, 1.15, 1.15, 1.14),
            },
            "BL": {
                1: (0.09, 0.24, 0.14, 0.14, 0.09),
                2: (0.64, 1.36, 0.89, 0.89, 0.64),
            },
        },
        long_A=(1, 2),
    ),
    6: PublishedTable(
        table_id=6,
        M=1,
        K=5,
        c_e=10.0,
        c_o=20.0,
        A_values=(1, 2),
        costs={
            "EL": {
                1: (0.22, 0.28, 0.22, 0.26, 0.22),
                2: (1.11, 1.39, 1.21, 1.32, 1.11),
            },
            "FL": {
                1: (0.21, 0.24, 0.21, 0.21, 0.21),
                2: (1.22, 1.36, 1.24, 1.24, 1.22),
            },
            "BL": {
                1: (0.15, 0.24, 0.20, 0.25, 0.15),
                2: (0.96, 1.36, 1.15, 1.57, 0.96),
            },
        },
        long_A=(1, 2),
    ),
}


@dataclass(frozen=True)
class TableCell:
    scenario: str
    table_id: int
    load: str
    A: int
    config: Optional[ProblemConfig]
    long: bool
    skip_reason: Optional[str] = None


def get_published_table(table_id):
    if table_id not in PUBLISHED_TABLES:
        raise InvalidConfigError(
            f"unknown table {table_id}, expected one of {sorted(PUBLISHED_TABLES)}."
        )
    return PUBLISHED_TABLES[table_id]


def table_cells(table_id, fast=False):
    """
    Grid of one table in row order: loads EL, FL, BL, AL, then A ascending.
    ``fast`` drops long cells and every A above 3.
    """
    table = get_published_table(table_id)
    cells = []
    for load in LOADS:
        for A in table.A_values:
            long = table.is_long(A) or A > LONG_A
            if fast and long:
                continue
            scenario = f"T{table_id}-{load}-A{A}"
            if load == "AL":
                cells.append(
                    TableCell(
                        scenario, table_id, load, A, None, long, "skipped: unpublished q"
                    )
                )
                continue
            cells.append(
                TableCell(scenario, table_id, load, A, table.config(load, A), long)
            )
    if fast and len(cells) == 0:
        log_warning(f"table {table_id} has no cells left with --fast.")
    return cells


def never_early_grid():
    # (K, M, A) in {2,3}x{1,2}x{1,2} with c_o <= c_e
    space = ScenarioSpace(
        {
            "K": [2, 3],
            "M": [1, 2],
            "A": [1, 2],
            "c_e": [10.0, 20.0],
            "c_o": [10.0, 5.0],
        },
        conditions=[lambda d: (d["c_e"], d["c_o"]) in NEVER_EARLY_COSTS],
        lam=lambda d: 0.5 * d["A"],
        load="EL",
    )
    return space.generate_config_list()


def two_period_threshold_grid(A_values=(1, 2, 3)):
    # five cost ratios times three arrival rates per A
    space = ScenarioSpace(
        {
            "A": list(A_values),
            "c_o": [5.0, 10.0, 15.0, 20.0, 40.0],
            "lam": [0.2, 0.4, 1.0],
        },
        K=2,
        M=1,
        c_e=10.0,
        load="EL",
    )
    return space.generate_config_list()


def random_two_period_configs(count, seed=0, max_A=3, max_M=3):
    """Seeded K=2 instances with random sizes, rates, costs and AL loads."""
    configs = []
    for s in np.random.SeedSequence(seed).spawn(count):
        rng = np.random.default_rng(s)
        A = int(rng.integers(1, max_A + 1))
        configs.append(
            ProblemConfig(
                K=2,
                M=int(rng.integers(1, max_M + 1)),
                A=A,
                lam=float(rng.uniform(0.1, 1.0) * A),
                c_e=float(rng.uniform(1.0, 20.0)),
                c_o=float(rng.uniform(1.0, 40.0)),
                load="AL",
                seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return configs


# (load, method) pairs of the first table used for the simulation cross-check
SIMULATION_PAIRS = (
    ("EL", "dn"),
    ("EL", "th1s"),
    ("FL", "dn"),
    ("FL", "th1s"),
    ("BL", "dn"),
    ("BL", "th1s"),
)


def simulation_configs():
    table = get_published_table(1)
    return [(table.config(load, 1), method) for load, method in SIMULATION_PAIRS]
