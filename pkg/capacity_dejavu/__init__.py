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

__version__ = "0.3.1"


from .dejavu_utilities import (
    DejavuError,
    InvalidConfigError,
    ContractViolation,
    CapacityExceededError,
    NumericalError,
    UnsupportedHorizonError,
)
from .model import (
    ProblemConfig,
    ArrivalModel,
    StateSpace,
    build_arrival_model,
    enumerate_states,
    feasible_actions,
    stage_cost,
    transition_distribution,
)
from .policies import (
    ThresholdPolicy,
    TabularPolicy,
    do_nothing_policy,
    apply_thresholds,
    closed_form_thresholds,
    local_optimal_thresholds,
    never_early_thresholds,
    threshold_to_tabular,
)
from .solver import (
    Evaluation,
    ValueTable,
    evaluate_policy,
    improve_policy,
    policy_iteration,
    finite_horizon_values,
    finite_horizon_sequence,
)
from .sim import SimResult, simulate
from .scenarios import ScenarioSpace
