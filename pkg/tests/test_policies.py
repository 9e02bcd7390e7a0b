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

import math

import numpy as np
import pytest

from capacity_dejavu import (
    ContractViolation,
    InvalidConfigError,
    ProblemConfig,
    TabularPolicy,
    ThresholdPolicy,
    apply_thresholds,
    build_arrival_model,
    closed_form_thresholds,
    do_nothing_policy,
    enumerate_states,
    evaluate_policy,
    feasible_actions,
    local_optimal_thresholds,
    never_early_thresholds,
    threshold_to_tabular,
)
from capacity_dejavu.policies import (
    closed_form_threshold,
    heuristic_thresholds,
    risk_factor,
)


KS = [2, 3]
AS = [1, 2, 3]
MS = [1, 2]
LAMBDAS = [0.2, 0.4, 1.0]
COSTS = [(10.0, 40.0), (10.0, 15.0), (20.0, 10.0)]


def _config(K=3, M=1, A=2, lam=0.4, c_e=10.0, c_o=20.0, load="EL"):
    return ProblemConfig(K=K, M=M, A=A, lam=lam, c_e=c_e, c_o=c_o, load=load)


def test_do_nothing_policy():
    config = _config(K=3, A=3)
    space = enumerate_states(config)
    dn = do_nothing_policy(space)
    assert dn.name == "dn"
    assert dn[space.state_to_index((2, 1, 3))] == (2, 0, 0)
    assert len(dn.early_service_states()) == 0
    dn.validate(space, config)
    assert dn.action_of.shape == (space.size, 3)
    assert np.array_equal(dn.action_of[:, 0], space.states()[:, 0])
    with pytest.raises(ValueError):
        dn.action_of[0, 0] = 1


def test_apply_thresholds_example():
    config = _config(K=3, M=2, A=4)
    s = ThresholdPolicy((0, 1, 2))
    assert apply_thresholds(s, (0, 3, 4), config) == (0, 2, 0)
    # lead time 2 gets what lead time 1 leaves over
    assert apply_thresholds(s, (0, 1, 4), config) == (0, 0, 2)
    assert apply_thresholds(s, (3, 3, 4), config) == (3, 0, 0)


@pytest.mark.parametrize(
    "s", [(1, 0), (0, -1), (0,)]
)
def test_invalid_thresholds(s):
    with pytest.raises(InvalidConfigError):
        ThresholdPolicy(s)


def test_threshold_bounds():
    config = _config(K=3, A=2)
    ThresholdPolicy((0, 4, 2)).validate(config)
    with pytest.raises(InvalidConfigError):
        ThresholdPolicy((0, 5, 2)).validate(config)
    with pytest.raises(InvalidConfigError):
        ThresholdPolicy((0, 1)).validate(config)


def test_apply_thresholds_length_mismatch():
    with pytest.raises(ContractViolation):
        apply_thresholds(ThresholdPolicy((0, 1)), (0, 1, 1), _config())


@pytest.mark.parametrize("K", KS)
@pytest.mark.parametrize("M", MS)
@pytest.mark.parametrize("A", [1, 2])
def test_threshold_to_tabular(K, M, A):
    config = _config(K=K, M=M, A=A)
    space = enumerate_states(config)
    rng = np.random.default_rng(K * 100 + M * 10 + A)
    for _ in range(5):
        s = ThresholdPolicy(
            (0,) + tuple(int(rng.integers(0, (K - j) * A + 1)) for j in range(1, K))
        )
        table = threshold_to_tabular(s, space, config)
        table.validate(space, config)
        for i, x in enumerate(space):
            y = table[i]
            assert y == apply_thresholds(s, x, config)
            assert y in feasible_actions(x, config)
            if x[0] >= M:
                assert y == (x[0],) + (0,) * (K - 1)


def test_threshold_rule_k2():
    config = _config(K=2, M=1, A=1)
    space = enumerate_states(config)
    table = threshold_to_tabular(ThresholdPolicy((0, 0)), space, config)
    assert table[space.state_to_index((0, 1))] == (0, 1)
    assert table[space.state_to_index((1, 1))] == (1, 0)
    assert table[space.state_to_index((0, 0))] == (0, 0)


@pytest.mark.parametrize("K", KS)
@pytest.mark.parametrize("M", MS)
def test_never_early_thresholds(K, M):
    config = _config(K=K, M=M, A=2)
    space = enumerate_states(config)
    s = never_early_thresholds(config)
    assert s.s == (0,) + tuple((K - j) * 2 for j in range(1, K))
    assert threshold_to_tabular(s, space, config) == do_nothing_policy(space)


def test_zero_thresholds_serve_everything():
    config = _config(K=3, M=100, A=1)
    space = enumerate_states(config)
    table = threshold_to_tabular(ThresholdPolicy((0, 0, 0)), space, config)
    np.testing.assert_array_equal(table.actions, space.states())


def test_tabular_policy_equality():
    space = enumerate_states(_config(K=2, A=1))
    a = do_nothing_policy(space)
    b = TabularPolicy(np.array(a.actions), name="other")
    assert a == b
    assert a.renamed("x").name == "x"
    with pytest.raises(ContractViolation):
        TabularPolicy(np.zeros(4))


def test_tabular_policy_infeasible():
    config = _config(K=2, M=1, A=1)
    space = enumerate_states(config)
    actions = np.array(space.states())
    # serving every queued job is infeasible once x0 >= M
    with pytest.raises(ContractViolation):
        TabularPolicy(actions).validate(space, config)


def test_risk_factor():
    assert math.isclose(risk_factor(0.5, 0.3), 1.1 / 0.6, rel_tol=1e-12)
    assert math.isclose(risk_factor(0.5, 0.3), 1.8333, abs_tol=1e-4)
    assert risk_factor(1.0, 0.0) == float("inf")


@pytest.mark.parametrize(
    "c_e, c_o, A, expected",
    [
        (10.0, 20.0, 2, 0),
        (15.0, 20.0, 2, 1),
        (20.0, 15.0, 2, 2),
        (20.0, 15.0, 5, 5),
        (0.0, 20.0, 2, 0),
    ],
)
def test_closed_form_threshold(c_e, c_o, A, expected):
    config = _config(K=2, A=A, c_e=c_e, c_o=c_o)
    assert closed_form_threshold(1.1 / 0.6, config) == expected


def test_closed_form_threshold_without_arrivals():
    config = _config(K=2, A=2, c_e=10.0, c_o=20.0, lam=0.0)
    model = build_arrival_model(config)
    assert closed_form_thresholds(config, model).s == (0, 1)
    free = config.replace(c_e=0.0)
    assert closed_form_thresholds(free, model).s == (0, 0)


def test_closed_form_needs_single_server():
    config = _config(M=2)
    with pytest.raises(InvalidConfigError):
        closed_form_thresholds(config, build_arrival_model(config))


@pytest.mark.parametrize("K", [2, 3, 4])
def test_closed_form_overtime_cheaper(K):
    config = _config(K=K, A=2, c_e=20.0, c_o=10.0)
    s = closed_form_thresholds(config, build_arrival_model(config))
    assert s.name == "th"
    assert s.s == (0,) + (2,) * (K - 1)


@pytest.mark.parametrize("A", [1, 2])
@pytest.mark.parametrize("lam", [0.4, 1.0])
@pytest.mark.parametrize("costs", COSTS)
def test_local_optimal_matches_closed_form(A, lam, costs):
    c_e, c_o = costs
    config = _config(K=2, M=1, A=A, lam=lam, c_e=c_e, c_o=c_o)
    model = build_arrival_model(config)
    assert (
        local_optimal_thresholds(config, model).s
        == closed_form_thresholds(config, model).s
    )


@pytest.mark.parametrize("A", [1, 2])
def test_local_optimal_enough_servers(A):
    # the auxiliary queue never holds more due jobs than servers
    config = _config(K=3, M=2 * A, A=A, lam=0.5 * A)
    s = local_optimal_thresholds(config, build_arrival_model(config))
    assert s.s == (0, A, A)


def test_local_optimal_free_overtime():
    config = _config(K=3, M=2, A=2, c_o=0.0)
    s = local_optimal_thresholds(config, build_arrival_model(config))
    assert s.s == (0, 2, 2)


@pytest.mark.parametrize("M", MS)
@pytest.mark.parametrize("c_o", [5.0, 20.0, 40.0])
def test_local_optimal_is_local_minimum(M, c_o):
    # for K = 2 the auxiliary problem is the instance itself
    config = _config(K=2, M=M, A=2, lam=0.8, c_e=5.0, c_o=c_o)
    model = build_arrival_model(config)
    space = enumerate_states(config)
    chosen = local_optimal_thresholds(config, model)
    g = {
        s1: evaluate_policy(
            threshold_to_tabular(ThresholdPolicy((0, s1)), space, config),
            space,
            model,
            config,
        ).g
        for s1 in range(3)
    }
    t = chosen.s[1]
    for n in (t - 1, t + 1):
        if n in g:
            assert g[t] <= g[n] + 1e-9


def test_heuristic_dispatch():
    config = _config(K=3, M=1)
    model = build_arrival_model(config)
    assert heuristic_thresholds(config, model) == closed_form_thresholds(config, model)
    config = config.replace(M=2)
    assert heuristic_thresholds(config, model) == local_optimal_thresholds(
        config, model
    )
