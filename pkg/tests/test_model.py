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
import json
import math

import numpy as np
import pytest

from capacity_dejavu import (
    CapacityExceededError,
    ContractViolation,
    InvalidConfigError,
    ProblemConfig,
    StateSpace,
    build_arrival_model,
    enumerate_states,
    feasible_actions,
    stage_cost,
    transition_distribution,
)
from capacity_dejavu.model import (
    closure_violations,
    count_feasible_actions,
    is_feasible,
    load_pattern,
    post_decision_digits,
    post_decision_indices,
    stage_costs,
    truncated_poisson,
)


KS = [2, 3, 4]
AS = [1, 2, 3]
MS = [1, 2, 3]
LOADS = ["EL", "FL", "BL"]
SEEDS = [0, 7, 12345]


def _config(K=3, M=1, A=2, lam=0.4, c_e=10.0, c_o=20.0, load="EL", **kw):
    return ProblemConfig(K=K, M=M, A=A, lam=lam, c_e=c_e, c_o=c_o, load=load, **kw)


@pytest.mark.parametrize(
    "load, expected",
    [
        ("EL", (1 / 3, 1 / 3, 1 / 3)),
        ("FL", (9 / 14, 4 / 14, 1 / 14)),
        ("BL", (1 / 14, 4 / 14, 9 / 14)),
    ],
)
def test_load_pattern_k3(load, expected):
    q = load_pattern(_config(K=3, load=load))
    np.testing.assert_allclose(q, expected, rtol=0, atol=1e-15)


@pytest.mark.parametrize("K", KS)
@pytest.mark.parametrize("load", LOADS)
@pytest.mark.parametrize("lam", [0.0, 0.2, 1.0])
def test_arrival_rates_follow_q(K, load, lam):
    config = _config(K=K, load=load, lam=lam)
    model = build_arrival_model(config)
    assert math.isclose(model.q.sum(), 1.0, abs_tol=1e-12)
    np.testing.assert_allclose(model.lambda_j, model.q * lam)
    assert model.p.shape == (K, config.A + 1)
    np.testing.assert_allclose(model.p.sum(axis=1), 1.0, atol=1e-12)


def test_truncated_poisson_example():
    # lambda_j = 0.4 with A = 2
    config = _config(K=2, lam=0.8, A=2)
    model = build_arrival_model(config)
    for row in model.p:
        np.testing.assert_allclose(row, (0.675676, 0.270270, 0.054054), atol=1e-6)
    np.testing.assert_allclose(
        truncated_poisson(0.4, 2), (1 / 1.48, 0.4 / 1.48, 0.08 / 1.48)
    )


def test_zero_rate_means_no_arrivals():
    model = build_arrival_model(_config(lam=0.0))
    np.testing.assert_array_equal(model.p[:, 0], 1.0)
    offsets, probs = model.outcomes
    assert list(offsets) == [0]
    assert list(probs) == [1.0]


@pytest.mark.parametrize("seed", SEEDS)
def test_al_load_is_seeded(seed):
    config = _config(K=4, load="AL", seed=seed)
    q1 = load_pattern(config)
    q2 = load_pattern(config)
    np.testing.assert_array_equal(q1, q2)
    assert np.all(q1 > 0)
    assert math.isclose(q1.sum(), 1.0, abs_tol=1e-12)


def test_al_load_needs_seed():
    with pytest.raises(InvalidConfigError):
        build_arrival_model(_config(load="AL"))


def test_custom_q():
    config = _config(K=2, load="CUSTOM", q=[0.25, 0.75], lam=2.0)
    model = build_arrival_model(config)
    np.testing.assert_allclose(model.lambda_j, (0.5, 1.5))


@pytest.mark.parametrize(
    "q",
    [
        [0.5, 0.5],
        [0.5, 0.6, -0.1],
        [0.0, 0.5, 0.5],
        [0.3, 0.3, 0.3],
    ],
)
def test_invalid_q(q):
    with pytest.raises(InvalidConfigError):
        _config(K=3, load="CUSTOM", q=q)


@pytest.mark.parametrize(
    "changes",
    [
        {"K": 1},
        {"M": 0},
        {"A": 0},
        {"lam": -0.1},
        {"c_e": -1.0},
        {"c_o": float("inf")},
        {"load": "XL"},
        {"K": 2.5},
    ],
)
def test_invalid_config(changes):
    d = dict(K=3, M=1, A=2, lam=0.4, c_e=10.0, c_o=20.0)
    d.update(changes)
    with pytest.raises(InvalidConfigError):
        ProblemConfig(**d)


def test_q_only_with_custom():
    with pytest.raises(InvalidConfigError):
        _config(K=2, load="EL", q=[0.5, 0.5])
    with pytest.raises(InvalidConfigError):
        _config(K=2, load="CUSTOM")


def test_config_file(tmp_path):
    path = tmp_path / "inst.json"
    d = {"K": 3, "M": 1, "A": 2, "lambda": 0.4, "ce": 10, "co": 20, "load": "FL"}
    path.write_text(json.dumps(d))
    config = ProblemConfig.from_file(str(path))
    assert config == _config(load="FL")
    assert ProblemConfig.from_dict(config.to_dict()) == config
    assert config.fingerprint() == _config(load="FL").fingerprint()
    assert config.fingerprint() != _config(load="BL").fingerprint()


@pytest.mark.parametrize(
    "d",
    [
        {"K": 3, "M": 1, "A": 2, "lambda": 0.4, "ce": 10, "co": 20, "gamma": 1},
        {"K": 3, "M": 1, "A": 2, "lambda": 0.4, "ce": 10},
    ],
)
def test_config_keys(d):
    with pytest.raises(InvalidConfigError):
        ProblemConfig.from_dict(d)


@pytest.mark.parametrize(
    "K, A, size", [(3, 2, 105), (2, 1, 6), (4, 1, 120), (2, 0, 1)]
)
def test_state_space_size(K, A, size):
    space = StateSpace.from_bounds(K, A)
    assert space.size == size
    assert len(list(space)) == size


@pytest.mark.parametrize("K", KS)
@pytest.mark.parametrize("A", AS)
def test_index_bijection(K, A):
    space = StateSpace.from_bounds(K, A)
    seen = set()
    for i, x in enumerate(space):
        assert space.state_to_index(x) == i
        assert all(0 <= x[j] <= (K - j) * A for j in range(K))
        seen.add(x)
    assert len(seen) == space.size
    np.testing.assert_array_equal(
        space.states() @ np.asarray(space.strides), np.arange(space.size)
    )


def test_index_layout():
    space = enumerate_states(_config(K=3, A=2))
    assert space.empty_index == 0
    assert space.index_to_state(0) == (0, 0, 0)
    # x_0 is the least significant digit
    assert space.state_to_index((1, 0, 0)) == 1
    assert space.state_to_index((0, 1, 0)) == 7
    assert space.state_to_index((0, 0, 1)) == 7 * 5


def test_index_out_of_range():
    space = enumerate_states(_config(K=2, A=1))
    with pytest.raises(ContractViolation):
        space.state_to_index((3, 0))
    with pytest.raises(ContractViolation):
        space.index_to_state(6)


def test_capacity_exceeded(monkeypatch):
    with pytest.raises(CapacityExceededError):
        StateSpace.from_bounds(5, 10, max_states=1000)
    monkeypatch.setenv("CAPACITY_DEJAVU_MAX_STATES", "100")
    with pytest.raises(CapacityExceededError) as e:
        enumerate_states(_config(K=3, A=2))
    assert e.value.size == 105
    assert e.value.limit == 100


@pytest.mark.parametrize(
    "x, config, expected",
    [
        ((2, 0, 3), _config(K=3, M=1, A=3), [(2, 0, 0)]),
        ((0, 1), _config(K=2, M=1, A=1), [(0, 0), (0, 1)]),
        ((0, 0, 0), _config(K=3, M=2, A=2), [(0, 0, 0)]),
        (
            (1, 2, 1),
            _config(K=3, M=3, A=2),
            [(1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1), (1, 2, 0)],
        ),
    ],
)
def test_feasible_actions(x, config, expected):
    assert feasible_actions(x, config) == expected


@pytest.mark.parametrize("K", [2, 3])
@pytest.mark.parametrize("M", MS)
@pytest.mark.parametrize("A", [1, 2])
def test_feasible_action_properties(K, M, A):
    config = _config(K=K, M=M, A=A)
    space = enumerate_states(config)
    for x in space:
        acts = feasible_actions(x, config)
        assert acts[0] == (x[0],) + (0,) * (K - 1)
        assert acts == sorted(acts)
        assert len(acts) == count_feasible_actions(x, config)
        brute = [
            y
            for y in itertools.product(*(range(v + 1) for v in x))
            if is_feasible(x, y, config)
        ]
        assert sorted(brute) == acts


def test_feasible_actions_bad_state():
    with pytest.raises(ContractViolation):
        feasible_actions((0, 5), _config(K=2, A=2))


@pytest.mark.parametrize(
    "x, y, config, cost",
    [
        ((2, 0, 3), (2, 0, 1), _config(K=3, M=3, A=3, c_e=5.0, c_o=20.0), 10.0),
        ((2, 0), (2, 0), _config(K=2, M=1, A=2, c_e=5.0, c_o=20.0), 20.0),
        ((0, 1, 1), (0, 1, 1), _config(K=3, M=2, A=2, c_e=5.0, c_o=20.0), 15.0),
        ((0, 0), (0, 0), _config(K=2, M=1, A=2), 0.0),
    ],
)
def test_stage_cost(x, y, config, cost):
    assert stage_cost(x, y, config) == cost
    assert stage_costs(np.array([y]), config)[0] == cost


@pytest.mark.parametrize(
    "x, y",
    [
        ((1, 1), (1, 1)),  # no capacity left
        ((0, 1), (1, 0)),  # due jobs must be served
        ((0, 1), (0, 2)),  # more than queued
    ],
)
def test_stage_cost_infeasible(x, y):
    with pytest.raises(ContractViolation):
        stage_cost(x, y, _config(K=2, M=1, A=2))


def test_transition_example():
    config = _config(K=3, M=3, A=4, lam=2.0)
    model = build_arrival_model(config)
    space = enumerate_states(config)
    dist = dict(transition_distribution((2, 0, 3), (2, 0, 1), model, space, config))
    # post-decision queue (0, 2, 0), then four arrivals due next period
    expected = model.p[0][4] * model.p[1][0] * model.p[2][0]
    assert math.isclose(dist[space.state_to_index((4, 2, 0))], expected, rel_tol=1e-12)
    assert space.state_to_index((4, 0, 0)) not in dist
    assert math.isclose(sum(dist.values()), 1.0, abs_tol=1e-12)


@pytest.mark.parametrize("K", [2, 3])
@pytest.mark.parametrize("load", LOADS)
def test_transition_from_empty(K, load):
    config = _config(K=K, A=1, lam=0.6, load=load)
    model = build_arrival_model(config)
    space = enumerate_states(config)
    empty = (0,) * K
    dist = transition_distribution(empty, empty, model, space, config)
    assert len(dist) == 2**K
    for i, p in dist:
        x = space.index_to_state(i)
        assert math.isclose(
            p, math.prod(model.p[j][x[j]] for j in range(K)), rel_tol=1e-12
        )
    assert math.isclose(sum(p for _, p in dist), 1.0, abs_tol=1e-12)


def test_transition_infeasible_action():
    config = _config(K=2, M=1, A=1)
    model = build_arrival_model(config)
    space = enumerate_states(config)
    with pytest.raises(ContractViolation):
        transition_distribution((1, 1), (1, 1), model, space, config)


@pytest.mark.parametrize("K", [2, 3])
@pytest.mark.parametrize("A", [1, 2])
def test_post_decision_indices(K, A):
    config = _config(K=K, M=2, A=A)
    space = enumerate_states(config)
    states = space.states()
    actions = np.zeros_like(states)
    actions[:, 0] = states[:, 0]
    post = post_decision_indices(states, actions, space)
    for i in range(space.size):
        x = space.index_to_state(i)
        z = tuple(x[1:]) + (0,)
        assert post[i] == space.state_to_index(z)


@pytest.mark.parametrize("K", KS)
@pytest.mark.parametrize("A", AS)
def test_post_decision_digits_stay_closed(K, A):
    config = _config(K=K, M=1, A=A)
    space = enumerate_states(config)
    assert space.bounds() == tuple((K - j) * A for j in range(K))
    states = space.states()
    actions = np.zeros_like(states)
    actions[:, 0] = states[:, 0]
    z = post_decision_digits(states, actions)
    assert np.all(z[:, -1] == 0)
    assert np.array_equal(z[:, :-1], states[:, 1:])
    assert len(closure_violations(z, space)) == 0


def test_closure_violation_per_digit():
    config = _config(K=3, M=1, A=2)
    space = enumerate_states(config)
    # digit 0 over its bound 6 carries into digit 1, the index 7 is still valid
    z = np.array([[0, 0, 0], [7, 0, 0], [0, 3, 0], [0, 0, 1], [-1, 0, 0]])
    assert z[1] @ np.asarray(space.strides) + 2 * sum(space.strides) < space.size
    assert closure_violations(z, space).tolist() == [1, 2, 3, 4]
