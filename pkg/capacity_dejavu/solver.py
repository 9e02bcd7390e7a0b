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

import functools
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dejavu_utilities import (
    InvalidConfigError,
    NumericalError,
    UnsupportedHorizonError,
    flag_print_solves,
    get_direct_solve_limit,
    log_debug,
    log_verbose,
    log_warning,
    __log_prefix__,
)
from .model import (
    ProblemConfig,
    StateSpace,
    feasible_actions,
    closure_violations,
    post_decision_digits,
    stage_costs,
)
from .policies import TabularPolicy


RESIDUAL_TOL = 1e-9
TIE_TOL = 1e-10
MAX_POLICY_ITERATIONS = 1000
TIE_BREAKS = ("smallest", "largest")
GMRES_RESTART = 100
GMRES_MAXITER = 50
REFINEMENT_ROUNDS = 8


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Gain ``g`` and bias ``h`` of a stationary policy, ``h[reference_index] = 0``."""

    g: float
    h: np.ndarray
    residual: float = 0.0
    reference_index: int = 0


@dataclass(frozen=True, eq=False)
class ValueTable:
    """``V[x0, x1]`` after ``n`` remaining periods of the two-period model."""

    n: int
    V: np.ndarray
    argmin: np.ndarray


@dataclass
class PolicyIterationResult:
    policy: TabularPolicy
    evaluation: Evaluation
    iterations: int
    gains: List[float] = field(default_factory=list)
    runtime_sec: float = 0.0

    def __iter__(self):
        # unpacks as (policy, evaluation, iterations)
        return iter((self.policy, self.evaluation, self.iterations))


@dataclass(frozen=True, eq=False)
class DecisionTable:
    """
    All feasible actions of all states, flattened. The actions of state
    ``i`` are rows ``ptr[i]:ptr[i + 1]`` in lexicographic order.
    """

    ptr: np.ndarray
    actions: np.ndarray
    state_of: np.ndarray
    cost: np.ndarray
    post: np.ndarray
    post_digits: np.ndarray

    @property
    def n_actions(self):
        return self.actions.shape[0]


@functools.lru_cache(maxsize=32)
def _build_decision_table(decision_key):
    K, M, A, c_e, c_o = decision_key
    config = ProblemConfig(K=K, M=M, A=A, lam=0.0, c_e=c_e, c_o=c_o)
    space = StateSpace.from_bounds(K, A)
    states = space.states()
    counts = np.empty(space.size, dtype=np.int64)
    chunks = []
    for i in range(space.size):
        acts = feasible_actions(states[i], config)
        counts[i] = len(acts)
        chunks.extend(acts)
    actions = np.array(chunks, dtype=np.int64).reshape(-1, K)
    ptr = np.zeros(space.size + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    state_of = np.repeat(np.arange(space.size, dtype=np.int64), counts)
    cost = stage_costs(actions, config).astype(np.float64)
    post_digits = post_decision_digits(states[state_of], actions)
    post = _encode_post(post_digits, space)
    for a in (ptr, actions, state_of, cost, post, post_digits):
        a.setflags(write=False)
    log_debug(
        f"decision table for K={K}, M={M}, A={A}: {space.size} states, {len(actions)} actions"
    )
    return DecisionTable(
        ptr=ptr,
        actions=actions,
        state_of=state_of,
        cost=cost,
        post=post,
        post_digits=post_digits,
    )


def build_decision_table(config):
    return _build_decision_table(config.decision_key)


def _policy_cost_and_post(pi, space, config):
    pi.validate(space, config)
    states = space.states()
    cost = stage_costs(pi.actions, config).astype(np.float64)
    post = _encode_post(post_decision_digits(states, pi.actions), space)
    return cost, post


def _check_closure(post_digits, space):
    # digit j of every next state stays within (K - j) A
    bad = closure_violations(post_digits, space)
    assert len(bad) == 0, (
        f"post-decision queues {post_digits[bad[:5]].tolist()} leave the state space"
    )


def _encode_post(post_digits, space):
    _check_closure(post_digits, space)
    return post_digits @ np.asarray(space.strides, dtype=np.int64)


def _expected_next(values, post, model):
    """``W[z] = sum_a P(a) values[z + offset(a)]`` for each post-decision index."""
    offsets, probs = model.outcomes
    unique_post, inverse = np.unique(post, return_inverse=True)
    W = values[unique_post[:, None] + offsets[None, :]] @ probs
    return W[inverse]


def _transition_matrix(post, model, space):
    offsets, probs = model.outcomes
    n = space.size
    rows = np.repeat(np.arange(n, dtype=np.int64), len(offsets))
    cols = (post[:, None] + offsets[None, :]).ravel()
    data = np.tile(probs, n)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _evaluation_matrix(P):
    # unknowns (g, h[1:]): h[0] = 0 frees column 0 for the gain
    n = P.shape[0]
    P = P.tocoo()
    keep = P.col != 0
    rows = np.concatenate([P.row[keep], np.arange(1, n), np.arange(n)])
    cols = np.concatenate([P.col[keep], np.arange(1, n), np.zeros(n, dtype=np.int64)])
    data = np.concatenate([-P.data[keep], np.ones(n - 1), np.ones(n)])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _solve_direct(B, rhs):
    v = spla.spsolve(B.tocsc(), rhs)
    if not np.all(np.isfinite(v)):
        raise NumericalError("sparse direct solve returned non-finite values")
    return v


def _solve_iterative(B, rhs, tol):
    v = np.zeros_like(rhs)
    r = rhs.copy()
    for _ in range(REFINEMENT_ROUNDS):
        d, info = spla.gmres(
            B, r, rtol=1e-12, atol=0.0, restart=GMRES_RESTART, maxiter=GMRES_MAXITER
        )
        if info < 0:
            raise NumericalError(f"gmres failed with illegal input (info={info})")
        v = v + d
        r = rhs - B @ v
        log_verbose(f"gmres refinement: residual {np.abs(r).max():.3e}")
        if np.abs(r).max() <= tol:
            break
    return v


def evaluate_policy(pi, space, model, config, residual_tol=RESIDUAL_TOL):
    """
    Solve ``h(x) + g = u(x, pi(x)) + sum_x' P(x' | x, pi(x)) h(x')`` with
    ``h(empty) = 0``.

    Every policy reaches the empty queue (no arrivals for K periods), so the
    chain is unichain and the solution is unique.
    """
    cost, post = _policy_cost_and_post(pi, space, config)
    P = _transition_matrix(post, model, space)
    B = _evaluation_matrix(P)
    if space.size <= get_direct_solve_limit():
        v = _solve_direct(B, cost)
    else:
        log_warning(
            f"{space.size} states exceed the direct solve limit, using gmres with refinement."
        )
        v = _solve_iterative(B, cost, residual_tol)
    g = float(v[0])
    h = v.copy()
    h[0] = 0.0
    residual = float(np.abs(cost + P @ h - h - g).max())
    if not np.isfinite(residual) or residual > residual_tol:
        raise NumericalError(
            f"evaluation of policy {pi.name} did not meet the residual tolerance {residual_tol}",
            residual=residual,
        )
    h.setflags(write=False)
    log_verbose(f"evaluated {pi.name}: g={g:.12f}, residual={residual:.3e}")
    return Evaluation(g=g, h=h, residual=residual, reference_index=space.empty_index)


def action_values(evaluation, space, model, config):
    """
    Right-hand side of the optimality equation for every feasible action,
    ``u(x, y) + sum_x' P(x' | x, y) h(x')``, aligned with the decision table.
    """
    table = build_decision_table(config)
    Q = table.cost + _expected_next(evaluation.h, table.post, model)
    return table, Q


def _state_minima(table, Q):
    starts = table.ptr[:-1]
    q_min = np.minimum.reduceat(Q, starts)
    tol = TIE_TOL * np.maximum(1.0, np.abs(q_min))
    return q_min, tol


def _greedy_policy(table, Q, tie_break="smallest"):
    if tie_break not in TIE_BREAKS:
        raise InvalidConfigError(
            f"unknown tie break {tie_break!r}, expected one of {TIE_BREAKS}."
        )
    q_min, tol = _state_minima(table, Q)
    tied = Q <= q_min[table.state_of] + tol[table.state_of]
    position = np.arange(table.n_actions)
    if tie_break == "smallest":
        chosen = np.minimum.reduceat(
            np.where(tied, position, table.n_actions), table.ptr[:-1]
        )
    else:
        chosen = np.maximum.reduceat(np.where(tied, position, -1), table.ptr[:-1])
    return TabularPolicy(table.actions[chosen], name="improved")


def _policy_action_values(pi, evaluation, space, model, config):
    cost, post = _policy_cost_and_post(pi, space, config)
    return cost + _expected_next(evaluation.h, post, model)


def improve_policy(evaluation, space, model, config, tie_break="smallest"):
    """
    One greedy step on ``evaluation``. Tied actions go to the
    lexicographically smallest one, or the largest with
    ``tie_break="largest"``.
    """
    table, Q = action_values(evaluation, space, model, config)
    return _greedy_policy(table, Q, tie_break)


def optimality_gap(pi, evaluation, space, model, config):
    """Per-state excess of ``pi``'s action value over the best action value."""
    table, Q = action_values(evaluation, space, model, config)
    q_min, _ = _state_minima(table, Q)
    return _policy_action_values(pi, evaluation, space, model, config) - q_min


def policy_iteration(
    initial, space, model, config, max_iterations=MAX_POLICY_ITERATIONS
):
    """
    Alternate evaluation and improvement, starting from ``initial``.

    Stops once the improved policy equals the current one, or the current
    policy already attains the minimum in every state; the returned policy is
    then the smallest-minimizer policy of the final evaluation.
    """
    start = time.time()
    pi = initial
    ev = evaluate_policy(pi, space, model, config)
    gains = [ev.g]
    iterations = 0
    while True:
        if iterations >= max_iterations:
            raise NumericalError(
                f"policy iteration did not converge within {max_iterations} iterations "
                f"(last g={ev.g}), check the tie breaking"
            )
        iterations += 1
        table, Q = action_values(ev, space, model, config)
        new = _greedy_policy(table, Q)
        if new == pi:
            break
        q_min, tol = _state_minima(table, Q)
        gap = _policy_action_values(pi, ev, space, model, config) - q_min
        pi = new
        ev = evaluate_policy(pi, space, model, config)
        if np.all(gap <= tol):
            # pi was already optimal, new shares its (g, h)
            break
        if ev.g > gains[-1] + RESIDUAL_TOL * max(1.0, abs(gains[-1])):
            log_warning(
                f"policy iteration gain increased from {gains[-1]} to {ev.g} at iteration {iterations}."
            )
        gains.append(ev.g)
        log_debug(f"policy iteration {iterations}: g={ev.g:.12f}")
    runtime = time.time() - start
    if flag_print_solves:
        print(
            f"{__log_prefix__} policy iteration for K={config.K}, M={config.M}, A={config.A} "
            f"finished after {iterations} iterations and {runtime:.2f}s: g={ev.g:.6f}"
        )
    return PolicyIterationResult(
        policy=pi.renamed("opt"),
        evaluation=ev,
        iterations=iterations,
        gains=gains,
        runtime_sec=runtime,
    )


def _check_two_periods(config, model):
    if config.K != 2:
        raise UnsupportedHorizonError(
            f"the finite-horizon recursion is only defined for K=2, got K={config.K}."
        )
    assert model.K == 2 and model.A == config.A


def _bellman_step(V_prev, config, model):
    A, M = config.A, config.M
    p0, p1 = model.p[0], model.p[1]
    # W[z] = sum_{a0, a1} p0(a0) p1(a1) V_prev(a0 + z, a1) for z = x1 - y1 in 0..A
    W = np.array([p0 @ V_prev[z : z + A + 1, :] @ p1 for z in range(A + 1)])
    V = np.empty_like(V_prev)
    argmin = np.zeros(V_prev.shape, dtype=np.int64)
    for x0 in range(2 * A + 1):
        overtime = config.c_o * max(x0 - M, 0)
        cap = max(M - x0, 0)
        for x1 in range(A + 1):
            y1 = np.arange(min(x1, cap) + 1)
            vals = config.c_e * y1 + W[x1 - y1]
            lowest = vals.min()
            tied = vals <= lowest + TIE_TOL * max(1.0, abs(lowest))
            best = int(np.flatnonzero(tied)[0])
            V[x0, x1] = overtime + lowest
            argmin[x0, x1] = best
    return V, argmin


def finite_horizon_sequence(n, config, model):
    """``V_0 .. V_n`` of the two-period recursion, ``V_0 = 0``."""
    _check_two_periods(config, model)
    A = config.A
    V = np.zeros((2 * A + 1, A + 1))
    tables = [ValueTable(n=0, V=V, argmin=np.zeros(V.shape, dtype=np.int64))]
    for k in range(1, n + 1):
        V, argmin = _bellman_step(V, config, model)
        tables.append(ValueTable(n=k, V=V, argmin=argmin))
    return tables


def finite_horizon_values(n, config, model):
    return finite_horizon_sequence(n, config, model)[-1]
