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
Numerical checks of the structural properties of optimal policies and value
functions. All checks are read-only and return a ``StructureReport``; a
report without violations is a pass.
"""

import itertools
from dataclasses import dataclass, field
from typing import Any, List

import numpy as np

from .dejavu_utilities import (
    InvalidConfigError,
    UnsupportedHorizonError,
    log_debug,
)
from .model import (
    closure_violations,
    count_feasible_actions,
    enumerate_states,
    is_feasible,
    transition_distribution,
)
from .policies import (
    ThresholdPolicy,
    closed_form_threshold,
    do_nothing_policy,
    risk_factor,
    threshold_to_tabular,
)
from .solver import (
    build_decision_table,
    evaluate_policy,
    optimality_gap,
    policy_iteration,
)


GAIN_TOL = 1e-9
VALUE_TOL = 1e-9
BOUNDARY_TOL = 1e-12
PROBABILITY_TOL = 1e-12
REPORT_LIMIT = 20


@dataclass
class StructureReport:
    check: str
    fingerprint: str = ""
    violations: List[dict] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self):
        return len(self.violations) == 0

    def add_violation(self, state, observed, expected, **extra):
        entry = {
            "state": None if state is None else [int(v) for v in state],
            "observed": _plain(observed),
            "expected": _plain(expected),
        }
        entry.update({k: _plain(v) for k, v in extra.items()})
        self.violations.append(entry)

    def merge(self, other):
        self.violations.extend(other.violations)
        self.notes.extend(other.notes)
        return self

    def to_dict(self):
        return {
            "check": self.check,
            "fingerprint": self.fingerprint,
            "passed": self.passed,
            "violations": self.violations,
            "notes": self.notes,
        }

    def __str__(self):
        status = "pass" if self.passed else f"FAIL ({len(self.violations)} violations)"
        return f"{self.check} [{self.fingerprint[:12]}]: {status}"


def _plain(v: Any):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, tuple):
        return [_plain(e) for e in v]
    return v


def _fingerprint(config):
    return "" if config is None else config.fingerprint()


def check_monotone_in_x1(pi, space, config=None):
    """
    The served early jobs ``y1`` must not decrease in ``x1`` for any fixed
    ``x0``; equivalently ``{x1 : y1(x0, x1) >= k}`` is an up-set for all k.
    """
    if space.K != 2:
        raise UnsupportedHorizonError(
            f"the monotonicity check needs K=2, got K={space.K}."
        )
    report = StructureReport("monotone", _fingerprint(config))
    for x0 in range(2 * space.A + 1):
        prev = None
        for x1 in range(space.A + 1):
            y1 = pi[space.state_to_index((x0, x1))][1]
            if prev is not None and y1 < prev:
                report.add_violation((x0, x1), y1, f">= {prev}")
            prev = y1
    return report


def check_value_properties(tables, config=None):
    """
    Checks each ``V_n`` for increase along ``e1 + e2``, convexity along each
    coordinate, non-negativity and growth in ``n``.
    """
    report = StructureReport("convexity", _fingerprint(config))
    prev = None
    for table in tables:
        V = table.V
        tol = VALUE_TOL * max(1.0, float(np.abs(V).max()))
        n0, n1 = V.shape
        for x0, x1 in itertools.product(range(n0), range(n1)):
            v = V[x0, x1]
            if v < -tol:
                report.add_violation((x0, x1), v, ">= 0", n=table.n, kind="sign")
            if x0 + 1 < n0 and x1 + 1 < n1 and v > V[x0 + 1, x1 + 1] + tol:
                report.add_violation(
                    (x0, x1),
                    v,
                    f"<= {V[x0 + 1, x1 + 1]}",
                    n=table.n,
                    kind="increasing",
                    slack=V[x0 + 1, x1 + 1] - v,
                )
            if x0 + 2 < n0:
                slack = v + V[x0 + 2, x1] - 2 * V[x0 + 1, x1]
                if slack < -tol:
                    report.add_violation(
                        (x0, x1), slack, ">= 0", n=table.n, kind="convex_x0"
                    )
            if x1 + 2 < n1:
                slack = v + V[x0, x1 + 2] - 2 * V[x0, x1 + 1]
                if slack < -tol:
                    report.add_violation(
                        (x0, x1), slack, ">= 0", n=table.n, kind="convex_x1"
                    )
        if prev is not None:
            drop = np.argwhere(V < prev.V - tol)
            for x0, x1 in drop:
                report.add_violation(
                    (x0, x1), V[x0, x1], f">= {prev.V[x0, x1]}", n=table.n, kind="growth"
                )
        prev = table
    log_debug(f"value properties over {len(tables)} tables: {report}")
    return report


def _threshold_candidates(config, model):
    theta = risk_factor(model.p[0][0], model.p[0][1])
    chosen = closed_form_threshold(theta, config)
    candidates = {chosen}
    notes = []
    weighted = config.c_e * theta if config.c_e > 0 else 0.0
    if np.isfinite(weighted) and abs(weighted - config.c_o) <= BOUNDARY_TOL * max(
        1.0, config.c_o
    ):
        candidates.update({0, 1})
        notes.append("tie - both thresholds optimal (risk boundary)")
    if abs(config.c_e - config.c_o) <= BOUNDARY_TOL * max(1.0, config.c_o):
        candidates.update({1, config.A})
        notes.append("tie - both thresholds optimal (c_e = c_o)")
    return sorted(candidates), notes


def _check_two_period_thresholds(name, config, model):
    report = StructureReport(name, config.fingerprint())
    space = enumerate_states(config)
    opt = policy_iteration(do_nothing_policy(space), space, model, config)
    candidates, notes = _threshold_candidates(config, model)
    report.notes.extend(notes)
    gains = {}
    for s1 in candidates:
        pi = threshold_to_tabular(ThresholdPolicy((0, s1)), space, config)
        gains[s1] = evaluate_policy(pi, space, model, config).g
    matched = [
        s1
        for s1, g in gains.items()
        if abs(g - opt.evaluation.g) <= GAIN_TOL * max(1.0, abs(opt.evaluation.g))
    ]
    if len(matched) == 0:
        best = min(gains, key=gains.get)
        report.add_violation(None, gains[best], opt.evaluation.g, threshold=best)
    else:
        report.notes.append(f"threshold {matched[0]} attains g={opt.evaluation.g:.9f}")
    return report


def check_proposition1(config, model):
    """Closed-form single-server thresholds are optimal for K=2, A=2."""
    if config.M != 1 or config.K != 2 or config.A != 2:
        raise InvalidConfigError(
            f"this check needs M=1, K=2, A=2, got M={config.M}, K={config.K}, A={config.A}."
        )
    return _check_two_period_thresholds("proposition1", config, model)


def check_corollary1(config, model):
    """Closed-form single-server thresholds are optimal for K=2 and any A."""
    if config.M != 1 or config.K != 2:
        raise InvalidConfigError(
            f"this check needs M=1, K=2, got M={config.M}, K={config.K}."
        )
    return _check_two_period_thresholds("corollary1", config, model)


def check_never_early(pi, config, space=None, model=None, evaluation=None):
    """
    With overtime no dearer than earliness, optimal policies never serve
    early. Given the policy's ``evaluation``, states where ``pi`` serves
    early pass as long as the never-early action is optimal there too.
    """
    if config.c_o > config.c_e:
        raise InvalidConfigError(
            f"never-early needs c_o <= c_e, got c_o={config.c_o}, c_e={config.c_e}."
        )
    report = StructureReport("never-early", config.fingerprint())
    if space is None:
        space = enumerate_states(config)
    early = pi.early_service_states()
    if evaluation is None or model is None:
        for i in early:
            report.add_violation(
                space.index_to_state(int(i)), pi[int(i)], "no early service"
            )
        return report
    gap = optimality_gap(do_nothing_policy(space), evaluation, space, model, config)
    for i in np.flatnonzero(gap > VALUE_TOL):
        report.add_violation(
            space.index_to_state(int(i)), gap[i], f"<= {VALUE_TOL}", kind="gap"
        )
    if len(early) > 0 and report.passed:
        report.notes.append(
            f"{len(early)} states serve early, never-early attains the minimum there"
        )
    return report


def check_kernel(config, model, space=None, bruteforce_limit=500):
    """
    Arrival and kernel normalization, closure of the state space, the index
    bijection and the feasible-action counts.
    """
    report = StructureReport("kernel", config.fingerprint())
    if space is None:
        space = enumerate_states(config)
    for j, row in enumerate(model.p):
        if abs(row.sum() - 1.0) > PROBABILITY_TOL or np.any(row < 0):
            report.add_violation(None, float(row.sum()), 1.0, kind="arrival_row", j=j)
    _, probs = model.outcomes
    if abs(probs.sum() - 1.0) > PROBABILITY_TOL or np.any(probs <= 0):
        report.add_violation(None, float(probs.sum()), 1.0, kind="kernel_row")
    states = space.states()
    if not np.array_equal(
        states @ np.asarray(space.strides), np.arange(space.size, dtype=np.int64)
    ):
        report.add_violation(None, "non-bijective", "bijective", kind="index")
    table = build_decision_table(config)
    for r in closure_violations(table.post_digits, space)[:REPORT_LIMIT]:
        report.add_violation(
            tuple(int(v) for v in states[table.state_of[r]]),
            tuple(int(v) for v in table.post_digits[r]),
            f"z_j + {space.A} <= {space.bounds()}",
            kind="closure",
        )
    counts = np.diff(table.ptr)
    for i in range(space.size):
        x = states[i]
        expected = count_feasible_actions(x, config)
        if space.size <= bruteforce_limit:
            brute = sum(
                1
                for y in itertools.product(*(range(int(v) + 1) for v in x))
                if is_feasible(x, y, config)
            )
            if brute != expected:
                report.add_violation(x, expected, brute, kind="composition_count")
        if counts[i] != expected:
            report.add_violation(x, int(counts[i]), expected, kind="action_count")
    empty = tuple(0 for _ in range(space.K))
    total = sum(p for _, p in transition_distribution(empty, empty, model, space))
    if abs(total - 1.0) > PROBABILITY_TOL:
        report.add_violation(empty, total, 1.0, kind="transition_row")
    log_debug(f"kernel checks for {config}: {report}")
    return report
