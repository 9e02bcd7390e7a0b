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
Problem instances of the capacity-allocation MDP.

A state ``x`` counts the queued jobs by lead time: ``x[j]`` jobs are due
``j`` periods from now, with ``0 <= x[j] <= (K - j) * A``. An action ``y``
serves ``y[j]`` of them now; all due jobs are served (``y[0] = x[0]``) and
early service only uses capacity left over by them.

States are numbered in mixed radix with ``x[0]`` as the least significant
digit, so the empty queue has index 0 and ``x[K-1]`` is the most
significant digit. Stored policies and bias vectors rely on this layout.
"""

import dataclasses
import functools
import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .dejavu_utilities import (
    InvalidConfigError,
    CapacityExceededError,
    ContractViolation,
    get_max_states,
    log_verbose,
)


LOAD_PATTERNS = ("EL", "FL", "BL", "AL", "CUSTOM")
AL_EPSILON = 1e-6
PROBABILITY_TOL = 1e-12

__config_keys__ = ("K", "M", "A", "lambda", "ce", "co", "load", "q", "seed")
__required_config_keys__ = ("K", "M", "A", "lambda", "ce", "co")


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(
        v, bool
    )


@dataclass(frozen=True)
class ProblemConfig:
    """
    One problem instance.

    :ivar K: planning horizon, requests are due 0..K-1 periods ahead
    :ivar M: servers per period
    :ivar A: maximum arrivals per lead time and period
    :ivar lam: overall arrival rate per period
    :ivar c_e: cost per job and period of early service
    :ivar c_o: overtime cost per job
    :ivar load: one of EL, FL, BL, AL, CUSTOM
    :ivar q: lead-time preference probabilities, only for CUSTOM
    :ivar seed: seed for AL generation and simulation
    """

    K: int
    M: int
    A: int
    lam: float
    c_e: float
    c_o: float
    load: str = "EL"
    q: Optional[Tuple[float, ...]] = None
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("K", "M", "A"):
            if not _is_int(getattr(self, name)):
                raise InvalidConfigError(
                    f"{name} must be an integer, got {getattr(self, name)!r}."
                )
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.K < 2:
            raise InvalidConfigError(f"K must be >= 2, got {self.K}.")
        if self.M < 1:
            raise InvalidConfigError(f"M must be >= 1, got {self.M}.")
        if self.A < 1:
            raise InvalidConfigError(f"A must be >= 1, got {self.A}.")
        for name in ("lam", "c_e", "c_o"):
            v = getattr(self, name)
            if not _is_real(v) or not math.isfinite(v) or v < 0:
                raise InvalidConfigError(
                    f"{name} must be a finite real >= 0, got {v!r}."
                )
            # 10 and 10.0 must give the same fingerprint
            object.__setattr__(self, name, float(v))
        if self.load not in LOAD_PATTERNS:
            raise InvalidConfigError(
                f"unknown load pattern {self.load!r}, expected one of {LOAD_PATTERNS}."
            )
        if self.seed is not None and not _is_int(self.seed):
            raise InvalidConfigError(f"seed must be an integer, got {self.seed!r}.")
        if self.seed is not None:
            object.__setattr__(self, "seed", int(self.seed))
        if self.q is not None:
            if self.load != "CUSTOM":
                raise InvalidConfigError(
                    f"q is only accepted with load CUSTOM, got load {self.load}."
                )
            q = tuple(float(v) for v in self.q)
            _validate_q(q, self.K)
            object.__setattr__(self, "q", q)
        elif self.load == "CUSTOM":
            raise InvalidConfigError("load CUSTOM requires a q vector.")

    @classmethod
    def from_dict(cls, d):
        unknown = [k for k in d if k not in __config_keys__]
        if len(unknown) > 0:
            raise InvalidConfigError(
                f"unknown configuration keys {unknown}, allowed are {list(__config_keys__)}."
            )
        missing = [k for k in __required_config_keys__ if k not in d]
        if len(missing) > 0:
            raise InvalidConfigError(f"missing configuration keys {missing}.")
        return cls(
            K=d["K"],
            M=d["M"],
            A=d["A"],
            lam=d["lambda"],
            c_e=d["ce"],
            c_o=d["co"],
            load=d.get("load", "EL"),
            q=d.get("q", None),
            seed=d.get("seed", None),
        )

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, "r") as f:
                d = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidConfigError(f"can't parse configuration file {path}: {e}")
        if not isinstance(d, dict):
            raise InvalidConfigError(f"configuration file {path} must hold an object.")
        return cls.from_dict(d)

    def to_dict(self):
        ret = {
            "K": self.K,
            "M": self.M,
            "A": self.A,
            "lambda": self.lam,
            "ce": self.c_e,
            "co": self.c_o,
            "load": self.load,
        }
        if self.q is not None:
            ret["q"] = list(self.q)
        if self.seed is not None:
            ret["seed"] = self.seed
        return ret

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def fingerprint(self):
        s = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(s.encode("utf-8")).hexdigest()

    @property
    def decision_key(self):
        # everything the action sets and stage costs depend on
        return (self.K, self.M, self.A, float(self.c_e), float(self.c_o))


def _validate_q(q, K):
    if len(q) != K:
        raise InvalidConfigError(f"q must have length K={K}, got {len(q)}.")
    if any((not math.isfinite(v)) or v <= 0 for v in q):
        raise InvalidConfigError(f"all entries of q must be positive, got {q}.")
    if abs(math.fsum(q) - 1.0) > PROBABILITY_TOL:
        raise InvalidConfigError(f"q must sum to 1, got {math.fsum(q)!r}.")


def _read_only(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ArrivalModel:
    """Truncated Poisson arrivals per lead time, ``p[j][a]`` for ``a = 0..A``."""

    q: np.ndarray
    lambda_j: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _read_only(self.q))
        object.__setattr__(self, "lambda_j", _read_only(self.lambda_j))
        object.__setattr__(self, "p", _read_only(self.p))
        assert self.p.ndim == 2 and self.p.shape[0] == len(self.q)
        assert np.all(self.p >= 0)
        assert np.all(np.abs(self.p.sum(axis=1) - 1.0) <= PROBABILITY_TOL)

    @property
    def K(self):
        return self.p.shape[0]

    @property
    def A(self):
        return self.p.shape[1] - 1

    @functools.cached_property
    def outcomes(self):
        """
        All joint arrival vectors with positive probability, as
        ``(offsets, probabilities)``: adding an offset to the index of a
        post-decision queue gives the index of the next state.
        """
        strides = np.asarray(StateSpace.from_bounds(self.K, self.A).strides)
        grid = np.array(
            list(itertools.product(range(self.A + 1), repeat=self.K)), dtype=np.int64
        )
        probs = np.prod(self.p[np.arange(self.K)[None, :], grid], axis=1)
        keep = probs > 0
        offsets = grid[keep] @ strides
        return _read_only(offsets), _read_only(probs[keep])


def truncated_poisson(rate, A):
    # raw weights rate^a / a!, the exp(-rate) factor cancels in the normalization
    w = np.ones(A + 1)
    for a in range(1, A + 1):
        w[a] = w[a - 1] * rate / a
    return w / w.sum()


def load_pattern(config):
    K = config.K
    j = np.arange(K, dtype=np.float64)
    sq = float(sum(i * i for i in range(1, K + 1)))
    if config.load == "EL":
        return np.full(K, 1.0 / K)
    if config.load == "FL":
        return (K - j) ** 2 / sq
    if config.load == "BL":
        return (j + 1) ** 2 / sq
    if config.load == "AL":
        if config.seed is None:
            raise InvalidConfigError("load AL requires a seed.")
        rng = np.random.default_rng(config.seed)
        u = rng.uniform(AL_EPSILON, 1.0, size=K)
        return u / u.sum()
    return np.asarray(config.q, dtype=np.float64)


def build_arrival_model(config):
    q = load_pattern(config)
    lambda_j = q * config.lam
    p = np.vstack([truncated_poisson(l, config.A) for l in lambda_j])
    log_verbose(f"arrival model for {config}: q={q}, p={p.tolist()}")
    return ArrivalModel(q=q, lambda_j=lambda_j, p=p)


@dataclass(frozen=True)
class StateSpace:
    K: int
    A: int
    radices: Tuple[int, ...]
    strides: Tuple[int, ...]
    size: int

    @classmethod
    def from_bounds(cls, K, A, max_states=None):
        if max_states is None:
            max_states = get_max_states()
        radices = tuple((K - j) * A + 1 for j in range(K))
        # python ints, so overflow shows up here and not as a wrapped index
        size = math.prod(radices)
        if size > max_states:
            raise CapacityExceededError(K, A, size, max_states)
        strides = tuple(math.prod(radices[:j]) for j in range(K))
        return cls(K=K, A=A, radices=radices, strides=strides, size=size)

    @property
    def empty_index(self):
        return 0

    def bounds(self):
        return tuple(r - 1 for r in self.radices)

    def contains(self, x):
        return len(x) == self.K and all(
            0 <= int(v) < r for v, r in zip(x, self.radices)
        )

    def state_to_index(self, x):
        if not self.contains(x):
            raise ContractViolation(f"state {tuple(x)} is not in {self}.")
        return int(sum(int(v) * s for v, s in zip(x, self.strides)))

    def index_to_state(self, i):
        if not 0 <= i < self.size:
            raise ContractViolation(f"state index {i} out of range [0, {self.size}).")
        return tuple(int((i // s) % r) for s, r in zip(self.strides, self.radices))

    @functools.cached_property
    def _states(self):
        idx = np.arange(self.size, dtype=np.int64)
        digits = (idx[:, None] // np.asarray(self.strides)) % np.asarray(self.radices)
        return _read_only(digits.astype(np.int64))

    def states(self):
        """Digit table of all states, shape ``(size, K)``, row ``i`` is state ``i``."""
        return self._states

    def __iter__(self):
        for i in range(self.size):
            yield self.index_to_state(i)

    def __len__(self):
        return self.size


def enumerate_states(config):
    return StateSpace.from_bounds(config.K, config.A)


def _check_state(x, config):
    if len(x) != config.K:
        raise ContractViolation(f"state {tuple(x)} must have length K={config.K}.")
    for j, v in enumerate(x):
        if v < 0 or v > (config.K - j) * config.A:
            raise ContractViolation(
                f"state {tuple(x)} violates 0 <= x[{j}] <= {(config.K - j) * config.A}."
            )


def is_feasible(x, y, config):
    if len(y) != len(x) or y[0] != x[0]:
        return False
    if any(v < 0 or v > xv for v, xv in zip(y[1:], x[1:])):
        return False
    return sum(y[1:]) <= max(config.M - x[0], 0)


def _check_action(x, y, config):
    _check_state(x, config)
    if not is_feasible(x, y, config):
        raise ContractViolation(
            f"action {tuple(y)} is not feasible for state {tuple(x)} with M={config.M}."
        )


def _compositions(x, j, remaining):
    if j == len(x):
        yield ()
        return
    for v in range(min(x[j], remaining) + 1):
        for rest in _compositions(x, j + 1, remaining - v):
            yield (v,) + rest


def feasible_actions(x, config):
    """Feasible actions for ``x`` in ascending lexicographic order, do-nothing first."""
    x = tuple(int(v) for v in x)
    _check_state(x, config)
    capacity = max(config.M - x[0], 0)
    return [(x[0],) + rest for rest in _compositions(x, 1, capacity)]


def post_decision_state(x, y):
    return tuple(int(x[j + 1] - y[j + 1]) for j in range(len(x) - 1)) + (0,)


def stage_cost(x, y, config):
    _check_action(x, y, config)
    overtime = max(y[0] - config.M, 0)
    earliness = sum(j * y[j] for j in range(1, config.K))
    return config.c_o * overtime + config.c_e * earliness


def transition_distribution(x, y, model, space, config=None):
    """
    Next-state distribution after serving ``y`` in ``x``, as a list of
    ``(state index, probability)`` with positive probabilities only.

    Without ``config`` the capacity bound of ``y`` can't be checked, only
    ``y[0] = x[0]`` and ``y <= x``.
    """
    if model.K != space.K or model.A != space.A:
        raise ContractViolation("arrival model and state space dimensions differ.")
    if config is not None:
        _check_action(x, y, config)
    elif (
        not space.contains(x)
        or len(y) != len(x)
        or y[0] != x[0]
        or any(v < 0 or v > xv for v, xv in zip(y[1:], x[1:]))
    ):
        raise ContractViolation(
            f"action {tuple(y)} is not feasible for state {tuple(x)}."
        )
    z = post_decision_state(x, y)
    # closure: z[j] + A stays within the bound of digit j
    assert all(z[j] <= (space.K - j - 1) * space.A for j in range(space.K))
    base = space.state_to_index(z)
    offsets, probs = model.outcomes
    return [(int(base + o), float(p)) for o, p in zip(offsets, probs)]


def stage_costs(actions, config):
    """Vectorized stage cost of an action table of shape ``(n, K)``."""
    actions = np.asarray(actions)
    earliness = actions[:, 1:] @ np.arange(1, config.K)
    overtime = np.maximum(actions[:, 0] - config.M, 0)
    return config.c_o * overtime + config.c_e * earliness


def post_decision_digits(states, actions):
    """Vectorized post-decision queues ``z``, one row per state, ``z[:, K-1] = 0``."""
    states = np.asarray(states, dtype=np.int64)
    z = np.zeros_like(states)
    z[:, :-1] = states[:, 1:] - np.asarray(actions, dtype=np.int64)[:, 1:]
    return z


def closure_violations(z, space):
    """Rows of a post-decision digit table whose arrivals can leave the space."""
    bounds = np.asarray(space.bounds(), dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    return np.flatnonzero(np.any((z < 0) | (z + space.A > bounds), axis=1))


def post_decision_indices(states, actions, space):
    """Vectorized index of the post-decision queue (before arrivals)."""
    z = post_decision_digits(states, actions)
    return z @ np.asarray(space.strides, dtype=np.int64)


def feasible_mask(states, actions, config):
    states = np.asarray(states)
    actions = np.asarray(actions)
    capacity = np.maximum(config.M - states[:, 0], 0)
    return (
        (actions[:, 0] == states[:, 0])
        & np.all(actions[:, 1:] >= 0, axis=1)
        & np.all(actions[:, 1:] <= states[:, 1:], axis=1)
        & (actions[:, 1:].sum(axis=1) <= capacity)
    )


def count_feasible_actions(x, config):
    """Number of bounded compositions, counted without enumerating them."""
    capacity = max(config.M - int(x[0]), 0)
    ways = np.zeros(capacity + 1, dtype=object)
    ways[0] = 1
    for bound in x[1:]:
        nxt = np.zeros_like(ways)
        for total in range(capacity + 1):
            for v in range(min(int(bound), total) + 1):
                nxt[total] += ways[total - v]
        ways = nxt
    return int(sum(ways))
