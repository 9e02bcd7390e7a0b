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

import os
import math

import numpy as np
import scipy

from capacity_dejavu import __version__ as dejavu_version


__storage_env_var__ = "CAPACITY_DEJAVU_STORAGE"
__tag_env_var__ = "CAPACITY_DEJAVU_TAG"
__tag_default__ = "default"
__workers_env_var__ = "CAPACITY_DEJAVU_WORKERS"
__max_states_env_var__ = "CAPACITY_DEJAVU_MAX_STATES"
__max_states_default__ = 2_000_000
__direct_limit_env_var__ = "CAPACITY_DEJAVU_DIRECT_LIMIT"
__direct_limit_default__ = 6000

__log_prefix__ = "[capacity-dejavu]"

__dejavu_version_major_minor_s__ = ".".join(dejavu_version.split(".")[:2])
dejavu_version_major = int(dejavu_version.split(".")[0])
__dejavu_version_minor_s__ = dejavu_version.split(".")[1]
dejavu_version_minor = int(__dejavu_version_minor_s__)
dejavu_version_major_minor = dejavu_version_major + dejavu_version_minor / math.pow(
    10, len(__dejavu_version_minor_s__)
)

flag_print_solves = os.environ.get("CAPACITY_DEJAVU_PRINT_SOLVES", None) == "1"
flag_print_debug = os.environ.get("CAPACITY_DEJAVU_DEBUG", "0") == "1"
flag_print_debug_verbose = os.environ.get("CAPACITY_DEJAVU_DEBUG_DEBUG", "0") == "1"
if flag_print_debug_verbose:
    flag_print_debug = True
if flag_print_debug:
    flag_print_solves = True


class DejavuError(Exception):
    """Base class of all errors raised by capacity-dejavu."""

    def __init__(self, message):
        if not message.startswith(__log_prefix__):
            message = f"{__log_prefix__} {message}"
        super().__init__(message)


class InvalidConfigError(DejavuError, ValueError):
    pass


class ContractViolation(DejavuError, ValueError):
    """An action was applied to a state it is not feasible for."""

    pass


class UnsupportedHorizonError(DejavuError, ValueError):
    pass


class CapacityExceededError(DejavuError):
    def __init__(self, K, A, size, limit):
        self.K = K
        self.A = A
        self.size = size
        self.limit = limit
        super().__init__(
            f"state space for K={K}, A={A} has {size} states, "
            f"which exceeds the limit of {limit} (see {__max_states_env_var__})."
        )


class NumericalError(DejavuError):
    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


def log_debug(msg):
    if flag_print_debug:
        print(f"{__log_prefix__} {msg}")


def log_verbose(msg):
    if flag_print_debug_verbose:
        print(f"{__log_prefix__} {msg}")


def log_warning(msg):
    print(f"{__log_prefix__} WARNING: {msg}")


def _get_int_env(name, default, minimum=1):
    raw = os.environ.get(name, None)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidConfigError(
            f"environment variable {name} must be an integer, got {raw!r}."
        )
    if value < minimum:
        raise InvalidConfigError(f"environment variable {name} must be >= {minimum}.")
    return value


def get_worker_count():
    return _get_int_env(__workers_env_var__, 1)


def get_max_states():
    # never above what an int64 index can address
    limit = _get_int_env(__max_states_env_var__, __max_states_default__)
    return min(limit, np.iinfo(np.int64).max)


def get_direct_solve_limit():
    return _get_int_env(__direct_limit_env_var__, __direct_limit_default__, minimum=0)


def create_dir_if_not_exist_recursive(path, mode=0o777):
    # 0777 so results can be shared between container and host users
    norm_path = os.path.normpath(os.path.abspath(path))
    paths_l = norm_path.split(os.sep)
    path_walked = f"{os.sep}"
    for p in paths_l:
        if len(p) == 0:
            continue
        path_walked = os.path.join(path_walked, p)
        create_dir_if_not_exist(path_walked, mode)


def create_dir_if_not_exist(path, mode=0o777):
    if not os.path.exists(path):
        os.mkdir(path)
        try:
            os.chmod(path, mode)
        except PermissionError as e:
            print(f"can't set permission of directory {path}: {e}")


def get_storage_prefix():
    storage_prefix = os.environ.get(__storage_env_var__, "none")
    if storage_prefix == "none":
        storage_prefix = os.getcwd()
        log_warning(
            f"The environment variable {__storage_env_var__} is not set! "
            f"Using {storage_prefix} (os.getcwd()) as fallback for capacity-dejavu storage."
        )
    create_dir_if_not_exist_recursive(storage_prefix)
    if not os.access(storage_prefix, os.W_OK):
        raise DejavuError(
            f"The path {storage_prefix} is not writeable and can not be used "
            f"as result storage. Consider another location using the {__storage_env_var__} environment variable."
        )
    return storage_prefix


def get_storage_tag():
    # read on every call, the tag may change during execution
    return os.environ.get(__tag_env_var__, __tag_default__)


def _get_dejavu_identifier():
    # patch releases keep the stored results valid
    return f"dejavu_{dejavu_version_major_minor}"


def get_storage_identifier():
    # not an absolute path! (also used as keys in dictionaries)
    return (
        f"{_get_dejavu_identifier()}/numpy_{np.__version__}/scipy_{scipy.__version__}"
    )
