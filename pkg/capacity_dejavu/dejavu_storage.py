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

import hashlib
import json
import os

import numpy as np

from capacity_dejavu import __version__ as dejavu_version
from .dejavu_utilities import (
    InvalidConfigError,
    create_dir_if_not_exist_recursive,
    flag_print_debug,
    flag_print_debug_verbose,
    get_storage_identifier,
    get_storage_prefix,
    get_storage_tag,
    __log_prefix__,
)
from .policies import TabularPolicy, ThresholdPolicy


def get_string_hash(s):
    h = hashlib.sha256(s.encode("utf-8")).hexdigest()
    return h


def get_list_hash(l):
    return get_string_hash("|".join(str(e) for e in l))


def _get_folder_name(config, methods_hash):
    storage_tag = get_storage_tag()
    folder_tree_name = (
        f"K{config.K}_M{config.M}_A{config.A}/load_{config.load}/"
        f"instance-{config.fingerprint()}/methods-{methods_hash}/{storage_tag}"
    )
    return folder_tree_name


def write_json(obj, path):
    dir_name = os.path.dirname(os.path.abspath(path))
    create_dir_if_not_exist_recursive(dir_name)
    with open(path, "w") as f:
        json.dump(obj, f, indent=4)


def read_json(path):
    with open(path, "r") as f:
        return json.load(f)


def policy_to_dict(pi, config):
    ret = {"kind": None, "K": config.K, "M": config.M, "A": config.A, "name": pi.name}
    if isinstance(pi, ThresholdPolicy):
        ret["kind"] = "threshold"
        ret["thresholds"] = list(pi.s)
    else:
        ret["kind"] = "tabular"
        ret["actions"] = {str(i): [int(v) for v in a] for i, a in enumerate(pi.actions)}
    return ret


def policy_from_dict(d, config=None):
    kind = d.get("kind", None)
    if config is not None:
        for k in ("K", "M", "A"):
            if k in d and d[k] != getattr(config, k):
                raise InvalidConfigError(
                    f"policy was stored for {k}={d[k]}, the configuration has {k}={getattr(config, k)}."
                )
    name = d.get("name", kind)
    if kind == "threshold":
        return ThresholdPolicy(tuple(d["thresholds"]), name=name)
    if kind == "tabular":
        actions = d["actions"]
        size = len(actions)
        try:
            table = np.array([actions[str(i)] for i in range(size)], dtype=np.int64)
        except KeyError as e:
            raise InvalidConfigError(f"policy table misses state index {e}.")
        return TabularPolicy(table, name=name)
    raise InvalidConfigError(f"unknown policy kind {kind!r}, expected tabular|threshold.")


def save_policy(pi, config, path):
    write_json(policy_to_dict(pi, config), path)


def load_policy(path, config=None):
    try:
        d = read_json(path)
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"can't parse policy file {path}: {e}")
    return policy_from_dict(d, config)


def evaluation_to_dict(evaluation, include_h=True):
    ret = {
        "g": float(evaluation.g),
        "reference_index": int(evaluation.reference_index),
        "residual": float(evaluation.residual),
    }
    if include_h:
        ret["h"] = [float(v) for v in evaluation.h]
    return ret


def sim_result_to_dict(result, config=None, policy_name=None):
    ret = result.to_dict()
    if config is not None:
        ret["config"] = config.to_dict()
    if policy_name is not None:
        ret["policy"] = policy_name
    return ret


def report_to_dict(report):
    return report.to_dict()


def _get_cache_template(config, methods):
    return {
        "config": config.to_dict(),
        "methods": list(methods),
        "dejavu_version": dejavu_version,
        "total_solve_time_s": 0.0,
        "results": {},
    }


class ResultStorage:
    """
    Scenario results already computed, stored as json in a folder tree keyed
    by the hashed instance, so repeated grids only solve new instances.
    """

    def __init__(self) -> None:
        self.storage_prefix = get_storage_prefix()
        self.storage_identifier = get_storage_identifier()
        self.default_storage_path = os.path.abspath(
            os.path.join(self.storage_prefix, self.storage_identifier)
        )
        create_dir_if_not_exist_recursive(self.default_storage_path)
        self.fn_storage = {}

    def _get_cache_file_path(self, folder_name):
        return os.path.join(self.default_storage_path, folder_name, "cache.json")

    def __store__(self):
        for folder_name in self.fn_storage:
            file_name = self._get_cache_file_path(folder_name)
            write_json(self.fn_storage[folder_name], file_name)
            try:
                os.chmod(file_name, 0o0777)
            except PermissionError as e:
                print(f"can't set permission of cache file {file_name}: {e}")

    def _folder(self, config, methods):
        return _get_folder_name(config, get_list_hash(sorted(methods)))

    def add_results(self, config, methods, rows, solve_time):
        folder_name = self._folder(config, methods)
        cache_json = self.fn_storage.get(
            folder_name, _get_cache_template(config, methods)
        )
        changes_made = False
        for row in rows:
            if row["method"] in cache_json["results"]:
                continue
            cache_json["results"][row["method"]] = {
                "avg_cost": row["avg_cost"],
                "runtime_sec": row["runtime_sec"],
                "iterations": row["iterations"],
            }
            changes_made = True
            if flag_print_debug:
                print(
                    f"{__log_prefix__} added {row['method']} for {folder_name}: {row['avg_cost']}"
                )
        if changes_made:
            cache_json["total_solve_time_s"] += solve_time
            self.fn_storage[folder_name] = cache_json
            self.__store__()

    def restore_results(self, config, methods):
        folder_name = self._folder(config, methods)
        if folder_name not in self.fn_storage:
            file_name = self._get_cache_file_path(folder_name)
            if not os.path.isfile(file_name):
                return None
            self.fn_storage[folder_name] = read_json(file_name)
            if flag_print_debug_verbose:
                print(f"{__log_prefix__} restored {file_name}")
        results = self.fn_storage[folder_name]["results"]
        if not all(m in results for m in methods):
            return None
        if flag_print_debug:
            print(f"{__log_prefix__} found stored results for {folder_name}.")
        return {m: results[m] for m in methods}

    def dump_storage(self):
        print(f"{__log_prefix__} result storage at {self.default_storage_path}:")
        for folder_name, cache_json in self.fn_storage.items():
            print(f"{folder_name}:\n{json.dumps(cache_json['results'], indent=4)}")


global_result_storage = None


def get_result_storage():
    # created on first use, the storage prefix may warn or fail
    global global_result_storage
    if global_result_storage is None:
        global_result_storage = ResultStorage()
    return global_result_storage
