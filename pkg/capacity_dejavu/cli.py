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

import argparse
import functools
import json
import multiprocessing as mp
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from capacity_dejavu import __version__ as dejavu_version
from .dejavu_utilities import (
    CapacityExceededError,
    ContractViolation,
    DejavuError,
    InvalidConfigError,
    NumericalError,
    flag_print_solves,
    get_worker_count,
    log_debug,
    log_warning,
    __log_prefix__,
)
from .dejavu_storage import (
    evaluation_to_dict,
    get_result_storage,
    load_policy,
    report_to_dict,
    save_policy,
    sim_result_to_dict,
    write_json,
)
from .model import ProblemConfig, build_arrival_model, enumerate_states
from .policies import (
    ThresholdPolicy,
    do_nothing_policy,
    heuristic_thresholds,
    threshold_to_tabular,
)
from .scenarios import (
    METHODS,
    PUBLISHED_TOLERANCE,
    get_published_table,
    never_early_grid,
    random_two_period_configs,
    simulation_configs,
    table_cells,
    two_period_threshold_grid,
)
from .sim import simulate
from .solver import (
    evaluate_policy,
    finite_horizon_sequence,
    improve_policy,
    policy_iteration,
)
from .structure import (
    StructureReport,
    check_corollary1,
    check_kernel,
    check_monotone_in_x1,
    check_never_early,
    check_proposition1,
    check_value_properties,
)


EXIT_OK = 0
EXIT_DEVIATION = 1
EXIT_INVALID_INPUT = 2
EXIT_CAPACITY = 3
EXIT_NUMERICAL = 4
OPT_ZERO_TOL = 1e-9

CSV_COLUMNS = [
    "scenario",
    "load",
    "K",
    "M",
    "A",
    "lambda",
    "ce",
    "co",
    "method",
    "avg_cost",
    "runtime_sec",
    "iterations",
]
REPRODUCE_COLUMNS = CSV_COLUMNS + ["published_cost", "deviation", "status"]
SIM_COLUMNS = CSV_COLUMNS[:8] + [
    "policy",
    "mean_cost",
    "std_error",
    "horizon",
    "warmup",
    "replications",
    "seed",
    "exact_cost",
]
# tie rules of the one-step heuristics
ONE_STEP_TIE_BREAKS = {"dn1s": "largest", "th1s": "smallest"}
HEURISTICS = ("dn", "dn1s", "th", "th1s")
VERIFY_SUITES = (
    "monotone",
    "convexity",
    "never-early",
    "proposition1",
    "corollary1",
    "simulation",
    "kernel",
)


@dataclass
class ScenarioResult:
    scenario: str
    config: ProblemConfig
    method: str
    avg_cost: float
    runtime_sec: float
    iterations: Optional[int] = None

    def to_row(self):
        return {
            "scenario": self.scenario,
            "load": self.config.load,
            "K": self.config.K,
            "M": self.config.M,
            "A": self.config.A,
            "lambda": self.config.lam,
            "ce": self.config.c_e,
            "co": self.config.c_o,
            "method": self.method,
            "avg_cost": self.avg_cost,
            "runtime_sec": self.runtime_sec,
            "iterations": self.iterations,
        }


class MethodRunner:
    """Builds and evaluates the policies of the five methods on one instance."""

    def __init__(self, config):
        self.config = config
        self.space = enumerate_states(config)
        self.model = build_arrival_model(config)
        self.opt_result = None

    def _evaluate(self, pi):
        return evaluate_policy(pi, self.space, self.model, self.config)

    @functools.cached_property
    def dn(self):
        return do_nothing_policy(self.space)

    @functools.cached_property
    def dn_eval(self):
        return self._evaluate(self.dn)

    @functools.cached_property
    def dn1s(self):
        return improve_policy(
            self.dn_eval,
            self.space,
            self.model,
            self.config,
            tie_break=ONE_STEP_TIE_BREAKS["dn1s"],
        ).renamed("dn1s")

    @functools.cached_property
    def thresholds(self):
        return heuristic_thresholds(self.config, self.model)

    @functools.cached_property
    def th(self):
        return threshold_to_tabular(self.thresholds, self.space, self.config)

    @functools.cached_property
    def th_eval(self):
        return self._evaluate(self.th)

    @functools.cached_property
    def th1s(self):
        return improve_policy(
            self.th_eval,
            self.space,
            self.model,
            self.config,
            tie_break=ONE_STEP_TIE_BREAKS["th1s"],
        ).renamed("th1s")

    @functools.cached_property
    def opt(self):
        self.opt_result = policy_iteration(
            self.dn, self.space, self.model, self.config
        )
        return self.opt_result.policy

    def policy(self, method):
        if method not in METHODS:
            raise InvalidConfigError(f"unknown method {method!r}, expected one of {METHODS}.")
        return getattr(self, method.replace("-", "_"))

    def evaluation(self, method):
        if method == "dn":
            return self.dn_eval
        if method == "th":
            return self.th_eval
        if method == "opt":
            _ = self.opt
            return self.opt_result.evaluation
        return self._evaluate(self.policy(method))

    def run(self, method):
        start = time.time()
        ev = self.evaluation(method)
        runtime = time.time() - start
        iterations = self.opt_result.iterations if method == "opt" else None
        return ev.g, runtime, iterations


def _parse_methods(methods):
    if isinstance(methods, str):
        methods = [m.strip().lower() for m in methods.split(",") if m.strip() != ""]
    if len(methods) == 0:
        raise InvalidConfigError("at least one method is required.")
    unknown = [m for m in methods if m not in METHODS]
    if len(unknown) > 0:
        raise InvalidConfigError(f"unknown methods {unknown}, expected some of {METHODS}.")
    # fixed row order
    return [m for m in METHODS if m in methods]


def run_scenario(config, methods=METHODS, scenario="run", storage=None):
    methods = _parse_methods(methods)
    if storage is not None:
        stored = storage.restore_results(config, methods)
        if stored is not None:
            return [
                ScenarioResult(
                    scenario,
                    config,
                    m,
                    stored[m]["avg_cost"],
                    stored[m]["runtime_sec"],
                    stored[m]["iterations"],
                )
                for m in methods
            ]
    start = time.time()
    runner = MethodRunner(config)
    results = []
    for m in methods:
        g, runtime, iterations = runner.run(m)
        results.append(ScenarioResult(scenario, config, m, g, runtime, iterations))
        log_debug(f"{scenario} {m}: g={g:.6f} after {runtime:.2f}s")
    if flag_print_solves:
        print(
            f"{__log_prefix__} scenario {scenario} finished after {time.time() - start:.2f}s."
        )
    if storage is not None:
        storage.add_results(
            config, methods, [r.to_row() for r in results], time.time() - start
        )
    return results


def _run_scenario_job(args):
    config, methods, scenario, use_storage = args
    storage = get_result_storage() if use_storage else None
    return run_scenario(config, methods, scenario, storage)


def run_scenarios(jobs, workers=None, use_storage=False):
    """Runs ``(config, methods, scenario)`` jobs, results in job order."""
    if workers is None:
        workers = get_worker_count()
    args = [(c, m, s, use_storage) for c, m, s in jobs]
    if workers > 1 and len(args) > 1:
        ctx = mp.get_context("spawn")
        with ctx.Pool(min(workers, len(args))) as pool:
            return pool.map(_run_scenario_job, args)
    return [_run_scenario_job(a) for a in args]


def results_to_frame(results):
    df = pd.DataFrame([r.to_row() for r in results], columns=CSV_COLUMNS)
    df["iterations"] = df["iterations"].astype("Int64")
    return df


def _format_costs(df, columns=("avg_cost",)):
    df = df.copy()
    for c in columns:
        df[c] = df[c].map(lambda v: "" if pd.isna(v) else f"{v:.6f}")
    df["runtime_sec"] = df["runtime_sec"].map(
        lambda v: "" if pd.isna(v) else f"{v:.3f}"
    )
    return df


def reproduce_table(table_id, fast=False, workers=None, use_storage=False):
    """
    Runs every cell of a published table and compares with the published
    costs. Returns the result frame and a summary; cells deviating by more
    than ``PUBLISHED_TOLERANCE`` are marked ``DEVIATION``.
    """
    table = get_published_table(table_id)
    cells = table_cells(table_id, fast=fast)
    for c in cells:
        if c.long and c.skip_reason is None:
            log_warning(f"cell {c.scenario} is flagged long, it may take a while.")
    jobs = [(c.config, METHODS, c.scenario) for c in cells if c.skip_reason is None]
    solved = iter(run_scenarios(jobs, workers=workers, use_storage=use_storage))
    rows = []
    for c in cells:
        if c.skip_reason is not None:
            for m in METHODS:
                rows.append(
                    {
                        "scenario": c.scenario,
                        "load": c.load,
                        "K": table.K,
                        "M": table.M,
                        "A": c.A,
                        "lambda": 0.2 * c.A,
                        "ce": table.c_e,
                        "co": table.c_o,
                        "method": m,
                        "avg_cost": np.nan,
                        "runtime_sec": np.nan,
                        "iterations": None,
                        "published_cost": np.nan,
                        "deviation": np.nan,
                        "status": c.skip_reason,
                    }
                )
            continue
        for r in next(solved):
            row = r.to_row()
            published = table.published_cost(c.load, c.A, r.method)
            deviation = abs(r.avg_cost - published)
            row["published_cost"] = published
            row["deviation"] = deviation
            # round-off of the printed two decimals
            row["status"] = "ok" if deviation <= PUBLISHED_TOLERANCE + 1e-9 else "DEVIATION"
            rows.append(row)
    df = pd.DataFrame(rows, columns=REPRODUCE_COLUMNS)
    df["iterations"] = df["iterations"].astype("Int64")
    computed = df[df["status"].isin(["ok", "DEVIATION"])]
    summary = {
        "table": table_id,
        "cells": int(len(computed)),
        "skipped": int(len(df) - len(computed)),
        "deviations": int((computed["status"] == "DEVIATION").sum()),
        "max_deviation": float(computed["deviation"].max()) if len(computed) else 0.0,
        "max_th1s_opt_gap": _th1s_gap(computed),
        "average_deviation_pct": average_deviations(computed),
    }
    return df, summary


def average_deviations(df):
    """
    Mean percentage gap ``100 (g - g_opt) / g_opt`` of every heuristic over
    the scenarios of ``df``, scenarios with ``g_opt = 0`` left out. ``None``
    for a heuristic without such a scenario.
    """
    ret = {m: None for m in HEURISTICS}
    if len(df) == 0:
        return ret
    pivot = df.pivot(index="scenario", columns="method", values="avg_cost")
    pivot = pivot[pivot["opt"] > OPT_ZERO_TOL]
    for m in HEURISTICS:
        if m in pivot and len(pivot) > 0:
            ret[m] = float((100.0 * (pivot[m] - pivot["opt"]) / pivot["opt"]).mean())
    return ret


def _th1s_gap(df):
    if len(df) == 0:
        return 0.0
    pivot = df.pivot(index="scenario", columns="method", values="avg_cost")
    return float((pivot["th1s"] - pivot["opt"]).abs().max())


def _write_frame(df, out, cost_columns=("avg_cost",)):
    df = _format_costs(df, cost_columns)
    if out is None or out == "-":
        df.to_csv(sys.stdout, index=False)
    else:
        df.to_csv(out, index=False)
        print(f"{__log_prefix__} results stored in {out}")


def _report_simulation(config, method, runner, horizon, warmup, reps, seed):
    report = StructureReport("simulation", config.fingerprint())
    pi = runner.policy(method)
    exact = runner.evaluation(method).g
    res = simulate(pi, config, runner.model, horizon, warmup, reps, seed)
    diff = abs(res.mean_cost - exact)
    if not diff <= 3 * res.std_error:
        report.add_violation(
            None, res.mean_cost, exact, method=method, std_error=res.std_error
        )
    else:
        report.notes.append(
            f"{method}: |{res.mean_cost:.5f} - {exact:.5f}| <= 3 * {res.std_error:.5f}"
        )
    return report


def _optimal(config):
    space = enumerate_states(config)
    model = build_arrival_model(config)
    res = policy_iteration(do_nothing_policy(space), space, model, config)
    return space, model, res


def verify(suite, horizon=200_000, warmup=10_000, reps=20, seed=0):
    """Runs a check suite over its fixed instance grid, returns the reports."""
    if suite == "all":
        reports = []
        for s in VERIFY_SUITES:
            reports.extend(verify(s, horizon, warmup, reps, seed))
        return reports
    if suite not in VERIFY_SUITES:
        raise InvalidConfigError(
            f"unknown suite {suite!r}, expected one of {VERIFY_SUITES + ('all',)}."
        )
    reports = []
    if suite == "monotone":
        for config in random_two_period_configs(20, seed=0):
            space, _, res = _optimal(config)
            reports.append(check_monotone_in_x1(res.policy, space, config))
    elif suite == "convexity":
        for config in random_two_period_configs(10, seed=1):
            tables = finite_horizon_sequence(20, config, build_arrival_model(config))
            reports.append(check_value_properties(tables, config))
    elif suite == "never-early":
        for config in never_early_grid():
            space, model, res = _optimal(config)
            reports.append(
                check_never_early(res.policy, config, space, model, res.evaluation)
            )
    elif suite == "proposition1":
        for config in two_period_threshold_grid(A_values=(2,)):
            reports.append(check_proposition1(config, build_arrival_model(config)))
    elif suite == "corollary1":
        for config in two_period_threshold_grid():
            reports.append(check_corollary1(config, build_arrival_model(config)))
    elif suite == "simulation":
        for config, method in simulation_configs():
            runner = MethodRunner(config)
            reports.append(
                _report_simulation(config, method, runner, horizon, warmup, reps, seed)
            )
    elif suite == "kernel":
        configs = (
            random_two_period_configs(20, seed=0)
            + random_two_period_configs(10, seed=1)
            + never_early_grid()
            + two_period_threshold_grid()
            + [
                c.config
                for t in (1, 2, 3, 4)
                for c in table_cells(t, fast=True)
                if c.config is not None
            ]
        )
        for config in configs:
            reports.append(check_kernel(config, build_arrival_model(config)))
    return reports


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="capacity-dejavu",
        description="Optimal and threshold capacity allocation for queues with preferred service periods.",
    )
    parser.add_argument("--version", action="version", version=dejavu_version)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evaluate methods on one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--out", default=None)
    p.add_argument("--cache", action="store_true", help="reuse stored results")

    p = sub.add_parser("reproduce", help="reproduce a published cost table")
    p.add_argument("--table", type=int, required=True, choices=range(1, 7))
    p.add_argument("--fast", action="store_true", help="skip long cells and A > 3")
    p.add_argument("--out", default=None)
    p.add_argument("--cache", action="store_true", help="reuse stored results")

    p = sub.add_parser("simulate", help="Monte Carlo estimate of a policy's cost")
    p.add_argument("--config", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--policy", help="policy file")
    group.add_argument("--method", choices=METHODS)
    p.add_argument("--horizon", type=int, default=200_000)
    p.add_argument("--warmup", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--exact", action="store_true", help="add the exact cost")
    p.add_argument("--out", default=None)
    p.add_argument("--record", default=None, help="json record of the run")

    p = sub.add_parser("verify", help="run a structural check suite")
    p.add_argument("--suite", required=True, choices=VERIFY_SUITES + ("all",))
    p.add_argument("--horizon", type=int, default=200_000)
    p.add_argument("--warmup", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="json report file")

    p = sub.add_parser("policy", help="export the policy of a method")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--out", required=True)
    p.add_argument("--evaluation", default=None, help="also store its evaluation")
    p.add_argument("--omit-h", action="store_true")
    return parser


def _scenario_name(path):
    return os.path.splitext(os.path.basename(path))[0]


def _cmd_run(args):
    config = ProblemConfig.from_file(args.config)
    storage = get_result_storage() if args.cache else None
    results = run_scenario(config, args.methods, _scenario_name(args.config), storage)
    _write_frame(results_to_frame(results), args.out)
    return EXIT_OK


def _cmd_reproduce(args):
    df, summary = reproduce_table(args.table, fast=args.fast, use_storage=args.cache)
    _write_frame(df, args.out, ("avg_cost", "published_cost", "deviation"))
    print(f"{__log_prefix__} {json.dumps(summary)}")
    return EXIT_DEVIATION if summary["deviations"] > 0 else EXIT_OK


def _cmd_simulate(args):
    config = ProblemConfig.from_file(args.config)
    runner = MethodRunner(config)
    if args.policy is not None:
        pi = load_policy(args.policy, config)
        if isinstance(pi, ThresholdPolicy):
            pi = threshold_to_tabular(pi, runner.space, config)
    else:
        pi = runner.policy(args.method)
    seed = args.seed if args.seed is not None else (config.seed or 0)
    res = simulate(pi, config, runner.model, args.horizon, args.warmup, args.reps, seed)
    row = ScenarioResult(_scenario_name(args.config), config, "", np.nan, np.nan).to_row()
    row = {k: row[k] for k in SIM_COLUMNS[:8]}
    row.update(
        {
            "policy": pi.name,
            "mean_cost": f"{res.mean_cost:.6f}",
            "std_error": f"{res.std_error:.6f}",
            "horizon": res.horizon,
            "warmup": res.warmup,
            "replications": res.replications,
            "seed": res.seed,
            "exact_cost": "",
        }
    )
    if args.exact:
        g = evaluate_policy(pi, runner.space, runner.model, config).g
        row["exact_cost"] = f"{g:.6f}"
    if args.record is not None:
        record = sim_result_to_dict(res, config, pi.name)
        if args.exact:
            record["exact_cost"] = g
        write_json(record, args.record)
    df = pd.DataFrame([row], columns=SIM_COLUMNS)
    if args.out is None:
        df.to_csv(sys.stdout, index=False)
    else:
        df.to_csv(args.out, index=False)
    return EXIT_OK


def _cmd_verify(args):
    reports = verify(args.suite, args.horizon, args.warmup, args.reps, args.seed)
    failed = [r for r in reports if not r.passed]
    for r in reports:
        print(f"{__log_prefix__} {r}")
    if args.out is not None:
        write_json([report_to_dict(r) for r in reports], args.out)
    print(
        f"{__log_prefix__} suite {args.suite}: {len(reports) - len(failed)}/{len(reports)} passed"
    )
    return EXIT_DEVIATION if len(failed) > 0 else EXIT_OK


def _cmd_policy(args):
    config = ProblemConfig.from_file(args.config)
    runner = MethodRunner(config)
    pi = runner.thresholds if args.method == "th" else runner.policy(args.method)
    save_policy(pi, config, args.out)
    if args.evaluation is not None:
        ev = runner.evaluation(args.method)
        write_json(evaluation_to_dict(ev, include_h=not args.omit_h), args.evaluation)
    return EXIT_OK


__commands__ = {
    "run": _cmd_run,
    "reproduce": _cmd_reproduce,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "policy": _cmd_policy,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return __commands__[args.command](args)
    except CapacityExceededError as e:
        print(e, file=sys.stderr)
        return EXIT_CAPACITY
    except NumericalError as e:
        print(e, file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidConfigError, ContractViolation, FileNotFoundError) as e:
        print(f"{__log_prefix__} invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except DejavuError as e:
        print(e, file=sys.stderr)
        return EXIT_DEVIATION


if __name__ == "__main__":
    sys.exit(main())
