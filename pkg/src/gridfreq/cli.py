"""Scenario-driven command line frontend.

Verbs:

* ``simulate``       run one scenario, write trajectory CSV + summary JSON
                     (and figures with ``--plot``)
* ``compare``        run several scenarios on the same case/disturbances and
                     tabulate their metrics
* ``sweep``          rerun one scenario over a list of parameter values
* ``validate-case``  load and check a case file

Scenario files are JSON documents mirroring the runtime configuration
one-to-one; bundled scenarios and cases can be referenced by bare name.
``GRIDFREQ_THREADS`` caps how many member runs ``compare``/``sweep``
execute concurrently.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis, data, dispatch, dynamics, netmodel, powerflow, report
from .controllers import (
    Agc,
    ControllerSpec,
    Dai,
    GatherBroadcast,
    PiacDecentralized,
    PiacMulti,
    PiacSingle,
)
from .errors import GridfreqError, ScenarioError

_LAWS = ("piac", "piac_multi", "piac_decentralized", "agc", "gb", "dai")

_SCN_KEYS = {"name", "case", "controller", "costs", "disturbances",
             "dt", "t_max", "stride", "settle_tol", "record_rel_freq"}
_CTRL_KEYS = {"law", "k", "agc_node", "gb_weights", "dai_weights", "nodes"}
_COST_KEYS = {"alpha", "seed", "mu"}


@dataclass(frozen=True)
class Scenario:
    name: str
    case: str
    case_path: Path
    law: str
    k: float | dict
    agc_node: int | None = None
    gb_weights: dict | None = None
    dai_weights: list | None = None
    controlled_nodes: str = "case"          # "case" or "all"
    alpha_source: str | dict = "case"       # "case", "random", or id -> value
    seed: int | None = None
    mu: float = 1e-3
    disturbances: tuple = ()
    dt: float = 1e-3
    t_max: float = 60.0
    stride: int = 10
    settle_tol: float = analysis.SETTLE_TOL
    record_rel_freq: bool = False


def _resolve_case(ref: str, base_dir: Path) -> Path:
    p = Path(ref)
    if p.is_file():
        return p
    q = base_dir / ref
    if q.is_file():
        return q
    try:
        return data.case_path(ref)
    except FileNotFoundError:
        raise ScenarioError(f"case {ref!r} is neither a file nor a bundled case")


def _resolve_scenario(ref: str) -> Path:
    p = Path(ref)
    if p.is_file():
        return p
    try:
        return data.scenario_path(ref)
    except FileNotFoundError:
        raise ScenarioError(f"scenario {ref!r} is neither a file nor a bundled scenario")


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown field {sorted(unknown)[0]!r}")


def load_scenario(ref: str) -> Scenario:
    path = _resolve_scenario(ref)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
    _check_keys(doc, _SCN_KEYS, "scenario")
    if "case" not in doc:
        raise ScenarioError("scenario: missing 'case'")
    ctrl = doc.get("controller")
    _check_keys(ctrl or {}, _CTRL_KEYS, "scenario.controller")
    if not ctrl or "law" not in ctrl:
        raise ScenarioError("scenario.controller: missing 'law'")
    law = ctrl["law"]
    if law not in _LAWS:
        raise ScenarioError(
            f"scenario.controller.law: expected one of {_LAWS}, got {law!r}")
    costs = doc.get("costs") or {}
    _check_keys(costs, _COST_KEYS, "scenario.costs")
    alpha = costs.get("alpha", "case")
    if isinstance(alpha, dict):
        alpha = {int(i): float(v) for i, v in alpha.items()}
    elif alpha not in ("case", "random"):
        raise ScenarioError("scenario.costs.alpha: expected 'case', 'random', or a map")
    disturbances = []
    for k, e in enumerate(doc.get("disturbances") or []):
        _check_keys(e, {"t", "delta_p"}, f"disturbances[{k}]")
        if "t" not in e or "delta_p" not in e:
            raise ScenarioError(f"disturbances[{k}]: needs 't' and 'delta_p'")
        delta = {int(i): float(v) for i, v in e["delta_p"].items()}
        disturbances.append(dynamics.Disturbance(float(e["t"]), delta))
    nodes = ctrl.get("nodes", "all" if law == "piac_decentralized" else "case")
    if nodes not in ("case", "all"):
        raise ScenarioError("scenario.controller.nodes: expected 'case' or 'all'")
    k_field = ctrl.get("k")
    if k_field is None:
        raise ScenarioError("scenario.controller: missing gain 'k'")
    return Scenario(
        name=doc.get("name", path.stem),
        case=doc["case"],
        case_path=_resolve_case(doc["case"], path.parent),
        law=law,
        k=k_field,
        agc_node=ctrl.get("agc_node"),
        gb_weights=ctrl.get("gb_weights"),
        dai_weights=ctrl.get("dai_weights"),
        controlled_nodes=nodes,
        alpha_source=alpha,
        seed=costs.get("seed"),
        mu=float(costs.get("mu", 1e-3)),
        disturbances=tuple(disturbances),
        dt=float(doc.get("dt", 1e-3)),
        t_max=float(doc.get("t_max", 60.0)),
        stride=int(doc.get("stride", 10)),
        settle_tol=float(doc.get("settle_tol", analysis.SETTLE_TOL)),
        record_rel_freq=bool(doc.get("record_rel_freq", False)),
    )


def _controlled_ids(scn: Scenario, net: netmodel.Network) -> list[int]:
    if scn.controlled_nodes == "all":
        return [net.node_ids[j] for j in net.mf_idx]
    ids = [nd.id for nd in net.nodes if nd.has_controller]
    if not ids:
        raise ScenarioError("case defines no controllers; use controller.nodes='all'")
    return ids


def build_costs(scn: Scenario, net: netmodel.Network) -> dict[int, dispatch.CostModel]:
    ids = _controlled_ids(scn, net)
    if isinstance(scn.alpha_source, dict):
        missing = [i for i in ids if i not in scn.alpha_source]
        if missing:
            raise ScenarioError(f"costs.alpha map lacks nodes {missing}")
        alphas = {i: scn.alpha_source[i] for i in ids}
    elif scn.alpha_source == "random":
        rng = np.random.default_rng(scn.seed)
        alphas = {}
        for i in ids:
            a = 0.0
            while a <= 0.0:
                a = float(rng.uniform(0.0, 1.0))
            alphas[i] = a
    else:
        alphas = {}
        for i in ids:
            nd = net.nodes[net.index_of[i]]
            if nd.alpha is None:
                raise ScenarioError(
                    f"node {i} has no alpha in the case; use costs.alpha='random'")
            alphas[i] = nd.alpha
    out: dict[int, dispatch.CostModel] = {}
    for i in ids:
        nd = net.nodes[net.index_of[i]]
        if np.isfinite(nd.u_lo) and np.isfinite(nd.u_hi):
            out[i] = dispatch.BarrierQuadratic(alphas[i], nd.u_lo, nd.u_hi, scn.mu)
        else:
            out[i] = dispatch.Quadratic(alphas[i])
    return out


def build_spec(scn: Scenario, net: netmodel.Network,
               part: netmodel.AreaPartition | None) -> ControllerSpec:
    ids = _controlled_ids(scn, net)
    if scn.law == "piac":
        return ControllerSpec(PiacSingle(float(scn.k)), build_costs(scn, net))
    if scn.law == "piac_multi":
        if part is None:
            raise ScenarioError("piac_multi requires a case with areas")
        k = {str(a): float(v) for a, v in scn.k.items()} if isinstance(scn.k, dict) \
            else float(scn.k)
        return ControllerSpec(PiacMulti(part, k), build_costs(scn, net))
    if scn.law == "piac_decentralized":
        theta_ref = powerflow.solve_algebraic(net).theta
        k = {int(i): float(v) for i, v in scn.k.items()} if isinstance(scn.k, dict) \
            else float(scn.k)
        return ControllerSpec(PiacDecentralized(theta_ref, k), {}, controlled=tuple(ids))
    if scn.law == "agc":
        return ControllerSpec(Agc(float(scn.k), scn.agc_node), build_costs(scn, net))
    if scn.law == "gb":
        weights = None
        if scn.gb_weights not in (None, "uniform"):
            weights = {int(i): float(v) for i, v in scn.gb_weights.items()}
        return ControllerSpec(GatherBroadcast(float(scn.k), weights), build_costs(scn, net))
    if scn.law == "dai":
        weights = None
        if scn.dai_weights not in (None, "ring"):
            weights = tuple((int(i), int(j), float(w)) for i, j, w in scn.dai_weights)
        k = {int(i): float(v) for i, v in scn.k.items()} if isinstance(scn.k, dict) \
            else float(scn.k)
        return ControllerSpec(Dai(k, weights), build_costs(scn, net))
    raise ScenarioError(f"unknown law {scn.law!r}")


def run_scenario(scn: Scenario):
    """Load the case, build the controller, and simulate."""
    net = netmodel.load_case(scn.case_path)
    part = netmodel.load_partition(scn.case_path)
    spec = build_spec(scn, net, part)
    traj = dynamics.simulate(net, spec, scn.disturbances,
                             t_max=scn.t_max, dt=scn.dt, stride=scn.stride,
                             part=part)
    metrics = analysis.compute_metrics(traj, settle_tol=scn.settle_tol)
    return net, traj, metrics


def _scenario_info(scn: Scenario) -> dict:
    return {
        "case": scn.case,
        "law": scn.law,
        "k": scn.k,
        "dt": scn.dt,
        "t_max": scn.t_max,
        "stride": scn.stride,
        "seed": scn.seed,
        "settle_tol": scn.settle_tol,
    }


def _apply_overrides(scn: Scenario, args) -> Scenario:
    changes = {}
    if getattr(args, "case", None):
        changes["case"] = args.case
        changes["case_path"] = _resolve_case(args.case, Path.cwd())
    if getattr(args, "controller", None):
        if args.controller not in _LAWS:
            raise ScenarioError(f"--controller: expected one of {_LAWS}")
        changes["law"] = args.controller
    if getattr(args, "k", None) is not None:
        changes["k"] = args.k
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "tmax", None) is not None:
        changes["t_max"] = args.tmax
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "stride", None) is not None:
        changes["stride"] = args.stride
    return replace(scn, **changes) if changes else scn


def cmd_simulate(args) -> int:
    scn = _apply_overrides(load_scenario(args.scenario), args)
    out_dir = Path(args.out or f"runs/{scn.name}")
    out_dir.mkdir(parents=True, exist_ok=True)
    net, traj, metrics = run_scenario(scn)
    rel = scn.record_rel_freq or args.rel_freq
    csv_path = report.write_trajectory_csv(traj, out_dir / f"{scn.name}_trajectory.csv",
                                           rel_freq=rel)
    artifacts = {"trajectory_csv": str(csv_path), "figure": None}
    if args.plot:
        from . import plotting
        fig = plotting.overview_figure(traj, title=scn.name)
        artifacts["figure"] = str(plotting.save_figure(
            fig, out_dir / f"{scn.name}_overview.png"))
    payload = report.summary_payload(scn.name, _scenario_info(scn), traj,
                                     metrics, artifacts)
    summary_path = report.write_summary_json(payload, out_dir / f"{scn.name}_summary.json")
    print(f"{scn.name}: nadir {metrics.nadir_hz:.4f} Hz, "
          f"overshoot {metrics.max_overshoot_us:.3e} p.u., "
          f"settling {metrics.settling_time_s}")
    print(f"wrote {csv_path}")
    print(f"wrote {summary_path}")
    if artifacts["figure"]:
        print(f"wrote {artifacts['figure']}")
    return 0


def _compare_job(ref: str) -> tuple[str, dict, list]:
    scn = load_scenario(ref)
    net, traj, metrics = run_scenario(scn)
    row = [scn.name, scn.law, metrics.nadir_hz, metrics.max_overshoot_us,
           float("nan") if metrics.settling_time_s is None else metrics.settling_time_s,
           metrics.marginal_spread,
           bool(metrics.max_overshoot_us > analysis.OVERSHOOT_TOL)]
    return scn.name, metrics.to_dict(), row


def _max_workers(n_jobs: int) -> int:
    cap = os.environ.get("GRIDFREQ_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_jobs, limit))


def _run_jobs(fn, jobs):
    workers = _max_workers(len(jobs))
    if workers == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_compare(args) -> int:
    scenarios = [load_scenario(ref) for ref in args.scenarios]
    base = scenarios[0]
    for scn in scenarios[1:]:
        if scn.case_path != base.case_path:
            raise ScenarioError(
                f"scenarios disagree on the case: {base.case!r} vs {scn.case!r}")
        if scn.disturbances != base.disturbances:
            raise ScenarioError(
                f"scenario {scn.name!r} has different disturbances than {base.name!r}")
    out_dir = Path(args.out or "runs/compare")
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.plot:
        # keep the trajectories in-process so the figure needs no second run
        results, trajs, labels = [], [], []
        for ref in args.scenarios:
            results.append(_compare_job(ref))
            scn = load_scenario(ref)
            _, traj, _ = run_scenario(scn)
            trajs.append(traj)
            labels.append(scn.name)
    else:
        results = _run_jobs(_compare_job, list(args.scenarios))
    header = ["scenario", "law", "nadir_hz", "max_overshoot_us",
              "settling_time_s", "marginal_spread", "overshoots"]
    rows = [row for _, _, row in results]
    csv_path = report.write_rows_csv(out_dir / "comparison.csv", header, rows)
    payload = {name: metrics for name, metrics, _ in results}
    report.write_summary_json(payload, out_dir / "comparison.json")
    widths = [max(len(str(r[c])) for r in [header] + rows) for c in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    if args.plot:
        from . import plotting
        plotting.save_figure(plotting.comparison_figure(trajs, labels),
                             out_dir / "comparison.png")
        print(f"wrote {out_dir / 'comparison.png'}")
    print(f"wrote {csv_path}")
    return 0


_SWEEP_PARAMS = ("k", "k_gb", "dt")


def _sweep_job(payload) -> tuple[float, dict]:
    ref, param, value = payload
    scn = load_scenario(ref)
    if param in ("k", "k_gb"):
        scn = replace(scn, k=value)
    else:
        scn = replace(scn, dt=value)
    _, traj, metrics = run_scenario(scn)
    return value, metrics.to_dict()


def cmd_sweep(args) -> int:
    param = args.param.lower()
    if param == "k_gb".lower() or args.param == "k_GB":
        param = "k_gb"
    if param not in _SWEEP_PARAMS:
        raise ScenarioError(f"--param: expected one of {_SWEEP_PARAMS}, got {args.param!r}")
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ScenarioError("--values: expected a comma-separated list of numbers")
    scn = load_scenario(args.scenario)
    out_dir = Path(args.out or f"runs/sweep_{scn.name}_{param}")
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _run_jobs(_sweep_job, [(args.scenario, param, v) for v in values])
    header = ["value", "nadir_hz", "max_overshoot_us", "settling_time_s",
              "marginal_spread"]
    rows = []
    for value, m in results:
        rows.append([float(value), m["nadir_hz"], m["max_overshoot_us"],
                     -1.0 if m["settling_time_s"] is None else m["settling_time_s"],
                     float("nan") if m["marginal_spread"] is None else m["marginal_spread"]])
    csv_path = report.write_rows_csv(out_dir / "sweep.csv", header, rows)
    for r in [header] + rows:
        print("  ".join(str(v) for v in r))
    if param in ("k", "k_gb") and scn.law == "piac":
        nadirs = [m["nadir_hz"] for _, m in results]
        ordered = sorted(zip(values, nadirs))
        monotone = all(b[1] > a[1] for a, b in zip(ordered, ordered[1:]))
        print(f"nadir strictly shallower with larger k: {'yes' if monotone else 'no'}")
    print(f"wrote {csv_path}")
    return 0


def cmd_validate_case(args) -> int:
    path = _resolve_case(args.case, Path.cwd())
    net, part = netmodel.parse_case(path)
    m_s, d_s, p_s = netmodel.aggregate_constants(net)
    print(f"{path}: ok")
    print(f"  nodes: {net.n} (machine {net.n_machine}, freq {net.n_freq}, "
          f"passive {net.n_passive}); lines: {len(net.lines)}")
    print(f"  base: {net.base_mva} MVA, {net.base_hz} Hz")
    print(f"  aggregates: M_s={m_s:.6g}, D_s={d_s:.6g}, sum P={p_s:.3e}")
    print(f"  controllers: {len(net.controller_idx)}")
    if part is not None:
        names = ", ".join(a.name for a in part.areas)
        print(f"  areas: {names}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridfreq",
        description="Secondary frequency control simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario")
    sim.add_argument("--scenario", required=True,
                     help="scenario file or bundled scenario name")
    sim.add_argument("--case", help="override the scenario's case")
    sim.add_argument("--controller", help="override the control law")
    sim.add_argument("--k", type=float, help="override the control gain")
    sim.add_argument("--dt", type=float, help="override the step size")
    sim.add_argument("--tmax", type=float, help="override the horizon")
    sim.add_argument("--seed", type=int, help="override the cost-weight seed")
    sim.add_argument("--stride", type=int, help="override the sample stride")
    sim.add_argument("--out", help="output directory (default runs/<name>)")
    sim.add_argument("--plot", action="store_true", help="render overview figure")
    sim.add_argument("--rel-freq", action="store_true",
                     help="add machine frequencies relative to the aggregate model")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="run several scenarios side by side")
    cmp_.add_argument("scenarios", nargs="+",
                      help="scenario files or bundled scenario names")
    cmp_.add_argument("--out", help="output directory (default runs/compare)")
    cmp_.add_argument("--plot", action="store_true", help="render comparison figure")
    cmp_.set_defaults(func=cmd_compare)

    swp = sub.add_parser("sweep", help="rerun one scenario over parameter values")
    swp.add_argument("--scenario", required=True)
    swp.add_argument("--param", required=True, help="one of k, k_gb, dt")
    swp.add_argument("--values", required=True, help="comma-separated values")
    swp.add_argument("--out", help="output directory")
    swp.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate-case", help="load and check a case file")
    val.add_argument("--case", required=True, help="case file or bundled case name")
    val.set_defaults(func=cmd_validate_case)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridfreqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
