"""Command-line front end: run scenarios, verify identities, canned demos.

Exit status: 0 when every check passes, 1 when a check fails, 2 on any
numerical abort or configuration problem. Trajectory files use the shortest
round-trip decimal representation so identical runs are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, discrete, flows, semidiscrete
from .errors import NumericsError, ScenarioError
from .hierarchy import CouplingConvention, PhaseState, invariants
from .numerics import NewtonSettings
from .sampling import random_phase_state
from .scenario import Scenario, parse_scenario, scenario_from_dict
from .verify import VerificationReport, _Collector, verify_all


def _fmt(value) -> str:
    return repr(float(value))


def _write_rows(path: Path, header: list[str], rows: list[list[float]], fmt: str) -> None:
    if fmt == "csv":
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:  # json-lines
        lines = [
            json.dumps(dict(zip(header, [float(v) for v in row])), sort_keys=True)
            for row in rows
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_report(path: Path, report: VerificationReport, scenario: Scenario) -> None:
    payload = report.to_dict()
    payload["scenario"] = {"kind": scenario.kind, "n": scenario.n, "seed": scenario.seed}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _continuous_artifacts(sc: Scenario, out_dir: Path) -> tuple[list[Path], VerificationReport]:
    if sc.positions is not None:
        state = PhaseState(np.array(sc.positions), np.array(sc.momenta))
    else:
        state = random_phase_state(np.random.default_rng(sc.seed), sc.n, min_gap=sc.min_gap)
    conv = CouplingConvention(sc.gamma)
    direction = np.array(sc.direction)
    traj = flows.evolve_path(state, flows.PathSpec(direction, sc.duration, steps=1), dt_s=sc.dt)

    header = (
        ["s", "t2", "t3"]
        + [f"x{i + 1}" for i in range(sc.n)]
        + [f"p{i + 1}" for i in range(sc.n)]
        + ["I1", "I2", "I3"]
    )
    rows = []
    base = invariants(state, conv, kmax=3)
    norm = 1.0 + np.abs(base)
    drift = 0.0
    for smp in traj.samples:
        vals = invariants(smp.state, conv, kmax=3)
        drift = max(drift, float(np.max(np.abs(vals - base) / norm)))
        rows.append([smp.s, smp.t2, smp.t3, *smp.state.x, *smp.state.p, *vals])
    suffix = "csv" if sc.format == "csv" else "jsonl"
    traj_path = out_dir / f"trajectory.{suffix}"
    _write_rows(traj_path, header, rows, sc.format)

    col = _Collector(sc.tolerance_scale)
    col.gated("invariant-drift", drift, 1e-8, n=sc.n, duration=sc.duration, dt=sc.dt)
    series = flows.noether_charge(traj, direction)
    col.gated(
        "energy-drift",
        float(np.max(np.abs(series - series[0]))),
        1e-8,
        direction=[float(d) for d in direction],
    )
    return [traj_path], VerificationReport(tuple(col.entries))


def _discrete_artifacts(sc: Scenario, out_dir: Path) -> tuple[list[Path], VerificationReport]:
    params = discrete.LatticeParams(
        p1=sc.p1, p2=sc.p2, n=sc.n, newton=NewtonSettings(tolerance=sc.newton_tolerance)
    )
    if sc.seed_prev is not None and sc.seed_cur is not None:
        orbit = [np.array(sc.seed_prev), np.array(sc.seed_cur)]
    else:
        from .sampling import orbit_seed

        orbit = list(orbit_seed(np.random.default_rng(sc.seed), sc.n))
    # `steps` is the final site index; the seed pair already spans sites 0 and 1
    for _ in range(sc.steps - 1):
        orbit.append(discrete.discrete_step(orbit[-2], orbit[-1], params))

    header = ["n"] + [f"x{i + 1}" for i in range(sc.n)]
    rows = [[float(k), *site] for k, site in enumerate(orbit)]
    suffix = "csv" if sc.format == "csv" else "jsonl"
    orbit_path = out_dir / f"orbit.{suffix}"
    _write_rows(orbit_path, header, rows, sc.format)

    col = _Collector(sc.tolerance_scale)
    worst_el = max(
        (
            float(np.max(np.abs(discrete.discrete_el_residual(orbit[k - 1], orbit[k], orbit[k + 1]))))
            for k in range(1, len(orbit) - 1)
        ),
        default=0.0,
    )
    col.gated("discrete-el-residual", worst_el, 10 * params.newton.tolerance, steps=sc.steps)
    base = discrete.discrete_invariants(orbit[0], orbit[1], 3)
    drift = max(
        float(np.max(np.abs(discrete.discrete_invariants(orbit[k], orbit[k + 1], 3) - base)))
        for k in range(len(orbit) - 1)
    )
    col.gated("discrete-invariant-drift", drift, 1e-10, steps=sc.steps)
    return [orbit_path], VerificationReport(tuple(col.entries))


def _semidiscrete_artifacts(sc: Scenario, out_dir: Path) -> tuple[list[Path], VerificationReport]:
    params = discrete.LatticeParams(
        p1=sc.p1, p2=sc.p2, n=sc.n, newton=NewtonSettings(tolerance=sc.newton_tolerance)
    )
    if sc.seed_prev is not None and sc.seed_cur is not None:
        sites = [np.array(sc.seed_prev), np.array(sc.seed_cur)]
    else:
        from .sampling import orbit_seed

        sites = list(orbit_seed(np.random.default_rng(sc.seed), sc.n))
    while len(sites) < sc.chain_edges + 1:
        sites.append(discrete.discrete_step(sites[-2], sites[-1], params))
    chain = semidiscrete.Chain(tuple(sites))
    n_steps = max(1, int(round(sc.tau_duration / sc.tau_step)))
    snaps = semidiscrete.evolve_chain(chain, sc.tau_duration / n_steps, n_steps)

    header = ["tau"] + [f"y{k}_x{i + 1}" for k in range(chain.length + 1) for i in range(sc.n)]
    rows = [[snap.tau, *np.concatenate(snap.sites)] for snap in snaps]
    suffix = "csv" if sc.format == "csv" else "jsonl"
    chain_path = out_dir / f"chain.{suffix}"
    _write_rows(chain_path, header, rows, sc.format)

    col = _Collector(sc.tolerance_scale)
    worst_disc = 0.0
    worst_eom = 0.0
    for snap in snaps:
        vel = semidiscrete.tau_velocities(snap)
        worst_disc = max(worst_disc, vel.max_discrepancy)
        if chain.length >= 2:
            worst_eom = max(
                worst_eom, float(np.max(np.abs(semidiscrete.semi_eom_residual(snap, vel))))
            )
    col.gated("semi-velocity-consistency", worst_disc, 1e-8, tau_span=sc.tau_duration)
    if chain.length >= 2:
        col.gated("semi-eom", worst_eom, 1e-10, tau_span=sc.tau_duration)
    if sc.n == 1:
        gaps = np.array([snap.sites[1][0] - snap.sites[0][0] for snap in snaps])
        col.gated("semi-gap-conservation", float(np.max(np.abs(gaps - gaps[0]))), 1e-10)
    return [chain_path], VerificationReport(tuple(col.entries))


def run_scenario(sc: Scenario) -> tuple[list[Path], VerificationReport]:
    """Execute a scenario, write its artifacts, and return the check report."""
    out_dir = Path(sc.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if sc.kind == "continuous":
        paths, report = _continuous_artifacts(sc, out_dir)
    elif sc.kind == "discrete":
        paths, report = _discrete_artifacts(sc, out_dir)
    elif sc.kind == "semidiscrete":
        paths, report = _semidiscrete_artifacts(sc, out_dir)
    else:
        paths, report = [], verify_all(sc)
    report_path = out_dir / "report.json"
    _write_report(report_path, report, sc)
    return paths + [report_path], report


DEMOS = {
    "continuous": {
        "kind": "continuous", "n": 2,
        "positions": [-2.0, 2.0], "momenta": [0.0, 0.0],
        "duration": 0.5, "dt": 1e-3,
    },
    "discrete": {
        "kind": "discrete", "n": 1,
        "seed_prev": [0.0], "seed_cur": [1.0], "steps": 10,
    },
    "semidiscrete": {
        "kind": "semidiscrete", "n": 2,
        "seed_prev": [-2.0, 2.0], "seed_cur": [-1.7, 2.36],
        "chain_edges": 2, "tau_duration": 0.1, "tau_step": 1e-3,
    },
    "verify": {"kind": "verify-all", "n": 3},
}


def _apply_overrides(sc: Scenario, args) -> Scenario:
    updates = {}
    if args.out_dir is not None:
        updates["out_dir"] = args.out_dir
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.tolerance_scale is not None:
        updates["tolerance_scale"] = args.tolerance_scale
    if args.format is not None:
        updates["format"] = args.format
    return dataclasses.replace(sc, **updates) if updates else sc


def _finish(report: VerificationReport) -> int:
    for entry in report.entries:
        mark = "PASS" if entry.passed else "FAIL"
        tol = "---" if entry.tolerance is None else f"{entry.tolerance:.2e}"
        print(f"{mark}  {entry.name:40s} residual={entry.residual: .6e}  tolerance={tol}")
    print(f"{report.n_passed}/{report.total} checks passed")
    return 0 if report.all_passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cmhier",
        description="Calogero-Moser hierarchy simulations and identity verification",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=None, help="override the output directory")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--tolerance-scale", type=float, default=None,
                        help="multiply every check tolerance")
    common.add_argument("--format", choices=["csv", "json-lines"], default=None,
                        help="trajectory file format")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run a scenario file")
    p_run.add_argument("config", help="path to a scenario file")
    p_verify = sub.add_parser("verify", parents=[common], help="run the verification suite")
    p_verify.add_argument("config", help="path to a scenario file (kind verify-all)")
    p_demo = sub.add_parser("demo", parents=[common], help="run a bundled demo scenario")
    p_demo.add_argument("name", choices=sorted(DEMOS), help="demo name")
    args = parser.parse_args(argv)

    try:
        if args.command in ("run", "verify"):
            sc = parse_scenario(args.config)
            if args.command == "verify" and sc.kind != "verify-all":
                raise ScenarioError("the verify command needs a scenario of kind 'verify-all'")
        else:
            sc = scenario_from_dict(dict(DEMOS[args.name]))
        sc = _apply_overrides(sc, args)
        paths, report = run_scenario(sc)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    for path in paths:
        print(f"wrote {path}")
    return _finish(report)


if __name__ == "__main__":
    sys.exit(main())
