"""Command-line entry point: ``rhcover <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import CoverageError, MissionIncomplete, StaleTable, VerificationFailed
from .milp import export_lp_text
from .mission import COMPLETED, plan_inputs, read_log, run_mission, step_budget, verify_log, write_log
from .planner import CoverageMap, plan_step
from .plot import emit_plot
from .scenario import Scenario, World, parse_scenario, validate, write_scenario
from .visibility import learn_visibility, load_table, save_table



def _portable(s: Scenario) -> Scenario:
    """Same scenario with any mesh path made absolute."""
    if s.object.kind != "mesh":
        return s
    path = Path(s.object.path)
    if not path.is_absolute():
        path = (Path(s.base_dir) / path).resolve()
    return replace(s, object=replace(s.object, path=str(path)))


def _world(path) -> World:
    s = parse_scenario(path)
    return validate(s)


def _table(path, world: World, scenario_path):
    hint = f"run `rhcover precompute-visibility {scenario_path} --out {path}` first"
    try:
        return load_table(path, world.digest, world.grid.dims, world.scenario.visibility.ray_scheme)
    except FileNotFoundError:
        raise StaleTable(f"visibility table {path} does not exist; {hint}") from None
    except StaleTable as exc:
        raise StaleTable(f"{exc}; {hint}") from None


def format_plan(sol) -> str:
    lines = [f"status: {sol.status.value}", f"objective: {sol.objective:.6g}", f"bound: {sol.bound:.6g}"]
    n, k = sol.xi.shape
    for j in range(n):
        lines.append(f"agent {j + 1}:")
        for kk in range(k):
            p = sol.states[j, kk, :3]
            u = sol.controls[j, kk]
            lines.append(
                f"  k={kk + 1} p=({p[0]:.3f}, {p[1]:.3f}, {p[2]:.3f}) "
                f"u=({u[0]:.3f}, {u[1]:.3f}, {u[2]:.3f}) xi={int(sol.xi[j, kk])}"
            )
    if sol.predicted:
        cov = ", ".join(f"facet {t} by agent {a} at k={kk}" for a, t, kk in sol.predicted)
        lines.append(f"predicted coverage: {cov}")
    else:
        lines.append("predicted coverage: none")
    st = sol.stats
    lines.append(
        f"solver: {st.get('backend', '?')} nodes={st.get('nodes', 0)} "
        f"time={st.get('wall_time', 0.0):.2f}s build={st.get('build_time', 0.0):.2f}s "
        f"vars={st.get('n_vars', 0)} binaries={st.get('n_binaries', 0)} rows={st.get('n_constraints', 0)}"
    )
    return "\n".join(lines)


# -- subcommands -----------------------------------------------------------

def cmd_validate(args) -> int:
    w = _world(args.scenario)
    print(f"ok: {len(w.mesh)} facets, {len(w.targets)} targets, {len(w.scenario.agents)} agents, "
          f"grid {'x'.join(map(str, w.grid.dims))}, {len(w.fovs)} configurations, horizon {w.scenario.planner.horizon}")
    print(f"digest: {w.digest.hex()}")
    return 0


def cmd_precompute(args) -> int:
    w = _world(args.scenario)
    t0 = time.perf_counter()
    table = learn_visibility(w.grid, w.mesh, w.gimbal, w.cam, w.scenario.visibility, workers=args.workers)
    save_table(table, args.out)
    print(f"wrote {args.out}: {int(table.rho.sum())} visible (cell, facet) pairs in {time.perf_counter() - t0:.1f}s")
    return 0


def cmd_plan(args) -> int:
    w = _world(args.scenario)
    table = _table(args.table, w, args.scenario)
    inputs = plan_inputs(w, table, w.initial_states(), CoverageMap(len(w.mesh)))
    sol, model, _ = plan_step(inputs, step_budget(w), w.scenario.planner.backend)
    if args.export_lp:
        out = Path(args.lp_dir) / "plan_step0.lp"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(export_lp_text(model))
        print(f"wrote {out}")
    print(format_plan(sol))
    return 0


def cmd_run(args) -> int:
    w = _world(args.scenario)
    table = _table(args.table, w, args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mlog = run_mission(w, table)
    write_log(mlog, out, w.scenario)
    emit_plot(mlog, w, out / "plot.svg")
    # keep the inputs next to the log so `verify` is self-contained
    write_scenario(_portable(w.scenario), out / "scenario.toml")
    if Path(args.table).resolve() != (out / "table.vis").resolve():
        shutil.copyfile(args.table, out / "table.vis")
    covered = len({t for t, _, _ in mlog.coverage})
    print(f"{mlog.status}: {covered}/{len(mlog.targets)} targets covered in {mlog.n_steps} steps "
          f"({mlog.wall_time:.1f}s); {mlog.reason}")
    if mlog.status != COMPLETED:
        raise MissionIncomplete(f"mission ended {mlog.status.lower()}: {mlog.reason}")
    return 0


def cmd_verify(args) -> int:
    d = Path(args.log_dir)
    scen = d / "scenario.toml" if args.scenario is None else Path(args.scenario)
    tab = d / "table.vis" if args.table is None else Path(args.table)
    w = _world(scen)
    table = _table(tab, w, scen)
    mlog = read_log(d)
    report = verify_log(mlog, w, table, rays=args.rays)
    print(report.text())
    if not report.ok:
        failed = report.failed()
        raise VerificationFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rhcover", description="Multi-agent receding-horizon 3D coverage planner.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate-scenario", help="parse and check a scenario file")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("precompute-visibility", help="learn the cell/facet visibility table")
    s.add_argument("scenario")
    s.add_argument("--out", required=True, help="output VIS1 file")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_precompute)

    s = sub.add_parser("plan", help="solve the first planning step and print the plan")
    s.add_argument("scenario")
    s.add_argument("--table", required=True)
    s.add_argument("--export-lp", action="store_true", help="also write plan_step0.lp")
    s.add_argument("--lp-dir", default=".", help="directory for the exported model")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("run", help="run a full mission and write its log")
    s.add_argument("scenario")
    s.add_argument("--table", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("verify", help="re-check a mission log independently")
    s.add_argument("log_dir")
    s.add_argument("--scenario", help="defaults to <log_dir>/scenario.toml")
    s.add_argument("--table", help="defaults to <log_dir>/table.vis")
    s.add_argument("--rays", type=int, default=None, help="rays per coverage record in the exact audit")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CoverageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
