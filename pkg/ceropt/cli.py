"""
Command-line front end.

    ceropt optimize       solve the contact-implicit problem, write solution artifacts
    ceropt simulate       roll out stored controls under a stored schedule
    ceropt track          hybrid LQR tracking of a stored reference
    ceropt extract-modes  read a mode schedule off a trajectory CSV
    ceropt check          run the property battery

Exit codes: 0 ok, 1 solver or simulation failure, 2 configuration or input error.
The log level comes from the CEROPT_LOG environment variable.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from ceropt import artifacts
from ceropt.__version__ import __version__
from ceropt.checks import checks_frame, format_table, run_checks
from ceropt.config import ConfigError, ExperimentConfig, load_config
from ceropt.constants import LOG_ENV_VAR, MODE_SPEED_EPS, MODE_TORQUE_EPS, STATE_LABELS
from ceropt.lqr import (
    Reference,
    RiccatiDivergenceError,
    open_loop,
    riccati_sweep,
    track,
    tracking_summary,
)
from ceropt.modes import ClutchPattern, ModeSchedule, ScheduleError, extract_schedule, relative_speeds_of
from ceropt.plant import ModelInputError
from ceropt.simulator import SimulationError, node_deviation, rollout
from ceropt.solver import SolverError, solve_homotopy, solve_multistart
from ceropt.transcription import TranscriptionError, build_problem
from ceropt.utils.plot_data import (
    ZETA_LABELS,
    clutch_torque_frame,
    controls_frame,
    rollout_frame,
    tracking_frame,
    trajectory_frame,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def configure_logging() -> int:
    raw = os.environ.get(LOG_ENV_VAR, "WARNING").strip()
    if raw.lstrip("-").isdigit():
        level = int(raw)
    else:
        level = logging.getLevelName(raw.upper())
        if not isinstance(level, int):
            level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)
    return level


def _eps_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got '{text}'") from None


def _overrides(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    if getattr(args, "eps_schedule", None) is not None:
        overrides["solver"] = {"eps_schedule": args.eps_schedule}
    if getattr(args, "steps", None) is not None:
        overrides["transcription"] = {"n": args.steps}
    return overrides


def _load(args) -> ExperimentConfig:
    return load_config(args.config, scenario=getattr(args, "scenario", None), overrides=_overrides(args))


def _path(config: ExperimentConfig, name: str) -> str:
    return os.path.join(config.out, name)


def _require(path: str | None, what: str) -> str:
    if path is None or not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


# ------------------------------------------------------------------
# Commands

def cmd_optimize(args) -> int:
    config = _load(args)
    problem = build_problem(config.plant, config.transcription, config.schedule)

    if args.multistart > 1:
        seeds = range(config.seed, config.seed + args.multistart)
        solution, report = solve_multistart(problem, seeds, options=config.solver)
    else:
        solution, report = solve_homotopy(problem, options=config.solver, seed=config.seed)

    traj = problem.unpack(solution.z)
    schedule = config.schedule or problem.extract_schedule(solution.z)
    frame = trajectory_frame(config.plant, traj)
    h, seed = config.hash, config.seed

    artifacts.write_json(_path(config, artifacts.CONFIG_FILE), config.to_dict(), h, seed)
    artifacts.write_json(_path(config, artifacts.SOLUTION_FILE),
                         artifacts.solution_payload(solution, report.final_epsilon), h, seed)
    artifacts.write_csv(_path(config, artifacts.TRAJECTORY_FILE), frame, h, seed, "trajectory")
    artifacts.write_csv(_path(config, artifacts.CONTROLS_FILE), controls_frame(traj), h, seed, "controls")
    artifacts.write_csv(_path(config, artifacts.CLUTCH_FILE), clutch_torque_frame(traj, schedule), h, seed, "clutch")
    artifacts.write_schedule(_path(config, artifacts.SCHEDULE_FILE), schedule, h, seed)
    artifacts.write_report(
        _path(config, artifacts.REPORT_FILE), report, h, seed,
        final_ee_speed=float(frame["v_ee"].iloc[-1]),
        schedule=str(schedule),
    )

    print(f"[{'✔' if report.converged else '✘'}] {report.status.value}: objective {report.objective:.6g}, "
          f"final |v_EE| {frame['v_ee'].iloc[-1]:.4g} m/s, schedule {schedule}")
    print(f"[✔] Artifacts saved to {config.out}")
    if not report.converged:
        logger.error("optimization did not converge: %s (artifacts flagged partial)", report.message)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args)
    T = config.transcription.T
    if args.schedule is not None:
        schedule = artifacts.read_schedule(_require(args.schedule, "schedule file"))
    else:
        schedule = config.schedule or ModeSchedule.constant(ClutchPattern.disengaged(), T)
    controls = None
    if args.controls is not None:
        controls = artifacts.read_controls(_require(args.controls, "controls file"), n=config.transcription.n)

    result = rollout(config.plant, config.transcription.x0, controls, schedule,
                     sample_dt=args.sample_dt or config.transcription.delta)
    path = artifacts.write_csv(_path(config, artifacts.ROLLOUT_FILE), rollout_frame(config.plant, result),
                               config.hash, config.seed, "rollout")
    print(f"[✔] Rollout saved to {path} ({len(result)} samples, {len(result.impulses)} switches)")

    if args.trajectory is not None:
        df, _ = artifacts.read_csv(_require(args.trajectory, "trajectory file"))
        gap = node_deviation(result, df["t"].to_numpy(), df[STATE_LABELS].to_numpy())
        print(f"[✔] max link-angle deviation from the transcription: {gap:.4g} rad")
    return EXIT_OK


def cmd_track(args) -> int:
    config = _load(args)
    source = args.reference or config.out
    schedule = artifacts.read_schedule(_require(os.path.join(source, artifacts.SCHEDULE_FILE), "schedule file"))
    controls = artifacts.read_controls(_require(os.path.join(source, artifacts.CONTROLS_FILE), "controls file"),
                                      n=config.transcription.n)

    sample_dt = config.transcription.delta
    reference = Reference.from_controls(config.plant, config.transcription.x0, controls, schedule,
                                        sample_dt=sample_dt)
    gains = riccati_sweep(config.plant, reference, options=config.lqr)

    x0 = reference.x0 + config.perturbation_vector()
    closed = track(config.plant, x0, reference, gains, variant=config.lqr["feedback"], sample_dt=sample_dt)
    opened = open_loop(config.plant, x0, reference, sample_dt=sample_dt)
    summary = tracking_summary(closed, reference, opened)

    h, seed = config.hash, config.seed
    artifacts.write_csv(_path(config, artifacts.TRACKING_FILE), tracking_frame(closed, reference, opened), h, seed,
                        "tracking")
    artifacts.write_gains(_path(config, artifacts.GAINS_FILE), gains, h, seed)
    artifacts.write_json(_path(config, artifacts.TRACKING_SUMMARY_FILE),
                         {**summary, "perturbation": config.perturbation}, h, seed)

    print(f"[✔] tracking error: max {summary['max_error']:.4g}, final {summary['final_error']:.4g} "
          f"(open loop: final {summary['open_loop_final_error']:.4g})")
    print(f"[✔] Tracking artifacts saved to {config.out}")
    return EXIT_OK


def cmd_extract_modes(args) -> int:
    config = _load(args)
    path = args.trajectory or os.path.join(config.out, artifacts.TRAJECTORY_FILE)
    df, _ = artifacts.read_csv(_require(path, "trajectory file"))
    missing = [c for c in ["t", *STATE_LABELS, *ZETA_LABELS] if c not in df.columns]
    if missing:
        raise artifacts.ArtifactError(f"{path} lacks columns {missing}")

    times = df["t"].to_numpy()
    zeta = df[ZETA_LABELS].to_numpy()[1:]
    phi = relative_speeds_of(df[STATE_LABELS].to_numpy()[1:, 6:10])
    schedule = extract_schedule(zeta, phi, float(times[1] - times[0]), args.torque_eps, args.speed_eps)

    out = artifacts.write_schedule(_path(config, artifacts.SCHEDULE_FILE), schedule, config.hash, config.seed)
    print(f"[✔] {schedule}")
    print(f"[✔] Schedule saved to {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    config = _load(args)
    results = run_checks(config.plant, config.transcription, seed=config.seed)
    print(format_table(results))
    artifacts.write_csv(_path(config, artifacts.CHECKS_FILE), checks_frame(results), config.hash, config.seed,
                        "checks")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"[✘] {len(failed)} of {len(results)} checks failed: {failed}")
        return EXIT_FAILURE
    print(f"[✔] all {len(results)} checks passed")
    return EXIT_OK


# ------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ceropt", description="Clutched-elastic robot trajectory optimization")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--scenario", help="bundled scenario name")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")
        return p

    p = common(sub.add_parser("optimize", help="solve the contact-implicit problem"))
    p.add_argument("--eps-schedule", type=_eps_list, help="comma-separated relaxation levels")
    p.add_argument("--steps", type=int, help="number of time steps n")
    p.add_argument("--multistart", type=int, default=1, help="independent seeded homotopies")
    p.set_defaults(func=cmd_optimize)

    p = common(sub.add_parser("simulate", help="roll out stored controls"))
    p.add_argument("--schedule", help="schedule JSON")
    p.add_argument("--controls", help="controls CSV")
    p.add_argument("--trajectory", help="transcription trajectory CSV to compare against")
    p.add_argument("--steps", type=int, help="number of time steps n")
    p.add_argument("--sample-dt", type=float, help="output sampling period [s]")
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("track", help="hybrid LQR tracking of a stored reference"))
    p.add_argument("--reference", help="directory holding schedule.json and controls.csv (default: --out)")
    p.add_argument("--steps", type=int, help="number of time steps n")
    p.set_defaults(func=cmd_track)

    p = common(sub.add_parser("extract-modes", help="mode schedule from a trajectory CSV"))
    p.add_argument("--trajectory", help="trajectory CSV (default: <out>/trajectory.csv)")
    p.add_argument("--torque-eps", type=float, default=MODE_TORQUE_EPS)
    p.add_argument("--speed-eps", type=float, default=MODE_SPEED_EPS)
    p.set_defaults(func=cmd_extract_modes)

    p = common(sub.add_parser("check", help="run the property battery"))
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SimulationError, RiccatiDivergenceError, SolverError) as e:
        logger.error("%s", e)
        print(f"[✘] {e}", file=sys.stderr)
        return EXIT_FAILURE
    # any other ValueError comes from inputs the config or artifacts let through
    except (ConfigError, artifacts.ArtifactError, ScheduleError, TranscriptionError, ModelInputError,
            ValueError) as e:
        logger.error("%s", e)
        print(f"[✘] {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
