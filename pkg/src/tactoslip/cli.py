"""Command-line entry points: calibrate, detect, simulate, replay, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import report as report_mod
from .archive import ArchiveSource, FrameArchive, PixelFormat, read_archive, write_archive
from .config import CONFIG_ENV_VAR, ConfigFile, RunConfig, load_config
from .detector import DetectionKind, Phase, SensorDetector
from .errors import ArchiveError, TactoslipError
from .fsm import RunReport, run_to_completion
from .sim import LogActuator, PRESETS, Scenario, get_scenario, scenario_from_mapping, simulate

log = logging.getLogger("tactoslip")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ARCHIVE = 3


def _run_overrides(args: argparse.Namespace, cfg: RunConfig) -> RunConfig:
    changes = {}
    for name in ("seed", "K", "N", "tau_d_ini", "timeout_steps"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "no_reverse", False):
        changes["reverse_on_slip"] = False
    if getattr(args, "no_slip_reaction", False):
        changes["slip_reaction"] = False
    return cfg.replace(**changes) if changes else cfg


def _load(args: argparse.Namespace) -> ConfigFile:
    cf = load_config(args.config)
    cf.run = _run_overrides(args, cf.run)
    return cf


def _jsonl(records, stream) -> None:
    for rec in records:
        stream.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_calibrate(args: argparse.Namespace) -> int:
    cf = _load(args)
    archive = read_archive(args.archive)
    need = cf.run.K + 1
    if archive.frame_count < need:
        raise TactoslipError(f"calibration needs {need} frames, archive has {archive.frame_count}")
    dets = [SensorDetector(s + 1, cf.run.detection) for s in range(archive.sensor_count)]
    for step in archive.frames():
        if all(d.phase is not Phase.CALIBRATING for d in dets):
            break
        for det, frame in zip(dets, step):
            det.calibrate_step(frame)
    _jsonl(
        ({"sensor_id": d.sensor_id, "tau_n": d.tau_n, "sample_count": cf.run.K} for d in dets),
        sys.stdout,
    )
    return EXIT_OK


def detect_archive(archive: FrameArchive, cfg: RunConfig):
    """Yield detection events sensor-by-sensor for every step of an archive.

    Each sensor calibrates on its first K + 1 frames, averages the next N
    into a reference and then detects at the initial threshold.  After a
    touch the detector re-references and reports slips from then on.
    """
    dets = [SensorDetector(s + 1, cfg.detection) for s in range(archive.sensor_count)]
    for step in archive.frames():
        for det, frame in zip(dets, step):
            if det.phase is Phase.CALIBRATING:
                det.calibrate_step(frame)
            elif det.phase is Phase.BUILDING_REFERENCE:
                det.build_reference_step(frame)
            else:
                event = det.detect_step(frame, cfg.tau_d_ini)
                if event is not None:
                    yield event
                    if event.kind is DetectionKind.TOUCH:
                        det.rearm_as_slip()
    for det in dets:
        if det.phase is not Phase.ARMED:
            log.warning("sensor %d never armed (phase %s)", det.sensor_id, det.phase.value)


def cmd_detect(args: argparse.Namespace) -> int:
    cf = _load(args)
    archive = read_archive(args.archive)
    _jsonl((ev.to_dict() for ev in detect_archive(archive, cf.run)), sys.stdout)
    sys.stdout.flush()
    return EXIT_OK


def _scenario(args: argparse.Namespace, cf: ConfigFile) -> Scenario:
    if cf.scenario:
        return scenario_from_mapping(cf.scenario, default=args.scenario)
    if args.scenario is None:
        raise TactoslipError("no scenario given (use --scenario or a [scenario] config section)")
    return get_scenario(args.scenario)


def _simulate_one(job: tuple[RunConfig, Scenario, bool]) -> tuple[RunReport, FrameArchive | None]:
    cfg, scenario, record = job
    rep, world = simulate(cfg, scenario, record=record)
    archive = FrameArchive.from_frames(world.recorded, PixelFormat.F32RGB) if record else None
    return rep, archive


def cmd_simulate(args: argparse.Namespace) -> int:
    cf = _load(args)
    scenario = _scenario(args, cf)
    if args.repeat < 1:
        raise TactoslipError("--repeat must be >= 1")
    if args.repeat > 1 and args.out is None:
        raise TactoslipError("--repeat > 1 needs --out DIR")
    seeds = [cf.run.seed + k for k in range(args.repeat)]
    jobs = [(cf.run.replace(seed=s), scenario, args.dump_frames is not None) for s in seeds]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, jobs))
    else:
        results = [_simulate_one(job) for job in jobs]

    for seed, (rep, archive) in zip(seeds, results):
        if args.repeat == 1:
            report_path = Path(args.out) if args.out else None
            events_path = Path(args.events) if args.events else None
            frames_path = Path(args.dump_frames) if args.dump_frames else None
        else:
            outdir = Path(args.out)
            outdir.mkdir(parents=True, exist_ok=True)
            stem = f"{scenario.name}_seed{seed}"
            report_path = outdir / f"{stem}.json"
            events_path = outdir / f"{stem}.events.jsonl" if args.events else None
            frames_path = outdir / f"{stem}.tgf" if args.dump_frames else None
        if report_path is None:
            sys.stdout.write(rep.to_json())
        else:
            report_path.write_text(rep.to_json(), encoding="utf-8")
        if events_path is not None:
            with events_path.open("w", encoding="utf-8") as fh:
                _jsonl(rep.events, fh)
        if frames_path is not None and archive is not None:
            write_archive(archive, frames_path)
        log.info("%s seed %d: %s, %d slips", scenario.name, seed, rep.outcome.value, rep.slip_count)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    cf = _load(args)
    cfg = cf.run
    archive = read_archive(args.archive)
    sink = LogActuator(cfg.start_width_m, cfg.dt, cfg.task_distance_m)
    rep = run_to_completion(cfg, ArchiveSource(archive), sink, scenario=Path(args.archive).stem)
    if args.out:
        Path(args.out).write_text(rep.to_json(), encoding="utf-8")
    else:
        sys.stdout.write(rep.to_json())
    if args.events:
        with open(args.events, "w", encoding="utf-8") as fh:
            _jsonl(rep.events, fh)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    reports = report_mod.load_reports(args.reports)
    rows = report_mod.summarize(reports)
    sys.stdout.write(report_mod.format_table(rows, args.format))
    if args.figures:
        for path in report_mod.write_figures(reports, args.figures):
            log.info("wrote %s", path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactoslip",
        description="Touch/slip detection and adaptive grasp control for vision-based tactile sensors.",
        epilog=f"Default config file: ${CONFIG_ENV_VAR}.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="run config file (INI)")
        p.add_argument("-K", type=int, help="calibration frame count")
        p.add_argument("-N", type=int, help="reference frame count")
        p.add_argument("--tau-d-ini", dest="tau_d_ini", type=float, help="initial detection threshold")

    p = sub.add_parser("calibrate", help="print the noise threshold of each sensor")
    p.add_argument("archive")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="stream detection events as JSON lines")
    p.add_argument("archive")
    common(p)
    p.set_defaults(func=cmd_detect)

    def closed_loop(p: argparse.ArgumentParser) -> None:
        common(p)
        p.add_argument("--seed", type=int)
        p.add_argument("--timeout-steps", dest="timeout_steps", type=int)
        p.add_argument("--no-reverse", action="store_true", help="skip the reverse motion after a slip")
        p.add_argument("--no-slip-reaction", action="store_true", help="log slips but never react")
        p.add_argument("--out", help="run report path (directory with --repeat)")
        p.add_argument("--events", help="write detection events as JSON lines")

    p = sub.add_parser("simulate", help="run the closed loop against the built-in simulator")
    p.add_argument("--scenario", choices=sorted(PRESETS), help="scenario preset")
    p.add_argument("--repeat", type=int, default=1, help="runs with consecutive seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--dump-frames", dest="dump_frames", help="write rendered frames as a TGF1 archive")
    closed_loop(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="drive the controller from a recorded archive")
    p.add_argument("archive")
    closed_loop(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="aggregate run reports into a mean ± std table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--figures", help="directory for PNG figures")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ArchiveError as exc:
        print(f"tactoslip: archive error: {exc}", file=sys.stderr)
        return EXIT_ARCHIVE
    except (TactoslipError, OSError) as exc:
        print(f"tactoslip: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
