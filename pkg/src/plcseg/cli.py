"""Command-line driver.

Subcommands mirror the pipeline stages so each step can be inspected in
isolation: synth, filter, features, segment, fit, corridor, tune, and
pipeline. Exit codes: 0 success, 2 config error, 3 I/O or parse error,
4 no power-line candidates, 5 no segments. PLCSEG_THREADS caps worker
parallelism of the spatial queries.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cloud import FORMAT_ASCII, FORMAT_BINARY, PointCloud, read_cloud, write_cloud
from .config import PipelineConfig
from .errors import (ConfigError, NoCandidatesError, NoSegmentsError,
                     OrientationError, ParseError, PlcsegError)
from .pipeline import STAGES, build_report, execute, write_outputs
from .synthgen import SceneSpec, generate, million_point_scene, three_by_two_scene
from .tuner import ParamGrid, tune

log = logging.getLogger("plcseg")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NO_CANDIDATES = 4
EXIT_NO_SEGMENTS = 5


def _add_common(p: argparse.ArgumentParser, needs_input: bool = True):
    if needs_input:
        p.add_argument("--input", required=True, help="input cloud file")
    p.add_argument("--output-dir", default="plcseg_out",
                   help="directory for result files")
    p.add_argument("--config", help="pipeline config JSON (may hold a 'grid' key)")
    p.add_argument("--seed", type=int, help="override the config random seed")
    p.add_argument("--format", choices=[FORMAT_ASCII, FORMAT_BINARY],
                   default=FORMAT_ASCII, help="input cloud format")
    p.add_argument("--verbose", action="store_true")


def load_config(args) -> tuple[PipelineConfig, ParamGrid | None]:
    grid = None
    if args.config:
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot load config: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        grid_data = data.pop("grid", None)
        if grid_data is not None:
            try:
                grid = ParamGrid.from_dict(grid_data)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid grid: {exc}")
        cfg = PipelineConfig.from_dict(data)
    else:
        cfg = PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg, grid


def _read_input(args) -> PointCloud:
    cloud = read_cloud(args.input, args.format)
    if len(cloud) == 0:
        raise ParseError("input cloud is empty", path=args.input)
    log.info("read %d points from %s", len(cloud), args.input)
    return cloud


def _run_stage(args, until: str) -> int:
    cfg, _ = load_config(args)
    cloud = _read_input(args)
    state = execute(cloud, cfg, until=until)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = build_report(state)
    (out / "report.json").write_text(report.to_json())
    if until == "filter":
        high = cloud.select(np.flatnonzero(cloud.z > state.elevation.cut_z))
        write_cloud(high, out / ("filtered.bin" if args.format == FORMAT_BINARY
                                 else "filtered.xyz"), args.format)
    if until in ("features", "segment", "fit", "corridor") and state.regularized is not None:
        write_cloud(state.regularized, out / "candidates.xyz", FORMAT_ASCII)
        (out / "transform.json").write_text(
            json.dumps(state.transform.to_dict(), indent=2, sort_keys=True) + "\n")
    if until == "corridor":
        write_outputs(state, out)
    elif state.segments:
        ids = np.concatenate([state.segment_full_ids(s) for s in state.segments])
        seg_labels = np.concatenate([
            np.full(len(s), s.segment_id, dtype=np.int64) for s in state.segments])
        write_cloud(PointCloud(cloud.xyz[ids], seg_labels),
                    out / "segments.xyz", FORMAT_ASCII)
    for t in state.timings:
        log.info("stage %-8s %8.1f ms  %d -> %d points", t["name"], t["ms"],
                 t["points_in"], t["points_out"])
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    return _run_stage(args, args.stage)


def cmd_tune(args) -> int:
    cfg, grid = load_config(args)
    if grid is None:
        grid = ParamGrid()
        log.info("no grid in config; using the default grid")
    cloud = _read_input(args)
    result = tune(cloud, grid, cfg)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tune_result.json").write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"best score {result.score:.4f} over {result.evaluated} cells; "
          f"wrote {out / 'tune_result.json'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        try:
            spec = SceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scene spec: {exc}")
    elif args.preset == "3x2":
        spec = three_by_two_scene(seed=args.seed if args.seed is not None else 20240901)
    else:
        spec = million_point_scene(seed=args.seed if args.seed is not None else 7)
    cloud = generate(spec)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_cloud(cloud, out / "scene.bin", FORMAT_BINARY)
    np.savetxt(out / "scene_labels.txt", cloud.labels, fmt="%d")
    (out / "scene_spec.json").write_text(
        json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"generated {len(cloud)} points into {out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plcseg",
        description="Power-line extraction and corridor analysis from xyz clouds")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, until in (("filter", "filter"), ("features", "features"),
                        ("segment", "segment"), ("fit", "fit"),
                        ("corridor", "corridor")):
        p = sub.add_parser(name, help=f"run the pipeline through the {name} stage")
        _add_common(p)
        p.set_defaults(func=lambda a, u=until: _run_stage(a, u))

    p = sub.add_parser("pipeline", help="run the full pipeline")
    _add_common(p)
    p.add_argument("--stage", choices=list(STAGES), default="corridor",
                   help="stop after this stage")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("tune", help="grid-search the pipeline parameters")
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("synth", help="generate a labeled synthetic scene")
    _add_common(p, needs_input=False)
    p.add_argument("--spec", help="SceneSpec JSON file")
    p.add_argument("--preset", choices=["3x2", "benchmark-1m"], default="3x2")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NoCandidatesError, OrientationError) as exc:
        print(f"no candidates: {exc}", file=sys.stderr)
        return EXIT_NO_CANDIDATES
    except NoSegmentsError as exc:
        print(f"no segments: {exc}", file=sys.stderr)
        return EXIT_NO_SEGMENTS
    except PlcsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
