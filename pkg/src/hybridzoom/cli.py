"""Command-line front end: ``fuse``, ``simulate``, ``bench`` and ``bench-pair``.

Exit codes: 0 success, 2 I/O or decode failure, 3 invalid config or scene,
4 metadata or dimension inconsistency, 5 fusion skipped (W copied through).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import statistics
import sys
from pathlib import Path

from . import io as hio
from .coarse_align import CameraMeta
from .flow import write_flo
from .imaging import InvalidInputError
from .pipeline import ConfigError, PipelineConfig, StageTimings, run_pipeline

log = logging.getLogger("hybridzoom")

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_META = 4
EXIT_SKIPPED = 5


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def load_config(path, threads=None) -> PipelineConfig:
    if path is None:
        cfg = PipelineConfig()
    else:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as e:
            raise CliError(EXIT_IO, f"cannot read config: {e}") from None
        except json.JSONDecodeError as e:
            raise CliError(EXIT_CONFIG, f"{path}: invalid JSON: {e}") from None
        try:
            cfg = PipelineConfig.from_dict(raw)
        except InvalidInputError as e:
            raise CliError(EXIT_CONFIG, f"{path}: {e}") from None
    if threads is not None:
        try:
            cfg = dataclasses.replace(cfg, threads=threads)
        except ConfigError as e:
            raise CliError(EXIT_CONFIG, str(e)) from None
    return cfg


def load_meta(path) -> CameraMeta:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot read metadata: {e}") from None
    except json.JSONDecodeError as e:
        raise CliError(EXIT_META, f"{path}: invalid JSON: {e}") from None
    try:
        return CameraMeta.from_dict(raw)
    except KeyError as e:
        raise CliError(EXIT_META, f"{path}: missing field {e}") from None
    except (TypeError, ValueError) as e:
        raise CliError(EXIT_META, f"{path}: {e}") from None


def load_image(path):
    try:
        return hio.read_image(path)
    except (OSError, hio.ImageReadError) as e:
        raise CliError(EXIT_IO, str(e)) from None


def _write(fn, path, *args):
    try:
        fn(path, *args)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write {path}: {e}") from None


def _emit_json(obj, dest):
    """``dest`` is a path, ``-`` for stdout, or None."""
    if dest is None:
        return
    if dest == "-":
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        _write(hio.write_json, dest, obj)


def write_dumps(dump_dir, result):
    out = Path(dump_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot create {out}: {e}") from None
    inter = result.intermediates
    for name in ("src", "ref", "ref_warped", "fusion", "blended"):
        if name in inter:
            _write(hio.write_png16, out / f"{name}.png", inter[name])
    for name in ("m_occlusion", "m_defocus", "m_flow", "m_reject", "m_blend"):
        if name in inter:
            _write(hio.write_mask_png, out / f"{name}.png", inter[name])
    for name in ("flow_fwd", "flow_bwd"):
        if name in inter:
            _write(write_flo, out / f"{name}.flo", inter[name])


def _run_checked(w_img, t_img, meta, cfg):
    try:
        return run_pipeline(w_img, t_img, meta, cfg)
    except ConfigError as e:
        raise CliError(EXIT_CONFIG, str(e)) from None
    except InvalidInputError as e:
        # MetadataError and any size inconsistency found deeper in the stages
        raise CliError(EXIT_META, str(e)) from None


def cmd_fuse(args) -> int:
    cfg = load_config(args.config, args.threads)
    if args.dump_dir is not None and not cfg.dump_intermediates:
        cfg = dataclasses.replace(cfg, dump_intermediates=True)
    meta = load_meta(args.meta)
    w_img = load_image(args.wide)
    t_img = load_image(args.tele)
    result = _run_checked(w_img, t_img, meta, cfg)
    _write(hio.write_png16, args.out, result.output)
    if args.dump_dir is not None and not result.skipped:
        write_dumps(args.dump_dir, result)
    report = {
        "timings": result.timings.to_dict(),
        "skipped": result.skipped,
        "translation": {"dx": result.translation.dx, "dy": result.translation.dy,
                        "matches": result.translation.n_matches},
    }
    _emit_json(report, args.timings_json)
    if result.skipped:
        log.warning("fusion skipped; wrote W unchanged to %s", args.out)
        return EXIT_SKIPPED
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .rigsim import save_pair, scene_from_dict, synthesize_pair

    try:
        with open(args.scene) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot read scene: {e}") from None
    except json.JSONDecodeError as e:
        raise CliError(EXIT_CONFIG, f"{args.scene}: invalid JSON: {e}") from None
    try:
        scene = scene_from_dict(raw)
        w_full, t_img, meta, labels = synthesize_pair(scene)
    except (InvalidInputError, KeyError, TypeError, ValueError) as e:
        raise CliError(EXIT_CONFIG, f"{args.scene}: {e}") from None
    try:
        save_pair(args.out, w_full, t_img, meta, labels)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write pair: {e}") from None
    return EXIT_OK


def _warm_up(cfg):
    """Load the compiled kernels on a tiny pair so the first timed run is not penalized."""
    from .rigsim import benchmark_pair

    w, t, meta = benchmark_pair(256, 192, 2, seed=0)
    run_pipeline(w, t, meta, cfg)


def median_timings(runs):
    return {k: statistics.median(r[k] for r in runs) for k in StageTimings.STAGES + ("total",)}


def cmd_bench(args) -> int:
    cfg = load_config(args.config, args.threads)
    if args.repeats < 1:
        raise CliError(EXIT_CONFIG, "--repeats must be >= 1")
    pair = Path(args.pair_dir)
    meta = load_meta(pair / "meta.json")
    w_img = load_image(pair / "wide.png")
    t_img = load_image(pair / "tele.png")
    if not args.no_warmup:
        _warm_up(cfg)
    runs = []
    skipped = False
    for i in range(args.repeats):
        result = _run_checked(w_img, t_img, meta, cfg)
        skipped |= result.skipped
        runs.append(result.timings.to_dict())
        log.info("run %d: %.3f s", i + 1, runs[-1]["total"])
    th, tw = t_img.shape[:2]
    report = {
        "pair": str(pair),
        "tele_size": [tw, th],
        "repeats": args.repeats,
        "threads": cfg.threads,
        "skipped": skipped,
        "median": median_timings(runs),
        "runs": runs,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.timings_json not in (None, "-"):
        _emit_json(report, args.timings_json)
    return EXIT_OK


def cmd_bench_pair(args) -> int:
    from .rigsim import benchmark_pair

    try:
        w, t, meta = benchmark_pair(args.width, args.height, args.focal_ratio, args.seed)
    except InvalidInputError as e:
        raise CliError(EXIT_CONFIG, str(e)) from None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot create {out}: {e}") from None
    _write(hio.write_png16, out / "wide.png", w)
    _write(hio.write_png16, out / "tele.png", t)
    _write(hio.write_json, out / "meta.json", meta.to_dict())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hybridzoom", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fuse", help="fuse a W/T pair into the W frame")
    f.add_argument("--wide", required=True, help="wide image (8/16-bit PNG)")
    f.add_argument("--tele", required=True, help="tele image (8/16-bit PNG)")
    f.add_argument("--meta", required=True, help="metadata JSON: focal_ratio, tele_fov_rect, focus_roi")
    f.add_argument("--config", help="pipeline config JSON (defaults used when omitted)")
    f.add_argument("--out", required=True, help="output 16-bit PNG")
    f.add_argument("--dump-dir", help="write intermediates (images, masks, .flo) here")
    f.add_argument("--timings-json", help="write stage timings JSON to this path ('-' for stdout)")
    f.add_argument("--threads", type=int, help="kernel thread count")
    f.set_defaults(func=cmd_fuse)

    s = sub.add_parser("simulate", help="render a synthetic W/T pair with labels")
    s.add_argument("--scene", required=True, help="scene JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="per-stage latency, median over repeats")
    b.add_argument("--pair-dir", required=True, help="directory with wide.png, tele.png, meta.json")
    b.add_argument("--config")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--threads", type=int)
    b.add_argument("--timings-json", help="also write the report to this path")
    b.add_argument("--no-warmup", action="store_true", help="skip the untimed warm-up run")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("bench-pair", help="write a synthetic aligned pair for benchmarking")
    g.add_argument("--out", required=True)
    g.add_argument("--width", type=int, default=4032)
    g.add_argument("--height", type=int, default=3024)
    g.add_argument("--focal-ratio", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_bench_pair)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"hybridzoom: error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
