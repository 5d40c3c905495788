"""Command-line interface.

Subcommands: synth, match, refine, densify, eval, bench.

Exit codes: 0 success, 1 numerical failure, 2 invalid configuration,
3 I/O error, 4 malformed input file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .densify import coverage_report, densify_field
from .errors import FormatError, HomopatchError, InvalidConfig
from .evaluate import (
    AUC_THRESHOLDS,
    PCK_THRESHOLDS,
    bench_table,
    corner_auc,
    epe_pck,
    load_oracle,
    match_epe,
    run_benchmark,
)
from .featmap import read_featmap, write_featmap
from .geometry import Homography
from .matcher import DEFAULT_THETA_C, coarse_match, load_homographies, refine_matches, save_homographies
from .matchset import MatchSet
from .refiner import RefinerConfig
from .synth import DEFAULT_CHANNELS, synth_scene

log = logging.getLogger("homopatch")

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG, EXIT_IO, EXIT_FORMAT = 0, 1, 2, 3, 4

SYNTH_FILES = {
    "fine_a": "fine_a.hpfm",
    "fine_b": "fine_b.hpfm",
    "coarse_a": "coarse_a.hpfm",
    "coarse_b": "coarse_b.hpfm",
    "gt": "gt_homography.json",
    "gt_matches": "gt_coarse_matches.txt",
}


def _size(s: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in s.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 256x256, got {s!r}") from None
    return h, w


def _floats(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in s.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _seeds(s: str) -> list[int]:
    """``"0:10"`` (half open range) or ``"1,5,9"``."""
    try:
        if ":" in s:
            a, b = (int(v) for v in s.split(":"))
            return list(range(a, b))
        return [int(v) for v in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {s!r}") from None


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _refiner_config(args) -> RefinerConfig:
    return RefinerConfig(w=args.w, r=args.r, k_iters=args.K, softargmax_temp=args.temp,
                         confidence_floor=args.confidence_floor)


def cmd_synth(args) -> int:
    if not args.out:
        raise InvalidConfig("out", "synth needs an output directory")
    if args.max_disp < 0:
        raise InvalidConfig("max_disp", f"must be >= 0, got {args.max_disp}")
    h, w = args.size
    scene = synth_scene(args.seed, h, w, args.channels, args.max_disp, w=args.w, r=args.r)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_featmap(scene.fine_a, out / SYNTH_FILES["fine_a"])
    write_featmap(scene.fine_b, out / SYNTH_FILES["fine_b"])
    write_featmap(scene.coarse_a, out / SYNTH_FILES["coarse_a"])
    write_featmap(scene.coarse_b, out / SYNTH_FILES["coarse_b"])
    gt = {
        "image_dims": list(scene.image_dims),
        "h_full": scene.h_full.to_dict(),
        "h_fine": scene.h_fine.to_dict(),
        "w": args.w,
        "patches": [
            dict(match_id=int(mid), **hh.to_dict())
            for mid, hh in zip(scene.coarse_matches.match_id, scene.gt_h_per_patch)
        ],
    }
    (out / SYNTH_FILES["gt"]).write_text(json.dumps(gt, indent=1) + "\n")
    scene.coarse_matches.write(out / SYNTH_FILES["gt_matches"])
    log.info("wrote %d files to %s (%d ground-truth coarse matches)",
             len(SYNTH_FILES), out, len(scene.coarse_matches))
    return EXIT_OK


def cmd_match(args) -> int:
    matches, _ = coarse_match(read_featmap(args.coarse_a), read_featmap(args.coarse_b), args.theta_c)
    _emit(matches.to_text(), args.out)
    log.info("%d coarse matches (theta_c=%g)", len(matches), args.theta_c)
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _refiner_config(args)
    coarse = MatchSet.read(args.coarse)
    res = refine_matches(read_featmap(args.fine_a), read_featmap(args.fine_b), coarse, cfg,
                         threads=args.threads)
    _emit(res.fine.to_text(), args.out)
    if args.homographies:
        save_homographies(args.homographies, res.homographies, res.patch_meta, coarse.image_dims)
    n_bad = sum(m.degenerate for m in res.patch_meta)
    log.info("refined %d patches (%d discarded at borders, %d degenerate)",
             len(res.patch_meta), res.n_discarded, n_bad)
    return EXIT_OK


def cmd_densify(args) -> int:
    homs, meta, dims = load_homographies(args.homographies)
    field = densify_field(homs, meta, args.re, dims)
    dense = field.to_matchset()
    _emit(dense.to_text(), args.out)
    if args.coverage:
        centers = [(2.0 * m.center_a[0], 2.0 * m.center_a[1]) for m in meta]
        rep = coverage_report(dense, dims, re=args.re, patch_centers=centers)
        Path(args.coverage).write_text(json.dumps(rep, indent=1, sort_keys=True) + "\n")
    log.info("%d dense matches from %d patches (%d projections dropped)", len(dense), len(meta), field.n_dropped)
    return EXIT_OK


def _patch_auc(est_path, gt_path, thresholds):
    homs, meta, _ = load_homographies(est_path)
    doc = json.loads(Path(gt_path).read_text())
    if "patches" not in doc:
        raise FormatError(f"{gt_path}: no per-patch ground truth for corner AUC")
    gt = {int(p["match_id"]): Homography.from_dict(p) for p in doc["patches"]}
    est, ref = [], []
    for h, m in zip(homs, meta):
        if m.match_id in gt:
            # fine-level patch frame scaled to original-resolution pixels
            s = np.diag([2.0, 2.0, 1.0])
            si = np.diag([0.5, 0.5, 1.0])
            est.append(Homography(s @ h.m @ si))
            ref.append(Homography(s @ gt[m.match_id].m @ si))
    if not est:
        return {float(t): 0.0 for t in thresholds}
    w = meta[0].w
    return corner_auc(est, ref, (2 * (w - 1) + 1, 2 * (w - 1) + 1), thresholds)


def cmd_eval(args) -> int:
    matches = MatchSet.read(args.matches)
    oracle = load_oracle(args.gt)
    report = epe_pck(matches, oracle, args.thresholds)
    if args.homographies:
        report.auc = _patch_auc(args.homographies, args.gt, args.auc_thresholds)
    _emit(report.to_json() + "\n", args.out)
    if args.epe_dump:
        epe = match_epe(matches, oracle)
        lines = ["x,y,epe"] + [f"{x:.6f},{y:.6f},{e:.6f}" for (x, y), e in zip(matches.pa, epe)]
        Path(args.epe_dump).write_text("\n".join(lines) + "\n")
    log.info("evaluated %d matches, mean EPE %s", report.n_matches, report.mean_epe)
    return EXIT_OK


def cmd_bench(args) -> int:
    configs = [c for c in args.configs.split(",") if c.strip()]
    h, w = args.size
    rows = run_benchmark(args.seeds, configs, size=(h, w), channels=args.channels,
                         max_corner_disp=args.max_disp, theta_c=args.theta_c, re=args.re,
                         threads=args.threads)
    _emit(bench_table(rows), args.out)
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output path (stdout when omitted, where applicable)")
    p.add_argument("--quiet", action="store_true", help="no log output on stderr")
    p.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
    p.add_argument("--config", help="key=value file overriding defaults; command line wins")


def _refiner_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w", type=int, default=9, help="patch size (odd)")
    p.add_argument("--r", type=int, default=1, help="correlation search radius")
    p.add_argument("--K", type=int, default=3, help="refinement iterations")
    p.add_argument("--temp", type=float, default=1.0, help="soft-argmax temperature")
    p.add_argument("--confidence-floor", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homopatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic scene with ground truth")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_size, default=(256, 256), help="original image HxW")
    p.add_argument("--channels", type=int, default=DEFAULT_CHANNELS)
    p.add_argument("--max-disp", type=float, default=2.0, help="max corner displacement (fine px)")
    p.add_argument("--w", type=int, default=9, help="patch size used to validate --max-disp")
    p.add_argument("--r", type=int, default=1, help="search radius used to validate --max-disp")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("match", help="coarse dual-softmax MNN matching")
    _common(p)
    p.add_argument("--coarse-a", required=True)
    p.add_argument("--coarse-b", required=True)
    p.add_argument("--theta-c", type=float, default=DEFAULT_THETA_C)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("refine", help="homography refinement of coarse matches")
    _common(p)
    p.add_argument("--fine-a", required=True)
    p.add_argument("--fine-b", required=True)
    p.add_argument("--coarse", required=True, help="coarse match file")
    p.add_argument("--homographies", help="write per-patch homographies JSON here")
    _refiner_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("densify", help="dense matches from per-patch homographies")
    _common(p)
    p.add_argument("--homographies", required=True)
    p.add_argument("--re", type=float, default=2.0, help="expansion radius (fine px, multiple of 0.5)")
    p.add_argument("--coverage", help="write a coverage JSON report here")
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("eval", help="EPE / PCK (and optional corner AUC) against ground truth")
    _common(p)
    p.add_argument("--matches", required=True)
    p.add_argument("--gt", required=True, help="ground-truth homography JSON or .npy correspondence field")
    p.add_argument("--thresholds", type=_floats, default=PCK_THRESHOLDS)
    p.add_argument("--homographies", help="estimated patch homographies for corner AUC")
    p.add_argument("--auc-thresholds", type=_floats, default=AUC_THRESHOLDS)
    p.add_argument("--epe-dump", help="write per-match x,y,epe CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="synthetic benchmark over a w/r/K grid")
    _common(p)
    p.add_argument("--configs", default="5/1/1,9/1/3", help="comma-separated w/r/K triplets")
    p.add_argument("--seeds", type=_seeds, default=list(range(10)))
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--channels", type=int, default=DEFAULT_CHANNELS)
    p.add_argument("--max-disp", type=float, default=2.0)
    p.add_argument("--theta-c", type=float, default=DEFAULT_THETA_C)
    p.add_argument("--re", type=float, default=2.0)
    p.set_defaults(func=cmd_bench)
    return parser


def _load_config(path, parser, sub_parser_defaults) -> dict:
    """Parse a ``key=value`` file; keys are long option names (dashes or underscores)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig("config", f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        dest = key.lstrip("-").replace("-", "_")
        if dest not in sub_parser_defaults:
            raise InvalidConfig("config", f"{path}:{lineno}: unknown key {key!r}")
        out[dest] = value
    return out


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="homopatch: %(message)s", stream=sys.stderr, force=True)
    try:
        if args.config:
            sp = _subparser(parser, args.command)
            known = {a.dest for a in sp._actions}
            overrides = _load_config(args.config, parser, known)
            # re-parse so values pass through the option types; explicit flags still win
            argv_list = list(sys.argv[1:] if argv is None else argv)
            prefix = [argv_list[0]] if argv_list else [args.command]
            cfg_args = []
            for dest, value in overrides.items():
                opt = next(a for a in sp._actions if a.dest == dest)
                flag = opt.option_strings[-1]
                if isinstance(opt, argparse._StoreTrueAction):
                    if value.lower() in ("1", "true", "yes"):
                        cfg_args.append(flag)
                else:
                    cfg_args += [flag, value]
            args = parser.parse_args(prefix + cfg_args + argv_list[1:])
        return args.func(args)
    except InvalidConfig as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except FormatError as exc:
        log.error("format error: %s", exc)
        return EXIT_FORMAT
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except HomopatchError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
