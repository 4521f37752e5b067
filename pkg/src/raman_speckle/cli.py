"""Command-line entry point: ``raman-speckle <command> ...``.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O or file-format
error, 4 fit non-convergence (only with ``--strict``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import fstk, pipeline
from .config import ConfigError, LoadedConfig, load_config, with_overrides
from .simulate import ResourceLimitError, run_sequence

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FIT = 0, 2, 3, 4
NUM = "%.10g"

log = logging.getLogger("raman_speckle")


class FitFailure(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return NUM % x
    return str(x)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".part")
    try:
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return vals[0], vals[1]


def _load(args) -> LoadedConfig:
    loaded = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["sim.seed"] = args.seed
    if args.frames is not None:
        over["sim.n_frames"] = args.frames
    return with_overrides(loaded, **over) if over else loaded


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def _stack_summary(name: str, stack: an.FrameStack) -> str:
    m = an.mean_image(stack)
    iy, ix = np.unravel_index(np.argmax(m), m.shape)
    cx, cy = stack.center
    px, py = (ix - cx) * stack.pitch * 1e3, (iy - cy) * stack.pitch * 1e3
    total = float(stack.frames.sum(dtype=np.float64))
    return (f"{name}: {len(stack)} frames {stack.shape[1]}x{stack.shape[0]}, "
            f"total counts {total:.6g}, mean-image peak at ({px:.3f}, {py:.3f}) mrad")


def cmd_simulate(args) -> int:
    loaded = _load(args)
    out = _outdir(args)
    stokes, anti, bg = run_sequence(loaded.experiment, loaded.n_frames, args.threads)
    stacks = {"stokes": stokes, "antistokes": anti, "background": bg}
    fstk.write_many({out / f"{k}.fstk": v for k, v in stacks.items()})
    for k, v in stacks.items():
        print(_stack_summary(k, v))
    print(f"config_hash {loaded.experiment.config_hash}")
    return EXIT_OK


def _sweep_rows(res: pipeline.RateSweep, rate_col: str, extra_cols=()):
    header = ["theta_mrad", rate_col, "sigma_" + rate_col, "converged", *extra_cols]
    rows = [header]
    for k, th in enumerate(res.theta_mrad):
        row = [float(th), float(res.rate_per_us[k]), float(res.sigma_per_us[k]), bool(res.converged[k])]
        row += [float(res.extra[c][k]) for c in extra_cols]
        rows.append(row)
    return rows


def cmd_decay_sweep(args) -> int:
    loaded = _load(args)
    out = _outdir(args)
    res = pipeline.decay_sweep(loaded.experiment, loaded.n_frames, args.t_store, args.angles,
                               args.threads, deblur=not args.no_deblur, weighted=not args.unweighted)
    rows = _sweep_rows(res, "gamma_per_us")
    if res.fit is not None:
        rows.append(["D_cm2_s", res.fit["D_cm2_s"], res.fit.sigma("D_cm2_s"), True])
    else:
        rows.append(["D_cm2_s", float("nan"), float("nan"), False])
    _write_text(out / "decay_sweep.csv", _csv_text(rows))
    _write_text(out / "decay_intensity.csv", _csv_text(_intensity_rows(res, "t_store_us")))
    if res.fit is not None:
        print(f"D = {res.fit['D_cm2_s']:.6g} +- {res.fit.sigma('D_cm2_s'):.3g} cm^2/s "
              f"from {int(res.converged.sum())}/{res.converged.size} angles")
    else:
        print("D could not be determined: fewer than 3 resolved angles")
    if args.strict and not (res.all_converged and res.fit is not None):
        raise FitFailure("one or more decay fits did not converge")
    return EXIT_OK


def _intensity_rows(res: pipeline.RateSweep, tname: str):
    rows = [[tname] + [f"I_{_fmt(float(t))}mrad" for t in res.theta_mrad]]
    for i, t in enumerate(res.times_us):
        rows.append([float(t)] + [float(v) for v in res.intensities[i]])
    return rows


def cmd_growth_sweep(args) -> int:
    loaded = _load(args)
    out = _outdir(args)
    res = pipeline.growth_sweep(loaded.experiment, loaded.n_frames, args.t_write, args.angles, args.threads)
    rows = _sweep_rows(res, "kappa_per_us", ("kappa_plane_wave_per_us",))
    _write_text(out / "growth_sweep.csv", _csv_text(rows))
    _write_text(out / "growth_intensity.csv", _csv_text(_intensity_rows(res, "t_write_us")))
    for th, k, s in zip(res.theta_mrad, res.rate_per_us, res.sigma_per_us):
        print(f"theta {th:.3g} mrad: kappa = {k:.6g} +- {s:.3g} /us")
    if args.strict and not res.all_converged:
        raise FitFailure("one or more growth fits did not converge")
    return EXIT_OK


def _map_rows(cmap: an.CorrelationMap):
    ax, ay = cmap.angle_axes()
    rows = [["theta_y_mrad/theta_x_mrad"] + [float(x * 1e3) for x in ax]]
    for j, y in enumerate(ay):
        rows.append([float(y * 1e3)] + [float(v) for v in cmap.values[j]])
    return rows


def cmd_correlations(args) -> int:
    stokes = fstk.read_stack(args.stokes)
    anti = fstk.read_stack(args.antistokes)
    bg = fstk.read_stack(args.background) if args.background else None
    out = _outdir(args)
    ref = (args.ref[0] * 1e-3, args.ref[1] * 1e-3)
    summ = pipeline.analyze_correlations(stokes, anti, ref, bg, min_frames=args.min_frames)
    _write_text(out / "c_ss.csv", _csv_text(_map_rows(summ.c_ss)))
    _write_text(out / "c_as.csv", _csv_text(_map_rows(summ.c_as)))
    _write_text(out / "c_aa.csv", _csv_text(_map_rows(summ.c_aa)))
    rows = [["quantity", "value", "sigma", "unit"]] + [list(r) for r in summ.rows()]
    _write_text(out / "correlations_summary.csv", _csv_text(rows))
    for q, v, s, u in summ.rows():
        print(f"{q} = {v:.6g} +- {s:.3g} {u}")
    fits = (summ.stokes_w_avg, summ.stokes_w_C, summ.anti_w_avg, summ.anti_w_C, summ.conjugate_peak)
    if args.strict and not all(f.converged for f in fits):
        raise FitFailure("one or more correlation fits did not converge")
    return EXIT_OK


def cmd_info(args) -> int:
    for p in args.paths:
        h = fstk.read_header(p)
        print(json.dumps({"path": str(p), **h}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="raman-speckle", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def sim_args(p):
        p.add_argument("--config", required=True, help="YAML experiment document")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override sim.seed")
        p.add_argument("--frames", type=int, help="override sim.n_frames")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--strict", action="store_true", help="exit 4 on any non-converged fit")

    p = sub.add_parser("simulate", help="simulate Stokes, anti-Stokes and background stacks")
    sim_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decay-sweep", help="decay rate vs angle over storage times, then D")
    sim_args(p)
    p.add_argument("--t-store", type=_float_list, default=list(pipeline.DEFAULT_T_STORE_US), help="us, comma list")
    p.add_argument("--angles", type=_float_list, default=list(pipeline.DEFAULT_DECAY_ANGLES_MRAD),
                   help="mrad, comma list")
    p.add_argument("--no-deblur", action="store_true", help="skip read-beam deconvolution")
    p.add_argument("--unweighted", action="store_true", help="unweighted quadratic fit of gamma(theta)")
    p.set_defaults(func=cmd_decay_sweep)

    p = sub.add_parser("growth-sweep", help="growth rate vs angle over write times")
    sim_args(p)
    p.add_argument("--t-write", type=_float_list, default=list(pipeline.DEFAULT_T_WRITE_US), help="us, comma list")
    p.add_argument("--angles", type=_float_list, default=list(pipeline.DEFAULT_GROWTH_ANGLES_MRAD),
                   help="mrad, comma list")
    p.set_defaults(func=cmd_growth_sweep)

    p = sub.add_parser("correlations", help="correlation maps, widths and mode count")
    p.add_argument("--stokes", required=True)
    p.add_argument("--antistokes", required=True)
    p.add_argument("--background", help="background stack to subtract")
    p.add_argument("--ref", type=_pair, required=True, help="reference direction 'x,y' in mrad")
    p.add_argument("--out", required=True)
    p.add_argument("--min-frames", type=int, default=1000)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_correlations)

    p = sub.add_parser("info", help="print frame-stack headers as JSON")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_info)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except fstk.FrameStackFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ResourceLimitError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FitFailure as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
