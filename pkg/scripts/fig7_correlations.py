"""Stokes/anti-Stokes correlation maps for one reference direction, plus widths and N."""

from pathlib import Path

from _common import parser, write_csv
from raman_speckle import pipeline
from raman_speckle.config import load_config
from raman_speckle.simulate import run_sequence


def _grid_rows(cmap):
    ax, ay = cmap.angle_axes()
    rows = [["theta_y_mrad/theta_x_mrad"] + [float(x * 1e3) for x in ax]]
    rows += [[float(y * 1e3)] + [float(v) for v in cmap.values[j]] for j, y in enumerate(ay)]
    return rows


def main():
    ap = parser(__doc__, "kr_1torr.yaml")
    ap.add_argument("--ref", default="0.9,-1.6", help="reference direction x,y in mrad")
    args = ap.parse_args()
    lc = load_config(args.config)
    rx, ry = (float(v) for v in args.ref.split(","))
    s, a, bg = run_sequence(lc.experiment, args.frames or lc.n_frames, args.threads)
    summ = pipeline.analyze_correlations(s, a, (rx * 1e-3, ry * 1e-3), bg)
    out = Path(args.out)
    write_csv(out / "fig7_c_ss.csv", _grid_rows(summ.c_ss))
    write_csv(out / "fig7_c_as.csv", _grid_rows(summ.c_as))
    write_csv(out / "fig7_summary.csv", [["quantity", "value", "sigma", "unit"], *summ.rows()])
    for q, v, e, u in summ.rows():
        print(f"{q:22s} {v:10.4f} +- {e:.4f} {u}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
