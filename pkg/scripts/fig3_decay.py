"""Decay rate vs scattering angle for the three buffer gases, with fitted D."""

from pathlib import Path

import numpy as np

from _common import ROOT, parser, write_csv
from raman_speckle import pipeline
from raman_speckle.config import load_config

GASES = ("kr_1torr", "kr_0p5torr", "ne_5torr")


def main():
    ap = parser(__doc__, "kr_1torr.yaml")
    ap.add_argument("--per-point-frames", type=int, default=300)
    args = ap.parse_args()
    rows = [["config", "theta_mrad", "gamma_per_us", "sigma_gamma_per_us", "converged"]]
    summary = [["config", "D_true_cm2_s", "D_fit_cm2_s", "sigma_D_cm2_s", "const_per_us"]]
    for name in GASES:
        lc = load_config(ROOT / "configs" / f"{name}.yaml")
        res = pipeline.decay_sweep(lc.experiment, args.per_point_frames, threads=args.threads)
        for k, th in enumerate(res.theta_mrad):
            rows.append([name, float(th), float(res.rate_per_us[k]), float(res.sigma_per_us[k]),
                         int(res.converged[k])])
        truth = lc.experiment.diffusion_D * 1e4
        if res.fit is None:
            summary.append([name, truth, float("nan"), float("nan"), float("nan")])
            print(f"{name}: fewer than 3 resolved angles, D undetermined (true {truth:g})")
        else:
            summary.append([name, truth, res.fit["D_cm2_s"], res.fit.sigma("D_cm2_s"), res.fit["const"] * 1e-6])
            print(f"{name}: D = {res.fit['D_cm2_s']:.1f} +- {res.fit.sigma('D_cm2_s'):.1f} (true {truth:g})")
    out = Path(args.out)
    write_csv(out / "fig3_gamma_vs_theta.csv", rows)
    write_csv(out / "fig3_D.csv", summary)
    return 0 if all(np.isfinite(r[2]) for r in summary[1:]) else 1


if __name__ == "__main__":
    raise SystemExit(main())
