"""Growth rate vs scattering angle against the plane-wave rate, for both gain schedules."""

from pathlib import Path

from _common import parser, write_csv
from raman_speckle import pipeline
from raman_speckle.config import load_config


def main():
    args = parser(__doc__, "kr_1torr.yaml").parse_args()
    lc = load_config(args.config)
    n = args.frames or 200
    rows = [["gain_schedule", "theta_mrad", "kappa_per_us", "sigma_kappa_per_us", "kappa_plane_wave_per_us"]]
    for sched in ("fresnel", "flat"):
        res = pipeline.growth_sweep(lc.experiment.with_(gain_schedule=sched), n, threads=args.threads)
        pw = res.extra["kappa_plane_wave_per_us"]
        for k, th in enumerate(res.theta_mrad):
            rows.append([sched, float(th), float(res.rate_per_us[k]), float(res.sigma_per_us[k]), float(pw[k])])
            print(f"{sched:8s} {th:4.1f} mrad: kappa {res.rate_per_us[k]:7.2f} /us, plane wave {pw[k]:7.2f}")
    write_csv(Path(args.out) / "fig4_kappa_vs_theta.csv", rows)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
