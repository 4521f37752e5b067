"""Anti-Stokes width and mode count over storage time (Stokes shown for reference)."""

from pathlib import Path

from _common import parser, write_csv
from raman_speckle import analysis as an
from raman_speckle.config import load_config
from raman_speckle.simulate import make_basis, run_sequence


def main():
    ap = parser(__doc__, "kr_1torr.yaml")
    ap.add_argument("--t-store", default="0,1,2,3,5,8", help="us, comma list")
    ap.add_argument("--ref", default="0.5,0", help="anti-Stokes reference direction x,y in mrad")
    args = ap.parse_args()
    lc = load_config(args.config)
    cfg = lc.experiment
    n = args.frames or lc.n_frames
    ref = tuple(float(v) * 1e-3 for v in args.ref.split(","))
    basis = make_basis(cfg)
    rows = [["t_store_us", "stokes_w_avg_mrad", "stokes_N", "antistokes_w_avg_mrad", "antistokes_w_C_mrad",
             "antistokes_N"]]
    for t in (float(v) for v in args.t_store.split(",")):
        s, a, bg = run_sequence(cfg.with_(t_store=t * 1e-6), n, args.threads, basis=basis)
        s, a = an.subtract_background(s, bg), an.subtract_background(a, bg)
        ws = an.average_width(s)["w"]
        wcs = an.correlation_width(an.correlation_map(s, s, (0.0, 0.0)))
        wa = an.average_width(a)["w"]
        wca = an.correlation_width(an.correlation_map(a, a, ref))
        ns, na = an.mode_count(ws, wcs), an.mode_count(wa, wca)
        rows.append([t, ws * 1e3, ns, wa * 1e3, wca * 1e3, na])
        print(f"t_store {t:4.1f} us: Stokes w {ws * 1e3:.3f} mrad N {ns:.2f}; "
              f"anti-Stokes w {wa * 1e3:.3f} mrad w_C {wca * 1e3:.3f} N {na:.2f}")
    write_csv(Path(args.out) / "fig8_modes_vs_storage.csv", rows)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
