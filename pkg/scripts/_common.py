import argparse
import csv
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def parser(desc: str, config: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=desc)
    ap.add_argument("--config", default=str(ROOT / "configs" / config))
    ap.add_argument("--out", default=str(ROOT / "results"))
    ap.add_argument("--frames", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    return ap


def write_csv(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])
    print(f"wrote {path}")
