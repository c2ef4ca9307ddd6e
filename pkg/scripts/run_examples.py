"""Run the four example presets and print the energy-error tables side by side."""
import argparse
from pathlib import Path

from pecem.cli import run
from pecem.config import preset
from pecem.metrics import TABLE_STEPS, read_error_csv, table_rows

EXAMPLES = ("example1_f1", "example1_f2", "example2", "example3")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", choices=EXAMPLES, default=list(EXAMPLES))
    args = ap.parse_args()
    for name in args.only:
        cfg = preset(name, output=str(Path(args.out) / name))
        m = run(cfg)
        series = list(read_error_csv(Path(cfg.output) / f"errors_{name}.csv").values())
        print(f"\n{name}  (seed {m['coefficient']['seed']}, "
              f"{sum(m['timings'].values()):.1f}s)")
        print("n".rjust(5) + "".join(s.method.rjust(10) for s in series))
        for row in table_rows(series, TABLE_STEPS):
            print(f"{row[0]:5d}" + "".join(f"{v:10.2f}" for v in row[1:]))


if __name__ == "__main__":
    main()
