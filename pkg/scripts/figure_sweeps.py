"""Write the CSV data behind the four lottery plots.

    python scripts/figure_sweeps.py --step 0.02 --outdir figures --workers 8

The full 0.001-step grids hold about 10^6 points each; --step 0.02 is the
coarse grid used as a smoke test.
"""
import argparse
import pathlib
import time

from rsmdp.cli import run
from rsmdp.lottery import FIGURES


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--outdir", default="figures")
    p.add_argument("--workers", type=int)
    p.add_argument("--figures", default=",".join(map(str, sorted(FIGURES))))
    args = p.parse_args()
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for fig in map(int, args.figures.split(",")):
        argv = ["lottery", "sweep", "--figure", str(fig), "--step", str(args.step),
                "--out", str(out / f"figure{fig}.csv")]
        if args.workers:
            argv += ["--workers", str(args.workers)]
        t0 = time.perf_counter()
        code = run(argv)
        print(f"figure {fig}: exit {code}, {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
