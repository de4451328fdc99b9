"""Run the experiment specs in configs/ and collect their result tables.

    python scripts/run_tables.py                      # every spec except smoke.ini
    python scripts/run_tables.py configs/friedman3.ini --repeats 3
"""

import argparse
import dataclasses
import glob
import os
import time

from scoreforest import bench

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("specs", nargs="*", help="INI specs (default: configs/*.ini without smoke.ini)")
    ap.add_argument("--repeats", type=int, default=None, help="override the repeat count")
    ap.add_argument("--out", default=os.path.join(ROOT, "results"))
    args = ap.parse_args()

    specs = args.specs or sorted(p for p in glob.glob(os.path.join(ROOT, "configs", "*.ini"))
                                 if not p.endswith("smoke.ini"))
    for path in specs:
        spec = bench.parse_spec(path)
        if args.repeats:
            spec = dataclasses.replace(spec, repeats=args.repeats)
        name = os.path.splitext(os.path.basename(path))[0]
        t0 = time.perf_counter()
        rows = bench.run_experiment(spec, progress=lambda msg: print(f"  [{name}] {msg}"))
        bench.write_results(rows, os.path.join(args.out, name))
        print(f"\n## {name} ({time.perf_counter() - t0:.0f}s)\n")
        print(bench.markdown_table(rows))
        for r in rows:
            if r.relevant_per_repeat:
                hits = sum(set(rel) == {f"x{j}" for j in range(1, 6)} for rel in r.relevant_per_repeat)
                print(f"\n{r.method}: relevant set equals x1..x5 in {hits}/{r.repeats} repeats")
        print()


if __name__ == "__main__":
    main()
