"""Print fitted local-law slopes per (n, u, p) for a plan file.

    python scripts/slope_table.py scripts/plans/locallaw_heavy.cfg --workers 4
"""

import argparse

from wignerlab.config import load_config
from wignerlab.locallaw import run_local_law


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("plan")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = load_config(args.plan)
    rep = run_local_law(cfg.plan, workers=args.workers, strict=cfg.strict)
    print(f"fitted C = {rep.C:.4f}   rejected cells: {len(rep.rejected)}")
    print(f"{'n':>6} {'u':>6} {'p':>3} {'slope':>9} {'95% hw':>8} {'pts':>4}")
    for s in rep.slopes:
        print(f"{s.n:>6} {s.u:>6.2f} {s.p:>3} {s.slope:>9.4f} {s.half_width:>8.4f} {s.points:>4}")


if __name__ == "__main__":
    main()
