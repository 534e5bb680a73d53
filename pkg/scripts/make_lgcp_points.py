"""Regenerate the bundled synthetic LGCP point pattern.

Draws one latent field from the LGCP prior on a fine grid, then places
exactly TOTAL_COUNT points with cell probabilities proportional to the
intensity (a Poisson process conditioned on its total), jittered uniformly
inside each cell.
"""

import argparse
from pathlib import Path

import numpy as np

from smctune.models.lgcp import MU, TOTAL_COUNT, lgcp_covariance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--side", type=int, default=64)
    ap.add_argument("--seed", type=int, default=20190214)
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parents[1] / "src/smctune/data/lgcp_points.csv")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    g = args.side
    chol = np.linalg.cholesky(lgcp_covariance(g))
    field = MU + chol @ rng.standard_normal(g * g)
    prob = np.exp(field - field.max())
    cells = rng.choice(g * g, size=TOTAL_COUNT, p=prob / prob.sum())
    pts = (np.column_stack([cells // g, cells % g]) + rng.uniform(size=(TOTAL_COUNT, 2))) / g
    pts = np.clip(pts, 0.0, np.nextafter(1.0, 0.0))
    with args.out.open("w") as fh:
        fh.write(f"# synthetic LGCP pattern: side={g} seed={args.seed} n={TOTAL_COUNT}\n")
        fh.write("x,y\n")
        for x, y in pts:
            fh.write(f"{x:.6f},{y:.6f}\n")
    print(f"wrote {TOTAL_COUNT} points to {args.out}")


if __name__ == "__main__":
    main()
