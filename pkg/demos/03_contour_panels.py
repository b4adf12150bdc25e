#!/usr/bin/env python3
"""The radial potential's landscape across scales and shapes.

Evaluates the single-neuron potential on a 2-d window for six (scale, shape)
panels anchored at the initial predictor alpha * (0.6, 0.8).  Each panel's
sampled minimum sits at the grid point nearest the anchor (the construction
zeroes the gradient there).  Small scales flatten the landscape into a
nearly isotropic bowl; large scales and lopsided shapes turn it into a
kernel-style quadratic around the anchor.

Writes one CSV per panel under demos/contours/; render with the frontend:
    ibplot --kind contours --in demos/contours --out contours.png
"""

import os

from ibflow.experiments import ExperimentConfig, run_contour

out_dir = os.path.join(os.path.dirname(__file__), "contours")
panels = run_contour(ExperimentConfig(kind="contour", grid_n=201), out_dir)

for meta in panels:
    print(
        f"panel alpha={meta['alpha']:<5g} s={meta['s']:<4g} "
        f"delta={meta['delta']:.4f}  min at {tuple(round(v, 2) for v in meta['min_point'])} "
        f"(anchor cell {tuple(round(v, 2) for v in meta['nearest_grid_point_to_wtilde0'])})"
    )
print(f"\nwrote {len(panels)} panels to {out_dir}")
