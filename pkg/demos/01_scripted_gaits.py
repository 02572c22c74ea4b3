"""Scripted three-link strokes: the classic reciprocal-motion escape.

Runs the square-wave paddling stroke and its two mirror-image variants
for a handful of cycles each, then prints per-cycle displacement,
rotation, work, and towing efficiency. The point of the exercise: at
zero Reynolds number a time-reversible stroke goes nowhere, while the
non-reciprocal square-wave sequence ratchets the swimmer along its
axis, and mirroring the sequence flips the travel direction.

Usage: python demos/01_scripted_gaits.py [out_dir]
"""

import csv
import os
import sys

import numpy as np

from linkswim.analysis import centroid_series
from linkswim.gaits import canonical_gait, gait_start_state, run_gait


def describe(name: str, cycles: int = 6, out_dir: str = None):
    spec = canonical_gait(name)
    start = gait_start_state(spec)
    states, metrics = run_gait(spec, start, cycles)
    dx, dy = metrics.displacement
    print(f"{name:18s} dx/cycle {dx:+.6f}  dy/cycle {dy:+.6f}  "
          f"rotation/cycle {metrics.rotation:+.2e}  "
          f"work/cycle {metrics.work:.4f}  "
          f"efficiency {100 * metrics.efficiency:.3f}%")
    if out_dir:
        arr = np.array([s.as_array() for s in states])
        cents = centroid_series(arr)
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "x_c", "y_c", "alpha1", "alpha2"])
            for i, row in enumerate(arr):
                w.writerow([i, repr(float(cents[i, 0])),
                            repr(float(cents[i, 1])),
                            repr(float(row[3] - row[2])),
                            repr(float(row[4] - row[3]))])
        print(f"  trajectory -> {path}")
    return metrics


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    print("Square-wave stroke and mirrored variants, 6 cycles each "
          "(first cycle excluded as transient):\n")
    sym = describe("purcell_symmetric", out_dir=out_dir)
    cw = describe("asymmetric_cw", out_dir=out_dir)
    ccw = describe("asymmetric_ccw", out_dir=out_dir)

    print("\nThe symmetric stroke translates without net rotation; the "
          "asymmetric pair arcs")
    print("in opposite senses (equal and opposite per-cycle rotation):")
    print(f"  rotation cw {cw.rotation:+.6f} vs ccw {ccw.rotation:+.6f}")
    print(f"  symmetric rotation {sym.rotation:+.2e} (zero up to "
          "integration tolerance)")
    print("\nScripted strokes are the baseline the learned policies are "
          "judged against: the")
    print("trained swimmers discover strokes of comparable efficiency "
          "that also steer.")


if __name__ == "__main__":
    main()
