"""Sensitivity of shift recovery to contamination, using the sweep runner.

Mirrors the command line `trajshift sweep` on a reduced replicate budget.

Run: python demos/robustness_and_sweeps.py   (a few minutes)
"""

from trajshift.cli import run_sweep

print("outlier doubling on the three-subtype scenario, 2 replicates per level")
rows = run_sweep(3, "outliers", [0, 100, 300], replicates=2, seed=1, workers=2)
print(f"{'doubled obs':>12} {'exact':>8} {'within-1':>9} {'MAE':>7}")
for row in rows:
    print(
        f"{int(row['value']):>12} {row['exact_rate_mean']:8.3f} "
        f"{row['within_one_rate_mean']:9.3f} {row['mae_days_mean']:7.3f}"
    )

print("\ntrim-fraction sweep on the same scenario")
rows = run_sweep(3, "alpha", [0.85, 0.95], replicates=2, seed=2, workers=2)
for row in rows:
    print(
        f"  alpha={row['value']:.2f}: exact={row['exact_rate_mean']:.3f} "
        f"mae={row['mae_days_mean']:.3f}"
    )
