"""Empirical uniform stability constant on the square.

Scans creases and random maxima of affine pieces, reports the smallest
ratio F(v) / ||v||_b, which bounds the stability constant from above, and
shows that the crease max(0, x1) attains 2/3.
"""
import numpy as np

from toricstab import ScanConfig, extremal_affine, stability_scan
from toricstab.polytope import square
from toricstab.stability import taming_constant

p = square()
s = extremal_affine(p).affine
rep = stability_scan(p, None, s, ScanConfig(total_samples=500, seed=0))
best = rep.argmin
print(f"{rep.n_samples} samples ({rep.families}), {rep.n_skipped} skipped")
print(f"lambda_hat = {rep.lambda_hat:.6f} from sample {best.sample_id} ({best.family})")
print(f"params: {best.params}")
crease = [smp for smp in rep.samples if smp.params.startswith("a=[1.0 0.0];c=0.0")]
print(f"max(0, x1): F = {crease[0].futaki:.6f}, |v|_b = {crease[0].bnorm:.6f}, "
      f"ratio = {crease[0].ratio:.6f}")
print(f"ratio quartiles: {np.quantile(rep.ratios, [0.25, 0.5, 0.75]).round(4)}")
print(f"taming constant |v|_b >= C int v dmu with C = {taming_constant(p):.4f}")
