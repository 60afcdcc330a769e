"""Tour of the four divergence generators on hand-picked posteriors.

Run with: python3 demos/divergence_zoo.py
"""

import math

import numpy as np

from pdrlab import GENERATORS, f_divergence, f_divergence_grad_wrt_phat, pinsker_gap

pairs = {
    "mild drift": (np.array([0.55, 0.45]), np.array([0.5, 0.5])),
    "confident vs uniform": (np.array([0.9, 0.05, 0.05]), np.array([1 / 3] * 3)),
    "near disjoint": (np.array([0.999, 0.001]), np.array([0.001, 0.999])),
}

print("divergence values, D(noisy, clean)")
print(f"{'pair':24s}" + "".join(f"{k:>10s}" for k in GENERATORS))
for name, (noisy, clean) in pairs.items():
    vals = [f_divergence(gen, noisy, clean) for gen in GENERATORS.values()]
    print(f"{name:24s}" + "".join(f"{v:10.4f}" for v in vals))

print()
print(f"JSD never exceeds ln 2 = {math.log(2):.4f}; the near-disjoint row above")
print("sits just below it while KL has no such ceiling.")

print()
print("symmetry: JSD and SHL ignore the argument order, KL does not")
noisy, clean = pairs["confident vs uniform"]
for kind in ("KL", "JSD", "SHL"):
    gen = GENERATORS[kind]
    a, b = f_divergence(gen, noisy, clean), f_divergence(gen, clean, noisy)
    print(f"  {kind:4s} D(a,b) = {a:.6f}   D(b,a) = {b:.6f}")

# the l1 route: squared total posterior movement is capped by twice the KL
print()
print("distance chain on the mild-drift pair")
noisy, clean = pairs["mild drift"]
l1 = float(np.sum(np.abs(noisy - clean)))
kl = f_divergence(GENERATORS["KL"], noisy, clean)
print(f"  ||noisy - clean||_1^2 = {l1 ** 2:.6f} <= 2 KL = {2 * kl:.6f}"
      f"   (slack {pinsker_gap(noisy, clean):.6f})")

print()
print("gradient of D wrt the noisy posterior (KL, mild drift):",
      np.round(f_divergence_grad_wrt_phat(GENERATORS["KL"], noisy, clean), 6))
