"""The span head: two pointer distributions over positions, regularized.

An encoder maps each position's feature vector to a hidden state; two
scoring vectors turn the states into start and end distributions whose
outer product is a properly normalized joint table over spans. The same
stability penalties apply, summed over the two heads.

Run with: python3 demos/span_pointer.py
"""

import numpy as np

from pdrlab import PerturbationConfig, RandomSource, RegularizerSpec, init_span_model, span_penalty
from pdrlab.spans import apply_span_update, joint_span_table, span_distributions, span_loss

rng = RandomSource(11)
model = init_span_model((3, 6, 4), rng)

T = 6
feats = rng.split(1).generator().standard_normal((T, 3))
start, end = 2, 4

table = joint_span_table(model, feats)
print(f"joint table over {T} positions sums to {table.sum():.15f}")
pb, pe = span_distributions(model, feats)
print("start distribution:", np.round(pb, 4))
print("end   distribution:", np.round(pe, 4))

print()
# rpt's radius is a per-entry draw std, vat's an exact ball radius; match
# the total perturbation size so the comparison is about direction only
ball = 0.2 * np.sqrt(feats.size)
spec_r = RegularizerSpec("rpt", "JSD", perturbation=PerturbationConfig(radius=0.2))
spec_v = RegularizerSpec("vat", "JSD",
                         perturbation=PerturbationConfig(radius=ball, ascent_steps=1,
                                                         step_size=ball / 10))
vals_r = [span_penalty(model, feats, spec_r, rng.split(2, i)).value for i in range(50)]
vals_v = [span_penalty(model, feats, spec_v, rng.split(2, i)).value for i in range(50)]
print(f"mean drawn-noise penalty over 50 draws:    {np.mean(vals_r):.6f}")
print(f"mean searched-noise penalty over 50 seeds: {np.mean(vals_v):.6f}")
print("(both are begin-head + end-head divergences under one shared perturbation)")

print()
loss0, grads = span_loss(model, feats, start, end)
print(f"loss at (start={start}, end={end}): {loss0:.6f}"
      f"   (= -ln pb[{start}] - ln pe[{end}])")

# a few plain gradient steps
for _ in range(60):
    loss, grads = span_loss(model, feats, start, end)
    model = apply_span_update(model, grads, 0.3)
pb, pe = span_distributions(model, feats)
print(f"after 60 steps: loss {span_loss(model, feats, start, end)[0]:.6f},"
      f" pb[{start}] = {pb[start]:.4f}, pe[{end}] = {pe[end]:.4f}")
