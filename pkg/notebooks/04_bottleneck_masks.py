"""
Relaxed Bernoulli masks
=======================

A kept-probability p becomes a differentiable mask value. Half of the mass sits
on each side of 1/2 exactly as p says; the mean only matches p in the cold limit.
"""

import numpy as np

from tgib.bottleneck import ImportanceScores, kl_from_probs, sample_mask
from tgib.numcore import NoiseSource, Tensor

p = 0.7
logits = Tensor(np.full(20_000, np.log(p / (1 - p))))
for tau in (3.0, 1.0, 0.3, 0.05, 0.01):
    alpha = sample_mask(ImportanceScores(logits, 0.5, tau), "relaxed", NoiseSource(0)).alpha.data
    hard = ((alpha < 1e-3) | (alpha > 1 - 1e-3)).mean()
    print(f"tau={tau:<5} P(alpha>1/2)={np.mean(alpha > 0.5):.3f}  mean={alpha.mean():.3f}  near 0/1={hard:.3f}")

# the compression term: zero at the prior, growing as scores move away from it
for q in (0.5, 0.7, 0.9, 0.99):
    print(f"KL(Bern({q}) || Bern(0.5)) = {kl_from_probs([q], 0.5):.4f}")
