"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GradcheckReport:
    errors: dict          # name -> max elementwise relative error
    checked: dict         # name -> number of entries probed

    @property
    def max_error(self):
        return max(self.errors.values()) if self.errors else 0.0

    def passed(self, tol=1e-4):
        return self.max_error < tol

    def __str__(self):
        width = max((len(k) for k in self.errors), default=4)
        lines = [f"{k:<{width}}  {v:.3e}  ({self.checked[k]} entries)" for k, v in self.errors.items()]
        return "\n".join(lines)


def gradcheck(closure, params, eps=1e-5, floor=1e-6, max_entries=None, rng=None):
    """Compare analytic and central-difference gradients.

    ``closure()`` must return a scalar Tensor and be deterministic (rewind any
    frozen noise inside it). ``params`` maps names to Tensors. The relative
    error of an entry is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    entries whose true gradient is ~0 from dividing by rounding noise.
    ``max_entries`` probes a random subset of large tensors.
    """
    for p in params.values():
        p.zero_grad()
    closure().backward()
    analytic = {k: p.grad.copy() for k, p in params.items()}

    rng = rng or np.random.default_rng(0)
    errors, checked = {}, {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = closure().item()
            flat[i] = orig - eps
            down = closure().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[name].reshape(-1)[i]
            denom = max(abs(a), abs(numeric), floor)
            worst = max(worst, abs(a - numeric) / denom)
        errors[name] = worst
        checked[name] = len(idx)
    return GradcheckReport(errors, checked)
