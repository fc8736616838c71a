"""Seeded randomness with an optional record/replay ("frozen") mode.

Every stochastic op in the model draws through a :class:`NoiseSource` so that a
loss closure can be re-evaluated with exactly the same dropout masks, Gumbel
noise and negative samples. That is what makes finite-difference checks valid
through stochastic layers.
"""

from __future__ import annotations

import numpy as np


class NoiseSource:
    def __init__(self, seed=0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def uniform(self, shape):
        return self.rng.random(shape)

    def integers(self, low, high, size=None):
        return self.rng.integers(low, high, size=size)

    def choice(self, a, size=None, replace=True):
        return self.rng.choice(a, size=size, replace=replace)

    def spawn(self, key):
        """Independent child stream keyed by an integer (stable across runs)."""
        return NoiseSource(np.random.SeedSequence([self.seed, int(key)]).generate_state(1)[0])

    def frozen(self):
        return FrozenNoise(self)


class FrozenNoise:
    """Records draws on the first pass; after :meth:`rewind` replays them in order."""

    def __init__(self, source):
        self.source = source
        self.tape = []
        self.cursor = 0
        self.replaying = False

    def rewind(self):
        self.cursor = 0
        self.replaying = True

    def _draw(self, kind, fn, shape_key):
        if self.replaying:
            if self.cursor >= len(self.tape):
                raise RuntimeError("frozen noise exhausted: closure draws more than it recorded")
            rec_kind, rec_key, value = self.tape[self.cursor]
            if rec_kind != kind or rec_key != shape_key:
                raise RuntimeError(
                    f"frozen noise mismatch at draw {self.cursor}: recorded {rec_kind}{rec_key}, "
                    f"requested {kind}{shape_key}")
            self.cursor += 1
            return np.array(value, copy=True)
        value = fn()
        self.tape.append((kind, shape_key, np.array(value, copy=True)))
        return value

    def uniform(self, shape):
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        return self._draw("uniform", lambda: self.source.uniform(shape), shape)

    def integers(self, low, high, size=None):
        return self._draw("integers", lambda: self.source.integers(low, high, size), (low, high, size))

    def choice(self, a, size=None, replace=True):
        key = (len(a) if hasattr(a, "__len__") else a, size, replace)
        return self._draw("choice", lambda: self.source.choice(a, size, replace), key)


class ConstantNoise:
    """Every uniform draw returns ``value``; used for deterministic evaluation."""

    def __init__(self, value=0.5):
        self.value = value

    def uniform(self, shape):
        return np.full(shape, self.value)
