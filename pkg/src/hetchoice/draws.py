"""Standard-normal simulation draws organized per individual.

Halton points for individual ``i`` occupy the contiguous index block
``burn_in + i*R + 1 .. burn_in + (i+1)*R`` of every dimension's sequence, so
the draws of one individual never depend on how many others are generated or
in which order.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % p for p in range(2, int(n ** 0.5) + 1))


@dataclass(frozen=True)
class DrawConfig:
    count: int = 500
    method: str = "halton"
    seed: int = 0
    burn_in: int = 10
    bases: tuple[int, ...] | None = None

    def __post_init__(self):
        if int(self.count) < 1:
            raise ValueError(f"draw count must be >= 1, got {self.count}")
        if self.method not in ("halton", "pseudo"):
            raise ValueError(f"unknown draw method {self.method!r}")
        if int(self.burn_in) < 0:
            raise ValueError("burn_in must be >= 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.bases is not None:
            bases = tuple(int(b) for b in self.bases)
            if len(set(bases)) != len(bases) or not all(_is_prime(b) for b in bases):
                raise ValueError(f"bases must be distinct primes, got {bases}")
            object.__setattr__(self, "bases", bases)

    def bases_for(self, n_dims: int) -> tuple[int, ...]:
        bases = self.bases if self.bases is not None else PRIMES
        if n_dims > len(bases):
            raise ValueError(f"{n_dims} random dimensions but only {len(bases)} Halton bases available")
        return tuple(bases[:n_dims])

    def to_dict(self) -> dict:
        out = {"count": int(self.count), "method": self.method, "seed": int(self.seed),
               "burn_in": int(self.burn_in)}
        if self.bases is not None:
            out["bases"] = list(self.bases)
        return out


@dataclass(frozen=True, eq=False)
class DrawSet:
    """Array of standard-normal deviates with shape (n_individuals, R, n_dims)."""

    values: np.ndarray
    config: DrawConfig

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["individual_index", "draw_index", "dimension", "value"])
        n, r, d = self.values.shape
        for i in range(n):
            for j in range(r):
                for k in range(d):
                    w.writerow([i, j, k, repr(float(self.values[i, j, k]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def halton_sequence(index, base: int):
    """Radical inverse of ``index`` (>= 1) in ``base``; vectorized over ``index``."""
    if base < 2:
        raise ValueError(f"Halton base must be >= 2, got {base}")
    idx = np.asarray(index, dtype=np.int64)
    if np.any(idx < 1):
        raise ValueError("Halton index must be >= 1")
    out = np.zeros(idx.shape, float)
    f = 1.0
    i = idx.copy()
    while np.any(i > 0):
        f /= base
        out += f * (i % base)
        i //= base
    return float(out) if out.ndim == 0 else out


def inverse_normal_cdf(p):
    """Standard normal quantile; raises for probabilities outside (0, 1)."""
    arr = np.asarray(p, float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise ValueError("inverse_normal_cdf needs 0 < p < 1")
    z = ndtri(arr)
    return float(z) if z.ndim == 0 else z


def standard_normal_draws(n_individuals: int, config: DrawConfig, n_dims: int) -> DrawSet:
    R = int(config.count)
    if n_dims == 0:
        return DrawSet(np.zeros((n_individuals, R, 0)), config)
    if config.method == "halton":
        bases = config.bases_for(n_dims)
        index = config.burn_in + 1 + np.arange(n_individuals * R, dtype=np.int64)
        cols = [inverse_normal_cdf(halton_sequence(index, b)) for b in bases]
        values = np.stack(cols, axis=-1).reshape(n_individuals, R, n_dims)
    else:
        values = np.empty((n_individuals, R, n_dims))
        for i in range(n_individuals):
            gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(config.seed), i])))
            values[i] = gen.standard_normal((R, n_dims))
    values.flags.writeable = False
    return DrawSet(values, config)
