"""Exogenous per-slot arrivals, reproducible per (seed, node, commodity, slot)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import NetworkGraph

BLOCK = 1024

KINDS = ("poisson", "bernoulli", "constant", "uniform")


@dataclass(frozen=True)
class Distribution:
    """Per-slot arrival amount distribution.

    poisson(rate) | bernoulli(p, batch) | constant(rate) | uniform(lo, hi)
    """

    kind: str
    rate: float = 0.0
    p: float = 0.0
    batch: float = 1.0
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown arrival distribution {self.kind!r}")
        if self.kind == "bernoulli" and not 0 <= self.p <= 1:
            raise ValueError("bernoulli p must lie in [0, 1]")
        if self.kind == "uniform" and not 0 <= self.lo <= self.hi:
            raise ValueError("uniform needs 0 <= lo <= hi")
        if self.kind in ("poisson", "constant") and self.rate < 0:
            raise ValueError("rate must be non-negative")
        if self.batch < 0:
            raise ValueError("batch must be non-negative")

    @classmethod
    def poisson(cls, rate):
        return cls("poisson", rate=float(rate))

    @classmethod
    def bernoulli(cls, p, batch=1.0):
        return cls("bernoulli", p=float(p), batch=float(batch))

    @classmethod
    def constant(cls, rate):
        return cls("constant", rate=float(rate))

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", lo=float(lo), hi=float(hi))

    @property
    def mean(self) -> float:
        if self.kind in ("poisson", "constant"):
            return self.rate
        if self.kind == "bernoulli":
            return self.p * self.batch
        return 0.5 * (self.lo + self.hi)

    @property
    def max(self) -> float:
        """A_max; unbounded for Poisson."""
        if self.kind == "poisson":
            return np.inf if self.rate > 0 else 0.0
        if self.kind == "constant":
            return self.rate
        if self.kind == "bernoulli":
            return self.batch if self.p > 0 else 0.0
        return self.hi

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "poisson":
            return rng.poisson(self.rate, size).astype(float)
        if self.kind == "constant":
            return np.full(size, self.rate)
        if self.kind == "bernoulli":
            return (rng.random(size) < self.p) * self.batch
        return rng.uniform(self.lo, self.hi, size)

    def to_dict(self) -> dict:
        if self.kind == "poisson":
            return {"kind": "poisson", "rate": self.rate}
        if self.kind == "constant":
            return {"kind": "constant", "rate": self.rate}
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "p": self.p, "batch": self.batch}
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, doc: dict) -> "Distribution":
        doc = dict(doc)
        kind = doc.pop("kind")
        return cls(kind, **{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class ArrivalSpec:
    """Arrival distributions keyed by (node, commodity)."""

    entries: tuple[tuple[int, int, Distribution], ...] = field(default_factory=tuple)

    def __post_init__(self):
        seen = set()
        for n, c, _ in self.entries:
            if (n, c) in seen:
                raise ValueError(f"duplicate arrival entry for node {n}, commodity {c}")
            seen.add((n, c))

    def validate(self, graph: NetworkGraph):
        for n, c, _ in self.entries:
            if not (0 <= n < graph.N and 0 <= c < graph.C):
                raise ValueError(f"arrival entry ({n}, {c}) outside the graph")
            if graph.dest[c] == n:
                raise ValueError(f"arrivals at the destination of commodity {c}")

    def scaled_to(self, rate: float) -> "ArrivalSpec":
        """Same sources, every distribution replaced by one with the given mean."""
        out = []
        for n, c, d in self.entries:
            if d.kind == "bernoulli":
                out.append((n, c, Distribution.bernoulli(rate / d.batch, d.batch)))
            elif d.kind == "uniform":
                half = 0.5 * (d.hi - d.lo)
                out.append((n, c, Distribution.uniform(max(rate - half, 0.0), rate + half)))
            else:
                out.append((n, c, Distribution(d.kind, rate=rate)))
        return ArrivalSpec(tuple(out))


def mean_rates(spec: ArrivalSpec, N: int, C: int) -> np.ndarray:
    lam = np.zeros((N, C))
    for n, c, d in spec.entries:
        lam[n, c] = d.mean
    return lam


def max_arrivals(spec: ArrivalSpec, N: int, C: int) -> np.ndarray:
    """A^(c)_{n,max} per (node, commodity)."""
    amax = np.zeros((N, C))
    for n, c, d in spec.entries:
        amax[n, c] = d.max
    return amax


def _substream_key(seed: int, node: int, commodity: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed), int(node), int(commodity)]).generate_state(2, np.uint64)


def _block(dist: Distribution, key: np.ndarray, block: int) -> np.ndarray:
    # each block owns a disjoint counter range, so any slot can be regenerated alone
    bitgen = np.random.Philox(key=key, counter=np.array([0, 0, block, 0], dtype=np.uint64))
    return dist.draw(np.random.Generator(bitgen), BLOCK)


class ArrivalSampler:
    """Block-cached sampler; value at (seed, n, c, slot) is independent of call order."""

    def __init__(self, spec: ArrivalSpec, N: int, C: int, seed: int):
        self.spec = spec
        self.N, self.C = N, C
        self.seed = int(seed)
        self._keys = [_substream_key(seed, n, c) for n, c, _ in spec.entries]
        self._rows = np.array([n for n, _, _ in spec.entries], dtype=np.int64)
        self._cols = np.array([c for _, c, _ in spec.entries], dtype=np.int64)
        self._block_id = -1
        self._cache = np.zeros((len(spec.entries), BLOCK))
        self.realized_max = 0.0

    def block(self, b: int, count: int = BLOCK) -> np.ndarray:
        """Arrivals of slots ``b*BLOCK .. b*BLOCK+count-1`` as ``count x N x C``."""
        out = np.zeros((count, self.N, self.C))
        for i, (n, c, d) in enumerate(self.spec.entries):
            vals = _block(d, self._keys[i], b)[:count]
            out[:, n, c] = vals
            if count and vals.max() > self.realized_max:
                self.realized_max = float(vals.max())
        return out

    def __call__(self, slot: int) -> np.ndarray:
        b, off = divmod(int(slot), BLOCK)
        if b != self._block_id:
            for i, (_, _, d) in enumerate(self.spec.entries):
                self._cache[i] = _block(d, self._keys[i], b)
            self._block_id = b
        A = np.zeros((self.N, self.C))
        if len(self._rows):
            vals = self._cache[:, off]
            A[self._rows, self._cols] = vals
            m = vals.max()
            if m > self.realized_max:
                self.realized_max = float(m)
        return A


def sample_arrivals(spec: ArrivalSpec, slot: int, seed: int, N: int, C: int) -> np.ndarray:
    """``N x C`` arrivals of one slot; zero where no entry exists."""
    return ArrivalSampler(spec, N, C, seed)(slot)
