"""Laplace noise calibration and generation.

Scales are tied to the 1-norm sensitivity bounds of the constraint map g and
its per-agent Jacobian blocks over trajectory pairs that differ in a single
agent's signal by at most B in summed 1-norm. Matrix-valued outputs are
flattened to vectors before the 1-norm is taken, consistent with how the
sensitivity constants are derived.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .problem import DerivedConstants

AGENT_SOURCE = "agent/{}"  # 1-based agent id
CONSTRAINT_SOURCE = "constraint"


def gradient_sensitivity(consts: DerivedConstants, i: int, bound: float) -> float:
    """1-norm sensitivity bound L_{g,i} * B for agent i's Jacobian block."""
    if bound <= 0:
        raise ConfigError("adjacency bound must be positive")
    return float(consts.L_g[i] * bound)


def constraint_sensitivity(consts: DerivedConstants, bound: float) -> float:
    """1-norm sensitivity bound K_g * B for the constraint values."""
    if bound <= 0:
        raise ConfigError("adjacency bound must be positive")
    return float(consts.K_g * bound)


@dataclass(frozen=True)
class NoisePlan:
    """Per-source Laplace scales for one privacy level.

    agent_scales[i] is the scale of the noise added to agent i's Jacobian
    block each step; constraint_scale covers the constraint values feeding
    the dual update.
    """

    epsilon: float
    adjacency_bound: float
    agent_scales: np.ndarray
    constraint_scale: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.adjacency_bound <= 0:
            raise ConfigError("adjacency bound must be positive")
        scales = np.asarray(self.agent_scales, dtype=float)
        # zero scale is the degenerate constant-Jacobian case (no leakage)
        if np.any(scales < 0) or self.constraint_scale <= 0:
            raise ConfigError("noise scales must be positive")
        object.__setattr__(self, "agent_scales", scales)

    def source_scales(self) -> dict[str, float]:
        named = {
            AGENT_SOURCE.format(i + 1): float(b)
            for i, b in enumerate(self.agent_scales)
        }
        named[CONSTRAINT_SOURCE] = float(self.constraint_scale)
        return named


def calibrate(consts: DerivedConstants, epsilon: float, bound: float) -> NoisePlan:
    """Tight calibration b = sensitivity / epsilon for every noise source.

    Tight (rather than any b >= sensitivity/epsilon) adds the least noise
    the privacy level permits.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if bound <= 0:
        raise ConfigError("adjacency bound must be positive")
    agent_scales = np.array(
        [gradient_sensitivity(consts, i, bound) / epsilon for i in range(consts.L_g.size)]
    )
    return NoisePlan(
        epsilon=float(epsilon),
        adjacency_bound=float(bound),
        agent_scales=agent_scales,
        constraint_scale=constraint_sensitivity(consts, bound) / epsilon,
    )


def laplace_inverse_cdf(u, scale: float):
    """Map uniform u in (-1/2, 1/2) to Laplace(scale) samples.

    x = -scale * sgn(u) * ln(1 - 2|u|); the sample carries the sign of u
    (u = 1/4 gives +scale*ln 2). Kept explicit so equal uniform streams
    reproduce equal noise across implementations.
    """
    u = np.asarray(u, dtype=float)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _spawn_key(source: str) -> tuple[int, ...]:
    digest = hashlib.sha256(source.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[k : k + 4], "little") for k in range(0, 16, 4))


class NoiseStream:
    """Named, independently seeded substreams of Laplace noise.

    Substreams are derived from (master seed, sha256(source name)), so a
    sample is a pure function of (seed, source, draw index). One stream
    belongs to one run; nothing here is safe for unsynchronized sharing.
    """

    def __init__(self, seed: int, scales: Mapping[str, float] | None = None):
        self.seed = int(seed)
        self._scales = dict(scales) if scales else {}
        self._generators: dict[str, np.random.Generator] = {}

    def _generator(self, source: str) -> np.random.Generator:
        gen = self._generators.get(source)
        if gen is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_spawn_key(source))
            gen = np.random.Generator(np.random.PCG64(seq))
            self._generators[source] = gen
        return gen

    def uniform_symmetric(self, source: str, shape) -> np.ndarray:
        """Uniform draws on [-1/2, 1/2), nudged away from the -1/2 endpoint."""
        raw = self._generator(source).random(shape)
        raw = np.where(raw == 0.0, np.nextafter(0.0, 1.0), raw)
        return raw - 0.5

    def laplace(self, source: str, shape, scale: float | None = None) -> np.ndarray:
        if scale is None:
            scale = self._scales.get(source)
            if scale is None:
                raise ConfigError(f"no scale bound to noise source {source!r}")
        if scale < 0:
            raise ConfigError("Laplace scale must be nonnegative")
        if scale == 0:
            return np.zeros(shape)
        return laplace_inverse_cdf(self.uniform_symmetric(source, shape), scale)

    def laplace_sampler(self, source: str, shape, scale: float | None = None, buffer: int = 256):
        """Buffered equivalent of repeated laplace() calls with a fixed shape.

        Draws arrive in blocks but consume the substream in the same order,
        so the emitted sequence is identical to unbuffered sampling.
        """
        shape = tuple(shape)
        block: list[np.ndarray] = []

        def next_sample() -> np.ndarray:
            if not block:
                stacked = self.laplace(source, (buffer,) + shape, scale)
                block.extend(reversed(stacked))
            return block.pop()

        return next_sample


def sample_laplace(stream: NoiseStream, source: str, shape) -> np.ndarray:
    """Draw i.i.d. Laplace noise from a named substream at its bound scale."""
    return stream.laplace(source, shape)


def _reported_array(traj) -> np.ndarray:
    reported = getattr(traj, "reported", traj)
    return np.asarray(reported, dtype=float)


def check_adjacency(traj_a, traj_b, i: int, bound: float, agent_dims=None) -> bool:
    """Whether two reported signals differ only in agent i, by at most B.

    Accepts Trajectory objects or plain (steps, n) arrays; for arrays the
    per-agent dimensions must be passed explicitly. The deviation is the
    1-norm summed over all steps; every other agent's signal must match
    exactly.
    """
    a = _reported_array(traj_a)
    b = _reported_array(traj_b)
    if a.shape != b.shape:
        raise ValueError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    dims = agent_dims or getattr(traj_a, "agent_dims", None)
    if dims is None:
        raise ValueError("agent dimensions unavailable; pass agent_dims")
    offsets = np.concatenate([[0], np.cumsum(dims)])
    if offsets[-1] != a.shape[1]:
        raise ValueError("agent dimensions do not match trajectory width")
    sl = slice(int(offsets[i]), int(offsets[i + 1]))
    for j in range(len(dims)):
        if j == i:
            continue
        other = slice(int(offsets[j]), int(offsets[j + 1]))
        if not np.array_equal(a[:, other], b[:, other]):
            return False
    deviation = float(np.abs(a[:, sl] - b[:, sl]).sum())
    return deviation <= bound + 1e-12
