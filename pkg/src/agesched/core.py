"""Domain types, delay distributions, and seeded random streams."""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "ConfigError",
    "ConfigIssue",
    "DelayKind",
    "DelaySpec",
    "RandomStream",
    "SourceParams",
    "SystemConfig",
    "make_stream",
    "sample_delay",
    "sample_delay_array",
    "sample_intergen",
    "sample_intergen_array",
    "validate_config",
]


class DelayKind(enum.Enum):
    EXPONENTIAL = "exponential"
    UNIFORM = "uniform"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True, slots=True)
class DelaySpec:
    """Transmission-delay distribution; mean fully determines each kind.

    Uniform is supported on [0, 2*mean] so the mean comes out right while
    keeping delays nonnegative.
    """

    kind: DelayKind
    mean: float

    @property
    def second_moment(self) -> float:
        if self.kind is DelayKind.EXPONENTIAL:
            return 2.0 * self.mean * self.mean
        if self.kind is DelayKind.UNIFORM:
            return 4.0 * self.mean * self.mean / 3.0
        return self.mean * self.mean


@dataclass(frozen=True, slots=True)
class SourceParams:
    """One source: generation process, delay distribution, target, weight.

    mean_intergen == 0 encodes a generate-at-will source (a fresh packet
    materializes exactly at transmission start; the generation stream is
    never sampled for it).
    """

    mean_intergen: float
    delay: DelaySpec
    age_target: Optional[float] = None
    weight: float = 1.0

    @property
    def mean_delay(self) -> float:
        return self.delay.mean

    @property
    def generate_at_will(self) -> bool:
        return self.mean_intergen == 0.0


@dataclass(frozen=True, slots=True)
class SystemConfig:
    """Full scenario: ordered sources plus horizon and seed plan."""

    sources: Tuple[SourceParams, ...]
    horizon: float
    seed: int = 0
    replications: int = 5

    @property
    def n_sources(self) -> int:
        return len(self.sources)


@dataclass(frozen=True, slots=True)
class ConfigIssue:
    field: str
    code: str
    message: str


class ConfigError(ValueError):
    """Raised by validate_config; carries one issue per violated field."""

    def __init__(self, issues: Sequence[ConfigIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(f"{i.field}: {i.message}" for i in self.issues))


class RandomStream:
    """Deterministic pseudo-random stream keyed by (seed, label).

    Labels are (purpose, source, replication) triples; distinct labels give
    independent streams, and scalar draws interleave bit-identically with
    the corresponding array draws (the vectorized simulation paths rely on
    this).
    """

    __slots__ = ("seed", "purpose", "source", "replication", "generator")

    def __init__(self, seed: int, purpose: str, source: int = 0, replication: int = 0):
        self.seed = seed
        self.purpose = purpose
        self.source = source
        self.replication = replication
        key = (zlib.crc32(purpose.encode("utf-8")), source, replication)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def random(self) -> float:
        return float(self.generator.random())

    def random_array(self, n: int) -> np.ndarray:
        return self.generator.random(n)

    def exponential(self, mean: float) -> float:
        return float(self.generator.exponential(mean))

    def exponential_array(self, mean: float, n: int) -> np.ndarray:
        return self.generator.exponential(mean, n)

    def uniform(self, low: float, high: float) -> float:
        return float(self.generator.uniform(low, high))

    def uniform_array(self, low: float, high: float, n: int) -> np.ndarray:
        return self.generator.uniform(low, high, n)


def make_stream(seed: int, purpose: str, source: int = 0, replication: int = 0) -> RandomStream:
    return RandomStream(seed, purpose, source, replication)


def sample_delay(spec: DelaySpec, stream: RandomStream) -> float:
    """One delay draw. Precondition: spec passed validation (mean > 0)."""
    if spec.kind is DelayKind.DETERMINISTIC:
        return spec.mean  # consumes no randomness, matching the array path
    if spec.kind is DelayKind.EXPONENTIAL:
        return stream.exponential(spec.mean)
    return stream.uniform(0.0, 2.0 * spec.mean)


def sample_delay_array(spec: DelaySpec, stream: RandomStream, n: int) -> np.ndarray:
    """n delay draws, bit-identical to n successive sample_delay calls."""
    if spec.kind is DelayKind.DETERMINISTIC:
        return np.full(n, spec.mean)
    if spec.kind is DelayKind.EXPONENTIAL:
        return stream.exponential_array(spec.mean, n)
    return stream.uniform_array(0.0, 2.0 * spec.mean, n)


def sample_intergen(mean_intergen: float, stream: RandomStream) -> float:
    """One exponential inter-generation draw; rejects the generate-at-will
    encoding (those sources never sample a generation stream)."""
    if mean_intergen <= 0.0:
        raise ValueError("sample_intergen requires mean_intergen > 0")
    return stream.exponential(mean_intergen)


def sample_intergen_array(mean_intergen: float, stream: RandomStream, n: int) -> np.ndarray:
    if mean_intergen <= 0.0:
        raise ValueError("sample_intergen requires mean_intergen > 0")
    return stream.exponential_array(mean_intergen, n)


def _check_positive(value: float) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value) and value > 0


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return cfg iff every invariant holds; otherwise raise ConfigError
    naming each violated field."""
    issues: List[ConfigIssue] = []
    if len(cfg.sources) == 0:
        issues.append(ConfigIssue("sources", "empty_sources", "at least one source required"))
    for i, src in enumerate(cfg.sources):
        prefix = f"sources[{i}]"
        mu = src.mean_intergen
        if not isinstance(mu, (int, float)) or not math.isfinite(mu) or mu < 0:
            issues.append(
                ConfigIssue(f"{prefix}.mean_intergen", "negative_intergen",
                            "mean inter-generation time must be finite and >= 0")
            )
        if not _check_positive(src.delay.mean):
            issues.append(
                ConfigIssue(f"{prefix}.delay.mean", "non_positive_mean",
                            "delay mean must be finite and > 0")
            )
        if not isinstance(src.delay.kind, DelayKind):
            issues.append(
                ConfigIssue(f"{prefix}.delay.kind", "unknown_delay_kind",
                            "delay kind must be exponential, uniform, or deterministic")
            )
        if src.age_target is not None and not _check_positive(src.age_target):
            issues.append(
                ConfigIssue(f"{prefix}.age_target", "non_positive_age_target",
                            "age target must be finite and > 0")
            )
        if not _check_positive(src.weight):
            issues.append(
                ConfigIssue(f"{prefix}.weight", "non_positive_weight",
                            "weight must be finite and > 0")
            )
    if not _check_positive(cfg.horizon):
        issues.append(
            ConfigIssue("horizon", "non_positive_horizon", "horizon must be finite and > 0")
        )
    if not isinstance(cfg.replications, int) or cfg.replications < 1:
        issues.append(
            ConfigIssue("replications", "non_positive_replications",
                        "replications must be a positive integer")
        )
    if issues:
        raise ConfigError(issues)
    return cfg
