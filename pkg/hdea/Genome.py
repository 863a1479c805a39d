from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Tuple

import numpy as np

from hdea.errors import ConfigurationError, RepresentationError

CrossoverKind = Literal["one-point", "uniform"]
MutationKind = Literal["single-bit-flip", "per-allele-real", "none"]

CROSSOVER_KINDS = ("one-point", "uniform")
MUTATION_KINDS = ("single-bit-flip", "per-allele-real", "none")


class Genome:
    """
    Common behaviour of the two representations.

    Genomes are immutable: the value array is read-only and every operator
    returns a new genome. Equality compares kind and values (and bounds for
    real genomes).
    """

    kind = "abstract"
    __slots__ = ("values",)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def __eq__(self, other):
        return (
            isinstance(other, Genome)
            and other.kind == self.kind
            and np.array_equal(other.values, self.values)
        )

    def __hash__(self):
        return hash((self.kind, self.values.tobytes()))

    def with_values(self, values) -> "Genome":
        raise NotImplementedError

    def check_compatible(self, other: "Genome") -> None:
        """Raise RepresentationError unless both genomes share kind and length."""
        if other.kind != self.kind:
            raise RepresentationError(
                f"Genome kind mismatch: {self.kind} vs {other.kind}"
            )
        if len(other) != len(self):
            raise RepresentationError(
                f"Genome length mismatch: {len(self)} vs {len(other)}"
            )


class BitGenome(Genome):
    kind = "bit"
    __slots__ = ()

    def __init__(self, bits):
        raw = np.asarray(bits)
        if raw.ndim != 1:
            raise RepresentationError("A bit genome must be one-dimensional")
        if raw.size and not np.all((raw == 0) | (raw == 1)):
            raise RepresentationError(f"Bit genome alleles must be 0 or 1: {raw.tolist()}")
        values = raw.astype(np.uint8)
        values.setflags(write=False)
        self.values = values

    @property
    def bits(self) -> np.ndarray:
        return self.values

    @classmethod
    def from_string(cls, text: str) -> "BitGenome":
        """Build a genome from a string such as '0110'."""
        if any(c not in "01" for c in text):
            raise RepresentationError(f"Bit genome text may hold only 0 and 1: {text!r}")
        return cls([int(c) for c in text])

    def with_values(self, values) -> "BitGenome":
        return BitGenome(values)

    def __str__(self):
        return "".join(str(int(b)) for b in self.values)

    def __repr__(self):
        return f"BitGenome('{self}')"


class RealGenome(Genome):
    kind = "real"
    __slots__ = ("lower", "upper")

    def __init__(self, values, lower, upper):
        values = np.array(values, dtype=np.float64)
        lower = np.array(lower, dtype=np.float64)
        upper = np.array(upper, dtype=np.float64)
        if not (values.ndim == 1 and values.shape == lower.shape == upper.shape):
            raise RepresentationError(
                "Real genome values and bounds must be one-dimensional and of equal length"
            )
        for array in (values, lower, upper):
            array.setflags(write=False)
        self.values = values
        self.lower = lower
        self.upper = upper

    def validate(self) -> "RealGenome":
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise RepresentationError("Real genome bounds must be finite")
        if np.any(self.values < self.lower) or np.any(self.values > self.upper):
            raise RepresentationError(
                f"Real genome {self.values.tolist()} violates its bounds"
            )
        return self

    def with_values(self, values) -> "RealGenome":
        return RealGenome(values, self.lower, self.upper)

    def __eq__(self, other):
        return (
            super().__eq__(other)
            and np.array_equal(other.lower, self.lower)
            and np.array_equal(other.upper, self.upper)
        )

    def __hash__(self):
        return super().__hash__()

    def __repr__(self):
        return f"RealGenome({self.values.tolist()})"


@dataclass(frozen=True)
class GenomeSpec:
    """Representation descriptor used to draw random genomes and check compatibility."""

    kind: Literal["bit", "real"]
    length: int
    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in ("bit", "real"):
            raise RepresentationError(f"Unknown genome kind: {self.kind}")
        if self.length < 1:
            raise RepresentationError(f"Genome length must be positive: {self.length}")
        if self.kind == "real":
            if self.lower is None or self.upper is None:
                raise RepresentationError("Real genome spec requires lower and upper bounds")
            if not (len(self.lower) == len(self.upper) == self.length):
                raise RepresentationError("Bounds must match the genome length")
            lower = np.asarray(self.lower, dtype=float)
            upper = np.asarray(self.upper, dtype=float)
            if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
                raise RepresentationError("Real genome bounds must be finite")
            if np.any(lower > upper):
                raise RepresentationError("Every lower bound must be <= its upper bound")

    @classmethod
    def bits(cls, length: int) -> "GenomeSpec":
        return cls(kind="bit", length=int(length))

    @classmethod
    def reals(
        cls,
        lower: Sequence[float],
        upper: Sequence[float],
        names: Optional[Sequence[str]] = None,
    ) -> "GenomeSpec":
        return cls(
            kind="real",
            length=len(lower),
            lower=tuple(float(v) for v in lower),
            upper=tuple(float(v) for v in upper),
            names=tuple(names) if names is not None else None,
        )

    def accepts(self, genome: Genome) -> bool:
        if genome.kind != self.kind or len(genome) != self.length:
            return False
        if self.kind == "real":
            return np.array_equal(genome.lower, self.lower) and np.array_equal(
                genome.upper, self.upper
            )
        return True

    def to_dict(self) -> dict:
        payload = {"kind": self.kind, "length": self.length}
        if self.kind == "real":
            payload.update(
                lower=list(self.lower),
                upper=list(self.upper),
                names=list(self.names) if self.names else None,
            )
        return payload


@dataclass
class Individual:
    """An evaluated haploid: one genome, its internal fitness and the samples it consumed."""

    genome: Genome
    fitness: float
    eval_count: int = 1
    raw: Optional[float] = None
    samples: Tuple[float, ...] = ()


@dataclass(frozen=True)
class Diploid:
    """Ordered pair of haploids whose fitness is the mean of the two."""

    first: Individual
    second: Individual
    combined_fitness: float = field(init=False)

    def __post_init__(self):
        self.first.genome.check_compatible(self.second.genome)
        object.__setattr__(
            self, "combined_fitness", (self.first.fitness + self.second.fitness) / 2
        )


@dataclass(frozen=True)
class VariationConfig:
    crossover_kind: CrossoverKind = "one-point"
    crossover_rate: float = 1.0
    mutation_kind: MutationKind = "single-bit-flip"
    per_allele_rate: float = 0.2
    step_fraction: float = 0.05

    def __post_init__(self):
        if self.crossover_kind not in CROSSOVER_KINDS:
            raise ConfigurationError(f"Unknown crossover kind: {self.crossover_kind}")
        if self.mutation_kind not in MUTATION_KINDS:
            raise ConfigurationError(f"Unknown mutation kind: {self.mutation_kind}")
        for name in ("crossover_rate", "per_allele_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]: {value}")
        if not self.step_fraction > 0:
            raise ConfigurationError(
                f"step_fraction must be positive: {self.step_fraction}"
            )

    @classmethod
    def from_dict(cls, values: dict) -> "VariationConfig":
        known = {k: values[k] for k in cls.__dataclass_fields__ if k in values}
        for key in ("crossover_rate", "per_allele_rate", "step_fraction"):
            if key in known:
                known[key] = float(known[key])
        return cls(**known)

    def to_dict(self) -> dict:
        return {
            "crossover_kind": self.crossover_kind,
            "crossover_rate": self.crossover_rate,
            "mutation_kind": self.mutation_kind,
            "per_allele_rate": self.per_allele_rate,
            "step_fraction": self.step_fraction,
        }
