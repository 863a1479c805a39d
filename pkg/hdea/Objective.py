import shlex
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from hdea.CustomLogger import CustomLogger
from hdea.ExternalEvaluator import ExternalSession
from hdea.Genome import Genome, GenomeSpec
from hdea.NKLandscape import NKLandscape
from hdea.Surrogate import SurrogateParams, surrogate_evaluate
from hdea.errors import ConfigurationError, HDEAError, RepresentationError
from hdea.settings.config_loader import section
from hdea.utils import derive_seed, make_rng

OBJECTIVE_KINDS = ("nk", "surrogate", "external")
DIRECTIONS = ("maximize", "minimize")


@dataclass(frozen=True)
class SearchSpace:
    """Named, bounded real dimensions of a simulator-style objective."""

    names: Tuple[str, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    units: Tuple[str, ...] = ()

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise ConfigurationError("Search space names and bounds must have equal lengths")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ConfigurationError("Every lower bound must be <= its upper bound")

    @classmethod
    def default(cls) -> "SearchSpace":
        """The six worker-cell parameters of the nano-particle delivery study."""
        return cls.from_dict(section("search_space"))

    @classmethod
    def from_dict(cls, values: dict) -> "SearchSpace":
        return cls(
            names=tuple(values["names"]),
            lower=tuple(float(v) for v in values["lower"]),
            upper=tuple(float(v) for v in values["upper"]),
            units=tuple(values.get("units", ())),
        )

    @property
    def dimension(self) -> int:
        return len(self.names)

    def genome_spec(self) -> GenomeSpec:
        return GenomeSpec.reals(self.lower, self.upper, self.names)

    def normalize(self, values: Sequence[float]) -> np.ndarray:
        """Map values onto [0, 1] per dimension; degenerate dimensions map to 0."""
        lower = np.asarray(self.lower)
        span = np.asarray(self.upper) - lower
        safe_span = np.where(span > 0, span, 1.0)
        scaled = (np.asarray(values, dtype=float) - lower) / safe_span
        return np.where(span > 0, scaled, 0.0)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "units": list(self.units),
        }


@dataclass(frozen=True)
class ObjectiveSpec:
    """
    What to evaluate and how.

    kind-specific payload:
        nk         landscape_path, or landscape (n, k, seed) generated in memory
        surrogate  surrogate parameters (defaults from settings [surrogate])
        external   command (argv list or string) and timeout in seconds
    """

    kind: Literal["nk", "surrogate", "external"]
    direction: Literal["maximize", "minimize"]
    samples: int = 1
    landscape_path: Optional[str] = None
    landscape: Optional[Tuple[int, int, int]] = None
    surrogate: Optional[SurrogateParams] = None
    command: Tuple[str, ...] = ()
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ConfigurationError(f"Unknown objective kind: {self.kind}")
        if self.direction not in DIRECTIONS:
            raise ConfigurationError(
                f"Objective direction must be one of {DIRECTIONS}: {self.direction}"
            )
        if self.samples < 1:
            raise ConfigurationError(f"samples must be at least 1: {self.samples}")
        if self.kind == "external" and not self.command:
            raise ConfigurationError("An external objective needs a command")
        if self.kind == "nk" and self.landscape_path is None and self.landscape is None:
            raise ConfigurationError("An nk objective needs a landscape file or (n, k, seed)")

    @classmethod
    def from_dict(cls, values: dict) -> "ObjectiveSpec":
        if "direction" not in values:
            raise ConfigurationError("The objective direction must be declared explicitly")
        kind = values.get("kind", "nk")
        command = values.get("command", ())
        if isinstance(command, str):
            command = shlex.split(command)
        landscape = values.get("landscape")
        return cls(
            kind=kind,
            direction=values["direction"],
            samples=int(values.get("samples", 1)),
            landscape_path=values.get("landscape_path"),
            landscape=tuple(int(v) for v in landscape) if landscape else None,
            surrogate=SurrogateParams.from_dict(values.get("surrogate")) if kind == "surrogate" else None,
            command=tuple(command),
            timeout=float(values["timeout"]) if "timeout" in values else None,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "direction": self.direction,
            "samples": self.samples,
            "landscape_path": self.landscape_path,
            "landscape": list(self.landscape) if self.landscape else None,
            "surrogate": self.surrogate.to_dict() if self.surrogate else None,
            "command": list(self.command),
            "timeout": self.timeout,
        }


@dataclass(frozen=True)
class Evaluation:
    fitness: float
    raw: float
    samples: Tuple[float, ...] = field(default_factory=tuple)


class ObjectiveFunction(ABC):
    """A single-sample raw objective. Implementations may hold resources; call close()."""

    @abstractmethod
    def sample(self, genome: Genome, seed: int, sample_index: int = 0) -> float:
        ...

    def close(self) -> None:
        pass


class NKObjective(ObjectiveFunction):
    def __init__(self, landscape: NKLandscape):
        self.landscape = landscape

    def sample(self, genome: Genome, seed: int, sample_index: int = 0) -> float:
        return self.landscape.evaluate(genome)


class SurrogateObjective(ObjectiveFunction):
    def __init__(self, params: SurrogateParams, space: SearchSpace):
        self.params = params
        self.space = space

    def sample(self, genome: Genome, seed: int, sample_index: int = 0) -> float:
        return surrogate_evaluate(
            self.params, genome.values, self.space.lower, self.space.upper, make_rng(seed)
        )


class ExternalObjective(ObjectiveFunction):
    def __init__(self, session: ExternalSession):
        self.session = session

    def sample(self, genome: Genome, seed: int, sample_index: int = 0) -> float:
        return self.session.evaluate(genome.values.tolist(), sample_index, seed)

    def close(self) -> None:
        self.session.close()


class SampledObjective:
    """
    Static sampling and direction handling around a raw objective.

    evaluate() draws `samples` raw values, averages them, and returns the
    internal fitness: the mean for maximization, its negation for minimization,
    so the evolutionary loops always maximize. Each sample receives the seed
    derive_seed(run_seed, evaluation index, sample index). Nothing is cached:
    evaluating the same genome twice consumes two evaluations.
    """

    def __init__(
        self,
        function: ObjectiveFunction,
        direction: str = "maximize",
        samples: int = 1,
        run_seed: int = 0,
        genome_spec: Optional[GenomeSpec] = None,
    ):
        if direction not in DIRECTIONS:
            raise ConfigurationError(f"Unknown direction: {direction}")
        if samples < 1:
            raise ConfigurationError(f"samples must be at least 1: {samples}")
        self.function = function
        self.direction = direction
        self.samples = samples
        self.run_seed = run_seed
        self.genome_spec = genome_spec
        self.evaluations = 0
        self.sample_count = 0

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    def to_internal(self, raw: float) -> float:
        return raw if self.direction == "maximize" else -raw

    def to_raw(self, fitness: float) -> float:
        return self.to_internal(fitness)

    def evaluate(self, genome: Genome) -> Evaluation:
        if self.genome_spec is not None and not self.genome_spec.accepts(genome):
            raise RepresentationError(
                f"Genome of kind {genome.kind} and length {len(genome)} is not compatible with the objective"
            )
        index = self.evaluations
        values: List[float] = []
        for sample_index in range(self.samples):
            seed = derive_seed(self.run_seed, index, sample_index)
            values.append(float(self.function.sample(genome, seed, sample_index)))
            self.sample_count += 1
        self.evaluations += 1
        raw = float(np.mean(values))
        return Evaluation(fitness=self.to_internal(raw), raw=raw, samples=tuple(values))

    def close(self) -> None:
        self.function.close()


def open_objective(
    spec: ObjectiveSpec,
    run_seed: int,
    genome_spec: Optional[GenomeSpec] = None,
    space: Optional[SearchSpace] = None,
    landscape: Optional[NKLandscape] = None,
) -> SampledObjective:
    """
    Build the sampled objective a run evaluates through.

    External objectives start their evaluator process here; the returned object
    must be closed (it is a context manager).
    """
    logger = CustomLogger.get_logger(__name__)
    if spec.kind == "nk":
        if landscape is None:
            if spec.landscape_path is not None:
                landscape = NKLandscape.load(spec.landscape_path)
            else:
                n, k, seed = spec.landscape
                landscape = NKLandscape.generate(n, k, seed)
        function = NKObjective(landscape)
        genome_spec = genome_spec or GenomeSpec.bits(landscape.n)
    elif spec.kind == "surrogate":
        space = space or SearchSpace.default()
        function = SurrogateObjective(spec.surrogate or SurrogateParams.from_dict(), space)
        genome_spec = genome_spec or space.genome_spec()
    else:
        space = space or SearchSpace.default()
        session = ExternalSession(list(spec.command), space.dimension, timeout=spec.timeout)
        try:
            session.open()
        except HDEAError:
            logger.error(f"Could not start external evaluator {list(spec.command)}")
            raise
        function = ExternalObjective(session)
        genome_spec = genome_spec or space.genome_spec()
    logger.debug(
        f"Opened {spec.kind} objective ({spec.direction}, {spec.samples} samples, run seed {run_seed})"
    )
    return SampledObjective(
        function,
        direction=spec.direction,
        samples=spec.samples,
        run_seed=run_seed,
        genome_spec=genome_spec,
    )


def evaluate(spec: ObjectiveSpec, genome: Genome, run_seed: int = 0, **kwargs) -> Evaluation:
    """One-off evaluation of a genome under an objective spec."""
    with open_objective(spec, run_seed, **kwargs) as objective:
        return objective.evaluate(genome)
