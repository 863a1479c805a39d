import dataclasses
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from hdea.CustomLogger import CustomLogger
from hdea.Genome import Diploid, Genome, GenomeSpec, Individual, VariationConfig
from hdea.Objective import SampledObjective
from hdea.Variation import Variation
from hdea.errors import (
    ConfigurationError,
    EvaluationError,
    ParameterError,
    ProtocolError,
    RepresentationError,
)
from hdea.settings.config_loader import section
from hdea.utils import make_rng, write_csv, write_json

ALGORITHMS = ("baseline", "hdea", "control-2p")
REPLACEMENTS = ("worst", "tournament")
TRACE_HEADER = ("generation", "best", "mean", "offspring")

# Stream ids under a seed; see make_rng.
INIT_STREAM = 0
EVOLVE_STREAM = 1


@dataclass(frozen=True)
class EAConfig:
    """
    Parameters of one steady-state run.

    budget counts generations, i.e. offspring. init_seed keys the stream that
    draws the initial population and defaults to run_seed; runs that share it
    start from identical populations.
    """

    population_size: int = 30
    budget: int = 20000
    tournament_size: int = 2
    variation: VariationConfig = field(default_factory=VariationConfig)
    algorithm: str = "baseline"
    run_seed: int = 0
    init_seed: Optional[int] = None
    replacement: str = "worst"
    log_every: int = 1000

    def __post_init__(self):
        if self.population_size < 2:
            raise ParameterError(f"population_size must be at least 2: {self.population_size}")
        if self.tournament_size < 2:
            raise ParameterError(f"tournament_size must be at least 2: {self.tournament_size}")
        if self.budget < 0:
            raise ParameterError(f"budget must not be negative: {self.budget}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"Unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.replacement not in REPLACEMENTS:
            raise ConfigurationError(
                f"Unknown replacement {self.replacement!r}; expected one of {REPLACEMENTS}"
            )

    @property
    def initial_seed(self) -> int:
        return self.run_seed if self.init_seed is None else self.init_seed

    @classmethod
    def from_dict(cls, values: dict, protocol: str = "nk_protocol") -> "EAConfig":
        """
        Build a config from an [evolution] table, filling gaps from a protocol.

        Parameters:
            values (dict): Evolution keys, optionally with a nested "variation" table.
            protocol (str): Settings table supplying defaults, "nk_protocol" or
                "realvalued_protocol".
        """
        merged = section(protocol)
        merged.update({key: value for key, value in values.items() if key != "variation"})
        variation = dict(merged)
        variation.update(values.get("variation") or {})
        init_seed = merged.get("init_seed")
        return cls(
            population_size=int(merged["population_size"]),
            budget=int(merged["budget"]),
            tournament_size=int(merged["tournament_size"]),
            variation=VariationConfig.from_dict(variation),
            algorithm=str(merged.get("algorithm", "baseline")),
            run_seed=int(merged.get("run_seed", 0)),
            init_seed=int(init_seed) if init_seed is not None else None,
            replacement=str(merged.get("replacement", "worst")),
            log_every=int(merged.get("log_every", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "budget": self.budget,
            "tournament_size": self.tournament_size,
            "variation": self.variation.to_dict(),
            "algorithm": self.algorithm,
            "run_seed": self.run_seed,
            "init_seed": self.initial_seed,
            "replacement": self.replacement,
            "log_every": self.log_every,
        }


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best: float
    mean: float
    offspring: Optional[float] = None


class Population:
    """The P evaluated haploids of a run, with their fitnesses mirrored in a numpy array."""

    def __init__(self, individuals: Sequence[Individual]):
        self.individuals: List[Individual] = list(individuals)
        self.fitness = np.array([ind.fitness for ind in self.individuals], dtype=np.float64)

    def __len__(self):
        return len(self.individuals)

    def __getitem__(self, index) -> Individual:
        return self.individuals[index]

    def __iter__(self) -> Iterator[Individual]:
        return iter(self.individuals)

    @property
    def genomes(self) -> List[Genome]:
        return [ind.genome for ind in self.individuals]

    def best(self) -> Individual:
        return self.individuals[int(np.argmax(self.fitness))]

    def best_fitness(self) -> float:
        return float(self.fitness.max())

    def mean_fitness(self) -> float:
        return float(self.fitness.mean())

    def replace(self, index: int, individual: Individual) -> None:
        self.individuals[index] = individual
        self.fitness[index] = individual.fitness


def _pick(rng: np.random.Generator, indices: np.ndarray) -> int:
    return int(indices[rng.integers(len(indices))])


def tournament(
    fitness: np.ndarray,
    size: int,
    rng: np.random.Generator,
    exclude: Optional[int] = None,
    worst: bool = False,
) -> int:
    """
    Index of the fittest (or, with worst=True, least fit) of `size` entrants.

    Entrants are drawn uniformly without replacement from the candidate slots,
    or with replacement when `size` exceeds the number of candidates. The slot
    `exclude` never enters. Ties are broken uniformly at random.
    """
    candidates = np.arange(len(fitness))
    if exclude is not None:
        candidates = np.delete(candidates, exclude)
    if len(candidates) == 0:
        raise ParameterError("A tournament needs at least one candidate")
    entrants = rng.choice(candidates, size=size, replace=size > len(candidates))
    scores = fitness[entrants]
    target = scores.min() if worst else scores.max()
    return _pick(rng, entrants[scores == target])


def draw_partners(size: int, rng: np.random.Generator) -> np.ndarray:
    """For each slot j, a partner index drawn uniformly from the other size-1 slots."""
    if size < 2:
        raise ParameterError(f"Pairing needs at least 2 individuals: {size}")
    partners = rng.integers(size - 1, size=size)
    return partners + (partners >= np.arange(size))


class RunTrace:
    """
    Per-generation history of one run.

    Row 0 describes the evaluated initial population (no offspring); row g,
    for g in 1..budget, the population after step g. Series hold internal
    fitness, which is maximized; raw_series() converts back to objective
    units for minimization runs.
    """

    def __init__(self, config: EAConfig, direction: str = "maximize", samples: int = 1):
        length = config.budget + 1
        self.config = config
        self.direction = direction
        self.best = np.full(length, np.nan)
        self.mean = np.full(length, np.nan)
        self.offspring = np.full(length, np.nan)
        self.offspring_samples = np.full((length, samples), np.nan) if samples > 1 else None
        self.evaluations = 0
        self.final_population: Optional[Population] = None

    def __len__(self):
        return len(self.best)

    def record(self, generation: int, population: Population, offspring: Optional[Individual] = None):
        self.best[generation] = population.best_fitness()
        self.mean[generation] = population.mean_fitness()
        if offspring is not None:
            self.offspring[generation] = offspring.fitness
            self.evaluations += offspring.eval_count
            if self.offspring_samples is not None:
                self.offspring_samples[generation] = offspring.samples
        return self.record_at(generation)

    def record_at(self, generation: int) -> GenerationRecord:
        offspring = self.offspring[generation]
        return GenerationRecord(
            generation=generation,
            best=float(self.best[generation]),
            mean=float(self.mean[generation]),
            offspring=None if np.isnan(offspring) else float(offspring),
        )

    @property
    def records(self) -> Iterator[GenerationRecord]:
        return (self.record_at(g) for g in range(len(self)))

    @property
    def best_individual(self) -> Individual:
        return self.final_population.best()

    @property
    def final_best(self) -> float:
        return float(self.best[-1])

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    def raw_series(self, name: str) -> np.ndarray:
        """A series in objective units: negated internal fitness when minimizing."""
        series = getattr(self, name)
        return -series if self.direction == "minimize" else series.copy()

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.best) >= 0))

    def rows(self):
        best, mean, offspring = (self.raw_series(s) for s in ("best", "mean", "offspring"))
        for generation in range(len(self)):
            yield generation, float(best[generation]), float(mean[generation]), float(offspring[generation])

    def to_dict(self) -> dict:
        """Provenance sidecar: config, direction, evaluation count and the best haploid."""
        best = self.best_individual
        payload = {
            "config": self.config.to_dict(),
            "direction": self.direction,
            "evaluations": self.evaluations,
            "generations": len(self) - 1,
            "best_individual": {
                "genome": best.genome.values.tolist(),
                "fitness": best.fitness,
                "raw": best.raw,
                "samples": list(best.samples),
            },
        }
        if self.offspring_samples is not None:
            payload["offspring_samples"] = [
                [None if np.isnan(v) else float(v) for v in row] for row in self.offspring_samples
            ]
        return payload

    def save(self, path_stem: str, metadata: Optional[dict] = None) -> None:
        """Write <stem>.csv (generation,best,mean,offspring in objective units) and <stem>.json."""
        write_csv(f"{path_stem}.csv", TRACE_HEADER, self.rows())
        payload = self.to_dict()
        payload.update(metadata or {})
        write_json(f"{path_stem}.json", payload)


class Evolver:
    """
    Steady-state evolution of haploids, in three variants sharing one loop.

        baseline    two tournaments over haploid fitness, crossover, mutation
        hdea        a temporary diploid pool whose fitness is the mean of the
                    pair; tournaments pick two diploids, meiosis yields the gamete
        control-2p  a temporary 2P haploid pool built like the diploid pool,
                    then the baseline operators

    Every variant evaluates exactly one offspring per generation and puts it in
    place of a member chosen by the configured replacement. The population of
    each step is mutated in place.
    """

    def __init__(
        self,
        config: EAConfig,
        objective: SampledObjective,
        genome_spec: Optional[GenomeSpec] = None,
    ):
        self.config = config
        self.objective = objective
        self.genome_spec = genome_spec or objective.genome_spec
        if self.genome_spec is None:
            raise ConfigurationError("The genome representation of the run is unknown")
        self._check_representation()
        self.variation = Variation(config.variation)
        self.logger = CustomLogger.get_logger(__name__)
        self.generation = 0
        self._steps = {
            "baseline": self.ea_step,
            "hdea": self.hdea_step,
            "control-2p": self.control_2p_step,
        }

    def _check_representation(self):
        mutation = self.config.variation.mutation_kind
        expected = {"single-bit-flip": "bit", "per-allele-real": "real"}.get(mutation)
        if expected is not None and expected != self.genome_spec.kind:
            raise RepresentationError(
                f"Mutation {mutation} cannot act on {self.genome_spec.kind} genomes"
            )

    def _evaluate(self, genome: Genome) -> Individual:
        try:
            evaluation = self.objective.evaluate(genome)
        except (EvaluationError, ProtocolError) as e:
            message = f"Evaluation failed at generation {self.generation}: {e}"
            if isinstance(e, ProtocolError):
                error = ProtocolError(message)
            else:
                error = EvaluationError(message)
                error.stderr_excerpt = e.stderr_excerpt
            error.generation = self.generation
            raise error from e
        return Individual(
            genome=genome,
            fitness=evaluation.fitness,
            eval_count=len(evaluation.samples),
            raw=evaluation.raw,
            samples=evaluation.samples,
        )

    def initialize(self) -> Population:
        """Draw P genomes uniformly from the init stream and evaluate them."""
        rng = make_rng(self.config.initial_seed, INIT_STREAM)
        genomes = [
            Variation.random_genome(self.genome_spec, rng)
            for _ in range(self.config.population_size)
        ]
        self.generation = 0
        return Population([self._evaluate(g) for g in genomes])

    def _replacement_index(self, population: Population, rng: np.random.Generator) -> int:
        if self.config.replacement == "worst":
            return _pick(rng, np.flatnonzero(population.fitness == population.fitness.min()))
        size = min(self.config.tournament_size, len(population))
        return tournament(population.fitness, size, rng, worst=True)

    def _insert(
        self, population: Population, genome: Genome, rng, trace: RunTrace = None
    ) -> GenerationRecord:
        offspring = self._evaluate(genome)
        population.replace(self._replacement_index(population, rng), offspring)
        if trace is not None:
            return trace.record(self.generation, population, offspring)
        return GenerationRecord(
            self.generation, population.best_fitness(), population.mean_fitness(), offspring.fitness
        )

    def _breed(self, a: Genome, b: Genome, rng: np.random.Generator) -> Genome:
        children = self.variation.recombine(a, b, rng)
        return self.variation.mutate(children[int(rng.integers(2))], rng)

    def ea_step(
        self, population: Population, rng: np.random.Generator, trace: RunTrace = None
    ) -> GenerationRecord:
        """
        One generation of the baseline steady-state EA.

        Two parents are chosen by independent tournaments over haploid
        fitness, recombined, one child kept at random, mutated and evaluated.
        """
        size = self.config.tournament_size
        first = population[tournament(population.fitness, size, rng)]
        second = population[tournament(population.fitness, size, rng)]
        return self._insert(population, self._breed(first.genome, second.genome, rng), rng, trace)

    @staticmethod
    def build_diploid_pool(population: Population, rng: np.random.Generator) -> List[Diploid]:
        """Pair every haploid j with a partner drawn uniformly from the other P-1; no evaluations."""
        partners = draw_partners(len(population), rng)
        return [Diploid(population[j], population[int(p)]) for j, p in enumerate(partners)]

    @staticmethod
    def build_haploid_pool(population: Population, rng: np.random.Generator) -> List[Individual]:
        """The P members followed by one uniformly drawn partner per member, as haploids."""
        partners = draw_partners(len(population), rng)
        return list(population) + [population[int(p)] for p in partners]

    def hdea_step(
        self, population: Population, rng: np.random.Generator, trace: RunTrace = None
    ) -> GenerationRecord:
        pool = self.build_diploid_pool(population, rng)
        combined = np.array([d.combined_fitness for d in pool])
        size = self.config.tournament_size
        first = tournament(combined, size, rng)
        second = tournament(combined, size, rng, exclude=first)

        gametes = []
        for parent in (pool[first], pool[second]):
            products = self.variation.meiosis(parent, rng)
            gametes.append(products[int(rng.integers(len(products)))])
        child = self.variation.mutate(gametes[int(rng.integers(2))], rng)
        return self._insert(population, child, rng, trace)

    def control_2p_step(
        self, population: Population, rng: np.random.Generator, trace: RunTrace = None
    ) -> GenerationRecord:
        pool = self.build_haploid_pool(population, rng)
        fitness = np.array([ind.fitness for ind in pool])
        size = self.config.tournament_size
        first = tournament(fitness, size, rng)
        second = tournament(fitness, size, rng, exclude=first)
        return self._insert(population, self._breed(pool[first].genome, pool[second].genome, rng), rng, trace)

    def run(self, initial_population: Optional[Sequence[Individual]] = None) -> RunTrace:
        """
        Evaluate (or adopt) the initial population and evolve it for `budget` generations.

        Parameters:
            initial_population: Optional pre-evaluated individuals. They are
                copied, so the same list can seed several runs; their samples
                count towards this run's evaluations.

        Returns:
            RunTrace: The complete history, with final population.
        """
        config = self.config
        if initial_population is None:
            population = self.initialize()
        else:
            population = self._adopt(initial_population)

        trace = RunTrace(config, direction=self.objective.direction, samples=self.objective.samples)
        trace.evaluations = sum(ind.eval_count for ind in population)
        trace.record(0, population)

        self.logger.info(
            f"Starting {config.algorithm} run: P={config.population_size} T={config.tournament_size} "
            f"budget={config.budget} seed={config.run_seed}"
        )
        step = self._steps[config.algorithm]
        rng = make_rng(config.run_seed, EVOLVE_STREAM)
        for generation in range(1, config.budget + 1):
            self.generation = generation
            record = step(population, rng, trace)
            if config.log_every and generation % config.log_every == 0:
                self.logger.debug(
                    f"Generation {generation}: best {record.best:.6g}, mean {record.mean:.6g}"
                )
        trace.final_population = population
        self.logger.info(
            f"Finished {config.algorithm} run: final best {trace.final_best:.6g} "
            f"after {trace.evaluations} evaluations"
        )
        return trace

    def _adopt(self, individuals: Sequence[Individual]) -> Population:
        if len(individuals) != self.config.population_size:
            raise ConfigurationError(
                f"Initial population holds {len(individuals)} individuals, expected {self.config.population_size}"
            )
        for ind in individuals:
            if not self.genome_spec.accepts(ind.genome):
                raise RepresentationError("Initial population genome does not match the run's representation")
        return Population([dataclasses.replace(ind) for ind in individuals])


def run(
    config: EAConfig,
    objective: SampledObjective,
    initial_population: Optional[Sequence[Individual]] = None,
) -> RunTrace:
    return Evolver(config, objective).run(initial_population)
