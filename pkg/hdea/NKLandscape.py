import json
from typing import Tuple

import numpy as np

from hdea.CustomLogger import CustomLogger
from hdea.Genome import BitGenome
from hdea.errors import LandscapeParseError, ParameterError, RepresentationError
from hdea.utils import make_rng

FORMAT_TAG = "nk-landscape/1"
MAX_ENUMERATION_N = 24
ENUMERATION_CHUNK = 1 << 16


class NKLandscape:
    """
    A tunably rugged fitness landscape over N binary genes.

    Gene i contributes tables[i][index], where index is formed from the allele
    of gene i followed by the alleles of its K neighbours, in stored neighbour
    order, read as a binary number with gene i as the high-order bit:

        index = g[i] << K | g[nb[0]] << (K-1) | ... | g[nb[K-1]]

    Fitness is the mean of the N contributions. Landscapes are immutable once
    built and can be regenerated bit-exactly from (n, k, seed).
    """

    def __init__(self, n: int, k: int, neighbors, tables, seed: int = None):
        neighbors = np.array(neighbors, dtype=np.int64).reshape(n, k)
        tables = np.array(tables, dtype=np.float64)
        self._check(n, k, neighbors, tables)
        neighbors.setflags(write=False)
        tables.setflags(write=False)
        self.n = n
        self.k = k
        self.seed = seed
        self.neighbors = neighbors
        self.tables = tables
        self._interactions = np.column_stack((np.arange(n), neighbors))
        self._powers = 1 << np.arange(k, -1, -1)
        self._rows = np.arange(n)

    @staticmethod
    def _check(n, k, neighbors, tables):
        if n < 1:
            raise ParameterError(f"n must be at least 1: n={n}")
        if not 0 <= k <= n - 1:
            raise ParameterError(f"k must lie in 0..n-1={n - 1}: k={k}")
        if tables.shape != (n, 1 << (k + 1)):
            raise ParameterError(
                f"tables must have shape ({n}, {1 << (k + 1)}), got {tables.shape}"
            )
        if np.any(tables < 0.0) or np.any(tables > 1.0):
            raise ParameterError("table entries must lie in [0, 1]")
        for i, row in enumerate(neighbors):
            if len(set(row.tolist())) != k or i in row or np.any((row < 0) | (row >= n)):
                raise ParameterError(
                    f"gene {i} needs {k} distinct neighbours other than itself: {row.tolist()}"
                )

    @classmethod
    def generate(cls, n: int, k: int, seed: int) -> "NKLandscape":
        """
        Draw a random landscape.

        For each gene in order, K neighbours are drawn uniformly without
        replacement from the other n-1 genes; then all tables are filled with
        uniform draws from [0, 1). Generation uses its own PCG64 stream keyed by
        `seed` only.
        """
        if n < 1:
            raise ParameterError(f"n must be at least 1: n={n}")
        if not 0 <= k <= n - 1:
            raise ParameterError(f"k must lie in 0..n-1={n - 1}: k={k}")
        rng = make_rng(seed)
        neighbors = np.empty((n, k), dtype=np.int64)
        for i in range(n):
            others = np.delete(np.arange(n), i)
            neighbors[i] = rng.choice(others, size=k, replace=False)
        tables = rng.random((n, 1 << (k + 1)))
        CustomLogger.get_logger(__name__).debug(
            f"Generated NK landscape n={n} k={k} seed={seed}"
        )
        return cls(n, k, neighbors, tables, seed=seed)

    def evaluate_many(self, genomes: np.ndarray) -> np.ndarray:
        """Fitness of every row of an (m, n) matrix of 0/1 alleles."""
        genomes = np.asarray(genomes)
        if genomes.ndim != 2 or genomes.shape[1] != self.n:
            raise RepresentationError(
                f"Expected genomes of shape (m, {self.n}), got {genomes.shape}"
            )
        indices = genomes[:, self._interactions].astype(np.int64) @ self._powers
        return self.tables[self._rows, indices].mean(axis=-1)

    def evaluate(self, genome: BitGenome) -> float:
        if len(genome) != self.n:
            raise RepresentationError(
                f"Genome length {len(genome)} does not match landscape n={self.n}"
            )
        return float(self.evaluate_many(genome.values[np.newaxis, :])[0])

    def _enumerate(self, start: int, stop: int) -> np.ndarray:
        # Row r is the genome of integer start + r, gene 0 being the most
        # significant bit, so row order is lexicographic order.
        numbers = np.arange(start, stop, dtype=np.int64)[:, np.newaxis]
        shifts = np.arange(self.n - 1, -1, -1, dtype=np.int64)
        return ((numbers >> shifts) & 1).astype(np.uint8)

    def _all_fitnesses(self) -> np.ndarray:
        self._check_enumerable()
        total = 1 << self.n
        return np.concatenate(
            [
                self.evaluate_many(self._enumerate(start, min(start + ENUMERATION_CHUNK, total)))
                for start in range(0, total, ENUMERATION_CHUNK)
            ]
        )

    def _check_enumerable(self):
        if self.n > MAX_ENUMERATION_N:
            raise ParameterError(
                f"Exhaustive enumeration is limited to n <= {MAX_ENUMERATION_N}: n={self.n}"
            )

    def brute_force_optimum(self) -> Tuple[BitGenome, float]:
        """Lexicographically smallest genome attaining the maximum fitness, by enumeration."""
        self._check_enumerable()
        total = 1 << self.n
        best_number, best_fitness = 0, -np.inf
        for start in range(0, total, ENUMERATION_CHUNK):
            fitness = self.evaluate_many(
                self._enumerate(start, min(start + ENUMERATION_CHUNK, total))
            )
            position = int(np.argmax(fitness))
            if fitness[position] > best_fitness:
                best_number, best_fitness = start + position, float(fitness[position])
        genome = BitGenome(self._enumerate(best_number, best_number + 1)[0])
        return genome, best_fitness

    def hill_climb(self, start: BitGenome) -> Tuple[BitGenome, float]:
        """Steepest single-bit ascent from `start` until no flip improves fitness."""
        current = start.values.copy()
        fitness = self.evaluate(start)
        while True:
            neighbours = np.tile(current, (self.n, 1))
            neighbours[self._rows, self._rows] ^= 1
            scores = self.evaluate_many(neighbours)
            best = int(np.argmax(scores))
            if scores[best] <= fitness:
                return BitGenome(current), fitness
            current, fitness = neighbours[best], float(scores[best])

    def count_local_optima(self) -> int:
        """Genomes no worse than any of their n one-bit neighbours (n <= 24)."""
        fitness = self._all_fitnesses()
        numbers = np.arange(1 << self.n, dtype=np.int64)
        optimal = np.ones(len(fitness), dtype=bool)
        for bit in range(self.n):
            optimal &= fitness >= fitness[numbers ^ (1 << bit)]
        return int(optimal.sum())

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
            "neighbors": self.neighbors.tolist(),
            "tables": self.tables.tolist(),
        }

    def serialize(self) -> str:
        """
        JSON text with fields format, n, k, seed, neighbors, tables.

        Floats are written in Python's shortest round-trip form, so the text
        reproduces every table entry exactly and is byte-stable.
        """
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def deserialize(cls, text: str) -> "NKLandscape":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise LandscapeParseError(
                f"Invalid landscape JSON: {e.msg}", f"line {e.lineno} column {e.colno}"
            ) from e
        if not isinstance(data, dict):
            raise LandscapeParseError("Landscape text must hold a JSON object", "root")
        if data.get("format") != FORMAT_TAG:
            raise LandscapeParseError(
                f"Unsupported landscape format {data.get('format')!r}", "format"
            )
        for key in ("n", "k", "neighbors", "tables"):
            if key not in data:
                raise LandscapeParseError(f"Missing field '{key}'", key)
        n, k = data["n"], data["k"]
        if not isinstance(n, int) or not isinstance(k, int):
            raise LandscapeParseError("n and k must be integers", "n/k")
        neighbors, tables = data["neighbors"], data["tables"]
        if not isinstance(neighbors, list) or len(neighbors) != n:
            raise LandscapeParseError(f"Expected {n} neighbour lists", "neighbors")
        if not isinstance(tables, list) or len(tables) != n:
            raise LandscapeParseError(f"Expected {n} tables", "tables")
        for i in range(n):
            if not isinstance(neighbors[i], list) or len(neighbors[i]) != k:
                raise LandscapeParseError(
                    f"Expected {k} neighbours for gene {i}", f"neighbors[{i}]"
                )
            if not isinstance(tables[i], list) or len(tables[i]) != 1 << (k + 1):
                raise LandscapeParseError(
                    f"Expected {1 << (k + 1)} entries for gene {i}", f"tables[{i}]"
                )
        try:
            return cls(n, k, neighbors, tables, seed=data.get("seed"))
        except (ParameterError, TypeError, ValueError) as e:
            raise LandscapeParseError(str(e), "tables/neighbors") from e

    @classmethod
    def load(cls, path: str) -> "NKLandscape":
        with open(path, "r") as file:
            return cls.deserialize(file.read())

    def save(self, path: str) -> None:
        with open(path, "w", newline="") as file:
            file.write(self.serialize())
            file.write("\n")

    def __eq__(self, other):
        return (
            isinstance(other, NKLandscape)
            and (self.n, self.k, self.seed) == (other.n, other.k, other.seed)
            and np.array_equal(self.neighbors, other.neighbors)
            and np.array_equal(self.tables, other.tables)
        )

    def __hash__(self):
        return hash((self.n, self.k, self.seed))
