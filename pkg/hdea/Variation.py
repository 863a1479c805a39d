from typing import Tuple

import numpy as np

from hdea.Genome import BitGenome, Diploid, Genome, GenomeSpec, RealGenome, VariationConfig
from hdea.errors import RepresentationError


class Variation:
    """
    Crossover, mutation and two-step meiosis for both genome kinds.

    The static methods are the primitive operators; the instance methods apply
    them as configured by a VariationConfig and are what the evolutionary
    loops call. Every random choice comes from the generator passed in, so a
    seeded generator makes every operator reproducible.
    """

    def __init__(self, config: VariationConfig):
        self.config = config

    @staticmethod
    def one_point_crossover(a: Genome, b: Genome, cut: int) -> Tuple[Genome, Genome]:
        """
        Exchange the tails of two genomes after position `cut`.

        Parameters:
            a, b (Genome): Parents of the same kind and length L.
            cut (int): Cut point in 0..L; the children are a[:cut] + b[cut:] and
                b[:cut] + a[cut:].

        Returns:
            tuple: The two children.
        """
        a.check_compatible(b)
        if not 0 <= cut <= len(a):
            raise RepresentationError(f"Cut point {cut} outside 0..{len(a)}")
        child1 = np.concatenate((a.values[:cut], b.values[cut:]))
        child2 = np.concatenate((b.values[:cut], a.values[cut:]))
        return a.with_values(child1), a.with_values(child2)

    @staticmethod
    def uniform_crossover(a: Genome, b: Genome, rng: np.random.Generator) -> Tuple[Genome, Genome]:
        """Swap the alleles of a and b independently at each position with probability 1/2."""
        a.check_compatible(b)
        swap = rng.random(len(a)) < 0.5
        child1 = np.where(swap, b.values, a.values)
        child2 = np.where(swap, a.values, b.values)
        return a.with_values(child1), a.with_values(child2)

    @staticmethod
    def mutate_single_bit(g: BitGenome, rng: np.random.Generator) -> BitGenome:
        """Flip exactly one uniformly chosen bit."""
        if g.kind != "bit":
            raise RepresentationError("Single-bit-flip mutation needs a bit genome")
        if len(g) == 0:
            raise RepresentationError("Cannot mutate an empty genome")
        bits = g.values.copy()
        position = rng.integers(len(bits))
        bits[position] ^= 1
        return BitGenome(bits)

    @staticmethod
    def mutate_per_allele(
        g: RealGenome, cfg: VariationConfig, rng: np.random.Generator
    ) -> RealGenome:
        """
        Perturb each allele with probability cfg.per_allele_rate.

        A perturbed allele receives a uniform step from
        [-step_fraction, +step_fraction] times its dimension's range and is then
        clamped to its bounds. Mask and steps are drawn for all positions, in
        that order, whatever the rate.
        """
        if g.kind != "real":
            raise RepresentationError("Per-allele mutation needs a real genome")
        span = g.upper - g.lower
        mutate = rng.random(len(g)) < cfg.per_allele_rate
        steps = rng.uniform(-cfg.step_fraction, cfg.step_fraction, len(g)) * span
        values = np.where(mutate, g.values + steps, g.values)
        return g.with_values(np.clip(values, g.lower, g.upper))

    @staticmethod
    def random_genome(spec: GenomeSpec, rng: np.random.Generator) -> Genome:
        """Draw bits uniformly from {0,1} or reals uniformly from each [lo, hi]."""
        if spec.kind == "bit":
            return BitGenome(rng.integers(0, 2, spec.length, dtype=np.uint8))
        lower = np.asarray(spec.lower, dtype=float)
        upper = np.asarray(spec.upper, dtype=float)
        return RealGenome(rng.uniform(lower, upper), lower, upper)

    def recombine(self, a: Genome, b: Genome, rng: np.random.Generator) -> Tuple[Genome, Genome]:
        """
        Apply the configured crossover with probability crossover_rate.

        When the gate fails the parents are returned unchanged. One-point cuts
        are uniform over 1..L-1, so an applied crossover always splits the
        genomes; genomes of length 1 pass through.
        """
        a.check_compatible(b)
        if rng.random() >= self.config.crossover_rate:
            return a, b
        if self.config.crossover_kind == "uniform":
            return self.uniform_crossover(a, b, rng)
        if len(a) < 2:
            return a, b
        return self.one_point_crossover(a, b, int(rng.integers(1, len(a))))

    def mutate(self, g: Genome, rng: np.random.Generator) -> Genome:
        kind = self.config.mutation_kind
        if kind == "none":
            return g
        if kind == "single-bit-flip":
            return self.mutate_single_bit(g, rng)
        return self.mutate_per_allele(g, self.config, rng)

    def meiosis(self, d: Diploid, rng: np.random.Generator) -> Tuple[Genome, Genome, Genome, Genome]:
        """
        Two-step meiosis of a diploid.

        Both genomes are replicated and one copy of each is recombined. The
        result holds the two parental genomes verbatim followed by the two
        recombinants: (X, Y, R1, R2).
        """
        x, y = d.first.genome, d.second.genome
        x.check_compatible(y)
        r1, r2 = self.recombine(x, y, rng)
        return x, y, r1, r2
