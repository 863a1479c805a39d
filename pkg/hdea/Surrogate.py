"""
Desk-scale stand-in for a stochastic simulator over the worker-cell search space.

Closed form, for a genome x with bounds [lo_i, hi_i]:

    z_i     = (x_i - c_i) / (hi_i - lo_i),   c_i = lo_i + center_i * (hi_i - lo_i)
    base(x) = offset + scale * sum_i w_i * z_i**2
                     + ripple * sum_i (1 - cos(2 * pi * frequency * z_i))
    value   = base(x) + Normal(0, noise_sd)

Both sums are non-negative and vanish at x = c, so base(c) = offset is the
minimum. The cosine term adds local optima whose density grows with
`frequency`; with ripple = 0 the function is a plain weighted quadratic.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from hdea.errors import RepresentationError
from hdea.settings.config_loader import section


@dataclass(frozen=True)
class SurrogateParams:
    center: Tuple[float, ...]
    weights: Tuple[float, ...]
    offset: float = 400.0
    scale: float = 400.0
    ripple: float = 15.0
    frequency: float = 3.0
    noise_sd: float = 30.0

    @classmethod
    def from_dict(cls, values: Optional[dict] = None) -> "SurrogateParams":
        merged = section("surrogate")
        merged.update(values or {})
        return cls(
            center=tuple(float(v) for v in merged["center"]),
            weights=tuple(float(v) for v in merged["weights"]),
            offset=float(merged["offset"]),
            scale=float(merged["scale"]),
            ripple=float(merged["ripple"]),
            frequency=float(merged["frequency"]),
            noise_sd=float(merged["noise_sd"]),
        )

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "weights": list(self.weights),
            "offset": self.offset,
            "scale": self.scale,
            "ripple": self.ripple,
            "frequency": self.frequency,
            "noise_sd": self.noise_sd,
        }


def optimum(params: SurrogateParams, lower, upper) -> np.ndarray:
    """The point c where the base function attains its minimum, `offset`."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return lower + np.asarray(params.center) * (upper - lower)


def surrogate_base(params: SurrogateParams, values, lower, upper) -> float:
    values = np.asarray(values, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (len(values) == len(params.center) == len(params.weights)):
        raise RepresentationError(
            f"Surrogate expects {len(params.center)} parameters, got {len(values)}"
        )
    if np.any(values < lower) or np.any(values > upper):
        raise RepresentationError(f"Genome {values.tolist()} lies outside the search space")
    span = np.where(upper > lower, upper - lower, 1.0)
    z = (values - optimum(params, lower, upper)) / span
    quadratic = float(np.sum(np.asarray(params.weights) * z**2))
    ripple = float(np.sum(1.0 - np.cos(2.0 * np.pi * params.frequency * z)))
    return params.offset + params.scale * quadratic + params.ripple * ripple


def surrogate_evaluate(
    params: SurrogateParams, values, lower, upper, rng: np.random.Generator
) -> float:
    """One noisy sample; draws exactly one normal variate from `rng`."""
    base = surrogate_base(params, values, lower, upper)
    return base + float(rng.normal(0.0, params.noise_sd))
