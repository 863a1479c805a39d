import csv
import hashlib
import json
import math
import os
from typing import Iterable, List, Sequence

import numpy as np

from hdea.errors import ConfigurationError

SEED_BITS = 63


def derive_seed(*parts) -> int:
    """
    Derive a 63-bit seed from an ordered tuple of labels and integers.

    The parts are serialized as compact JSON and hashed with SHA-256, so the
    result is identical on every platform and Python version.

    Example:
        derive_seed(base_seed, "landscape", n, k, landscape_index)
    """
    payload = json.dumps(list(parts), separators=(",", ":"), sort_keys=True)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> (64 - SEED_BITS)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Build a PCG64 generator for one named stream of a seed.

    Streams are keyed by (seed, *stream) through numpy's SeedSequence, which is
    platform independent; the same key always yields the same sequence.
    """
    entropy = [int(seed)] + [int(s) for s in stream]
    if any(e < 0 for e in entropy):
        raise ValueError(f"Seeds and stream ids must be non-negative: {entropy}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def format_float(value) -> str:
    """Shortest round-trip text for a float; empty string for None/NaN."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a comma-separated file with LF line endings and a header row."""
    with open(path, "w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def json_safe(payload):
    """Replace NaN and infinite floats by None, recursing into dicts and lists."""
    if isinstance(payload, dict):
        return {key: json_safe(value) for key, value in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [json_safe(value) for value in payload]
    if isinstance(payload, float) and not math.isfinite(payload):
        return None
    return payload


def write_json(path: str, payload) -> None:
    with open(path, "w", newline="") as file:
        file.write(json.dumps(json_safe(payload), indent=2, sort_keys=True, allow_nan=False))
        file.write("\n")


def read_csv_column(path: str, column: str) -> List[float]:
    """Read one numeric column of a CSV file, skipping empty cells."""
    if not os.path.isfile(path):
        raise ConfigurationError(f"CSV file not found at {path}")
    with open(path, "r", newline="") as file:
        reader = csv.DictReader(file)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ConfigurationError(f"Column '{column}' not found in {path}")
        try:
            return [float(row[column]) for row in reader if row[column] != ""]
        except ValueError as e:
            raise ConfigurationError(f"Column '{column}' of {path} is not numeric: {e}") from e
