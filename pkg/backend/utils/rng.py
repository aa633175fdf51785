"""
Seed derivation.

One root seed drives a whole run. Each stage (and each sub-stream inside a
stage) gets its own numpy Generator built from

    SeedSequence([root_seed, stage_code, *extra])

where ``stage_code`` is the first 8 bytes of SHA-256(stage name) read as a
little-endian unsigned integer. Generators are PCG64, numpy's default bit
generator, so streams are reproducible across platforms for a fixed numpy
major version.
"""

import hashlib
from typing import Sequence

import numpy as np


def stage_code(stage: str) -> int:
    digest = hashlib.sha256(stage.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed_sequence(root_seed: int, stage: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root_seed) & 0xFFFFFFFFFFFFFFFF, stage_code(stage), *map(int, extra)])


def stage_rng(root_seed: int, stage: str, *extra: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(root_seed, stage, *extra)))


def stage_seed(root_seed: int, stage: str, *extra: int) -> int:
    """A 63-bit integer seed for APIs that take a plain int."""
    state = derive_seed_sequence(root_seed, stage, *extra).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


def generator_state(rng: np.random.Generator) -> dict:
    """JSON-safe copy of a PCG64 generator state (big ints become strings)."""
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": str(state["state"]["state"]),
        "inc": str(state["state"]["inc"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }


def restore_generator(payload: dict) -> np.random.Generator:
    bit_generator = np.random.PCG64()
    bit_generator.state = {
        "bit_generator": payload["bit_generator"],
        "state": {"state": int(payload["state"]), "inc": int(payload["inc"])},
        "has_uint32": int(payload["has_uint32"]),
        "uinteger": int(payload["uinteger"]),
    }
    return np.random.Generator(bit_generator)


def permutation(rng: np.random.Generator, n: int) -> Sequence[int]:
    return [int(i) for i in rng.permutation(n)]
