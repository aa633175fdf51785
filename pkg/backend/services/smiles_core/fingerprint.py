"""
Circular (Morgan-style) fingerprints and Tanimoto similarity.

Identifiers are 64-bit FNV-1a hashes over little-endian 8-byte integers.
Radius 0 hashes the atom invariant (atomic number, degree, charge, H count,
ring flag, aromatic flag). Each further iteration hashes the atom's previous
identifier, the iteration number and its neighbours' sorted (bond code,
identifier) pairs. Every identifier from radius 0..r sets bit ``id & (nbits-1)``.
"""

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from utils.errors import InvalidGraph, WidthMismatch

from .graph import MolGraph

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_RADIUS = 2
DEFAULT_NBITS = 2048


def fnv1a64(values: Iterable[int]) -> int:
    h = FNV_OFFSET
    for value in values:
        for byte in (int(value) & _MASK64).to_bytes(8, "little"):
            h ^= byte
            h = (h * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class Fingerprint:
    bits: np.ndarray  # bool, shape (nbits,)
    radius: int

    @property
    def nbits(self) -> int:
        return int(self.bits.shape[0])

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def on_bits(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.bits)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.radius == other.radius and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.radius, self.bits.tobytes()))

    @classmethod
    def from_bits(cls, on_bits: Iterable[int], nbits: int = DEFAULT_NBITS, radius: int = DEFAULT_RADIUS):
        bits = np.zeros(nbits, dtype=bool)
        bits[list(on_bits)] = True
        return cls(bits=bits, radius=radius)


def atom_identifiers(g: MolGraph, radius: int) -> List[List[int]]:
    """Per-iteration identifier lists, ``result[r][atom]``."""
    ring = g.ring_atoms
    current = [
        fnv1a64((
            atom.atomic_number,
            g.degree(i),
            atom.charge,
            atom.hydrogens,
            int(i in ring),
            int(atom.aromatic),
        ))
        for i, atom in enumerate(g.atoms)
    ]
    layers = [current]
    for it in range(1, radius + 1):
        nxt = []
        for i in range(len(g.atoms)):
            pairs = sorted((int(order), current[j]) for j, order in g.neighbors[i])
            flat = [it, current[i]]
            for code, ident in pairs:
                flat.extend((code, ident))
            nxt.append(fnv1a64(flat))
        current = nxt
        layers.append(current)
    return layers


def morgan_fingerprint(g: MolGraph, radius: int = DEFAULT_RADIUS, nbits: int = DEFAULT_NBITS) -> Fingerprint:
    if not g.atoms:
        raise InvalidGraph("Cannot fingerprint an empty graph")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if nbits <= 0 or nbits & (nbits - 1):
        raise ValueError(f"nbits must be a power of two, got {nbits}")
    bits = np.zeros(nbits, dtype=bool)
    for layer in atom_identifiers(g, radius):
        for ident in layer:
            bits[ident & (nbits - 1)] = True
    return Fingerprint(bits=bits, radius=radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.nbits != b.nbits:
        raise WidthMismatch(f"Fingerprint widths differ: {a.nbits} vs {b.nbits}")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(a.bits & b.bits)) / union
