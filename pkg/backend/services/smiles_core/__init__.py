"""
SMILES handling: tokenization, parsing, validity, canonical form, random
enumeration, circular fingerprints and structural descriptors.

All functions are pure and operate on immutable inputs.
"""

from .descriptors import GROUP_NAMES, DescriptorSet, descriptors, molecular_weight
from .fingerprint import Fingerprint, morgan_fingerprint, tanimoto
from .graph import Atom, Bond, BondOrder, MolGraph
from .parser import parse
from .tokenizer import TokenSeq, detokenize, tokenize
from .valence import allowed_valences, is_valid, is_valid_graph, valence_violations
from .writer import augment_dataset, canonical_smiles, canonicalize, enumerate_random

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "DescriptorSet",
    "Fingerprint",
    "GROUP_NAMES",
    "MolGraph",
    "TokenSeq",
    "allowed_valences",
    "augment_dataset",
    "canonical_smiles",
    "canonicalize",
    "descriptors",
    "detokenize",
    "enumerate_random",
    "is_valid",
    "is_valid_graph",
    "molecular_weight",
    "morgan_fingerprint",
    "parse",
    "tanimoto",
    "tokenize",
    "valence_violations",
]
