"""
SMILES writing: canonical form, random enumeration and dataset augmentation.

Both writers share one emitter. Given a priority per atom (lower first) and
a root per connected component, the emitter runs a depth-first search that
visits neighbours in priority order, records back edges as ring closures,
then writes the tree with branches in parentheses and the last child on the
main chain. Ring digits are the lowest free label (1-9, then %10-%99);
labels closed on an atom are only released after that atom's openings have
been assigned.

Canonical ranks come from iterative refinement of the invariant (atomic
number, aromatic, charge, degree, H count). Remaining ties are split one
atom at a time and the lexicographically smallest emitted string wins; the
search stops opening new branches after ``settings.CANONICAL_TIE_BUDGET``
leaves. Isotopes and stereo bond marks are not part of the canonical form.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from utils.errors import InvalidGraph, InvalidMolecule
from utils.logger import get_logger
from utils.rng import stage_seed

from .graph import ORGANIC_SUBSET, BondOrder, MolGraph, implicit_hydrogens
from .parser import parse
from .valence import is_valid

logger = get_logger("smiles_core.writer")

_BOND_CHAR = {BondOrder.DOUBLE: "=", BondOrder.TRIPLE: "#"}


# --------------------------------------------------------------------------
# emitter
# --------------------------------------------------------------------------


@dataclass
class _Layout:
    children: Dict[int, List[int]] = field(default_factory=dict)
    opens: Dict[int, List[Tuple[int, int]]] = field(default_factory=dict)
    closes: Dict[int, List[Tuple[int, int]]] = field(default_factory=dict)


def _bond_text(g: MolGraph, a: int, b: int) -> str:
    bond = g.bond_between(a, b)
    both_aromatic = g.atoms[a].aromatic and g.atoms[b].aromatic
    if bond.order is BondOrder.SINGLE:
        return "-" if both_aromatic else ""
    if bond.order is BondOrder.AROMATIC:
        return "" if both_aromatic else ":"
    return _BOND_CHAR[bond.order]


def _atom_text(g: MolGraph, i: int, include_isotopes: bool) -> str:
    atom = g.atoms[i]
    isotope = atom.isotope if include_isotopes else None
    orders = [order for _, order in g.neighbors[i]]
    symbol = atom.symbol.lower() if atom.aromatic else atom.symbol
    organic = (
        atom.symbol in ORGANIC_SUBSET
        and atom.charge == 0
        and isotope is None
        and (not atom.aromatic or len(atom.symbol) == 1 and atom.symbol in "BCNOPS")
        and atom.hydrogens == implicit_hydrogens(atom.symbol, atom.aromatic, orders)
    )
    if organic:
        return symbol
    text = "["
    if isotope is not None:
        text += str(isotope)
    text += symbol
    if atom.hydrogens:
        text += "H" if atom.hydrogens == 1 else f"H{atom.hydrogens}"
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        text += sign if abs(atom.charge) == 1 else f"{sign}{abs(atom.charge)}"
    return text + "]"


def _ring_label(n: int) -> str:
    return str(n) if n < 10 else f"%{n}"


def _layout(g: MolGraph, root: int, priority: Sequence[int], visited: List[bool], layout: _Layout):
    seen_edges = set()

    def dfs(v: int, parent: Optional[int]) -> None:
        visited[v] = True
        layout.children[v] = []
        for w, _ in sorted(g.neighbors[v], key=lambda nb: priority[nb[0]]):
            if w == parent:
                continue
            key = (min(v, w), max(v, w))
            if key in seen_edges:
                continue
            seen_edges.add(key)
            if visited[w]:
                layout.opens.setdefault(w, []).append(key)
                layout.closes.setdefault(v, []).append(key)
            else:
                layout.children[v].append(w)
                dfs(w, v)

    dfs(root, None)


def _emit_component(g: MolGraph, root: int, priority: Sequence[int], visited: List[bool],
                    include_isotopes: bool) -> str:
    layout = _Layout()
    _layout(g, root, priority, visited, layout)

    labels: Dict[Tuple[int, int], int] = {}
    in_use = set()
    parts: List[str] = []

    def take_label() -> int:
        n = 1
        while n in in_use:
            n += 1
        if n > 99:
            raise InvalidGraph("More than 99 simultaneously open ring bonds")
        in_use.add(n)
        return n

    def write(v: int, parent: Optional[int]) -> None:
        if parent is not None:
            parts.append(_bond_text(g, parent, v))
        parts.append(_atom_text(g, v, include_isotopes))
        released = []
        for key in layout.closes.get(v, []):
            n = labels.pop(key)
            parts.append(_ring_label(n))
            released.append(n)
        for key in layout.opens.get(v, []):
            n = take_label()
            labels[key] = n
            parts.append(_bond_text(g, key[0], key[1]) + _ring_label(n))
        in_use.difference_update(released)
        kids = layout.children[v]
        for k, w in enumerate(kids):
            if k < len(kids) - 1:
                parts.append("(")
                write(w, v)
                parts.append(")")
            else:
                write(w, v)

    write(root, None)
    return "".join(parts)


# --------------------------------------------------------------------------
# canonical form
# --------------------------------------------------------------------------


def _dense_ranks(keys: Sequence) -> List[int]:
    order = {key: r for r, key in enumerate(sorted(set(keys)))}
    return [order[key] for key in keys]


def _refine(g: MolGraph, ranks: List[int]) -> List[int]:
    classes = len(set(ranks))
    while True:
        keys = [
            (ranks[v], tuple(sorted((int(order), ranks[w]) for w, order in g.neighbors[v])))
            for v in range(len(g.atoms))
        ]
        new = _dense_ranks(keys)
        new_classes = len(set(new))
        if new_classes == classes:
            return new
        ranks, classes = new, new_classes


def _initial_ranks(g: MolGraph) -> List[int]:
    keys = [
        (atom.atomic_number, atom.aromatic, atom.charge, g.degree(i), atom.hydrogens)
        for i, atom in enumerate(g.atoms)
    ]
    return _dense_ranks(keys)


def _emit_ranked(g: MolGraph, ranks: Sequence[int]) -> str:
    labels = g.component_of()
    roots: Dict[int, int] = {}
    for i, label in enumerate(labels):
        if label not in roots or ranks[i] < ranks[roots[label]]:
            roots[label] = i
    visited = [False] * len(g.atoms)
    pieces = [_emit_component(g, root, ranks, visited, include_isotopes=False) for root in roots.values()]
    return ".".join(sorted(pieces))


class _TieSearch:
    def __init__(self, g: MolGraph, budget: int):
        self.g = g
        self.budget = max(1, budget)
        self.leaves = 0

    def best(self, ranks: List[int]) -> str:
        ranks = _refine(self.g, ranks)
        counts: Dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = [r for r, c in counts.items() if c > 1]
        if not tied:
            self.leaves += 1
            return _emit_ranked(self.g, ranks)

        target = min(tied)
        members = [i for i, r in enumerate(ranks) if r == target]
        result = None
        for k, chosen in enumerate(members):
            if k > 0 and self.leaves >= self.budget:
                break
            split = _dense_ranks([(r, 0 if i == chosen else 1) for i, r in enumerate(ranks)])
            candidate = self.best(split)
            if result is None or candidate < result:
                result = candidate
        return result


def canonicalize(g: MolGraph) -> str:
    if not g.atoms:
        raise InvalidGraph("Cannot canonicalize an empty graph")
    search = _TieSearch(g, settings.CANONICAL_TIE_BUDGET)
    result = search.best(_initial_ranks(g))
    if search.leaves >= search.budget:
        logger.debug(
            "Canonical tie budget reached",
            extra={"extra_fields": {"atoms": len(g.atoms), "leaves": search.leaves}},
        )
    return result


def canonical_smiles(s: str) -> str:
    return canonicalize(parse(s))


# --------------------------------------------------------------------------
# enumeration / augmentation
# --------------------------------------------------------------------------


def enumerate_random(g: MolGraph, seed: int) -> str:
    """A random writing of ``g``.

    Uses numpy's PCG64 seeded with ``seed``: one permutation of atom indices
    serves as neighbour priority everywhere, each component's root is drawn
    uniformly from its atoms and components are written in shuffled order.
    """
    if not g.atoms:
        raise InvalidGraph("Cannot enumerate an empty graph")
    rng = np.random.default_rng(seed)
    priority = [int(p) for p in rng.permutation(len(g.atoms))]

    labels = g.component_of()
    members: Dict[int, List[int]] = {}
    for i, label in enumerate(labels):
        members.setdefault(label, []).append(i)
    comps = list(members.values())
    order = [int(k) for k in rng.permutation(len(comps))]

    visited = [False] * len(g.atoms)
    pieces = []
    for k in order:
        atoms = comps[k]
        root = atoms[int(rng.integers(len(atoms)))]
        pieces.append(_emit_component(g, root, priority, visited, include_isotopes=True))
    return ".".join(pieces)


def augment_dataset(smiles: Sequence[str], factor: int, seed: int) -> List[str]:
    """Each molecule contributes its original string plus ``factor - 1`` enumerations.

    Output is grouped per molecule: ``[s0, e0_1, .., s1, e1_1, ..]``. The
    enumeration seed for molecule i, draw j is derived from ``seed`` so any
    slice of the dataset augments identically.
    """
    if factor < 1:
        raise ValueError(f"Augmentation factor must be >= 1, got {factor}")
    graphs = []
    for i, s in enumerate(smiles):
        if not is_valid(s):
            raise InvalidMolecule(i, s)
        graphs.append(parse(s))
    if factor == 1:
        return list(smiles)

    out: List[str] = []
    for i, (s, g) in enumerate(zip(smiles, graphs)):
        out.append(s)
        for j in range(1, factor):
            out.append(enumerate_random(g, stage_seed(seed, "augment", i, j)))
    logger.info(
        f"Augmented {len(smiles)} molecules x{factor}",
        extra={"extra_fields": {"inputs": len(smiles), "outputs": len(out), "factor": factor}},
    )
    return out

