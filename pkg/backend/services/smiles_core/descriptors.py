"""
Structural descriptors: molecular weight, ring count and functional groups.

Group patterns, matched on the adjacency structure:

    nitro          N bonded to two terminal O, as N(=O)=O or [N+](=O)[O-]
    nitramine      nitro N whose third neighbour is N
    nitrate_ester  nitro N whose third neighbour is a non-terminal O
    aromatic_ring  cyclomatic number of the aromatic-bond subgraph
    ether          C-O-C, single bonds, O not bound to a carbonyl carbon
    ketone         C(=O) with exactly two further neighbours, both C
    amide          carbonyl C single-bonded to N (one per C-N pair)
    ester          carbonyl C single-bonded to a non-terminal O and to a C
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from utils.errors import InvalidGraph

from .graph import ATOMIC_MASS, Bond, BondOrder, MolGraph, count_components

GROUP_NAMES = (
    "nitro",
    "nitramine",
    "nitrate_ester",
    "aromatic_ring",
    "ether",
    "ketone",
    "amide",
    "ester",
)

_H_MASS = ATOMIC_MASS["H"]


@dataclass(frozen=True)
class DescriptorSet:
    molecular_weight: float
    ring_count: int
    group_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def aromatic_ring_count(self) -> int:
        return self.group_counts.get("aromatic_ring", 0)


def molecular_weight(g: MolGraph) -> float:
    total = 0.0
    for atom in g.atoms:
        if atom.symbol not in ATOMIC_MASS:
            raise InvalidGraph(f"No atomic mass for element {atom.symbol!r}")
        total += ATOMIC_MASS[atom.symbol] + atom.hydrogens * _H_MASS
    return total


def _terminal_oxygens(g: MolGraph, i: int) -> List[tuple]:
    return [
        (j, order)
        for j, order in g.neighbors[i]
        if g.atoms[j].symbol == "O" and g.degree(j) == 1
    ]


def _nitro_third_neighbor(g: MolGraph, i: int) -> Optional[int]:
    """For a nitro nitrogen return the index of its non-oxygen partner (or -1); None otherwise."""
    atom = g.atoms[i]
    if atom.symbol != "N" or atom.aromatic:
        return None
    oxygens = _terminal_oxygens(g, i)
    if len(oxygens) != 2 or g.degree(i) > 3:
        return None
    orders = sorted(order for _, order in oxygens)
    neutral = orders == [BondOrder.DOUBLE, BondOrder.DOUBLE] and atom.charge == 0
    charged = (
        orders == [BondOrder.SINGLE, BondOrder.DOUBLE]
        and atom.charge == 1
        and any(g.atoms[j].charge == -1 for j, order in oxygens if order is BondOrder.SINGLE)
    )
    if not (neutral or charged):
        return None
    others = [j for j, _ in g.neighbors[i] if j not in {o for o, _ in oxygens}]
    return others[0] if others else -1


def _carbonyl_oxygen(g: MolGraph, i: int) -> Optional[int]:
    if g.atoms[i].symbol != "C":
        return None
    for j, order in g.neighbors[i]:
        if order is BondOrder.DOUBLE and g.atoms[j].symbol == "O" and g.degree(j) == 1:
            return j
    return None


def _aromatic_rings(g: MolGraph) -> int:
    aromatic = tuple(b for b in g.bonds if b.order is BondOrder.AROMATIC)
    if not aromatic:
        return 0
    nodes = sorted({x for b in aromatic for x in (b.a, b.b)})
    remap = {old: new for new, old in enumerate(nodes)}
    sub = tuple(Bond(remap[b.a], remap[b.b], b.order) for b in aromatic)
    return len(sub) - len(nodes) + count_components(len(nodes), sub)


def functional_groups(g: MolGraph) -> Dict[str, int]:
    counts = {name: 0 for name in GROUP_NAMES}
    carbonyl = {i: _carbonyl_oxygen(g, i) for i in range(len(g.atoms))}

    for i, atom in enumerate(g.atoms):
        partner = _nitro_third_neighbor(g, i)
        if partner is not None:
            counts["nitro"] += 1
            if partner >= 0:
                if g.atoms[partner].symbol == "N":
                    counts["nitramine"] += 1
                elif g.atoms[partner].symbol == "O" and g.degree(partner) >= 2:
                    counts["nitrate_ester"] += 1

        if atom.symbol == "O" and not atom.aromatic and g.degree(i) == 2:
            nbrs = g.neighbors[i]
            if all(g.atoms[j].symbol == "C" and order is BondOrder.SINGLE for j, order in nbrs):
                if all(carbonyl[j] is None for j, _ in nbrs):
                    counts["ether"] += 1

        oxo = carbonyl[i]
        if oxo is None:
            continue
        others = [(j, order) for j, order in g.neighbors[i] if j != oxo]
        if len(others) == 2 and all(g.atoms[j].symbol == "C" for j, _ in others):
            counts["ketone"] += 1
        for j, order in others:
            if order is BondOrder.SINGLE and g.atoms[j].symbol == "N":
                counts["amide"] += 1
        has_ester_o = any(
            order is BondOrder.SINGLE and g.atoms[j].symbol == "O" and g.degree(j) == 2
            for j, order in others
        )
        if has_ester_o and any(g.atoms[j].symbol == "C" for j, _ in others):
            counts["ester"] += 1

    counts["aromatic_ring"] = _aromatic_rings(g)
    return counts


def descriptors(g: MolGraph) -> DescriptorSet:
    if not g.atoms:
        raise InvalidGraph("Cannot describe an empty graph")
    return DescriptorSet(
        molecular_weight=molecular_weight(g),
        ring_count=g.ring_count,
        group_counts=functional_groups(g),
    )
