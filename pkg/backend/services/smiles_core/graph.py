"""
Molecular graph types and element tables.
"""

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Tuple

from utils.errors import InvalidGraph

# Standard atomic weights (g/mol), conventional values.
ATOMIC_MASS: Dict[str, float] = {
    "H": 1.008,
    "Li": 6.94,
    "B": 10.81,
    "C": 12.011,
    "N": 14.007,
    "O": 15.999,
    "F": 18.998,
    "Na": 22.990,
    "Mg": 24.305,
    "Al": 26.982,
    "Si": 28.085,
    "P": 30.974,
    "S": 32.06,
    "Cl": 35.45,
    "K": 39.098,
    "Ca": 40.078,
    "Fe": 55.845,
    "Cu": 63.546,
    "Zn": 65.38,
    "As": 74.922,
    "Se": 78.971,
    "Br": 79.904,
    "Ag": 107.868,
    "Sn": 118.710,
    "I": 126.904,
    "Pb": 207.2,
}

ATOMIC_NUMBER: Dict[str, int] = {
    "H": 1, "Li": 3, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9, "Na": 11, "Mg": 12,
    "Al": 13, "Si": 14, "P": 15, "S": 16, "Cl": 17, "K": 19, "Ca": 20, "Fe": 26,
    "Cu": 29, "Zn": 30, "As": 33, "Se": 34, "Br": 35, "Ag": 47, "Sn": 50, "I": 53,
    "Pb": 82,
}

# Atoms that may be written without brackets.
ORGANIC_SUBSET = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
# Lowercase symbols accepted inside brackets.
AROMATIC_BRACKET = ("b", "c", "n", "o", "p", "s", "se", "as")

# Default valences used for implicit hydrogens (uncharged organic subset).
DEFAULT_VALENCES: Dict[str, Tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

# Aromatic atoms that contribute one pi bond to their valence when written
# without an explicit H (pyridine-type). Furan/thiophene-type o and s do not.
PI_DONOR_AROMATICS = frozenset({"B", "C", "N", "P", "As"})


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> float:
        return 1.5 if self is BondOrder.AROMATIC else float(self.value)

    @property
    def sigma(self) -> int:
        """Integer contribution with aromatic bonds counted as 1."""
        return 1 if self is BondOrder.AROMATIC else int(self.value)


BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE, ":": BondOrder.AROMATIC}


@dataclass(frozen=True)
class Atom:
    symbol: str  # element symbol, capitalised ("C", "Cl"); aromaticity kept separately
    aromatic: bool = False
    charge: int = 0
    hydrogens: int = 0  # explicit for bracket atoms, implicit otherwise
    isotope: Optional[int] = None
    bracket: bool = False

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBER[self.symbol]


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder
    stereo: Optional[str] = None  # "/" or "\\" as written; not part of graph identity


@dataclass(frozen=True)
class MolGraph:
    atoms: Tuple[Atom, ...]
    bonds: Tuple[Bond, ...]
    components: int
    ring_closures: int = 0

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        for bond in self.bonds:
            if bond.a == bond.b:
                raise InvalidGraph(f"Self-bond on atom {bond.a}")
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise InvalidGraph(f"Bond endpoint out of range: ({bond.a}, {bond.b})")
            key = (min(bond.a, bond.b), max(bond.a, bond.b))
            if key in seen:
                raise InvalidGraph(f"Duplicate bond between atoms {key}")
            seen.add(key)
        if len(self.bonds) - n + self.components < 0:
            raise InvalidGraph("Negative cyclomatic number")

    @property
    def ring_count(self) -> int:
        return len(self.bonds) - len(self.atoms) + self.components

    @cached_property
    def neighbors(self) -> Tuple[Tuple[Tuple[int, BondOrder], ...], ...]:
        adj: List[List[Tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return tuple(tuple(row) for row in adj)

    @cached_property
    def bond_index(self) -> Dict[Tuple[int, int], int]:
        index = {}
        for i, bond in enumerate(self.bonds):
            index[(bond.a, bond.b)] = i
            index[(bond.b, bond.a)] = i
        return index

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def bond_between(self, i: int, j: int) -> Optional[Bond]:
        k = self.bond_index.get((i, j))
        return None if k is None else self.bonds[k]

    @cached_property
    def ring_bonds(self) -> FrozenSet[int]:
        """Indices of bonds that lie on a cycle (every bond that is not a bridge)."""
        n = len(self.atoms)
        disc = [-1] * n
        low = [0] * n
        bridges = set()
        timer = 0
        for root in range(n):
            if disc[root] != -1:
                continue
            disc[root] = low[root] = timer
            timer += 1
            # stack entries: (node, bond index used to enter, neighbor iterator)
            stack = [(root, -1, iter(self._incident(root)))]
            while stack:
                node, via, it = stack[-1]
                advanced = False
                for nxt, bidx in it:
                    if bidx == via:
                        continue
                    if disc[nxt] == -1:
                        disc[nxt] = low[nxt] = timer
                        timer += 1
                        stack.append((nxt, bidx, iter(self._incident(nxt))))
                        advanced = True
                        break
                    low[node] = min(low[node], disc[nxt])
                if advanced:
                    continue
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(via)
        return frozenset(i for i in range(len(self.bonds)) if i not in bridges)

    @cached_property
    def ring_atoms(self) -> FrozenSet[int]:
        atoms = set()
        for i in self.ring_bonds:
            atoms.add(self.bonds[i].a)
            atoms.add(self.bonds[i].b)
        return frozenset(atoms)

    def _incident(self, i: int):
        for j, _order in self.neighbors[i]:
            yield j, self.bond_index[(i, j)]

    def component_of(self) -> List[int]:
        """Component label per atom, labels numbered by first atom index."""
        label = [-1] * len(self.atoms)
        current = 0
        for start in range(len(self.atoms)):
            if label[start] != -1:
                continue
            label[start] = current
            stack = [start]
            while stack:
                node = stack.pop()
                for nxt, _ in self.neighbors[node]:
                    if label[nxt] == -1:
                        label[nxt] = current
                        stack.append(nxt)
            current += 1
        return label


def count_components(n_atoms: int, bonds: Tuple[Bond, ...]) -> int:
    parent = list(range(n_atoms))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    components = n_atoms
    for bond in bonds:
        ra, rb = find(bond.a), find(bond.b)
        if ra != rb:
            parent[ra] = rb
            components -= 1
    return components


def implicit_hydrogens(symbol: str, aromatic: bool, bond_orders: List[BondOrder]) -> int:
    """Implicit H count for an unbracketed organic-subset atom.

    Uses the lowest default valence that accommodates the explicit bonds.
    Aromatic bonds count 1, plus one pi bond for pyridine-type aromatic atoms.
    """
    used = sum(order.sigma for order in bond_orders)
    if aromatic and symbol in PI_DONOR_AROMATICS and any(o is BondOrder.AROMATIC for o in bond_orders):
        used += 1
    for valence in DEFAULT_VALENCES.get(symbol, ()):
        if valence >= used:
            return valence - used
    return 0
