"""
Validity = parse succeeds + every atom satisfies the valence table.

Allowed valences for uncharged atoms::

    B 3   C 4   N 3,5   O 2   P 3,5   S 2,4,6   F Cl Br I 1
    Si 4  As 3,5  Se 2,4,6  H 1

Charged atoms shift the table: for N, O, P, S, As, Se and the halogens the
valence moves with the charge (N+ 4, O- 1, N- 2); for C and B it moves down
by |charge| for carbon (C+ and C- are 3) and up by one for B- (4).

Aromatic bonds are counted as 1 in the sigma sum; an atom that carries at
least one aromatic bond may additionally be credited with one pi bond. So
benzene c (2 + 1H, +1) = 4, pyrrole [nH] (2 + 1H) = 3, pyridine n (2, +1) = 3
and fused ring-junction c (3, +1) = 4 all pass. Aromatic atoms and aromatic
bonds must lie on a ring. Elements outside the table are accepted as written.
"""

from typing import Dict, List, Tuple

from utils.errors import SmilesError
from utils.logger import get_logger

from .graph import Atom, BondOrder, MolGraph
from .parser import parse

logger = get_logger("smiles_core.valence")

_BASE_VALENCES: Dict[str, Tuple[int, ...]] = {
    "H": (1,),
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
    "Si": (4,),
    "As": (3, 5),
    "Se": (2, 4, 6),
}

# Elements whose valence follows the sign of the formal charge.
_SHIFT_WITH_CHARGE = frozenset({"N", "O", "P", "S", "As", "Se", "F", "Cl", "Br", "I"})


def allowed_valences(symbol: str, charge: int) -> Tuple[int, ...]:
    """Charge-adjusted valences; empty tuple means the element is unchecked."""
    base = _BASE_VALENCES.get(symbol)
    if base is None:
        return ()
    if charge == 0:
        return base
    if symbol in _SHIFT_WITH_CHARGE:
        shifted = tuple(v + charge for v in base)
    elif symbol == "C":
        shifted = tuple(v - abs(charge) for v in base)
    elif symbol == "B":
        shifted = tuple(v - charge for v in base)
    else:  # H
        shifted = tuple(v - abs(charge) for v in base)
    return tuple(v for v in shifted if v >= 0)


def _atom_ok(atom: Atom, orders: List[BondOrder]) -> bool:
    allowed = allowed_valences(atom.symbol, atom.charge)
    if not allowed:
        return atom.symbol not in _BASE_VALENCES
    total = sum(o.sigma for o in orders) + atom.hydrogens
    if total in allowed:
        return True
    has_aromatic = any(o is BondOrder.AROMATIC for o in orders)
    return has_aromatic and (total + 1) in allowed


def valence_violations(g: MolGraph) -> List[int]:
    """Indices of atoms that break the valence or aromatic-ring rules."""
    bad = []
    ring_atoms = g.ring_atoms
    for i, atom in enumerate(g.atoms):
        orders = [order for _, order in g.neighbors[i]]
        if atom.aromatic and i not in ring_atoms:
            bad.append(i)
        elif not _atom_ok(atom, orders):
            bad.append(i)
    ring_bonds = g.ring_bonds
    for k, bond in enumerate(g.bonds):
        if bond.order is BondOrder.AROMATIC and k not in ring_bonds:
            bad.extend(x for x in (bond.a, bond.b) if x not in bad)
    return sorted(set(bad))


def is_valid_graph(g: MolGraph) -> bool:
    return not valence_violations(g)


def is_valid(s: str) -> bool:
    """True iff ``s`` parses and passes the valence table. Never raises."""
    try:
        g = parse(s)
    except SmilesError as e:
        logger.debug(f"Rejected {s!r}: {e}")
        return False
    return is_valid_graph(g)
