"""
SMILES -> MolGraph parser for the organic subset plus bracket atoms.

Supported: organic atoms B C N O P S F Cl Br I, aromatic b c n o p s,
bracket atoms with isotope, chirality (ignored), H count, charge and atom
class (ignored), branches, ring closures 0-9 and %nn, bond symbols - = # :
and the stereo bonds / \\ (kept on the bond, treated as single), and "." for
disconnected components.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from utils.errors import (
    DanglingBondSymbol,
    EmptyInput,
    InvalidRingClosure,
    MalformedBracketAtom,
    NonAsciiInput,
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownAtomSymbol,
)

from .graph import (
    AROMATIC_BRACKET,
    AROMATIC_ORGANIC,
    ATOMIC_NUMBER,
    BOND_SYMBOLS,
    Atom,
    Bond,
    BondOrder,
    MolGraph,
    count_components,
    implicit_hydrogens,
)


@dataclass
class _PendingAtom:
    symbol: str
    aromatic: bool
    bracket: bool
    charge: int = 0
    hydrogens: int = 0
    isotope: Optional[int] = None


@dataclass
class _RingOpen:
    atom: int
    order: Optional[BondOrder]
    stereo: Optional[str]
    position: int


@dataclass
class _State:
    atoms: List[_PendingAtom] = field(default_factory=list)
    bonds: Dict[Tuple[int, int], Bond] = field(default_factory=dict)
    prev: Optional[int] = None
    branch_stack: List[Tuple[Optional[int], int]] = field(default_factory=list)
    pending_order: Optional[BondOrder] = None
    pending_stereo: Optional[str] = None
    pending_pos: int = -1
    rings: Dict[int, _RingOpen] = field(default_factory=dict)
    closures: int = 0


def parse(s: str) -> MolGraph:
    if not s:
        raise EmptyInput("Empty SMILES string")
    if not s.isascii():
        raise NonAsciiInput(f"SMILES must be ASCII: {s!r}")

    st = _State()
    i = 0
    n = len(s)
    while i < n:
        c = s[i]
        if c == "(":
            if st.prev is None:
                raise UnbalancedParenthesis("Branch opened before any atom", i)
            if st.pending_order is not None:
                raise DanglingBondSymbol("Bond symbol before '('", st.pending_pos)
            st.branch_stack.append((st.prev, i))
            i += 1
        elif c == ")":
            if not st.branch_stack:
                raise UnbalancedParenthesis("Unmatched ')'", i)
            if st.pending_order is not None:
                raise DanglingBondSymbol("Bond symbol before ')'", st.pending_pos)
            if s[i - 1] == "(":
                raise UnbalancedParenthesis("Empty branch", i)
            st.prev = st.branch_stack.pop()[0]
            i += 1
        elif c in BOND_SYMBOLS or c in "/\\":
            if st.prev is None or st.pending_order is not None:
                raise DanglingBondSymbol(f"Bond symbol {c!r} without a preceding atom", i)
            st.pending_order = BOND_SYMBOLS.get(c, BondOrder.SINGLE)
            st.pending_stereo = c if c in "/\\" else None
            st.pending_pos = i
            i += 1
        elif c == ".":
            if st.pending_order is not None:
                raise DanglingBondSymbol("Bond symbol before '.'", st.pending_pos)
            if st.prev is None:
                raise DanglingBondSymbol("'.' without a preceding atom", i)
            if st.branch_stack:
                raise UnbalancedParenthesis("'.' inside a branch", i)
            st.prev = None
            i += 1
        elif c.isdigit() or c == "%":
            if c == "%":
                digits = s[i + 1 : i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise InvalidRingClosure("'%' must be followed by two digits", i)
                label, width = int(digits), 3
            else:
                label, width = int(c), 1
            _ring_closure(st, label, i)
            i += width
        elif c == "[":
            end = s.find("]", i)
            if end == -1:
                raise MalformedBracketAtom("Unterminated bracket atom", i)
            atom = _parse_bracket(s[i + 1 : end], i)
            _add_atom(st, atom)
            i = end + 1
        else:
            atom, width = _parse_organic(s, i)
            _add_atom(st, atom)
            i += width

    if st.pending_order is not None:
        raise DanglingBondSymbol("Trailing bond symbol", st.pending_pos)
    if st.branch_stack:
        raise UnbalancedParenthesis("Unclosed '('", st.branch_stack[-1][1])
    if st.rings:
        label, ring = next(iter(st.rings.items()))
        raise UnclosedRingBond(f"Ring bond {label} never closed", ring.position)
    if not st.atoms:
        raise EmptyInput("SMILES contains no atoms")

    return _finish(st)


def _add_atom(st: _State, atom: _PendingAtom) -> None:
    idx = len(st.atoms)
    st.atoms.append(atom)
    if st.prev is not None:
        order = st.pending_order
        if order is None:
            order = _default_order(st.atoms[st.prev], atom)
        _add_bond(st, st.prev, idx, order, st.pending_stereo, st.pending_pos)
    elif st.pending_order is not None:
        raise DanglingBondSymbol("Bond symbol without a preceding atom", st.pending_pos)
    st.prev = idx
    st.pending_order = None
    st.pending_stereo = None


def _ring_closure(st: _State, label: int, pos: int) -> None:
    if st.prev is None:
        raise DanglingBondSymbol(f"Ring bond {label} without a preceding atom", pos)
    if label in st.rings:
        ring = st.rings.pop(label)
        order = st.pending_order
        if order is not None and ring.order is not None and order != ring.order:
            raise InvalidRingClosure(f"Conflicting bond orders on ring bond {label}", pos)
        order = order or ring.order or _default_order(st.atoms[ring.atom], st.atoms[st.prev])
        if ring.atom == st.prev:
            raise InvalidRingClosure(f"Ring bond {label} closes on its own atom", pos)
        _add_bond(st, ring.atom, st.prev, order, st.pending_stereo or ring.stereo, pos)
        st.closures += 1
    else:
        st.rings[label] = _RingOpen(st.prev, st.pending_order, st.pending_stereo, pos)
    st.pending_order = None
    st.pending_stereo = None


def _add_bond(st: _State, a: int, b: int, order: BondOrder, stereo: Optional[str], pos: int) -> None:
    key = (min(a, b), max(a, b))
    if key in st.bonds:
        raise InvalidRingClosure(f"Duplicate bond between atoms {a} and {b}", pos)
    st.bonds[key] = Bond(a, b, order, stereo)


def _default_order(a: _PendingAtom, b: _PendingAtom) -> BondOrder:
    return BondOrder.AROMATIC if a.aromatic and b.aromatic else BondOrder.SINGLE


def _parse_organic(s: str, i: int) -> Tuple[_PendingAtom, int]:
    two = s[i : i + 2]
    if two in ("Cl", "Br"):
        return _PendingAtom(two, aromatic=False, bracket=False), 2
    c = s[i]
    if c in "BCNOPSFI":
        return _PendingAtom(c, aromatic=False, bracket=False), 1
    if c in AROMATIC_ORGANIC:
        return _PendingAtom(c.upper(), aromatic=True, bracket=False), 1
    raise UnknownAtomSymbol(f"Unknown atom symbol {c!r}", i)


def _parse_bracket(body: str, pos: int) -> _PendingAtom:
    j = 0
    n = len(body)

    isotope = None
    start = j
    while j < n and body[j].isdigit():
        j += 1
    if j > start:
        isotope = int(body[start:j])

    if j >= n:
        raise MalformedBracketAtom("Bracket atom without element", pos)

    # element symbol
    symbol = None
    aromatic = False
    for cand in sorted(AROMATIC_BRACKET, key=len, reverse=True):
        if body.startswith(cand, j):
            symbol, aromatic = cand.capitalize(), True
            j += len(cand)
            break
    if symbol is None:
        if not body[j].isupper():
            raise UnknownAtomSymbol(f"Bad element in bracket atom [{body}]", pos)
        two = body[j : j + 2]
        if len(two) == 2 and two[1].islower() and two in ATOMIC_NUMBER:
            symbol = two
            j += 2
        elif body[j] in ATOMIC_NUMBER:
            symbol = body[j]
            j += 1
        else:
            raise UnknownAtomSymbol(f"Unknown element in bracket atom [{body}]", pos)

    # chirality, ignored
    while j < n and body[j] == "@":
        j += 1

    hydrogens = 0
    if j < n and body[j] == "H":
        j += 1
        start = j
        while j < n and body[j].isdigit():
            j += 1
        hydrogens = int(body[start:j]) if j > start else 1

    charge = 0
    if j < n and body[j] in "+-":
        sign = 1 if body[j] == "+" else -1
        j += 1
        start = j
        while j < n and body[j].isdigit():
            j += 1
        if j > start:
            charge = sign * int(body[start:j])
        else:
            charge = sign
            while j < n and body[j] == ("+" if sign > 0 else "-"):
                charge += sign
                j += 1

    if j < n and body[j] == ":":
        j += 1
        start = j
        while j < n and body[j].isdigit():
            j += 1
        if j == start:
            raise MalformedBracketAtom(f"Empty atom class in [{body}]", pos)

    if j != n:
        raise MalformedBracketAtom(f"Unexpected {body[j]!r} in bracket atom [{body}]", pos)

    return _PendingAtom(symbol, aromatic=aromatic, bracket=True, charge=charge,
                        hydrogens=hydrogens, isotope=isotope)


def _finish(st: _State) -> MolGraph:
    bonds = tuple(sorted(st.bonds.values(), key=lambda b: (min(b.a, b.b), max(b.a, b.b))))
    orders: List[List[BondOrder]] = [[] for _ in st.atoms]
    for bond in bonds:
        orders[bond.a].append(bond.order)
        orders[bond.b].append(bond.order)

    atoms = []
    for idx, pa in enumerate(st.atoms):
        h = pa.hydrogens if pa.bracket else implicit_hydrogens(pa.symbol, pa.aromatic, orders[idx])
        atoms.append(Atom(pa.symbol, pa.aromatic, pa.charge, h, pa.isotope, pa.bracket))

    return MolGraph(
        atoms=tuple(atoms),
        bonds=bonds,
        components=count_components(len(atoms), bonds),
        ring_closures=st.closures,
    )
