"""
Character-level SMILES tokenizer.

One token per character, except that the two-letter organic atoms ``Cl`` and
``Br`` and two-digit ring closures ``%nn`` are single tokens outside
brackets. Inside ``[...]`` every character is its own token, so the rules
above never apply there.
"""

from dataclasses import dataclass
from typing import List, Tuple

from utils.errors import EmptyInput, NonAsciiInput, SmilesSyntaxError


@dataclass(frozen=True)
class TokenSeq:
    tokens: Tuple[str, ...]
    source: str

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(s: str) -> TokenSeq:
    if not s:
        raise EmptyInput("Empty SMILES string")
    if not s.isascii():
        raise NonAsciiInput(f"SMILES must be ASCII: {s!r}")

    tokens: List[str] = []
    i = 0
    in_bracket = False
    n = len(s)
    while i < n:
        c = s[i]
        if in_bracket:
            tokens.append(c)
            if c == "]":
                in_bracket = False
            i += 1
            continue
        if c == "[":
            in_bracket = True
            tokens.append(c)
            i += 1
        elif c in "CB" and i + 1 < n and s[i : i + 2] in ("Cl", "Br"):
            tokens.append(s[i : i + 2])
            i += 2
        elif c == "%":
            if i + 2 < n and s[i + 1 : i + 3].isdigit():
                tokens.append(s[i : i + 3])
                i += 3
            else:
                raise SmilesSyntaxError("Ring closure '%' must be followed by two digits", i)
        else:
            tokens.append(c)
            i += 1
    return TokenSeq(tokens=tuple(tokens), source=s)


def detokenize(seq: TokenSeq) -> str:
    return "".join(seq.tokens)
