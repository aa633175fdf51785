"""
Token vocabulary and hybrid embeddings.

A HybridEmbedding is the row-wise concatenation ``E = [E_t | E_f]`` of a
trainable block ``E_t`` (V x d_t) and a fixed block ``E_f`` (V x d_f). The
fixed block is built once and never receives updates:

    trainable_only  d_f = 0, everything trainable
    random_fixed    E_f ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), fan_in = d_f
    sha_fixed       E_f[i] = tile((SHA256("token(i)") - 128) / 128) to d_f

``E_t`` is initialised N(0, 1).
"""

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, Optional, Sequence, Union

import numpy as np

from utils.errors import BadDimensions, EmptyCorpus, IndexOutOfVocabulary, ShapeMismatch
from utils.file_hash import file_hash_service
from utils.logger import get_logger
from utils.rng import stage_rng, stage_seed

from .smiles_core import TokenSeq

logger = get_logger("embeddings")

PAD, BOS, EOS = 0, 1, 2
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>")

SHA_BLOCK = 32  # bytes per SHA-256 digest


class EmbeddingMode(str, Enum):
    TRAINABLE_ONLY = "trainable_only"
    RANDOM_FIXED = "random_fixed"
    SHA_FIXED = "sha_fixed"


class KeyMode(str, Enum):
    INDEX = "index"  # hash "token(i)"
    TEXT = "text"  # hash the token string itself


# --------------------------------------------------------------------------
# vocabulary
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {tok: i for i, tok in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, seq: Union[TokenSeq, Sequence[str]], wrap: bool = True) -> np.ndarray:
        """Token ids, wrapped as BOS ... EOS unless ``wrap`` is False."""
        tokens = seq.tokens if isinstance(seq, TokenSeq) else seq
        ids = []
        for tok in tokens:
            if tok not in self.index:
                raise IndexOutOfVocabulary(f"Token {tok!r} is not in the vocabulary")
            ids.append(self.index[tok])
        if wrap:
            ids = [BOS] + ids + [EOS]
        return np.asarray(ids, dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> str:
        """Concatenate token texts, skipping PAD/BOS and stopping at EOS."""
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            if not 0 <= i < len(self.tokens):
                raise IndexOutOfVocabulary(f"Token id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[i])
        return "".join(out)

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        tokens = tuple(payload["tokens"])
        if tokens[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise BadDimensions("Vocabulary does not start with the reserved tokens")
        return cls(tokens=tokens)


def build_vocabulary(corpus: Iterable[TokenSeq]) -> Vocabulary:
    seen = set()
    count = 0
    for seq in corpus:
        seen.update(seq.tokens)
        count += 1
    if count == 0:
        raise EmptyCorpus("Cannot build a vocabulary from an empty corpus")
    vocab = Vocabulary(tokens=RESERVED_TOKENS + tuple(sorted(seen)))
    logger.info(
        f"Built vocabulary of {len(vocab)} tokens",
        extra={"extra_fields": {"sequences": count, "vocab_size": len(vocab)}},
    )
    return vocab


# --------------------------------------------------------------------------
# fixed blocks
# --------------------------------------------------------------------------


def _sha_row(key: str, d_f: int) -> np.ndarray:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    block = (np.frombuffer(digest, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    reps = -(-d_f // SHA_BLOCK)
    return np.tile(block, reps)[:d_f]


def sha_fixed_embedding(
    V: int,
    d: int,
    d_t: int,
    key_mode: KeyMode = KeyMode.INDEX,
    tokens: Optional[Sequence[str]] = None,
    unit_norm: bool = False,
) -> np.ndarray:
    """Deterministic V x (d - d_t) block from SHA-256 digests, values in [-1, 1)."""
    if V < 1 or d_t < 0 or d_t > d or d - d_t < 1:
        raise BadDimensions(f"Need V >= 1 and 0 <= d_t < d, got V={V}, d={d}, d_t={d_t}")
    d_f = d - d_t
    key_mode = KeyMode(key_mode)
    if key_mode is KeyMode.TEXT:
        if tokens is None or len(tokens) != V:
            raise BadDimensions("Text-keyed SHA embedding needs one token string per row")
        keys = list(tokens)
    else:
        keys = [f"token({i})" for i in range(V)]

    E_f = np.stack([_sha_row(key, d_f) for key in keys])
    if unit_norm:
        norms = np.linalg.norm(E_f, axis=1, keepdims=True)
        E_f = E_f / np.where(norms > 0.0, norms, 1.0)
    return E_f


def random_fixed_embedding(V: int, d_f: int, fan_in: int, seed: int) -> np.ndarray:
    """Kaiming-uniform block, bound sqrt(6 / fan_in)."""
    if V < 1 or d_f < 1 or fan_in < 1:
        raise BadDimensions(f"Need V, d_f, fan_in >= 1, got V={V}, d_f={d_f}, fan_in={fan_in}")
    bound = np.sqrt(6.0 / fan_in)
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=(V, d_f))


# --------------------------------------------------------------------------
# hybrid embedding
# --------------------------------------------------------------------------


@dataclass
class HybridEmbedding:
    E_t: np.ndarray
    E_f: np.ndarray
    mode: EmbeddingMode = EmbeddingMode.TRAINABLE_ONLY

    def __post_init__(self):
        self.mode = EmbeddingMode(self.mode)
        if self.E_t.ndim != 2 or self.E_f.ndim != 2 or self.E_t.shape[0] != self.E_f.shape[0]:
            raise ShapeMismatch(
                f"E_t {self.E_t.shape} and E_f {self.E_f.shape} must be 2-D with equal row counts"
            )

    @property
    def V(self) -> int:
        return int(self.E_t.shape[0])

    @property
    def d_t(self) -> int:
        return int(self.E_t.shape[1])

    @property
    def d_f(self) -> int:
        return int(self.E_f.shape[1])

    @property
    def d(self) -> int:
        return self.d_t + self.d_f

    def matrix(self) -> np.ndarray:
        return np.concatenate([self.E_t, self.E_f], axis=1)

    def checksum(self, block: str = "fixed") -> str:
        """SHA-256 over the raw bytes of one block ("fixed" or "trainable")."""
        arr = self.E_f if block == "fixed" else self.E_t
        return file_hash_service.calculate_array_checksum(arr)

    def copy(self) -> "HybridEmbedding":
        return HybridEmbedding(self.E_t.copy(), self.E_f.copy(), self.mode)


def build_embedding(
    vocab: Vocabulary,
    d: int,
    d_t: int,
    mode: Union[EmbeddingMode, str],
    seed: int,
    key_mode: Union[KeyMode, str] = KeyMode.INDEX,
    unit_norm: bool = False,
) -> HybridEmbedding:
    mode = EmbeddingMode(mode)
    V = len(vocab)
    if d < 1 or d_t < 0 or d_t > d:
        raise BadDimensions(f"Need d >= 1 and 0 <= d_t <= d, got d={d}, d_t={d_t}")
    if mode is EmbeddingMode.TRAINABLE_ONLY:
        d_t = d
    d_f = d - d_t

    E_t = stage_rng(seed, "embedding.trainable").standard_normal((V, d_t))
    if d_f == 0:
        E_f = np.zeros((V, 0))
    elif mode is EmbeddingMode.SHA_FIXED:
        E_f = sha_fixed_embedding(V, d, d_t, key_mode=key_mode, tokens=vocab.tokens, unit_norm=unit_norm)
    else:
        E_f = random_fixed_embedding(V, d_f, fan_in=d_f, seed=stage_seed(seed, "embedding.random_fixed"))

    emb = HybridEmbedding(E_t=E_t, E_f=E_f, mode=mode)
    logger.debug(
        "Built embedding",
        extra={"extra_fields": {"mode": mode.value, "V": V, "d_t": d_t, "d_f": d_f}},
    )
    return emb


def lookup(emb: HybridEmbedding, ids: Union[TokenSeq, Sequence[int], np.ndarray],
           vocab: Optional[Vocabulary] = None) -> np.ndarray:
    """Rows ``concat(E_t[id], E_f[id])``; a TokenSeq needs ``vocab`` to map tokens to ids."""
    if isinstance(ids, TokenSeq):
        if vocab is None:
            raise IndexOutOfVocabulary("A vocabulary is required to look up a TokenSeq")
        ids = vocab.encode(ids, wrap=False)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= emb.V):
        raise IndexOutOfVocabulary(f"Token id outside [0, {emb.V})")
    return np.concatenate([emb.E_t[ids], emb.E_f[ids]], axis=-1)


UpdateRule = Callable[[np.ndarray, np.ndarray], np.ndarray]


def apply_embedding_gradient(emb: HybridEmbedding, grads: np.ndarray, update_rule: UpdateRule) -> HybridEmbedding:
    """Update ``E_t`` with ``update_rule(E_t, G_t)``; ``E_f`` is never touched."""
    grads = np.asarray(grads)
    if grads.shape != (emb.V, emb.d):
        raise ShapeMismatch(f"Embedding gradient has shape {grads.shape}, expected {(emb.V, emb.d)}")
    updated = update_rule(emb.E_t, grads[:, : emb.d_t])
    if updated.shape != emb.E_t.shape:
        raise ShapeMismatch(f"Update rule returned {updated.shape}, expected {emb.E_t.shape}")
    emb.E_t = updated
    return emb
