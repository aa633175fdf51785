"""
Numeric checks and calculators for the partially-trainable embedding theory.

coherence            mu(E) = max_{i != j} |<E_i, E_j>| / (|E_i| |E_j|)
coherence_bound      sqrt(8 L / d_f) + 4 L / d_f,  L = ln(V^2 / eps)
                     (proof-sketch form: sqrt(4 L / d_f))
gershgorin_check     eigenvalues of a unit-row Gram matrix lie in
                     [1 - (n-1) mu, 1 + (n-1) mu]; kappa <= (1 + (n-1) mu) / (1 - (n-1) mu)
rademacher_bound     (L_f L_l / sqrt(n)) (sqrt(V d_t + D) + B_t sqrt(V) + B_theta)
generalization_bound 2 R + sqrt(ln(2 / delta) / (2 n))
combined_bound       2 L_f L_l / sqrt(n) (...) + C_2 sqrt(ln(V / delta) / d_f)
residual             R_i = E_i - P_f E_i, |R_i|^2 <= B_t^2 + (1 - lambda_min)

Eigenvalues come from a cyclic Jacobi solver (batches are at most 64 rows).
"""

import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from config.settings import settings
from models.configs import BoundInputs
from models.reports import CoherenceReport, ConditioningReport, ResidualReport, TheoryReport
from utils.errors import (
    BadEpsilon,
    BadInputs,
    BatchTooLarge,
    DegenerateBatch,
    DimensionMismatch,
    TheoryError,
    TooFewRows,
    ZeroRow,
)
from utils.logger import get_logger
from utils.rng import stage_rng, stage_seed

from .embeddings import EmbeddingMode, random_fixed_embedding, sha_fixed_embedding

logger = get_logger("theory_verifier")

SHA_BLOCK = 32  # bytes in one SHA-256 digest, the period of tiled rows
MAX_BATCH = 64
EIGEN_SLACK = 1e-12  # rounding allowance of the Jacobi eigenvalues


# --------------------------------------------------------------------------
# coherence
# --------------------------------------------------------------------------


def _unit_rows(E: np.ndarray) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2:
        raise DimensionMismatch(f"Expected a matrix, got shape {E.shape}")
    norms = np.linalg.norm(E, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroRow(f"Row {int(zero[0])} has zero norm")
    return E / norms[:, None]


def coherence(E: np.ndarray) -> float:
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] < 2:
        raise TooFewRows(f"Coherence needs at least two rows, got shape {E.shape}")
    U = _unit_rows(E)
    G = np.abs(U @ U.T)
    np.fill_diagonal(G, 0.0)
    return float(min(G.max(), 1.0))


def _log_term(V: int, eps: float) -> float:
    if not 0.0 < eps < 1.0:
        raise BadEpsilon(f"eps must lie in (0, 1), got {eps}")
    if V < 2:
        raise BadInputs(f"Coherence bound needs V >= 2, got {V}")
    return math.log(V * V / eps)


def coherence_bound(V: int, d_f: int, eps: float) -> float:
    L = _log_term(V, eps)
    if d_f < 1:
        raise BadInputs(f"d_f must be positive, got {d_f}")
    return math.sqrt(8.0 * L / d_f) + 4.0 * L / d_f


def coherence_bound_proof_form(V: int, d_f: int, eps: float) -> float:
    """The union-bound threshold sqrt(4 ln(V^2/eps) / d_f)."""
    L = _log_term(V, eps)
    if d_f < 1:
        raise BadInputs(f"d_f must be positive, got {d_f}")
    return math.sqrt(4.0 * L / d_f)


def coherence_report(E_f: np.ndarray, eps: float = 0.01, tiled: bool = False) -> CoherenceReport:
    """Empirical coherence against both bound forms.

    Rows of a tiled SHA block repeat a 32-wide digest, so ``tiled`` judges the
    bound at that effective dimension instead of the full width.
    """
    V, d_f = np.asarray(E_f).shape
    mu = coherence(E_f)
    effective = SHA_BLOCK if tiled and d_f > SHA_BLOCK else d_f
    stated = coherence_bound(V, d_f, eps)
    proof = coherence_bound_proof_form(V, d_f, eps)
    at_effective = coherence_bound(V, effective, eps)
    note = ""
    if effective != d_f:
        note = f"tiled rows: bound judged at effective dimension {effective} instead of {d_f}"
    return CoherenceReport(
        V=V,
        d_f=d_f,
        mu=mu,
        eps=eps,
        bound=stated,
        proof_bound=proof,
        effective_dim=effective,
        bound_effective=at_effective,
        passed=mu <= at_effective,
        between_variants=proof < mu <= stated,
        note=note,
    )


# --------------------------------------------------------------------------
# eigenvalues / conditioning
# --------------------------------------------------------------------------


def jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps over all (p, q) pairs, zeroing A[p, q] with one rotation each, until
    the off-diagonal Frobenius norm falls below ``tol`` times the total norm.
    Returns ascending eigenvalues and the matching eigenvectors as columns.
    """
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(A).max(initial=0.0)))):
        raise TheoryError("Jacobi eigensolver needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    max_sweeps = max_sweeps or settings.JACOBI_MAX_SWEEPS
    n = A.shape[0]
    vectors = np.eye(n)
    scale = float(np.sqrt(np.sum(A * A)))

    for _ in range(max_sweeps):
        off = float(np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                app, aqq = A[p, p], A[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = (1.0 if theta >= 0.0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                A[:, p] = new_p
                A[p, :] = new_p
                A[:, q] = new_q
                A[q, :] = new_q
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = A[q, p] = 0.0

                vec_p, vec_q = vectors[:, p].copy(), vectors[:, q].copy()
                vectors[:, p] = c * vec_p - s * vec_q
                vectors[:, q] = s * vec_p + c * vec_q
    else:
        logger.warning(f"Jacobi did not converge in {max_sweeps} sweeps (n={n})")

    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")
    return values[order], vectors[:, order]


def gram_matrix(E: np.ndarray) -> np.ndarray:
    """Gram matrix of unit-normalized rows with an exact unit diagonal."""
    U = _unit_rows(E)
    G = U @ U.T
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 1.0)
    return G


def gershgorin_check(E_f: np.ndarray, batch: Sequence[int], mu: Optional[float] = None) -> ConditioningReport:
    """Gram conditioning of the rows ``batch`` of ``E_f``.

    ``mu`` defaults to the coherence of the batch itself; passing the coherence
    of the whole embedding widens the interval.
    """
    n = len(batch)
    if n > MAX_BATCH:
        raise BatchTooLarge(f"Batch of {n} rows exceeds {MAX_BATCH}")
    if n < 2:
        raise DegenerateBatch(f"Batch needs at least two rows, got {n}")
    rows = np.asarray(E_f, dtype=np.float64)[np.asarray(batch, dtype=np.int64)]
    try:
        G = gram_matrix(rows)
    except ZeroRow as e:
        raise DegenerateBatch(str(e)) from e

    off = np.abs(G)
    np.fill_diagonal(off, 0.0)
    mu = float(off.max()) if mu is None else float(mu)
    spread = (n - 1) * mu
    lo, hi = 1.0 - spread, 1.0 + spread
    values, _ = jacobi_eigh(G)
    lam_min, lam_max = float(values[0]), float(values[-1])

    kappa = lam_max / lam_min if lam_min > 0.0 else None
    bound = hi / lo if spread < 1.0 else None
    holds = None
    if bound is not None:
        holds = kappa is not None and kappa <= bound * (1.0 + EIGEN_SLACK)
    return ConditioningReport(
        n=n,
        mu=mu,
        interval=[lo, hi],
        lambda_min=lam_min,
        lambda_max=lam_max,
        eigenvalues_in_interval=bool(lo - EIGEN_SLACK <= lam_min and lam_max <= hi + EIGEN_SLACK),
        condition_number=kappa,
        condition_bound=bound,
        bound_holds=holds,
    )


# --------------------------------------------------------------------------
# generalization bounds
# --------------------------------------------------------------------------


def _inputs(inputs: Union[BoundInputs, Mapping[str, float]]) -> BoundInputs:
    if isinstance(inputs, BoundInputs):
        return inputs
    try:
        return BoundInputs(**inputs)
    except ValidationError as e:
        raise BadInputs(f"Invalid bound inputs: {e.errors()[0]['loc']} {e.errors()[0]['msg']}") from e


def rademacher_bound(inputs: Union[BoundInputs, Mapping[str, float]]) -> float:
    b = _inputs(inputs)
    capacity = math.sqrt(b.V * b.d_t + b.D) + b.B_t * math.sqrt(b.V) + b.B_theta
    return b.L_f * b.L_loss / math.sqrt(b.n) * capacity


def generalization_bound(inputs: Union[BoundInputs, Mapping[str, float]]) -> float:
    b = _inputs(inputs)
    return 2.0 * rademacher_bound(b) + math.sqrt(math.log(2.0 / b.delta) / (2.0 * b.n))


def combined_bound(inputs: Union[BoundInputs, Mapping[str, float]], architecture_constant: float = 1.0) -> float:
    """Generalization gap with the coherence penalty of a non-orthogonal fixed block."""
    b = _inputs(inputs)
    if not architecture_constant >= 0.0:
        raise BadInputs(f"Architecture constant must be non-negative, got {architecture_constant}")
    return 2.0 * rademacher_bound(b) + architecture_constant * math.sqrt(math.log(b.V / b.delta) / b.d_f)


# --------------------------------------------------------------------------
# orthogonal decomposition
# --------------------------------------------------------------------------


def orthonormal_basis(rows: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (k x width) of the row span by modified Gram-Schmidt.

    Each vector is orthogonalized twice against the basis built so far; a
    vector whose remainder is below ``rel_tol`` of its norm is dependent and
    dropped.
    """
    rows = np.asarray(rows, dtype=np.float64)
    basis: List[np.ndarray] = []
    for row in rows:
        norm = float(np.linalg.norm(row))
        if norm == 0.0:
            continue
        v = row.copy()
        for _ in range(2):
            for q in basis:
                v -= float(q @ v) * q
        remainder = float(np.linalg.norm(v))
        if remainder > rel_tol * norm:
            basis.append(v / remainder)
    width = rows.shape[1] if rows.ndim == 2 else 0
    return np.array(basis).reshape(len(basis), width)


def residual_decomposition(E_t: np.ndarray, E_f: np.ndarray) -> ResidualReport:
    """Residuals of E = E_t + E_f outside the span of the rows of E_f.

    Both matrices are V x width. For a concatenated embedding pass the blocks
    zero-padded to the full width (see ``padded_blocks``).
    """
    E_t = np.asarray(E_t, dtype=np.float64)
    E_f = np.asarray(E_f, dtype=np.float64)
    if E_t.ndim != 2 or E_t.shape != E_f.shape:
        raise DimensionMismatch(f"E_t {E_t.shape} and E_f {E_f.shape} must have the same shape")
    E = E_t + E_f
    Q = orthonormal_basis(E_f)
    R = E - (E @ Q.T) @ Q
    residual_sq = np.sum(R * R, axis=1)

    B_t = float(np.linalg.norm(E_t, axis=1).max(initial=0.0))
    lam_min = float(jacobi_eigh(gram_matrix(E_f))[0][0]) if E_f.shape[0] else 0.0
    vacuous = E_f.shape[0] > Q.shape[0] or lam_min <= 1e-12
    if vacuous:
        lam_min = max(lam_min, 0.0)
    bound = B_t * B_t + (1.0 - lam_min)
    max_sq = float(residual_sq.max(initial=0.0))
    return ResidualReport(
        residual_sq=residual_sq.tolist(),
        max_residual_sq=max_sq,
        B_t=B_t,
        lambda_min_fixed=lam_min,
        bound=bound,
        vacuous=vacuous,
        bound_holds=max_sq <= bound * (1.0 + 1e-12) + 1e-15,
    )


def padded_blocks(E_t: np.ndarray, E_f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """[E_t | 0] and [0 | E_f], the two blocks of [E_t | E_f] at full width."""
    V = E_t.shape[0]
    if E_f.shape[0] != V:
        raise DimensionMismatch(f"E_t has {V} rows but E_f has {E_f.shape[0]}")
    d_t, d_f = E_t.shape[1], E_f.shape[1]
    return (
        np.concatenate([E_t, np.zeros((V, d_f))], axis=1),
        np.concatenate([np.zeros((V, d_t)), E_f], axis=1),
    )


# --------------------------------------------------------------------------
# full verification
# --------------------------------------------------------------------------


def fixed_block(V: int, d: int, d_t: int, mode: EmbeddingMode, seed: int) -> np.ndarray:
    mode = EmbeddingMode(mode)
    if mode is EmbeddingMode.SHA_FIXED:
        return sha_fixed_embedding(V, d, d_t)
    if mode is EmbeddingMode.RANDOM_FIXED:
        return random_fixed_embedding(V, d - d_t, d - d_t, stage_seed(seed, "theory.fixed"))
    raise BadInputs("Theory checks need a fixed block (sha_fixed or random_fixed)")


def random_batches(V: int, count: int, rng: np.random.Generator, max_size: int = MAX_BATCH) -> List[np.ndarray]:
    """``count`` batches of distinct rows, sizes uniform in [2, min(max_size, V)]."""
    top = min(max_size, V)
    if top < 2:
        raise DegenerateBatch(f"Need at least two rows to form a batch, V={V}")
    return [rng.choice(V, size=int(rng.integers(2, top + 1)), replace=False) for _ in range(count)]


def verify_theory(
    V: int = 100,
    d: int = 128,
    d_t: int = 10,
    mode: EmbeddingMode = EmbeddingMode.SHA_FIXED,
    eps: float = 0.01,
    n_batches: int = 32,
    seed: int = 0,
    n: int = 303,
    D: int = 100_000,
    B_theta: float = 10.0,
    L_f: float = 1.0,
    L_loss: float = 1.0,
    delta: float = 0.05,
    architecture_constant: float = 1.0,
) -> TheoryReport:
    """Runs every check on a freshly built embedding and collects pass flags."""
    mode = EmbeddingMode(mode)
    E_f = fixed_block(V, d, d_t, mode, seed)
    d_f = E_f.shape[1]
    E_t = stage_rng(seed, "theory.trainable").standard_normal((V, d_t)) / math.sqrt(max(d_t, 1))

    tiled = mode is EmbeddingMode.SHA_FIXED and d_f > SHA_BLOCK
    coh = coherence_report(E_f, eps, tiled=tiled)
    batches = random_batches(V, n_batches, stage_rng(seed, "theory.batches"))
    conditioning = [gershgorin_check(E_f, batch) for batch in batches]
    residual = residual_decomposition(*padded_blocks(E_t, E_f))

    inputs = BoundInputs(
        n=n, V=V, d_t=d_t, D=D, B_t=max(residual.B_t, 1e-12), B_theta=B_theta,
        L_f=L_f, L_loss=L_loss, delta=delta, eps=eps, d_f=d_f,
    )
    checks: Dict[str, bool] = {
        "coherence_in_unit_interval": 0.0 <= coh.mu <= 1.0,
        "coherence_bound": coh.passed,
        "gershgorin_interval": all(c.eigenvalues_in_interval for c in conditioning),
        "condition_number_bound": all(c.bound_holds for c in conditioning if c.bound_holds is not None),
        "residual_bound": residual.bound_holds,
    }
    if mode is EmbeddingMode.SHA_FIXED and d_f % SHA_BLOCK == 0 and d_f > SHA_BLOCK:
        checks["tiling_invariance"] = abs(coherence(E_f) - coherence(E_f[:, :SHA_BLOCK])) <= 1e-12

    report = TheoryReport(
        V=V,
        d=d,
        d_t=d_t,
        d_f=d_f,
        mode=mode.value,
        coherence=coh,
        conditioning=conditioning,
        rademacher_bound=rademacher_bound(inputs),
        generalization_bound=generalization_bound(inputs),
        combined_bound=combined_bound(inputs, architecture_constant),
        residual=residual,
        checks=checks,
        all_passed=all(checks.values()),
    )
    logger.info(
        f"Theory checks for V={V} d={d} d_t={d_t} ({mode.value}): {'all passed' if report.all_passed else 'FAILED'}",
        extra={"extra_fields": {"checks": checks, "mu": coh.mu, "batches": n_batches}},
    )
    return report
