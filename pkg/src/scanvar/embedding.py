"""Block operators advancing k staggered copies of a kernel cycle.

A block vector holds one function per cycle phase. The embedding operator
sends phase i to kernel i applied to the phase-sigma(i) component, which is
exactly the blockwise kernel action composed with the forward cyclic shift.
That factorisation gives the adjoint by inspection (shift back after the
blockwise action) and a clean self-adjoint / skew split. Dense nk x nk
realizations back the resolvent solves; they are materialised lazily and
cached, and every solve is a direct factorisation with a residual guard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scanvar.kernels import (
    Dist,
    KernelFamily,
    Observable,
    ValidationError,
)

# Relative residual allowed for a resolvent solve.
RESOLVENT_RTOL = 1e-10

#: Valid operator selectors for realizations and resolvent solves:
#: the embedding itself, its adjoint, its self-adjoint part, and the two
#: shift-then-diagonal compositions used by blend derivatives.
OPERATORS = ("embed", "embed_adjoint", "symmetric", "shift_diag", "shift_inv_diag")

__all__ = [
    "RESOLVENT_RTOL",
    "OPERATORS",
    "BlockVector",
    "CycleEmbedding",
    "block_inner",
    "block_norm",
    "shift",
    "diag_apply",
    "apply_embedding",
    "apply_embedding_adjoint",
    "symmetric_part",
    "skew_part",
    "embedding_power",
    "shift_realization",
    "diag_realization",
    "embedding_realization",
    "resolvent_solve",
]


@dataclass(frozen=True, eq=False)
class BlockVector:
    """A k-tuple of functions on the state space, stored as a (k, n) array.

    Row j-1 is the component attached to cycle phase j.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise ValidationError(f"block vector must be 2-d, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def repeat(cls, f: Observable, k: int) -> "BlockVector":
        """The constant block (f, f, ..., f)."""
        return cls(np.tile(f.values, (k, 1)))

    def component(self, phase: int) -> np.ndarray:
        """Component for 1-based cycle phase."""
        if not 1 <= phase <= self.k:
            raise ValueError(f"phase {phase} out of range 1..{self.k}")
        return self.values[phase - 1]

    def flat(self) -> np.ndarray:
        """Phase-major stacked vector of length k*n."""
        return self.values.reshape(-1)


def _check_block(fam: KernelFamily, phi: BlockVector) -> None:
    if phi.k != fam.k or phi.n != fam.n:
        raise ValidationError(
            f"block vector is {phi.k}x{phi.n}, family needs {fam.k}x{fam.n}"
        )


def block_inner(phi: BlockVector, psi: BlockVector, pi: Dist) -> float:
    """Sum of the componentwise weighted inner products.

    Per-phase terms are added with exact rounding, so the value is invariant
    under any permutation of the phases (the cyclic shift is an isometry
    exactly, not just within roundoff).
    """
    if phi.values.shape != psi.values.shape or phi.n != pi.n:
        raise ValidationError("block vectors and target must share dimensions")
    return math.fsum((phi.values * psi.values) @ pi.weights)


def block_norm(phi: BlockVector, pi: Dist) -> float:
    return float(np.sqrt(max(block_inner(phi, phi, pi), 0.0)))


def shift(phi: BlockVector, direction: int) -> BlockVector:
    """Cyclic shift of components: phase j of the output reads phase
    sigma^{direction}(j) of the input. Directions +1 and -1 are inverse
    to each other (and coincide for k = 2)."""
    if direction not in (1, -1):
        raise ValueError(f"direction must be +1 or -1, got {direction}")
    return BlockVector(np.roll(phi.values, -direction, axis=0))


def diag_apply(fam: KernelFamily, phi: BlockVector) -> BlockVector:
    """Blockwise kernel action: phase i becomes kernel i applied to phase i."""
    _check_block(fam, phi)
    return BlockVector(
        np.stack([m @ phi.values[i] for i, m in enumerate(fam.matrices)])
    )


def apply_embedding(fam: KernelFamily, phi: BlockVector) -> BlockVector:
    """One step of the embedded product chain on functions.

    Phase i of the output is kernel i applied to phase sigma(i) of the
    input; identically the blockwise action after a forward shift.
    """
    return diag_apply(fam, shift(phi, +1))


def apply_embedding_adjoint(fam: KernelFamily, phi: BlockVector) -> BlockVector:
    """Adjoint of the embedding in the block inner product: shift back after
    the blockwise action. Relies on each kernel being self-adjoint for pi."""
    return shift(diag_apply(fam, phi), -1)


def symmetric_part(fam: KernelFamily, phi: BlockVector) -> BlockVector:
    """Self-adjoint part: the mean of the embedding and its adjoint."""
    fwd = apply_embedding(fam, phi)
    bwd = apply_embedding_adjoint(fam, phi)
    return BlockVector((fwd.values + bwd.values) / 2.0)


def skew_part(fam: KernelFamily, phi: BlockVector) -> BlockVector:
    """Skew part: half the difference of the embedding and its adjoint.

    Its quadratic form vanishes identically.
    """
    fwd = apply_embedding(fam, phi)
    bwd = apply_embedding_adjoint(fam, phi)
    return BlockVector((fwd.values - bwd.values) / 2.0)


def embedding_power(fam: KernelFamily, phi: BlockVector, i: int) -> BlockVector:
    """i-fold application of the embedding; phase j of the result is the
    forward cycle product of length i (from phase j) applied to the
    phase-sigma^i(j) component."""
    if i < 0:
        raise ValueError(f"power must be nonnegative, got {i}")
    out = phi
    for _ in range(i):
        out = apply_embedding(fam, out)
    return out


def shift_realization(k: int, n: int, direction: int) -> np.ndarray:
    """Dense kn x kn matrix of the cyclic shift."""
    if direction not in (1, -1):
        raise ValueError(f"direction must be +1 or -1, got {direction}")
    out = np.zeros((k * n, k * n))
    eye = np.eye(n)
    for b in range(k):
        src = (b + direction) % k
        out[b * n : (b + 1) * n, src * n : (src + 1) * n] = eye
    return out


def diag_realization(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Dense block-diagonal matrix of the blockwise kernel action."""
    k = len(blocks)
    n = blocks[0].shape[0]
    out = np.zeros((k * n, k * n))
    for b, m in enumerate(blocks):
        out[b * n : (b + 1) * n, b * n : (b + 1) * n] = m
    return out


def embedding_realization(op: str, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Dense realization of a selected operator built from the given blocks.

    Selectors: "embed" (blockwise action after forward shift),
    "embed_adjoint" (backward shift after blockwise action, equal to the
    adjoint when the blocks are reversible), "symmetric" (their mean),
    "shift_diag" and "shift_inv_diag" (shift after blockwise action,
    forward and backward).
    """
    k = len(blocks)
    n = blocks[0].shape[0]
    diag = diag_realization(blocks)
    if op == "embed":
        return diag @ shift_realization(k, n, +1)
    if op == "embed_adjoint" or op == "shift_inv_diag":
        return shift_realization(k, n, -1) @ diag
    if op == "shift_diag":
        return shift_realization(k, n, +1) @ diag
    if op == "symmetric":
        fwd = diag @ shift_realization(k, n, +1)
        bwd = shift_realization(k, n, -1) @ diag
        return (fwd + bwd) / 2.0
    raise ValueError(f"unknown operator selector {op!r}; choose from {OPERATORS}")


class CycleEmbedding:
    """Cached dense realizations of the embedding and related operators.

    The cache is filled lazily, one realization per selector, and read-only
    afterwards; instances are safe for concurrent reads.
    """

    def __init__(self, family: KernelFamily):
        self.family = family
        self._realizations: dict[str, np.ndarray] = {}

    @property
    def weights(self) -> np.ndarray:
        """Target weights tiled across phases, matching the stacked layout."""
        return np.tile(self.family.pi.weights, self.family.k)

    def realization(self, op: str) -> np.ndarray:
        if op not in OPERATORS:
            raise ValueError(f"unknown operator selector {op!r}; choose from {OPERATORS}")
        if op not in self._realizations:
            mat = embedding_realization(op, self.family.matrices)
            mat.setflags(write=False)
            self._realizations[op] = mat
        return self._realizations[op]

    def resolvent_solve(self, op: str, lam: float, rhs: BlockVector) -> BlockVector:
        """Solve (I - lam * Op) x = rhs by direct dense factorisation.

        Requires 0 <= lam < 1; the solution is checked to reproduce the
        right-hand side within RESOLVENT_RTOL in the weighted norm.
        """
        if not 0.0 <= lam < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {lam}")
        _check_block(self.family, rhs)
        mat = self.realization(op)
        system = np.eye(mat.shape[0]) - lam * mat
        b = rhs.flat()
        try:
            x = np.linalg.solve(system, b)
        except np.linalg.LinAlgError as err:  # cannot occur for lam < 1; guarded anyway
            raise np.linalg.LinAlgError(
                f"resolvent system singular for selector {op!r} at lam={lam}"
            ) from err
        w = self.weights
        residual = system @ x - b
        res_norm = float(np.sqrt(np.dot(w, residual**2)))
        rhs_norm = float(np.sqrt(np.dot(w, b**2)))
        if res_norm > RESOLVENT_RTOL * max(rhs_norm, 1e-300):
            raise np.linalg.LinAlgError(
                f"resolvent residual {res_norm:.3g} exceeds "
                f"{RESOLVENT_RTOL:g} * {rhs_norm:.3g}"
            )
        return BlockVector(x.reshape(self.family.k, self.family.n))


def resolvent_solve(
    op: str, fam: KernelFamily, lam: float, rhs: BlockVector
) -> BlockVector:
    """One-off resolvent solve; sweeps should reuse a CycleEmbedding."""
    return CycleEmbedding(fam).resolvent_solve(op, lam, rhs)
