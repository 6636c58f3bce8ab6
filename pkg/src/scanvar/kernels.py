"""Finite-state targets, observables and reversible transition kernels.

Everything is dense and exact at desk scale (up to a couple of thousand
states): a distribution is a length-n weight vector, a kernel is an n x n
row-stochastic matrix acting on functions by ``matrix @ f``, and all
geometry lives in the inner product weighted by the target distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from scanvar.seeding import derive_seed

# Row sums and weight normalisation.
ROW_SUM_TOL = 1e-12
# Detailed balance, relative to the largest probability flow of the kernel.
REVERSIBILITY_TOL = 1e-10
# Generic numeric equality.
NUMERIC_TOL = 1e-10
# Eigenvalue threshold for positive-semidefiniteness verdicts.
PSD_TOL = 1e-10

__all__ = [
    "ROW_SUM_TOL",
    "REVERSIBILITY_TOL",
    "NUMERIC_TOL",
    "PSD_TOL",
    "ValidationError",
    "DegenerateConditionalError",
    "SummabilityError",
    "ReducibilityError",
    "StateSpace",
    "Dist",
    "Observable",
    "Kernel",
    "KernelFamily",
    "FamilyDiagnostics",
    "make_family",
    "inner",
    "center",
    "sigma",
    "compose_cycle",
    "random_scan",
    "gibbs_kernel",
    "metropolis_kernel",
    "lazy",
    "random_reversible",
    "is_irreducible",
    "family_diagnostics",
    "validate_family",
]


class ValidationError(ValueError):
    """A structural invariant fails (row sums, positivity, detailed balance)."""


class DegenerateConditionalError(ValueError):
    """The conditioning slice has zero probability, so the conditional is undefined."""


class SummabilityError(RuntimeError):
    """The kernel cycle does not contract centered functions, so the limiting
    covariance series diverges."""


class ReducibilityError(RuntimeError):
    """The chain splits into several closed classes where a unique stationary
    regime is required."""


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpace:
    """The finite state space {0, ..., n-1}, with optional display labels."""

    n: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"state space needs at least one state, got n={self.n}")
        if self.labels is not None:
            labels = tuple(self.labels)
            object.__setattr__(self, "labels", labels)
            if len(labels) != self.n:
                raise ValidationError(
                    f"got {len(labels)} labels for {self.n} states"
                )
            if len(set(labels)) != self.n:
                raise ValidationError("state labels must be distinct")


@dataclass(frozen=True, eq=False)
class Dist:
    """A probability vector: nonnegative weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValidationError("weights must be a nonempty 1-d vector")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite")
        if w.min() < 0.0:
            raise ValidationError(f"negative weight {w.min():.3g}")
        total = float(w.sum())
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise ValidationError(
                f"weights sum to {total:.17g}, expected 1 within {ROW_SUM_TOL:g}"
            )
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class Observable:
    """A real function on the state space, one value per state.

    The `centered` flag is advisory: `center` sets it after subtracting the
    mean under a given target.
    """

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValidationError("observable values must be a nonempty 1-d vector")
        if not np.all(np.isfinite(v)):
            raise ValidationError("observable values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class Kernel:
    """A row-stochastic transition matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValidationError(f"kernel matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("kernel entries must be finite")
        if m.min() < 0.0:
            raise ValidationError(f"negative kernel entry {m.min():.3g}")
        row_dev = float(np.abs(m.sum(axis=1) - 1.0).max())
        if row_dev > ROW_SUM_TOL:
            worst = int(np.abs(m.sum(axis=1) - 1.0).argmax())
            raise ValidationError(
                f"row {worst} sums to {m.sum(axis=1)[worst]:.17g}, "
                f"deviation {row_dev:.3g} exceeds {ROW_SUM_TOL:g}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class FamilyDiagnostics:
    """Residuals of the stochasticity and detailed-balance requirements.

    Balance residuals are reported both as the raw maximum flow imbalance
    max |pi(x) K(x,y) - pi(y) K(y,x)| and relative to the largest flow of
    the kernel. `passes` compares the raw per-kernel residuals to `tol`.
    """

    row_sum_deviation: tuple[float, ...]
    negative_entry: tuple[float, ...]
    balance_residual: tuple[float, ...]
    relative_balance_residual: tuple[float, ...]
    pi_sum_deviation: float
    min_pi: float
    tol: float
    passes: bool

    def issues(self) -> list[str]:
        """Human-readable list of every residual exceeding `tol`."""
        out = []
        for i, (r, g, b) in enumerate(
            zip(self.row_sum_deviation, self.negative_entry, self.balance_residual)
        ):
            if r > self.tol:
                out.append(f"kernel {i + 1}: row-sum deviation {r:.3g} > {self.tol:g}")
            if g > self.tol:
                out.append(f"kernel {i + 1}: negative entry of magnitude {g:.3g}")
            if b > self.tol:
                out.append(
                    f"kernel {i + 1}: detailed-balance residual {b:.3g} > {self.tol:g}"
                )
        if self.pi_sum_deviation > self.tol:
            out.append(f"target weights sum off by {self.pi_sum_deviation:.3g}")
        if self.min_pi <= 0.0:
            out.append(f"target has a nonpositive weight ({self.min_pi:.3g})")
        return out


def family_diagnostics(pi, matrices, tol: float = NUMERIC_TOL) -> FamilyDiagnostics:
    """Diagnose raw kernel matrices against a target without constructing types.

    Accepts anything array-like, so invalid input can still be quantified.
    """
    w = pi.weights if isinstance(pi, Dist) else np.asarray(pi, dtype=float)
    row_dev, neg, bal, rel_bal = [], [], [], []
    for m in matrices:
        a = m.matrix if isinstance(m, Kernel) else np.asarray(m, dtype=float)
        if a.shape != (w.size, w.size):
            raise ValidationError(
                f"kernel shape {a.shape} does not match {w.size} states"
            )
        row_dev.append(float(np.abs(a.sum(axis=1) - 1.0).max()))
        neg.append(float(max(0.0, -a.min())))
        flow = w[:, None] * a
        residual = float(np.abs(flow - flow.T).max())
        bal.append(residual)
        peak = float(flow.max())
        rel_bal.append(residual / peak if peak > 0 else residual)
    worst = max(max(row_dev), max(neg), max(bal))
    return FamilyDiagnostics(
        row_sum_deviation=tuple(row_dev),
        negative_entry=tuple(neg),
        balance_residual=tuple(bal),
        relative_balance_residual=tuple(rel_bal),
        pi_sum_deviation=abs(float(w.sum()) - 1.0),
        min_pi=float(w.min()),
        tol=tol,
        passes=worst <= tol,
    )


@dataclass(frozen=True, eq=False)
class KernelFamily:
    """An ordered family of kernels, each reversible for the shared target.

    Construction validates everything: positive target weights, stochastic
    kernels (via the Kernel type) and detailed balance within
    REVERSIBILITY_TOL relative to each kernel's largest flow. Values are
    immutable afterwards and safe to share across threads.
    """

    space: StateSpace
    pi: Dist
    kernels: tuple[Kernel, ...]

    def __post_init__(self):
        kernels = tuple(self.kernels)
        object.__setattr__(self, "kernels", kernels)
        if len(kernels) < 1:
            raise ValidationError("a kernel family needs at least one kernel")
        if self.pi.n != self.space.n:
            raise ValidationError(
                f"target has {self.pi.n} weights for {self.space.n} states"
            )
        if self.pi.weights.min() <= 0.0:
            raise ValidationError(
                "target weights must be strictly positive: detailed balance and "
                "conditionals are ill-posed on null states"
            )
        for i, k in enumerate(kernels):
            if k.n != self.space.n:
                raise ValidationError(
                    f"kernel {i + 1} is {k.n}x{k.n}, expected {self.space.n}"
                )
        diag = family_diagnostics(self.pi, kernels)
        worst_rel = max(diag.relative_balance_residual)
        if worst_rel > REVERSIBILITY_TOL:
            which = int(np.argmax(diag.relative_balance_residual))
            raise ValidationError(
                f"kernel {which + 1} breaks detailed balance: relative residual "
                f"{worst_rel:.3g} exceeds {REVERSIBILITY_TOL:g}"
            )

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def k(self) -> int:
        return len(self.kernels)

    @property
    def matrices(self) -> tuple[np.ndarray, ...]:
        return tuple(k.matrix for k in self.kernels)


def make_family(pi, kernels, labels=None) -> KernelFamily:
    """Bundle a target with kernels, coercing plain arrays to the domain types."""
    pi_d = pi if isinstance(pi, Dist) else Dist(pi)
    ks = tuple(k if isinstance(k, Kernel) else Kernel(k) for k in kernels)
    return KernelFamily(StateSpace(pi_d.n, labels), pi_d, ks)


def inner(f: Observable, g: Observable, pi: Dist) -> float:
    """Weighted inner product sum_x pi(x) f(x) g(x)."""
    if f.n != g.n or f.n != pi.n:
        raise ValidationError(
            f"dimension mismatch: f has {f.n}, g has {g.n}, target has {pi.n}"
        )
    return float(np.dot(pi.weights, f.values * g.values))


def center(f: Observable, pi: Dist) -> Observable:
    """Subtract the mean under pi, so the result integrates to zero."""
    if f.n != pi.n:
        raise ValidationError(f"dimension mismatch: f has {f.n}, target has {pi.n}")
    mean = float(np.dot(pi.weights, f.values))
    return Observable(f.values - mean, centered=True)


def sigma(j: int, power: int, k: int) -> int:
    """Iterate of the forward circular permutation on {1, ..., k}.

    Power zero is the identity, power one maps j to j+1 with k wrapping to 1,
    and negative powers iterate the inverse. Satisfies the group law
    sigma(j, a + b, k) == sigma(sigma(j, b, k), a, k).
    """
    if not 1 <= j <= k:
        raise ValueError(f"index {j} out of range 1..{k}")
    return (j - 1 + power) % k + 1


def compose_cycle(fam: KernelFamily, q: int, s: int) -> Kernel:
    """Product of s kernels read forward along the cycle starting at phase q.

    s = 0 returns the identity. The product is taken in application order:
    the phase-q kernel acts first on the state, last on functions.
    """
    if s < 0:
        raise ValueError(f"cycle length must be nonnegative, got {s}")
    if not 1 <= q <= fam.k:
        raise ValueError(f"phase {q} out of range 1..{fam.k}")
    out = np.eye(fam.n)
    for step in range(s):
        out = out @ fam.kernels[sigma(q, step, fam.k) - 1].matrix
    return Kernel(out)


def random_scan(fam: KernelFamily) -> Kernel:
    """Entrywise mean of the family: one uniformly chosen kernel per step.

    Entries are summed with exact rounding, so any reordering of the family
    produces the bit-identical result.
    """
    if fam.k == 1:
        return fam.kernels[0]
    if fam.k == 2:  # two-term addition is commutative bit for bit
        return Kernel((fam.matrices[0] + fam.matrices[1]) / 2.0)
    stack = np.stack(fam.matrices).reshape(fam.k, -1)
    sums = np.fromiter(
        (math.fsum(stack[:, j]) for j in range(stack.shape[1])),
        dtype=float,
        count=stack.shape[1],
    )
    return Kernel(sums.reshape(fam.n, fam.n) / fam.k)


def gibbs_kernel(joint: Dist, grid: tuple[int, int], coordinate: int) -> Kernel:
    """Kernel resampling one coordinate of a two-coordinate grid target.

    States index the grid row-major: state = i1 * n2 + i2. The returned
    kernel replaces the chosen coordinate by a draw from its exact
    conditional given the other one; it is idempotent and reversible for
    the joint target.

    Raises DegenerateConditionalError when some conditioning slice has zero
    total probability.
    """
    n1, n2 = grid
    if joint.n != n1 * n2:
        raise ValidationError(
            f"joint has {joint.n} weights, expected {n1}x{n2}={n1 * n2}"
        )
    if coordinate not in (1, 2):
        raise ValueError(f"coordinate must be 1 or 2, got {coordinate}")
    p = joint.weights.reshape(n1, n2)
    n = n1 * n2
    out = np.zeros((n, n))
    if coordinate == 1:
        marg = p.sum(axis=0)
        bad = np.nonzero(marg <= 0.0)[0]
        if bad.size:
            raise DegenerateConditionalError(
                f"conditioning slices {bad.tolist()} of coordinate 2 carry zero mass"
            )
        cond = p / marg  # cond[i1, i2] = P(coord1 = i1 | coord2 = i2)
        for i2 in range(n2):
            idx = np.arange(n1) * n2 + i2
            out[np.ix_(idx, idx)] = np.tile(cond[:, i2], (n1, 1))
    else:
        marg = p.sum(axis=1)
        bad = np.nonzero(marg <= 0.0)[0]
        if bad.size:
            raise DegenerateConditionalError(
                f"conditioning slices {bad.tolist()} of coordinate 1 carry zero mass"
            )
        cond = p / marg[:, None]  # cond[i1, i2] = P(coord2 = i2 | coord1 = i1)
        for i1 in range(n1):
            idx = i1 * n2 + np.arange(n2)
            out[np.ix_(idx, idx)] = np.tile(cond[i1, :], (n2, 1))
    return Kernel(out)


def metropolis_kernel(pi: Dist, proposal: Kernel) -> Kernel:
    """Metropolised proposal targeting pi.

    Off-diagonal entries are proposal times acceptance
    min(1, pi(y) q(y,x) / (pi(x) q(x,y))); rejected mass sits on the
    diagonal. Zero-proposal entries contribute zero flow. Detailed balance
    holds by construction: pi(x) P(x,y) = min of the two flows.
    """
    if proposal.n != pi.n:
        raise ValidationError(
            f"proposal is {proposal.n}x{proposal.n}, target has {pi.n} states"
        )
    q = proposal.matrix
    flow = pi.weights[:, None] * q
    accepted = np.minimum(flow, flow.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        off = np.where(pi.weights[:, None] > 0, accepted / pi.weights[:, None], 0.0)
    np.fill_diagonal(off, 0.0)
    diag = np.maximum(1.0 - off.sum(axis=1), 0.0)
    return Kernel(off + np.diag(diag))


def lazy(kernel: Kernel, a: float) -> Kernel:
    """Blend with the identity: (1 - a) K + a I, for a in [0, 1].

    Holding shrinks the Dirichlet form by the factor (1 - a), which makes
    lazified kernels the canonical dominated comparison case.
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"hold probability must lie in [0, 1], got {a}")
    return Kernel((1.0 - a) * kernel.matrix + a * np.eye(kernel.n))


def is_irreducible(kernel: Kernel) -> bool:
    """True when the positive-entry graph is strongly connected."""
    graph = csr_matrix(kernel.matrix > 0.0)
    ncomp, _ = connected_components(graph, directed=True, connection="strong")
    return ncomp == 1


def random_reversible(pi: Dist, seed: int, max_tries: int = 100) -> Kernel:
    """Seeded irreducible kernel reversible for pi.

    Metropolises a random Dirichlet-row proposal; retries with derived seeds
    (bounded) until the positive-entry graph is strongly connected.
    """
    for attempt in range(max_tries):
        rng = np.random.default_rng(derive_seed(seed, attempt))
        proposal = Kernel(rng.dirichlet(np.ones(pi.n), size=pi.n))
        candidate = metropolis_kernel(pi, proposal)
        if is_irreducible(candidate):
            return candidate
    raise ReducibilityError(
        f"no irreducible kernel found in {max_tries} attempts for seed {seed}"
    )


def validate_family(fam: KernelFamily, tol: float = NUMERIC_TOL) -> FamilyDiagnostics:
    """Report the family's residuals against `tol`; never raises."""
    return family_diagnostics(fam.pi, fam.kernels, tol=tol)
