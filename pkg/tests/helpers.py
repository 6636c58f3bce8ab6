"""Shared builders and independent oracles for the test suite.

Oracles here recompute quantities from scratch with plain numpy, following
the defining formulas rather than the library's evaluation strategy, so a
library bug cannot hide in both routes.
"""

from __future__ import annotations

import numpy as np

from scanvar.kernels import Dist, Kernel, KernelFamily, Observable, make_family, random_reversible

E1_P1 = [[0.9, 0.1], [0.1, 0.9]]
E1_P2 = [[0.6, 0.4], [0.4, 0.6]]
E1_PI = [0.5, 0.5]
E1_F = [1.0, -1.0]

E1_VAR_STRAT_HALF = 77.0 / 48.0
E1_VAR_RAND_HALF = 5.0 / 3.0
E1_GAP_HALF = 1.0 / 16.0
E1_LIMIT_STRAT = 18.0 / 7.0
E1_LIMIT_RAND = 3.0
E1_CYCLE_CONTRACTION = 0.16
E1_RESOLVENT_FORM_HALF = 125.0 / 48.0


def e1_family() -> KernelFamily:
    return make_family(E1_PI, [E1_P1, E1_P2])


def random_dist(rng: np.random.Generator, n: int) -> Dist:
    w = rng.random(n) + 0.2
    return Dist(w / w.sum())


def random_family(rng: np.random.Generator, n: int, k: int) -> KernelFamily:
    pi = random_dist(rng, n)
    kernels = [random_reversible(pi, int(rng.integers(2**62))) for _ in range(k)]
    return make_family(pi.weights, kernels)


def random_centered(rng: np.random.Generator, fam: KernelFamily) -> Observable:
    v = rng.standard_normal(fam.n)
    return Observable(v - float(np.dot(fam.pi.weights, v)), centered=True)


def lazified(fam: KernelFamily, holds) -> KernelFamily:
    """Kernelwise identity blend of a family; `holds` is a scalar or one per kernel."""
    if np.isscalar(holds):
        holds = [holds] * fam.k
    mats = [
        (1.0 - a) * m + a * np.eye(fam.n) for a, m in zip(holds, fam.matrices)
    ]
    return make_family(fam.pi.weights, mats)


def cycle_product(mats, q: int, s: int) -> np.ndarray:
    """Forward cycle product of s kernels from 1-based phase q, via a plain loop."""
    k = len(mats)
    n = mats[0].shape[0]
    out = np.eye(n)
    for step in range(s):
        out = out @ mats[(q - 1 + step) % k]
    return out


def oracle_var_strat(fam: KernelFamily, f: Observable, lam: float, terms: int) -> float:
    """Direct double-sum of the discounted cycle covariances.

    Each lag image is rebuilt from scratch by applying the cycle kernels
    right to left, independent of the library's cross-phase recursion.
    """
    pi = fam.pi.weights
    fc = f.values - float(np.dot(pi, f.values))
    mats = fam.matrices
    k = fam.k
    total = float(np.dot(pi, fc * fc))
    for q in range(1, k + 1):
        for s in range(1, terms + 1):
            v = fc.copy()
            for step in reversed(range(s)):
                v = mats[(q - 1 + step) % k] @ v
            total += (2.0 / k) * lam**s * float(np.dot(pi, fc * v))
    return total


def oracle_finite_m(fam: KernelFamily, f: Observable, m_steps: int, scheme: str) -> float:
    """Pair-by-pair variance of the M-step average, brute force over (i, j)."""
    pi = fam.pi.weights
    fc = f.values - float(np.dot(pi, f.values))
    mats = fam.matrices
    k = fam.k
    total = m_steps * float(np.dot(pi, fc * fc))
    for i in range(m_steps):
        for j in range(i + 1, m_steps):
            if scheme == "strat":
                kern = cycle_product(mats, (i % k) + 1, j - i)
            else:
                mean = sum(mats) / k
                kern = np.linalg.matrix_power(mean, j - i)
            total += 2.0 * float(np.dot(pi, fc * (kern @ fc)))
    return total / m_steps


def pi_adjoint(mat: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return (pi[None, :] * mat.T) / pi[:, None]
