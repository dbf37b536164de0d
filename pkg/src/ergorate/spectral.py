"""Spectral analysis of chain generators.

Computes the variational spectral gap (the optimal constant in the
Poincare inequality over mean-zero unit-variance test functions), the
full complex spectrum, the slowest genuine decay mode, the per-state
constants of the weighted-norm convergence bound, and a Foster-Lyapunov
drift coefficient for comparison with the spectral rate.

For reversible chains the generator is similar to a symmetric matrix via
the square-root-of-pi scaling, so a symmetric eigensolver gives the gap
directly.  For irreversible chains the quadratic form only sees the
symmetric part of the generator, so the gap is computed on the additive
symmetrization; the slowest eigenvalue of the original generator can be
strictly faster, and both numbers are reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import NDArray

from .chain_core import (
    ChainSpec,
    Distribution,
    RateMatrix,
    WeightFunction,
    is_reversible,
    reversibilize,
)
from .errors import EigenFailure, ErgorateError, NoDrift

# Relative tolerance (scaled by max |q_ij|) for identifying the single
# zero eigenvalue of an irreducible conservative generator.
EIG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralReport:
    """Spectral summary of a chain.

    ``rate_epsilon_max`` is the certified exponential decay rate of the
    weighted-norm convergence bound: for reversible chains it equals the
    gap and is sharp; for irreversible chains the gap is a lower bound
    and ``true_decay_rate`` (slowest eigenvalue real part of the
    original generator, sign-flipped) reports the actual asymptotic
    rate, which can be strictly larger.
    """

    gap: float
    eigenvalues: tuple[complex, ...]
    reversible: bool
    rate_epsilon_max: float
    true_decay_rate: float
    constants: NDArray[np.float64]

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "reversible": self.reversible,
            "rate_epsilon_max": self.rate_epsilon_max,
            "true_decay_rate": self.true_decay_rate,
            "constants": list(map(float, self.constants)),
        }


@dataclass(frozen=True)
class DriftReport:
    """Best drift coefficient c and matching offset b for Qf <= -c f + b 1_C."""

    c_max: float
    b_min: float
    small_set: tuple[int, ...]


def symmetric_eigendecomposition(
    Q: RateMatrix, pi: Distribution
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Eigendecomposition of the pi-symmetrized negative generator.

    Returns (lam, V, d) where d = sqrt(pi), S = diag(d) (-Q) diag(1/d)
    symmetrized, and S = V diag(lam) V^T with lam ascending.  Only
    meaningful when Q is reversible with respect to pi (the enforced
    symmetrization would otherwise change the operator); lam[0] is the
    zero mode with eigenvector d.

    Raises
    ------
    EigenFailure
        Solver failure, or the smallest eigenvalue is not the expected
        single zero mode.
    """
    d = np.sqrt(pi.p)
    S = (d[:, None] * (-Q.q)) / d[None, :]
    S = 0.5 * (S + S.T)
    try:
        lam, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"symmetric eigensolver failed: {exc}") from exc
    tol = EIG_TOL * max(Q.max_rate, 1e-300)
    if abs(lam[0]) > tol:
        raise EigenFailure(f"smallest symmetrized eigenvalue {lam[0]:.3e} is not zero")
    if Q.n > 1 and lam[1] <= tol:
        raise EigenFailure("zero eigenvalue is not simple; chain is numerically reducible")
    return lam, V, d


def gap(Q: RateMatrix, pi: Distribution) -> float:
    """Variational spectral gap of the generator.

    Reversible: second-smallest eigenvalue of the symmetrized operator.
    Irreversible: the quadratic form coincides with that of the additive
    symmetrization, so the gap is computed there.
    """
    rev, _ = is_reversible(Q, pi)
    if not rev:
        Q = reversibilize(Q, pi)
    lam, _, _ = symmetric_eigendecomposition(Q, pi)
    return float(lam[1])


def eigenvalues(Q: RateMatrix) -> tuple[complex, ...]:
    """Full spectrum of Q, sorted by descending real part then ascending
    imaginary part.  Exactly one eigenvalue must sit at zero."""
    try:
        lam = np.linalg.eigvals(Q.q)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigenvalue solver failed: {exc}") from exc
    tol = EIG_TOL * max(Q.max_rate, 1e-300)
    n_zero = int(np.sum(np.abs(lam) <= tol))
    if n_zero != 1:
        raise EigenFailure(f"expected one zero eigenvalue, found {n_zero}")
    order = np.lexsort((lam.imag, -lam.real))
    return tuple(complex(z) for z in lam[order])


def true_decay_rate(Q: RateMatrix) -> float:
    """Negative of the largest real part over the nonzero spectrum.

    This is the actual asymptotic exponential decay rate of the
    semigroup deviation; it equals the gap for reversible chains and can
    exceed it for irreversible ones.
    """
    lam = eigenvalues(Q)
    tol = EIG_TOL * max(Q.max_rate, 1e-300)
    nonzero = [z for z in lam if abs(z) > tol]
    return float(-max(z.real for z in nonzero))


def ergodicity_constant(pi: Distribution, f: WeightFunction) -> NDArray[np.float64]:
    """Per-state constant sqrt(pi(f^2)) * sqrt(1/pi_i - 1) of the
    exponential convergence bound on the weighted norm."""
    mass_f2 = float(np.dot(pi.p, f.f**2))
    return np.sqrt(mass_f2) * np.sqrt(1.0 / pi.p - 1.0)


def spectral_report(spec: ChainSpec) -> SpectralReport:
    """Assemble the full spectral summary for a chain.

    The certified rate equals the gap in both directions for reversible
    chains and is a lower bound for irreversible ones; the slowest true
    decay mode is always reported alongside.
    """
    rev, _ = is_reversible(spec.rate_matrix, spec.stationary)
    g = gap(spec.rate_matrix, spec.stationary)
    lam = eigenvalues(spec.rate_matrix)
    tdr = true_decay_rate(spec.rate_matrix)
    C = ergodicity_constant(spec.stationary, spec.weight)
    return SpectralReport(
        gap=g,
        eigenvalues=lam,
        reversible=rev,
        rate_epsilon_max=g,
        true_decay_rate=tdr,
        constants=C,
    )


def drift_condition(
    spec: ChainSpec, small_set: Iterable[int] = (0,)
) -> DriftReport:
    """Best coefficients for the drift inequality Qf <= -c f + b 1_C.

    c_max is the largest c valid outside the small set C,
    c_max = min_{i not in C} -(Qf)_i / f_i, and b_min the smallest
    offset making the inequality hold on C at that c.

    Raises
    ------
    NoDrift
        c_max <= 0: this weight carries no drift information for this
        small set (for instance any constant weight).
    """
    C = tuple(sorted(set(int(i) for i in small_set)))
    n = spec.n
    if any(i < 0 or i >= n for i in C):
        raise ErgorateError(f"small set {C} out of range for {n} states")
    outside = np.setdiff1d(np.arange(n), np.array(C, dtype=int))
    if outside.size == 0:
        raise ErgorateError("small set must not cover every state")
    Qf = spec.q @ spec.f
    c_max = float(np.min(-Qf[outside] / spec.f[outside]))
    if c_max <= 0.0:
        raise NoDrift(f"best drift coefficient {c_max:.3e} is not positive")
    b_min = float(np.max(Qf[np.array(C, dtype=int)] + c_max * spec.f[np.array(C, dtype=int)]))
    return DriftReport(c_max=c_max, b_min=b_min, small_set=C)
