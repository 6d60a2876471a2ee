"""Closed-form results for the primitive (ideal) market.

The primitive market has additive money, single-owner goods, and no
interactions between agents. Its partition functions are exactly solvable:

    money sector        Z0(T, N)      = (k0 T)^N
    fixed V and N       Z(T, V, N)    = (k0 T)^N V^(N-1) / (N-1)!
    fixed p and N       Z(T, p, N)    = (k0 T)^N (k0 T / p)^N
    fixed V and mu      Z(T, V, mu)   = a exp(a V),  a = k0 T exp(mu / k0 T)

Everything else here is a derivative of a log partition function. All
functions carry a log-domain representation (factorials via log-gamma) so
agent counts up to 10^6 do not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .core import EnsembleSpec

__all__ = [
    "PotentialValue",
    "ideal_money_z",
    "ideal_money_log_z",
    "ideal_canonical_z",
    "ideal_canonical_log_z",
    "ideal_mean_energy",
    "ideal_eos_pressure",
    "ideal_npt_log_z",
    "ideal_npt_mean_volume",
    "grand_activity",
    "ideal_grand_log_z",
    "ideal_grand_mean_count",
    "ideal_grand_count_variance",
    "grand_count_pmf",
    "ideal_potential",
    "ideal_relative_fluctuation",
    "ideal_entropy",
    "ideal_money_entropy",
    "ideal_financial_potential",
    "ideal_log_z_family",
]


def _require(cond: bool, message: str):
    if not cond:
        raise ValueError(message)


def ideal_money_log_z(T: float, N: int, k0: float = 1.0) -> float:
    """log of the money-sector partition function, N ln(k0 T)."""
    _require(T > 0, "T must be positive")
    _require(N >= 1, "N must be at least 1")
    _require(k0 > 0, "k0 must be positive")
    return N * math.log(k0 * T)


def ideal_money_z(T: float, N: int, k0: float = 1.0) -> float:
    """Money-sector partition function (k0 T)^N; overflows for large N,
    use ideal_money_log_z instead."""
    return math.exp(ideal_money_log_z(T, N, k0))


def ideal_canonical_log_z(T: float, V: float, N: int, k0: float = 1.0) -> float:
    """log Z at fixed (T, V, N): N ln(k0 T) + (N-1) ln V - ln (N-1)!.

    The (N-1)-dimensional volume of the goods constraint surface
    sum(v) = V is V^(N-1) / (N-1)!.
    """
    _require(V > 0, "V must be positive")
    return ideal_money_log_z(T, N, k0) + (N - 1) * math.log(V) - gammaln(N)


def ideal_canonical_z(T: float, V: float, N: int, k0: float = 1.0) -> float:
    return math.exp(ideal_canonical_log_z(T, V, N, k0))


def ideal_mean_energy(T: float, N: int, k0: float = 1.0) -> float:
    """Mean market energy k0 N T; independent of the goods volume."""
    _require(T > 0, "T must be positive")
    _require(N >= 1, "N must be at least 1")
    _require(k0 > 0, "k0 must be positive")
    return k0 * N * T


def ideal_eos_pressure(T: float, V: float, N: int, k0: float = 1.0, bulk: bool = False) -> float:
    """Equation-of-state price k0 (N-1) T / V.

    The exact finite-N coefficient is N-1 (a single agent exerts no
    exchange pressure); bulk=True selects the large-N form k0 N T / V.
    """
    _require(T > 0, "T must be positive")
    _require(V > 0, "V must be positive")
    _require(N >= 1, "N must be at least 1")
    _require(k0 > 0, "k0 must be positive")
    coeff = N if bulk else N - 1
    return k0 * coeff * T / V


def ideal_npt_log_z(T: float, p: float, N: int, k0: float = 1.0) -> float:
    """log Z at fixed (T, p, N): the volume integral of the fixed-V
    partition function against exp(-pV/k0T) evaluates to
    (k0 T)^N (k0 T / p)^N."""
    _require(T > 0, "T must be positive")
    _require(p > 0, "p must be positive")
    _require(N >= 1, "N must be at least 1")
    _require(k0 > 0, "k0 must be positive")
    return N * math.log(k0 * T) + N * math.log(k0 * T / p)


def ideal_npt_mean_volume(T: float, p: float, N: int, k0: float = 1.0) -> float:
    """Mean goods volume N k0 T / p at fixed (T, p, N)."""
    _require(T > 0, "T must be positive")
    _require(p > 0, "p must be positive")
    _require(N >= 1, "N must be at least 1")
    return N * k0 * T / p


def grand_activity(T: float, mu: float, k0: float = 1.0) -> float:
    """Activity a = k0 T exp(mu / (k0 T)); each extra agent contributes a
    factor a V / N to the fixed-volume partition sum."""
    _require(T > 0, "T must be positive")
    _require(k0 > 0, "k0 must be positive")
    return k0 * T * math.exp(mu / (k0 * T))


def ideal_grand_log_z(T: float, V: float, mu: float, k0: float = 1.0) -> float:
    """log Z at fixed (T, V, mu): ln a + a V (sum over N >= 1)."""
    _require(V > 0, "V must be positive")
    a = grand_activity(T, mu, k0)
    return math.log(a) + a * V


def ideal_grand_mean_count(T: float, V: float, mu: float, k0: float = 1.0) -> float:
    """Mean agent count 1 + a V at fixed (T, V, mu)."""
    _require(V > 0, "V must be positive")
    return 1.0 + grand_activity(T, mu, k0) * V


def ideal_grand_count_variance(T: float, V: float, mu: float, k0: float = 1.0) -> float:
    """Variance of the agent count, a V."""
    _require(V > 0, "V must be positive")
    return grand_activity(T, mu, k0) * V


def grand_count_pmf(
    T: float, V: float, mu: float, k0: float = 1.0, tail: float = 1e-15
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized agent-count distribution P(N) for N >= 1.

    P(N) is proportional to a^N V^(N-1) / (N-1)!; the N = 0 term is zero
    because goods cannot exist without an owner. Truncated where the
    remaining mass falls below `tail`.
    """
    _require(V > 0, "V must be positive")
    a = grand_activity(T, mu, k0)
    lam = a * V
    n_max = max(10, int(lam + 12 * math.sqrt(lam + 1) + 20))
    ns = np.arange(1, n_max + 1)
    logw = ns * math.log(a) + (ns - 1) * math.log(V) - gammaln(ns)
    w = np.exp(logw - logw.max())
    probs = w / w.sum()
    keep = probs.cumsum() < 1.0 - tail
    if keep.any():
        last = int(keep.sum()) + 1
    else:
        last = 1
    ns, probs = ns[:last], probs[:last]
    return ns, probs / probs.sum()


@dataclass(frozen=True)
class PotentialValue:
    """A thermodynamic potential evaluated at an ensemble point."""

    kind: str  # "helmholtz_F0" | "gibbs_G0" | "omega_Omega0"
    value: float
    at: EnsembleSpec


def ideal_potential(spec: EnsembleSpec) -> PotentialValue:
    """Thermodynamic potential of the ideal market for the given ensemble.

    canonical -> Helmholtz F0 = -k0 T ln Z(T,V,N)
    npt       -> Gibbs G0     = -k0 T ln Z(T,p,N), with mu = G0 / N
    grand     -> Omega0       = -k0 T ln Z(T,V,mu), with p = -Omega0 / V
    """
    k0 = spec.k0
    if spec.kind == "canonical":
        value = -k0 * spec.T * ideal_canonical_log_z(spec.T, spec.V, spec.N, k0)
        return PotentialValue("helmholtz_F0", value, spec)
    if spec.kind == "npt":
        value = -k0 * spec.T * ideal_npt_log_z(spec.T, spec.p, spec.N, k0)
        return PotentialValue("gibbs_G0", value, spec)
    if spec.kind == "grand":
        value = -k0 * spec.T * ideal_grand_log_z(spec.T, spec.V, spec.mu, k0)
        return PotentialValue("omega_Omega0", value, spec)
    raise ValueError("no potential is defined for an isolated ensemble")


def ideal_relative_fluctuation(N: int) -> float:
    """Shared relative fluctuation of price and temperature, 1/sqrt(N)."""
    _require(N >= 1, "N must be at least 1")
    return 1.0 / math.sqrt(N)


def ideal_money_entropy(T: float, N: int, k0: float = 1.0) -> float:
    """Entropy of the money sector alone: k0 N (ln(k0 T) + 1).

    Used for money-only markets (V = 0), where the goods term of the full
    entropy is absent.
    """
    _require(T > 0, "T must be positive")
    _require(N >= 1, "N must be at least 1")
    _require(k0 > 0, "k0 must be positive")
    return k0 * N * (math.log(k0 * T) + 1.0)


def ideal_entropy(T: float, V: float, N: int, k0: float = 1.0) -> float:
    """Entropy -dF0/dT = k0 [N ln(k0 T) + (N-1) ln V - ln (N-1)!] + k0 N."""
    return k0 * ideal_canonical_log_z(T, V, N, k0) + k0 * N


def ideal_financial_potential(T: float, V: float, N: int, k0: float = 1.0) -> float:
    """Financial potential dF0/dN with the continuous-N (digamma)
    extension of the factorial: -k0 T [ln(k0 T) + ln V - psi(N)]."""
    _require(V > 0, "V must be positive")
    _require(T > 0, "T must be positive")
    _require(N >= 1, "N must be at least 1")
    return -k0 * T * (math.log(k0 * T) + math.log(V) - float(digamma(N)))


def ideal_log_z_family(kind: str, k0: float = 1.0):
    """Closed-form log-Z callable in the parameter signature that the
    finite-difference machinery expects for the given ensemble kind."""
    if kind == "canonical":
        return lambda T, V, N: ideal_canonical_log_z(T, V, int(round(N)), k0)
    if kind == "npt":
        return lambda T, p, N: ideal_npt_log_z(T, p, int(round(N)), k0)
    if kind == "grand":
        return lambda T, V, mu: ideal_grand_log_z(T, V, mu, k0)
    raise ValueError(f"no closed-form family for ensemble kind {kind!r}")
