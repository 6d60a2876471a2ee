"""Core market types: microstates, functionals, ensemble specs, temperature.

A market microstate is a pair of per-agent vectors (money, goods). Total
money plays the role of internal energy, total goods the role of volume,
price the role of pressure, and the mean money per agent (divided by the
scale constant k0) is the market temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "MarketState",
    "EnergyFunctional",
    "VolumeFunctional",
    "EnsembleSpec",
    "ThermoReport",
    "new_market",
    "total_energy",
    "total_volume",
    "estimate_temperature",
    "concat_markets",
]


def _as_readonly(vec, name: str) -> np.ndarray:
    arr = np.array(vec, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a one-dimensional sequence")
    if arr.size and float(arr.min()) < 0.0:
        raise ValueError(f"{name} entries must be non-negative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MarketState:
    """Per-agent money and goods holdings. Immutable after construction.

    An empty market (zero agents) is a valid state with E = V = 0; the
    samplers that need agents reject it explicitly.
    """

    money: np.ndarray
    goods: np.ndarray

    def __post_init__(self):
        money = _as_readonly(self.money, "money")
        goods = _as_readonly(self.goods, "goods")
        if money.shape != goods.shape:
            raise ValueError("money and goods vectors must have equal length")
        object.__setattr__(self, "money", money)
        object.__setattr__(self, "goods", goods)

    @property
    def size(self) -> int:
        return int(self.money.size)


@dataclass(frozen=True)
class EnergyFunctional:
    """Map from a microstate to the total market energy (disposable money).

    kinds:
      additive      exact sum of per-agent money
      shared-pool   a pool of money jointly disposed of by a member group is
                    counted once at system level:
                        sum(money) - (g - 1) * min(pool, min(member money))
                    where g = len(members); the min() caps the joint amount
                    at what every member actually disposes of, which keeps
                    the total non-negative
      custom        fn(money, goods) -> float, must be non-negative

    A custom functional that reads the goods vector must set uses_goods so
    the partition-function machinery knows the fixed-volume constraint
    cannot be separated analytically.
    """

    kind: str = "additive"
    params: dict = field(default_factory=dict)
    fn: Callable[[np.ndarray, np.ndarray], float] | None = None
    uses_goods: bool = False

    def __post_init__(self):
        if self.kind not in ("additive", "shared-pool", "custom"):
            raise ValueError(f"unknown energy functional kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom energy functional requires fn")
        if self.kind == "shared-pool":
            pool = self.params.get("pool")
            members = self.params.get("members")
            if pool is None or members is None:
                raise ValueError("shared-pool requires params 'pool' and 'members'")
            if pool < 0:
                raise ValueError("pool must be non-negative")
            if len(set(members)) != len(members) or len(members) < 1:
                raise ValueError("members must be a non-empty set of distinct indices")

    def evaluate_arrays(self, money: np.ndarray, goods: np.ndarray) -> float:
        if self.kind == "additive":
            return math.fsum(money)
        if self.kind == "shared-pool":
            members = np.asarray(self.params["members"], dtype=int)
            if money.size and (members.min() < 0 or members.max() >= money.size):
                raise ValueError("shared-pool members out of range for this market")
            if members.size > money.size:
                raise ValueError("shared-pool members out of range for this market")
            joint = min(float(self.params["pool"]), float(money[members].min()))
            return math.fsum(money) - (members.size - 1) * joint
        value = float(self.fn(money, goods))
        if value < 0.0:
            raise ValueError("custom energy functional returned a negative value")
        return value

    def evaluate(self, state: MarketState) -> float:
        return self.evaluate_arrays(state.money, state.goods)


@dataclass(frozen=True)
class VolumeFunctional:
    """Map from a microstate to the total market volume (goods held)."""

    kind: str = "additive"
    params: dict = field(default_factory=dict)
    fn: Callable[[np.ndarray, np.ndarray], float] | None = None

    def __post_init__(self):
        if self.kind not in ("additive", "custom"):
            raise ValueError(f"unknown volume functional kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom volume functional requires fn")

    def evaluate_arrays(self, money: np.ndarray, goods: np.ndarray) -> float:
        if self.kind == "additive":
            return math.fsum(goods)
        value = float(self.fn(money, goods))
        if value < 0.0:
            raise ValueError("custom volume functional returned a negative value")
        return value

    def evaluate(self, state: MarketState) -> float:
        return self.evaluate_arrays(state.money, state.goods)


ADDITIVE_ENERGY = EnergyFunctional("additive")
ADDITIVE_VOLUME = VolumeFunctional("additive")


@dataclass(frozen=True)
class EnsembleSpec:
    """Which market parameters are held fixed, plus the scale constant k0.

    kinds and their fixed quantities:
      isolated    (E, V, N)   closed market, kinetic exchange dynamics
      canonical   (T, V, N)   fixed temperature, goods total, agent count
      npt         (T, p, N)   fixed temperature, price, agent count
      grand       (T, V, mu)  fixed temperature, goods total, financial
                              potential; agent count fluctuates

    Fixed quantities must be strictly positive, with two exceptions: mu may
    be any real, and an isolated market may carry E = 0 or V = 0 (a
    money-only or goods-only closed market is well defined).
    """

    kind: str
    E: float | None = None
    T: float | None = None
    V: float | None = None
    N: int | None = None
    p: float | None = None
    mu: float | None = None
    k0: float = 1.0

    def __post_init__(self):
        if self.k0 <= 0:
            raise ValueError("k0 must be positive")
        required = {
            "isolated": ("E", "V", "N"),
            "canonical": ("T", "V", "N"),
            "npt": ("T", "p", "N"),
            "grand": ("T", "V", "mu"),
        }
        if self.kind not in required:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        for name in required[self.kind]:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"{self.kind} ensemble requires {name}")
            if name == "mu":
                continue
            if self.kind == "isolated" and name in ("E", "V"):
                if value < 0:
                    raise ValueError(f"{name} must be non-negative")
            elif value <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.N is not None and int(self.N) != self.N:
            raise ValueError("N must be an integer")

    @classmethod
    def isolated(cls, E: float, V: float, N: int, k0: float = 1.0) -> "EnsembleSpec":
        return cls("isolated", E=E, V=V, N=N, k0=k0)

    @classmethod
    def canonical(cls, T: float, V: float, N: int, k0: float = 1.0) -> "EnsembleSpec":
        return cls("canonical", T=T, V=V, N=N, k0=k0)

    @classmethod
    def isothermal_isobaric(cls, T: float, p: float, N: int, k0: float = 1.0) -> "EnsembleSpec":
        return cls("npt", T=T, p=p, N=N, k0=k0)

    @classmethod
    def grand_canonical(cls, T: float, V: float, mu: float, k0: float = 1.0) -> "EnsembleSpec":
        return cls("grand", T=T, V=V, mu=mu, k0=k0)


def _check_var_stderr(var: float, stderr: float, name: str, n: int):
    if math.isnan(var) or math.isnan(stderr):
        return
    if var < -1e-12:
        raise ValueError(f"var_{name} must be non-negative")
    if stderr < 0:
        raise ValueError(f"stderr_{name} must be non-negative")
    if n >= 1 and stderr > math.sqrt(max(var, 0.0)) * (1 + 1e-9) + 1e-300:
        raise ValueError(f"stderr_{name} exceeds the sample standard deviation")


@dataclass(frozen=True)
class ThermoReport:
    """Estimated market observables from a trace or a closed-form route.

    Fields that do not apply to a given ensemble are NaN. Variances and
    standard errors refer to per-sample fluctuations of the recorded
    observable; stderr never exceeds the sample standard deviation.
    """

    mean_E: float = math.nan
    mean_V: float = math.nan
    mean_N: float = math.nan
    pressure: float = math.nan
    temperature: float = math.nan
    financial_potential: float = math.nan
    entropy: float = math.nan
    var_E: float = math.nan
    var_V: float = math.nan
    var_N: float = math.nan
    stderr_E: float = math.nan
    stderr_V: float = math.nan
    stderr_N: float = math.nan
    sample_count: int = 0

    def __post_init__(self):
        if self.sample_count < 0:
            raise ValueError("sample_count must be non-negative")
        n = self.sample_count
        _check_var_stderr(self.var_E, self.stderr_E, "E", n)
        _check_var_stderr(self.var_V, self.stderr_V, "V", n)
        _check_var_stderr(self.var_N, self.stderr_N, "N", n)


def _random_weights(rng: np.random.Generator, n: int) -> np.ndarray:
    w = rng.random(n)
    s = w.sum()
    if s == 0.0:
        return np.full(n, 1.0 / n)
    return w / s


def new_market(
    n: int,
    total_money: float,
    total_goods: float,
    allocation: str = "equal",
    seed: int | None = None,
) -> MarketState:
    """Construct an initial market with the given totals.

    allocation "equal" splits both totals evenly; "random" splits them by
    seeded random weights (the same seed always reconstructs the same
    state bit for bit).
    """
    if n < 1:
        raise ValueError("a market needs at least one agent")
    if total_money < 0 or total_goods < 0:
        raise ValueError("totals must be non-negative")
    if allocation == "equal":
        money = np.full(n, total_money / n)
        goods = np.full(n, total_goods / n)
    elif allocation in ("random", "random-seeded"):
        if seed is None:
            raise ValueError("random allocation requires a seed")
        rng = np.random.default_rng(seed)
        money = total_money * _random_weights(rng, n)
        goods = total_goods * _random_weights(rng, n)
    else:
        raise ValueError(f"unknown allocation {allocation!r}")
    return MarketState(money=money, goods=goods)


def total_energy(state: MarketState, f: EnergyFunctional = ADDITIVE_ENERGY) -> float:
    """Total market energy under the given functional (additive: exact sum)."""
    return f.evaluate(state)


def total_volume(state: MarketState, g: VolumeFunctional = ADDITIVE_VOLUME) -> float:
    """Total market volume under the given functional (additive: exact sum)."""
    return g.evaluate(state)


def estimate_temperature(
    state: MarketState,
    k0: float = 1.0,
    method: str = "mean-money",
    pressure: float | None = None,
) -> float:
    """Estimate the market temperature from a microstate.

    "mean-money" returns E / (k0 N), valid for additive markets even out of
    global equilibrium. "eos" returns p V / (k0 N) and needs the price.
    """
    if state.size == 0:
        raise ValueError("cannot estimate temperature of an empty market")
    if k0 <= 0:
        raise ValueError("k0 must be positive")
    n = state.size
    if method == "mean-money":
        return math.fsum(state.money) / (k0 * n)
    if method == "eos":
        if pressure is None or pressure <= 0:
            raise ValueError("eos method requires a positive pressure")
        return pressure * math.fsum(state.goods) / (k0 * n)
    raise ValueError(f"unknown method {method!r}")


def concat_markets(a: MarketState, b: MarketState) -> MarketState:
    """Join two markets into one (used for extensivity checks)."""
    return MarketState(
        money=np.concatenate([a.money, b.money]),
        goods=np.concatenate([a.goods, b.goods]),
    )
