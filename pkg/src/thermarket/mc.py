"""Monte Carlo samplers for the four market ensembles.

Kinetic pair exchange drives isolated markets toward the exponential
money law; Metropolis kernels target the fixed-(T,V,N), fixed-(T,p,N) and
fixed-(T,V,mu) distributions. Every chain is deterministic given its seed,
and replica chains draw decorrelated child seeds from the master seed.

Step units: an isolated (kinetic) step is one matching round of N//2
disjoint pair exchanges; a canonical or npt step is one full sweep (N money
moves plus a round of goods moves); a grand step is one elementary attempt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ADDITIVE_ENERGY,
    ADDITIVE_VOLUME,
    EnergyFunctional,
    EnsembleSpec,
    MarketState,
    VolumeFunctional,
)
from .oracle import grand_count_pmf

__all__ = [
    "ExchangeRule",
    "ChainConfig",
    "Trace",
    "pair_exchange",
    "kinetic_step",
    "kinetic_round",
    "canonical_step",
    "npt_step",
    "grand_step",
    "run_chain",
    "direct_grand_sample",
    "sample_grand_counts",
]


@dataclass(frozen=True)
class ExchangeRule:
    """Pairwise kinetic exchange rule.

    uniform-fraction-pair pools the pair's money and splits it at a
    uniform random fraction; fixed-delta-pair transfers a fixed amount
    (clipped so holdings never go negative). loss_fraction of the traded
    money leaks to third parties on every trade. goods_exchange moves a
    uniform amount up to the smaller holding between the pair.
    """

    kind: str = "uniform-fraction-pair"
    loss_fraction: float = 0.0
    goods_exchange: bool = False
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform-fraction-pair", "fixed-delta-pair"):
            raise ValueError(f"unknown exchange rule {self.kind!r}")
        if not 0.0 <= self.loss_fraction < 1.0:
            raise ValueError("loss_fraction must lie in [0, 1)")
        if self.kind == "fixed-delta-pair" and self.delta <= 0:
            raise ValueError("fixed-delta-pair requires a positive delta")


@dataclass(frozen=True)
class ChainConfig:
    """How long to run, what to record, and the master seed."""

    steps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    proposal_width: float | None = None
    replicas: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < steps")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.proposal_width is not None and self.proposal_width <= 0:
            raise ValueError("proposal_width must be positive")

    @property
    def recorded_length(self) -> int:
        return (self.steps - self.burn_in) // self.thin


@dataclass(frozen=True)
class Trace:
    """Recorded observables of one run (all replicas).

    E, V, N and each extras series have shape (replicas, recorded_length);
    step holds the step index of each record. final_states keeps the last
    microstate of every replica for histogramming.
    """

    step: np.ndarray
    E: np.ndarray
    V: np.ndarray
    N: np.ndarray
    seed: int
    config: ChainConfig
    spec: EnsembleSpec
    final_states: list[MarketState]
    extras: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.E.shape[0]

    def series(self, name: str, replica: int | None = None) -> np.ndarray:
        arr = {"E": self.E, "V": self.V, "N": self.N}.get(name)
        if arr is None:
            arr = self.extras[name]
        return arr.ravel() if replica is None else arr[replica]


def pair_exchange(money_i: float, money_j: float, r: float, loss_fraction: float = 0.0):
    """Redistribute a pair's pooled money at fraction r, leaking
    loss_fraction of the pool. Returns (new_i, new_j, leaked)."""
    s = money_i + money_j
    kept = s * (1.0 - loss_fraction)
    new_i = r * kept
    return new_i, kept - new_i, s - kept


def _choose_pair(rng: np.random.Generator, n: int) -> tuple[int, int]:
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    return i, j


def kinetic_step(state: MarketState, rule: ExchangeRule, rng: np.random.Generator) -> MarketState:
    """One pair exchange between a uniformly chosen unordered pair."""
    n = state.size
    if n < 2:
        raise ValueError("kinetic exchange needs at least two agents")
    money = state.money.copy()
    goods = state.goods.copy()
    i, j = _choose_pair(rng, n)
    if rule.kind == "uniform-fraction-pair":
        money[i], money[j], _ = pair_exchange(money[i], money[j], rng.random(), rule.loss_fraction)
    else:
        payer, payee = (i, j) if rng.random() < 0.5 else (j, i)
        d = min(rule.delta, money[payer])
        money[payer] -= d
        money[payee] += d * (1.0 - rule.loss_fraction)
    if rule.goods_exchange:
        u = rng.random() * min(goods[i], goods[j])
        src, dst = (i, j) if rng.random() < 0.5 else (j, i)
        total = goods[src] + goods[dst]
        goods[src] -= u
        goods[dst] = total - goods[src]
    return MarketState(money=money, goods=goods)


def _kinetic_round_arrays(
    money: np.ndarray, goods: np.ndarray, rule: ExchangeRule, rng: np.random.Generator
) -> int:
    """One matching round in place: a random perfect matching of the agents
    exchanges pairwise. Returns the number of pair exchanges performed."""
    n = money.size
    m = n // 2
    perm = rng.permutation(n)
    i, j = perm[:m], perm[m : 2 * m]
    if rule.kind == "uniform-fraction-pair":
        s = money[i] + money[j]
        kept = s * (1.0 - rule.loss_fraction)
        r = rng.random(m)
        mi = r * kept
        money[i] = mi
        money[j] = kept - mi
    else:
        r = rng.random(m) < 0.5
        payer = np.where(r, i, j)
        payee = np.where(r, j, i)
        d = np.minimum(rule.delta, money[payer])
        money[payer] -= d
        money[payee] += d * (1.0 - rule.loss_fraction)
    if rule.goods_exchange:
        u = rng.random(m) * np.minimum(goods[i], goods[j])
        flip = rng.random(m) < 0.5
        src = np.where(flip, i, j)
        dst = np.where(flip, j, i)
        total = goods[src] + goods[dst]
        goods[src] = goods[src] - u
        goods[dst] = total - goods[src]
    return m


def kinetic_round(state: MarketState, rule: ExchangeRule, rng: np.random.Generator) -> MarketState:
    """One matching round of N//2 disjoint pair exchanges."""
    if state.size < 2:
        raise ValueError("kinetic exchange needs at least two agents")
    money = state.money.copy()
    goods = state.goods.copy()
    _kinetic_round_arrays(money, goods, rule, rng)
    return MarketState(money=money, goods=goods)


def _metropolis(log_ratio: float, rng: np.random.Generator) -> bool:
    return log_ratio >= 0.0 or math.log(rng.random()) < log_ratio


def _goods_pair_move(
    money: np.ndarray,
    goods: np.ndarray,
    f: EnergyFunctional,
    T: float,
    k0: float,
    rng: np.random.Generator,
):
    """Pool a random pair's goods and resplit uniformly. The proposal is
    uniform on the pair segment, hence symmetric; the fixed-volume sum is
    preserved by complementary assignment."""
    n = goods.size
    if n < 2:
        return
    i, j = _choose_pair(rng, n)
    s = goods[i] + goods[j]
    new_i = rng.random() * s
    if f.uses_goods:
        e_old = f.evaluate_arrays(money, goods)
        old_i, old_j = goods[i], goods[j]
        goods[i], goods[j] = new_i, s - new_i
        e_new = f.evaluate_arrays(money, goods)
        if not _metropolis(-(e_new - e_old) / (k0 * T), rng):
            goods[i], goods[j] = old_i, old_j
    else:
        goods[i] = new_i
        goods[j] = s - new_i


def _money_move(
    money: np.ndarray,
    goods: np.ndarray,
    f: EnergyFunctional,
    T: float,
    k0: float,
    width: float,
    rng: np.random.Generator,
) -> bool:
    """Single-agent money displacement with Metropolis acceptance."""
    i = int(rng.integers(money.size))
    eta = rng.uniform(-width, width)
    prop = money[i] + eta
    if prop < 0:
        return False
    if f.kind == "additive":
        delta = eta
    else:
        e_old = f.evaluate_arrays(money, goods)
        old = money[i]
        money[i] = prop
        delta = f.evaluate_arrays(money, goods) - e_old
        money[i] = old
    if _metropolis(-delta / (k0 * T), rng):
        money[i] = prop
        return True
    return False


def canonical_step(
    state: MarketState,
    T: float,
    V: float,
    f: EnergyFunctional,
    rng: np.random.Generator,
    width: float,
    k0: float = 1.0,
) -> MarketState:
    """One fixed-(T, V, N) move: a money displacement or a goods pair
    resplit, chosen at even odds. Requires sum(goods) = V on entry."""
    if abs(math.fsum(state.goods) - V) > 1e-8 * max(1.0, V):
        raise ValueError("state does not satisfy the fixed-volume constraint")
    money = state.money.copy()
    goods = state.goods.copy()
    if rng.random() < 0.5 or state.size < 2:
        _money_move(money, goods, f, T, k0, width, rng)
    else:
        _goods_pair_move(money, goods, f, T, k0, rng)
    return MarketState(money=money, goods=goods)


def npt_step(
    state: MarketState,
    T: float,
    p: float,
    f: EnergyFunctional,
    rng: np.random.Generator,
    width: float,
    k0: float = 1.0,
) -> MarketState:
    """One fixed-(T, p, N) move: a money displacement or a single-agent
    goods displacement accepted against exp(-(dE + p dV)/k0T)."""
    money = state.money.copy()
    goods = state.goods.copy()
    if rng.random() < 0.5:
        _money_move(money, goods, f, T, k0, width, rng)
    else:
        i = int(rng.integers(goods.size))
        eta = rng.uniform(-width, width)
        prop = goods[i] + eta
        if prop >= 0:
            if f.uses_goods:
                e_old = f.evaluate_arrays(money, goods)
                old = goods[i]
                goods[i] = prop
                delta_e = f.evaluate_arrays(money, goods) - e_old
                goods[i] = old
            else:
                delta_e = 0.0
            if _metropolis(-(delta_e + p * eta) / (k0 * T), rng):
                goods[i] = prop
    return MarketState(money=money, goods=goods)


def _insert_delete(
    money: list,
    goods: list,
    T: float,
    V: float,
    mu: float,
    f: EnergyFunctional,
    rng: np.random.Generator,
    k0: float,
) -> bool:
    """One agent insertion or deletion attempt (even odds) against the
    fixed-(T, V, mu) distribution.

    Insertion appends an agent whose money is drawn from the exponential
    proposal (so the money factor cancels) and whose goods take a
    stick-breaking fraction phi ~ Beta(1, N) of the volume, the remaining
    agents shrinking by (1 - phi). With that proposal the acceptance ratio
    reduces to a V / N, the agent-count ratio of the partition sum, with
    a = k0 T exp(mu / k0 T). Deletion is the exact reverse with ratio
    (N - 1) / (a V); deleting the last agent is rejected because goods
    cannot be ownerless.
    """
    n = len(money)
    beta = 1.0 / (k0 * T)
    if rng.random() < 0.5:
        eps_new = rng.exponential(k0 * T)
        phi = 1.0 - rng.random() ** (1.0 / n)
        if f.kind == "additive":
            log_ratio = mu * beta + math.log(V) - math.log(n)
        else:
            m_arr = np.asarray(money)
            g_arr = np.asarray(goods)
            e_old = f.evaluate_arrays(m_arr, g_arr)
            m_new = np.append(m_arr, eps_new)
            g_new = np.append(g_arr * (1.0 - phi), phi * V)
            e_new = f.evaluate_arrays(m_new, g_new)
            log_ratio = (
                (mu + eps_new - (e_new - e_old)) * beta
                + math.log(k0 * T)
                + math.log(V)
                - math.log(n)
            )
        if _metropolis(log_ratio, rng):
            scale = 1.0 - phi
            for k in range(n):
                goods[k] *= scale
            goods.append(phi * V)
            money.append(eps_new)
            return True
        return False
    if n == 1:
        return False
    k = int(rng.integers(n))
    # rescale against the actual sum: referencing the nominal V here would
    # amplify accumulated rounding whenever a dominant holder is removed
    remaining = math.fsum(goods) - goods[k]
    if remaining <= 0.0:
        return False
    if f.kind == "additive":
        log_ratio = math.log(n - 1) - math.log(V) - mu * beta
    else:
        m_arr = np.asarray(money)
        g_arr = np.asarray(goods)
        e_old = f.evaluate_arrays(m_arr, g_arr)
        m_new = np.delete(m_arr, k)
        g_new = np.delete(g_arr, k) * (V / remaining)
        e_new = f.evaluate_arrays(m_new, g_new)
        log_ratio = (
            -(mu + money[k] + (e_new - e_old)) * beta
            - math.log(k0 * T)
            + math.log(n - 1)
            - math.log(V)
        )
    if _metropolis(log_ratio, rng):
        scale = V / remaining
        money.pop(k)
        goods.pop(k)
        for q in range(n - 1):
            goods[q] *= scale
        return True
    return False


def grand_step(
    state: MarketState,
    T: float,
    V: float,
    mu: float,
    f: EnergyFunctional,
    rng: np.random.Generator,
    k0: float = 1.0,
) -> MarketState:
    """One insertion-or-deletion attempt at fixed (T, V, mu)."""
    if state.size < 1:
        raise ValueError("the grand ensemble keeps at least one agent")
    if abs(math.fsum(state.goods) - V) > 1e-8 * max(1.0, V):
        raise ValueError("state does not satisfy the fixed-volume constraint")
    money = list(state.money)
    goods = list(state.goods)
    _insert_delete(money, goods, T, V, mu, f, rng, k0)
    return MarketState(money=np.array(money), goods=np.array(goods))


def direct_grand_sample(
    T: float, V: float, mu: float, k0: float, rng: np.random.Generator
) -> MarketState:
    """Exact one-shot draw from the additive fixed-(T, V, mu) distribution.

    The agent count comes from inverse-CDF sampling of the truncated
    count distribution, money is i.i.d. exponential with mean k0 T, and
    goods are uniform on the fixed-volume surface.
    """
    ns, probs = grand_count_pmf(T, V, mu, k0)
    n = int(ns[np.searchsorted(np.cumsum(probs), rng.random())])
    money = rng.exponential(k0 * T, n)
    w = rng.exponential(1.0, n)
    goods = V * w / w.sum()
    return MarketState(money=money, goods=goods)


def sample_grand_counts(
    T: float, V: float, mu: float, k0: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Vectorized agent-count draws from the same inverse-CDF table."""
    ns, probs = grand_count_pmf(T, V, mu, k0)
    return ns[np.searchsorted(np.cumsum(probs), rng.random(size))]


# ---------------------------------------------------------------------------
# chain drivers


class _Recorder:
    def __init__(self, cfg: ChainConfig, names: tuple[str, ...]):
        self.cfg = cfg
        self.n_rec = cfg.recorded_length
        self.step = np.zeros(self.n_rec, dtype=np.int64)
        self.data = {name: np.zeros(self.n_rec) for name in names}
        self.k = 0

    def wants(self, step: int) -> bool:
        c = self.cfg
        return step > c.burn_in and (step - c.burn_in) % c.thin == 0 and self.k < self.n_rec

    def push(self, step: int, **values):
        self.step[self.k] = step
        for name, val in values.items():
            self.data[name][self.k] = val
        self.k += 1


def _tune_width(width: float, accepted: int, attempted: int) -> float:
    if attempted == 0:
        return width
    rate = accepted / attempted
    if rate > 0.5:
        return width * 1.25
    if rate < 0.25:
        return width / 1.25
    return width


def _run_kinetic(state, spec, cfg, rule, rng):
    money = state.money.copy()
    goods = state.goods.copy()
    rec = _Recorder(cfg, ("E", "V", "N", "leak"))
    e0 = money.sum()
    v0 = goods.sum()
    leak = 0.0
    for step in range(1, cfg.steps + 1):
        pre = money.sum()
        _kinetic_round_arrays(money, goods, rule, rng)
        if rule.loss_fraction > 0.0:
            leak += pre - money.sum()
        if rec.wants(step):
            rec.push(step, E=money.sum(), V=goods.sum(), N=money.size, leak=leak)
    meta = {"initial_E": e0, "initial_V": v0, "leak_total": leak}
    return rec, MarketState(money=money, goods=goods), meta


def _canonical_sweep_additive(money, goods, T, k0, width, rng, do_goods):
    n = money.size
    eta = rng.uniform(-width, width, n)
    prop = money + eta
    accept = (prop >= 0.0) & (np.log(rng.random(n)) < -eta / (k0 * T))
    money[accept] = prop[accept]
    if do_goods and n >= 2:
        m = n // 2
        perm = rng.permutation(n)
        i, j = perm[:m], perm[m : 2 * m]
        s = goods[i] + goods[j]
        gi = rng.random(m) * s
        goods[i] = gi
        goods[j] = s - gi
    return int(accept.sum()), n


def _run_canonical(state, spec, cfg, f, rng):
    T, V, k0 = spec.T, spec.V, spec.k0
    if state.size != spec.N:
        raise ValueError("initial state size does not match the ensemble N")
    if V > 0 and abs(math.fsum(state.goods) - V) > 1e-8 * max(1.0, V):
        raise ValueError("initial state does not satisfy the fixed-volume constraint")
    money = state.money.copy()
    goods = state.goods.copy()
    n = money.size
    width = cfg.proposal_width or k0 * T
    tune = cfg.proposal_width is None
    has_goods = V > 0
    rec = _Recorder(cfg, ("E", "V", "N", "goods_y") if has_goods else ("E", "V", "N"))
    additive = f.kind == "additive"
    acc = att = 0
    for step in range(1, cfg.steps + 1):
        if additive:
            a, t = _canonical_sweep_additive(money, goods, T, k0, width, rng, has_goods)
        else:
            a = 0
            for _ in range(n):
                a += _money_move(money, goods, f, T, k0, width, rng)
            t = n
            if has_goods:
                for _ in range(max(1, n // 2)):
                    _goods_pair_move(money, goods, f, T, k0, rng)
        acc += a
        att += t
        if tune and step <= cfg.burn_in and step % 20 == 0:
            width = _tune_width(width, acc, att)
            acc = att = 0
        if rec.wants(step):
            values = {"E": f.evaluate_arrays(money, goods), "V": goods.sum(), "N": n}
            if has_goods:
                frac = np.clip(goods / max(goods.sum(), 1e-300), 0.0, 1.0 - 1e-15)
                values["goods_y"] = float(-np.log1p(-frac).mean())
            rec.push(step, **values)
    meta = {"width": width, "acceptance": acc / att if att else math.nan}
    return rec, MarketState(money=money, goods=goods), meta


def _run_npt(state, spec, cfg, f, rng):
    T, p, k0 = spec.T, spec.p, spec.k0
    if state.size != spec.N:
        raise ValueError("initial state size does not match the ensemble N")
    money = state.money.copy()
    goods = state.goods.copy()
    n = money.size
    w_money = cfg.proposal_width or k0 * T
    w_goods = cfg.proposal_width or k0 * T / p
    tune = cfg.proposal_width is None
    rec = _Recorder(cfg, ("E", "V", "N"))
    additive = f.kind == "additive" and not f.uses_goods
    acc_m = att_m = acc_v = att_v = 0
    for step in range(1, cfg.steps + 1):
        if additive:
            a, t = _canonical_sweep_additive(money, goods, T, k0, w_money, rng, False)
            acc_m += a
            att_m += t
            eta = rng.uniform(-w_goods, w_goods, n)
            prop = goods + eta
            accept = (prop >= 0.0) & (np.log(rng.random(n)) < -p * eta / (k0 * T))
            goods[accept] = prop[accept]
            acc_v += int(accept.sum())
            att_v += n
        else:
            for _ in range(n):
                acc_m += _money_move(money, goods, f, T, k0, w_money, rng)
                att_m += 1
                i = int(rng.integers(n))
                eta = rng.uniform(-w_goods, w_goods)
                prop = goods[i] + eta
                att_v += 1
                if prop >= 0:
                    if f.uses_goods:
                        e_old = f.evaluate_arrays(money, goods)
                        old = goods[i]
                        goods[i] = prop
                        d_e = f.evaluate_arrays(money, goods) - e_old
                        goods[i] = old
                    else:
                        d_e = 0.0
                    if _metropolis(-(d_e + p * eta) / (k0 * T), rng):
                        goods[i] = prop
                        acc_v += 1
        if tune and step <= cfg.burn_in and step % 20 == 0:
            w_money = _tune_width(w_money, acc_m, att_m)
            w_goods = _tune_width(w_goods, acc_v, att_v)
            acc_m = att_m = acc_v = att_v = 0
        if rec.wants(step):
            rec.push(step, E=f.evaluate_arrays(money, goods), V=goods.sum(), N=n)
    meta = {"width_money": w_money, "width_goods": w_goods}
    return rec, MarketState(money=money, goods=goods), meta


def _run_grand(state, spec, cfg, f, rng):
    T, V, mu, k0 = spec.T, spec.V, spec.mu, spec.k0
    if state.size < 1:
        raise ValueError("the grand ensemble keeps at least one agent")
    if abs(math.fsum(state.goods) - V) > 1e-8 * max(1.0, V):
        raise ValueError("initial state does not satisfy the fixed-volume constraint")
    money = list(state.money)
    goods = list(state.goods)
    width = cfg.proposal_width or k0 * T
    rec = _Recorder(cfg, ("E", "V", "N"))
    additive = f.kind == "additive"
    e_run = math.fsum(money)
    for step in range(1, cfg.steps + 1):
        u = rng.random()
        n = len(money)
        if u < 1.0 / 3.0:
            i = int(rng.integers(n))
            eta = rng.uniform(-width, width)
            prop = money[i] + eta
            if prop >= 0:
                if additive:
                    delta = eta
                else:
                    m_arr = np.asarray(money)
                    g_arr = np.asarray(goods)
                    e_old = f.evaluate_arrays(m_arr, g_arr)
                    m_arr[i] = prop
                    delta = f.evaluate_arrays(m_arr, g_arr) - e_old
                if _metropolis(-delta / (k0 * T), rng):
                    money[i] = prop
                    e_run += delta if additive else 0.0
        elif u < 2.0 / 3.0:
            if n >= 2:
                i = int(rng.integers(n))
                j = int(rng.integers(n - 1))
                if j >= i:
                    j += 1
                s = goods[i] + goods[j]
                gi = rng.random() * s
                goods[i], goods[j] = gi, s - gi
        else:
            before = len(money)
            if _insert_delete(money, goods, T, V, mu, f, rng, k0):
                if len(money) > before:
                    e_run += money[-1]
                else:
                    e_run = math.fsum(money)
        if rec.wants(step):
            e_val = e_run if additive else f.evaluate_arrays(np.asarray(money), np.asarray(goods))
            rec.push(step, E=e_val, V=math.fsum(goods), N=len(money))
    meta = {"width": width}
    return rec, MarketState(money=np.array(money), goods=np.array(goods)), meta


def run_chain(
    initial: MarketState,
    spec: EnsembleSpec,
    cfg: ChainConfig,
    f: EnergyFunctional = ADDITIVE_ENERGY,
    g: VolumeFunctional = ADDITIVE_VOLUME,
    rule: ExchangeRule | None = None,
) -> Trace:
    """Run the sampler matching the ensemble spec and record a Trace.

    Isolated specs need an ExchangeRule; the Metropolis ensembles take
    their proposal width from the config (auto-tuned during burn-in when
    unset). With replicas > 1 each replica runs an independent chain from
    a child seed of the master seed.
    """
    drivers = {
        "isolated": _run_kinetic,
        "canonical": _run_canonical,
        "npt": _run_npt,
        "grand": _run_grand,
    }
    if spec.kind == "isolated":
        if rule is None:
            raise ValueError("isolated ensembles need an ExchangeRule")
        e_state = g_state = None
        scale = max(abs(spec.E), 1.0)
        if abs(f.evaluate(initial) - spec.E) > 1e-6 * scale:
            raise ValueError("initial state energy does not match the isolated spec")
        if abs(g.evaluate(initial) - spec.V) > 1e-6 * max(abs(spec.V), 1.0):
            raise ValueError("initial state volume does not match the isolated spec")
        if initial.size != spec.N:
            raise ValueError("initial state size does not match the isolated spec")

    children = np.random.SeedSequence(cfg.seed).spawn(cfg.replicas)
    recs, finals, metas = [], [], []
    for child in children:
        rng = np.random.default_rng(child)
        if spec.kind == "isolated":
            rec, final, meta = _run_kinetic(initial, spec, cfg, rule, rng)
        else:
            rec, final, meta = drivers[spec.kind](initial, spec, cfg, f, rng)
        recs.append(rec)
        finals.append(final)
        metas.append(meta)

    names = list(recs[0].data.keys())
    base = {"E", "V", "N"}
    extras = {n: np.stack([r.data[n] for r in recs]) for n in names if n not in base}
    return Trace(
        step=recs[0].step,
        E=np.stack([r.data["E"] for r in recs]),
        V=np.stack([r.data["V"] for r in recs]),
        N=np.stack([r.data["N"] for r in recs]),
        seed=cfg.seed,
        config=cfg,
        spec=spec,
        final_states=finals,
        extras=extras,
        meta={"replicas": metas},
    )
