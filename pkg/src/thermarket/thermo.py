"""Conservation-law ledger and the flow, entropy, and sweep experiments.

Money changes decompose exactly into heat (direct transfer), work (trading
goods at the market price), and financial work (agents migrating with
their money). The experiments here drive kinetic markets and check the
directional and entropy statements that follow: heat flows from hot to
cold, total entropy of an isolated pair never decreases beyond noise, and
a slow volume sweep retraces its price path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    ADDITIVE_ENERGY,
    ADDITIVE_VOLUME,
    EnergyFunctional,
    MarketState,
    ThermoReport,
    VolumeFunctional,
    estimate_temperature,
)
from .mc import Trace
from .oracle import ideal_entropy, ideal_money_entropy
from .stats import autocorr_time, blocked_stderr, histogram_differential_entropy

__all__ = [
    "Totals",
    "FirstLawRecord",
    "first_law_decompose",
    "totals",
    "CoupledSpec",
    "HeatFlowReport",
    "heat_flow_experiment",
    "IntervalRecord",
    "SecondLawReport",
    "second_law_check",
    "records_from_heat_flow",
    "heating_experiment",
    "entropy_estimate",
    "goods_pressure_estimate",
    "SweepSpec",
    "SweepStage",
    "SweepResult",
    "quasistatic_sweep",
    "make_sweep_path",
    "summarize_trace",
]


class Totals(NamedTuple):
    """The (E, V, N) summary of a market used by the ledger."""

    E: float
    V: float
    N: float


def totals(
    state: MarketState,
    f: EnergyFunctional = ADDITIVE_ENERGY,
    g: VolumeFunctional = ADDITIVE_VOLUME,
) -> Totals:
    return Totals(E=f.evaluate(state), V=g.evaluate(state), N=float(state.size))


@dataclass(frozen=True)
class FirstLawRecord:
    """Exact decomposition of a money change: heat = dE + work - financial_work."""

    dE: float
    work: float
    financial_work: float
    heat: float

    def __post_init__(self):
        if self.heat != self.dE + self.work - self.financial_work:
            raise ValueError("ledger identity violated: heat != dE + work - financial_work")


def first_law_decompose(before: Totals, after: Totals, price: float, mu: float) -> FirstLawRecord:
    """Split the money change between two summaries into heat, work at the
    given price, and financial work at the given potential. A pure trade
    (dE = -p dV, dN = 0) decomposes to zero heat."""
    d_e = after.E - before.E
    work = price * (after.V - before.V)
    fin = mu * (after.N - before.N)
    return FirstLawRecord(dE=d_e, work=work, financial_work=fin, heat=d_e + work - fin)


# ---------------------------------------------------------------------------
# coupled markets and heat flow


@dataclass(frozen=True)
class CoupledSpec:
    """Two kinetic money markets with occasional cross-market exchanges."""

    n1: int
    temp1: float
    n2: int
    temp2: float
    coupling_rate: float = 0.01  # cross exchanges per within-market pair exchange
    rounds: int = 6000
    interval: int = 200
    burn_in: int = 500
    seed: int = 0
    k0: float = 1.0

    def __post_init__(self):
        if min(self.n1, self.n2) < 2:
            raise ValueError("each market needs at least two agents")
        if not 0.0 < self.coupling_rate <= 1.0:
            raise ValueError("coupling_rate must lie in (0, 1]")
        if self.rounds < self.interval or self.interval < 1:
            raise ValueError("rounds must cover at least one interval")
        if self.temp1 <= 0 or self.temp2 <= 0 or self.k0 <= 0:
            raise ValueError("temperatures and k0 must be positive")


@dataclass(frozen=True)
class HeatFlowReport:
    """Per-interval temperatures, cumulative transferred heat, entropies.

    dq12 sign convention: money received by market 1 from market 2. The
    independently tracked dq21 satisfies dq21 = -dq12 up to float rounding
    of the pair sums.
    """

    spec: CoupledSpec
    t1: np.ndarray
    t2: np.ndarray
    t1_stderr: np.ndarray
    t2_stderr: np.ndarray
    dq12_interval: np.ndarray
    dq12_cumulative: np.ndarray
    dq21_cumulative: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s_total: np.ndarray

    def __post_init__(self):
        lengths = {
            len(self.t1), len(self.t2), len(self.dq12_interval),
            len(self.dq12_cumulative), len(self.s1), len(self.s2), len(self.s_total),
        }
        if len(lengths) != 1:
            raise ValueError("interval series must have equal length")

    @property
    def final_temperature(self) -> float:
        n1, n2 = self.spec.n1, self.spec.n2
        return (n1 * self.t1[-1] + n2 * self.t2[-1]) / (n1 + n2)


def _matching_round(money: np.ndarray, rng: np.random.Generator):
    n = money.size
    m = n // 2
    perm = rng.permutation(n)
    i, j = perm[:m], perm[m : 2 * m]
    s = money[i] + money[j]
    mi = rng.random(m) * s
    money[i] = mi
    money[j] = s - mi


def heat_flow_experiment(spec: CoupledSpec) -> HeatFlowReport:
    """Couple two equilibrated kinetic markets at different temperatures
    and record where the directly transferred money flows."""
    rng = np.random.default_rng(spec.seed)
    k0 = spec.k0
    m1 = np.full(spec.n1, k0 * spec.temp1)
    m2 = np.full(spec.n2, k0 * spec.temp2)
    for _ in range(spec.burn_in):
        _matching_round(m1, rng)
        _matching_round(m2, rng)

    cross_mean = spec.coupling_rate * (spec.n1 + spec.n2) / 2.0
    q12 = 0.0
    q21 = 0.0
    e1_rounds = np.zeros(spec.rounds)
    e2_rounds = np.zeros(spec.rounds)
    q12_rounds = np.zeros(spec.rounds)
    q21_rounds = np.zeros(spec.rounds)
    for r in range(spec.rounds):
        _matching_round(m1, rng)
        _matching_round(m2, rng)
        n_cross = int(cross_mean) + (rng.random() < cross_mean - int(cross_mean))
        for _ in range(n_cross):
            a = int(rng.integers(spec.n1))
            b = int(rng.integers(spec.n2))
            s = m1[a] + m2[b]
            new_a = rng.random() * s
            new_b = s - new_a
            q12 += new_a - m1[a]
            q21 += new_b - m2[b]
            m1[a] = new_a
            m2[b] = new_b
        e1_rounds[r] = m1.sum()
        e2_rounds[r] = m2.sum()
        q12_rounds[r] = q12
        q21_rounds[r] = q21

    n_int = spec.rounds // spec.interval
    t1 = np.zeros(n_int)
    t2 = np.zeros(n_int)
    dq_int = np.zeros(n_int)
    dq_cum = np.zeros(n_int)
    dq21_cum = np.zeros(n_int)
    prev_q = 0.0
    for k in range(n_int):
        sl = slice(k * spec.interval, (k + 1) * spec.interval)
        t1[k] = e1_rounds[sl].mean() / (k0 * spec.n1)
        t2[k] = e2_rounds[sl].mean() / (k0 * spec.n2)
        dq_cum[k] = q12_rounds[sl][-1]
        dq21_cum[k] = q21_rounds[sl][-1]
        dq_int[k] = dq_cum[k] - prev_q
        prev_q = dq_cum[k]
    # interval-mean temperature noise: empirical scatter over the
    # equilibrated tail when enough intervals exist, otherwise the
    # instantaneous subsystem fluctuation var(E1) = N1 T^2 N2/(Ntot-1)
    ntot = spec.n1 + spec.n2
    tbar = 0.5 * (t1 + t2)
    if n_int >= 8:
        tail = slice(n_int // 2, None)
        s1_emp = max(float(np.std(t1[tail], ddof=1)), 1e-12)
        s2_emp = max(float(np.std(t2[tail], ddof=1)), 1e-12)
        t1_se = np.full(n_int, s1_emp)
        t2_se = np.full(n_int, s2_emp)
    else:
        t1_se = tbar * np.sqrt(spec.n2 / ((ntot - 1) * spec.n1))
        t2_se = tbar * np.sqrt(spec.n1 / ((ntot - 1) * spec.n2))
    s1 = np.array([ideal_money_entropy(t, spec.n1, k0) for t in t1])
    s2 = np.array([ideal_money_entropy(t, spec.n2, k0) for t in t2])
    return HeatFlowReport(
        spec=spec,
        t1=t1,
        t2=t2,
        t1_stderr=t1_se,
        t2_stderr=t2_se,
        dq12_interval=dq_int,
        dq12_cumulative=dq_cum,
        dq21_cumulative=dq21_cum,
        s1=s1,
        s2=s2,
        s_total=s1 + s2,
    )


# ---------------------------------------------------------------------------
# second law


@dataclass(frozen=True)
class IntervalRecord:
    """One near-equilibrium interval of a multi-market system."""

    temps: tuple
    temp_stderrs: tuple
    external_heat: tuple
    ds_total: float
    ds_stderr: float


@dataclass(frozen=True)
class SecondLawReport:
    residuals: np.ndarray
    tolerances: np.ndarray
    passed: np.ndarray
    weak_residuals: np.ndarray  # NaN where the weak-gradient form does not apply
    all_pass: bool


def second_law_check(records: list[IntervalRecord]) -> SecondLawReport:
    """Verify ds >= sum(dQ_k / T_k) per interval within 3x propagated
    stderr. When the subsystem temperatures agree within 5 percent the
    weak-gradient form ds >= dQ_total / T_mean is evaluated as well."""
    residuals, tols, passed, weak = [], [], [], []
    for rec in records:
        temps = np.asarray(rec.temps, dtype=float)
        if np.any(temps <= 0):
            raise ValueError("subsystem temperatures must be positive and estimable")
        heats = np.asarray(rec.external_heat, dtype=float)
        ses = np.asarray(rec.temp_stderrs, dtype=float)
        flow_term = float((heats / temps).sum())
        residual = rec.ds_total - flow_term
        var = rec.ds_stderr**2 + float(((heats * ses / temps**2) ** 2).sum())
        tol = 3.0 * math.sqrt(var) + 1e-9 * (1.0 + abs(rec.ds_total))
        residuals.append(residual)
        tols.append(tol)
        passed.append(residual >= -tol)
        tbar = temps.mean()
        if np.max(np.abs(temps - tbar)) / tbar < 0.05:
            weak.append(rec.ds_total - float(heats.sum()) / tbar)
        else:
            weak.append(math.nan)
    residuals = np.asarray(residuals)
    tols = np.asarray(tols)
    passed = np.asarray(passed)
    weak = np.asarray(weak)
    weak_ok = np.all(np.isnan(weak) | (weak >= -tols))
    return SecondLawReport(
        residuals=residuals,
        tolerances=tols,
        passed=passed,
        weak_residuals=weak,
        all_pass=bool(passed.all() and weak_ok),
    )


def records_from_heat_flow(report: HeatFlowReport) -> list[IntervalRecord]:
    """Interval-to-interval records of the isolated coupled pair (no
    external heat, so the check reduces to total entropy non-decrease).

    The money constraint anticorrelates the two temperature estimates, so
    dS noise is first order in the temperature gap only; at equal
    temperatures what remains is the second-order equilibrium jitter of
    the entropy estimator, read off the equilibrated tail of the series.
    """
    spec = report.spec
    n_int = len(report.t1)
    ds_series = np.diff(report.s_total)
    if ds_series.size >= 6:
        tail = ds_series[ds_series.size // 2 :]
        sigma_equil = max(float(np.std(tail, ddof=1)), 1e-12)
    else:
        sigma_equil = spec.k0 * (spec.n1 + spec.n2) * 1e-3
    records = []
    for k in range(n_int - 1):
        ds = report.s_total[k + 1] - report.s_total[k]
        first_sq = 0.0
        for e in (k, k + 1):
            gap = abs(1.0 / report.t1[e] - 1.0 / report.t2[e])
            first_sq += (spec.k0 * spec.n1 * gap * report.t1_stderr[e]) ** 2
            first_sq += (spec.k0 * spec.n2 * gap * report.t2_stderr[e]) ** 2
        ds_se = math.sqrt(sigma_equil**2 + first_sq)
        records.append(
            IntervalRecord(
                temps=(report.t1[k], report.t2[k]),
                temp_stderrs=(report.t1_stderr[k], report.t2_stderr[k]),
                external_heat=(0.0, 0.0),
                ds_total=ds,
                ds_stderr=ds_se,
            )
        )
    return records


@dataclass(frozen=True)
class HeatingResult:
    records: list[IntervalRecord]
    ds_total: float
    heat_over_t: float
    temp_initial: float
    temp_final: float
    midpoint_bound: float  # third-order bound on |ds_total - heat_over_t|


def heating_experiment(
    n: int,
    temp: float,
    pulse: float,
    n_pulses: int,
    rounds_between: int = 20,
    seed: int = 0,
    k0: float = 1.0,
) -> HeatingResult:
    """Heat a single kinetic market by small external money pulses and
    ledger ds against dQ/T pulse by pulse.

    The mean-money estimator makes the temperature of a closed additive
    market exact between pulses, so each record carries zero statistical
    error; temperatures are taken at mid-pulse, the midpoint rule for the
    running dQ/T sum.
    """
    rng = np.random.default_rng(seed)
    money = np.full(n, k0 * temp)
    for _ in range(rounds_between * 5):
        _matching_round(money, rng)
    records = []
    t_init = money.sum() / (k0 * n)
    heat_over_t = 0.0
    midpoint_bound = 0.0
    for _ in range(n_pulses):
        e_before = money.sum()
        t_before = e_before / (k0 * n)
        money[int(rng.integers(n))] += pulse
        for _ in range(rounds_between):
            _matching_round(money, rng)
        t_after = money.sum() / (k0 * n)
        t_mid = (e_before + 0.5 * pulse) / (k0 * n)
        ds = ideal_money_entropy(t_after, n, k0) - ideal_money_entropy(t_before, n, k0)
        heat_over_t += pulse / t_mid
        midpoint_bound += k0 * n * (pulse / e_before) ** 3 / 6.0
        records.append(
            IntervalRecord(
                temps=(t_mid,),
                temp_stderrs=(0.0,),
                external_heat=(pulse,),
                ds_total=ds,
                ds_stderr=0.0,
            )
        )
    t_final = money.sum() / (k0 * n)
    ds_total = ideal_money_entropy(t_final, n, k0) - ideal_money_entropy(t_init, n, k0)
    return HeatingResult(
        records=records,
        ds_total=ds_total,
        heat_over_t=heat_over_t,
        temp_initial=t_init,
        temp_final=t_final,
        midpoint_bound=midpoint_bound,
    )


# ---------------------------------------------------------------------------
# entropy estimation


def entropy_estimate(
    method: str,
    temperature: float | None = None,
    volume: float | None = None,
    count: float | None = None,
    samples=None,
    agents: int | None = None,
    k0: float = 1.0,
) -> float:
    """Entropy of a market summary or a money sample.

    "ideal-analytic" evaluates the closed-form additive-market entropy at
    (temperature, volume, count); a zero volume drops the goods term.
    "histogram-shannon" returns agents times the differential entropy of
    the per-agent money histogram; it is a monotonicity diagnostic, not an
    absolute scale, and needs at least 1000 samples.
    """
    if method == "ideal-analytic":
        if temperature is None or count is None:
            raise ValueError("ideal-analytic entropy needs temperature and count")
        if volume and volume > 0:
            return ideal_entropy(temperature, volume, count, k0)
        return ideal_money_entropy(temperature, count, k0)
    if method == "histogram-shannon":
        if samples is None:
            raise ValueError("histogram-shannon entropy needs samples")
        x = np.asarray(samples, dtype=float).ravel()
        n_agents = agents if agents is not None else x.size
        return n_agents * histogram_differential_entropy(x)
    raise ValueError(f"unknown entropy method {method!r}")


# ---------------------------------------------------------------------------
# quasistatic volume sweep


def goods_pressure_estimate(goods: np.ndarray, temperature: float, k0: float = 1.0) -> float:
    """Price from the goods boundary transform.

    For a fixed-volume market with uniformly distributed goods the
    per-agent transform y = -ln(1 - v/V) is exponential with rate equal
    to the EOS coefficient (N - 1), so p = k0 T / (V * mean(y)). The
    estimate measures the sampled goods distribution, not the EOS formula.
    """
    v_tot = goods.sum()
    frac = np.clip(goods / v_tot, 0.0, 1.0 - 1e-15)
    ybar = float(-np.log1p(-frac).mean())
    return k0 * temperature / (v_tot * ybar)


def make_sweep_path(v_start: float, v_peak: float, stages_up: int = 5) -> tuple:
    """Volume targets start -> peak -> start with equal increments and a
    measurement stage at both ends."""
    up = np.linspace(v_start, v_peak, stages_up + 1)
    return tuple(up) + tuple(up[::-1][1:])


@dataclass(frozen=True)
class SweepSpec:
    volumes: tuple
    rounds_per_stage: int = 100
    measure_rounds: int = 60
    seed: int = 0
    k0: float = 1.0

    def __post_init__(self):
        if len(self.volumes) < 2:
            raise ValueError("a sweep needs at least two stages")
        if any(v <= 0 for v in self.volumes):
            raise ValueError("stage volumes must be positive")
        if not 1 <= self.measure_rounds < self.rounds_per_stage:
            raise ValueError("measure_rounds must leave room for equilibration")


@dataclass(frozen=True)
class SweepStage:
    volume: float
    pressure: float
    pressure_stderr: float
    temperature: float
    eos_ratio: float
    autocorr_ratio: float
    quasistatic_ok: bool


@dataclass(frozen=True)
class SweepResult:
    stages: list[SweepStage]
    quasistatic_ok: bool

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.stages])


def quasistatic_sweep(market: MarketState, spec: SweepSpec) -> SweepResult:
    """Drive the goods volume of a kinetic market along the stage targets,
    measuring (price, volume, temperature) at every stage.

    Volume changes drip in during the equilibration part of each stage;
    money exchanges use the uniform-fraction kinetic rule and goods relax
    through fixed-sum pair resplits. Each stage reports the ratio of the
    measured price autocorrelation time to the stage length; a ratio of
    0.1 or more flags the stage (and the sweep) as too fast.
    """
    n = market.size
    if n < 2:
        raise ValueError("sweep needs at least two agents")
    if market.goods.sum() <= 0:
        raise ValueError("sweep needs a market with goods")
    rng = np.random.default_rng(spec.seed)
    money = market.money.copy()
    goods = market.goods.copy()
    k0 = spec.k0

    def goods_round():
        m = n // 2
        perm = rng.permutation(n)
        i, j = perm[:m], perm[m : 2 * m]
        s = goods[i] + goods[j]
        gi = rng.random(m) * s
        goods[i] = gi
        goods[j] = s - gi

    def remove(amount: float):
        remaining = amount
        while remaining > 1e-15:
            idx = int(rng.integers(n))
            take = min(goods[idx], remaining)
            goods[idx] -= take
            remaining -= take

    stages = []
    for target in spec.volumes:
        adjust_rounds = spec.rounds_per_stage - spec.measure_rounds
        dv = target - goods.sum()
        drip = dv / adjust_rounds
        for _ in range(adjust_rounds):
            if drip > 0:
                goods[int(rng.integers(n))] += drip
            elif drip < 0:
                remove(-drip)
            _matching_round(money, rng)
            goods_round()
        ys = np.zeros(spec.measure_rounds)
        v_tot = np.zeros(spec.measure_rounds)
        for r in range(spec.measure_rounds):
            _matching_round(money, rng)
            goods_round()
            v_tot[r] = goods.sum()
            frac = np.clip(goods / v_tot[r], 0.0, 1.0 - 1e-15)
            ys[r] = -np.log1p(-frac).mean()
        ybar = ys.mean()
        temp = money.sum() / (k0 * n)
        volume = v_tot.mean()
        pressure = k0 * temp / (volume * ybar)
        tau = autocorr_time(ys).tau if np.std(ys) > 0 else 0.5
        n_eff = max(ys.size / (2.0 * tau), 2.0)
        se_y = float(np.std(ys, ddof=1)) / math.sqrt(n_eff)
        stage = SweepStage(
            volume=volume,
            pressure=pressure,
            pressure_stderr=pressure * se_y / ybar,
            temperature=temp,
            eos_ratio=pressure * volume / (k0 * n * temp),
            autocorr_ratio=tau / spec.rounds_per_stage,
            quasistatic_ok=tau / spec.rounds_per_stage < 0.1,
        )
        stages.append(stage)
    return SweepResult(stages=stages, quasistatic_ok=all(s.quasistatic_ok for s in stages))


# ---------------------------------------------------------------------------
# trace summaries


def _series_stderr(arr2d: np.ndarray) -> float:
    parts = []
    for row in arr2d:
        if row.size >= 64:
            parts.append(blocked_stderr(row).stderr)
        elif row.size >= 2:
            parts.append(float(np.std(row, ddof=1)) / math.sqrt(row.size))
        else:
            parts.append(0.0)
    r = arr2d.shape[0]
    return math.sqrt(sum(p * p for p in parts)) / r


def summarize_trace(trace: Trace) -> ThermoReport:
    """Estimated means, variances, and standard errors from a trace,
    with the temperature taken from mean money per agent and the price
    from the ensemble-appropriate route."""
    spec = trace.spec
    k0 = spec.k0
    e, v, n = trace.E, trace.V, trace.N
    mean_e = float(e.mean())
    mean_v = float(v.mean())
    mean_n = float(n.mean())
    var_e = float(e.var(ddof=1)) if e.size > 1 else 0.0
    var_v = float(v.var(ddof=1)) if v.size > 1 else 0.0
    var_n = float(n.var(ddof=1)) if n.size > 1 else 0.0
    temp = float((e / n).mean()) / k0

    pressure = math.nan
    if spec.kind == "npt":
        pressure = spec.p
    elif spec.kind == "canonical" and "goods_y" in trace.extras:
        ybar = float(trace.extras["goods_y"].mean())
        pressure = k0 * temp / (mean_v * ybar)
    elif spec.kind == "grand":
        pressure = k0 * temp * (mean_n - 1.0) / mean_v

    mu = spec.mu if spec.kind == "grand" else math.nan
    if mean_n >= 1 and temp > 0:
        if mean_v > 0:
            entropy = ideal_entropy(temp, mean_v, mean_n, k0)
        else:
            entropy = ideal_money_entropy(temp, mean_n, k0)
    else:
        entropy = math.nan

    return ThermoReport(
        mean_E=mean_e,
        mean_V=mean_v,
        mean_N=mean_n,
        pressure=pressure,
        temperature=temp,
        financial_potential=mu,
        entropy=entropy,
        var_E=var_e,
        var_V=var_v,
        var_N=var_n,
        stderr_E=_series_stderr(e),
        stderr_V=_series_stderr(v),
        stderr_N=_series_stderr(n),
        sample_count=int(e.size),
    )
