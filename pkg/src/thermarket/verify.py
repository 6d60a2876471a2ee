"""Acceptance suite: every verification criterion as an executable check.

Each check returns rows of (name, measured, expected, tolerance, passed).
Equality rows pass when |measured - expected| <= tolerance; bound rows
carry expected = 0 and pass when measured <= tolerance. The whole suite is
deterministic for a given master seed; per-check seeds are fixed offsets
from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mc, oracle, stats, thermo, zfunc
from .core import ADDITIVE_ENERGY, EnsembleSpec, new_market

__all__ = ["CheckRow", "ALL_CHECKS", "run_checks", "format_report"]


@dataclass(frozen=True)
class CheckRow:
    name: str
    measured: float
    expected: float
    tolerance: float
    passed: bool


def _eq(name: str, measured: float, expected: float, tol: float) -> CheckRow:
    return CheckRow(name, float(measured), float(expected), float(tol),
                    abs(measured - expected) <= tol)


def _le(name: str, measured: float, bound: float) -> CheckRow:
    return CheckRow(name, float(measured), 0.0, float(bound), measured <= bound)


def _scale_factor(scale: str) -> int:
    if scale == "quick":
        return 1
    if scale == "full":
        return 4
    raise ValueError("scale must be 'quick' or 'full'")


def _canonical_trace(T, V, N, sweeps, burn, thin, seed):
    spec = EnsembleSpec.canonical(T=T, V=V, N=N)
    initial = new_market(N, N * T, V, "equal")
    cfg = mc.ChainConfig(steps=sweeps, burn_in=burn, thin=thin, seed=seed)
    return mc.run_chain(initial, spec, cfg)


def check_exponential_money_law(scale: str, seed: int) -> list[CheckRow]:
    """Kinetic market relaxes to the exponential money law (KS < 0.02)."""
    k = _scale_factor(scale)
    n = 10_000
    exchanges = 10_000_000 * k
    rounds = exchanges // (n // 2)
    spec = EnsembleSpec.isolated(E=float(n), V=0.0, N=n)
    cfg = mc.ChainConfig(steps=rounds, burn_in=0, thin=max(1, rounds // 50), seed=seed)
    trace = mc.run_chain(new_market(n, float(n), 0.0, "equal"), spec, cfg,
                         rule=mc.ExchangeRule())
    ks = stats.ks_exponential(trace.final_states[0].money, mean=1.0)
    return [_le("exponential_money_ks", ks, 0.02)]


def check_ideal_eos(scale: str, seed: int) -> list[CheckRow]:
    """EOS pV = k0 (N-1) T by quadrature, by potential derivative, by MC."""
    k = _scale_factor(scale)
    rows = []
    for n in range(1, zfunc.MAX_QUADRATURE_AGENTS + 1):
        z = zfunc.integrate_canonical_Z(ADDITIVE_ENERGY, T=1.3, V=2.7, N=n)
        exact = oracle.ideal_canonical_log_z(1.3, 2.7, n)
        rows.append(_le(f"eos_quadrature_logz_N{n}", abs(z.log_z - exact), 1e-6))

    T, V, N = 1.0, 100.0, 100
    h = 1e-5 * V
    f_hi = -T * oracle.ideal_canonical_log_z(T, V + h, N)
    f_lo = -T * oracle.ideal_canonical_log_z(T, V - h, N)
    p_fd = -(f_hi - f_lo) / (2 * h)
    rows.append(_eq("eos_potential_derivative", p_fd,
                    oracle.ideal_eos_pressure(T, V, N), 1e-8))

    trace = _canonical_trace(T, V, N, sweeps=20_000 * k, burn=2_000, thin=10,
                             seed=seed + 1)
    report = thermo.summarize_trace(trace)
    ratio = report.pressure * V / ((N - 1) * T)
    rows.append(_eq("eos_mc_pressure_ratio", ratio, 1.0, 0.03))
    return rows


def check_canonical_mean_energy(scale: str, seed: int) -> list[CheckRow]:
    """Canonical mean energy equals k0 N T within three stderr."""
    k = _scale_factor(scale)
    trace = _canonical_trace(1.0, 100.0, 100, sweeps=16_000 * k, burn=1_000,
                             thin=5, seed=seed)
    report = thermo.summarize_trace(trace)
    return [_eq("canonical_mean_energy", report.mean_E, 100.0,
                3.0 * report.stderr_E)]


def check_npt_volume(scale: str, seed: int) -> list[CheckRow]:
    """Fixed-price volume: mean N k0 T / p, variance N (k0 T / p)^2."""
    k = _scale_factor(scale)
    T, p, N = 1.0, 2.0, 10
    spec = EnsembleSpec.isothermal_isobaric(T=T, p=p, N=N)
    initial = new_market(N, N * T, N * T / p, "equal")
    cfg = mc.ChainConfig(steps=60_000 * k, burn_in=2_000, thin=5, seed=seed)
    trace = mc.run_chain(initial, spec, cfg)
    report = thermo.summarize_trace(trace)
    return [
        _eq("npt_mean_volume", report.mean_V, 5.0, 3.0 * report.stderr_V),
        _eq("npt_var_volume", report.var_V, 2.5, 0.15 * 2.5),
    ]


def check_grand_occupancy(scale: str, seed: int) -> list[CheckRow]:
    """Grand-canonical occupancy, its variance, and the agreement between
    the Metropolis chain and the direct sampler."""
    k = _scale_factor(scale)
    T, V, mu = 1.0, 9.0, 0.0
    spec = EnsembleSpec.grand_canonical(T=T, V=V, mu=mu)
    initial = new_market(10, 10.0, V, "equal")
    cfg = mc.ChainConfig(steps=1_000_000 * k, burn_in=20_000, thin=20, seed=seed)
    trace = mc.run_chain(initial, spec, cfg)
    report = thermo.summarize_trace(trace)
    rows = [
        _eq("grand_mean_count", report.mean_N, 10.0, 3.0 * report.stderr_N),
        _eq("grand_var_count", report.var_N, 9.0, 0.15 * 9.0),
    ]
    metro = trace.series("N").astype(int)
    rng = np.random.default_rng(seed + 7)
    direct = mc.sample_grand_counts(T, V, mu, 1.0, rng, size=metro.size)
    hi = int(max(metro.max(), direct.max()))
    pm = np.bincount(metro, minlength=hi + 1) / metro.size
    pd = np.bincount(direct, minlength=hi + 1) / direct.size
    tv = 0.5 * np.abs(pm - pd).sum()
    rows.append(_le("grand_marginal_tv", tv, 0.02))
    return rows


def check_fluctuation_derivative(scale: str, seed: int) -> list[CheckRow]:
    """MC energy variance equals k0 T^2 times the finite-difference
    temperature derivative of the MC mean energy (10 percent)."""
    k = _scale_factor(scale)
    V, N, dT = 100.0, 100, 0.05
    sweeps = 16_000 * k

    def mean_e(T, s):
        trace = _canonical_trace(T, V, N, sweeps=sweeps, burn=1_000, thin=5, seed=s)
        return thermo.summarize_trace(trace)

    center = mean_e(1.0, seed)
    hi = mean_e(1.0 + dT, seed + 1)
    lo = mean_e(1.0 - dT, seed + 2)
    derivative = (hi.mean_E - lo.mean_E) / (2 * dT)
    predicted = 1.0 * derivative  # k0 T^2 at T = 1
    return [_eq("fluctuation_dissipation_var_E", center.var_E, predicted,
                0.10 * abs(predicted))]


def check_competition_scaling(scale: str, seed: int) -> list[CheckRow]:
    """Relative temperature fluctuation falls as 1/sqrt(N)."""
    k = _scale_factor(scale)
    sizes = [16, 64, 256, 1024]
    rel = []
    for idx, n in enumerate(sizes):
        trace = _canonical_trace(1.0, float(n), n, sweeps=12_000 * k, burn=1_000,
                                 thin=10, seed=seed + idx)
        e = trace.series("E")
        rel.append(float(np.std(e, ddof=1) / e.mean()))
    slope, stderr = stats.loglog_slope(sizes, rel)
    return [_eq("competition_scaling_slope", slope, -0.5, 0.05)]


def _heat_flow_report(scale: str, seed: int) -> thermo.HeatFlowReport:
    k = _scale_factor(scale)
    spec = thermo.CoupledSpec(n1=1000, temp1=2.0, n2=1000, temp2=1.0,
                              coupling_rate=0.01, rounds=6000 * k,
                              interval=300, burn_in=500, seed=seed)
    return thermo.heat_flow_experiment(spec)


def check_heat_flow(scale: str, seed: int) -> list[CheckRow]:
    """Money flows from the hot market to the cold one and the pair
    settles at the weighted mean temperature."""
    report = _heat_flow_report(scale, seed)
    rows = [_le("heat_flow_cumulative_sign", float(report.dq12_cumulative.max()), 0.0)]
    spec = report.spec
    ntot = spec.n1 + spec.n2
    se_final = math.sqrt((spec.n1 * report.t1_stderr[-1]) ** 2
                         + (spec.n2 * report.t2_stderr[-1]) ** 2) / ntot
    rows.append(_eq("heat_flow_final_temperature", report.final_temperature,
                    1.5, max(3.0 * se_final, 1e-9)))
    rows.append(_eq("heat_flow_market1_equilibrates", float(report.t1[-1]), 1.5,
                    3.0 * float(report.t1_stderr[-1])))
    rows.append(_eq("heat_flow_market2_equilibrates", float(report.t2[-1]), 1.5,
                    3.0 * float(report.t2_stderr[-1])))

    # direction inequality (1/T1 - 1/T2) dQ12 >= 0 within noise, per interval
    sigma_q = float(np.std(report.dq12_interval[len(report.dq12_interval) // 2:], ddof=1))
    worst = math.inf
    for i in range(len(report.t1)):
        inv_gap = 1.0 / report.t1[i] - 1.0 / report.t2[i]
        se_inv = math.sqrt((report.t1_stderr[i] / report.t1[i] ** 2) ** 2
                           + (report.t2_stderr[i] / report.t2[i] ** 2) ** 2)
        value = inv_gap * report.dq12_interval[i]
        sigma = math.sqrt((report.dq12_interval[i] * se_inv) ** 2
                          + (inv_gap * sigma_q) ** 2 + (se_inv * sigma_q) ** 2)
        worst = min(worst, value + 3.0 * sigma)
    rows.append(_le("heat_flow_direction_inequality", -worst, 0.0))
    return rows


def check_second_law(scale: str, seed: int) -> list[CheckRow]:
    """Total entropy of the isolated pair never decreases beyond noise;
    an externally heated market satisfies ds = dQ/T."""
    report = _heat_flow_report(scale, seed + 11)
    verdict = thermo.second_law_check(thermo.records_from_heat_flow(report))
    margin = float((verdict.residuals + verdict.tolerances).min())
    rows = [_le("second_law_isolated_pair", -margin, 0.0)]

    heated = thermo.heating_experiment(n=1000, temp=1.0, pulse=5.0, n_pulses=200,
                                       rounds_between=10, seed=seed + 13)
    heated_verdict = thermo.second_law_check(heated.records)
    rows.append(_le("second_law_heated_intervals",
                    0.0 if heated_verdict.all_pass else 1.0, 0.5))
    rows.append(_eq("second_law_heated_ds_equals_q_over_t", heated.ds_total,
                    heated.heat_over_t, max(heated.midpoint_bound, 1e-9)))
    return rows


def check_potential_identities(scale: str, seed: int) -> list[CheckRow]:
    """mu = G/N, p = -Omega/V, the free-energy mean-energy identity, and
    the cross-derivative identity, closed-form and numeric."""
    rows = []
    T, p, N = 1.2, 0.8, 7
    g_spec = EnsembleSpec.isothermal_isobaric(T=T, p=p, N=N)
    g0 = oracle.ideal_potential(g_spec).value
    g_hi = oracle.ideal_potential(EnsembleSpec.isothermal_isobaric(T=T, p=p, N=N + 1)).value
    g_lo = oracle.ideal_potential(EnsembleSpec.isothermal_isobaric(T=T, p=p, N=N - 1)).value
    rows.append(_eq("identity_mu_equals_g_over_n", (g_hi - g_lo) / 2.0, g0 / N,
                    1e-10 * max(1.0, abs(g0))))

    T, V, mu = 1.0, 9.0, 0.0
    omega = oracle.ideal_potential(EnsembleSpec.grand_canonical(T=T, V=V, mu=mu)).value
    rows.append(_eq("identity_p_equals_minus_omega_over_v", -omega / V, 1.0, 1e-12))
    v_big = 1e6
    a = oracle.grand_activity(T, mu)
    omega_big = -T * oracle.ideal_grand_log_z(T, v_big, mu)
    h = 1e-3 * v_big
    d_omega = (-T * oracle.ideal_grand_log_z(T, v_big + h, mu)
               + T * oracle.ideal_grand_log_z(T, v_big - h, mu)) / (2 * h)
    rows.append(_eq("identity_omega_routes_converge", -omega_big / v_big,
                    -d_omega, 1e-5 * a))

    for i, (T, V, N) in enumerate([(1.0, 1.0, 1), (2.0, 3.0, 4), (0.7, 11.0, 25)]):
        f0 = -T * oracle.ideal_canonical_log_z(T, V, N)
        h = 1e-5 * T
        df_dt = (-(T + h) * oracle.ideal_canonical_log_z(T + h, V, N)
                 + (T - h) * oracle.ideal_canonical_log_z(T - h, V, N)) / (2 * h)
        reconstructed = oracle.ideal_mean_energy(T, N) + T * df_dt
        rows.append(_eq(f"identity_free_energy_mean_energy_{i}", reconstructed, f0,
                        1e-8 * max(1.0, abs(f0))))

    points = [(1.0, 2.0, 3), (1.5, 4.0, 5)]
    for row in zfunc.maxwell_check(oracle.ideal_log_z_family("canonical"), points):
        pres = oracle.ideal_eos_pressure(row["T"], row["V"], row["N"])
        rows.append(_le(f"maxwell_oracle_residual_N{row['N']}",
                        row["residual_tp"], 1e-7 * pres))
    numeric = zfunc.maxwell_check(
        zfunc.canonical_log_z_fn(ADDITIVE_ENERGY), [(1.0, 2.0, 3)])
    pres = oracle.ideal_eos_pressure(1.0, 2.0, 3)
    rows.append(_le("maxwell_numeric_residual_tp", numeric[0]["residual_tp"], 1e-4 * pres))
    rows.append(_le("maxwell_numeric_residual_vn", numeric[0]["residual_vn"], 1e-4 * pres))
    return rows


def check_conservation_determinism(scale: str, seed: int,
                                   workdir: Path | None = None) -> list[CheckRow]:
    """Loss-free exchange conserves total money; one seed, one output."""
    n = 1000
    rounds = 1_000_000 // (n // 2)
    spec = EnsembleSpec.isolated(E=float(n), V=0.0, N=n)
    cfg = mc.ChainConfig(steps=rounds, thin=rounds // 10, seed=seed)
    initial = new_market(n, float(n), 0.0, "equal")
    rule = mc.ExchangeRule(loss_fraction=0.0)
    trace = mc.run_chain(initial, spec, cfg, rule=rule)
    drift = abs(float(trace.final_states[0].money.sum()) - float(n))
    rows = [_le("conservation_energy_drift", drift, 1e-9)]

    trace2 = mc.run_chain(initial, spec, cfg, rule=rule)
    identical = (np.array_equal(trace.E, trace2.E)
                 and np.array_equal(trace.final_states[0].money,
                                    trace2.final_states[0].money))
    rows.append(_le("determinism_same_seed_traces", 0.0 if identical else 1.0, 0.5))

    if workdir is not None:
        from .runners import make_config, run_experiment

        params = {"agents": 500, "total_money": 500.0, "total_goods": 0.0,
                  "exchanges": 100_000, "loss": 0.0, "goods_exchange": False}
        outputs = []
        for tag in ("a", "b"):
            cfg_exp = make_config("kinetic", dict(params), seed, Path(workdir) / tag)
            outputs.append(run_experiment(cfg_exp))
        same = all(
            Path(outputs[0][key]).read_bytes() == Path(outputs[1][key]).read_bytes()
            for key in outputs[0]
        )
        rows.append(_le("determinism_same_seed_files", 0.0 if same else 1.0, 0.5))
    return rows


def check_reversibility_sweep(scale: str, seed: int) -> list[CheckRow]:
    """A slow volume sweep up and back retraces its price, and the EOS
    holds along the whole path."""
    k = _scale_factor(scale)
    n = 1000
    market = new_market(n, float(n), 100.0, "equal")
    spec = thermo.SweepSpec(volumes=thermo.make_sweep_path(100.0, 200.0, 5),
                            rounds_per_stage=100 * k, measure_rounds=60 * k,
                            seed=seed)
    result = thermo.quasistatic_sweep(market, spec)
    first, last = result.stages[0], result.stages[-1]
    se = math.sqrt(first.pressure_stderr**2 + last.pressure_stderr**2)
    rows = [
        _eq("sweep_reversibility_pressure", last.pressure, first.pressure, 3.0 * se),
        _le("sweep_eos_max_deviation",
            float(np.abs(result.column("eos_ratio") - 1.0).max()), 0.03),
    ]
    peak = result.stages[len(spec.volumes) // 2]
    rows.append(_eq("sweep_doubling_halves_pressure",
                    peak.pressure / first.pressure, 0.5, 0.05 * 0.5))
    rows.append(_le("sweep_quasistatic_flag",
                    0.0 if result.quasistatic_ok else 1.0, 0.5))
    return rows


ALL_CHECKS = [
    ("01_exponential_money_law", check_exponential_money_law),
    ("02_ideal_eos", check_ideal_eos),
    ("03_canonical_mean_energy", check_canonical_mean_energy),
    ("04_npt_volume", check_npt_volume),
    ("05_grand_occupancy", check_grand_occupancy),
    ("06_fluctuation_derivative", check_fluctuation_derivative),
    ("07_competition_scaling", check_competition_scaling),
    ("08_heat_flow", check_heat_flow),
    ("09_second_law", check_second_law),
    ("10_potential_identities", check_potential_identities),
    ("11_conservation_determinism", check_conservation_determinism),
    ("12_reversibility_sweep", check_reversibility_sweep),
]


def run_checks(scale: str = "quick", seed: int = 20240601,
               workdir: Path | None = None) -> list[tuple[str, list[CheckRow]]]:
    """Run every acceptance check with per-check seeds derived from the
    master seed. Deterministic: same seed, same rows."""
    results = []
    for offset, (name, fn) in enumerate(ALL_CHECKS):
        check_seed = seed + 1000 * offset
        if fn is check_conservation_determinism:
            rows = fn(scale, check_seed, workdir)
        else:
            rows = fn(scale, check_seed)
        results.append((name, rows))
    return results


def format_report(results: list[tuple[str, list[CheckRow]]]) -> str:
    """One line per check row: name, measured, expected, tolerance, verdict."""
    lines = ["name,measured,expected,tolerance,status"]
    for _, rows in results:
        for row in rows:
            status = "PASS" if row.passed else "FAIL"
            lines.append(
                f"{row.name},{row.measured:.17g},{row.expected:.17g},"
                f"{row.tolerance:.17g},{status}"
            )
    return "\n".join(lines) + "\n"
