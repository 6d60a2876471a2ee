import math

import numpy as np
import pytest
from scipy.special import gammaln

from thermarket import oracle
from thermarket.core import EnsembleSpec


class TestMoneyPartition:
    def test_direct_values(self):
        assert oracle.ideal_money_z(2.0, 3) == pytest.approx(8.0)
        assert oracle.ideal_money_z(1.0, 1) == pytest.approx(1.0)

    def test_log_form_avoids_overflow(self):
        assert oracle.ideal_money_log_z(2.0, 500) == pytest.approx(500 * math.log(2.0))

    def test_domain(self):
        with pytest.raises(ValueError):
            oracle.ideal_money_log_z(0.0, 3)
        with pytest.raises(ValueError):
            oracle.ideal_money_log_z(1.0, 0)


class TestCanonicalPartition:
    def test_unit_case(self):
        assert oracle.ideal_canonical_log_z(1.0, 1.0, 1) == pytest.approx(0.0)

    def test_constraint_surface_factor(self):
        # V^(N-1)/(N-1)! with V=2, N=3 gives 4/2 = 2
        assert oracle.ideal_canonical_z(1.0, 2.0, 3) == pytest.approx(2.0)

    def test_combined_value(self):
        # (k0 T)^N V^(N-1)/(N-1)! = 16 * 27 / 6 = 72
        assert oracle.ideal_canonical_z(2.0, 3.0, 4) == pytest.approx(72.0)


class TestMeanEnergyAndPressure:
    def test_mean_energy(self):
        assert oracle.ideal_mean_energy(1.0, 1000) == pytest.approx(1000.0)
        assert oracle.ideal_mean_energy(50.0, 1) == pytest.approx(50.0)
        assert oracle.ideal_mean_energy(2.0, 10, k0=3.0) == pytest.approx(60.0)

    def test_eos_pressure(self):
        assert oracle.ideal_eos_pressure(1.0, 100.0, 101) == pytest.approx(1.0)
        assert oracle.ideal_eos_pressure(1.0, 5.0, 1) == 0.0  # lone agent
        assert oracle.ideal_eos_pressure(3.0, 30.0, 11) == pytest.approx(1.0)

    def test_bulk_form(self):
        assert oracle.ideal_eos_pressure(1.0, 10.0, 5, bulk=True) == pytest.approx(0.5)
        assert oracle.ideal_eos_pressure(1.0, 10.0, 5) == pytest.approx(0.4)


class TestFixedPriceVolume:
    def test_mean_volume(self):
        # N k0 T / p, from the analytic volume integral of the partition sum
        assert oracle.ideal_npt_mean_volume(1.0, 2.0, 10) == pytest.approx(5.0)
        assert oracle.ideal_npt_mean_volume(1.0, 1.0, 1) == pytest.approx(1.0)
        assert oracle.ideal_npt_mean_volume(4.0, 2.0, 100) == pytest.approx(200.0)

    def test_quadrature_cross_check(self):
        # independent oracle: integrate Z(T,V,N) exp(-pV/k0T) dV numerically
        from scipy.integrate import quad

        T, p, n = 1.3, 0.7, 4
        val, _ = quad(
            lambda v: math.exp(oracle.ideal_canonical_log_z(T, v, n) - p * v / T),
            0.0, 200.0, epsabs=0, epsrel=1e-12,
        )
        assert math.log(val) == pytest.approx(oracle.ideal_npt_log_z(T, p, n), abs=1e-9)


def truncated_count_sum(T, V, mu, k0=1.0, n_max=400):
    """Independent oracle: direct truncated sums over the agent count."""
    ns = np.arange(1, n_max + 1)
    logw = ns * math.log(k0 * T) + mu * ns / (k0 * T) + (ns - 1) * np.log(V) - gammaln(ns)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = float((ns * w).sum())
    var = float((ns**2 * w).sum() - mean**2)
    log_z = float(logw.max() + np.log(np.exp(logw - logw.max()).sum()))
    return mean, var, log_z


class TestGrandCanonical:
    def test_mean_count_against_truncated_sum(self):
        mean, var, log_z = truncated_count_sum(1.0, 9.0, 0.0)
        assert oracle.ideal_grand_mean_count(1.0, 9.0, 0.0) == pytest.approx(mean, abs=1e-10)
        assert oracle.ideal_grand_count_variance(1.0, 9.0, 0.0) == pytest.approx(var, abs=1e-10)
        assert oracle.ideal_grand_log_z(1.0, 9.0, 0.0) == pytest.approx(log_z, abs=1e-10)

    def test_small_volume_limit(self):
        assert oracle.ideal_grand_mean_count(1.0, 1e-12, 0.0) == pytest.approx(1.0)

    def test_positive_potential(self):
        mean, _, _ = truncated_count_sum(1.0, 9.0, math.log(2.0))
        assert mean == pytest.approx(19.0, abs=1e-9)
        assert oracle.ideal_grand_mean_count(1.0, 9.0, math.log(2.0)) == pytest.approx(19.0)

    def test_count_pmf_normalized_and_matches_moments(self):
        ns, probs = oracle.grand_count_pmf(1.0, 9.0, 0.0)
        assert ns[0] == 1
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert float((ns * probs).sum()) == pytest.approx(10.0, abs=1e-6)

    def test_bulk_pressure_limit(self):
        # -Omega/V approaches k0 mean_N T / V as the volume grows
        ratios = []
        for v in (10.0, 1e3, 1e6):
            omega = -oracle.ideal_grand_log_z(1.0, v, 0.0)
            p_pot = -omega / v
            p_eos = oracle.ideal_grand_mean_count(1.0, v, 0.0) / v
            ratios.append(abs(p_pot / p_eos - 1.0))
        assert ratios[-1] < 1e-5
        assert ratios[0] > ratios[1] > ratios[2]


class TestPotentials:
    def test_helmholtz_unit_point(self):
        value = oracle.ideal_potential(EnsembleSpec.canonical(T=1.0, V=1.0, N=1))
        assert value.kind == "helmholtz_F0"
        assert value.value == pytest.approx(0.0)

    def test_gibbs_and_mu(self):
        pot = oracle.ideal_potential(EnsembleSpec.isothermal_isobaric(T=1.0, p=1.0, N=2))
        assert pot.kind == "gibbs_G0"
        assert pot.value == pytest.approx(0.0)
        assert pot.value / 2 == pytest.approx(0.0)  # mu = G/N

    def test_omega_and_pressure(self):
        pot = oracle.ideal_potential(EnsembleSpec.grand_canonical(T=1.0, V=9.0, mu=0.0))
        assert pot.kind == "omega_Omega0"
        assert pot.value == pytest.approx(-9.0)
        assert -pot.value / 9.0 == pytest.approx(1.0)

    def test_isolated_has_no_potential(self):
        with pytest.raises(ValueError):
            oracle.ideal_potential(EnsembleSpec.isolated(E=1.0, V=1.0, N=1))

    def test_mu_equals_g_over_n_exactly(self):
        # G is linear in N, so the unit difference equals G/N with no error
        T, p = 1.7, 0.4
        g = lambda n: oracle.ideal_potential(
            EnsembleSpec.isothermal_isobaric(T=T, p=p, N=n)).value
        n = 9
        assert (g(n + 1) - g(n)) == pytest.approx(g(n) / n, rel=1e-13)


class TestRelativeFluctuation:
    def test_values(self):
        assert oracle.ideal_relative_fluctuation(10_000) == pytest.approx(0.01)
        assert oracle.ideal_relative_fluctuation(1) == pytest.approx(1.0)
        assert oracle.ideal_relative_fluctuation(64) == pytest.approx(0.125)


class TestEntropy:
    def test_unit_point(self):
        # derivative of the log partition function plus the k0 N offset
        assert oracle.ideal_entropy(1.0, 1.0, 1) == pytest.approx(1.0)

    def test_log_temperature_point(self):
        assert oracle.ideal_entropy(math.e, 1.0, 1) == pytest.approx(2.0)

    def test_finite_difference_of_free_energy(self):
        # independent oracle: -dF/dT by central difference
        T, V, n = 1.4, 3.0, 6
        h = 1e-6 * T
        f = lambda t: -t * oracle.ideal_canonical_log_z(t, V, n)
        fd = -(f(T + h) - f(T - h)) / (2 * h)
        assert oracle.ideal_entropy(T, V, n) == pytest.approx(fd, rel=1e-7)

    def test_extensivity_ratio_approaches_two(self):
        # Stirling oracle: ln((N-1)!) = (N-.5) ln N - N + .5 ln 2pi + O(1/N)
        T, v_per, deviations = 1.0, 2.0, []
        for n in (100, 1000, 10_000):
            s1 = oracle.ideal_entropy(T, v_per * n, n)
            s2 = oracle.ideal_entropy(T, 2 * v_per * n, 2 * n)
            stirling = lambda m: (m - 0.5) * math.log(m) - m + 0.5 * math.log(2 * math.pi)
            pred1 = (n - 1) * math.log(v_per * n) - stirling(n) + n
            pred2 = (2 * n - 1) * math.log(2 * v_per * n) - stirling(2 * n) + 2 * n
            assert s2 / s1 == pytest.approx(pred2 / pred1, rel=1e-5)
            deviations.append(abs(s2 / s1 - 2.0))
        assert deviations[0] > deviations[1] > deviations[2]
        assert deviations[-1] < 5e-3

    def test_money_sector_entropy(self):
        assert oracle.ideal_money_entropy(1.0, 5) == pytest.approx(5.0)
        assert oracle.ideal_money_entropy(math.e, 1) == pytest.approx(2.0)


class TestThermodynamicIdentities:
    @pytest.mark.parametrize("T,V,n", [(1.0, 1.0, 1), (2.5, 7.0, 12), (0.3, 0.9, 40)])
    def test_free_energy_identity(self, T, V, n):
        # F = mean_E + T dF/dT with a central difference at h = 1e-5 T
        h = 1e-5 * T
        f = lambda t: -t * oracle.ideal_canonical_log_z(t, V, n)
        df_dt = (f(T + h) - f(T - h)) / (2 * h)
        assert oracle.ideal_mean_energy(T, n) + T * df_dt == pytest.approx(
            f(T), rel=1e-8, abs=1e-8)

    def test_cross_derivative_identity_is_exact(self):
        # T dp/dT = p + dE/dV: energy is volume-independent and p is linear in T
        T, V, n = 1.3, 4.0, 7
        p = oracle.ideal_eos_pressure(T, V, n)
        dp_dt = oracle.ideal_eos_pressure(1.0, V, n)  # p/T is T-independent
        assert T * dp_dt == pytest.approx(p, rel=1e-14)

    def test_financial_potential_continuous_count(self):
        # digamma extension: dF/dN at fixed (T, V)
        T, V, n = 1.1, 3.0, 8
        h = 1e-5
        f = lambda x: -T * (x * math.log(T) + (x - 1) * math.log(V) - float(gammaln(x)))
        fd = (f(n + h) - f(n - h)) / (2 * h)
        assert oracle.ideal_financial_potential(T, V, n) == pytest.approx(fd, rel=1e-8)
