import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from icapm import (
    ConfigurationError,
    InstrumentProcess,
    ModelSpec,
    SimulationConfig,
    SimulationError,
    prepare,
    simulate_panel,
)
from icapm.data import layout
from icapm.likelihood import loglik_prepared
from conftest import asym_theta_2


class TestInstrumentProcess:
    def test_invalid_kind(self):
        with pytest.raises(ConfigurationError):
            InstrumentProcess(kind="brownian")

    def test_invalid_rho(self):
        with pytest.raises(ConfigurationError):
            InstrumentProcess(kind="ar1", rho=1.0)

    def test_constant_draw(self):
        proc = InstrumentProcess(kind="constant")
        z = proc.draw(np.random.default_rng(0), 10, 3)
        assert_array_equal(z, np.ones((10, 3)))

    def test_first_column_always_one(self):
        for kind in ("iid-gaussian", "ar1"):
            proc = InstrumentProcess(kind=kind, scale=0.5, rho=0.4)
            z = proc.draw(np.random.default_rng(1), 20, 4)
            assert_array_equal(z[:, 0], np.ones(20))


class TestSimulatePanel:
    def test_same_seed_identical(self, spec2):
        theta = asym_theta_2(layout(spec2))
        cfg = SimulationConfig(theta_true=theta, spec=spec2, n_periods=100, seed=5)
        s1 = simulate_panel(cfg)
        s2 = simulate_panel(cfg)
        assert_array_equal(s1.panel.values, s2.panel.values)
        assert_array_equal(s1.instruments.z_global, s2.instruments.z_global)
        assert_array_equal(s1.cov_path.H, s2.cov_path.H)

    def test_different_seed_differs(self, spec2):
        theta = asym_theta_2(layout(spec2))
        s1 = simulate_panel(
            SimulationConfig(theta_true=theta, spec=spec2, n_periods=100, seed=5)
        )
        s2 = simulate_panel(
            SimulationConfig(theta_true=theta, spec=spec2, n_periods=100, seed=6)
        )
        assert not np.array_equal(s1.panel.values, s2.panel.values)

    def test_degenerate_dgp_iid_constant_mean(self):
        # a = b = s = z = 0 and constant instruments: i.i.d. N(mu, C'C)
        spec = ModelSpec("asymmetric", 2, 1, 1)
        lay = layout(spec)
        theta = np.zeros(lay.size)
        theta[lay.kappa_world.start] = np.log(1.5)
        c_mat = np.array([[0.03, 0.0], [0.01, 0.025]])
        theta[lay.c_vech] = c_mat[np.tril_indices(2)]
        sim = simulate_panel(
            SimulationConfig(
                theta_true=theta,
                spec=spec,
                n_periods=20000,
                seed=11,
                instrument_process=InstrumentProcess(kind="constant"),
                burn_in=10,
            )
        )
        ctc = c_mat.T @ c_mat
        # constant H means constant mean vector
        mu = sim.panel.values.mean(axis=0)
        q1 = ctc[0, 0] - ctc[0, 1] ** 2 / ctc[1, 1]
        want_mu1 = 1.5 * ctc[0, 1] + 1.0 * q1  # domestic price exp(0) = 1
        want_mu2 = 1.5 * ctc[1, 1]
        assert mu[0] == pytest.approx(want_mu1, abs=4 * np.sqrt(ctc[0, 0] / 20000))
        assert mu[1] == pytest.approx(want_mu2, abs=4 * np.sqrt(ctc[1, 1] / 20000))
        cov = np.cov(sim.panel.values.T)
        assert_allclose(cov, ctc, rtol=0.1)

    def test_standardized_draws_identity_covariance(self, spec2):
        theta = asym_theta_2(layout(spec2))
        t_len = 4000
        sim = simulate_panel(
            SimulationConfig(theta_true=theta, spec=spec2, n_periods=t_len, seed=3)
        )
        z = np.empty((t_len, 2))
        for t in range(t_len):
            chol = np.linalg.cholesky(sim.cov_path.H[t])
            z[t] = np.linalg.solve(chol, sim.cov_path.eps[t])
        emp = z.T @ z / t_len
        assert np.abs(emp - np.eye(2)).max() < 3.0 / np.sqrt(t_len)

    def test_path_satisfies_engine_invariants(self, sim2):
        sim2.cov_path.validate()
        assert np.all(sim2.prices.delta_world > 0)
        assert np.all(sim2.prices.delta_local > 0)

    def test_explosive_parameters_rejected(self, spec2):
        lay = layout(spec2)
        theta = asym_theta_2(lay)
        theta[lay.a] = [1.4, 1.4]
        theta[lay.b] = [1.1, 1.1]
        with pytest.raises(SimulationError, match="smaller a/b"):
            simulate_panel(
                SimulationConfig(theta_true=theta, spec=spec2, n_periods=300, seed=0)
            )

    def test_truth_beats_perturbations(self, spec2):
        # the true parameter should out-score a 0.5-norm perturbation on
        # most simulated samples
        lay = layout(spec2)
        theta = asym_theta_2(lay)
        rng = np.random.default_rng(123)
        wins = 0
        trials = 100
        for i in range(trials):
            sim = simulate_panel(
                SimulationConfig(
                    theta_true=theta, spec=spec2, n_periods=250, seed=10_000 + i
                )
            )
            prep = prepare(sim.panel, sim.instruments, spec2)
            direction = rng.standard_normal(lay.size)
            direction *= 0.5 / np.linalg.norm(direction)
            ll_true = loglik_prepared(theta, prep).total_loglik
            ll_pert = loglik_prepared(theta + direction, prep).total_loglik
            wins += ll_true > ll_pert
        assert wins >= 95

    def test_dates_and_names(self, spec2):
        theta = asym_theta_2(layout(spec2))
        sim = simulate_panel(
            SimulationConfig(
                theta_true=theta,
                spec=spec2,
                n_periods=14,
                seed=1,
                start_month="1999-11",
            )
        )
        assert sim.panel.dates[0] == "1999-11"
        assert sim.panel.dates[-1] == "2000-12"
        assert sim.panel.asset_names[-1] == "world"
