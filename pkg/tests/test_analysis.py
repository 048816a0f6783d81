from dataclasses import replace

import numpy as np
import pytest

from model.analysis import (
    FlowEnsemble, ModelParams, convergence_rate, ensemble_derive, epoch_oracle, fixed_point, harmonic_gap,
    is_stable, lambda_gamma, model_from_config, practical_rule, recursion_trajectory, utilization_bounds,
)
from model.config import ModelConfig
from model.errors import AnalysisError, ConfigError


def single_flow(a=10.0, b=1.0):
    ens = FlowEnsemble([0.2])
    return ens, ModelParams.from_ensemble(ens, a, b, service_rate=1500)


def test_ensemble_aggregates_for_identical_rtts():
    alpha_t, a_t, t_t = ensemble_derive(FlowEnsemble([0.2] * 10))
    assert alpha_t == pytest.approx(50)
    assert a_t == pytest.approx(250)
    assert t_t == pytest.approx(0.2)


def test_rtt_ratio_lies_between_one_over_n_and_one():
    _, mp = single_flow()
    assert mp.rtt_ratio == pytest.approx(1.0)
    mixed = ModelParams.from_ensemble(FlowEnsemble([0.05, 0.5, 1.0]), 10, 1, 1500)
    assert 1 / 3 <= mixed.rtt_ratio < 1


def test_single_flow_recursion_reaches_the_fixed_point_in_one_event():
    _, mp = single_flow()
    lambda_e, _, gamma_e = lambda_gamma(mp)
    assert lambda_e == pytest.approx(0.0)
    assert gamma_e * mp.bdp == pytest.approx(250)
    assert fixed_point(mp) == pytest.approx(250)
    trajectory = recursion_trajectory(mp, q0=0, k_max=5)
    assert trajectory[0] == 0
    assert trajectory[1:] == pytest.approx([250] * 5)


def test_stability_boundary():
    _, stable = single_flow(a=10, b=1)
    assert is_stable(stable) == (True, pytest.approx(1.0))
    _, boundary = single_flow(a=11, b=1)
    assert not is_stable(boundary)[0]


def test_practical_rule():
    _, mp = single_flow(a=10, b=1)
    assert practical_rule(mp)
    _, mp = single_flow(a=12, b=1)
    assert not practical_rule(mp)


def test_utilization_bounds():
    _, mp = single_flow(a=10, b=1)
    assert utilization_bounds(mp) == (pytest.approx(1 / 1.1), pytest.approx(1 / 1.1))
    rng = np.random.default_rng(4)
    for _ in range(1000):
        ens = FlowEnsemble(list(rng.uniform(0.01, 1.0, size=5)))
        tight, loose = utilization_bounds(ModelParams.from_ensemble(ens, 10, rng.uniform(0.1, 5), 1500))
        assert tight >= loose
        assert 0 < loose <= 1


def test_convergence_rate_mixes_branches_by_p_e():
    ens = FlowEnsemble([0.2] * 10)
    mp = ModelParams.from_ensemble(ens, 10, 5, 1500)
    assert convergence_rate(mp) == pytest.approx(45 / 55)
    mixed = ModelParams.from_ensemble(ens, 10, 5, 1500, delta=0.5, p_e=0.5)
    assert convergence_rate(mixed) == pytest.approx(0.5 * 45 / 55 + 0.5 * 52.5 / 55)


def test_fixed_point_needs_a_positive_a():
    _, mp = single_flow(a=0, b=1)
    with pytest.raises(AnalysisError):
        fixed_point(mp)


def test_oracle_agrees_with_recursion_for_a_deterministic_flow():
    ens, mp = single_flow()
    result = epoch_oracle(ens, mp, q0=0, k_max=10, rng=np.random.default_rng(0), paths=50)
    assert result.mean[1:] == pytest.approx([250] * 10)
    assert result.p_e == pytest.approx(np.ones(10))


def test_oracle_mean_tracks_recursion_with_random_backoffs():
    ens = FlowEnsemble([0.2] * 10, beta_spread=0.1)
    mp = ModelParams.from_ensemble(ens, 10, 5, 1500)
    assert fixed_point(mp) == pytest.approx(150)
    result = epoch_oracle(ens, mp, q0=0, k_max=60, rng=np.random.default_rng(9), paths=2000)
    expected = recursion_trajectory(mp, q0=0, k_max=60)
    assert result.mean[-1] == pytest.approx(expected[-1], rel=0.02)
    assert result.mean[-1] == pytest.approx(150, rel=0.02)


def test_aggressive_increase_leaves_a_persistent_oscillation():
    ens, mp = single_flow(a=100, b=1)
    assert not is_stable(mp)[0]
    path = epoch_oracle(ens, mp, q0=0, k_max=200, rng=np.random.default_rng(1), paths=1).paths[0]
    tail = path[-50:]
    assert tail.max() - tail.min() > 100


def test_harmonic_gap():
    assert harmonic_gap([0.1, 0.2], 1500, 0) == pytest.approx(1 / 9)
    assert harmonic_gap([0.1, 0.2], 1500, 200) < 0.15
    assert harmonic_gap([0.2, 0.2], 1500, 50) == pytest.approx(0.0)


def test_invalid_ensembles_are_rejected():
    with pytest.raises(ConfigError):
        FlowEnsemble([])
    with pytest.raises(ConfigError):
        FlowEnsemble([0.1, 0.2], betas=[0.5, 0.5, 0.5])
    with pytest.raises(ConfigError):
        ModelParams.from_ensemble(FlowEnsemble([0.2]), 10, 1, 1500, p_e=1.5)


def test_model_from_config():
    cfg = ModelConfig()
    cfg.set('model.rtts', '0.1,0.2,0.4')
    cfg.set('model.a', '20')
    ens, mp = model_from_config(cfg)
    assert ens.n == 3
    assert mp.a == 20
    assert mp.beta_t == pytest.approx(0.5)


def test_busy_branch_factor_lies_in_the_unit_interval():
    rng = np.random.default_rng(2)
    for _ in range(100):
        ens = FlowEnsemble(list(rng.uniform(0.01, 1.0, size=4)))
        mp = ModelParams.from_ensemble(ens, rng.uniform(1, 50), rng.uniform(0.01, 10), 1500,
                                       delta=rng.uniform(0, 0.99))
        _, lambda_f, _ = lambda_gamma(mp)
        assert 0 < lambda_f < 1


def test_fixed_point_is_the_bdp_without_decrease():
    _, mp = single_flow(a=10, b=0)
    assert fixed_point(mp) == pytest.approx(mp.service_rate * mp.t_t)


def test_fixed_point_falls_as_decrease_gain_or_backoff_grows():
    _, mp = single_flow(a=10, b=1)
    by_ratio = [fixed_point(replace(mp, b=b)) for b in (0.1, 0.5, 1, 2, 5, 20)]
    assert all(later < earlier for earlier, later in zip(by_ratio, by_ratio[1:]))
    by_beta = [fixed_point(replace(mp, beta_t=beta)) for beta in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(later < earlier for earlier, later in zip(by_beta, by_beta[1:]))
