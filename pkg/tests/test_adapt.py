import numpy as np
import pytest

from oracles import geometric_excess
from ttarecovery.adapt import (BaselineConfig, EtaTooLarge, InvalidEta, eta_limit,
                               max_prescription_c, prescribed_eta, run_baseline, run_many,
                               run_seed)
from ttarecovery.mixing import MixingProcess, c_phi
from ttarecovery.model import NonInteriorError, QuadraticInstance, error_floor, make_problem
from ttarecovery.streams import DistributionTrajectory, gen_trajectory


def shifted(problem, m=3.0, theta=0.0):
    return QuadraticInstance(problem, location_m=m, theta_init=theta), DistributionTrajectory([m])


def test_noiseless_geometric_law(noiseless):
    inst, traj = shifted(noiseless)
    rec = run_baseline(inst, traj, MixingProcess(0.5, 0.0, 0), BaselineConfig(0.1, 1000))
    expected = np.array([geometric_excess(t) for t in range(1, 1001)])
    assert np.max(np.abs(rec.excess - expected)) <= 1e-12
    assert np.allclose(rec.thetas - 3.0, -3.0 * 0.9 ** np.arange(1000), atol=1e-12)
    assert rec.boundary_hits == 0


def test_zero_step_freezes(noiseless):
    inst, traj = shifted(noiseless)
    rec = run_baseline(inst, traj, MixingProcess(0.5, 0.0), BaselineConfig(0.0, 20))
    assert np.all(rec.thetas == 0.0)


def test_noiseless_converges_to_proxy_optimum():
    p = make_problem(alpha=0.5, zeta=1e-2, sigma=0.0, delta_W=3.0)
    inst, traj = shifted(p, m=1.0, theta=0.0)
    rec = run_baseline(inst, traj, MixingProcess(0.5, 0.0), BaselineConfig(0.5, 400))
    assert rec.thetas[-1] == pytest.approx(1.0 - inst.proxy_shift, abs=1e-12)
    assert abs(rec.excess[-1]) <= 1e-12


def test_prescribed_eta_example(canonical):
    assert prescribed_eta(canonical, 1.0) == pytest.approx(16 * 0.2 * 0.1 / 9)
    assert prescribed_eta(canonical, 1.0) == pytest.approx(0.03556, abs=1e-5)


def test_prescribed_eta_boundary_and_errors(canonical):
    c = max_prescription_c(canonical)
    assert prescribed_eta(canonical, c) == pytest.approx(eta_limit(canonical))
    with pytest.raises(EtaTooLarge):
        prescribed_eta(canonical, c * 1.01)
    with pytest.raises(InvalidEta):
        prescribed_eta(canonical.with_(sigma=0.0), 1.0)
    with pytest.raises(InvalidEta):
        prescribed_eta(canonical, 0.0)


def test_prescription_with_mixing(canonical):
    p = canonical.with_(rho_mix=0.25)
    assert prescribed_eta(p, 1.0) == pytest.approx(prescribed_eta(canonical, 1.0) / c_phi(0.25))


def test_config_validation(canonical):
    with pytest.raises(InvalidEta):
        BaselineConfig(-0.1, 10)
    with pytest.raises(InvalidEta):
        BaselineConfig(float("nan"), 10)
    with pytest.raises(InvalidEta):
        BaselineConfig(0.1, 10, eta_rule="adam")
    with pytest.raises(ValueError):
        BaselineConfig(0.1, 0)
    cfg = BaselineConfig(0.5, 10, eta_rule="theorem2-prescription", eta_c=1.0)
    with pytest.raises(InvalidEta):
        cfg.validate_for(canonical)
    BaselineConfig.prescribed(canonical, 1.0, 10).validate_for(canonical)


def test_non_interior_propagates():
    p = make_problem(alpha=1.0, radius_r=2.0, delta_W=3.0)
    inst = QuadraticInstance(p, location_m=0.0)
    traj = gen_trajectory("linear-drift", 10, 3.0, {"slope": 1.5})
    with pytest.raises(NonInteriorError):
        run_baseline(inst, traj, MixingProcess(0.5, 0.0), BaselineConfig(0.1, 10))


def test_projection_keeps_iterates_in_neighborhood():
    p = make_problem(alpha=1.0, sigma=50.0, radius_r=2.0, delta_W=3.0, batch_B=1)
    inst = QuadraticInstance(p, location_m=0.0, theta_init=0.0)
    rec = run_baseline(inst, DistributionTrajectory([0.0]), MixingProcess(0.5, 50.0, 1),
                       BaselineConfig(0.2, 500))
    assert np.all(np.abs(rec.thetas) <= 2.0)
    assert rec.boundary_hits > 0
    free = run_baseline(inst, DistributionTrajectory([0.0]), MixingProcess(0.5, 50.0, 1),
                        BaselineConfig(0.2, 500, restore_on_boundary=False))
    assert np.max(np.abs(free.thetas)) > 2.0


def test_seed_determinism_and_vectorized_equivalence(canonical):
    inst, traj = shifted(canonical)
    cfg = BaselineConfig.prescribed(canonical, 1.0, 200, master_seed=9)
    thetas, excess, grads, hits = run_many(inst, traj, cfg, 5, point_index=3)
    for i in range(5):
        proc = MixingProcess.from_rho(0.0, canonical.sigma, run_seed(9, 3, i))
        rec = run_baseline(inst, traj, proc, cfg)
        assert np.array_equal(rec.thetas, thetas[i])
        assert np.array_equal(rec.excess, excess[i])
        assert np.array_equal(rec.grad_samples, grads[i])
    again = run_many(inst, traj, cfg, 5, point_index=3)
    assert np.array_equal(again[1], excess)


def test_gradient_noise_has_batch_variance(canonical):
    inst, traj = shifted(canonical, m=0.0)
    cfg = BaselineConfig(0.0, 2000)
    _, _, grads, _ = run_many(inst, traj, cfg, 50)
    noise = grads - inst.bias_xi
    assert noise.var() == pytest.approx(canonical.sigma ** 2 / canonical.batch_B, rel=0.05)


def test_error_floor_over_runs():
    p = make_problem(alpha=0.2, zeta=1e-3, sigma=3.0, batch_B=16, delta_W=3.0)
    inst, traj = shifted(p)
    cfg = BaselineConfig.prescribed(p, 1.0, 400)
    _, excess, _, _ = run_many(inst, traj, cfg, 100)
    mins = excess.min(axis=1)
    se = mins.std(ddof=1) / 10
    assert mins.min() >= error_floor(p) - 3 * se


def test_contraction_recursion_in_expectation():
    """Mean excess obeys the one-step recursion for the first 20 post-shift steps."""
    p = make_problem(alpha=0.2, zeta=1e-3, sigma=3.0, batch_B=16, delta_W=3.0)
    inst, traj = shifted(p, theta=-QuadraticInstance(p).proxy_shift)
    eta = prescribed_eta(p, 1.0)
    cfg = BaselineConfig.prescribed(p, 1.0, 21)
    _, excess, _, _ = run_many(inst, traj, cfg, 2000)
    mean = excess.mean(axis=0)
    se = excess.std(axis=0, ddof=1) / np.sqrt(excess.shape[0])
    a, mu, L = p.alpha, p.pl_mu, p.smooth_L
    drift = eta * p.zeta + L * eta ** 2 / 2 * (p.grad_bound_G ** 2 + p.sigma ** 2 * c_phi(0) / p.batch_B)
    for t in range(1, 21):
        rhs = (1 - 2 * eta * a * mu) * mean[t - 1] + drift
        assert mean[t] <= rhs + 3 * (se[t] + se[t - 1])


def test_record_csv(tmp_path, noiseless):
    inst, traj = shifted(noiseless)
    rec = run_baseline(inst, traj, MixingProcess(0.5, 0.0), BaselineConfig(0.1, 5))
    path = tmp_path / "run.csv"
    rec.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,theta,excess" and len(lines) == 6
    assert float(lines[1].split(",")[2]) == 4.5
