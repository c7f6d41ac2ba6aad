import math

import numpy as np
import pytest

import guq

TINY = """\
gusts_per_angle = 1
snapshots_per_case = 12
ae_max_epochs = 2
est_max_epochs = 2
T = 4
M = 4
gramian_samples = 3
eval_cases = 0,1
sensitivity_cases = 0
"""


def test_nll_closed_form():
    mu = np.array([0.4, -1.0, 2.0])
    assert abs(guq.nll_loss(mu, mu, np.eye(3)) - 2.756815599614018) < 1e-9


def test_cholesky_assembly():
    raw = np.zeros(6)
    raw[0] = math.log(4.0)
    lower = guq.assemble_cholesky(raw, 3)
    assert lower.shape == (3, 3)
    assert lower[0, 0] == pytest.approx(2.0)
    assert np.all(np.linalg.eigvalsh(lower @ lower.T) > 0)
    with pytest.raises(guq.ShapeError):
        guq.assemble_cholesky(np.zeros(5), 3)


def test_ellipse_and_quantile():
    assert guq.chi2_quantile(2, 0.95) == pytest.approx(5.991464547107979, rel=1e-12)
    e = guq.confidence_ellipse([0.0, 0.0, 0.0], np.diag([4.0, 1.0, 9.0]), (0, 1))
    assert e["semi_axes"][0] == pytest.approx(2.0 * math.sqrt(5.991464547107979))
    assert e["angle"] == pytest.approx(0.0)
    assert guq.ellipsoid_contains([0, 0, 0], np.eye(3), [0.1, 0.1, 0.1])
    assert not guq.ellipsoid_contains([0, 0, 0], np.eye(3), [5.0, 0, 0])


def test_rank_and_gramian():
    assert guq.select_rank([9, 0.9, 0.09, 0.01], 0.99) == 2
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 5))
    g, lam, vec = guq.linear_gramian(a, np.zeros(5), 0.1, 7, 3)
    np.testing.assert_allclose(g, a.T @ a, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(lam, np.sort(np.linalg.eigvalsh(a.T @ a))[::-1], atol=1e-10)
    np.testing.assert_allclose(vec.T @ vec, np.eye(5), atol=1e-10)


def test_taylor_vortex():
    assert guq.taylor_vortex_velocity(0.3, 0.3, 1.7) == 1.7


def test_pipeline(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"data_dir = {tmp_path}\n" + TINY)
    for cmd in ["generate", "train-ae", "train-estimator", "evaluate", "sensitivity"]:
        code, log = guq.run(cmd, str(cfg), 3)
        assert code == 0, log
    assert (tmp_path / "report" / "coverage.csv").exists()

    data = guq.Dataset.load(str(tmp_path / "dataset.guqd"))
    assert len(data) == 120
    assert data.inputs.shape == (120, 33)
    nx, ny = data.grid
    assert data.vorticity.shape == (120, nx * ny)

    est = guq.Estimator.load(str(tmp_path / "estimator.guqm"))
    det = guq.Estimator.load(str(tmp_path / "estimator_det.guqm"))
    assert est.probabilistic and not det.probabilistic
    x = data.inputs[0]
    out = est.mc_predict(x, 10, 1)
    assert out["aleatoric"]["covariance"].shape == (3, 3)
    assert np.all(np.isfinite(out["epistemic"]["covariance"]))
    assert det.jacobian(x).shape == (3, 33)
    g, lam, _ = det.gramian(x, samples=4)
    assert g.shape == (33, 33) and lam[0] >= lam[-1]

    ae = guq.Autoencoder.load(str(tmp_path / "ae.guqm"))
    z = ae.encode(data.vorticity[:2], data.lifts[:2])
    fields, lifts = ae.decode(z)
    assert fields.shape == (2, nx * ny) and lifts.shape == (2,)
    stats = ae.reconstruct_stats(out["aleatoric"]["mean"], out["aleatoric"]["covariance"], 8, 2)
    assert stats["variance"].shape == (nx * ny,)
    assert stats["lift_variance"] >= 0.0


def test_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    code, log = guq.run("generate", str(cfg), 0)
    assert code == 2 and "bogus" in log
    with pytest.raises(guq.IoError):
        guq.Estimator.load(str(tmp_path / "missing.guqm"))
