import numpy as np
import pytest

from crosslearn.embed import knn, lle_weights, to_image
from crosslearn.errors import ConfigurationError
from crosslearn.imgstack import Stack
from crosslearn.manifold import fit, lift, project
from crosslearn.mfa import ProcrustesMap, apply_mfa, fit_procrustes, ml_mfa_coefficients, ml_mfa_transfer


def centred(seed, n=4, L=30):
    p = np.random.default_rng(seed).normal(size=(n, L))
    return p - p.mean(axis=1, keepdims=True)


def test_self_alignment():
    p = centred(0)
    pm = fit_procrustes(p, p)
    np.testing.assert_allclose(pm.q, np.eye(4), atol=1e-10)
    assert pm.k == pytest.approx(1.0, abs=1e-12)


def test_rotation_recovery():
    p = centred(1)
    r, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(4, 4)))
    p_s = r.T @ p
    pm = fit_procrustes(p, p_s)
    np.testing.assert_allclose(pm.q, r, atol=1e-8)
    assert pm.k == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.norm(pm.k * pm.q.T @ p - p_s) < 1e-6 * np.linalg.norm(p_s)
    np.testing.assert_allclose(np.linalg.norm(pm.to_camera(p[:, 0])), pm.k * np.linalg.norm(p[:, 0]))


def test_scaling_recovery():
    p = centred(3)
    pm = fit_procrustes(p, 2 * p)
    assert pm.k == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(pm.q, np.eye(4), atol=1e-10)


def test_q_is_orthogonal():
    for seed in range(5):
        pm = fit_procrustes(centred(seed), centred(seed + 100))
        assert np.max(np.abs(pm.q.T @ pm.q - np.eye(4))) < 1e-10
        assert abs(abs(np.linalg.det(pm.q)) - 1) < 1e-8
        assert pm.k > 0


def test_dimension_errors():
    with pytest.raises(ConfigurationError):
        fit_procrustes(centred(0, 3), centred(0, 4))


def small_manifold(seed=5):
    stack = Stack(np.random.default_rng(seed).random((16, 10)))
    man = fit(stack, 3)
    return stack, man, project(man, stack)


def test_identity_map_is_pca_reconstruction():
    stack, man, p = small_manifold()
    img = apply_mfa(p[:, 1], ProcrustesMap(1.0, np.eye(3)), man)
    assert img == to_image(lift(man, p[:, 1]), 4)


def test_pure_scaling_halves_coefficients():
    stack, man, p = small_manifold()
    img = apply_mfa(p[:, 2], ProcrustesMap(0.5, np.eye(3)), man)
    assert img == to_image(lift(man, 0.5 * p[:, 2]), 4)


def test_self_aligned_dataset_equals_pca():
    stack, man, p = small_manifold()
    pm = fit_procrustes(p, p)
    a = np.maximum(lift(man, pm.to_camera(p[:, 3])), 0)
    b = np.maximum(lift(man, p[:, 3]), 0)
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_ml_mfa_single_neighbour_is_nearest_image():
    stack, man, p = small_manifold()
    pm = fit_procrustes(p, p)
    t = 4
    nearest = knn(p, p[:, t], 1, exclude=t).indices[0]
    np.testing.assert_allclose(ml_mfa_coefficients(p[:, t], p, p, pm, 1, exclude=t), p[:, nearest], atol=1e-10)


def test_ml_mfa_identical_modalities_match_plain_lle():
    stack, man, p = small_manifold()
    pm = fit_procrustes(p, p)
    t = 6
    nb = knn(p, p[:, t], 4, exclude=t)
    w = lle_weights(p[:, t], nb).w
    np.testing.assert_allclose(ml_mfa_coefficients(p[:, t], p, p, pm, 4, exclude=t), p[:, nb.indices] @ w, atol=1e-8)
    img = ml_mfa_transfer(t, p, p, pm, 4, man)
    np.testing.assert_allclose(img.data, to_image(lift(man, p[:, nb.indices] @ w), 4).data, atol=1e-8)


def test_ml_mfa_differs_from_mfa_on_two_modalities():
    rng = np.random.default_rng(7)
    r = Stack(rng.random((16, 12)))
    s = Stack(r.columns + 0.3 * rng.random((16, 12)))
    man_r, man_s = fit(r, 3), fit(s, 3)
    p_r, p_s = project(man_r, r), project(man_s, s)
    pm = fit_procrustes(p_r, p_s)
    a = ml_mfa_transfer(2, p_r, p_s, pm, 3, man_r)
    b = apply_mfa(p_r[:, 2], pm, man_r)
    assert not np.allclose(a.data, b.data)
    assert a.data.min() >= 0 and a.data.max() == pytest.approx(1.0)
