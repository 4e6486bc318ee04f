import numpy as np
import pytest

from crosslearn import manifold
from crosslearn.errors import ConfigurationError, DimensionMismatchError
from crosslearn.imgstack import Stack, center
from crosslearn.manifold import fit, lift, project


def random_stack(seed, dim=50, count=10):
    return Stack(np.random.default_rng(seed).normal(size=(dim, count)))


def test_two_by_two_by_hand():
    man = fit(Stack(np.array([[1.0, -1.0], [1.0, -1.0]])), 1)
    np.testing.assert_allclose(man.basis[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-12)
    assert man.spectrum[0] == pytest.approx(2.0)


def test_identical_columns_have_no_variance():
    c = np.arange(6.0)
    with pytest.warns(RuntimeWarning):
        man = fit(Stack(np.column_stack([c] * 4)), 2)
    assert np.all(man.spectrum < 1e-20)
    assert man.rank_limited and man.retained == 0


def test_trailing_mass_identity():
    stack = random_stack(0)
    man = fit(stack, 9)
    centred, _ = center(stack)
    p = project(man, stack)
    err = np.linalg.norm(centred.columns - man.basis @ p)
    trailing = stack.count * man.spectrum[9:].sum()
    assert err == pytest.approx(np.sqrt(trailing), abs=1e-8)


def test_spectrum_sum_is_total_variance():
    stack = random_stack(1, 30, 12)
    man = fit(stack, 3)
    centred, _ = center(stack)
    assert man.spectrum.sum() == pytest.approx(np.linalg.norm(centred.columns) ** 2 / stack.count, abs=1e-8)
    assert np.all(np.diff(man.spectrum) <= 0)


def test_basis_is_orthonormal_with_sign_rule():
    man = fit(random_stack(2), 6)
    np.testing.assert_allclose(man.basis.T @ man.basis, np.eye(6), atol=1e-12)
    for col in man.basis.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_project_examples():
    stack = random_stack(3, 20, 8)
    man = fit(stack, 4)
    mean = man.mean.mean
    np.testing.assert_allclose(project(man, mean), np.zeros(4), atol=1e-12)
    np.testing.assert_allclose(project(man, mean + man.basis[:, 2]), np.eye(4)[2], atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        project(man, np.zeros(19))


def test_lift_examples():
    stack = random_stack(4, 20, 8)
    man = fit(stack, 4)
    np.testing.assert_array_equal(lift(man, np.zeros(4)), man.mean.mean)
    p = np.random.default_rng(0).normal(size=4)
    np.testing.assert_allclose(project(man, lift(man, p)), p, atol=1e-10)
    with pytest.raises(DimensionMismatchError):
        lift(man, np.zeros(5))


def test_full_rank_round_trip():
    stack = random_stack(5, 20, 8)
    # centring removes one dimension: rank is count - 1
    man = fit(stack, 7)
    np.testing.assert_allclose(lift(man, project(man, stack)), stack.columns, atol=1e-8)


def test_projector_is_idempotent():
    stack = random_stack(6, 25, 9)
    man = fit(stack, 4)
    x = np.random.default_rng(1).normal(size=25)
    once = lift(man, project(man, x))
    np.testing.assert_allclose(lift(man, project(man, once)), once, atol=1e-10)


def test_column_order_invariance():
    stack = random_stack(7, 30, 10)
    perm = np.random.default_rng(2).permutation(10)
    a = fit(stack, 5)
    b = fit(Stack(stack.columns[:, perm]), 5)
    np.testing.assert_allclose(a.basis, b.basis, atol=1e-10)
    np.testing.assert_allclose(a.spectrum, b.spectrum, atol=1e-12)


def test_rank_limited_flag():
    rng = np.random.default_rng(8)
    low = rng.normal(size=(20, 2)) @ rng.normal(size=(2, 10))
    with pytest.warns(RuntimeWarning):
        man = fit(Stack(low), 5)
    assert man.rank_limited and man.retained == 2


def test_parameter_errors():
    with pytest.raises(ConfigurationError):
        fit(random_stack(0, 5, 1), 1)
    with pytest.raises(ConfigurationError):
        fit(random_stack(0, 5, 4), 0)
    with pytest.raises(ConfigurationError):
        fit(random_stack(0, 5, 4), 6)


def test_save_load_round_trip(tmp_path):
    man = fit(random_stack(9, 16, 6), 3)
    manifold.save(man, tmp_path / "m")
    back = manifold.load(tmp_path / "m")
    np.testing.assert_array_equal(back.basis, man.basis)
    np.testing.assert_array_equal(back.mean.mean, man.mean.mean)
    np.testing.assert_array_equal(back.spectrum, man.spectrum)
    assert back.retained == 3
