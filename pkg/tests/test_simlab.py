import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare, spearmanr

from conftest import N_GRID, separable_config
from ssbounds.bounds import err_estimate
from ssbounds.simlab import (
    DataSampler,
    ExperimentConfig,
    ModelWeights,
    TrainerConfig,
    balanced_masks,
    cross_entropy_and_grad,
    draw_supersample,
    evaluate_losses,
    iid_masks,
    run_experiment,
    run_supersample,
    train_batch,
    train_linear_softmax,
)

# near-separable: train error stays positive, so the test error has room to fall
TREND_SEP = 4.0


def test_sampler_centers():
    s = DataSampler(n_classes=10, dim=5, class_sep=3.0)
    c = s.centers()
    assert c.shape == (10, 5)
    assert np.allclose(c.mean(axis=0), 0)
    assert len({tuple(r) for r in c}) == 10
    assert set(np.unique(c - c.min(axis=0))) <= {0.0, 3.0}
    with pytest.raises(ValueError):
        DataSampler(n_classes=1)
    with pytest.raises(ValueError):
        DataSampler(n_classes=40, dim=5)
    with pytest.raises(ValueError):
        DataSampler(noise_std=0)


def test_draw_supersample():
    s = DataSampler()
    x, y = draw_supersample(s, 1, seed=3)
    assert x.shape == (1, 2, 5) and y.shape == (1, 2)
    x2, y2 = draw_supersample(s, 1, seed=3)
    assert np.array_equal(x, x2) and np.array_equal(y, y2)
    x, _ = draw_supersample(s, 4000, seed=1)
    _, y = draw_supersample(s, 4000, seed=1)
    resid = x - s.centers()[y]
    assert resid.std() == pytest.approx(1.0, abs=0.02)
    with pytest.raises(ValueError):
        draw_supersample(s, 0)


def test_balanced_masks():
    m = balanced_masks(1, 2, seed=0).entries
    assert m[:, 0].tolist() in ([0, 1], [1, 0])
    m = balanced_masks(7, 10, seed=1).entries
    assert np.all(m.sum(axis=0) == 5)
    assert balanced_masks(7, 10, seed=1).balanced
    with pytest.raises(ValueError):
        balanced_masks(3, 5)


def test_balanced_mask_patterns_uniform():
    # 6 = C(4, 2) equally likely column patterns
    ss = np.random.SeedSequence(2024)
    counts = {}
    for child in ss.spawn(10_000):
        col = tuple(balanced_masks(1, 4, child).entries[:, 0])
        counts[col] = counts.get(col, 0) + 1
    assert len(counts) == 6
    assert chisquare(list(counts.values())).pvalue > 0.01


def test_balanced_mask_columns_independent():
    m = balanced_masks(2, 4, seed=0)
    cols = [tuple(c) for c in balanced_masks(2000, 4, seed=5).entries.T]
    assert len(set(cols)) == 6
    assert m.entries.shape == (4, 2)


def test_iid_masks():
    m = iid_masks(1000, 2, seed=0).entries
    assert set(np.unique(m)) <= {0, 1}
    assert m.mean() == pytest.approx(0.5, abs=0.05)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m, d, c = rng.integers(1, 8), rng.integers(1, 5), rng.integers(2, 5)
    x = rng.standard_normal((m, d))
    y = rng.integers(0, c, m)
    w = rng.standard_normal((d + 1, c))
    _, g = cross_entropy_and_grad(w, x, y)
    fd = np.empty_like(w)
    h = 1e-6
    for idx in np.ndindex(w.shape):
        e = np.zeros_like(w)
        e[idx] = h
        fd[idx] = (cross_entropy_and_grad(w + e, x, y)[0] - cross_entropy_and_grad(w - e, x, y)[0]) / (2 * h)
    assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(g), 1.0)


def test_bias_stays_zero_on_mirrored_data():
    x = np.array([[1.0, 2.0], [-1.0, -2.0], [0.5, -0.3], [-0.5, 0.3]])
    y = np.array([0, 1, 0, 1])
    w = train_linear_softmax(x, y, TrainerConfig(max_epochs=1), 2)
    assert w.epochs == 1
    assert np.all(w.matrix[-1] == 0)


def test_train_separable_pair():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    w = train_linear_softmax(x, np.array([0, 1]), TrainerConfig())
    assert w.train_error == 0.0 and w.epochs < 500


def test_train_batch_matches_single_runs():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 6, 2))
    y = rng.integers(0, 2, (3, 6))
    cfg = TrainerConfig(learning_rate=0.5, max_epochs=50)
    w, err, epochs = train_batch(x, y, cfg, 2)
    for b in range(3):
        one = train_linear_softmax(x[b], y[b], cfg)
        assert np.array_equal(one.matrix, w[b])
        assert one.train_error == err[b] and one.epochs == epochs[b]
    with pytest.raises(ValueError):
        train_batch(np.zeros((1, 0, 2)), np.zeros((1, 0), int), cfg, 2)


def test_trainer_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainerConfig(early_stop_train_error=1.0)
    with pytest.raises(ValueError):
        TrainerConfig(init="random")
    with pytest.raises(ValueError):
        ModelWeights(np.array([[np.nan]]))


def test_evaluate_losses():
    x, y = draw_supersample(DataSampler(), 6, seed=0)
    zero = np.zeros((6, 2))
    assert np.array_equal(evaluate_losses(zero, x, y), (y != 0).astype(float))
    s = DataSampler()
    perfect = np.zeros((6, 2))
    perfect[:5] = s.centers().T
    clean = s.centers()[y]
    assert np.all(evaluate_losses(perfect, clean, y) == 0)
    zo, sur = evaluate_losses(zero, x, y, surrogate_cap=5.0)
    assert np.allclose(sur, np.log(2) / 5)
    assert np.all((0 <= sur) & (sur <= 1))


def test_run_supersample_train_column_matches_trainer():
    cfg = separable_config(sampler=DataSampler(class_sep=2.0), k1=1, k2=6, n_grid=(8,))
    masks = balanced_masks(8, 6, seed=0).entries
    zo, _ = run_supersample(cfg, 8, 0, masks)
    train_col = np.take_along_axis(zo, masks[..., None].astype(np.intp), -1)[..., 0]
    x, y = draw_supersample(cfg.sampler, 8, np.random.SeedSequence([cfg.seed, 8, 0]))
    for m in range(6):
        rows = np.arange(8)
        w = train_linear_softmax(x[rows, masks[m]], y[rows, masks[m]], cfg.trainer)
        assert train_col[m].mean() == w.train_error


def test_run_experiment_shape_and_determinism():
    cfg = ExperimentConfig(k1=1, k2=2, n_grid=(1,))
    t = run_experiment(cfg)[1]
    assert t.values.shape == (1, 2, 1, 2)
    cfg = separable_config(sampler=DataSampler(class_sep=2.0), k1=3, k2=4, n_grid=(5, 7))
    a, b = run_experiment(cfg), run_experiment(cfg)
    for n in (5, 7):
        assert a[n].values.tobytes() == b[n].values.tobytes()
        assert np.array_equal(a[n].masks, b[n].masks)
        assert a[n].balanced


def test_run_experiment_thread_independent(monkeypatch):
    cfg = separable_config(sampler=DataSampler(class_sep=2.0), k1=4, k2=4, n_grid=(6,), shared_masks=False)
    monkeypatch.setenv("SSB_THREADS", "1")
    a = run_experiment(cfg)[6]
    monkeypatch.setenv("SSB_THREADS", "3")
    b = run_experiment(cfg)[6]
    assert a.values.tobytes() == b.values.tobytes()
    assert not a.shared_masks and a.masks.shape == (4, 4, 6)


def test_config_round_trip_and_validation():
    cfg = separable_config(surrogate_cap=5.0)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig(k2=3)
    with pytest.raises(ValueError):
        ExperimentConfig(n_grid=(0,))
    with pytest.raises(ValueError):
        run_experiment(ExperimentConfig(k1=1, k2=2, n_grid=(1,)), with_surrogate=True)


def test_default_separation_interpolates():
    cfg = ExperimentConfig(k1=10, k2=20, n_grid=(25,))
    t = run_experiment(cfg)[25]
    assert (t.train.sum(axis=-1) == 0).mean() >= 0.99


def test_separable_sweep_interpolates(separable_sweep):
    assert sorted(separable_sweep) == list(N_GRID)
    for t in separable_sweep.values():
        assert t.is_interpolating()


def test_separable_err_nonincreasing(separable_sweep):
    errs = [err_estimate(separable_sweep[n]).err for n in N_GRID]
    # Monte-Carlo slack of two standard errors per step
    for a, b in zip(errs, errs[1:]):
        assert b <= a + 0.01


def test_err_trend_near_separable():
    cfg = separable_config(sampler=DataSampler(class_sep=TREND_SEP), k1=20, k2=40)
    out = run_experiment(cfg)
    errs = [err_estimate(out[n]).err for n in N_GRID]
    rho, p = spearmanr(N_GRID, errs)
    assert rho < 0 and p < 0.05


def test_non_separable_regime(non_separable_sweep):
    for n in (25, 50, 75, 100):
        assert err_estimate(non_separable_sweep[n]).L_n >= 0.15
