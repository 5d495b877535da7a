import math

import numpy as np
import pytest

from cganlab import (
    GanIntConfig,
    ObjectiveKind,
    TrainConfig,
    TrainingDiverged,
    ValidationError,
    discriminator_loss,
    generator_loss,
    sample_minibatch,
    train,
)
from cganlab.dist import GaussianMixture, with_override
from cganlab.errors import ConfigurationError
from cganlab.nn import AdamState, Mlp, adam_step, backward, forward, \
    init_mlp, parameters, set_parameters
from cganlab.train import _batch_arrays, _clamped, train_config_from_spec
from conftest import two_class_dataset

K = ObjectiveKind
LOG2 = math.log(2.0)


def flat_half_discriminator(dim, h_count):
    # zero weights + logistic output = 1/2 everywhere
    return Mlp(weights=[np.zeros((dim + h_count, 1))], biases=[np.zeros(1)],
               output="logistic")


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(algorithm=K.ORIGINAL_GAN, iterations=10)
    with pytest.raises(ValidationError):
        TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=0)
    with pytest.raises(ValidationError):
        TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=1, learning_rate=0.0)
    with pytest.raises(ValidationError):
        GanIntConfig(alpha=1.5)


def test_train_config_from_spec():
    cfg = train_config_from_spec({"algorithm": "modified", "N": 50, "m": 8,
                                  "epsilon": 1e-3, "seed": 3, "latent_dim": 2,
                                  "gan_int": {"enabled": True, "alpha": 0.7},
                                  "g_hidden": [8], "d_hidden": [8, 4],
                                  "eval_every": 10, "eval_samples": 100})
    assert cfg.algorithm is K.MODIFIED_GAN_CLS
    assert cfg.iterations == 50 and cfg.batch_size == 8
    assert cfg.gan_int.enabled and cfg.gan_int.alpha == 0.7
    assert cfg.d_hidden == (8, 4)
    with pytest.raises(ConfigurationError, match="N"):
        train_config_from_spec({"algorithm": "modified"})
    with pytest.raises(ConfigurationError, match="algorithm"):
        train_config_from_spec({"N": 10})


@pytest.mark.parametrize("algorithm", [K.GAN_CLS, K.MODIFIED_GAN_CLS])
def test_discriminator_loss_at_half_is_two_log_two(algorithm):
    ds = two_class_dataset()
    batch = sample_minibatch(ds, 8, np.random.default_rng(0))
    generated = np.zeros((8, 1))
    d_net = flat_half_discriminator(1, 2)
    assert discriminator_loss(algorithm, d_net, batch, generated) == \
        pytest.approx(2.0 * LOG2, abs=1e-12)


def test_generator_loss_at_half():
    ds = two_class_dataset()
    batch = sample_minibatch(ds, 8, np.random.default_rng(0))
    _, c, _ = _batch_arrays(batch)
    d_net = flat_half_discriminator(1, 2)
    assert generator_loss(d_net, np.zeros((8, 1)), c) == pytest.approx(-0.5 * LOG2, abs=1e-12)


def test_losses_match_independent_sums():
    # duplicate-implementation oracle on a random batch of 4
    rng = np.random.default_rng(7)
    ds = two_class_dataset()
    batch = sample_minibatch(ds, 4, rng)
    x, c, x_mis = _batch_arrays(batch)
    generated = rng.normal(size=(4, 1))
    d_net = init_mlp([3, 6, 1], output="logistic", rng=rng)

    def d_out(xs):
        return float(forward(d_net, np.concatenate([xs, cond], axis=1))[0][0, 0])

    sums = {K.GAN_CLS: 0.0, K.MODIFIED_GAN_CLS: 0.0}
    g_sum = 0.0
    for i in range(4):
        cond = c[i:i + 1]
        yr = d_out(x[i:i + 1])
        yf = d_out(generated[i:i + 1])
        ym = d_out(x_mis[i:i + 1])
        sums[K.GAN_CLS] += math.log(yr) + 0.5 * math.log(1 - yf) + 0.5 * math.log(1 - ym)
        sums[K.MODIFIED_GAN_CLS] += 0.5 * (math.log(yr) + math.log(1 - yf)
                                           + math.log(ym) + math.log(1 - ym))
        g_sum += 0.5 * math.log(1 - yf)
    for kind in sums:
        assert discriminator_loss(kind, d_net, batch, generated) == \
            pytest.approx(-sums[kind] / 4.0, abs=1e-12)
    assert generator_loss(d_net, generated, c) == pytest.approx(g_sum / 4.0, abs=1e-12)


def test_modified_loss_is_negated_objective_estimate():
    # L_D equals the negated Monte-Carlo estimate of the modified objective's
    # D-dependent integrand on the same samples
    rng = np.random.default_rng(11)
    ds = two_class_dataset()
    batch = sample_minibatch(ds, 16, rng)
    x, c, x_mis = _batch_arrays(batch)
    generated = rng.normal(size=(16, 1))
    d_net = init_mlp([3, 8, 1], output="logistic", rng=rng)
    y_r = forward(d_net, np.concatenate([x, c], axis=1))[0][:, 0]
    y_f = forward(d_net, np.concatenate([generated, c], axis=1))[0][:, 0]
    y_m = forward(d_net, np.concatenate([x_mis, c], axis=1))[0][:, 0]
    v_hat = np.mean(0.5 * (np.log(y_r) + np.log1p(-y_f) + np.log1p(-y_m) + np.log(y_m)))
    assert discriminator_loss(K.MODIFIED_GAN_CLS, d_net, batch, generated) == \
        pytest.approx(-v_hat, abs=1e-12)


def test_generator_loss_interpolation_degenerates_at_alpha_one():
    rng = np.random.default_rng(13)
    d_net = init_mlp([3, 6, 1], output="logistic", rng=rng)
    generated = rng.normal(size=(8, 1))
    c = np.eye(2)[rng.integers(0, 2, 8)]
    gi = GanIntConfig(enabled=True, alpha=1.0, weight=0.5)
    with_term = generator_loss(d_net, generated, c, gi, generated, c)
    y = forward(d_net, np.concatenate([generated, c], axis=1))[0][:, 0]
    plain = float(np.mean(0.5 * np.log1p(-y)))
    assert with_term == pytest.approx(plain + 0.5 * float(np.mean(np.log1p(-y))), abs=1e-12)


def test_generator_loss_requires_interpolation_batches():
    d_net = flat_half_discriminator(1, 2)
    gi = GanIntConfig(enabled=True)
    with pytest.raises(ValidationError):
        generator_loss(d_net, np.zeros((4, 1)), np.eye(2)[[0, 1, 0, 1]], gi)


def test_loss_batch_size_mismatch():
    ds = two_class_dataset()
    batch = sample_minibatch(ds, 4, np.random.default_rng(0))
    d_net = flat_half_discriminator(1, 2)
    with pytest.raises(ValidationError):
        discriminator_loss(K.GAN_CLS, d_net, batch, np.zeros((3, 1)))


def test_train_single_iteration_contract():
    ds = two_class_dataset()
    cfg = TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=1, seed=0,
                      eval_every=1, eval_samples=100, g_hidden=(8,), d_hidden=(8,))
    g_net, d_net, history = train(ds, cfg)
    assert len(history) == 1
    # parameters moved away from their seeded initialization
    rng = np.random.default_rng(cfg.seed)
    g0 = init_mlp([cfg.latent.dimension + 2, 8, 1], output="identity", rng=rng)
    assert any(not np.array_equal(a, b) for a, b in zip(g_net.weights, g0.weights))
    assert np.all(np.isfinite(history.d_loss)) and np.all(np.isfinite(history.g_loss))


def test_train_is_bit_reproducible():
    ds = two_class_dataset()
    cfg = TrainConfig(algorithm=K.GAN_CLS, iterations=200, seed=5,
                      eval_every=100, eval_samples=500, g_hidden=(8,), d_hidden=(8,))
    g1, d1, h1 = train(ds, cfg)
    g2, d2, h2 = train(ds, cfg)
    assert np.array_equal(h1.d_loss, h2.d_loss)
    assert np.array_equal(h1.g_loss, h2.g_loss)
    assert np.array_equal(h1.tv, h2.tv, equal_nan=True)
    assert all(np.array_equal(a, b) for a, b in zip(g1.weights, g2.weights))
    assert all(np.array_equal(a, b) for a, b in zip(d1.biases, d2.biases))


def test_train_with_interpolation_runs_and_is_deterministic():
    ds = two_class_dataset()
    cfg = TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=50, seed=2,
                      gan_int=GanIntConfig(enabled=True, alpha=0.5, weight=0.5),
                      eval_every=50, eval_samples=200, g_hidden=(8,), d_hidden=(8,))
    _, _, h1 = train(ds, cfg)
    _, _, h2 = train(ds, cfg)
    assert np.array_equal(h1.g_loss, h2.g_loss)
    assert np.all(np.isfinite(h1.g_loss))


def test_train_aborts_on_non_finite_loss(monkeypatch):
    import importlib
    train_mod = importlib.import_module("cganlab.train")
    calls = {"n": 0}
    original = train_mod._d_loss_from_outputs

    def poisoned(algorithm, y_real, y_fake, y_mis):
        calls["n"] += 1
        if calls["n"] == 3:
            return float("nan")
        return original(algorithm, y_real, y_fake, y_mis)

    monkeypatch.setattr(train_mod, "_d_loss_from_outputs", poisoned)
    ds = two_class_dataset()
    cfg = TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=10, seed=0,
                      eval_every=10, eval_samples=100, g_hidden=(8,), d_hidden=(8,))
    with pytest.raises(TrainingDiverged, match="iteration 3"):
        train(ds, cfg)


def test_train_snapshot_cadence():
    ds = two_class_dataset()
    cfg = TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=25, seed=1,
                      eval_every=10, eval_samples=100, g_hidden=(8,), d_hidden=(8,))
    _, _, history = train(ds, cfg)
    assert history.snapshot_rows().tolist() == [9, 19, 24]
    assert np.all(np.isnan(history.tv[0]))
    assert np.all(history.tv[history.snapshot_rows()] >= 0)


def test_train_requires_two_classes():
    ds = two_class_dataset()
    object.__setattr__(ds, "classes", ds.classes[:1])
    cfg = TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=1)
    with pytest.raises(ConfigurationError):
        train(ds, cfg)


def test_history_csv_format(tmp_path):
    ds = two_class_dataset()
    cfg = TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=4, seed=0,
                      eval_every=2, eval_samples=50, g_hidden=(8,), d_hidden=(8,))
    _, _, history = train(ds, cfg)
    path = tmp_path / "history.csv"
    history.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iter,L_D,L_G,tv_class_0,tv_class_1"
    assert len(lines) == 5
    first = lines[1].split(",")
    assert first[0] == "1" and first[3] == "" and first[4] == ""
    final = lines[4].split(",")
    assert final[3] != "" and final[4] != ""


def test_mismatched_pairs_leave_modified_discriminator_indifferent():
    # after the modified loss converges on a frozen generator, D carries no
    # signal on mismatched pairs drawn from a far-shifted override
    ds = with_override(two_class_dataset(),
                       (GaussianMixture([1.0], [8.0], [0.5]),
                        GaussianMixture([1.0], [-8.0], [0.5])))
    cfg = TrainConfig(algorithm=K.MODIFIED_GAN_CLS, iterations=3000, seed=5,
                      eval_every=3000, eval_samples=500)
    g_net, d_net, _ = train(ds, cfg)
    rng = np.random.default_rng(99)
    state = AdamState.for_params(parameters(d_net))
    m = 64
    for _ in range(2000):
        batch = sample_minibatch(ds, m, rng)
        x, c, x_mis = _batch_arrays(batch)
        z = cfg.latent.draw(m, rng)
        x_fake, _ = forward(g_net, np.concatenate([z, c], axis=1))
        y_r, t_r = forward(d_net, np.concatenate([x, c], axis=1))
        y_f, t_f = forward(d_net, np.concatenate([x_fake, c], axis=1))
        y_m, t_m = forward(d_net, np.concatenate([x_mis, c], axis=1))
        gr = -1 / (2 * m) / _clamped(y_r)
        gf = 1 / (2 * m) / _clamped(1 - y_f)
        gm = 1 / (2 * m) * (1 / _clamped(1 - y_m) - 1 / _clamped(y_m))
        grads = [a + b + c2 for a, b, c2 in zip(backward(d_net, t_r, gr).as_list(),
                                                backward(d_net, t_f, gf).as_list(),
                                                backward(d_net, t_m, gm).as_list())]
        params, state = adam_step(parameters(d_net), grads, state)
        set_parameters(d_net, params)
    batch = sample_minibatch(ds, 4000, rng)
    x, c, x_mis = _batch_arrays(batch)
    y_mis = forward(d_net, np.concatenate([x_mis, c], axis=1))[0]
    assert 0.35 <= float(np.mean(y_mis)) <= 0.65
