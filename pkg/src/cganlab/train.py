"""Alternating minibatch training for the matching-aware objectives.

One iteration = draw a triple batch, generate from the current generator,
take one Adam step on the discriminator loss, then one Adam step on the
generator loss (against the freshly updated discriminator).  The optional
interpolation term trains the generator on blended condition vectors.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import MinibatchTriple, SyntheticDataset, sample_minibatch
from .errors import ConfigurationError, TrainingDiverged, ValidationError
from .nn import AdamState, LatentSpec, Mlp, adam_step, backward, forward, init_mlp, \
    parameters, set_parameters
from .objective import D_CLAMP, ObjectiveKind

_EVAL_SALT = 101


@dataclass(frozen=True)
class GanIntConfig:
    enabled: bool = False
    alpha: float = 0.5
    weight: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("interpolation alpha must lie in [0, 1]")
        if self.weight < 0.0:
            raise ValidationError("interpolation weight must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    algorithm: ObjectiveKind
    iterations: int
    batch_size: int = 64
    learning_rate: float = 2e-4
    seed: int = 0
    latent: LatentSpec = LatentSpec(4)
    gan_int: GanIntConfig = GanIntConfig()
    g_hidden: tuple = (32,)
    d_hidden: tuple = (32,)
    eval_every: int = 500
    eval_samples: int = 20000
    shared_pair: bool = False

    def __post_init__(self):
        if self.algorithm not in (ObjectiveKind.GAN_CLS, ObjectiveKind.MODIFIED_GAN_CLS):
            raise ValidationError("training supports the gancls and modified objectives")
        if self.iterations < 1:
            raise ValidationError("iteration count must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if self.eval_every < 1 or self.eval_samples < 1:
            raise ValidationError("eval cadence and sample count must be >= 1")


@dataclass
class TrainHistory:
    """Per-iteration losses plus periodic per-class TV snapshots (NaN on
    iterations without a snapshot)."""

    d_loss: np.ndarray
    g_loss: np.ndarray
    tv: np.ndarray

    def __len__(self) -> int:
        return self.d_loss.shape[0]

    @property
    def class_count(self) -> int:
        return self.tv.shape[1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "L_D", "L_G"] +
                            [f"tv_class_{h}" for h in range(self.class_count)])
            for i in range(len(self)):
                row = [str(i + 1), f"{self.d_loss[i]:.12g}", f"{self.g_loss[i]:.12g}"]
                row += ["" if math.isnan(v) else f"{v:.12g}" for v in self.tv[i]]
                writer.writerow(row)

    def snapshot_rows(self) -> np.ndarray:
        return np.flatnonzero(~np.isnan(self.tv[:, 0]))


def train_config_from_spec(doc: dict) -> TrainConfig:
    """Map the run-config JSON document onto a TrainConfig."""
    if not isinstance(doc, dict):
        raise ConfigurationError("run config must be a JSON object")
    for key in ("algorithm", "N"):
        if key not in doc:
            raise ConfigurationError(f"missing config field: {key}")
    gi = doc.get("gan_int", {})
    return TrainConfig(
        algorithm=ObjectiveKind.parse(doc["algorithm"]),
        iterations=int(doc["N"]),
        batch_size=int(doc.get("m", 64)),
        learning_rate=float(doc.get("epsilon", 2e-4)),
        seed=int(doc.get("seed", 0)),
        latent=LatentSpec(int(doc.get("latent_dim", 4))),
        gan_int=GanIntConfig(enabled=bool(gi.get("enabled", False)),
                             alpha=float(gi.get("alpha", 0.5)),
                             weight=float(gi.get("weight", 0.5))),
        g_hidden=tuple(doc.get("g_hidden", [32])),
        d_hidden=tuple(doc.get("d_hidden", [32])),
        eval_every=int(doc.get("eval_every", 500)),
        eval_samples=int(doc.get("eval_samples", 20000)),
        shared_pair=bool(doc.get("shared_pair", False)),
    )


def _clamped(y: np.ndarray) -> np.ndarray:
    return np.clip(y, D_CLAMP, 1.0 - D_CLAMP)


def _d_loss_from_outputs(algorithm: ObjectiveKind, y_real, y_fake, y_mis) -> float:
    log_r = np.log(_clamped(y_real))
    log_1f = np.log(_clamped(1.0 - y_fake))
    log_m = np.log(_clamped(y_mis))
    log_1m = np.log(_clamped(1.0 - y_mis))
    if algorithm is ObjectiveKind.MODIFIED_GAN_CLS:
        per = 0.5 * (log_r + log_1f + log_m + log_1m)
    else:
        per = log_r + 0.5 * log_1f + 0.5 * log_1m
    return float(-np.mean(per))


def _g_loss_from_outputs(y_fake, gan_int: GanIntConfig, y_interp=None) -> float:
    loss = float(np.mean(0.5 * np.log(_clamped(1.0 - y_fake))))
    if gan_int.enabled:
        loss += gan_int.weight * float(np.mean(np.log(_clamped(1.0 - y_interp))))
    return loss


def _batch_arrays(batch: Sequence[MinibatchTriple]):
    x = np.stack([t.matched_outcome for t in batch])
    c = np.stack([t.condition for t in batch])
    x_mis = np.stack([t.mismatched_outcome for t in batch])
    return x, c, x_mis


def discriminator_loss(algorithm: ObjectiveKind, d_net: Mlp,
                       batch: Sequence[MinibatchTriple], generated) -> float:
    """The minibatch discriminator loss (the quantity a training step
    minimizes), with discriminator outputs clamped before the logs."""
    x, c, x_mis = _batch_arrays(batch)
    gen = np.asarray(generated, dtype=float)
    if gen.shape[0] != x.shape[0]:
        raise ValidationError("generated batch size must match the triple batch")
    y_real, _ = forward(d_net, np.concatenate([x, c], axis=1))
    y_fake, _ = forward(d_net, np.concatenate([gen, c], axis=1))
    y_mis, _ = forward(d_net, np.concatenate([x_mis, c], axis=1))
    if algorithm not in (ObjectiveKind.GAN_CLS, ObjectiveKind.MODIFIED_GAN_CLS):
        raise ValidationError("discriminator loss is defined for gancls and modified")
    return _d_loss_from_outputs(algorithm, y_real, y_fake, y_mis)


def generator_loss(d_net: Mlp, generated, conditions,
                   gan_int: GanIntConfig = GanIntConfig(),
                   interp_generated=None, interp_conditions=None) -> float:
    """The minibatch generator loss, optionally with the interpolation term
    evaluated on generated samples at blended conditions."""
    gen = np.asarray(generated, dtype=float)
    cond = np.asarray(conditions, dtype=float)
    if gen.shape[0] != cond.shape[0]:
        raise ValidationError("generated and condition batches must align")
    y_fake, _ = forward(d_net, np.concatenate([gen, cond], axis=1))
    y_interp = None
    if gan_int.enabled:
        if interp_generated is None or interp_conditions is None:
            raise ValidationError("interpolation term needs its generated batch and conditions")
        gi = np.asarray(interp_generated, dtype=float)
        ci = np.asarray(interp_conditions, dtype=float)
        if gi.shape[0] != ci.shape[0]:
            raise ValidationError("interpolated batches must align")
        y_interp, _ = forward(d_net, np.concatenate([gi, ci], axis=1))
    return _g_loss_from_outputs(y_fake, gan_int, y_interp)


def _tv_snapshot(g_net: Mlp, latent: LatentSpec, ds: SyntheticDataset,
                 n: int, seed) -> np.ndarray:
    from .evaluate import generated_class_tv
    return generated_class_tv(g_net, latent, ds, n, seed)


def train(ds: SyntheticDataset, cfg: TrainConfig):
    """Run the configured loop; returns (generator, discriminator, history).

    Bit-reproducible from the seed.  Raises TrainingDiverged (naming the
    iteration) if a loss goes non-finite.
    """
    if ds.class_count < 2:
        raise ConfigurationError("training needs at least 2 condition classes")
    h_count = ds.class_count
    dim = ds.dim
    m = cfg.batch_size
    rng = np.random.default_rng(cfg.seed)

    g_net = init_mlp([cfg.latent.dimension + h_count, *cfg.g_hidden, dim],
                     output="identity", rng=rng)
    d_net = init_mlp([dim + h_count, *cfg.d_hidden, 1],
                     output="logistic", rng=rng)
    g_state = AdamState.for_params(parameters(g_net), lr=cfg.learning_rate)
    d_state = AdamState.for_params(parameters(d_net), lr=cfg.learning_rate)

    n_iter = cfg.iterations
    history = TrainHistory(d_loss=np.empty(n_iter), g_loss=np.empty(n_iter),
                           tv=np.full((n_iter, h_count), np.nan))
    modified = cfg.algorithm is ObjectiveKind.MODIFIED_GAN_CLS

    for i in range(1, n_iter + 1):
        batch = sample_minibatch(ds, m, rng, shared_pair=cfg.shared_pair)
        x, c, x_mis = _batch_arrays(batch)
        z = cfg.latent.draw(m, rng)
        x_fake, g_tape = forward(g_net, np.concatenate([z, c], axis=1))

        # Discriminator step.
        y_real, t_real = forward(d_net, np.concatenate([x, c], axis=1))
        y_fake, t_fake = forward(d_net, np.concatenate([x_fake, c], axis=1))
        y_mis, t_mis = forward(d_net, np.concatenate([x_mis, c], axis=1))
        ld = _d_loss_from_outputs(cfg.algorithm, y_real, y_fake, y_mis)
        if modified:
            gr = -1.0 / (2 * m) / _clamped(y_real)
            gf = 1.0 / (2 * m) / _clamped(1.0 - y_fake)
            gm = 1.0 / (2 * m) * (1.0 / _clamped(1.0 - y_mis) - 1.0 / _clamped(y_mis))
        else:
            gr = -1.0 / m / _clamped(y_real)
            gf = 1.0 / (2 * m) / _clamped(1.0 - y_fake)
            gm = 1.0 / (2 * m) / _clamped(1.0 - y_mis)
        grads_r = backward(d_net, t_real, gr)
        grads_f = backward(d_net, t_fake, gf)
        grads_m = backward(d_net, t_mis, gm)
        d_grads = [a + b + c_ for a, b, c_ in
                   zip(grads_r.as_list(), grads_f.as_list(), grads_m.as_list())]
        new_params, d_state = adam_step(parameters(d_net), d_grads, d_state)
        set_parameters(d_net, new_params)

        # Generator step against the updated discriminator.
        y_fake2, t_fake2 = forward(d_net, np.concatenate([x_fake, c], axis=1))
        out_grad = -1.0 / (2 * m) / _clamped(1.0 - y_fake2)
        input_grad = backward(d_net, t_fake2, out_grad).wrt_input
        g_grads = backward(g_net, g_tape, input_grad[:, :dim]).as_list()

        y_interp = None
        if cfg.gan_int.enabled:
            c1 = np.argmax(c, axis=1)
            partner = (c1 + 1 + rng.integers(0, h_count - 1, size=m)) % h_count
            c_int = cfg.gan_int.alpha * c + (1.0 - cfg.gan_int.alpha) * np.eye(h_count)[partner]
            x_int, g_tape_int = forward(g_net, np.concatenate([z, c_int], axis=1))
            y_interp, t_int = forward(d_net, np.concatenate([x_int, c_int], axis=1))
            int_grad = -cfg.gan_int.weight / m / _clamped(1.0 - y_interp)
            input_grad_int = backward(d_net, t_int, int_grad).wrt_input
            extra = backward(g_net, g_tape_int, input_grad_int[:, :dim]).as_list()
            g_grads = [a + b for a, b in zip(g_grads, extra)]
        lg = _g_loss_from_outputs(y_fake2, cfg.gan_int, y_interp)
        new_params, g_state = adam_step(parameters(g_net), g_grads, g_state)
        set_parameters(g_net, new_params)

        if not (math.isfinite(ld) and math.isfinite(lg)):
            raise TrainingDiverged(f"non-finite loss at iteration {i}: L_D={ld}, L_G={lg}")
        history.d_loss[i - 1] = ld
        history.g_loss[i - 1] = lg
        if i % cfg.eval_every == 0 or i == n_iter:
            history.tv[i - 1] = _tv_snapshot(g_net, cfg.latent, ds, cfg.eval_samples,
                                             [cfg.seed, _EVAL_SALT, i])
    return g_net, d_net, history
