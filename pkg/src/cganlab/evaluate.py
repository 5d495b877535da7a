"""Empirical measurement: histograms, TV/KS metrics, discriminator-output
densities, and the paired mismatch-manipulation experiment."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .dist import SyntheticDataset, class_bin_masses, sample_minibatch, with_override, _frozen
from .errors import ValidationError
from .nn import LatentSpec, Mlp, forward
from .objective import ObjectiveKind
from .train import TrainConfig, train

_D_BINS = 20
_EVAL_SALT = 101
_DENSITY_SALT = 202


@dataclass(frozen=True)
class EmpiricalHistogram:
    """Counts (or nonnegative weights) over strictly increasing bin edges."""

    edges: np.ndarray
    counts: np.ndarray
    total: float

    def __post_init__(self):
        e = np.array(self.edges, dtype=float)
        c = np.array(self.counts, dtype=float)
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
            raise ValidationError("edges must be strictly increasing with >= 2 entries")
        if c.ndim != 1 or c.size != e.size - 1:
            raise ValidationError("counts must have one entry per bin")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValidationError("counts must be finite and nonnegative")
        total = float(self.total)
        if total <= 0 or abs(c.sum() - total) > 1e-9 * max(1.0, total):
            raise ValidationError("counts must sum to the stated total")
        object.__setattr__(self, "edges", _frozen(e))
        object.__setattr__(self, "counts", _frozen(c))
        object.__setattr__(self, "total", total)

    @property
    def bin_count(self) -> int:
        return self.counts.size

    def masses(self) -> np.ndarray:
        return self.counts / self.total

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["edge_lo", "edge_hi", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                writer.writerow([f"{lo:.12g}", f"{hi:.12g}", f"{c:.12g}"])

    def to_json_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist(),
                "total": self.total}


def histogram(samples, edges) -> EmpiricalHistogram:
    """Bin samples over the edges; out-of-range values clip to the end bins."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 1:
        raise ValidationError("histogram needs at least one sample")
    e = np.asarray(edges, dtype=float)
    if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
        raise ValidationError("edges must be strictly increasing with >= 2 entries")
    clipped = np.clip(s, e[0], e[-1])
    counts, _ = np.histogram(clipped, bins=e)
    return EmpiricalHistogram(edges=e, counts=counts.astype(float), total=float(s.size))


def pushforward_histogram(values, masses, edges) -> EmpiricalHistogram:
    """Exact-mass pushforward: bin the table values weighting by ``masses``.

    This is the theoretical counterpart of sampling pairs and histogramming
    the discriminator's outputs.
    """
    v = np.asarray(values, dtype=float).ravel()
    m = np.asarray(masses, dtype=float).ravel()
    if v.shape != m.shape:
        raise ValidationError("values and masses must share a shape")
    if np.any(m < 0):
        raise ValidationError("masses must be nonnegative")
    total = float(m.sum())
    if total <= 0:
        raise ValidationError("masses must have positive total")
    e = np.asarray(edges, dtype=float)
    clipped = np.clip(v, e[0], e[-1])
    counts, _ = np.histogram(clipped, bins=e, weights=m)
    return EmpiricalHistogram(edges=e, counts=counts, total=total)


def _as_masses(a) -> np.ndarray:
    if isinstance(a, EmpiricalHistogram):
        return a.masses()
    v = np.asarray(a, dtype=float).ravel()
    total = v.sum()
    if v.size < 1 or np.any(v < 0) or total <= 0:
        raise ValidationError("expected a histogram or nonnegative weight vector")
    return v / total


def tv_distance(a, b) -> float:
    """Half the L1 distance between the normalized masses; in [0, 1]."""
    if isinstance(a, EmpiricalHistogram) and isinstance(b, EmpiricalHistogram):
        if a.edges.shape != b.edges.shape or np.any(a.edges != b.edges):
            raise ValidationError("histograms must share bin edges")
    pa, pb = _as_masses(a), _as_masses(b)
    if pa.shape != pb.shape:
        raise ValidationError("tv_distance needs matching bin structure")
    return float(0.5 * np.abs(pa - pb).sum())


def ks_statistic(a, b) -> float:
    """Kolmogorov-Smirnov statistic on the shared binning."""
    pa, pb = _as_masses(a), _as_masses(b)
    if pa.shape != pb.shape:
        raise ValidationError("ks_statistic needs matching bin structure")
    return float(np.max(np.abs(np.cumsum(pa) - np.cumsum(pb))))


def generated_class_tv(g_net: Mlp, latent: LatentSpec, ds: SyntheticDataset,
                       n: int, seed) -> np.ndarray:
    """Per-class TV between generated samples and the exact data bin masses."""
    if n < 1:
        raise ValidationError("need at least one evaluation sample")
    rng = np.random.default_rng(seed)
    edges = np.linspace(ds.value_range[0], ds.value_range[1], ds.bins + 1)
    data_masses = class_bin_masses(ds)
    onehot = np.eye(ds.class_count)
    out = np.empty(ds.class_count)
    for h in range(ds.class_count):
        z = latent.draw(n, rng)
        cond = np.tile(onehot[h], (n, 1))
        samples, _ = forward(g_net, np.concatenate([z, cond], axis=1))
        out[h] = tv_distance(histogram(samples[:, 0], edges), data_masses[:, h])
    return out


def generated_class_ks(g_net: Mlp, latent: LatentSpec, ds: SyntheticDataset,
                       n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    edges = np.linspace(ds.value_range[0], ds.value_range[1], ds.bins + 1)
    data_masses = class_bin_masses(ds)
    onehot = np.eye(ds.class_count)
    out = np.empty(ds.class_count)
    for h in range(ds.class_count):
        z = latent.draw(n, rng)
        cond = np.tile(onehot[h], (n, 1))
        samples, _ = forward(g_net, np.concatenate([z, cond], axis=1))
        out[h] = ks_statistic(histogram(samples[:, 0], edges), data_masses[:, h])
    return out


def d_output_densities(d_net: Mlp, ds: SyntheticDataset, g_net: Mlp,
                       n: int, seed) -> tuple:
    """Histograms of D on matched, mismatched, and generated pairs.

    20 uniform bins on (0, 1); the latent width is read off the generator's
    input layer.
    """
    if n < 1:
        raise ValidationError("need at least one evaluation sample")
    rng = np.random.default_rng(seed)
    edges = np.linspace(0.0, 1.0, _D_BINS + 1)
    triples = sample_minibatch(ds, n, rng)
    x = np.stack([t.matched_outcome for t in triples])
    c = np.stack([t.condition for t in triples])
    x_mis = np.stack([t.mismatched_outcome for t in triples])
    latent_dim = g_net.weights[0].shape[0] - ds.class_count
    z = rng.standard_normal((n, latent_dim))
    x_gen, _ = forward(g_net, np.concatenate([z, c], axis=1))
    y_match, _ = forward(d_net, np.concatenate([x, c], axis=1))
    y_mis, _ = forward(d_net, np.concatenate([x_mis, c], axis=1))
    y_gen, _ = forward(d_net, np.concatenate([x_gen, c], axis=1))
    return (histogram(y_match, edges), histogram(y_mis, edges), histogram(y_gen, edges))


@dataclass(frozen=True)
class ExperimentReport:
    """Paired-training comparison on one seed: per-algorithm per-class TV,
    discriminator-output histogram triples, and the config echo."""

    seed: int
    config: dict
    tv: dict
    ks: dict
    d_histograms: dict

    def __post_init__(self):
        for alg, vals in self.tv.items():
            v = np.asarray(vals, dtype=float)
            if np.any(v < 0) or np.any(v > 1):
                raise ValidationError(f"TV values for {alg} must lie in [0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "tv": {k: np.asarray(v).tolist() for k, v in self.tv.items()},
            "ks": {k: np.asarray(v).tolist() for k, v in self.ks.items()},
            "d_histograms": {
                k: {name: h.to_json_dict() for name, h in
                    zip(("matched", "mismatched", "generated"), triple)}
                for k, triple in self.d_histograms.items()
            },
        }


def config_echo(cfg: TrainConfig) -> dict:
    return {
        "m": cfg.batch_size,
        "epsilon": cfg.learning_rate,
        "N": cfg.iterations,
        "seed": cfg.seed,
        "latent_dim": cfg.latent.dimension,
        "gan_int": {"enabled": cfg.gan_int.enabled, "alpha": cfg.gan_int.alpha,
                    "weight": cfg.gan_int.weight},
        "g_hidden": list(cfg.g_hidden),
        "d_hidden": list(cfg.d_hidden),
        "eval_every": cfg.eval_every,
        "eval_samples": cfg.eval_samples,
        "shared_pair": cfg.shared_pair,
    }


def mismatch_experiment(base: SyntheticDataset, override,
                        cfg: TrainConfig) -> ExperimentReport:
    """Train both algorithms on identical seeds and data with the mismatched
    sampler replaced by ``override``; returns the paired report."""
    ds = with_override(base, override)
    tv, ks, hists = {}, {}, {}
    for kind in (ObjectiveKind.GAN_CLS, ObjectiveKind.MODIFIED_GAN_CLS):
        run_cfg = replace(cfg, algorithm=kind)
        g_net, d_net, _ = train(ds, run_cfg)
        tv[kind.value] = generated_class_tv(g_net, run_cfg.latent, ds,
                                            run_cfg.eval_samples,
                                            [run_cfg.seed, _EVAL_SALT])
        ks[kind.value] = generated_class_ks(g_net, run_cfg.latent, ds,
                                            run_cfg.eval_samples,
                                            [run_cfg.seed, _EVAL_SALT])
        hists[kind.value] = d_output_densities(d_net, ds, g_net,
                                               run_cfg.eval_samples,
                                               [run_cfg.seed, _DENSITY_SALT])
    return ExperimentReport(seed=cfg.seed, config=config_echo(cfg),
                            tv=tv, ks=ks, d_histograms=hists)
