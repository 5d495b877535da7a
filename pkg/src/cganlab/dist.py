"""Discrete conditional distributions and synthetic Gaussian-mixture datasets.

The discrete types (JointPMF, GeneratorPMF) feed the closed-form objective
analysis; SyntheticDataset feeds the minibatch trainer with matched /
mismatched sample triples.  ``discretize`` bridges the two worlds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, ValidationError

SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class JointPMF:
    """Joint probability masses over (outcome bin x, condition h) pairs.

    ``masses[x, h]`` is the probability of outcome bin x together with
    condition h; the matrix is nonnegative and sums to one.
    """

    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValidationError("joint masses must form a non-empty 2-d matrix")
        if not np.all(np.isfinite(m)):
            raise ValidationError("joint masses must be finite")
        if np.any(m < 0):
            raise ValidationError("joint masses must be nonnegative")
        total = float(m.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValidationError(f"joint masses must sum to 1 (got {total!r}); "
                                  "use make_joint_pmf to normalize raw weights")
        object.__setattr__(self, "masses", _frozen(m))

    @property
    def x_count(self) -> int:
        return self.masses.shape[0]

    @property
    def condition_count(self) -> int:
        return self.masses.shape[1]

    def condition_marginal(self) -> np.ndarray:
        return self.masses.sum(axis=0)

    def conditionals(self) -> np.ndarray:
        """Per-condition outcome pmfs as columns.

        Conditions with zero marginal mass have no defined conditional; those
        columns come back uniform so callers can iterate without special
        cases (they carry no weight in any expectation).
        """
        marg = self.condition_marginal()
        safe = np.where(marg > 0, marg, 1.0)
        cond = self.masses / safe
        return np.where(marg > 0, cond, 1.0 / self.x_count)


@dataclass(frozen=True)
class GeneratorPMF:
    """Per-condition generator pmf plus the condition marginal it is paired
    with; ``joint()`` gives the induced joint over (x, h)."""

    conditional: np.ndarray
    condition_marginal: np.ndarray

    def __post_init__(self):
        c = np.array(self.conditional, dtype=float)
        w = np.array(self.condition_marginal, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValidationError("generator conditional must be a 2-d matrix")
        if w.ndim != 1 or w.shape[0] != c.shape[1]:
            raise ValidationError("condition marginal length must match condition count")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(w))):
            raise ValidationError("generator pmf entries must be finite")
        if np.any(c < 0) or np.any(w < 0):
            raise ValidationError("generator pmf entries must be nonnegative")
        colsums = c.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > SUM_TOL):
            raise ValidationError("each generator conditional column must sum to 1")
        if abs(float(w.sum()) - 1.0) > SUM_TOL:
            raise ValidationError("condition marginal must sum to 1")
        object.__setattr__(self, "conditional", _frozen(c))
        object.__setattr__(self, "condition_marginal", _frozen(w))

    @property
    def x_count(self) -> int:
        return self.conditional.shape[0]

    @property
    def condition_count(self) -> int:
        return self.conditional.shape[1]

    def joint(self) -> np.ndarray:
        return self.conditional * self.condition_marginal[None, :]


def make_joint_pmf(masses) -> JointPMF:
    """Normalize a nonnegative weight matrix into a JointPMF.

    Raises ValidationError on any negative entry or an all-zero matrix.
    """
    m = np.array(masses, dtype=float)
    if m.ndim != 2:
        raise ValidationError("joint weights must form a 2-d matrix")
    if not np.all(np.isfinite(m)):
        raise ValidationError("joint weights must be finite")
    if np.any(m < 0):
        raise ValidationError("joint weights must be nonnegative")
    total = float(m.sum())
    if total <= 0.0:
        raise ValidationError("joint weights must have positive total mass")
    return JointPMF(m / total)


def _check_rule(rule, h_count: int) -> np.ndarray:
    r = np.asarray(rule, dtype=int)
    if r.shape != (h_count,):
        raise ValidationError(f"mismatch rule must have length {h_count}")
    if np.any((r < 0) | (r >= h_count)):
        raise ValidationError("mismatch rule entries must index a condition class")
    if np.any(r == np.arange(h_count)):
        raise ValidationError("mismatch rule must not map a condition to itself")
    return r


def mismatch_joint(data: JointPMF, rule: Sequence[int]) -> JointPMF:
    """Build the mismatched joint: outcomes of class rule(h) paired with h.

    The output keeps the data's condition marginal and swaps in the
    conditional of the designated source class.
    """
    r = _check_rule(rule, data.condition_count)
    marg = data.condition_marginal()
    if np.any((marg > 0) & (marg[r] <= 0)):
        raise ValidationError("mismatch source class has zero probability; "
                              "its conditional is undefined")
    safe = np.where(marg > 0, marg, 1.0)
    cond = data.masses / safe
    out = cond[:, r] * marg[None, :]
    return JointPMF(out)


def swap_rule(h_count: int) -> np.ndarray:
    """Pairwise exchange 0<->1, 2<->3, ...; needs an even class count."""
    if h_count < 2 or h_count % 2 != 0:
        raise ConfigurationError("swap rule needs an even number of classes >= 2")
    r = np.arange(h_count)
    r[0::2] += 1
    r[1::2] -= 1
    return r


def cycle_rule(h_count: int) -> np.ndarray:
    if h_count < 2:
        raise ConfigurationError("cycle rule needs at least 2 classes")
    return (np.arange(h_count) + 1) % h_count


def derangement_rule(h_count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random fixed-point-free permutation drawn from ``rng``."""
    if h_count < 2:
        raise ConfigurationError("a derangement needs at least 2 classes")
    idx = np.arange(h_count)
    while True:
        perm = rng.permutation(h_count)
        if not np.any(perm == idx):
            return perm


def parse_rule(spec, h_count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Accepts "swap" | "cycle" | "derangement" | explicit index array."""
    if isinstance(spec, str):
        if spec == "swap":
            return swap_rule(h_count)
        if spec == "cycle":
            return cycle_rule(h_count)
        if spec == "derangement":
            if rng is None:
                rng = np.random.default_rng(0)
            return derangement_rule(h_count, rng)
        raise ConfigurationError(f"unknown mismatch_rule {spec!r}")
    return _check_rule(spec, h_count)


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of isotropic Gaussians; weights are normalized on construction."""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        mu = np.array(self.means, dtype=float)
        if mu.ndim == 0:
            mu = mu.reshape(1, 1)
        elif mu.ndim == 1:
            mu = mu[:, None]
        sd = np.array(self.stds, dtype=float).ravel()
        if w.size < 1 or mu.shape[0] != w.size or sd.size != w.size:
            raise ValidationError("mixture weights/means/stds must share one length")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(sd))):
            raise ValidationError("mixture parameters must be finite")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("mixture weights must be nonnegative with positive sum")
        if np.any(sd <= 0):
            raise ValidationError("mixture std-devs must be positive")
        object.__setattr__(self, "weights", _frozen(w / w.sum()))
        object.__setattr__(self, "means", _frozen(mu))
        object.__setattr__(self, "stds", _frozen(sd))

    @property
    def component_count(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def _cumw(self) -> np.ndarray:
        return np.cumsum(self.weights)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        comp = np.searchsorted(self._cumw, u, side="right")
        comp = np.minimum(comp, self.component_count - 1)
        eps = rng.standard_normal((n, self.dim))
        return self.means[comp] + self.stds[comp, None] * eps

    def bin_masses(self, edges: np.ndarray) -> np.ndarray:
        """Exact bin probabilities on 1-d edges; tail mass folds into the end
        bins."""
        if self.dim != 1:
            raise ValidationError("bin_masses is defined for 1-d mixtures only")
        z = (edges[None, :] - self.means[:, 0][:, None]) / self.stds[:, None]
        cdf = self.weights @ ndtr(z)
        masses = np.diff(cdf)
        masses[0] += cdf[0]
        masses[-1] += 1.0 - cdf[-1]
        return masses


def mixture_from_spec(doc: dict) -> GaussianMixture:
    for key in ("weights", "means", "stds"):
        if key not in doc:
            raise ConfigurationError(f"missing config field: {key}")
    return GaussianMixture(doc["weights"], doc["means"], doc["stds"])


@dataclass(frozen=True)
class MinibatchTriple:
    """One matched outcome, its one-hot condition, and a mismatched outcome."""

    matched_outcome: np.ndarray
    condition: np.ndarray
    mismatched_outcome: np.ndarray


@dataclass(frozen=True)
class SyntheticDataset:
    """Per-class continuous samplers plus the matched/mismatched pairing rule.

    ``mismatch_rule[c]`` names the class whose outcomes serve as mismatched
    samples for condition c.  ``mismatch_override``, when present, replaces
    the mismatched sampler for condition c outright (the rule is ignored),
    which is how deliberately dissimilar mismatched distributions are built.
    ``bins``/``value_range`` define the histogram grid used for evaluation
    and discretization defaults.
    """

    classes: tuple[GaussianMixture, ...]
    mismatch_rule: np.ndarray
    mismatch_override: tuple[GaussianMixture, ...] | None = None
    bins: int = 20
    value_range: tuple[float, float] = (-4.0, 4.0)

    def __post_init__(self):
        classes = tuple(self.classes)
        if len(classes) < 1:
            raise ValidationError("dataset needs at least one condition class")
        dim = classes[0].dim
        if any(c.dim != dim for c in classes):
            raise ValidationError("all condition classes must share one outcome dimension")
        rule = _check_rule(self.mismatch_rule, len(classes))
        override = self.mismatch_override
        if override is not None:
            override = tuple(override)
            if len(override) != len(classes):
                raise ValidationError("mismatch_override must supply one sampler per condition")
            if any(o.dim != dim for o in override):
                raise ValidationError("mismatch_override dimension must match the data")
        if int(self.bins) < 2:
            raise ValidationError("bins must be >= 2")
        lo, hi = float(self.value_range[0]), float(self.value_range[1])
        if not lo < hi:
            raise ValidationError("value_range must satisfy lo < hi")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "mismatch_rule", _frozen(rule))
        object.__setattr__(self, "mismatch_override", override)
        object.__setattr__(self, "bins", int(self.bins))
        object.__setattr__(self, "value_range", (lo, hi))

    @property
    def class_count(self) -> int:
        return len(self.classes)

    @property
    def dim(self) -> int:
        return self.classes[0].dim

    @cached_property
    def _packed_classes(self):
        return _pack_mixtures(self.classes)

    @cached_property
    def _packed_override(self):
        if self.mismatch_override is None:
            return None
        return _pack_mixtures(self.mismatch_override)


def _pack_mixtures(mixtures: Sequence[GaussianMixture]):
    # Pad per-class component tables to a common width so a whole batch can
    # be drawn with index arithmetic instead of per-sample branching.
    kmax = max(m.component_count for m in mixtures)
    dim = mixtures[0].dim
    cumw = np.full((len(mixtures), kmax), 2.0)
    means = np.zeros((len(mixtures), kmax, dim))
    stds = np.ones((len(mixtures), kmax))
    for i, m in enumerate(mixtures):
        k = m.component_count
        cumw[i, :k] = np.cumsum(m.weights)
        means[i, :k] = m.means
        stds[i, :k] = m.stds
        means[i, k:] = m.means[-1]
        stds[i, k:] = m.stds[-1]
    return cumw, means, stds


def _packed_draw(packed, class_idx: np.ndarray, u: np.ndarray, eps: np.ndarray) -> np.ndarray:
    cumw, means, stds = packed
    comp = np.sum(u[:, None] > cumw[class_idx], axis=1)
    return means[class_idx, comp] + stds[class_idx, comp][:, None] * eps


def sample_minibatch(ds: SyntheticDataset, m: int, rng: np.random.Generator,
                     shared_pair: bool = False) -> list[MinibatchTriple]:
    """Draw m (matched, condition, mismatched) triples.

    The matched class of each triple is uniform over classes; the mismatched
    outcome comes from ``mismatch_rule`` (or the override sampler).  With
    ``shared_pair`` every triple in the batch shares one matched class, the
    alternative reading of the batch protocol.
    """
    if m < 1:
        raise ValidationError("batch size must be >= 1")
    if ds.class_count < 2:
        raise ConfigurationError("minibatch sampling needs at least 2 condition classes")
    h_count = ds.class_count
    if shared_pair:
        c1 = np.full(m, int(rng.integers(h_count)))
    else:
        c1 = rng.integers(0, h_count, size=m)
    u1 = rng.random(m)
    e1 = rng.standard_normal((m, ds.dim))
    matched = _packed_draw(ds._packed_classes, c1, u1, e1)
    u2 = rng.random(m)
    e2 = rng.standard_normal((m, ds.dim))
    if ds.mismatch_override is not None:
        mismatched = _packed_draw(ds._packed_override, c1, u2, e2)
    else:
        mismatched = _packed_draw(ds._packed_classes, ds.mismatch_rule[c1], u2, e2)
    onehot = np.eye(h_count)
    return [MinibatchTriple(matched[i], onehot[c1[i]], mismatched[i]) for i in range(m)]


def class_bin_masses(ds: SyntheticDataset, bins: int | None = None,
                     value_range: tuple[float, float] | None = None) -> np.ndarray:
    """Exact per-class bin pmfs as columns of a (bins, classes) matrix."""
    bins = ds.bins if bins is None else int(bins)
    lo, hi = ds.value_range if value_range is None else value_range
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    if not lo < hi:
        raise ValidationError("range must satisfy lo < hi")
    edges = np.linspace(lo, hi, bins + 1)
    return np.stack([c.bin_masses(edges) for c in ds.classes], axis=1)


def discretize(ds: SyntheticDataset, bins: int, value_range: tuple[float, float]) -> JointPMF:
    """Exact binned joint of the dataset under a uniform condition marginal."""
    cols = class_bin_masses(ds, bins, value_range)
    return make_joint_pmf(cols / ds.class_count)


def dataset_from_spec(doc, seed: int | None = None) -> SyntheticDataset:
    """Build a dataset from its JSON document (dict, JSON string, or path).

    Fields: classes (list of mixtures), range, bins, mismatch_rule
    ("swap" | "cycle" | "derangement" | explicit list), optional
    mismatch_override (list of mixtures, or "identity" for own-class
    samplers).  ``seed`` feeds the derangement default.
    """
    if isinstance(doc, (str, Path)):
        p = Path(doc)
        if p.exists():
            doc = json.loads(p.read_text())
        else:
            doc = json.loads(str(doc))
    if not isinstance(doc, dict):
        raise ConfigurationError("dataset spec must be a JSON object")
    if "classes" not in doc:
        raise ConfigurationError("missing config field: classes")
    classes = tuple(mixture_from_spec(c) for c in doc["classes"])
    rng = np.random.default_rng(0 if seed is None else seed)
    rule = parse_rule(doc.get("mismatch_rule", "derangement"), len(classes), rng)
    override = doc.get("mismatch_override")
    if override == "identity":
        override = classes
    elif override is not None:
        override = tuple(mixture_from_spec(o) for o in override)
    lo, hi = doc.get("range", (-4.0, 4.0))
    return SyntheticDataset(classes=classes, mismatch_rule=rule,
                            mismatch_override=override,
                            bins=doc.get("bins", 20), value_range=(lo, hi))


def with_override(ds: SyntheticDataset, override) -> SyntheticDataset:
    """Return a copy of ``ds`` whose mismatched sampler is replaced.

    ``override`` may be None (keep as-is), "identity" (the condition's own
    class sampler, the matched~mismatched regime), or one mixture per class.
    """
    if override is None:
        return ds
    if override == "identity":
        return replace(ds, mismatch_override=ds.classes)
    mixtures = tuple(o if isinstance(o, GaussianMixture) else mixture_from_spec(o)
                     for o in override)
    return replace(ds, mismatch_override=mixtures)
