"""Objective values, closed-form optimal discriminators, and divergences.

All four minimax objectives reduce, after grouping, to
``sum(a * log D) + sum(b * log(1-D))`` for kind-specific mixtures (a, b) of
the matched / mismatched / generated joints.  The pointwise maximizer of
``a*log(y) + b*log(1-y)`` is ``y = a/(a+b)``, and the value at that
maximizer is ``2*JSD(a || b) - log 4``; everything below is built from
those two facts applied cell by cell on the (x, h) grid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dist import GeneratorPMF, JointPMF, _frozen
from .errors import ValidationError

D_CLAMP = 1e-12
LOG2 = math.log(2.0)
LOG4 = math.log(4.0)


class ObjectiveKind(enum.Enum):
    ORIGINAL_GAN = "original"
    CONDITIONAL_GAN = "cgan"
    GAN_CLS = "gancls"
    MODIFIED_GAN_CLS = "modified"

    @property
    def needs_mismatched(self) -> bool:
        return self in (ObjectiveKind.GAN_CLS, ObjectiveKind.MODIFIED_GAN_CLS)

    @classmethod
    def parse(cls, name: str) -> "ObjectiveKind":
        aliases = {
            "original": cls.ORIGINAL_GAN,
            "gan": cls.ORIGINAL_GAN,
            "cgan": cls.CONDITIONAL_GAN,
            "conditional": cls.CONDITIONAL_GAN,
            "gancls": cls.GAN_CLS,
            "gan-cls": cls.GAN_CLS,
            "modified": cls.MODIFIED_GAN_CLS,
            "modified-gancls": cls.MODIFIED_GAN_CLS,
            "modified_gancls": cls.MODIFIED_GAN_CLS,
        }
        key = str(name).strip().lower()
        if key not in aliases:
            raise ValidationError(f"unknown objective kind {name!r}")
        return aliases[key]


@dataclass(frozen=True)
class DiscriminatorTable:
    """Discriminator scores D(x, h) on the grid, clamped into
    [1e-12, 1-1e-12] so every log term stays finite."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError("discriminator values must form a 2-d matrix")
        if not np.all(np.isfinite(v)):
            raise ValidationError("discriminator values must be finite")
        object.__setattr__(self, "values", _frozen(np.clip(v, D_CLAMP, 1.0 - D_CLAMP)))


def _check_instance(kind: ObjectiveKind, p_d: JointPMF,
                    p_mis: JointPMF | None, p_g: GeneratorPMF) -> None:
    shape = p_d.masses.shape
    if kind.needs_mismatched:
        if p_mis is None:
            raise ValidationError(f"{kind.value} requires a mismatched distribution")
        if p_mis.masses.shape != shape:
            raise ValidationError("mismatched distribution shape differs from the data")
    elif p_mis is not None:
        raise ValidationError(f"{kind.value} takes no mismatched distribution")
    if (p_g.x_count, p_g.condition_count) != shape:
        raise ValidationError("generator shape differs from the data")


def _value_pair(kind: ObjectiveKind, pd: np.ndarray, pmis: np.ndarray | None,
                pg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The (a, b) mixtures such that V = sum(a log D) + sum(b log(1-D))."""
    if kind is ObjectiveKind.GAN_CLS:
        return pd, 0.5 * (pmis + pg)
    if kind is ObjectiveKind.MODIFIED_GAN_CLS:
        return 0.5 * (pd + pmis), 0.5 * (pg + pmis)
    return pd, pg


def value(kind: ObjectiveKind, p_d: JointPMF, p_mis: JointPMF | None,
          p_g: GeneratorPMF, d: DiscriminatorTable) -> float:
    """Exact discrete expectation V(D, G) for the given objective."""
    _check_instance(kind, p_d, p_mis, p_g)
    if d.values.shape != p_d.masses.shape:
        raise ValidationError("discriminator shape differs from the distributions")
    a, b = _value_pair(kind, p_d.masses, None if p_mis is None else p_mis.masses,
                       p_g.joint())
    return float(np.sum(a * np.log(d.values)) + np.sum(b * np.log1p(-d.values)))


def optimal_discriminator(kind: ObjectiveKind, p_d: JointPMF,
                          p_mis: JointPMF | None, p_g: GeneratorPMF) -> DiscriminatorTable:
    """Pointwise argmax of V over D for a fixed generator.

    Cells where all participating masses vanish get the symmetric value 1/2
    (the objective does not depend on D there).
    """
    _check_instance(kind, p_d, p_mis, p_g)
    a, b = _value_pair(kind, p_d.masses, None if p_mis is None else p_mis.masses,
                       p_g.joint())
    denom = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(denom > 0, a / np.where(denom > 0, denom, 1.0), 0.5)
    return DiscriminatorTable(d)


def kl(p, q) -> float:
    """Kullback-Leibler divergence sum(p log(p/q)), with 0*log(0/q) = 0.

    Returns +inf when q has a zero where p has mass (no absolute continuity).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.ndim != 1 or q.ndim != 1 or p.shape != q.shape:
        raise ValidationError("kl expects two vectors of equal length")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValidationError("kl inputs must be finite")
    if np.any(p < 0) or np.any(q < 0):
        raise ValidationError("kl inputs must be nonnegative")
    support = p > 0
    if np.any(support & (q == 0)):
        return math.inf
    ps = p[support]
    return float(np.sum(ps * np.log(ps / q[support])))


def jsd(p, q) -> float:
    """Jensen-Shannon divergence, symmetric and bounded by log 2."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.ndim != 1 or q.ndim != 1 or p.shape != q.shape:
        raise ValidationError("jsd expects two vectors of equal length")
    m = 0.5 * (p + q)
    val = 0.5 * kl(p, m) + 0.5 * kl(q, m)
    return min(max(val, 0.0), LOG2)


def _value_at_optimal(kind: ObjectiveKind, pd: np.ndarray,
                      pmis: np.ndarray | None, pg_joint: np.ndarray) -> float:
    a, b = _value_pair(kind, pd, pmis, pg_joint)
    return 2.0 * jsd(a.ravel(), b.ravel()) - LOG4


def value_at_optimal_d(kind: ObjectiveKind, p_d: JointPMF,
                       p_mis: JointPMF | None, p_g: GeneratorPMF) -> float:
    """V at the optimal discriminator, via the identity 2*JSD(a||b) - log 4.

    Agrees with ``value(kind, ..., optimal_discriminator(kind, ...))`` and is
    bounded below by -log 4, with equality exactly when a = b.
    """
    _check_instance(kind, p_d, p_mis, p_g)
    return _value_at_optimal(kind, p_d.masses,
                             None if p_mis is None else p_mis.masses, p_g.joint())
