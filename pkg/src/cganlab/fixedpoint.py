"""Constrained minimization of V(D*_G, G) over the generator's simplexes.

The generator's free variables are its per-condition pmf columns.  The
objective at the optimal discriminator is 2*JSD(a || b) - log 4 with the
kind-specific mixtures (a, b); its gradient with respect to the generator
joint g is ``s * log(b/m)`` where m = (a+b)/2 and s = db/dg, so a projected
gradient descent with backtracking is exact and cheap at these sizes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dist import GeneratorPMF, JointPMF
from .errors import ConfigurationError, ValidationError
from .objective import LOG4, ObjectiveKind, _check_instance, _value_at_optimal, _value_pair

ARMIJO_C = 1e-4
GRID_LIMIT = 10_000_000
_TINY = 1e-18


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 5000
    tol_value: float = 1e-12
    tol_grad: float = 1e-10
    step_size: float = 0.1
    restarts: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.tol_value <= 0 or self.tol_grad <= 0 or self.step_size <= 0:
            raise ValidationError("tolerances and step_size must be positive")
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    kind: ObjectiveKind
    argmin: GeneratorPMF
    value: float
    iterations: int
    converged: bool
    feasible_closed_form: bool
    restart_values: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "value": self.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "feasible_closed_form": self.feasible_closed_form,
            "argmin": self.argmin.conditional.tolist(),
            "condition_marginal": self.argmin.condition_marginal.tolist(),
            "restart_values": list(self.restart_values),
        }


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {p >= 0, sum(p) = 1} by sort-and-threshold."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValidationError("project_simplex expects a vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError("project_simplex expects finite entries")
    return _project_columns(v[:, None])[:, 0]


def _project_columns(q: np.ndarray) -> np.ndarray:
    # Column-wise simplex projection, vectorized over conditions.
    u = -np.sort(-q, axis=0)
    css = np.cumsum(u, axis=0)
    j = np.arange(1, q.shape[0] + 1)[:, None]
    ok = u + (1.0 - css) / j > 0
    rho = q.shape[0] - 1 - np.argmax(ok[::-1], axis=0)
    lam = (1.0 - css[rho, np.arange(q.shape[1])]) / (rho + 1.0)
    return np.maximum(q + lam[None, :], 0.0)


def closed_form_conditionals(kind: ObjectiveKind, p_d: JointPMF,
                             p_mis: JointPMF | None) -> np.ndarray:
    """The unconstrained fixed-point formula, column per condition.

    GAN-CLS: 2*p_d(x|h) - p_mis(x|h), which may leave the simplex; all other
    kinds: p_d(x|h).
    """
    if kind is ObjectiveKind.GAN_CLS:
        if p_mis is None:
            raise ValidationError("gancls requires a mismatched distribution")
        return 2.0 * p_d.conditionals() - p_mis.conditionals()
    return p_d.conditionals()


def closed_form_feasible(kind: ObjectiveKind, p_d: JointPMF,
                         p_mis: JointPMF | None) -> bool:
    """True iff the closed-form target is a valid pmf on every condition
    that carries data mass."""
    target = closed_form_conditionals(kind, p_d, p_mis)
    active = p_d.condition_marginal() > 0
    return bool(np.all(target[:, active] >= -1e-12))


def _value_and_grad(kind: ObjectiveKind, pd: np.ndarray, pmis: np.ndarray | None,
                    w: np.ndarray, q: np.ndarray):
    g = q * w[None, :]
    a, b = _value_pair(kind, pd, pmis, g)
    scale = 1.0 if kind in (ObjectiveKind.ORIGINAL_GAN, ObjectiveKind.CONDITIONAL_GAN) else 0.5
    m = 0.5 * (a + b)
    safe_m = np.maximum(m, _TINY)
    term_a = np.where(a > 0, a * np.log(np.maximum(a, _TINY) / safe_m), 0.0).sum()
    term_b = np.where(b > 0, b * np.log(np.maximum(b, _TINY) / safe_m), 0.0).sum()
    grad = scale * np.log(np.maximum(b, _TINY) / safe_m) * w[None, :]
    return float(term_a + term_b - LOG4), grad


def _grad(kind: ObjectiveKind, pd: np.ndarray, pmis: np.ndarray | None,
          w: np.ndarray, q: np.ndarray) -> np.ndarray:
    return _value_and_grad(kind, pd, pmis, w, q)[1]


def _descend(kind: ObjectiveKind, pd: np.ndarray, pmis: np.ndarray | None,
             w: np.ndarray, q0: np.ndarray, opts: SolveOptions):
    """Projected gradient descent from q0; returns (q, value, iters, trace).

    The descent direction is the gradient rescaled by the inverse condition
    marginal (the objective is a marginal-weighted sum of per-condition
    terms, so this equalizes the column curvatures); the initial trial step
    is Barzilai-Borwein with Armijo halving as the safeguard.
    """
    value = lambda q: _value_at_optimal(kind, pd, pmis, q * w[None, :])
    w_safe = np.where(w > 0, w, 1.0)[None, :]
    q = q0
    f = value(q)
    grad = _grad(kind, pd, pmis, w, q)
    trace = [f]
    step = opts.step_size
    prev_q = prev_dir = None
    flat = 0
    iters = 0
    for iters in range(1, opts.max_iters + 1):
        pg = q - _project_columns(q - grad)
        if np.max(np.abs(pg)) <= opts.tol_grad:
            iters -= 1
            break
        direction = grad / w_safe
        if prev_q is not None:
            s = q - prev_q
            y = direction - prev_dir
            sy = float(np.sum(s * y))
            if sy > 0:
                step = float(np.sum(s * s)) / sy
        step = min(max(step, 1e-10), 1e3)
        accepted = False
        first_cand = first_f = None
        for _ in range(120):
            cand = _project_columns(q - step * direction)
            gdot = float(np.sum(grad * (cand - q)))
            if gdot < 0.0:
                f_cand = value(cand)
                if first_cand is None:
                    first_cand, first_f = cand, f_cand
                if f_cand <= f + ARMIJO_C * gdot:
                    accepted = True
                    break
            elif not np.any(cand != q):
                break
            step *= 0.5
        if accepted:
            improvement = f - f_cand
            flat = flat + 1 if improvement < opts.tol_value else 0
        elif first_cand is not None and first_f <= f:
            # Below the value's float resolution: take the non-increasing BB
            # step anyway; the analytic gradient still contracts the iterate.
            cand, f_cand = first_cand, first_f
            flat += 1
        else:
            break
        if flat > 50:
            break
        prev_q, prev_dir = q, direction
        q, f = cand, f_cand
        grad = _grad(kind, pd, pmis, w, q)
        trace.append(f)
    return q, f, iters, trace


def solve_generator(kind: ObjectiveKind, p_d: JointPMF,
                    p_mis: JointPMF | None = None,
                    opts: SolveOptions | None = None) -> SolveReport:
    """Minimize V(D*_G, G) over per-condition simplexes, best of restarts.

    Restart 0 starts at uniform conditionals; the rest start at Dirichlet(1)
    draws keyed by (seed, restart index).  Non-convergence is reported via
    the ``converged`` flag, never raised.
    """
    opts = SolveOptions() if opts is None else opts
    w = p_d.condition_marginal()
    probe = GeneratorPMF(np.full(p_d.masses.shape, 1.0 / p_d.x_count), w)
    _check_instance(kind, p_d, p_mis, probe)
    pd = p_d.masses
    pmis = None if p_mis is None else p_mis.masses
    x_count, h_count = pd.shape

    best = None
    restart_values = []
    for r in range(opts.restarts):
        if r == 0:
            q0 = np.full((x_count, h_count), 1.0 / x_count)
        else:
            rng = np.random.default_rng([opts.seed, r])
            q0 = rng.dirichlet(np.ones(x_count), size=h_count).T
        q, f, iters, _ = _descend(kind, pd, pmis, w, q0, opts)
        restart_values.append(f)
        if best is None or f < best[1]:
            best = (q, f, iters)

    q, f, iters = best
    grad = _grad(kind, pd, pmis, w, q)
    pg_norm = float(np.max(np.abs(q - _project_columns(q - grad))))
    return SolveReport(
        kind=kind,
        argmin=GeneratorPMF(q, w),
        value=f,
        iterations=iters,
        converged=pg_norm <= opts.tol_grad,
        feasible_closed_form=closed_form_feasible(kind, p_d, p_mis),
        restart_values=tuple(restart_values),
    )


def random_instance(x_count: int, h_count: int, rng: np.random.Generator,
                    disjoint_mismatch: bool = False) -> tuple[JointPMF, JointPMF]:
    """Random full-support (p_d, p_mis) pair sharing one condition marginal.

    With ``disjoint_mismatch`` the data occupies the lower outcome bins and
    the mismatched distribution the upper ones, so their supports never
    overlap.
    """
    if x_count < 2 or h_count < 1:
        raise ValidationError("random instances need >= 2 outcome bins and >= 1 condition")
    w = rng.dirichlet(np.ones(h_count))
    if disjoint_mismatch:
        split = x_count // 2
        if split < 1 or split >= x_count:
            raise ValidationError("disjoint instances need >= 2 outcome bins")
        cond_d = np.zeros((x_count, h_count))
        cond_m = np.zeros((x_count, h_count))
        cond_d[:split] = rng.dirichlet(np.ones(split), size=h_count).T
        cond_m[split:] = rng.dirichlet(np.ones(x_count - split), size=h_count).T
    else:
        cond_d = rng.dirichlet(np.ones(x_count), size=h_count).T
        cond_m = rng.dirichlet(np.ones(x_count), size=h_count).T
    return JointPMF(cond_d * w[None, :]), JointPMF(cond_m * w[None, :])


def simplex_lattice(n_coords: int, step: float) -> np.ndarray:
    """All pmf vectors with entries that are multiples of ``step``."""
    k = _lattice_resolution(step)
    count = math.comb(k + n_coords - 1, n_coords - 1)
    if count > GRID_LIMIT:
        raise ConfigurationError(f"lattice would hold {count} points (limit {GRID_LIMIT})")
    pts = np.empty((count, n_coords))
    for i, bars in enumerate(itertools.combinations(range(k + n_coords - 1), n_coords - 1)):
        prev = -1
        for j, bar in enumerate(bars):
            pts[i, j] = bar - prev - 1
            prev = bar
        pts[i, n_coords - 1] = k + n_coords - 2 - prev
    return pts / k


def _lattice_resolution(step: float) -> int:
    if not 0.0 < step <= 1.0:
        raise ValidationError("lattice step must lie in (0, 1]")
    k = int(round(1.0 / step))
    if abs(k * step - 1.0) > 1e-9:
        raise ValidationError("lattice step must divide 1 evenly")
    return k


def _batch_values(kind: ObjectiveKind, pd_flat: np.ndarray, pmis_flat: np.ndarray | None,
                  joints: np.ndarray) -> np.ndarray:
    # joints: (N, X*H) candidate generator joints; returns value per row.
    if kind is ObjectiveKind.GAN_CLS:
        a = pd_flat[None, :]
        b = 0.5 * (pmis_flat[None, :] + joints)
    elif kind is ObjectiveKind.MODIFIED_GAN_CLS:
        a = 0.5 * (pd_flat + pmis_flat)[None, :]
        b = 0.5 * (joints + pmis_flat[None, :])
    else:
        a = pd_flat[None, :]
        b = joints
    m = 0.5 * (a + b)
    safe_m = np.maximum(m, _TINY)
    term_a = np.where(a > 0, a * np.log(np.maximum(a, _TINY) / safe_m), 0.0).sum(axis=1)
    term_b = np.where(b > 0, b * np.log(np.maximum(b, _TINY) / safe_m), 0.0).sum(axis=1)
    return term_a + term_b - LOG4


def grid_oracle(kind: ObjectiveKind, p_d: JointPMF, p_mis: JointPMF | None,
                step: float) -> tuple[float, GeneratorPMF]:
    """Exhaustive lattice minimum of V(D*_G, G); the brute-force oracle.

    Enumerates the product of per-condition step-lattices (capped at 10^7
    points) and returns the first lattice point attaining the minimum.
    """
    w = p_d.condition_marginal()
    probe = GeneratorPMF(np.full(p_d.masses.shape, 1.0 / p_d.x_count), w)
    _check_instance(kind, p_d, p_mis, probe)
    x_count, h_count = p_d.masses.shape
    lattice = simplex_lattice(x_count, step)
    per = lattice.shape[0]
    total = per ** h_count
    if total > GRID_LIMIT:
        raise ConfigurationError(f"lattice product would hold {total} points (limit {GRID_LIMIT})")

    pd_flat = p_d.masses.ravel()
    pmis_flat = None if p_mis is None else p_mis.masses.ravel()
    best_value = math.inf
    best_index = -1
    chunk = 65536
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        q = np.empty((idx.size, x_count, h_count))
        rest = idx
        for h in range(h_count):
            q[:, :, h] = lattice[rest % per]
            rest = rest // per
        joints = (q * w[None, None, :]).reshape(idx.size, -1)
        vals = _batch_values(kind, pd_flat, pmis_flat, joints)
        i = int(np.argmin(vals))
        if vals[i] < best_value:
            best_value = float(vals[i])
            best_index = int(idx[i])

    q_best = np.empty((x_count, h_count))
    rest = best_index
    for h in range(h_count):
        q_best[:, h] = lattice[rest % per]
        rest = rest // per
    return best_value, GeneratorPMF(q_best, w)
