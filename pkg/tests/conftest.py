import numpy as np

from cganlab import GeneratorPMF, JointPMF


def random_generator(p_d: JointPMF, rng) -> GeneratorPMF:
    cond = rng.dirichlet(np.ones(p_d.x_count), size=p_d.condition_count).T
    return GeneratorPMF(cond, p_d.condition_marginal())


def random_joint(x_count: int, h_count: int, rng) -> JointPMF:
    w = rng.dirichlet(np.ones(h_count))
    cond = rng.dirichlet(np.ones(x_count), size=h_count).T
    return JointPMF(cond * w[None, :])


def feasible_gancls_pair(x_count: int, h_count: int, rng):
    """(p_d, p_mis) with 2*p_d(x|h) - p_mis(x|h) >= 0 everywhere.

    p_mis = p_d * (1 + eps) with weighted-mean-zero eps in [-0.9, 0.9], so
    every column still sums to one and the closed form stays on the simplex.
    """
    p_d = random_joint(x_count, h_count, rng)
    cond_d = p_d.conditionals()
    eps = rng.uniform(-0.45, 0.45, size=cond_d.shape)
    eps -= (cond_d * eps).sum(axis=0, keepdims=True)
    cond_m = cond_d * (1.0 + eps)
    cond_m /= cond_m.sum(axis=0, keepdims=True)
    p_mis = JointPMF(cond_m * p_d.condition_marginal()[None, :])
    assert np.all(2.0 * cond_d - p_mis.conditionals() >= 0)
    return p_d, p_mis


def two_class_dataset(means=(-2.0, 2.0), std=0.5, override=None):
    from cganlab.dist import GaussianMixture, SyntheticDataset
    classes = tuple(GaussianMixture([1.0], [m], [std]) for m in means)
    if override is not None and override != "identity":
        override = tuple(GaussianMixture([1.0], [m], [std]) for m in override)
    ds = SyntheticDataset(classes=classes, mismatch_rule=[1, 0])
    if override is not None:
        from cganlab.dist import with_override
        ds = with_override(ds, override)
    return ds
