"""Batch experiment runner: fixed points, trainings, paired comparisons.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.  Every run
writes a manifest next to its results; report paths emit CSV/JSON plus
rendered PNG figures.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dist import class_bin_masses, dataset_from_spec, make_joint_pmf, \
    mismatch_joint, parse_rule, sample_minibatch
from .errors import ConfigurationError, TrainingDiverged, ValidationError
from .evaluate import d_output_densities, generated_class_ks, histogram, \
    mismatch_experiment
from .figures import save_class_histogram_figure, save_compare_figure, \
    save_d_density_figure, save_fixedpoint_figure, save_history_figure
from .fixedpoint import SolveOptions, closed_form_conditionals, random_instance, \
    solve_generator
from .nn import forward, init_mlp, to_checkpoint
from .objective import LOG4, ObjectiveKind, jsd, optimal_discriminator, value, \
    value_at_optimal_d
from .train import train, train_config_from_spec

_SUMMARY_FLOAT = "{:.12g}"


def _require(doc: dict, field: str):
    if field not in doc:
        raise ConfigurationError(f"missing config field: {field}")
    return doc[field]


def _load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    return doc


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, subcommand: str, config_path, seed, config: dict) -> None:
    _write_json(out / "manifest.json", {
        "subcommand": subcommand,
        "config_path": str(config_path),
        "out_dir": str(out),
        "seed": seed,
        "version": __version__,
        "config": config,
    })


def _fixedpoint_instances(config: dict, seed: int):
    """Yield (p_d, p_mis) pairs from inline arrays or a random-instance spec."""
    kind = ObjectiveKind.parse(_require(config, "kind"))
    if "p_d" in config:
        p_d = make_joint_pmf(np.asarray(config["p_d"], dtype=float))
        p_mis = None
        if kind.needs_mismatched:
            if "p_mis" in config:
                p_mis = make_joint_pmf(np.asarray(config["p_mis"], dtype=float))
            elif "mismatch_rule" in config:
                rule = parse_rule(config["mismatch_rule"], p_d.condition_count,
                                  np.random.default_rng(seed))
                p_mis = mismatch_joint(p_d, rule)
            else:
                raise ConfigurationError("missing config field: p_mis")
        return kind, [(p_d, p_mis)]
    if "random" in config:
        spec = config["random"]
        x_count = int(_require(spec, "x_bins"))
        h_count = int(_require(spec, "conditions"))
        count = int(spec.get("count", 1))
        disjoint = bool(spec.get("disjoint_mismatch", False))
        rng = np.random.default_rng(seed)
        pairs = []
        for _ in range(count):
            p_d, p_mis = random_instance(x_count, h_count, rng, disjoint_mismatch=disjoint)
            pairs.append((p_d, p_mis if kind.needs_mismatched else None))
        return kind, pairs
    raise ConfigurationError("missing config field: p_d (or random)")


def cmd_fixedpoint(config: dict, out: Path, seed: int) -> int:
    kind, pairs = _fixedpoint_instances(config, seed)
    solve_cfg = config.get("solve", {})
    opts = SolveOptions(
        max_iters=int(solve_cfg.get("max_iters", 5000)),
        tol_value=float(solve_cfg.get("tol_value", 1e-12)),
        tol_grad=float(solve_cfg.get("tol_grad", 1e-10)),
        step_size=float(solve_cfg.get("step_size", 0.1)),
        restarts=int(solve_cfg.get("restarts", 4)),
        seed=seed,
    )
    rows = []
    for i, (p_d, p_mis) in enumerate(pairs):
        report = solve_generator(kind, p_d, p_mis, opts)
        target = closed_form_conditionals(kind, p_d, p_mis)
        active = p_d.condition_marginal() > 0
        dev = float(np.max(np.abs((report.argmin.conditional - target)[:, active])))
        doc = report.to_json_dict()
        doc["p_d"] = p_d.masses.tolist()
        if p_mis is not None:
            doc["p_mis"] = p_mis.masses.tolist()
        doc["max_dev_from_formula"] = dev
        _write_json(out / f"fixedpoint_{i:03d}.json", doc)
        print(f"fixedpoint[{i}] kind={kind.value} value={report.value:.9f} "
              f"feasible={report.feasible_closed_form} converged={report.converged} "
              f"max_dev_from_formula={dev:.3e}")
        rows.append((i, report.value, report.converged, report.feasible_closed_form, dev))
        if i == 0:
            save_fixedpoint_figure(p_d.conditionals(), target, report.argmin.conditional,
                                   out / "fixedpoint_000.png", kind_label=kind.value)
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write("instance,value,converged,feasible_closed_form,max_dev_from_formula\n")
        for i, v, c, f, dev in rows:
            fh.write(f"{i},{_SUMMARY_FLOAT.format(v)},{int(c)},{int(f)},"
                     f"{_SUMMARY_FLOAT.format(dev)}\n")
    return 0


def _generated_masses(g_net, latent, ds, n, seed):
    rng = np.random.default_rng(seed)
    edges = np.linspace(ds.value_range[0], ds.value_range[1], ds.bins + 1)
    onehot = np.eye(ds.class_count)
    cols = []
    for h in range(ds.class_count):
        z = latent.draw(n, rng)
        cond = np.tile(onehot[h], (n, 1))
        samples, _ = forward(g_net, np.concatenate([z, cond], axis=1))
        cols.append(histogram(samples[:, 0], edges).masses())
    return edges, np.stack(cols, axis=1)


def cmd_train(config: dict, out: Path, seed: int | None) -> int:
    ds_spec = _require(config, "dataset")
    cfg = train_config_from_spec(config)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    ds = dataset_from_spec(ds_spec, seed=cfg.seed)

    g_net, d_net, history = train(ds, cfg)
    history.write_csv(out / "history.csv")
    _write_json(out / "generator.json", to_checkpoint(g_net))
    _write_json(out / "discriminator.json", to_checkpoint(d_net))

    final_tv = history.tv[-1]
    ks = generated_class_ks(g_net, cfg.latent, ds, cfg.eval_samples, [cfg.seed, 7])
    hists = d_output_densities(d_net, ds, g_net, cfg.eval_samples, [cfg.seed, 11])
    _write_json(out / "eval.json", {
        "tv_per_class": final_tv.tolist(),
        "ks_per_class": ks.tolist(),
        "d_output_histograms": {name: h.to_json_dict() for name, h in
                                zip(("matched", "mismatched", "generated"), hists)},
        "eval_samples": cfg.eval_samples,
        "seed": cfg.seed,
    })

    save_history_figure(history, out / "history.png")
    edges, gen_masses = _generated_masses(g_net, cfg.latent, ds, cfg.eval_samples,
                                          [cfg.seed, 13])
    save_class_histogram_figure(edges, class_bin_masses(ds), gen_masses,
                                out / "class_hist.png")
    save_d_density_figure(hists, out / "d_density.png")

    tv_text = " ".join(f"{v:.4f}" for v in final_tv)
    print(f"train algorithm={cfg.algorithm.value} N={cfg.iterations} "
          f"seed={cfg.seed} final_tv_per_class=[{tv_text}]")
    return 0


def cmd_compare(config: dict, out: Path, seed: int | None) -> int:
    ds_spec = _require(config, "dataset")
    train_spec = dict(_require(config, "train"))
    train_spec.setdefault("algorithm", "modified")
    base_cfg = train_config_from_spec(train_spec)
    override = config.get("override")
    seeds = config.get("seeds")
    if seeds is None:
        seeds = [base_cfg.seed if seed is None else seed]
    seeds = [int(s) for s in seeds]

    ds = dataset_from_spec(ds_spec, seed=seeds[0])
    mean_tv = {k.value: [] for k in (ObjectiveKind.GAN_CLS, ObjectiveKind.MODIFIED_GAN_CLS)}
    reports = []
    for s in seeds:
        cfg = replace(base_cfg, seed=s)
        report = mismatch_experiment(ds, override, cfg)
        reports.append(report)
        _write_json(out / f"compare_seed{s}.json", report.to_json_dict())
        for alg in mean_tv:
            mean_tv[alg].append(float(np.mean(report.tv[alg])))

    h_count = ds.class_count
    with open(out / "compare_tv.csv", "w", newline="") as fh:
        cols = ",".join(f"tv_class_{h}" for h in range(h_count))
        fh.write(f"seed,algorithm,{cols},tv_mean\n")
        for s, report in zip(seeds, reports):
            for alg in ("gancls", "modified"):
                tv = np.asarray(report.tv[alg])
                vals = ",".join(_SUMMARY_FLOAT.format(v) for v in tv)
                fh.write(f"{s},{alg},{vals},{_SUMMARY_FLOAT.format(float(tv.mean()))}\n")

    wins = sum(1 for a, b in zip(mean_tv["modified"], mean_tv["gancls"]) if a <= b)
    print("seed  gancls_tv  modified_tv")
    for s, a, b in zip(seeds, mean_tv["gancls"], mean_tv["modified"]):
        print(f"{s:<5d} {a:9.4f}  {b:11.4f}")
    print(f"modified <= gancls on {wins} of {len(seeds)} seeds")
    _write_json(out / "summary.json", {
        "seeds": seeds,
        "mean_tv": mean_tv,
        "modified_wins": wins,
        "total_seeds": len(seeds),
    })
    save_compare_figure(seeds, mean_tv, out / "compare.png")
    return 0


# --- selftest battery -------------------------------------------------------

def _ternary_argmax(a: float, b: float) -> float:
    lo, hi = 1e-9, 1.0 - 1e-9
    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = a * np.log(m1) + b * np.log1p(-m1)
        f2 = a * np.log(m2) + b * np.log1p(-m2)
        if f1 < f2:
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def _selftest_checks(seed: int):
    from .fixedpoint import project_simplex

    rng = np.random.default_rng(seed)

    def projection():
        for _ in range(50):
            v = rng.normal(scale=3.0, size=rng.integers(2, 9))
            p = project_simplex(v)
            if abs(p.sum() - 1) > 1e-9 or np.any(p < 0):
                return False
            q = rng.dirichlet(np.ones(v.size))
            if float((v - p) @ (q - p)) > 1e-9:
                return False
        return True

    def optimal_d_vs_scalar_search():
        for _ in range(2):
            p_d, p_mis = random_instance(5, 2, rng)
            w = p_d.condition_marginal()
            from .dist import GeneratorPMF
            p_g = GeneratorPMF(rng.dirichlet(np.ones(5), size=2).T, w)
            for kind in (ObjectiveKind.GAN_CLS, ObjectiveKind.MODIFIED_GAN_CLS):
                d = optimal_discriminator(kind, p_d, p_mis, p_g)
                from .objective import _value_pair
                a, b = _value_pair(kind, p_d.masses, p_mis.masses, p_g.joint())
                for idx in np.ndindex(a.shape):
                    if a[idx] + b[idx] <= 0:
                        continue
                    if abs(_ternary_argmax(a[idx], b[idx]) - d.values[idx]) > 1e-6:
                        return False
        return True

    def value_identity():
        for _ in range(20):
            p_d, p_mis = random_instance(6, 2, rng)
            from .dist import GeneratorPMF
            p_g = GeneratorPMF(rng.dirichlet(np.ones(6), size=2).T, p_d.condition_marginal())
            for kind in (ObjectiveKind.GAN_CLS, ObjectiveKind.MODIFIED_GAN_CLS):
                direct = value(kind, p_d, p_mis, p_g,
                               optimal_discriminator(kind, p_d, p_mis, p_g))
                via_jsd = value_at_optimal_d(kind, p_d, p_mis, p_g)
                if abs(direct - via_jsd) > 1e-10:
                    return False
        return True

    def modified_lower_bound():
        from .dist import GeneratorPMF
        for _ in range(200):
            p_d, p_mis = random_instance(4, 2, rng)
            p_g = GeneratorPMF(rng.dirichlet(np.ones(4), size=2).T, p_d.condition_marginal())
            v = value_at_optimal_d(ObjectiveKind.MODIFIED_GAN_CLS, p_d, p_mis, p_g)
            if v < -LOG4 - 1e-12:
                return False
        return True

    def modified_solver_recovery():
        for disjoint in (False, True):
            p_d, p_mis = random_instance(6, 2, rng, disjoint_mismatch=disjoint)
            report = solve_generator(ObjectiveKind.MODIFIED_GAN_CLS, p_d, p_mis,
                                     SolveOptions(restarts=2, seed=seed))
            if abs(report.value + LOG4) > 1e-6:
                return False
            err = np.max(np.abs(report.argmin.conditional - p_d.conditionals()))
            if err > 1e-4:
                return False
        return True

    def gradient_check():
        from .nn import backward as nn_backward
        for sizes, out_kind in (((7, 16, 1), "logistic"), ((6, 16, 1), "identity")):
            net = init_mlp(sizes, output=out_kind, rng=rng)
            x = rng.normal(size=(4, sizes[0]))
            tgt = rng.normal(size=(4, sizes[-1]))
            y, tape = forward(net, x)
            grads = nn_backward(net, tape, 2.0 * (y - tgt) / y.size)
            from .nn import parameters, set_parameters
            params = parameters(net)
            flat = grads.as_list()
            for pi, p in enumerate(params):
                it = np.nditer(p, flags=["multi_index"])
                for _ in range(min(p.size, 5)):
                    idx = it.multi_index
                    orig = p[idx]
                    h = 1e-5
                    p[idx] = orig + h
                    set_parameters(net, params)
                    f1 = float(np.mean((forward(net, x)[0] - tgt) ** 2))
                    p[idx] = orig - h
                    set_parameters(net, params)
                    f0 = float(np.mean((forward(net, x)[0] - tgt) ** 2))
                    p[idx] = orig
                    set_parameters(net, params)
                    num = (f1 - f0) / (2 * h)
                    ana = float(flat[pi][idx])
                    if abs(num - ana) > 1e-4 * max(1.0, abs(num)):
                        return False
                    it.iternext()
        return True

    def sampler_determinism():
        from .dist import GaussianMixture, SyntheticDataset
        ds = SyntheticDataset(
            classes=(GaussianMixture([1.0], [-2.0], [0.5]),
                     GaussianMixture([1.0], [2.0], [0.5])),
            mismatch_rule=[1, 0])
        b1 = sample_minibatch(ds, 16, np.random.default_rng(seed))
        b2 = sample_minibatch(ds, 16, np.random.default_rng(seed))
        for t1, t2 in zip(b1, b2):
            if np.any(t1.matched_outcome != t2.matched_outcome) or \
               np.any(t1.condition != t2.condition) or \
               np.any(t1.mismatched_outcome != t2.mismatched_outcome):
                return False
        return True

    def discretize_vs_quadrature():
        from scipy.integrate import quad
        from .dist import GaussianMixture, SyntheticDataset, discretize
        ds = SyntheticDataset(
            classes=(GaussianMixture([1.0], [0.0], [1.0]),
                     GaussianMixture([1.0], [1.0], [1.0])),
            mismatch_rule=[1, 0])
        joint = discretize(ds, 8, (-4.0, 4.0))
        edges = np.linspace(-4, 4, 9)
        pdf = lambda t: np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi)
        for i in range(8):
            ref, _ = quad(pdf, edges[i], edges[i + 1], epsabs=1e-13)
            if i == 0:
                ref += quad(pdf, -50, edges[0], epsabs=1e-13)[0]
            if i == 7:
                ref += quad(pdf, edges[-1], 50, epsabs=1e-13)[0]
            if abs(joint.masses[i, 0] * 2 - ref) > 1e-9:
                return False
        return True

    def divergences():
        if abs(jsd([0.5, 0.5, 0.0], [0.0, 0.0, 1.0]) - np.log(2)) > 1e-12:
            return False
        p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
        return jsd(p, q) == jsd(q, p)

    return [
        ("simplex projection", projection),
        ("optimal discriminator vs scalar search", optimal_d_vs_scalar_search),
        ("value identity at optimal D", value_identity),
        ("modified lower bound -log4", modified_lower_bound),
        ("modified solver recovers data", modified_solver_recovery),
        ("analytic gradients vs finite differences", gradient_check),
        ("sampler determinism", sampler_determinism),
        ("discretize vs quadrature", discretize_vs_quadrature),
        ("divergence identities", divergences),
    ]


def cmd_selftest(seed: int) -> int:
    failures = 0
    for name, check in _selftest_checks(seed):
        try:
            ok = check()
        except Exception as exc:  # a crash is a failure, keep going
            ok = False
            print(f"FAIL {name} ({exc})")
            failures += 1
            continue
        if ok:
            print(f"ok   {name}")
        else:
            print(f"FAIL {name}")
            failures += 1
    return 0 if failures == 0 else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cganlab",
        description="Matching-aware conditional GAN laboratory: fixed points, "
                    "trainings, paired comparisons.")
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name, needs_config in (("fixedpoint", True), ("train", True),
                               ("compare", True), ("selftest", False)):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="path to the JSON config")
            p.add_argument("--out", default=f"cganlab-{name}", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.cmd == "selftest":
            return cmd_selftest(0 if args.seed is None else args.seed)
        config = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, args.cmd, args.config, args.seed, config)
        if args.cmd == "fixedpoint":
            seed = 0 if args.seed is None else args.seed
            return cmd_fixedpoint(config, out, seed)
        if args.cmd == "train":
            return cmd_train(config, out, args.seed)
        return cmd_compare(config, out, args.seed)
    except (ConfigurationError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
