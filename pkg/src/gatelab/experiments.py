"""Desk-scale sweeps: Gram traces, spectra, convergence, nu tracking, gate
comparisons, deep linear dynamics, convolutional invariance and oracle checks.

Every runner returns plain row dictionaries; the CLI turns them into files.
Seeds fan out to a process pool. A run with seed ``s`` builds its network
from ``Prng(s)`` and its random labels from ``Prng(1000 + s)``, so results do
not depend on the pool size or completion order.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import convnet, theory
from .data import Dataset, gen_experiment1, gen_experiment2, gen_two_gaussians, load_csv, load_idx_binary_mnist, split
from .errors import ConfigError
from .gates import GateThresholds, classify_gates
from .gram import ecdf, gram_matrix, lambda_bruteforce, lambda_matrix, nu
from .linalg import Prng, sym_eigen
from .network import (
    NetConfig,
    Variant,
    build_net,
    flatten_params,
    forward,
    ntf_column,
    output,
    transplant_gates,
    unflatten_params,
)
from .paths import enumerate_paths, ntf_via_paths, output_via_paths, path_activations, path_strengths
from .train import Optimizer, predict_linear_dynamics, step_from_spectrum, train

DATA_SEED_OFFSET = 1000


@dataclass
class ExperimentSpec:
    experiment: str
    net: NetConfig
    data: dict
    opt: Optimizer
    steps: int = 100
    alpha_factor: float = 0.1
    seeds: list = field(default_factory=lambda: [0])
    depths: list = field(default_factory=lambda: [2, 4, 8])
    widths: list = field(default_factory=lambda: [100])
    snapshot_every: int = 10
    nu_kinds: list = field(default_factory=lambda: ["K", "M"])
    extra: dict = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("an experiment needs at least one seed")
        if not self.depths or not self.widths:
            raise ConfigError("sweep lists must be non-empty")


def make_dataset(data: dict, seed: int) -> Dataset:
    kind = data.get("kind", "experiment1")
    n = int(data.get("n", 50))
    if kind == "experiment1":
        return gen_experiment1(n, DATA_SEED_OFFSET + seed)
    if kind == "experiment2":
        return gen_experiment2(n, DATA_SEED_OFFSET + seed)
    if kind == "gaussians":
        return gen_two_gaussians(n, int(data.get("d_in", 10)), float(data.get("separation", 2.0)),
                                 DATA_SEED_OFFSET + seed)
    if kind == "csv":
        return load_csv(data["path"], int(data["d_in"]))
    if kind == "mnist":
        return load_idx_binary_mnist(data["images"], data["labels"], int(data.get("class_a", 4)),
                                     int(data.get("class_b", 7)), int(data.get("limit", 100)))
    raise ConfigError(f"unknown data kind {kind!r}")


def spec_from_settings(experiment: str, settings: dict, seeds: list, jobs: int = 1) -> ExperimentSpec:
    data = {k.split(".", 1)[1]: v for k, v in settings.items() if k.startswith("data.")}
    if settings["data.images"] and settings["data.labels"] and data["kind"] == "experiment1" and experiment == "nu-track":
        data["kind"] = "mnist"
    net = NetConfig(
        d_in=1, w=settings["net.w"], d=settings["net.d"], variant=settings["net.variant"],
        sigma=settings["net.sigma"], beta=settings["net.beta"], epsilon=settings["net.epsilon"],
        mu=settings["net.mu"],
    )
    alpha = settings["opt.alpha"]
    opt = Optimizer(settings["opt.kind"], 0.0 if alpha is None else alpha, settings["opt.decay"])
    extra = {k: v for k, v in settings.items() if k.split(".")[0] in ("conv", "gates", "mc", "check", "train")}
    extra["alpha_auto"] = alpha is None
    extra["batch_size"] = settings["opt.batch_size"]
    return ExperimentSpec(
        experiment=experiment, net=net, data=data, opt=opt, steps=settings["opt.steps"],
        alpha_factor=settings["opt.alpha_factor"], seeds=list(seeds), depths=list(settings["sweep.depths"]),
        widths=list(settings["sweep.widths"]), snapshot_every=settings["opt.snapshot_every"],
        nu_kinds=list(settings["nu.kinds"]), extra=extra, jobs=jobs,
    )


def fan_out(fn, tasks: list, jobs: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally across worker processes; order is preserved."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), se


def _net_for(cfg: NetConfig, data: Dataset, seed: int):
    cfg = replace(cfg, d_in=data.d_in)
    index = np.arange(data.n) if cfg.variant is Variant.FRG else None
    return build_net(cfg, Prng(seed), data.x), index


# --- Gram entry traces ---------------------------------------------------------

def _gram_entry_task(args):
    cfg, data_spec, seed, i, j = args
    data = make_dataset(data_spec, seed)
    net, index = _net_for(cfg, data, seed)
    K = gram_matrix(net, data.x, index=index)
    return float(K[i, i]), float(K[i, j])


def gram_theory(cfg: NetConfig, x: np.ndarray, i: int, j: int) -> tuple[float, float]:
    """Expected diagonal and off-diagonal Gram entries at initialisation."""
    sigma, d, w = cfg.resolved_sigma, cfg.d, cfg.w
    if cfg.variant is Variant.FRG:
        lam_self, lam_cross = theory.frg_lambda_bar(cfg.mu, w, d)
    elif cfg.variant is Variant.DLN:
        lam_self = lam_cross = float(w ** (d - 1))
    else:
        raise ConfigError("Gram traces have closed forms only for frg and dln")
    lam = np.array([[lam_self, lam_cross], [lam_cross, lam_self]])
    K = theory.expected_gram(x[:, [i, j]], lam, d, sigma)
    return float(K[0, 0]), float(K[0, 1])


def run_gram_trace(spec: ExperimentSpec) -> list[dict]:
    i, j = spec.extra.get("mc.entry_i", 0), spec.extra.get("mc.entry_j", 1)
    rows = []
    for w in spec.widths:
        for d in spec.depths:
            cfg = replace(spec.net, d=d, w=w)
            tasks = [(cfg, spec.data, s, i, j) for s in spec.seeds]
            vals = np.array(fan_out(_gram_entry_task, tasks, spec.jobs))
            x = make_dataset(spec.data, spec.seeds[0]).x
            th = gram_theory(replace(cfg, d_in=x.shape[0]), x, i, j)
            for k, kind in enumerate(("diagonal", "off_diagonal")):
                mean, se = _mean_se(vals[:, k])
                rows.append({"d": d, "w": w, "entry_kind": kind, "mc_mean": mean, "mc_se": se,
                             "theory": th[k], "seed_count": len(spec.seeds)})
    return rows


# --- spectra -------------------------------------------------------------------

def _ecdf_task(args):
    cfg, data_spec, seed = args
    data = make_dataset(data_spec, seed)
    net, index = _net_for(cfg, data, seed)
    K = gram_matrix(net, data.x, index=index) / cfg.d
    return ecdf(sym_eigen(K).eigenvalues).ecdf


def run_ecdf_sweep(spec: ExperimentSpec) -> list[dict]:
    if spec.net.variant is not Variant.FRG:
        raise ConfigError("the ideal spectrum is defined for frg networks")
    rows = []
    for w in spec.widths:
        for d in spec.depths:
            cfg = replace(spec.net, d=d, w=w)
            curves = fan_out(_ecdf_task, [(cfg, spec.data, s) for s in spec.seeds], spec.jobs)
            actual = np.mean(curves, axis=0)
            n = len(actual)
            ideal = np.cumsum(theory.ideal_frg_spectrum(n, cfg.mu, d))
            for k in range(n):
                rows.append({"d": d, "w": w, "seed_count": len(spec.seeds), "index": k,
                             "actual_cum": float(actual[k]), "ideal_cum": float(ideal[k])})
    return rows


def sup_gap(rows: list[dict], d: int, w: int) -> float:
    sel = [r for r in rows if r["d"] == d and r["w"] == w]
    if not sel:
        raise KeyError(f"no ecdf rows for d={d}, w={w}")
    return max(abs(r["actual_cum"] - r["ideal_cum"]) for r in sel)


# --- convergence ---------------------------------------------------------------

def _convergence_task(args):
    cfg, data_spec, seed, steps, factor, opt = args
    data = make_dataset(data_spec, seed)
    net, index = _net_for(cfg, data, seed)
    K = gram_matrix(net, data.x, index=index)
    alpha = step_from_spectrum(K, factor) if factor > 0 else 0.0
    _, rec = train(net, data.x, data.y, replace(opt, alpha=alpha), steps, index=index)
    return np.array(rec.residual_ratio)


def run_convergence_sweep(spec: ExperimentSpec) -> list[dict]:
    """Mean residual ratio per step for each depth, with ``alpha = factor / rho_max(K_0)``."""
    if not spec.net.variant.frozen_gates:
        raise ConfigError("convergence sweeps use frozen-gate variants (dln, frg, galu)")
    rows = []
    for w in spec.widths:
        for d in spec.depths:
            cfg = replace(spec.net, d=d, w=w)
            tasks = [(cfg, spec.data, s, spec.steps, spec.alpha_factor, spec.opt) for s in spec.seeds]
            ratios = np.stack(fan_out(_convergence_task, tasks, spec.jobs))
            for t in range(ratios.shape[1]):
                mean, se = _mean_se(ratios[:, t])
                rows.append({"d": d, "w": w, "step": t, "mean_ratio": mean, "se_ratio": se,
                             "seed_count": len(spec.seeds)})
    return rows


def final_ratios(rows: list[dict]) -> dict:
    last = {}
    for r in rows:
        key = (r["d"], r["w"])
        if key not in last or r["step"] > last[key]["step"]:
            last[key] = r
    return {k: v["mean_ratio"] for k, v in last.items()}


# --- single training run -------------------------------------------------------

def _resolve_alpha(spec: ExperimentSpec, net, data: Dataset, index) -> float:
    if not spec.extra.get("alpha_auto", True):
        return spec.opt.alpha
    return step_from_spectrum(gram_matrix(net, data.x, index=index), spec.alpha_factor)


def run_train(spec: ExperimentSpec) -> list[dict]:
    """One trajectory per seed: step, loss, residual ratio and spectrum snapshots."""
    rows = []
    for seed in spec.seeds:
        data = make_dataset(spec.data, seed)
        net, index = _net_for(spec.net, data, seed)
        alpha = _resolve_alpha(spec, net, data, index)
        kinds = ["K"] if spec.snapshot_every else []
        _, rec = train(net, data.x, data.y, replace(spec.opt, alpha=alpha), spec.steps,
                       snapshot_every=spec.snapshot_every, index=index, nu_kinds=kinds,
                       batch_size=spec.extra.get("batch_size"), rng=Prng(seed).spawn(5))
        for r in rec.rows():
            row = {"seed": seed, "step": r["step"], "loss": r["loss"], "residual_ratio": r["residual_ratio"]}
            if spec.snapshot_every:
                row.update(nu=r["nu_K"], rho_max=r["rho_max"], rho_min=r["rho_min"])
            rows.append(row)
    return rows


# --- nu tracking -----------------------------------------------------------------

def _nu_task(args):
    spec, seed = args
    data = make_dataset(spec.data, seed)
    net, index = _net_for(spec.net, data, seed)
    kinds = [k for k in spec.nu_kinds if k in ("K", "M") or net.config.train_g]
    alpha = _resolve_alpha(spec, net, data, index)
    _, rec = train(net, data.x, data.y, replace(spec.opt, alpha=alpha), spec.steps,
                   snapshot_every=max(spec.snapshot_every, 1), index=index, nu_kinds=kinds)
    rows = []
    for r in rec.rows():
        row = {"seed": seed, "step": r["step"], "loss": r["loss"], "residual_ratio": r["residual_ratio"],
               "rho_max": r["rho_max"], "rho_min": r["rho_min"]}
        row.update({k: v for k, v in r.items() if k.startswith("nu_")})
        rows.append(row)
    return rows


def run_nu_track(spec: ExperimentSpec) -> list[dict]:
    """nu_t snapshots for each requested kernel; report only."""
    if spec.data.get("kind") in ("experiment1", "experiment2"):
        spec = replace(spec, data={**spec.data, "kind": "gaussians"})
    return list(itertools.chain.from_iterable(fan_out(_nu_task, [(spec, s) for s in spec.seeds], spec.jobs)))


# --- adaptive versus frozen gates --------------------------------------------------

def _squared_loss(net, data: Dataset) -> float:
    e = output(net, data.x) - data.y
    return float(e @ e / data.n)


def _gate_compare_task(args):
    spec, seed = args
    data = make_dataset({**spec.data, "kind": "gaussians"}, seed)
    tr, te = split(data, float(spec.data.get("test_fraction", 0.25)), seed)
    cfg = replace(spec.net, d_in=data.d_in, variant=Variant.SOFT_GALU, train_g=True)
    frozen_cfg = replace(cfg, train_g=False)
    init = build_net(cfg, Prng(seed))
    alpha = _resolve_alpha(spec, init, tr, None)
    opt = replace(spec.opt, alpha=alpha)

    def monitor(net):
        return {"test_loss": _squared_loss(net, te)}

    def run(net):
        return train(net, tr.x, tr.y, opt, spec.steps, snapshot_every=max(spec.snapshot_every, 1),
                     nu_kinds=["K"], monitor=monitor)

    adaptive, rec_a = run(init)
    frozen_init = init.copy()
    frozen_init.config = frozen_cfg
    frozen, rec_f = run(frozen_init)
    strength_rng = Prng(seed).spawn(9)
    transplant, rec_t = run(transplant_gates(adaptive, frozen_cfg, strength_rng))
    randomised, rec_r = run(transplant_gates(init, frozen_cfg, Prng(seed).spawn(9)))

    rows = []
    recs = {"adaptive": rec_a, "frozen": rec_f, "transplant": rec_t, "random": rec_r}
    per_run = {k: rec.rows() for k, rec in recs.items()}
    for idx, base in enumerate(per_run["adaptive"]):
        row = {"seed": seed, "step": base["step"]}
        for name, rr in per_run.items():
            r = rr[idx]
            row[f"train_loss_{name}"] = r["loss"] / tr.n
            row[f"test_loss_{name}"] = r["test_loss"]
            row[f"nu_{name}"] = r["nu_K"]
        rows.append(row)

    gate_rows = []
    tau_a, tau_s = spec.extra.get("gates.tau_active"), spec.extra.get("gates.tau_sensitive")
    th = GateThresholds.default(cfg.beta, cfg.epsilon)
    if tau_a is not None or tau_s is not None:
        tau_a = th.tau_active if tau_a is None else tau_a
        from .gates import compatibility_bound
        tau_s = 2.0 * compatibility_bound(cfg.beta, cfg.epsilon, tau_a) if tau_s is None else tau_s
        th = GateThresholds(tau_a, tau_s, cfg.beta, cfg.epsilon)
    cls = classify_gates(adaptive, tr.x, th, sample=True, rng=Prng(seed).spawn(11))
    for r in cls.rows():
        gate_rows.append({"seed": seed, **r})
    checks = {
        "frozen_gating_untouched": all(np.array_equal(a, b) for a, b in zip(frozen.gate_weights, init.gate_weights)),
        "transplant_gates_match": bool(np.array_equal(
            forward(transplant_gates(adaptive, frozen_cfg, Prng(seed).spawn(9)), tr.x).gate_tensor(),
            forward(adaptive, tr.x).gate_tensor())),
    }
    return rows, gate_rows, checks, cls.notes


def run_gate_comparison(spec: ExperimentSpec) -> tuple[list[dict], list[dict], dict]:
    """Adaptive vs frozen soft-GaLU gates, and learned-transplant vs random-frozen gates.

    Returns (comparison rows, gates.csv rows, mechanics checks).
    """
    results = fan_out(_gate_compare_task, [(spec, s) for s in spec.seeds], spec.jobs)
    rows = [r for res in results for r in res[0]]
    gate_rows = [r for res in results for r in res[1]]
    checks = {k: all(res[2][k] for res in results) for k in results[0][2]}
    checks["notes"] = sorted({n for res in results for n in res[3]})
    return rows, gate_rows, checks


# --- deep linear dynamics -------------------------------------------------------------

def _dln_task(args):
    d, w, seed, steps, factor = args
    cfg = NetConfig(1, w, d, Variant.DLN, sigma=math.sqrt(1.0 / w))
    net = build_net(cfg, Prng(seed))
    x, y = np.ones((1, 1)), np.ones(1)
    alpha = factor / d
    _, rec = train(net, x, y, Optimizer("sgd", alpha), steps, snapshot_every=1)
    snaps = rec.snapshots
    k0 = snaps[0]["rho_max"]
    e0 = output(net, x) - y
    frozen = predict_linear_dynamics(np.array([[k0]]), alpha, e0, steps)
    return {
        "loss": np.array(rec.loss),
        "k": np.array([s["rho_max"] for s in snaps]),
        "norm": np.array([s["param_norm"] for s in snaps]),
        "frozen": frozen,
    }


def run_dln_dynamics(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    """Per-step averages and a K_0 summary for n = 1, x = y = 1, alpha = factor / d."""
    w = spec.widths[0]
    traj, summary = [], []
    for d in spec.depths:
        res = fan_out(_dln_task, [(d, w, s, spec.steps, spec.alpha_factor) for s in spec.seeds], spec.jobs)
        loss = np.stack([r["loss"] for r in res])
        ratio = loss / loss[:, :1]
        with np.errstate(divide="ignore", invalid="ignore"):
            step_ratio = np.where(loss[:, :-1] > 0, loss[:, 1:] / loss[:, :-1], 0.0)
        k = np.stack([r["k"] for r in res])
        norm = np.stack([r["norm"] for r in res])
        frozen = np.stack([r["frozen"] for r in res])
        for t in range(loss.shape[1]):
            traj.append({
                "d": d, "step": t, "residual_ratio": float(ratio[:, t].mean()),
                "step_ratio": float(step_ratio[:, t].mean()) if t < step_ratio.shape[1] else 0.0,
                "k_t": float(k[:, t].mean()), "param_norm": float(norm[:, t].mean()),
                "frozen_k_ratio": float(frozen[:, t].mean()),
            })
        mean, se = _mean_se(k[:, 0])
        early = float(step_ratio[:, :5].mean())
        summary.append({"d": d, "w": w, "k0_mean": mean, "k0_se": se,
                        "theory": theory.dln_expected_k0(d, w, math.sqrt(1.0 / w)),
                        "early_step_ratio": early, "seed_count": len(spec.seeds)})
    return traj, summary


# --- convolutional invariance ------------------------------------------------------------

def run_conv_invariance(spec: ExperimentSpec) -> list[dict]:
    """Second moment of the pooled output under every cyclic shift of a pair of inputs.

    ``expectation`` is exact over the kernels. For frg the frozen gates travel
    with the signal; for galu it is averaged over gating networks drawn from one
    fixed stream, so each shift sees the same networks. ``mc_mean`` samples
    kernels and gates jointly from an independent stream per shift.
    """
    ex = spec.extra
    cfg = convnet.ConvConfig(ex.get("conv.d_in", 3), ex.get("conv.kernel", 2), ex.get("conv.layers", 2))
    gating = convnet.ConvGating(ex.get("conv.gating", "galu"))
    sigma = ex.get("conv.sigma", 1.0)
    draws = ex.get("conv.draws", 500)
    base = Prng(spec.seeds[0])
    xs = base.spawn(50).normal(cfg.d_in)
    xt = base.spawn(51).normal(cfg.d_in)
    frg_s = base.spawn(53).bernoulli(spec.net.mu, (cfg.conv_layers, cfg.d_in))
    frg_t = base.spawn(54).bernoulli(spec.net.mu, (cfg.conv_layers, cfg.d_in))
    gate_stream = base.spawn(52)
    gate_params = [gate_stream.spawn(t).bernoulli_sym(sigma, (cfg.conv_layers, cfg.kernel)) for t in range(draws)]
    rows = []
    for i in range(cfg.d_in):
        a, b = convnet.rotate_input(xs, i), convnet.rotate_input(xt, i)
        if gating is convnet.ConvGating.ONES:
            exact = convnet.invariance_expectation(cfg, None, None, a, b, sigma)
        elif gating is convnet.ConvGating.FRG:
            exact = convnet.invariance_expectation(cfg, np.roll(frg_s, i, axis=1), np.roll(frg_t, i, axis=1),
                                                   a, b, sigma)
        else:
            exact = math.fsum(
                convnet.invariance_expectation(cfg, convnet.conv_relu_gates(cfg, gp, a),
                                               convnet.conv_relu_gates(cfg, gp, b), a, b, sigma)
                for gp in gate_params) / draws
        mc = convnet.mc_gap_correlation(cfg, a, b, sigma, draws, base.spawn(100 + i), gating, spec.net.mu)
        rows.append({"shift": i, "gating": gating.value, "expectation": exact,
                     "mc_mean": mc.mean, "mc_se": mc.se, "draws": draws})
    return rows


# --- theory and oracle checks ----------------------------------------------------------------

def _lambda_task(args):
    cfg, data_spec, seed = args
    data = make_dataset(data_spec, seed)
    net, index = _net_for(cfg, data, seed)
    lam = lambda_matrix(forward(net, data.x, index=index).gate_tensor())
    return float(lam[0, 0]), float(lam[0, 1])


def run_theory_check(spec: ExperimentSpec) -> list[dict]:
    """Closed forms against computation: ideal spectrum, FRG path overlaps and Gram entries."""
    cfg = spec.net
    n = int(spec.data.get("n", 50))
    rows = []
    ev = sym_eigen(theory.ideal_frg_gram(n, cfg.mu, cfg.d)).eigenvalues
    err = float(np.max(np.abs(ev - theory.ideal_frg_spectrum(n, cfg.mu, cfg.d))))
    rows.append({"check": "ideal_spectrum", "measured": err, "expected": 0.0, "tolerance": 1e-10,
                 "passed": err <= 1e-10})
    if cfg.variant in (Variant.FRG, Variant.DLN) and n >= 2:
        tasks = [(cfg, spec.data, s) for s in spec.seeds]
        if cfg.variant is Variant.FRG:
            lam = np.array(fan_out(_lambda_task, tasks, spec.jobs))
            for k, (name, target) in enumerate(zip(("lambda_self", "lambda_cross"),
                                                   theory.frg_lambda_bar(cfg.mu, cfg.w, cfg.d))):
                mean, se = _mean_se(lam[:, k])
                tol = 4 * se + 1e-12 * abs(target)
                rows.append({"check": name, "measured": mean, "expected": target, "tolerance": tol,
                             "passed": abs(mean - target) <= tol})
        vals = np.array(fan_out(_gram_entry_task, [(cfg, spec.data, s, 0, 1) for s in spec.seeds], spec.jobs))
        x = make_dataset(spec.data, spec.seeds[0]).x
        th = gram_theory(replace(cfg, d_in=x.shape[0]), x, 0, 1)
        for k, name in enumerate(("gram_diagonal", "gram_off_diagonal")):
            mean, se = _mean_se(vals[:, k])
            tol = 4 * se + 1e-12 * abs(th[k])
            rows.append({"check": name, "measured": mean, "expected": th[k], "tolerance": tol,
                         "passed": abs(mean - th[k]) <= tol})
    return rows


GRIDS = {
    "tiny": {"d": [2, 3], "w": [1, 2], "d_in": [1, 2]},
    "small": {"d": [2, 3, 4], "w": [1, 2, 3, 4], "d_in": [1, 2, 3]},
}


def _fd_ntf(net, x, h: float = 1e-6) -> np.ndarray:
    """Central differences of the output w.r.t. the trainable parameters, in ntf_column order."""
    groups = [("w", "weights")] if net.config.train_w else []
    if net.config.train_g:
        groups.append(("g", "gate_weights"))
    cols = []
    for _, attr in groups:
        base = flatten_params(getattr(net, attr))
        for m in range(len(base)):
            vals = []
            for sign in (1.0, -1.0):
                v = base.copy()
                v[m] += sign * h
                probe = net.copy()
                setattr(probe, attr, unflatten_params(v, net.config))
                vals.append(float(output(probe, x)[0]))
            cols.append((vals[0] - vals[1]) / (2 * h))
    return np.array(cols)


def oracle_check_one(cfg: NetConfig, seed: int = 0, n: int = 3) -> dict:
    """Layerwise computations against brute-force path sums for one configuration."""
    rng = Prng(seed)
    x = rng.spawn(20).uniform((cfg.d_in, n), -1.0, 1.0)
    net = build_net(cfg, rng, x)
    index = np.arange(n) if cfg.variant is Variant.FRG else None
    cache = forward(net, x, index=index)
    gates = cache.gate_tensor()
    paths = enumerate_paths(cfg)
    fwd_err = ntf_err = 0.0
    for s in range(n):
        ref = output_via_paths(x[:, s], gates[s], net.weights, cfg)
        terms = x[paths[:, 0], s] * path_activations(gates[s], paths) * path_strengths(net.weights, paths)
        scale = max(float(np.sum(np.abs(terms))), 1e-300)
        fwd_err = max(fwd_err, abs(cache.y[s] - ref) / scale)
        col = ntf_column(net, x[:, s], index=None if index is None else [s])
        if cfg.variant.soft:
            ref_col = _fd_ntf(net, x[:, s])
        else:
            ref_col = ntf_via_paths(x[:, s], gates[s], net.weights, cfg)
        scale = max(float(np.max(np.abs(ref_col))), 1e-300)
        ntf_err = max(ntf_err, float(np.max(np.abs(col - ref_col))) / scale)
    lam_fast, lam_slow = lambda_matrix(gates), lambda_bruteforce(gates)
    if cfg.variant.soft:
        lam_err = float(np.max(np.abs(lam_fast - lam_slow)) / max(np.max(np.abs(lam_slow)), 1e-300))
        lam_ok = lam_err <= 1e-12
    else:
        lam_err = float(np.max(np.abs(lam_fast - lam_slow)))
        lam_ok = bool(np.array_equal(lam_fast, lam_slow))
    ntf_tol = 1e-5 if cfg.variant.soft else 1e-12
    return {
        "d": cfg.d, "w": cfg.w, "d_in": cfg.d_in, "variant": cfg.variant.value,
        "forward_err": fwd_err, "ntf_err": ntf_err, "lambda_err": lam_err,
        "passed": fwd_err <= 1e-10 and ntf_err <= ntf_tol and lam_ok,
    }


def _oracle_task(args):
    d, w, d_in, variant, seed = args
    return oracle_check_one(NetConfig(d_in, w, d, variant), seed)


def run_oracle_check(grid: str = "tiny", seed: int = 0, jobs: int = 1) -> list[dict]:
    if grid not in GRIDS:
        raise ConfigError(f"unknown grid {grid!r}; choose from {sorted(GRIDS)}")
    g = GRIDS[grid]
    tasks = [(d, w, d_in, v, seed) for d in g["d"] for w in g["w"] for d_in in g["d_in"] for v in Variant]
    return fan_out(_oracle_task, tasks, jobs)
