"""Acceptance criteria, each at its stated tolerance; one PASS/FAIL line per criterion."""

import itertools
import math
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gatelab import convnet
from gatelab.cli import main
from gatelab.config import load_settings
from gatelab.data import IDX_IMAGES, IDX_LABELS, write_idx
from gatelab.experiments import (
    final_ratios,
    run_convergence_sweep,
    run_dln_dynamics,
    run_ecdf_sweep,
    run_gram_trace,
    run_oracle_check,
    spec_from_settings,
    sup_gap,
)
from gatelab.gates import GateThresholds, classify_gates, compatibility_bound
from gatelab.gram import gram, gram_matrix, gram_split_soft_galu, lambda_matrix, ntf_matrix
from gatelab.linalg import Prng, sym_eigen
from gatelab.network import (
    Net,
    NetConfig,
    Variant,
    build_net,
    compute_gates,
    flatten_params,
    forward,
    gate_jacobian,
    init_params,
    unflatten_params,
)
from gatelab.paths import delta_matrix, gram_via_kappa
from gatelab.theory import expected_ka, expected_kw, ideal_frg_gram, ideal_frg_spectrum
from gatelab.report import read_csv_rows

pytestmark = pytest.mark.slow
JOBS = os.cpu_count() or 1


def _spec(experiment, seeds, **overrides):
    items = [f"{k}={v}" for k, v in overrides.items()]
    return spec_from_settings(experiment, load_settings(None, items), list(seeds), JOBS)


@pytest.fixture(scope="module")
def oracle_rows():
    start = time.perf_counter()
    rows = run_oracle_check("small", seed=0, jobs=JOBS)
    return rows, time.perf_counter() - start


def test_criterion_01_path_oracle(oracle_rows, report):
    rows, seconds = oracle_rows
    bad = [r for r in rows if not (r["forward_err"] <= 1e-10 and
                                   r["ntf_err"] <= (1e-5 if r["variant"].startswith("soft") else 1e-12))]
    worst_soft = max(r["ntf_err"] for r in rows if r["variant"].startswith("soft"))
    ok = len(rows) == 216 and not bad and seconds < 120
    report(1, ok, f"{len(rows) - len(bad)}/{len(rows)} configs agree, worst soft NTF error "
                  f"{worst_soft:.1e}, {seconds:.1f}s")
    assert ok


def test_criterion_02_lambda_factorization(oracle_rows, report):
    rows, _ = oracle_rows
    hard = [r for r in rows if not r["variant"].startswith("soft")]
    soft = [r for r in rows if r["variant"].startswith("soft")]
    ok = all(r["lambda_err"] == 0.0 for r in hard) and all(r["lambda_err"] <= 1e-12 for r in soft)
    report(2, ok, f"hard max diff {max(r['lambda_err'] for r in hard):g}, "
                  f"soft max rel diff {max(r['lambda_err'] for r in soft):.1e} over {len(rows)} configs")
    assert ok


def test_criterion_03_wire_decomposition(report):
    # the same-coordinate sum, exactly as stated, against Psi^T Psi
    results = {}
    for d_in, variant in itertools.product((1, 2, 3), list(Variant)):
        cfg = NetConfig(d_in, 2, 3, variant)
        rng = Prng(7)
        x = rng.spawn(20).uniform((d_in, 3), -1, 1)
        net = build_net(cfg, rng, x)
        index = np.arange(3) if variant is Variant.FRG else None
        gates = forward(net, x, index=index).gate_tensor()
        K = gram(ntf_matrix(net, x, index=index, gates=gates))
        K_wire = gram_via_kappa(x, gates, net.weights, cfg)
        K_full = gram_via_kappa(x, gates, net.weights, cfg, cross_terms=True)
        scale = np.abs(K).max()
        results[(d_in, variant.value)] = (np.abs(K_wire - K).max() / scale, np.abs(K_full - K).max() / scale)
    stated_ok = all(v[0] <= 1e-8 for v in results.values())
    scalar_ok = all(v[0] <= 1e-8 for k, v in results.items() if k[0] == 1)
    full_ok = all(v[1] <= 1e-8 for v in results.values())
    worst = max(v[0] for k, v in results.items() if k[0] > 1)
    report(3, stated_ok, f"same-coordinate sum matches for d_in=1 ({scalar_ok}); for d_in>1 worst rel error "
                         f"{worst:.2f}; with cross-coordinate pairs added it matches everywhere ({full_ok})")
    assert full_ok and scalar_ok
    assert stated_ok, "same-coordinate wire sum omits path pairs that start at different coordinates"


def test_criterion_04_gram_entries(report):
    spec = _spec("gram-trace", range(20), **{"net.variant": "frg", "net.mu": 0.5, "data.kind": "experiment1",
                                             "data.n": 50, "sweep.widths": "500", "sweep.depths": "2 4 6 8"})
    rows = run_gram_trace(spec)
    details, ok = [], True
    mu = 0.5
    for d in (2, 4, 6, 8):
        diag = next(r for r in rows if r["d"] == d and r["entry_kind"] == "diagonal")["mc_mean"]
        off = next(r for r in rows if r["d"] == d and r["entry_kind"] == "off_diagonal")["mc_mean"]
        good = abs(diag - d) <= 0.10 * d and abs(off - d * mu ** (d - 1)) <= 0.1 * d
        ok &= good
        details.append(f"d={d}: {diag:.3f}/{off:.3f}")
    report(4, ok, "diag/off-diag means " + ", ".join(details))
    assert ok


def test_criterion_05_width_ordering(report):
    spec = _spec("spectrum", range(20), **{"net.variant": "frg", "data.kind": "experiment1", "data.n": 200,
                                           "sweep.widths": "25 500", "sweep.depths": "8"})
    rows = run_ecdf_sweep(spec)
    narrow, wide = sup_gap(rows, 8, 25), sup_gap(rows, 8, 500)
    ok = wide < narrow
    report(5, ok, f"sup-gap at d=8: w=500 {wide:.3g} < w=25 {narrow:.3g}")
    assert ok


def test_criterion_06_ideal_spectrum(report):
    worst = 0.0
    for n, mu, d in itertools.product((2, 5, 50), (0.3, 0.5), (2, 6, 20)):
        ev = sym_eigen(ideal_frg_gram(n, mu, d)).eigenvalues
        worst = max(worst, float(np.max(np.abs(ev - ideal_frg_spectrum(n, mu, d)))))
    ok = worst <= 1e-10
    report(6, ok, f"max eigenvalue error {worst:.1e} over 18 cases")
    assert ok


def _depth_trend(label, report, **overrides):
    spec = _spec("train", range(5), **{"net.w": 100, "opt.alpha_factor": 0.1, "opt.steps": 100,
                                       "sweep.widths": "100", "sweep.depths": "2 4 8", **overrides})
    fin = final_ratios(run_convergence_sweep(spec))
    vals = [fin[(d, 100)] for d in (2, 4, 8)]
    ok = vals[0] > vals[1] > vals[2]
    report(label, ok, "mean residual ratio at step 100 for d=2,4,8: " + ", ".join(f"{v:.4g}" for v in vals))
    return ok


def test_criterion_07_depth_helps_frg(report):
    assert _depth_trend(7, report, **{"net.variant": "frg", "data.kind": "experiment1", "data.n": 200})


def test_criterion_08_depth_helps_galu(report):
    assert _depth_trend(8, report, **{"net.variant": "galu", "data.kind": "experiment2", "data.n": 100})


def test_criterion_09_deep_linear(report):
    spec = _spec("dln", range(5), **{"sweep.depths": "2 4 6 8 10", "sweep.widths": "100",
                                     "opt.alpha_factor": 0.1, "opt.steps": 5})
    _, summary = run_dln_dynamics(spec)
    k_ok = all(abs(r["k0_mean"] - r["d"]) <= 0.10 * r["d"] for r in summary)
    r_ok = all(0.76 <= r["early_step_ratio"] <= 0.86 for r in summary)
    report(9, k_ok and r_ok, "K0 means " + ", ".join(f"{r['k0_mean']:.2f}" for r in summary)
           + "; early ratios " + ", ".join(f"{r['early_step_ratio']:.3f}" for r in summary))
    assert k_ok and r_ok


def test_criterion_10_soft_galu_decomposition(report):
    cfg = NetConfig(2, 3, 3, Variant.SOFT_GALU, beta=2.0)
    sigma = cfg.resolved_sigma
    rng = Prng(31)
    x = rng.spawn(1).uniform((2, 3), -1, 1)
    gate_net = build_net(cfg, rng.spawn(2))
    # the expectations hold over the strength weights with the gating network fixed
    draws = 400
    kw_s, ka_s, split_err, psd = [], [], 0.0, True
    for t in range(draws):
        net = Net(cfg, init_params(cfg, rng.spawn(100 + t)), gate_net.gate_weights)
        psi = ntf_matrix(net, x)
        kw, ka = gram_split_soft_galu(psi)
        K = gram(psi)
        split_err = max(split_err, float(np.abs(K - kw - ka).max()))
        psd &= all(np.linalg.eigvalsh(M).min() >= -1e-12 * max(np.abs(M).max(), 1e-300) for M in (kw, ka))
        kw_s.append(kw)
        ka_s.append(ka)
    kw_s, ka_s = np.array(kw_s), np.array(ka_s)
    gates = forward(gate_net, x).gate_tensor()
    lam = lambda_matrix(gates)
    delta = delta_matrix(gate_net, x)
    se_w = kw_s.std(axis=0, ddof=1) / math.sqrt(draws)
    se_a = ka_s.std(axis=0, ddof=1) / math.sqrt(draws)
    pinned = expected_kw(x, lam, cfg.d, sigma)
    plain = expected_kw(x, lam, cfg.d, sigma, with_depth_factor=False)
    ka_target = expected_ka(x, delta, cfg.d, sigma)
    z_pinned = float(np.max(np.abs(kw_s.mean(0) - pinned) / se_w))
    z_plain = float(np.max(np.abs(kw_s.mean(0) - plain) / se_w))
    z_a = float(np.max(np.abs(ka_s.mean(0) - ka_target) / se_a))
    ok = split_err <= 1e-12 and psd and z_pinned <= 3 and z_a <= 3
    report(10, ok, f"|K-Kw-Ka| {split_err:.1e}, PSD {psd}; K^w within {z_pinned:.2f} SE of the depth-scaled "
                   f"form (factor-free form off by {z_plain:.0f} SE); K^a within {z_a:.2f} SE")
    assert ok
    assert z_plain > 3


def _random_soft_nets(count=50):
    r = Prng(2024)
    for k in range(count):
        sub = r.spawn(k)
        variant = (Variant.SOFT_RELU, Variant.SOFT_GALU)[k % 2]
        cfg = NetConfig(1 + int(3 * sub.uniform()), 2 + int(4 * sub.uniform()), 2 + int(3 * sub.uniform()),
                        variant, beta=1 + 7 * sub.uniform(), epsilon=0.5 * sub.uniform())
        yield build_net(cfg, sub.spawn(1)), sub.spawn(2).uniform((cfg.d_in, 3), -1, 1)


def test_criterion_11_gate_taxonomy(report):
    overlaps = {2.0: 0, 1.001: 0}
    chain_ok, fd_err = True, 0.0
    for net, x in _random_soft_nets():
        cfg = net.config
        tau_a = 0.9 * (1 + cfg.epsilon)
        bound = compatibility_bound(cfg.beta, cfg.epsilon, tau_a)
        for factor in overlaps:
            cls = classify_gates(net, x, GateThresholds(tau_a, factor * bound, cfg.beta, cfg.epsilon))
            overlaps[factor] += int(cls.overlap.any())
        a = cls.active
        chain_ok &= bool(np.all(cls.max_dg[a] <= cls.scaled_bound[a] * (1 + 1e-12)))
        attr = "gate_weights" if cfg.variant.gating_net else "weights"
        base = flatten_params(getattr(net, attr))
        jac = gate_jacobian(net, x[:, 0])
        h = 1e-6
        for m in range(len(base)):
            vals = []
            for sgn in (1, -1):
                v = base.copy()
                v[m] += sgn * h
                probe = net.copy()
                setattr(probe, attr, unflatten_params(v, cfg))
                vals.append(compute_gates(probe, x[:, 0]))
            fd = (vals[0] - vals[1]) / (2 * h)
            fd_err = max(fd_err, float(np.abs(jac[:, :, m] - fd).max()))
    stated = overlaps[1.001] == 0 and overlaps[2.0] == 0
    report("11", stated and fd_err <= 1e-5,
           f"nets with an active-and-sensitive gate: {overlaps[2.0]}/50 at tau_S=2x bound, "
           f"{overlaps[1.001]}/50 at tau_S=1.001x bound; gate-level bound scaled by max|dq| holds ({chain_ok}); "
           f"derivative vs finite differences {fd_err:.1e}")
    assert fd_err <= 1e-5 and chain_ok and overlaps[2.0] == 0
    assert stated, "tau_S just above the bound does not separate gates whose preactivation moves faster than 1"


def test_criterion_12_conv_invariance(report):
    cfg = convnet.ConvConfig(3, 2, 2)
    rng = Prng(12)
    xs, xt = rng.spawn(1).normal(3), rng.spawn(2).normal(3)
    ones = np.ones((2, 3))
    exact = [convnet.invariance_expectation(cfg, ones, ones, convnet.rotate_input(xs, i),
                                            convnet.rotate_input(xt, i), 1.0) for i in range(3)]
    exact_ok = exact[0] == exact[1] == exact[2]
    est = [convnet.mc_gap_correlation(cfg, convnet.rotate_input(xs, i), convnet.rotate_input(xt, i), 1.0,
                                      500, rng.spawn(10 + i), "galu") for i in range(3)]
    z = max(abs(e.mean - est[0].mean) / math.hypot(e.se, est[0].se) for e in est[1:])
    bundles = convnet.enumerate_bundles(cfg)
    theta = rng.spawn(3).uniform((2, 2), -1, 1)
    s = convnet.path_strengths(cfg, theta, bundles).reshape(len(bundles), cfg.d_in)
    bundle_ok = len(bundles) == cfg.kernel ** (cfg.d - 1) and bool(np.all(s == s[:, :1]))
    ok = exact_ok and z <= 3 and bundle_ok
    report(12, ok, f"ones-gate expectation identical over 3 shifts ({exact_ok}); GaLU MC shifts agree within "
                   f"{z:.2f} SE over 500 draws; {len(bundles)} bundles with equal member strengths ({bundle_ok})")
    assert ok


def _mnist_fixture(folder: Path, per_class=100):
    rng = Prng(5)
    labels = np.array([4, 7, 1] * (per_class + 5), dtype=np.uint8)
    images = (rng.uniform((len(labels), 28, 28)) * 255).astype(np.uint8)
    images[labels == 7, :, 14:] //= 4
    write_idx(folder / "images.idx", images, IDX_IMAGES)
    write_idx(folder / "labels.idx", labels, IDX_LABELS)
    return folder / "images.idx", folder / "labels.idx"


def test_criterion_13_nu_tracking(tmp_path, report):
    common = ["--set", "net.variant=soft_galu", "--set", "net.w=16", "--set", "net.d=3", "--set", "opt.steps=20",
              "--set", "opt.snapshot_every=5", "--set", "nu.kinds=K Ka Ka_hat M"]
    runs = {"synthetic": common + ["--set", "data.n=200", "--set", "data.d_in=10"]}
    images = os.environ.get("GATELAB_MNIST_IMAGES")
    labels = os.environ.get("GATELAB_MNIST_LABELS")
    source = "supplied IDX files"
    if not (images and labels):
        images, labels = _mnist_fixture(tmp_path)
        source = "generated IDX fixture"
    runs["binary-mnist"] = common + ["--set", f"data.images={images}", "--set", f"data.labels={labels}",
                                     "--set", "data.limit=100"]
    details, ok = [], True
    for name, args in runs.items():
        out = tmp_path / name
        code = main(["nu-track", *args, "--out", str(out)])
        rows = read_csv_rows(out / "nu_track.csv")
        nus = [v for r in rows for k, v in r.items() if k.startswith("nu_")]
        good = code == 0 and len(rows) == 5 and all(np.isfinite(v) and v > 0 for v in nus)
        ok &= good
        details.append(f"{name} {len(rows)} snapshots, nu range [{min(nus):.3g}, {max(nus):.3g}]")
    report(13, ok, "; ".join(details) + f" ({source}); large-scale accuracy results are out of desk scope")
    assert ok
