"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. The end-to-end run (criterion 7) trains a reduced model from scratch
and is shared with the bench criterion through a module-scoped fixture.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from evd.bec import BinaryFrame, label_connected_domains
from evd.cli import main as cli_main
from evd.core import EventStream, Label, SensorGeometry, partition_windows, read_events
from evd.evaluation import BafDenoiser, RpDenoiser, bench, snr_db
from evd.geometry import farthest_event_sampling, idw_weights
from evd.nn import TINY_LEVELS, ModelParams, load_checkpoint
from evd.nn.layers import ConvParams, bce_with_logits, lcsc_block
from evd.nn.model import build_plan, forward_from_plan, loss_and_gradients
from evd.pipeline import PipelineConfig, WednetDenoiser
from evd.sim import NoiseSpec, inject_ba_noise, poisson_count_pmf
from evd.temporal import TemporalStats, TwConfig, adaptive_t_lim, temporal_probabilities, tw_filter

from test_bec import flood_fill_labeling


def report(number, name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number:>2} [{status}] {name}: {detail}")
    assert passed, f"criterion {number} ({name}): {detail}"


# ---------------------------------------------------------------------------
# 1. Temporal-window equivalence
# ---------------------------------------------------------------------------


def test_criterion_1_tw_equivalence():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        scale = 10 ** rng.uniform(1, 6)  # random sigma via random span
        ts = np.sort(rng.integers(0, int(scale) + 2, size=1024))
        stream = EventStream(ts, np.zeros(1024), np.zeros(1024), np.ones(1024))
        (window,) = partition_windows(stream, 1024)
        stats_w = TemporalStats.from_window(window)
        t_lim = adaptive_t_lim(stats_w, TwConfig(events_per_movement=int(rng.integers(1, 600))))
        kept, _ = tw_filter(window, t_lim)
        if stats_w.sigma == 0.0:
            expected = window.events
        else:
            probs = temporal_probabilities(window.events.t, stats_w)
            threshold_weight = float(
                np.exp(-((stats_w.t_mu - t_lim - stats_w.t_mu) ** 2) / (2 * stats_w.sigma**2))
            )
            z = np.exp(
                -((window.events.t.astype(np.float64) - stats_w.t_mu) ** 2)
                / (2 * stats_w.sigma**2)
            ).sum()
            expected = window.events.take(probs >= threshold_weight / z)
        if kept != expected:
            mismatches += 1
    elapsed = time.perf_counter() - start
    report(
        1,
        "TW probability rule equals deviation rule",
        mismatches == 0 and elapsed < 10.0,
        f"0 mismatches required (got {mismatches}), {elapsed:.2f}s < 10s",
    )


# ---------------------------------------------------------------------------
# 2. Poisson noise model
# ---------------------------------------------------------------------------


def _chi_square_pvalue(counts, lam):
    n = len(counts)
    max_n = int(counts.max())
    observed = np.bincount(counts, minlength=max_n + 1).astype(np.float64)
    expected = np.array([n * poisson_count_pmf(k, lam, 1.0) for k in range(max_n + 1)])
    expected = np.append(expected, max(n - expected.sum(), 0.0))
    observed = np.append(observed, 0.0)
    while len(expected) > 2 and expected[-1] < 5:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected, observed = expected[:-1], observed[:-1]
    while len(expected) > 2 and expected[0] < 5:
        expected[1] += expected[0]
        observed[1] += observed[0]
        expected, observed = expected[1:], observed[1:]
    return stats.chisquare(observed, expected * observed.sum() / expected.sum()).pvalue


def test_criterion_2_poisson_model():
    start = time.perf_counter()
    geometry = SensorGeometry(width=1000, height=100)  # 1e5 pixels
    pvalues = {}
    for eta_t in (0.5, 3.0, 10.0):
        out = inject_ba_noise(
            EventStream.empty(), NoiseSpec(eta=eta_t, seed=77), geometry, duration_us=1_000_000
        )
        counts = np.zeros(geometry.width * geometry.height, dtype=np.int64)
        np.add.at(counts, out.y * geometry.width + out.x, 1)
        pvalues[eta_t] = _chi_square_pvalue(counts, eta_t)

    single = SensorGeometry(width=1, height=1)
    eta = 50.0
    arrivals = inject_ba_noise(
        EventStream.empty(), NoiseSpec(eta=eta, seed=78), single, duration_us=60_000_000
    )
    gaps = np.diff(np.sort(arrivals.t)) / 1e6
    ks_p = stats.kstest(gaps, "expon", args=(0, 1.0 / eta)).pvalue
    elapsed = time.perf_counter() - start
    ok = all(p >= 0.01 for p in pvalues.values()) and ks_p >= 0.01 and elapsed < 30.0
    report(
        2,
        "Poisson counts chi-square + exponential inter-arrival KS",
        ok,
        f"chi2 p={ {k: round(v, 3) for k, v in pvalues.items()} }, KS p={ks_p:.3f}, "
        f"{elapsed:.1f}s < 30s",
    )


# ---------------------------------------------------------------------------
# 3. Connected-domain labeling oracle
# ---------------------------------------------------------------------------


def test_criterion_3_cdl_oracle():
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        occ = rng.random((16, 16)) < rng.uniform(0.05, 0.8)
        got = label_connected_domains(BinaryFrame(occ))
        ref_labels, ref_sizes = flood_fill_labeling(occ)
        if not (np.array_equal(got.label_of, ref_labels) and np.array_equal(got.size_of, ref_sizes)):
            mismatches += 1
    elapsed = time.perf_counter() - start
    report(
        3,
        "CDL partition identical to flood fill on 500 frames",
        mismatches == 0 and elapsed < 5.0,
        f"{mismatches} mismatches, {elapsed:.2f}s < 5s",
    )


# ---------------------------------------------------------------------------
# 4. Farthest-event-sampling oracle
# ---------------------------------------------------------------------------


def test_criterion_4_fps_oracle():
    rng = np.random.default_rng(404)
    start = time.perf_counter()
    violations = 0
    for _ in range(200):
        n = int(rng.integers(2, 257))
        t = int(rng.integers(1, 33))
        points = rng.random((n, 4))
        eligible = rng.random(n) < rng.uniform(0.3, 1.0)
        if not eligible.any():
            eligible[int(rng.integers(0, n))] = True
        chosen = farthest_event_sampling(points, t, eligible)
        coords = points[:, :3]
        elig_idx = np.flatnonzero(eligible)
        if chosen[0] != elig_idx[0]:
            violations += 1
            continue
        n_pick = min(t, len(elig_idx))
        taken = [int(chosen[0])]
        for step in range(1, n_pick):
            cand = np.array([i for i in elig_idx if i not in taken])
            # exhaustive scan: min distance to the chosen set per candidate
            d2 = ((coords[cand][:, None, :] - coords[taken][None, :, :]) ** 2).sum(-1)
            min_d2 = d2.min(axis=1)
            best = min_d2.max()
            argmax = set(cand[min_d2 == best].tolist())
            if int(chosen[step]) not in argmax:
                violations += 1
                break
            taken.append(int(chosen[step]))
    elapsed = time.perf_counter() - start
    report(
        4,
        "every FPS pick maximizes min-distance per exhaustive scan",
        violations == 0 and elapsed < 30.0,
        f"{violations} violations over 200 instances, {elapsed:.1f}s < 30s",
    )


# ---------------------------------------------------------------------------
# 5. Sparse-coding iteration vs textbook proximal gradient
# ---------------------------------------------------------------------------


def test_criterion_5_lcsc_ista_equivalence():
    rng = np.random.default_rng(505)
    start = time.perf_counter()
    k, atoms, n = 12, 8, 32
    dictionary = rng.standard_normal((k, atoms))
    signal = rng.standard_normal((n, k))
    lam = 0.1
    step = 1.0 / (np.linalg.norm(dictionary, 2) ** 2)
    params_w = ConvParams((step * dictionary.T).T[None, :, :].copy(), np.zeros(atoms))
    params_q = ConvParams(dictionary.T[None, :, :].copy(), np.zeros(k))

    e = np.zeros((1, n, atoms))
    s = signal[None, :, :]
    code = np.zeros((n, atoms))
    max_diff = 0.0
    for _ in range(50):
        e = lcsc_block(e, s, params_w, params_q, lam * step)
        grad = (code @ dictionary.T - signal) @ dictionary
        z = code - step * grad
        code = np.sign(z) * np.maximum(np.abs(z) - lam * step, 0.0)
        max_diff = max(max_diff, float(np.max(np.abs(e[0] - code))))
    elapsed = time.perf_counter() - start
    report(
        5,
        "LCSC iterates match ISTA over 50 steps",
        max_diff <= 1e-6 and elapsed < 5.0,
        f"max |diff| {max_diff:.2e} <= 1e-6, {elapsed:.2f}s < 5s",
    )


# ---------------------------------------------------------------------------
# 6. Gradient check
# ---------------------------------------------------------------------------


def test_criterion_6_gradient_check():
    rng = np.random.default_rng(606)
    start = time.perf_counter()
    n = 50
    points = rng.random((n, 4))
    points[:, 3] = rng.integers(0, 2, n) * 2 - 1
    bone = rng.random(n) < 0.6
    is_real = rng.random(n) < 0.5
    params = ModelParams.initialize(TINY_LEVELS, seed=11).astype(np.float64)
    plan = build_plan(points, bone, TINY_LEVELS)
    _, grads, _ = loss_and_gradients(plan, params, is_real)

    names = sorted(params.blocks)
    flat_index = [(name, i) for name in names for i in range(params.blocks[name].size)]
    probes = rng.choice(len(flat_index), size=200, replace=False)
    h = 1e-5
    worst = 0.0
    for probe in probes:
        name, i = flat_index[int(probe)]
        flat = params.blocks[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        lp, _ = bce_with_logits(forward_from_plan(plan, params), is_real)
        flat[i] = orig - h
        lm, _ = bce_with_logits(forward_from_plan(plan, params), is_real)
        flat[i] = orig
        fd = (lp - lm) / (2 * h)
        ad = grads[name].reshape(-1)[i]
        # the 1e-6 floor absorbs finite-difference noise on dead parameters
        worst = max(worst, abs(fd - ad) / max(abs(fd), abs(ad), 1e-6))
    elapsed = time.perf_counter() - start
    report(
        6,
        "200-parameter central-difference gradient check",
        worst <= 1e-4 and elapsed < 60.0,
        f"worst relative error {worst:.2e} <= 1e-4, {elapsed:.1f}s < 60s",
    )


# ---------------------------------------------------------------------------
# 7 + 8. End-to-end desk run and the window-vs-element bench
# ---------------------------------------------------------------------------

N_SCENES = 40
N_TRAIN = 32


def _scene_args(i):
    kind = ["two_objects", "moving_bar", "moving_disk", "two_objects"][i % 4]
    vx = 150.0 + 25 * (i % 4)
    vy = 40.0 + (i % 3) * 10
    size = 24 + 3 * (i % 3)
    if kind == "moving_bar":
        start = (4.0 + (i % 7), 40.0)
    else:
        start = (28.0 + (i % 9), 60.0 + (i % 5))
    return [
        "--kind", kind, "--width", 128, "--height", 128,
        "--velocity-x", vx, "--velocity-y", vy, "--object-size", size,
        "--contrast", 2.2, "--duration-us", 500_000, "--frame-rate", 400,
        "--start-x", start[0], "--start-y", start[1], "--seed", i,
    ]


def _run_cli(*args):
    code = cli_main([str(a) for a in args])
    assert code == 0, f"CLI failed: {args}"


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """Simulate, inject, train, and denoise the 40-scene desk workload."""
    root = tmp_path_factory.mktemp("desk")
    start = time.perf_counter()
    train_dir = root / "train"
    held_dir = root / "held"
    train_dir.mkdir()
    held_dir.mkdir()
    held_clean = []
    for i in range(N_SCENES):
        dest = train_dir if i < N_TRAIN else held_dir
        clean = root / f"clean_{i:02d}.evd"
        noisy = dest / f"scene_{i:02d}.evd"
        _run_cli("simulate", "--out", clean, *_scene_args(i))
        _run_cli("inject-noise", "--input", clean, "--out", noisy, "--ratio", 1.0, "--seed", 1000 + i)
        if i >= N_TRAIN:
            held_clean.append(noisy)

    checkpoint = root / "desk.wedn"
    _run_cli(
        "train", "--train", train_dir, "--out", checkpoint,
        "--epochs", 30, "--lr", 0.01, "--momentum", 0.9, "--seed", 0,
        "--window-size", 256, "--window-stride", 6,
    )

    held_files = sorted(held_dir.glob("scene_*.evd"))
    labeled = {}
    for name in ("wednet", "baf"):
        outs = []
        for path in held_files:
            out = root / f"{name}_{path.name}"
            args = ["denoise", "--input", path, "--out", out, "--filter", name]
            if name == "wednet":
                args += ["--checkpoint", checkpoint]
            _run_cli(*args)
            outs.append(out)
        labeled[name] = outs
    elapsed = time.perf_counter() - start
    return {
        "root": root,
        "checkpoint": checkpoint,
        "held": held_files,
        "labeled": labeled,
        "elapsed": elapsed,
    }


def _pooled_snr(truth_files, predicted_files=None):
    """Pooled survivor SNR; with no prediction files everything survives
    (the raw-stream baseline)."""
    m = n = 0
    for i, truth_path in enumerate(truth_files):
        truth, _ = read_events(truth_path)
        if predicted_files is None:
            kept = np.ones(len(truth), dtype=bool)
        else:
            predicted, _ = read_events(predicted_files[i])
            kept = predicted.label == int(Label.REAL)
        m += int(np.count_nonzero(kept & (truth.label == int(Label.REAL))))
        n += int(np.count_nonzero(kept & (truth.label == int(Label.NOISE))))
    return 20.0 * math.log10(m / n) if m and n else (math.inf if not n else -math.inf)


def test_criterion_7_end_to_end_desk_run(desk_run):
    held = desk_run["held"]
    raw = _pooled_snr(held)  # raw stream keeps everything: 0 dB at 100% ratio
    wednet = _pooled_snr(held, desk_run["labeled"]["wednet"])
    baf = _pooled_snr(held, desk_run["labeled"]["baf"])
    minutes = desk_run["elapsed"] / 60.0
    ok = (wednet - raw >= 6.0) and (wednet >= baf) and minutes <= 30.0
    report(
        7,
        "desk-scale training beats raw by 6 dB and the support filter",
        ok,
        f"raw {raw:.2f} dB, wednet {wednet:.2f} dB, baf {baf:.2f} dB, "
        f"wall {minutes:.1f} min <= 30",
    )


def test_criterion_8_window_vs_element_bench(desk_run):
    stream, geometry = read_events(desk_run["held"][0])
    params = load_checkpoint(desk_run["checkpoint"])
    bench_w = 2048
    wednet = WednetDenoiser(params=params, config=PipelineConfig(window_size=bench_w))
    wednet.predict(stream[: 4 * bench_w], geometry)  # warm the compiled kernels
    row_w = bench(wednet, stream, geometry, repetitions=5)
    row_b = bench(BafDenoiser(), stream, geometry, repetitions=3)
    row_r = bench(RpDenoiser(), stream, geometry, repetitions=3)
    ratio = row_w.events_per_second / max(row_b.events_per_second, 1e-9)
    ok = (
        row_w.events_per_inference == bench_w
        and bench_w >= 256
        and row_b.events_per_inference == 1.0
        and row_r.events_per_inference == 1.0
        and row_w.events_per_second >= 1e5
    )
    report(
        8,
        "window-based inference labels w events at once above 1e5 ev/s",
        ok,
        f"wednet {row_w.events_per_second:,.0f} ev/s @ w={bench_w}, "
        f"baf {row_b.events_per_second:,.0f} ev/s @ 1/inference, "
        f"wednet/baf speed ratio {ratio:.2f} (reported, not asserted)",
    )


# ---------------------------------------------------------------------------
# 9. Determinism of every subcommand
# ---------------------------------------------------------------------------


def test_criterion_9_subcommand_determinism(tmp_path):
    scene = ["--width", 48, "--height", 48, "--velocity-x", 60, "--object-size", 6,
             "--duration-us", 200_000, "--frame-rate", 200, "--seed", 5]
    outputs = {}
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        sim = d / "sim.evd"
        noisy = d / "noisy.evd"
        den = d / "den.evd"
        ckpt = d / "m.wedn"
        wout = d / "wednet.evd"
        evalcsv = d / "eval.csv"
        benchcsv = d / "bench.csv"
        _run_cli("simulate", "--out", sim, *scene)
        _run_cli("inject-noise", "--input", sim, "--out", noisy, "--ratio", 1.0, "--seed", 6)
        _run_cli("denoise", "--input", noisy, "--out", den, "--filter", "rp")
        _run_cli("train", "--train", noisy, "--out", ckpt, "--epochs", 1, "--seed", 7,
                 "--window-size", 128, "--levels", "16:8:0.3:4,8:4:0.6:4")
        _run_cli("denoise", "--input", noisy, "--out", wout, "--filter", "wednet",
                 "--checkpoint", ckpt)
        _run_cli("eval", "--input", noisy, "--filters", "raw,rp,tw", "--out", evalcsv)
        _run_cli("bench", "--input", noisy, "--filters", "rp", "--repetitions", 3,
                 "--out", benchcsv)
        bench_rows = [line.split(",") for line in benchcsv.read_text().strip().split("\n")]
        stable_bench = [[c for j, c in enumerate(r) if j not in (2, 3)] for r in bench_rows]
        outputs[run] = {
            "sim": sim.read_bytes(),
            "noisy": noisy.read_bytes(),
            "den": den.read_bytes(),
            "ckpt": ckpt.read_bytes(),
            "history": (d / "m.wedn.history.csv").read_bytes(),
            "wednet": wout.read_bytes(),
            "eval": evalcsv.read_bytes(),
            "bench": stable_bench,  # wall-clock columns excluded
        }
    mismatched = [k for k in outputs["a"] if outputs["a"][k] != outputs["b"][k]]
    report(
        9,
        "fixed seeds give byte-identical primary outputs",
        not mismatched,
        f"mismatched artifacts: {mismatched or 'none'}",
    )


# ---------------------------------------------------------------------------
# 10. Metric sanity
# ---------------------------------------------------------------------------


def test_criterion_10_metric_sanity(rng):
    truth = np.array([int(Label.REAL)] * 600 + [int(Label.NOISE)] * 600, dtype=np.uint8)
    predicted = np.full(1200, int(Label.REAL), dtype=np.uint8)
    zero = snr_db(truth, predicted)

    sources = rng.random((64, 4))
    targets = rng.random((10_000, 4))
    _, weights = idw_weights(targets, sources)
    max_dev = float(np.max(np.abs(weights.sum(axis=1) - 1.0)))
    ok = zero == 0.0 and max_dev <= 1e-12
    report(
        10,
        "snr(M=N) is exactly zero and IDW weights sum to one",
        ok,
        f"snr={zero!r}, max |sum(w)-1| = {max_dev:.2e} <= 1e-12",
    )
