"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints an ``ACCEPTANCE k: PASS/FAIL`` line; the terminal summary
collects them.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from occlusion_mot import formats
from occlusion_mot.appearance import adaptive_fuse
from occlusion_mot.association import hungarian
from occlusion_mot.experiments import (
    ablation_sweep,
    ams_reappearance,
    correct_appearance_matches,
    idsw_comparison,
    interior_optimum,
    simulate_suite,
    sweep_values,
)
from occlusion_mot.geometry import BoundingBox
from occlusion_mot.metrics import TrackRow, TrackTable, evaluate
from occlusion_mot.motion import KalmanModel, KalmanTrackState, accumulated_error, kf_predict
from occlusion_mot.simulation import SUITES, generate, standard_suite
from occlusion_mot.tracker import TrackerConfig, run_sequence
from oracles import brute_force_assignment, brute_force_idtp

pytestmark = pytest.mark.acceptance

NOISELESS = KalmanModel(std_weight_position=0.0, std_weight_velocity=0.0)


def test_error_accumulation_oracle(acceptance_line):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        e = rng.normal(0, 10, 8)
        tau = int(rng.integers(0, 101))
        st = KalmanTrackState(e.copy(), np.zeros((8, 8)))
        for _ in range(tau):
            st = kf_predict(st, NOISELESS)
        closed = accumulated_error(e, tau)
        rel = np.max(np.abs(closed - st.mean)) / max(np.max(np.abs(st.mean)), 1e-300)
        worst = max(worst, float(rel))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    acceptance_line(1, ok, f"max relative error {worst:.2e} over 1000 cases in {elapsed:.2f}s")
    assert ok


def test_hungarian_optimality(acceptance_line):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        n, m = (int(v) for v in rng.integers(1, 8, size=2))
        cost = rng.uniform(0, 1, (n, m))
        r = hungarian(cost)
        got = math.fsum(cost[i, j] for i, j in r.matched)
        if len(r.matched) != min(n, m) or got != brute_force_assignment(cost):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30.0
    acceptance_line(2, ok, f"{mismatches} mismatches in 1000 instances up to 7x7, {elapsed:.2f}s")
    assert ok


def test_ams_equivalence_at_alpha_one(acceptance_line, tmp_path):
    differing = []
    for name in SUITES:
        obs = generate(standard_suite(name, 0)).observations()
        a, _ = run_sequence(obs, TrackerConfig(alpha0=1.0))
        b, _ = run_sequence(obs, TrackerConfig(ams=False))
        formats.write_results(tmp_path / f"{name}_a.txt", a)
        formats.write_results(tmp_path / f"{name}_b.txt", b)
        if (tmp_path / f"{name}_a.txt").read_bytes() != (tmp_path / f"{name}_b.txt").read_bytes():
            differing.append(name)
    ok = not differing
    acceptance_line(3, ok, f"byte-identical on {len(SUITES) - len(differing)}/{len(SUITES)} suites")
    assert ok


def test_ams_reappearance_benefit(acceptance_line):
    sims = simulate_suite(("cross", "linger"), range(50))
    cmp_ = ams_reappearance(sims, alpha0=0.2, theta_v=0.2, baseline_alpha0=1.0)
    frac = cmp_.fraction(np.greater)
    ok = len(cmp_.labels) == 100 and cmp_.mean_treatment > cmp_.mean_baseline and frac >= 0.8
    acceptance_line(4, ok, f"mean reappearance IoU {cmp_.mean_treatment:.3f} vs {cmp_.mean_baseline:.3f}, "
                           f"better in {frac:.0%} of {len(cmp_.labels)} scenarios")
    assert ok


def test_odm_benefit(acceptance_line):
    sims = simulate_suite(("cross",), range(50))
    base = TrackerConfig()
    cmp_ = idsw_comparison(sims, base, dataclasses.replace(base, offset=0.0))
    improved = int(np.sum(cmp_.treatment < cmp_.baseline))
    ok = cmp_.treatment.sum() <= cmp_.baseline.sum() and improved >= 1
    acceptance_line(5, ok, f"IDSw total {int(cmp_.treatment.sum())} with o=0.2 vs {int(cmp_.baseline.sum())} "
                           f"with o=0, {improved} scenarios strictly improved")
    assert ok


def test_fusion_correctness(acceptance_line):
    rng = np.random.default_rng(6)
    el, eg = rng.normal(size=(2, 64))
    boundaries = np.array_equal(adaptive_fuse(el, eg, 6), el) and np.array_equal(adaptive_fuse(el, eg, 0), eg)
    fused_good = fused_bad = global_good = global_bad = 0
    for sim in simulate_suite(("follow",), range(10)):
        g, b = correct_appearance_matches(sim, TrackerConfig(fusion=True))
        fused_good, fused_bad = fused_good + g, fused_bad + b
        g, b = correct_appearance_matches(sim, TrackerConfig(fusion=False))
        global_good, global_bad = global_good + g, global_bad + b
    ok = boundaries and fused_good >= global_good
    acceptance_line(6, ok, f"boundaries exact={boundaries}; correct appearance matches fused {fused_good} "
                           f"(wrong {fused_bad}) vs global-only {global_good} (wrong {global_bad})")
    assert ok


def test_ablation_interior_optimum(acceptance_line):
    sims = simulate_suite(SUITES, range(10))
    rows = ablation_sweep("alpha0", sims, sweep_values(0.1))
    table = " ".join(f"{r.value:.1f}:{r.idsw}" for r in rows)
    ok = len(rows) == 11 and interior_optimum(rows)
    best = min(rows, key=lambda r: (r.idsw, r.value))
    acceptance_line(7, ok, f"IDSw by alpha0 {table}; lowest at alpha0={best.value:.1f}")
    assert ok


def swap_instance():
    gt, pred = [], []
    for f in range(1, 11):
        gt += [TrackRow(f, 1, BoundingBox(0, 0, 10, 10)), TrackRow(f, 2, BoundingBox(100, 0, 10, 10))]
        a, b = (1, 2) if f <= 5 else (2, 1)
        pred += [TrackRow(f, a, BoundingBox(1, 0, 10, 10)), TrackRow(f, b, BoundingBox(101, 0, 10, 10))]
    return TrackTable(gt), TrackTable(pred)


def test_metrics_self_consistency(acceptance_line):
    perfect = []
    for name in SUITES:
        gt = generate(standard_suite(name, 0)).gt
        r = evaluate(gt, gt)
        perfect.append((r.mota, r.idf1, r.idsw, r.fp, r.fn) == (1.0, 1.0, 0, 0, 0))
    gt, pred = swap_instance()
    r = evaluate(gt, pred)
    plain = lambda t: [(x.frame, x.id, tuple(x.box.to_array())) for x in t]  # noqa: E731
    idtp = brute_force_idtp(plain(gt), plain(pred))
    expected_idf1 = 2 * idtp / (len(gt) + len(pred))
    ok = all(perfect) and r.idsw == 2 and r.idf1 == expected_idf1
    acceptance_line(8, ok, f"perfect self-evaluation on {sum(perfect)}/{len(SUITES)} suites; swap instance "
                           f"IDSw={r.idsw}, IDF1={r.idf1:.3f} (brute force {expected_idf1:.3f})")
    assert ok


def ten_field_valid(line: str) -> bool:
    parts = line.split(",")
    if len(parts) != 10:
        return False
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        return False
    return vals[0] == int(vals[0]) >= 1 and vals[1] == int(vals[1]) and vals[4] > 0 and vals[5] > 0


CANONICAL = (
    "1,-1,10.00,20.00,30.00,40.00,0.90,-1,-1,-1\n"
    "2,-1,12.50,20.25,30.00,40.00,0.55,-1,-1,-1\n"
    "2,-1,300.00,120.00,42.10,110.70,0.99,-1,-1,-1\n"
)


def test_format_conformance(acceptance_line, tmp_path):
    (tmp_path / "det.txt").write_text(CANONICAL)
    formats.write_mot(tmp_path / "again.txt", formats.parse_mot(tmp_path / "det.txt"))
    round_trip = (tmp_path / "again.txt").read_text() == CANONICAL
    checked = invalid = 0
    for name in SUITES:
        sim = generate(standard_suite(name, 0))
        paths = formats.export_simulation(sim, tmp_path / name)
        results, _ = run_sequence(sim.observations())
        formats.write_results(tmp_path / name / "res.txt", results)
        for p in (paths["gt"], paths["det"], tmp_path / name / "res.txt"):
            for line in p.read_text().splitlines():
                checked += 1
                invalid += not ten_field_valid(line)
    ok = round_trip and invalid == 0 and checked > 0
    acceptance_line(9, ok, f"canonical round trip={round_trip}; {checked - invalid}/{checked} written lines "
                           f"pass the 10-field validator")
    assert ok
