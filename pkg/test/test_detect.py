import time

import numpy as np
import pytest

from linwalk import detect
from linwalk.config import NullSimConfig
from linwalk.detect import (
    DetectionReport, detect_multi_window, detect_single_window, match_change_points, merge_windows,
)
from linwalk.errors import TrackTooShortError
from linwalk.model import SeededRng, scale_spec, simulate, simulate_many, spec_from_degrees
from linwalk.statistic import DifferenceProcess, g_process_lw, threshold


def synthetic(h, norms, start=None):
    start = h if start is None else start
    norms = np.asarray(norms, dtype=float)
    centers = np.arange(start, start + len(norms))
    return DifferenceProcess(h, centers, np.column_stack([norms, np.zeros_like(norms)]), "lw")


def test_single_window_nothing_above_threshold():
    assert detect_single_window(synthetic(10, np.ones(50)), 1.0) == []


def test_single_window_single_peak():
    norms = np.full(80, 0.5)
    norms[30:33] = [1.5, 2.0, 1.5]
    G = synthetic(10, norms)
    assert detect_single_window(G, 1.0) == [int(G.centers[31])]


def test_single_window_second_peak_inside_deletion_zone():
    h = 10
    norms = np.full(100, 0.1)
    norms[20] = 3.0
    norms[20 + h] = 2.5
    G = synthetic(h, norms)
    assert detect_single_window(G, 1.0) == [int(G.centers[20])]


def test_single_window_peaks_outside_zone_in_detection_order():
    h = 10
    norms = np.full(100, 0.1)
    norms[20] = 2.5
    norms[20 + h + 1] = 3.0
    G = synthetic(h, norms)
    assert detect_single_window(G, 1.0) == [int(G.centers[31]), int(G.centers[20])]


def test_single_window_ties_go_to_lower_index():
    norms = np.full(100, 0.1)
    norms[40] = norms[70] = 4.0
    G = synthetic(10, norms)
    assert detect_single_window(G, 1.0) == [int(G.centers[40]), int(G.centers[70])]


def test_merge_prefers_small_windows():
    cps = merge_windows({30: [50, 200], 100: [60, 345, 130]})
    assert [(cp.index, cp.window) for cp in cps] == [(50, 30), (200, 30), (345, 100)]


def test_merge_uses_candidate_neighbourhood():
    # 110 from h=50 owns [61, 160]: 50 is outside, so it stays
    cps = merge_windows({30: [50], 50: [110, 40]})
    assert [(cp.index, cp.window) for cp in cps] == [(50, 30), (110, 50)]


def test_test_requires_long_enough_track(null_lw_spec):
    track = simulate(null_lw_spec, SeededRng(1)).slice(0, 60)
    conf = NullSimConfig(T=400, windows=[30], sims=10)
    with pytest.raises(TrackTooShortError):
        detect.test(track, conf, "lw", q=3.0)


def test_verdict_is_strict_comparison(null_lw_spec):
    track = simulate(null_lw_spec, SeededRng(1))
    conf = NullSimConfig(T=400, windows=[30], sims=10)
    M, Q, verdict = detect.test(track, conf, "lw", q=1e9)
    assert verdict == "retain" and Q == 1e9
    M2, _, verdict2 = detect.test(track, conf, "lw", q=M)
    assert M2 == M and verdict2 == "retain"
    assert detect.test(track, conf, "lw", q=M * 0.999)[2] == "reject"


def test_retain_reports_no_change_points(null_lw_spec):
    track = simulate(null_lw_spec, SeededRng(3))
    conf = NullSimConfig(T=400, windows=[30], sims=10)
    report = detect_multi_window(track, conf, "lw", q=1e9)
    assert isinstance(report, DetectionReport)
    assert report.verdict == "retain" and report.change_points == []
    assert report.sigma2_hat == pytest.approx(0.25, rel=0.2)


def test_detection_finds_both_turns(two_turn_spec):
    track = simulate(two_turn_spec, SeededRng(4))
    conf = NullSimConfig(T=150, windows=[20], sims=200, seed=1)
    report = detect_multi_window(track, conf, "lw", classify=True)
    assert report.verdict == "reject"
    match = match_change_points([50, 100], report.indices, tolerance=20 / 3)
    assert match.all_found
    assert all(cp.label in ("direction", "step_length", "both") for cp in report.change_points)


def test_detection_is_deterministic(two_turn_spec):
    track = simulate(two_turn_spec, SeededRng(4))
    conf = NullSimConfig(T=150, windows=[15, 20], sims=100, seed=9)
    a = detect_multi_window(track, conf, "lw", classify=True)
    b = detect_multi_window(track, conf, "lw", classify=True)
    assert (a.M, a.Q, a.verdict) == (b.M, b.Q, b.verdict)
    assert [(c.index, c.window, c.label) for c in a.change_points] == \
        [(c.index, c.window, c.label) for c in b.change_points]


def test_accepted_change_points_respect_neighbourhoods():
    spec = spec_from_degrees("lw", [55, -55, -45, -45], [1, 1, 1, 0.85], sigma2=9.0, horizon=530,
                             change_points=[50, 110, 345])
    conf = NullSimConfig(T=530, windows=[30, 50, 100], sims=200, seed=2)
    q = threshold(conf, "lw")
    for k in range(10):
        report = detect_multi_window(simulate(spec, SeededRng(50, k)), conf, "lw", q=q)
        for a in report.change_points:
            for b in report.change_points:
                if a.window < b.window:
                    assert not (b.index - b.window + 1 <= a.index <= b.index + b.window)


def test_match_change_points():
    m = match_change_points([50, 110, 345], [52, 300, 118, 349], tolerance=10)
    assert m.hits == [(50, 52), (110, 118), (345, 349)]
    assert m.missed == [] and m.surplus == [300]
    assert m.squared_errors == [4, 64, 16]


def test_statistic_grows_with_window():
    spec = spec_from_degrees("lw", [35, 55], [1, 1], sigma2=1.0, horizon=400, change_points=[200])
    m30, m60 = [], []
    for k in range(200):
        track = simulate(spec, SeededRng(60, k))
        m30.append(g_process_lw(track, 30).M)
        m60.append(g_process_lw(track, 60).M)
    assert np.mean(m60) > np.mean(m30)


@pytest.mark.slow
@pytest.mark.parametrize("kind,h,sigma2", [("lw", 30, 0.25), ("lw", 30, 1.0), ("rw", 50, 0.25)])
def test_significance_level(kind, h, sigma2):
    T = 400
    conf = NullSimConfig(T=T, windows=[h], sims=5000, alpha=0.05, seed=5)
    q = threshold(conf, kind)
    spec = spec_from_degrees(kind, [35], [1.0], sigma2=sigma2, horizon=T)
    rejections = [detect.test(tr, conf, kind, q=q)[2] == "reject" for tr in simulate_many(spec, 1234, 4000)]
    assert 0.035 <= np.mean(rejections) <= 0.065


@pytest.mark.slow
def test_limit_process_threshold_is_too_small_at_short_windows():
    # window variance estimates fatten the tails of G; the limit process ignores that
    T, h = 400, 30
    studentized = NullSimConfig(T=T, windows=[h], sims=5000, seed=9)
    limit = NullSimConfig(T=T, windows=[h], sims=5000, seed=9, null_kind="gamma")
    q_limit = threshold(limit, "lw")
    assert threshold(studentized, "lw") > q_limit
    spec = spec_from_degrees("lw", [35], [1.0], sigma2=0.25, horizon=T)
    rejections = [detect.test(tr, limit, "lw", q=q_limit)[2] == "reject" for tr in simulate_many(spec, 99, 4000)]
    assert np.mean(rejections) > 0.06


@pytest.mark.slow
@pytest.mark.parametrize("kind,h", [("lw", 30), ("rw", 50)])
def test_null_over_detection(kind, h):
    T = 400
    conf = NullSimConfig(T=T, windows=[h], sims=5000, seed=6)
    q = threshold(conf, kind)
    spec = spec_from_degrees(kind, [35], [1.0], sigma2=0.25, horizon=T)
    counts = [len(detect_multi_window(tr, conf, kind, q=q).change_points)
              for tr in simulate_many(spec, 4321, 4000)]
    counts = np.asarray(counts)
    assert 0.035 <= np.mean(counts >= 1) <= 0.065
    assert np.mean(counts >= 2) <= 0.03


def test_power_for_large_direction_change():
    T = 400
    conf = NullSimConfig(T=T, windows=[30], sims=500, seed=7)
    q = threshold(conf, "lw")
    spec = spec_from_degrees("lw", [0, 70], [1, 1], sigma2=0.25, horizon=T, change_points=[200])
    rejections = [detect.test(tr, conf, "lw", q=q)[2] == "reject" for tr in simulate_many(spec, 77, 200)]
    assert np.mean(rejections) > 0.9


@pytest.mark.slow
def test_power_increases_with_direction_change():
    T, runs = 400, 500
    power = {}
    for kind in ("lw", "rw"):
        conf = NullSimConfig(T=T, windows=[30], sims=1000, seed=8)
        q = threshold(conf, kind)
        for deg in (10, 30, 60, 90):
            spec = spec_from_degrees(kind, [0, deg], [1, 1], sigma2=0.25, horizon=T, change_points=[200])
            tracks = simulate_many(spec, 1000 + deg, runs)
            power[kind, deg] = np.mean([detect.test(tr, conf, kind, q=q)[2] == "reject" for tr in tracks])
    for kind in ("lw", "rw"):
        seq = [power[kind, d] for d in (10, 30, 60, 90)]
        assert all(b >= a - 0.01 for a, b in zip(seq, seq[1:]))
    assert power["lw", 90] > 0.9
    for deg in (10, 30, 60, 90):
        assert power["lw", deg] >= power["rw", deg]


@pytest.mark.slow
def test_multiple_windows_find_all_change_points():
    spec = spec_from_degrees("lw", [55, -55, -45, -45], [1, 1, 1, 0.85], sigma2=9.0, horizon=530,
                             change_points=[50, 110, 345])
    multi = NullSimConfig(T=530, windows=[30, 50, 100], sims=1000, seed=11)
    single = NullSimConfig(T=530, windows=[30], sims=1000, seed=11)
    q_multi, q_single = threshold(multi, "lw"), threshold(single, "lw")
    all_found = missed_third = 0
    runs = 200
    for track in simulate_many(spec, 530, runs):
        report = detect_multi_window(track, multi, "lw", q=q_multi)
        hits = {t: e for t, e in match_change_points(spec.change_points, report.indices, 100 / 3).hits}
        src = {cp.index: cp.window for cp in report.change_points}
        if len(hits) == 3 and all(abs(e - t) <= src[e] / 3 for t, e in hits.items()):
            all_found += 1
        lone = detect_multi_window(track, single, "lw", q=q_single)
        if 345 not in dict(match_change_points([345], lone.indices, 10).hits):
            missed_third += 1
    assert all_found >= runs / 2
    assert missed_third > runs / 2


@pytest.mark.slow
def test_precision_improves_with_scaling():
    base = spec_from_degrees("lw", [35, 25], [0.5, 0.5], sigma2=0.25, horizon=200, change_points=[100])
    eta, runs = 30, 500
    found, mse = [], []
    for n in (1, 2, 4):
        spec = scale_spec(base, n)
        h = eta * n
        conf = NullSimConfig(T=spec.horizon, windows=[h], sims=1000, seed=n)
        q = threshold(conf, "lw")
        errs, hits = [], 0
        for track in simulate_many(spec, 600 + n, runs):
            report = detect_multi_window(track, conf, "lw", q=q)
            m = match_change_points(spec.change_points, report.indices, h / 3)
            if m.hits:
                hits += 1
                errs.append(((m.hits[0][1] - m.hits[0][0]) / n) ** 2)
        found.append(hits / runs)
        mse.append(np.mean(errs) if errs else np.inf)
    assert found[0] <= found[1] + 0.02 and found[1] <= found[2] + 0.02
    assert mse[0] >= mse[1] >= mse[2]


def _detection_seconds(T, windows, sims):
    conf = NullSimConfig(T=T, windows=windows, sims=sims, seed=12)
    track = simulate(spec_from_degrees("lw", [35], [1.0], sigma2=0.25, horizon=T), SeededRng(12))
    best = np.inf
    for _ in range(3):
        start = time.perf_counter()
        q = threshold(conf, "lw", threads=1)
        detect_multi_window(track, conf, "lw", q=q)
        best = min(best, time.perf_counter() - start)
    return best


def _log_slope(sizes, seconds):
    return np.polyfit(np.log(sizes), np.log(seconds), 1)[0]


@pytest.mark.slow
def test_running_time_is_linear_in_windows_length_and_simulations():
    Hs = [1, 2, 3, 4]
    by_h = [_detection_seconds(2000, list(range(20, 20 + n)), 200) for n in Hs]
    Ts = [1000, 2000, 3000, 4000]
    by_t = [_detection_seconds(T, [20], 200) for T in Ts]
    Ss = [100, 200, 300, 400]
    by_s = [_detection_seconds(2000, [20], S) for S in Ss]
    # noise generation is shared by all windows of a simulation, which flattens the H sweep
    assert 0.3 <= _log_slope(Hs, by_h) <= 2.0
    assert 0.5 <= _log_slope(Ts, by_t) <= 2.0
    assert 0.5 <= _log_slope(Ss, by_s) <= 2.0
