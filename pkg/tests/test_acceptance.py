"""Release gate: nine numbered checks with pinned tolerances.

Each test prints exactly one scorecard line (criterion N: ... -> PASS/FAIL)
through the capture bypass, so a full run reads as a checklist even when
everything passes. Tolerances are fixed here on purpose; if behaviour
drifts, these fail rather than adapt.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from shuttlekit.contact import reflect
from shuttlekit.corpus import generate_corpus
from shuttlekit.dynamics import AeroParams, ShuttleState, accel, drag_jacobian, step
from shuttlekit.estimator import evaluate_predictor, transition_jacobian
from shuttlekit.geometry import quat_from_axis_angle
from shuttlekit.rally import (
    MAX_HITS_REACHED,
    SIDE_A,
    SIDE_B,
    CourtSpec,
    build_serve,
    default_hitter,
    simulate_rally,
)
from shuttlekit.rewards import (
    SIGMAS_END,
    SIGMAS_START,
    SwingSigmas,
    r_swing,
    r_track,
    r_v,
    r_y_align,
    sigma_schedule,
)
from shuttlekit.stream import export_flight, replay

PARAMS = AeroParams()

N_LAUNCHES = 2_000_000
RATE_TARGET = 0.0098
RATE_TOL = 0.0030
TIME_BUDGET_S = 300.0


@pytest.fixture()
def scorecard(capsys):
    def line(criterion, detail, ok):
        verdict = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"\ncriterion {criterion}: {detail} -> {verdict}", flush=True)
        return f"criterion {criterion}: {detail}"

    return line


@pytest.fixture(scope="module")
def wide_sweep():
    # One big filtering pass shared by the rate and timing-window checks.
    t0 = time.perf_counter()
    _, stats = generate_corpus(N_LAUNCHES, seed=7, include_trajectory=False,
                               store_records=False)
    return stats, time.perf_counter() - t0


def test_criterion_1_acceptance_rate(wide_sweep, scorecard):
    stats, elapsed = wide_sweep
    rate = stats["rate"]
    rate_ok = abs(rate - RATE_TARGET) <= RATE_TOL
    time_ok = elapsed < TIME_BUDGET_S
    detail = (f"rate={rate:.6f} ({stats['n_accepted']}/{stats['n_total']}) "
              f"target={RATE_TARGET:.4f}+-{RATE_TOL:.4f}, "
              f"elapsed={elapsed:.0f}s budget={TIME_BUDGET_S:.0f}s")
    msg = scorecard(1, detail, rate_ok and time_ok)
    assert rate_ok and time_ok, msg


def test_criterion_2_flight_time_window(wide_sweep, scorecard):
    stats, _ = wide_sweep
    t_star = stats["t_star"]
    frac = float(np.mean((t_star >= 0.8) & (t_star <= 1.4)))
    ok = frac >= 0.90
    msg = scorecard(2, f"t_star in [0.8,1.4]s fraction={frac:.4f} target>=0.90", ok)
    assert ok, msg


def _significant_increases(err):
    """Count adjacent lead pairs whose error rises at 95% confidence.

    Columns run from the longest lead to the shortest; an improving
    predictor has non-negative paired differences in expectation.
    """
    violations = pairs = 0
    for c in range(err.shape[1] - 1):
        mask = np.isfinite(err[:, c]) & np.isfinite(err[:, c + 1])
        if mask.sum() < 2:
            continue
        d = err[mask, c] - err[mask, c + 1]
        pairs += 1
        sem = d.std(ddof=1) / math.sqrt(d.size)
        if d.mean() < -1.96 * sem:
            violations += 1
    return violations, pairs


def test_criterion_3_predictor_error_curves(records20, scorecard):
    curves = evaluate_predictor(records20, sigma=0.005, rate=210.0, seed=0,
                                params=PARAMS)
    taus = curves["lead_times"]
    i06 = int(np.argmin(np.abs(taus - 0.6)))
    i03 = int(np.argmin(np.abs(taus - 0.3)))
    assert abs(taus[i06] - 0.6) < 1e-9 and abs(taus[i03] - 0.3) < 1e-9

    pos06 = float(curves["pos_err_mean"][i06])
    pos03 = float(curves["pos_err_mean"][i03])
    t06 = float(curves["t_err_mean"][i06])
    viol_p, pairs_p = _significant_increases(curves["pos_err"])
    viol_t, pairs_t = _significant_increases(curves["t_err"])
    allowance = math.ceil(0.05 * (pairs_p + pairs_t))
    mono_ok = (viol_p + viol_t) <= allowance

    ok = pos06 < 0.100 and pos03 < 0.020 and t06 < 0.040 and mono_ok
    detail = (f"pos@0.6s={pos06 * 1e3:.1f}mm (<100), pos@0.3s={pos03 * 1e3:.1f}mm "
              f"(<20), t@0.6s={t06 * 1e3:.1f}ms (<40), "
              f"rising pairs={viol_p + viol_t}/{pairs_p + pairs_t} (<= {allowance})")
    msg = scorecard(3, detail, ok)
    assert ok, msg


def test_criterion_4_jacobians_vs_finite_differences(scorecard):
    rng = np.random.default_rng(42)
    h = 1e-6
    worst_drag = worst_trans = 0.0
    dt = 1.0 / 210.0
    for _ in range(1000):
        x = np.empty(6)
        x[:3] = rng.uniform([-1, -2, 0], [8, 2, 3])
        x[3:] = rng.uniform([-25, -3, -8], [-5, 3, 18])

        A = drag_jacobian(x[3:], PARAMS)
        num = np.empty((3, 3))
        for j in range(3):
            d = np.zeros(3)
            d[j] = h
            ap = accel(ShuttleState(p=x[:3], v=x[3:] + d), PARAMS)
            am = accel(ShuttleState(p=x[:3], v=x[3:] - d), PARAMS)
            num[:, j] = (ap - am) / (2 * h)
        worst_drag = max(worst_drag, np.abs(A - num).max() / np.abs(num).max())

        F = transition_jacobian(x, dt, PARAMS)
        num6 = np.empty((6, 6))
        for j in range(6):
            d = np.zeros(6)
            d[j] = h
            sp = step(ShuttleState.from_vector(x + d), dt, PARAMS).as_vector()
            sm = step(ShuttleState.from_vector(x - d), dt, PARAMS).as_vector()
            num6[:, j] = (sp - sm) / (2 * h)
        worst_trans = max(worst_trans, np.abs(F - num6).max() / np.abs(num6).max())

    ok = worst_drag < 1e-5 and worst_trans < 1e-5
    detail = (f"1000 states: drag rel err={worst_drag:.2e}, "
              f"transition rel err={worst_trans:.2e} (both < 1e-05)")
    msg = scorecard(4, detail, ok)
    assert ok, msg


def test_criterion_5_reflection_invariants(scorecard):
    n = 100_000
    rng = np.random.default_rng(5)
    v_in = rng.uniform(-20.0, 20.0, (n, 3))
    v_rk = rng.uniform(-6.0, 6.0, (n, 3))
    normals = rng.normal(size=(n, 3))
    lens = np.linalg.norm(normals, axis=1)
    assert lens.min() > 1e-6
    normals /= lens[:, None]

    worst_tan = worst_energy = 0.0
    still = np.zeros(3)
    for i in range(n):
        nv = normals[i]
        out = reflect(v_in[i], v_rk[i], nv)
        tan_in = v_in[i] - np.dot(v_in[i], nv) * nv
        tan_out = out - np.dot(out, nv) * nv
        worst_tan = max(worst_tan, np.abs(tan_out - tan_in).max())

        mirrored = reflect(v_in[i], still, nv)
        worst_energy = max(worst_energy,
                           abs(np.linalg.norm(mirrored) - np.linalg.norm(v_in[i])))

    smash = reflect([-10.0, 0.0, 0.0], [5.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    exact = np.array_equal(smash, [20.0, 0.0, 0.0])

    ok = worst_tan <= 1e-10 and worst_energy <= 1e-10 and exact
    detail = (f"{n} impacts: tangential drift={worst_tan:.1e}, "
              f"|speed| drift={worst_energy:.1e} (<= 1e-10), "
              f"-10 into 5 m/s racket -> {smash[0]:g} m/s (want 20 exact)")
    msg = scorecard(5, detail, ok)
    assert ok, msg


def test_criterion_6_rally_degradation(scorecard):
    court = CourtSpec()
    serve = build_serve(court, PARAMS)
    sigmas = [0.0, 0.02, 0.05, 0.1]
    n_rallies = 200

    perfect = simulate_rally(court, default_hitter(SIDE_A, court),
                             default_hitter(SIDE_B, court), serve, PARAMS,
                             np.random.default_rng([0, 0]))
    perfect_ok = (perfect.length >= 21
                  and perfect.termination == MAX_HITS_REACHED
                  and all(ev.success for ev in perfect.hits))

    lengths = {}
    for sig in sigmas:
        arr = np.empty(n_rallies)
        for k in range(n_rallies):
            rng = np.random.default_rng([0, k])  # paired across sigmas
            out = simulate_rally(court,
                                 default_hitter(SIDE_A, court, pos_error_sigma=sig),
                                 default_hitter(SIDE_B, court, pos_error_sigma=sig),
                                 serve, PARAMS, rng)
            arr[k] = out.length
        lengths[sig] = arr

    mono_ok = True
    for lo, hi in zip(sigmas, sigmas[1:]):
        d = lengths[lo] - lengths[hi]
        sem = d.std(ddof=1) / math.sqrt(d.size)
        if d.mean() < -1.96 * sem:  # significantly increasing with noise
            mono_ok = False

    means = [float(lengths[s].mean()) for s in sigmas]
    ok = perfect_ok and mono_ok
    detail = (f"perfect rally length={perfect.length} (>=21, all hits clean), "
              f"mean lengths over sigma {sigmas} = "
              f"[{', '.join(f'{m:.2f}' for m in means)}] non-increasing at 95%")
    msg = scorecard(6, detail, ok)
    assert ok, msg


def test_criterion_7_reward_anchors(scorecard):
    checks = {
        "r_track(0.55)-1/e": abs(r_track(0.55) - math.exp(-1.0)),
        "r_swing(perfect)-1": abs(
            r_swing(0.0, 0.0, np.zeros(3), np.array([0.0, 0.0, 1.0]),
                    SIGMAS_START) - 1.0),
        "r_v(3;3)-(1-1/e)": abs(r_v(3.0, 3.0) - (1.0 - math.exp(-1.0))),
        "r_y_align(45deg)-0.5": abs(
            r_y_align(quat_from_axis_angle(np.array([0.0, 0.0, 1.0]),
                                           math.pi / 4)) - 0.5),
    }
    worst = max(checks.values())
    start_ok = sigma_schedule(0.0) == SwingSigmas(2.0, 8.0, 3.0) == SIGMAS_START
    end_ok = sigma_schedule(1.0) == SwingSigmas(0.1, 1.0, 3.0) == SIGMAS_END

    ok = worst <= 1e-12 and start_ok and end_ok
    detail = (f"anchor residuals max={worst:.1e} (<= 1e-12), "
              f"schedule endpoints (2.0,8.0)->(0.1,1.0) exact={start_ok and end_ok}")
    msg = scorecard(7, detail, ok)
    assert ok, msg


def test_criterion_8_stream_matches_batch(records20, tmp_path, scorecard):
    recs = records20[:2]
    batch = evaluate_predictor(recs, sigma=0.005, rate=210.0, seed=11,
                               lead_times=[0.6], params=PARAMS)

    worst = 0.0
    paced_same = True
    for r, rec in enumerate(recs):
        path = tmp_path / f"flight_{rec.index}.ndjson"
        export_flight(rec, path, sigma=0.005, rate=210.0, seed=11,
                      lead_time=0.6, params=PARAMS)
        fast = replay(path)
        slow = replay(path, speed=25.0)
        paced_same = paced_same and fast == slow
        track = fast["tracks"][rec.index]
        worst = max(worst,
                    abs(track["pos_error"] - float(batch["pos_err"][r, 0])),
                    abs(track["t_error"] - float(batch["t_err"][r, 0])))

    ok = worst <= 1e-6 and paced_same
    detail = (f"replay vs batch max |delta|={worst:.1e} (<= 1e-06), "
              f"pacing-independent={paced_same}")
    msg = scorecard(8, detail, ok)
    assert ok, msg


def _run_cli(args, cwd):
    res = subprocess.run([sys.executable, "-m", "shuttlekit", *args],
                         cwd=cwd, capture_output=True, timeout=600)
    assert res.returncode == 0, res.stderr.decode()
    return res.stdout


def test_criterion_9_cli_byte_determinism(records20, tmp_path, scorecard):
    flight = tmp_path / "flight.ndjson"
    export_flight(records20[0], flight, seed=4, lead_time=0.5, params=PARAMS)

    # Relative output paths + per-run cwd keep the two runs comparable
    # byte for byte, stdout included.
    jobs = {
        "generate": ["generate", "--n", "2000", "--seed", "5",
                     "--out", "c.jsonl", "--stats", "s.csv"],
        "evaluate-ekf": ["evaluate-ekf", "--records", "2", "--seed", "5",
                         "--out", "e.csv"],
        "rally": ["rally", "--rallies", "3", "--sigma-pos", "0,0.05",
                  "--max-hits", "5", "--log-rallies", "2", "--seed", "5",
                  "--sweep-out", "sweep.csv", "--log-out", "log.jsonl"],
        "replay": ["replay", str(flight), "--out", "r.json"],
        "serve": ["serve", "--replay", str(flight)],
    }

    stable = []
    for name, argv in jobs.items():
        outputs = []
        for run in ("first", "second"):
            d = tmp_path / f"{name}-{run}"
            d.mkdir()
            stdout = _run_cli(argv, d)
            files = {p.name: p.read_bytes() for p in sorted(d.iterdir())}
            outputs.append((stdout, files))
        if outputs[0] == outputs[1]:
            stable.append(name)

    ok = len(stable) == len(jobs)
    detail = f"byte-identical reruns for {len(stable)}/{len(jobs)} subcommands"
    msg = scorecard(9, detail, ok)
    assert ok, (msg, sorted(set(jobs) - set(stable)))
