"""Acceptance criteria. Each test records one PASS/FAIL line, printed after the run.

Run alone with ``pytest tests/test_acceptance.py``; criterion C1 takes the
longest (20 reconstructions at 1024 x 1024 x 20).
"""

import hashlib
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dihm.cli import main
from dihm.errors import ShadowDensityWarning
from dihm.forward import (SHADOW_DENSITY_LIMIT, Particle, generate_particle_field, make_field,
                          shadow_density, synthesize_hologram)
from dihm.optics import OpticalConfig, propagate, propagating_band
from dihm.particles import binarize, connected_components, detect, morphological_close
from dihm.pipeline import (HolographyOperator, SolverSettings, VolumeStack, cached_operator,
                           contrast_image, median_background, rihvr_solve)
from dihm.forward import Hologram
from dihm.survey import (LAYOUTS, covering_path, depth_profile, dive_path, gaussian_smooth,
                         interpolate_map, locus_points, point_layout, ridge_offsets,
                         sigmoid_depth_field, simulate_mission)

from helpers import match_detections, small_config

# C1 tolerances
C1_FIELDS = 20
C1_PARTICLES = 50
C1_MIN_RECALL = 0.90
C1_MAX_FALSE_POSITIVE = 0.10
C1_MAX_LATERAL_PX = 2.0
C1_MAX_AXIAL_M = 0.25e-3
C1_BUDGET_S = 600.0
C1_SEED = 2024

# C2 tolerances
C2_IDENTITY = 1e-12
C2_CONSERVATION = 1e-9

# C3 tolerances
C3_ADJOINT = 1e-6
C3_GRADIENT = 1e-4
C3_SEEDS = 10

# C5 / C6
SURVEY_SEEDS = 20
C5_MIN_SEEDS = 18
C5_LOCUS_FRACTION = 0.80
C5_LOCUS_POINTS = 50
C5_RIDGE_HALF_WIDTH = 0.3  # m searched either side of the locus

# C7
C7_EXPECTED = 0.472
C7_TOL = 1e-3


def record(verdicts, key, passed, detail):
    verdicts.append((key, bool(passed), detail))
    return passed


# -- C1: round-trip detection --------------------------------------------------------

@pytest.fixture(scope="module")
def round_trip():
    cfg = OpticalConfig(sensor_width=1024, sensor_height=1024, n_planes=20)
    radius_px = 0.5 * 20e-6 / cfg.pixel_pitch
    rows = []
    solve_time = 0.0
    sim_time = 0.0
    t0 = time.perf_counter()
    operator = cached_operator(cfg)
    settings_ = SolverSettings(max_iterations=50)
    operator.lipschitz(settings_.power_iterations)
    solve_time += time.perf_counter() - t0
    for i in range(C1_FIELDS):
        t0 = time.perf_counter()
        field = generate_particle_field(C1_PARTICLES, 20e-6, cfg, seed=[C1_SEED, i])
        # uniform unit illumination: the recorded frame is already background-normalised
        holo = synthesize_hologram(field, 0.01, seed=[C1_SEED, i, 1])
        sim_time += time.perf_counter() - t0
        t0 = time.perf_counter()
        res = rihvr_solve(contrast_image(holo), operator, settings_)
        frame = detect(VolumeStack(cfg.z_planes, res.x), cfg)
        solve_time += time.perf_counter() - t0
        pairs, lateral, axial = match_detections(frame.detections, list(field.particles),
                                                 cfg.pixel_pitch, radius_px)
        rows.append(dict(truth=len(field), found=frame.count, matched=len(pairs),
                         lateral=lateral, axial=axial, s_d=field.shadow_density))
    return cfg, rows, solve_time, sim_time


@pytest.mark.slow
def test_c1_round_trip_accuracy(round_trip, verdicts):
    cfg, rows, solve_time, sim_time = round_trip
    recall = float(np.mean([r["matched"] / r["truth"] for r in rows]))
    found = sum(r["found"] for r in rows)
    false_pos = (found - sum(r["matched"] for r in rows)) / max(found, 1)
    lateral = float(np.mean(np.concatenate([r["lateral"] for r in rows])))
    axial = float(np.mean(np.concatenate([r["axial"] for r in rows])))
    s_d = float(np.mean([r["s_d"] for r in rows]))
    ok = (recall >= C1_MIN_RECALL and false_pos <= C1_MAX_FALSE_POSITIVE
          and lateral <= C1_MAX_LATERAL_PX and axial <= C1_MAX_AXIAL_M)
    record(verdicts, "C1a round-trip accuracy", ok,
           f"recall={recall:.3f} (>= {C1_MIN_RECALL}) false_pos={false_pos:.3f} "
           f"(<= {C1_MAX_FALSE_POSITIVE}) lateral={lateral:.2f}px (<= {C1_MAX_LATERAL_PX}) "
           f"axial={axial * 1e3:.3f}mm (<= {C1_MAX_AXIAL_M * 1e3}) s_d={s_d:.2e} "
           f"fields={len(rows)}")
    # 50 particles in the 1024^2 footprint: four times the full-sensor 3.8e-3
    assert s_d == pytest.approx(shadow_density(C1_PARTICLES / cfg.sample_volume_m3,
                                               cfg.gap_depth, 20e-6), rel=1e-9)
    assert recall >= C1_MIN_RECALL
    assert false_pos <= C1_MAX_FALSE_POSITIVE
    assert lateral <= C1_MAX_LATERAL_PX
    assert axial <= C1_MAX_AXIAL_M


@pytest.mark.slow
def test_c1_runtime_budget(round_trip, verdicts):
    cfg, rows, solve_time, sim_time = round_trip
    ok = solve_time <= C1_BUDGET_S
    record(verdicts, "C1b round-trip runtime", ok,
           f"reconstruct+detect={solve_time:.0f}s (<= {C1_BUDGET_S:.0f}s) "
           f"simulation={sim_time:.0f}s, {len(rows)} fields at 1024x1024x20, 1 core")
    if not ok:
        # the budget is a hardware-dependent gate; report the miss without hiding it
        pytest.xfail(f"runtime {solve_time:.0f}s exceeds the {C1_BUDGET_S:.0f}s budget on this machine")


# -- C2: propagation ---------------------------------------------------------------

def band_limited(cfg, seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=cfg.shape) + 1j * rng.normal(size=cfg.shape)
    return np.fft.ifft2(np.fft.fft2(f) * propagating_band(cfg))


def test_c2_propagation(verdicts):
    cfg = small_config(n=128)
    worst = dict(identity=0.0, energy=0.0, composition=0.0, unitarity=0.0)
    for seed in range(5):
        f = band_limited(cfg, seed)
        norm = np.linalg.norm(f)
        e0 = np.sum(np.abs(f) ** 2)
        worst["identity"] = max(worst["identity"], np.linalg.norm(propagate(f, 0.0, cfg) - f) / norm)
        for z in (1e-3, 5e-3, -8e-3):
            e = np.sum(np.abs(propagate(f, z, cfg)) ** 2)
            worst["energy"] = max(worst["energy"], abs(e - e0) / e0)
        one = propagate(f, 7e-3, cfg)
        two = propagate(propagate(f, 3e-3, cfg), 4e-3, cfg)
        worst["composition"] = max(worst["composition"], np.linalg.norm(two - one) / np.linalg.norm(one))
        back = propagate(propagate(f, 6e-3, cfg), -6e-3, cfg)
        worst["unitarity"] = max(worst["unitarity"], np.linalg.norm(back - f) / norm)
    ok = (worst["identity"] <= C2_IDENTITY and worst["energy"] <= C2_CONSERVATION
          and worst["composition"] <= C2_CONSERVATION and worst["unitarity"] <= C2_CONSERVATION)
    record(verdicts, "C2 propagation suite", ok,
           " ".join(f"{k}={v:.1e}" for k, v in worst.items())
           + f" (<= {C2_IDENTITY:g} identity, {C2_CONSERVATION:g} others)")
    assert ok, worst


# -- C3: solver ------------------------------------------------------------------

def test_c3_solver(verdicts):
    op = HolographyOperator(small_config(n=64, planes=6), np.float64)
    rng = np.random.default_rng(0)
    x = rng.random(op.volume_shape)
    y = rng.normal(size=op.image_shape)
    lhs, rhs = np.vdot(op.forward(x), y), np.vdot(x, op.adjoint(y))
    adjoint_err = abs(lhs - rhs) / abs(lhs)

    b = rng.normal(size=op.image_shape)
    v = rng.normal(size=op.volume_shape)

    def f(u):
        r = op.forward(u) - b
        return 0.5 * np.vdot(r, r)

    h = 1e-4
    fd = (f(x + h * v) - f(x - h * v)) / (2 * h)
    exact = np.vdot(op.adjoint(op.forward(x) - b), v)
    grad_err = abs(fd - exact) / abs(exact)

    monotone = 0
    sparse = 0
    restarts = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShadowDensityWarning)
        for seed in range(C3_SEEDS):
            cfg = small_config(n=64, planes=6)
            holo = synthesize_hologram(generate_particle_field(4, 20e-6, cfg, seed=seed), 0.01, seed)
            data = contrast_image(holo)
            op32 = HolographyOperator(cfg, np.float32)
            base = SolverSettings(max_iterations=30, convergence_tol=0)
            res = rihvr_solve(data, op32, base)
            restarts += res.restarts
            obj = np.asarray(res.objective)
            monotone += bool(np.all(np.diff(obj) <= 0) and obj[-1] <= obj[0])
            heavy = rihvr_solve(data, op32, SolverSettings(max_iterations=30, convergence_tol=0,
                                                           sparsity_scale=10 * base.sparsity_scale))

            def above(u):
                return int(np.count_nonzero(u > 1e-6 * u.max())) if u.max() > 0 else 0

            sparse += above(heavy.x) <= above(res.x)
    ok = (adjoint_err <= C3_ADJOINT and grad_err <= C3_GRADIENT
          and monotone == C3_SEEDS and sparse == C3_SEEDS)
    record(verdicts, "C3 solver correctness", ok,
           f"adjoint={adjoint_err:.1e} (<= {C3_ADJOINT:g}) gradient={grad_err:.1e} "
           f"(<= {C3_GRADIENT:g}) non-increasing={monotone}/{C3_SEEDS} (restarts={restarts}) "
           f"sparsity-monotone={sparse}/{C3_SEEDS}")
    assert ok


# -- C4: segmentation chain ----------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 30), st.integers(1, 30))), st.integers(0, 3))
def closing_idempotent(mask, r):
    once = morphological_close(mask, r)
    assert np.array_equal(morphological_close(once, r), once)


@settings(max_examples=100, deadline=None)
@given(arrays(float, (16, 16), elements=st.floats(0, 1e4)), st.sampled_from([0.25, 2.0, 8.0, 1024.0]))
def threshold_scale_invariant(img, c):
    # power-of-two factors scale floats exactly, so the masks must agree bit for bit
    assert np.array_equal(binarize(img).mask, binarize(img * c).mask)


def test_c4_segmentation(verdicts):
    def frames(vals):
        return [Hologram(np.asarray(v, float)) for v in vals]

    fixtures = []
    img = np.random.default_rng(0).random((16, 16))
    fixtures.append((frames([img] * 5), img))
    fixtures.append((frames([np.full((8, 8), v) for v in (4, 1, 5, 3, 2)]), np.full((8, 8), 3.0)))
    blob = [np.full((16, 16), 100.0) for _ in range(5)]
    blob[3][5:10, 5:10] = 5000.0
    fixtures.append((frames(blob), np.full((16, 16), 100.0)))
    median_ok = sum(np.array_equal(median_background(f).intensity, want) for f, want in fixtures)

    results = {}
    for name, prop in (("threshold-scaling", threshold_scale_invariant),
                       ("closing-idempotent", closing_idempotent)):
        try:
            prop()
            results[name] = True
        except AssertionError:
            results[name] = False

    diag = np.zeros((4, 4), bool)
    diag[1, 1] = diag[2, 2] = True
    conn = (connected_components(diag, 8)[1], connected_components(diag, 4)[1])

    ok = median_ok == len(fixtures) and all(results.values()) and conn == (1, 2)
    record(verdicts, "C4 segmentation chain", ok,
           f"median fixtures={median_ok}/{len(fixtures)} "
           + " ".join(f"{k}={'ok' if v else 'broken'}" for k, v in results.items())
           + f" diagonal components 8/4-connected={conn[0]}/{conn[1]} (want 1/2)")
    assert ok


# -- C5: concentration maps -----------------------------------------------------------

def smoothed_map(layout, seed):
    cfg = OpticalConfig()
    return gaussian_smooth(interpolate_map(simulate_mission(layout, covering_path(200), cfg, seed)), 2.0)


def test_c5_point_source(verdicts):
    lay = point_layout()
    src = lay.sources[0]
    hits = 0
    for seed in range(SURVEY_SEEDS):
        g = smoothed_map(lay, seed)
        r, c = g.argmax_cell()
        tr, tc = g.cell_of(src.x, src.y)
        hits += max(abs(r - tr), abs(c - tc)) <= 1
    ok = hits >= C5_MIN_SEEDS
    record(verdicts, "C5a map argmax, point source", ok,
           f"argmax within 1 cell on {hits}/{SURVEY_SEEDS} seeds (>= {C5_MIN_SEEDS})")
    assert ok


@pytest.mark.parametrize("name", ["line", "elbow"])
def test_c5_ridge(name, verdicts):
    lay = LAYOUTS[name]()
    pts, normals = locus_points(lay, C5_LOCUS_POINTS)
    fractions = []
    for seed in range(SURVEY_SEEDS):
        g = smoothed_map(lay, seed)
        off = ridge_offsets(g, pts, normals, C5_RIDGE_HALF_WIDTH)
        fractions.append(float(np.mean(off <= g.cell_size)))
    good = sum(f >= C5_LOCUS_FRACTION for f in fractions)
    ok = good >= C5_MIN_SEEDS
    record(verdicts, f"C5{'b' if name == 'line' else 'c'} map ridge, {name} layout", ok,
           f"ridge within 1 cell for >= {C5_LOCUS_FRACTION:.0%} of locus on {good}/{SURVEY_SEEDS} "
           f"seeds (>= {C5_MIN_SEEDS}); locus fraction min={min(fractions):.2f} "
           f"mean={np.mean(fractions):.2f}")
    assert ok


# -- C6: depth profile -------------------------------------------------------------

def test_c6_depth_profile(verdicts):
    cfg = OpticalConfig()
    good = 0
    bins = set()
    surface = set()
    worst = -np.inf
    for seed in range(SURVEY_SEEDS):
        prof = depth_profile(simulate_mission(sigmoid_depth_field(), dive_path(5.5), cfg, seed),
                             0.5, 5.5)
        bins.add(prof.n_bins)
        surface.add(float(prof.normalized[0]))
        rise = np.diff(prof.normalized) - prof.normalized_std[1:]
        worst = max(worst, float(np.max(rise)))
        good += bool(np.all(rise <= 0))
    ok = bins == {11} and surface == {1.0} and good == SURVEY_SEEDS
    record(verdicts, "C6 depth profile", ok,
           f"bins={sorted(bins)} (want 11) surface={sorted(surface)} (want exactly 1.0) "
           f"monotone within per-bin std on {good}/{SURVEY_SEEDS} seeds "
           f"(worst rise minus std {worst:+.3f})")
    assert ok


# -- C7: shadow density ---------------------------------------------------------------

def test_c7_shadow_density(verdicts):
    value = shadow_density(1.887e10, 0.01, 50e-6)
    cfg = small_config(n=512, planes=4)
    p = cfg.pixel_pitch

    def field_with(count):
        # monodisperse 20 um particles on a grid inside the footprint
        side = int(np.ceil(np.sqrt(count)))
        pts = [Particle((10 + 20 * (k % side)) * p, (10 + 20 * (k // side)) * p, 5e-3, 20e-6)
               for k in range(count)]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            f = make_field(pts, cfg)
        return f, any(issubclass(w.category, ShadowDensityWarning) for w in caught)

    per_particle = shadow_density(1 / cfg.sample_volume_m3, cfg.gap_depth, 20e-6)
    n_limit = int(SHADOW_DENSITY_LIMIT / per_particle)
    below, warned_below = field_with(n_limit)
    above, warned_above = field_with(n_limit + 1)
    ok = (abs(value - C7_EXPECTED) <= C7_TOL and below.shadow_density <= SHADOW_DENSITY_LIMIT
          and not warned_below and above.shadow_density > SHADOW_DENSITY_LIMIT and warned_above)
    record(verdicts, "C7 shadow density", ok,
           f"s_d={value:.4f} (want {C7_EXPECTED} +- {C7_TOL:g}); {n_limit} particles "
           f"s_d={below.shadow_density:.4f} flagged={warned_below}, {n_limit + 1} particles "
           f"s_d={above.shadow_density:.4f} flagged={warned_above} (limit {SHADOW_DENSITY_LIMIT})")
    assert ok


# -- C8: determinism ---------------------------------------------------------------

def tree_digest(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def test_c8_determinism(tmp_path, verdicts):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"optical": {"sensor_width": 256, "sensor_height": 256, "n_planes": 10}, '
                   '"simulation": {"particle_count": 5, "frames": 6}, "seed": 42}')
    digests = {}
    for tag, threads in (("t1a", 1), ("t1b", 1), ("t8a", 8), ("t8b", 8)):
        out = tmp_path / tag
        assert main(["pipeline", "--config", str(cfg), "--out", str(out),
                     "--threads", str(threads)]) == 0
        digests[tag] = tree_digest(out)
    reference = digests["t1a"]
    same = {tag: d == reference for tag, d in digests.items()}
    ok = all(same.values()) and len(reference) > 10
    record(verdicts, "C8 determinism", ok,
           f"{len(reference)} output files; byte-identical: "
           + " ".join(f"{k}={'yes' if v else 'NO'}" for k, v in same.items()))
    assert ok
