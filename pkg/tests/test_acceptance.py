"""Acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <k> (<name>): PASS/FAIL`` line (run
with ``pytest -s tests/test_acceptance.py`` to see them live).  Expected
values are frozen from independent oracles: adaptive quadrature for the
mass closure, hand evaluation for the reference rates and times, and the
closed-form profile for the solver comparison.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import stats as sps
from scipy.integrate import quad

from airspread import abm, dispersion as d, exposure as e, pde, scenario_io as sio

WORKERS = min(4, os.cpu_count() or 1)


def _report(number: int, name: str, ok: bool, detail: str = ""):
    print(f"\nACCEPTANCE {number} ({name}): {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {number} ({name}): {detail}"


def _quadrature_mass(params: d.DispersionParams, rate: float) -> float:
    field = d.ProximityField.from_rate(params, rate)

    def integrand(r):
        return d.proximity_concentration(r, field) * 4.0 * math.pi * r * r

    inner, _ = quad(integrand, 0.0, params.control_radius, epsabs=1e-13, epsrel=1e-11)
    outer, _ = quad(integrand, params.control_radius, params.validity_radius, epsabs=1e-13, epsrel=1e-11, limit=200)
    return inner + outer


def test_criterion_1_golden_analytical_values():
    params = d.DispersionParams(
        diffusion_coefficient=0.05, decay_constant_direct=50.0, control_radius=0.62, validity_radius=2.6
    )
    c = d.normalization_constant(params, 66.0)
    quad_mass = _quadrature_mass(params, 66.0)
    mass_ok = abs(quad_mass - 66.0 * 50.0) / (66.0 * 50.0) < 1e-8
    field = d.ProximityField.from_rate(params, 66.0)
    exposure = e.ExposureParams()
    same = e.per_step_direct_probability(0.75, field, exposure, 60.0)
    adjacent = e.per_step_direct_probability(1.5, field, exposure, 60.0)
    same_ok = abs(same - 0.0049) / 0.0049 < 0.05
    adjacent_ok = abs(adjacent - 0.0013) / 0.0013 < 0.05
    _report(
        1,
        "golden analytical values",
        mass_ok and same_ok and adjacent_ok,
        f"C={c:.3f}, quad mass rel err={abs(quad_mass / 3300 - 1):.2e}, "
        f"same-cell={same:.6f} (0.0049 +/-5%), adjacent={adjacent:.6f} (0.0013 +/-5%)",
    )


def test_criterion_2_threshold_times():
    cases = [
        ((2.25, 66.0), 6.0, 5.68),
        ((2.25, 5.0), 75.0, 75.0),
        ((1.0, 66.0), 2.5, 2.53),
        ((1.0, 5.0), 33.0, 33.3),
    ]
    details = []
    ok = True
    for (area, rate), rounded, exact in cases:
        minutes = d.contamination_threshold_time(area, 1e4, 0.1, rate, 10.0) / 60.0
        ok &= abs(minutes - rounded) <= 0.10 * rounded
        ok &= abs(minutes - exact) <= 0.01 * exact
        details.append(f"(A={area:g}, s={rate:g})={minutes:.2f}min")
    _report(2, "surface threshold times", ok, "; ".join(details))


def test_criterion_3_dose_response_anchor():
    baseline = e.infection_probability_inhalation(100.0, e.ExposureParams(infectious_dose=100.0, dose_probability=0.1))
    ok = baseline == pytest.approx(0.1, rel=1e-12)
    rng = np.random.default_rng(20250810)
    worst = 0.0
    for _ in range(100):
        a = rng.uniform(1e-4, 1 - 1e-4)
        dose = 10.0 ** rng.uniform(-2, 5)
        params = e.ExposureParams(infectious_dose=dose, dose_probability=a)
        worst = max(worst, abs(e.infection_probability_inhalation(dose, params) - a) / a)
    ok &= worst < 1e-12
    _report(3, "dose-response anchor", ok, f"p(N_b)=a exact; worst rel dev over 100 random pairs {worst:.2e}")


def test_criterion_4_pde_validation():
    t0 = time.time()
    params = d.DispersionParams()
    summary = pde.validation_report(params, 66.0, (128, 256, 512))
    l2 = {row.n_cells: row.l2_relative for row in summary.rows}
    detail = (
        f"l2={l2[128]:.2e}/{l2[256]:.2e}/{l2[512]:.2e} (monotone={summary.monotone}), "
        f"mass rel err={summary.rows[-1].mass_rel_err:+.2e} (<2%), "
        f"half-life={summary.half_life:.3f}s vs {summary.half_life_expected:.3f}s "
        f"(rel {summary.half_life_rel_err:+.2e}, <5%) [{time.time() - t0:.0f}s]"
    )
    ok = (
        summary.monotone
        and l2[512] < 0.02
        and l2[128] > l2[256] > l2[512]
        and abs(summary.rows[-1].mass_rel_err) < 0.02
        and abs(summary.half_life_rel_err) < 0.05
    )
    _report(4, "solver vs closed form", ok, detail)


def test_criterion_5_mass_conservation_property():
    rng = np.random.default_rng(424242)
    worst = 0.0
    for _ in range(100):
        r0 = rng.uniform(0.1, 1.5)
        params = d.DispersionParams(
            diffusion_coefficient=rng.uniform(5e-3, 0.5),
            decay_constant_direct=rng.uniform(5.0, 500.0),
            control_radius=r0,
            validity_radius=r0 + rng.uniform(0.3, 5.0),
        )
        rate = rng.uniform(1e-3, 200.0)
        rel = abs(_quadrature_mass(params, rate) / (rate * params.decay_constant_direct) - 1.0)
        worst = max(worst, rel)
    _report(5, "mass conservation (100 random sets)", worst < 1e-6, f"worst quadrature rel err {worst:.2e}")


def test_criterion_6_abm_geometric_micro_oracle():
    t0 = time.time()
    replications = 20000
    p = abm.TransmissionRates().same_cell
    world = sio.parse_world("###\n#.#\n###")
    config = abm.SimulationConfig(
        population=2,
        initially_infected=1,
        mobility=0.0,
        patch_contamination_probability=0.0,
        steps=480,
        replications=replications,
        base_seed=1618,
    )
    stats = abm.run_point(config, world, collect_events=True, workers=WORKERS)
    times = np.array([event.step + 1 for event in stats.events])
    assert times.size == int(stats.counts.sum())
    edges = list(range(1, 482, 24))  # 20 in-shift bins of 24 steps
    observed = [int(((times >= lo) & (times < hi)).sum()) for lo, hi in zip(edges[:-1], edges[1:])]
    observed.append(replications - times.size)  # censored at shift end
    expected = [
        ((1 - p) ** (lo - 1) - (1 - p) ** (hi - 1)) * replications for lo, hi in zip(edges[:-1], edges[1:])
    ]
    expected.append((1 - p) ** 480 * replications)
    result = sps.chisquare(observed, expected)
    _report(
        6,
        "pinned-pair geometric infection times",
        result.pvalue > 0.01,
        f"chi2={result.statistic:.1f}, p={result.pvalue:.3f} over {replications} replications "
        f"[{time.time() - t0:.0f}s]",
    )


def _trend_stats(population: int, alpha: int, replications: int, seed: int, world):
    config = abm.SimulationConfig(
        population=population,
        initially_infected=alpha,
        mobility=0.05,
        patch_contamination_probability=0.5,
        steps=480,
        replications=replications,
        base_seed=seed,
    )
    return abm.run_point(config, world, workers=WORKERS)


def test_criterion_7_workplace_trends():
    t0 = time.time()
    replications = 1000
    world = sio.parse_world(sio.builtin_world_text())
    n30 = _trend_stats(30, 9, replications, 301, world)
    n70 = _trend_stats(70, 9, replications, 302, world)
    a5 = _trend_stats(70, 5, replications, 303, world)
    a7 = _trend_stats(70, 7, replications, 304, world)
    welch = sps.ttest_ind(n70.counts, n30.counts, equal_var=False, alternative="greater")
    density_ok = n70.mean > n30.mean and welch.pvalue < 0.01
    alpha_means = (a5.mean, a7.mean, n70.mean)
    alpha_ok = alpha_means[0] < alpha_means[1] < alpha_means[2]
    _report(
        7,
        "workplace trends",
        density_ok and alpha_ok,
        f"mean(n=30)={n30.mean:.2f} < mean(n=70)={n70.mean:.2f} (Welch p={welch.pvalue:.2e}); "
        f"alpha 5/7/9 -> {alpha_means[0]:.2f}/{alpha_means[1]:.2f}/{alpha_means[2]:.2f} "
        f"[{replications} reps, {time.time() - t0:.0f}s]",
    )


def test_criterion_8_determinism(tmp_path):
    config = sio.parse_config(
        "simulation:\n  replications: 10\n  steps: 60\n  base_seed: 88\n"
        "sweep:\n  mobility: [0.0, 0.1]\n  population: [20]\n  initially_infected: [3]\n"
        "  patch_contamination_probability: [0.0, 0.4]\n"
    )
    world = sio.parse_world(sio.builtin_world_text())
    points = config.grid_points()

    def produce(directory, workers):
        stats = abm.run_experiment(points, world, workers=workers)
        written = sio.write_results(stats, directory)
        return {path.name: path.read_bytes() for path in written}

    first = produce(tmp_path / "run1", 1)
    second = produce(tmp_path / "run2", 1)
    parallel = produce(tmp_path / "run3", 2)
    ok = first == second == parallel
    _report(8, "byte-identical determinism", ok, f"{len(first)} files x 3 runs (workers 1/1/2)")


def test_criterion_9_invariant_suite():
    rng = np.random.default_rng(99)
    failures = []

    # dispersion: non-negativity, monotonicity, linearity, continuity, support
    for _ in range(100):
        r0 = rng.uniform(0.1, 1.5)
        params = d.DispersionParams(
            diffusion_coefficient=rng.uniform(5e-3, 0.5),
            decay_constant_direct=rng.uniform(5.0, 500.0),
            control_radius=r0,
            validity_radius=r0 + rng.uniform(0.3, 5.0),
        )
        rate = rng.uniform(1e-3, 200.0)
        field = d.ProximityField.from_rate(params, rate)
        r = np.linspace(0.0, params.validity_radius, 120)
        c = np.asarray(field.concentration(r))
        if not (c >= 0.0).all():
            failures.append("dispersion non-negativity")
        if not (np.diff(c) <= 1e-9 * field.normalization).all():
            failures.append("dispersion monotonicity")
        doubled = np.asarray(d.ProximityField.from_rate(params, 2 * rate).concentration(r))
        if not np.allclose(doubled, 2 * c, rtol=1e-12):
            failures.append("dispersion linearity")
        if abs(field.concentration(params.control_radius) - field.normalization) > 1e-12 * field.normalization:
            failures.append("dispersion continuity at control radius")
        if field.concentration(params.validity_radius * 1.01) != 0.0:
            failures.append("dispersion support")

    # exposure: probability bounds and channel dominance
    for _ in range(100):
        params = e.ExposureParams(
            infectious_dose=rng.uniform(10.0, 500.0), dose_probability=rng.uniform(0.01, 0.5)
        )
        field = d.ProximityField.from_rate(d.DispersionParams(), rng.uniform(0.5, 100.0))
        background = d.BackgroundField(compartment_volume=rng.uniform(20.0, 2000.0), source_rates=(rng.uniform(0.5, 100.0),))
        distance = rng.uniform(0.0, 4.0)
        seconds = rng.uniform(1.0, 4.0e4)
        combined = e.combined_inhalation_probability(distance, field, background, params, seconds)
        prox = e.infection_probability_inhalation(
            e.inhaled_count(d.proximity_concentration(distance, field), params.breathing_rate, seconds), params
        )
        back = e.infection_probability_inhalation(
            e.inhaled_count(background.concentration, params.breathing_rate, seconds), params
        )
        values = (combined, prox, back, e.per_step_surface_probability(params, rng.uniform(0.0, 600.0)))
        if not all(0.0 <= v <= 1.0 for v in values):
            failures.append("exposure probability bounds")
        if combined < prox or combined < back:
            failures.append("exposure dose additivity")

    # abm: conservation, constant infectious count, latency, contamination
    # monotonicity, wall avoidance over 100 random short replications
    world = sio.parse_world("#########\n#..M....#\n#....M..#\n#.M.....#\n#########")
    for i in range(100):
        n = int(rng.integers(2, 25))
        config = abm.SimulationConfig(
            population=n,
            initially_infected=int(rng.integers(1, n)),
            mobility=float(rng.uniform(0.0, 1.0)),
            patch_contamination_probability=float(rng.uniform(0.0, 0.5)),
            steps=60,
            base_seed=int(rng.integers(1 << 48)),
        )
        state = abm.initialize(config, world, abm.replication_seed(config.base_seed, 0), collect_events=True)
        contaminated_before = 0
        for _ in range(config.steps):
            abm.step(state)
            counts = np.bincount(state.states, minlength=3)
            if counts.sum() != n or counts[abm.AgentState.INFECTIOUS] != config.initially_infected:
                failures.append("abm conservation/latency")
            contaminated_now = int(state.contaminated.sum())
            if contaminated_now < contaminated_before:
                failures.append("abm contamination monotonicity")
            contaminated_before = contaminated_now
            if (world.flat_kinds[state.positions] == abm.CellKind.WALL).any():
                failures.append("abm wall avoidance")

    # pde: non-negativity and per-step mass budget
    for tau in (20.0, 50.0, 200.0):
        params = d.DispersionParams(decay_constant_direct=tau)
        solution = pde.evolve(params, 40.0, pde.RadialGrid(r_max=2.6, n_cells=64), 30.0, audit_mass_balance=True)
        if not (solution.values >= 0.0).all():
            failures.append("pde non-negativity")
        if solution.mass_balance_max_residual >= 1e-6:
            failures.append("pde mass balance")

    unique = sorted(set(failures))
    _report(9, "module invariant suite", not failures, f"violations: {unique if unique else 'none'}")
