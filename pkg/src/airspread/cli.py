"""Command-line frontend for batch studies.

Subcommands: ``concentration`` (proximity profiles), ``risk`` (infection
probability over time for the direct, background, combined and surface
channels), ``validate`` (finite-volume check of the closed form),
``abm`` (workplace sweep), ``threshold`` (surface contamination times).

Every subcommand echoes its fully resolved parameters, writes CSV files
with stable schemas, and renders a matplotlib figure next to the CSV
output (suppress with ``--no-plot``).

Exit codes: 0 success, 2 configuration or parameter error, 3 numerical
failure (including a failed validation), 4 internal invariant violation.
"""

from __future__ import annotations

import dataclasses
import functools
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import abm as abm_mod
from . import dispersion as disp_mod
from . import exposure as exp_mod
from . import pde as pde_mod
from . import plotting, scenario_io
from .errors import (
    ConfigError,
    InvalidParameterError,
    InvariantViolation,
    NumericalError,
    WorldParseError,
)

EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_INVARIANT_VIOLATION = 4


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (InvalidParameterError, ConfigError, WorldParseError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL_FAILURE)
        except InvariantViolation as exc:
            click.echo(f"invariant violation: {exc}", err=True)
            sys.exit(EXIT_INVARIANT_VIOLATION)

    return wrapper


def _echo_resolved(mapping: dict) -> None:
    click.echo("resolved parameters:")
    click.echo(yaml.safe_dump(mapping, sort_keys=False).rstrip())


def _comma_floats(_ctx, _param, value):
    if value is None:
        return ()
    try:
        return tuple(float(part) for part in value.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def _collect(values: tuple, sweep: tuple, default: tuple) -> tuple:
    merged = tuple(values) + tuple(sweep)
    return merged if merged else default


@click.group()
@click.version_option(package_name="airspread")
def main():
    """Indoor airborne exposure model: analytical fields, risk, validation, ABM."""


@main.command()
@click.option("--rate", "-s", "rates", type=float, multiple=True, help="Source rate, droplets/s (repeatable).")
@click.option("--sweep-rate", callback=_comma_floats, default=None, help="Comma-separated source rates.")
@click.option("--tau", "taus", type=float, multiple=True, help="Near-field decay constant, s (repeatable).")
@click.option("--sweep-tau", callback=_comma_floats, default=None, help="Comma-separated decay constants.")
@click.option("--diffusion", "-D", "diffusions", type=float, multiple=True, help="Diffusion coefficient, m^2/s.")
@click.option("--sweep-diffusion", callback=_comma_floats, default=None, help="Comma-separated diffusion coefficients.")
@click.option("--r0", type=float, default=0.62, show_default=True, help="Control radius, m.")
@click.option("--dmax", type=float, default=2.6, show_default=True, help="Validity radius, m.")
@click.option("--distance", "distances", type=float, multiple=True, help="Evaluate only at these distances, m.")
@click.option("--points", type=int, default=261, show_default=True, help="Grid points when no --distance given.")
@click.option(
    "--mask",
    type=click.Choice([m.value for m in disp_mod.Mask]),
    default=disp_mod.Mask.NONE.value,
    show_default=True,
    help="Emitter mask; attenuates the source rate.",
)
@click.option("--out", default="concentration", show_default=True, help="Output file prefix.")
@click.option("--plot/--no-plot", default=True, show_default=True)
@_handle_errors
def concentration(rates, sweep_rate, taus, sweep_tau, diffusions, sweep_diffusion, r0, dmax, distances, points, mask, out, plot):
    """Proximity concentration profiles; one CSV per parameter combination."""
    rates = _collect(rates, sweep_rate, (disp_mod.BREATHING_RATE, disp_mod.SPEAKING_RATE, disp_mod.COUGHING_SNEEZING_RATE))
    taus = _collect(taus, sweep_tau, (50.0,))
    diffusions = _collect(diffusions, sweep_diffusion, (0.05,))
    mask_kind = disp_mod.Mask(mask)
    _echo_resolved(
        {
            "rates": list(rates),
            "tau": list(taus),
            "diffusion": list(diffusions),
            "control_radius": r0,
            "validity_radius": dmax,
            "mask": mask_kind.value,
            "distances": list(distances) if distances else f"0..{dmax} ({points} points)",
            "out": out,
        }
    )
    r = np.asarray(sorted(distances)) if distances else np.linspace(0.0, dmax, points)
    curves = []
    for d_coef in diffusions:
        for tau in taus:
            params = disp_mod.DispersionParams(
                diffusion_coefficient=d_coef,
                decay_constant_direct=tau,
                control_radius=r0,
                validity_radius=dmax,
            )
            for rate in rates:
                field = disp_mod.ProximityField.from_rate(params, rate * disp_mod.MASK_FACTORS[mask_kind])
                values = np.asarray(field.concentration(r), dtype=float).reshape(-1)
                label = f"s={rate:g}, tau={tau:g}, D={d_coef:g}"
                path = scenario_io.write_csv(
                    f"{out}_s{rate:g}_tau{tau:g}_D{d_coef:g}.csv",
                    ("r_m", "c_droplets_per_m3"),
                    zip(r.tolist(), values.tolist()),
                )
                click.echo(f"wrote {path}")
                curves.append((label, r, values))
    if plot:
        figure = plotting.plot_curves(
            curves,
            f"{out}.png",
            xlabel="distance from source (m)",
            ylabel="concentration (droplets/m$^3$)",
        )
        click.echo(f"wrote {figure}")


@main.command()
@click.option(
    "--mode",
    type=click.Choice(["direct", "background", "combined", "surface"]),
    default="direct",
    show_default=True,
)
@click.option("--rate", "-s", "rates", type=float, multiple=True, help="Source rate, droplets/s (repeatable).")
@click.option("--sweep-rate", callback=_comma_floats, default=None, help="Comma-separated source rates.")
@click.option("--distance", type=float, default=1.5, show_default=True, help="Distance to the emitter, m.")
@click.option("--tau", type=float, default=50.0, show_default=True, help="Near-field decay constant, s.")
@click.option("--tau-prime", type=float, default=125.0, show_default=True, help="Background decay constant, s.")
@click.option("--diffusion", type=float, default=0.05, show_default=True)
@click.option("--r0", type=float, default=0.62, show_default=True)
@click.option("--dmax", type=float, default=2.6, show_default=True)
@click.option("--volume", type=float, default=100.0, show_default=True, help="Compartment volume, m^3.")
@click.option("--nb", "doses", type=float, multiple=True, help="Infectious dose (repeatable; default 100).")
@click.option("--dose-probability", type=float, default=0.1, show_default=True)
@click.option("--breathing-rate", type=float, default=exp_mod.DEFAULT_BREATHING_RATE, show_default=True, help="m^3/s.")
@click.option("--contact-prob", type=float, default=1.0e-4, show_default=True, help="Per-contact infection probability.")
@click.option("--contact-freq", type=float, default=1.0, show_default=True, help="Surface contacts per minute.")
@click.option("--t1", "prior_hours", type=float, multiple=True, help="Hours the emitter stayed (surface mode).")
@click.option("--area", type=float, default=2.25, show_default=True, help="Surface area, m^2 (surface mode).")
@click.option("--large-fraction", type=float, default=0.1, show_default=True, help="Sedimenting droplet share.")
@click.option("--nu", type=float, default=10.0, show_default=True, help="Genome copies per large droplet.")
@click.option("--gc-thres", type=float, default=1.0e4, show_default=True, help="Contamination threshold, gc/m^2.")
@click.option("--t-max", type=float, default=480.0, show_default=True, help="Exposure horizon, minutes.")
@click.option("--t-step", type=float, default=1.0, show_default=True, help="Time resolution, minutes.")
@click.option("--out", default="risk", show_default=True, help="Output file prefix.")
@click.option("--plot/--no-plot", default=True, show_default=True)
@_handle_errors
def risk(
    mode, rates, sweep_rate, distance, tau, tau_prime, diffusion, r0, dmax, volume, doses,
    dose_probability, breathing_rate, contact_prob, contact_freq, prior_hours, area,
    large_fraction, nu, gc_thres, t_max, t_step, out, plot,
):
    """Infection probability over exposure time; one CSV per scenario."""
    rates = _collect(rates, sweep_rate, (disp_mod.BREATHING_RATE, disp_mod.SPEAKING_RATE, disp_mod.COUGHING_SNEEZING_RATE))
    doses = tuple(doses) if doses else (100.0,)
    prior_hours = tuple(prior_hours) if prior_hours else (1.0, 8.0)
    params = disp_mod.DispersionParams(
        diffusion_coefficient=diffusion,
        decay_constant_direct=tau,
        decay_constant_background=tau_prime,
        control_radius=r0,
        validity_radius=dmax,
    )
    minutes = np.arange(0.0, t_max + 1e-9, t_step)
    seconds = minutes * 60.0
    resolved = {
        "mode": mode,
        "rates": list(rates),
        "distance": distance,
        "tau": tau,
        "tau_prime": tau_prime,
        "diffusion": diffusion,
        "volume": volume,
        "infectious_dose": list(doses),
        "dose_probability": dose_probability,
        "breathing_rate": breathing_rate,
        "t_max_minutes": t_max,
    }
    if mode == "surface":
        resolved.update(
            {
                "t1_hours": list(prior_hours),
                "area": area,
                "large_fraction": large_fraction,
                "nu": nu,
                "gc_thres": gc_thres,
                "contact_prob": contact_prob,
                "contact_freq_per_min": contact_freq,
            }
        )
    _echo_resolved(resolved)

    curves = []
    for rate in rates:
        # the infectious dose only matters for the inhalation modes
        for dose in doses[:1] if mode == "surface" else doses:
            exposure = exp_mod.ExposureParams(
                breathing_rate=breathing_rate,
                infectious_dose=dose,
                dose_probability=dose_probability,
                contact_probability=contact_prob,
                contact_frequency=contact_freq / 60.0,
            )
            if mode == "surface":
                threshold = disp_mod.contamination_threshold_time(area, gc_thres, large_fraction, rate, nu)
                for hours in prior_hours:
                    probabilities = np.array(
                        [
                            exp_mod.infection_probability_surface(t, hours * 3600.0, threshold, exposure)
                            for t in seconds
                        ]
                    )
                    label = f"s={rate:g}, t1={hours:g} h"
                    path = scenario_io.write_csv(
                        f"{out}_surface_s{rate:g}_t1{hours:g}.csv",
                        ("t_minutes", "probability"),
                        zip(minutes.tolist(), probabilities.tolist()),
                    )
                    click.echo(f"wrote {path}")
                    curves.append((label, minutes, probabilities))
                continue
            if mode == "direct":
                c = disp_mod.proximity_concentration(distance, disp_mod.ProximityField.from_rate(params, rate))
            elif mode == "background":
                c = disp_mod.background_concentration([rate], tau_prime, volume)
            else:  # combined
                c = disp_mod.proximity_concentration(
                    distance, disp_mod.ProximityField.from_rate(params, rate)
                ) + disp_mod.background_concentration([rate], tau_prime, volume)
            probabilities = np.array(
                [
                    exp_mod.infection_probability_inhalation(
                        exp_mod.inhaled_count(c, exposure.breathing_rate, t), exposure
                    )
                    for t in seconds
                ]
            )
            label = f"s={rate:g}, N_b={dose:g}"
            path = scenario_io.write_csv(
                f"{out}_{mode}_s{rate:g}_nb{dose:g}.csv",
                ("t_minutes", "probability"),
                zip(minutes.tolist(), probabilities.tolist()),
            )
            click.echo(f"wrote {path}")
            curves.append((label, minutes, probabilities))
    if plot:
        figure = plotting.plot_curves(
            curves,
            f"{out}_{mode}.png",
            xlabel="exposure time (minutes)",
            ylabel="infection probability",
        )
        click.echo(f"wrote {figure}")


@main.command()
@click.option("--grid-cells", default="128,256,512", show_default=True, help="Comma-separated refinement ladder.")
@click.option("--t-end", type=float, default=None, help="Evolve horizon, s (default: iterate to steady state).")
@click.option("--rate", type=float, default=66.0, show_default=True, help="Source rate, droplets/s.")
@click.option("--tau", type=float, default=50.0, show_default=True)
@click.option("--diffusion", type=float, default=0.05, show_default=True)
@click.option("--r0", type=float, default=0.62, show_default=True)
@click.option("--dmax", type=float, default=2.6, show_default=True)
@click.option("--out", default="validate", show_default=True, help="Output file prefix.")
@click.option("--plot/--no-plot", default=True, show_default=True)
@_handle_errors
def validate(grid_cells, t_end, rate, tau, diffusion, r0, dmax, out, plot):
    """Check the closed-form profile against the finite-volume solver."""
    try:
        cells = tuple(int(part) for part in grid_cells.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter(f"--grid-cells expects comma-separated integers, got {grid_cells!r}")
    params = disp_mod.DispersionParams(
        diffusion_coefficient=diffusion, decay_constant_direct=tau, control_radius=r0, validity_radius=dmax
    )
    _echo_resolved(
        {
            "grid_cells": list(cells),
            "t_end": t_end,
            "rate": rate,
            "tau": tau,
            "diffusion": diffusion,
            "control_radius": r0,
            "validity_radius": dmax,
            "out": out,
        }
    )
    summary = pde_mod.validation_report(params, rate, cells, t_end=t_end)
    path = scenario_io.write_profile_csv(summary.finest_report, f"{out}_profile.csv")
    click.echo(f"wrote {path}")
    for line in summary.lines():
        click.echo(line)
    if plot:
        figure = plotting.plot_validation(
            summary.finest_report, f"{out}.png", title=f"s={rate:g}, tau={tau:g}, D={diffusion:g}"
        )
        click.echo(f"wrote {figure}")
    if not summary.passed:
        raise NumericalError("validation tolerances not met; see summary above")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--replications", type=int, default=None, help="Override the configured replication count.")
@click.option("--seed", type=int, default=None, help="Override the configured base seed.")
@click.option("--event-log", type=click.Path(dir_okay=False), default=None, help="Write an infection event CSV.")
@click.option("--workers", type=int, default=1, show_default=True, help="Processes for replications.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Override the output directory.")
@click.option("--plot/--no-plot", default=True, show_default=True)
@_handle_errors
def abm(config_path, replications, seed, event_log, workers, out_dir, plot):
    """Run the workplace sweep defined by a configuration file."""
    text = Path(config_path).read_text() if config_path else None
    config = scenario_io.parse_config(text)
    if replications is not None:
        config = dataclasses.replace(config, replications=replications)
    if seed is not None:
        config = dataclasses.replace(config, base_seed=seed)
    if out_dir is not None:
        config = dataclasses.replace(config, output_directory=out_dir)
    if event_log is not None:
        config = dataclasses.replace(config, event_log=event_log)
    base_dir = Path(config_path).parent if config_path else None
    world = scenario_io.load_world(config.world, base_dir=base_dir)
    _echo_resolved(scenario_io.resolved_mapping(config))
    points = config.grid_points()
    out_directory = Path(config.output_directory)
    out_directory.mkdir(parents=True, exist_ok=True)
    (out_directory / "resolved_config.yaml").write_text(scenario_io.config_to_yaml(config))
    statistics = abm_mod.run_experiment(points, world, workers=workers, collect_events=config.event_log is not None)
    event_path = None
    if config.event_log is not None:
        event_path = Path(config.event_log)
        if not event_path.is_absolute():
            event_path = out_directory / event_path
    written = scenario_io.write_results(
        statistics, out_directory, histograms=config.write_histograms, event_log_path=event_path
    )
    for path in written:
        click.echo(f"wrote {path}")
    if plot:
        click.echo(f"wrote {plotting.plot_abm_means(statistics, out_directory / 'aggregate.png')}")
        if config.write_histograms:
            click.echo(f"wrote {plotting.plot_abm_histograms(statistics, out_directory / 'histograms.png')}")


@main.command()
@click.option("--area", "areas", type=float, multiple=True, help="Surface area, m^2 (repeatable).")
@click.option("--rate", "rates", type=float, multiple=True, help="Source rate, droplets/s (repeatable).")
@click.option("--nu", type=float, default=10.0, show_default=True, help="Genome copies per large droplet.")
@click.option("--gc-thres", type=float, default=1.0e4, show_default=True, help="Contamination threshold, gc/m^2.")
@click.option("--large-fraction", type=float, default=0.1, show_default=True, help="Sedimenting droplet share.")
@click.option("--out", default="threshold", show_default=True, help="Output file prefix.")
@click.option("--plot/--no-plot", default=True, show_default=True)
@_handle_errors
def threshold(areas, rates, nu, gc_thres, large_fraction, out, plot):
    """Time until a surface counts as contaminated, per (area, rate) pair."""
    areas = tuple(areas) if areas else (2.25, 1.0)
    rates = tuple(rates) if rates else (66.0, 5.0)
    _echo_resolved(
        {"areas": list(areas), "rates": list(rates), "nu": nu, "gc_thres": gc_thres, "large_fraction": large_fraction}
    )
    rows = []
    for area in areas:
        for rate in rates:
            seconds = disp_mod.contamination_threshold_time(area, gc_thres, large_fraction, rate, nu)
            rows.append((area, rate, seconds))
            click.echo(f"A={area:g} m^2, s={rate:g}/s -> {seconds:.1f} s = {seconds / 60.0:.2f} min")
    path = scenario_io.write_csv(
        f"{out}.csv",
        ("area_m2", "rate_per_s", "threshold_time_s", "threshold_time_min"),
        ((a, s, t, t / 60.0) for a, s, t in rows),
    )
    click.echo(f"wrote {path}")
    if plot:
        finite = [(a, s, t) for a, s, t in rows if np.isfinite(t)]
        if finite:
            click.echo(f"wrote {plotting.plot_threshold_times(finite, f'{out}.png')}")


if __name__ == "__main__":
    main()
