"""World maps, experiment configuration, and result files.

World format: ASCII grid, one row per line, ``#`` wall, ``.`` floor,
``M`` workplace.  Rows must be equally long and the border must be all
walls.

Experiment configuration: a YAML mapping with the sections ``dispersion``,
``exposure``, ``simulation``, ``sweep`` and ``output``.  Every key has a
default (an empty document is a valid experiment); unknown keys are
rejected.  The fully resolved configuration is echoed next to results for
provenance and re-parses to an identical configuration.

CSV outputs use full round-trip float formatting so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields as dataclass_fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .abm import CellKind, InfectionEvent, RunStatistics, SimulationConfig, TransmissionRates, World
from .dispersion import DispersionParams
from .errors import ConfigError, WorldParseError
from .exposure import ExposureParams
from .pde import ComparisonReport

WORLD_CHARS = {"#": CellKind.WALL, ".": CellKind.FLOOR, "M": CellKind.WORKPLACE}
_KIND_CHARS = {kind: char for char, kind in WORLD_CHARS.items()}

DEFAULT_WORLD_NAME = "factory_default.world"

AGGREGATE_COLUMNS = ("mu", "n", "alpha", "patch_contamination_prob", "mean_new_infections", "var", "replications")
HISTOGRAM_COLUMNS = ("count", "occurrences")
EVENT_COLUMNS = ("replication", "step", "agent_id", "channel", "cell_x", "cell_y")
PROFILE_COLUMNS = ("r_m", "c_numeric", "c_analytic", "rel_err")


def parse_world(text: str) -> World:
    """Parse an ASCII world map.

    Raises:
        WorldParseError: On empty input, ragged rows, illegal characters,
            or a border that is not entirely walls; the error names the
            offending line (and column where applicable).
    """
    lines = text.rstrip("\n").split("\n")
    if not lines or lines == [""]:
        raise WorldParseError("world map is empty")
    width = len(lines[0])
    rows = []
    for i, line in enumerate(lines, start=1):
        if len(line) != width:
            raise WorldParseError(f"row has length {len(line)}, expected {width}", line=i)
        row = []
        for j, char in enumerate(line, start=1):
            kind = WORLD_CHARS.get(char)
            if kind is None:
                raise WorldParseError(f"illegal character {char!r}", line=i, column=j)
            row.append(kind)
        rows.append(row)
    kinds = np.array(rows, dtype=np.int8)
    if kinds.shape[0] < 3 or kinds.shape[1] < 3:
        raise WorldParseError("world must be at least 3x3 cells")
    border_rows = [1, kinds.shape[0]]
    for r in border_rows:
        if (kinds[r - 1] != CellKind.WALL).any():
            raise WorldParseError("border must be entirely walls", line=r)
    open_cols = np.flatnonzero((kinds[:, 0] != CellKind.WALL) | (kinds[:, -1] != CellKind.WALL))
    if open_cols.size:
        raise WorldParseError("border must be entirely walls", line=int(open_cols[0]) + 1)
    if (kinds != CellKind.WALL).sum() == 0:
        raise WorldParseError("world has no floor or workplace cells")
    return World(kinds=kinds)


def render_world(world: World) -> str:
    """Inverse of :func:`parse_world`; round-trips all valid worlds."""
    return "\n".join("".join(_KIND_CHARS[CellKind(k)] for k in row) for row in world.kinds) + "\n"


def builtin_world_text(name: str = DEFAULT_WORLD_NAME) -> str:
    """Text of a world bundled with the package."""
    return (resources.files("airspread") / "data" / name).read_text()


def load_world(spec: str | None, base_dir: Path | str | None = None) -> World:
    """Load a world by config reference.

    ``None`` loads the bundled default; ``builtin:<name>`` loads a bundled
    map; anything else is a path, resolved against ``base_dir`` when
    relative.
    """
    if spec is None:
        return parse_world(builtin_world_text())
    if spec.startswith("builtin:"):
        return parse_world(builtin_world_text(spec.removeprefix("builtin:")))
    path = Path(spec)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read world file {path}: {exc}") from exc
    return parse_world(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment: model constants, sweep axes, outputs."""

    dispersion: DispersionParams = field(default_factory=DispersionParams)
    exposure: ExposureParams = field(default_factory=ExposureParams)
    steps: int = 480
    replications: int = 100
    base_seed: int = 0
    world: str | None = None
    rates: TransmissionRates = field(default_factory=TransmissionRates)
    mobility_values: tuple[float, ...] = (0.05,)
    population_values: tuple[int, ...] = (70,)
    initially_infected_values: tuple[int, ...] = (9,)
    contamination_values: tuple[float, ...] = (0.5,)
    output_directory: str = "abm_results"
    write_histograms: bool = True
    event_log: str | None = None

    def grid_points(self) -> list[SimulationConfig]:
        """Cartesian sweep expansion, mobility outermost, contamination innermost.

        Each point receives its own derived base seed (stable mixing of
        the experiment seed and the point index), so replication streams
        differ across points.
        """
        points = []
        combos = itertools.product(
            self.mobility_values,
            self.population_values,
            self.initially_infected_values,
            self.contamination_values,
        )
        for index, (mu, n, alpha, pc) in enumerate(combos):
            points.append(
                SimulationConfig(
                    population=n,
                    initially_infected=alpha,
                    mobility=mu,
                    patch_contamination_probability=pc,
                    steps=self.steps,
                    replications=self.replications,
                    base_seed=derive_point_seed(self.base_seed, index),
                    rates=self.rates,
                )
            )
        return points


def derive_point_seed(base_seed: int, point_index: int) -> int:
    """64-bit per-grid-point seed from ``SeedSequence((base_seed, point_index))``."""
    words = np.random.SeedSequence((base_seed, point_index)).generate_state(2)
    return (int(words[0]) << 32) | int(words[1])


def _require_mapping(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{path} must be a mapping, got {type(value).__name__}")
    return value


def _take(section: dict, key: str, path: str, kind, default):
    if key not in section:
        return default
    value = section.pop(key)
    if value is None:
        return default
    try:
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
    except TypeError:
        raise ConfigError(f"{path}.{key} must be a {kind.__name__}, got {value!r}") from None
    raise AssertionError(f"unhandled kind {kind}")


def _take_list(section: dict, key: str, path: str, kind, default: tuple) -> tuple:
    if key not in section:
        return default
    value = section.pop(key)
    if value is None:
        return default
    if not isinstance(value, list):
        value = [value]
    if not value:
        raise ConfigError(f"{path}.{key} must not be empty")
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{path}.{key} must hold numbers, got {item!r}")
        if kind is int and not isinstance(item, int):
            raise ConfigError(f"{path}.{key} must hold integers, got {item!r}")
        out.append(kind(item))
    return tuple(out)


def _reject_unknown(section: dict, path: str) -> None:
    if section:
        key = sorted(section)[0]
        raise ConfigError(f"unknown key {path}.{key}")


def parse_config(source: str | dict | None) -> ExperimentConfig:
    """Parse and validate an experiment document (YAML text or mapping).

    Missing keys take the model defaults; unknown keys and constraint
    violations raise :class:`ConfigError` naming the key.
    """
    if source is None or source == "":
        document: dict = {}
    elif isinstance(source, str):
        try:
            document = yaml.safe_load(source) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"configuration is not valid YAML: {exc}") from exc
    else:
        document = dict(source)
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    document = dict(document)

    disp = _require_mapping(document.pop("dispersion", None), "dispersion")
    disp_defaults = DispersionParams()
    try:
        dispersion = DispersionParams(
            diffusion_coefficient=_take(disp, "diffusion_coefficient", "dispersion", float, disp_defaults.diffusion_coefficient),
            decay_constant_direct=_take(disp, "decay_constant_direct", "dispersion", float, disp_defaults.decay_constant_direct),
            decay_constant_background=_take(disp, "decay_constant_background", "dispersion", float, disp_defaults.decay_constant_background),
            control_radius=_take(disp, "control_radius", "dispersion", float, disp_defaults.control_radius),
            validity_radius=_take(disp, "validity_radius", "dispersion", float, disp_defaults.validity_radius),
        )
    except ValueError as exc:
        raise ConfigError(f"dispersion: {exc}") from exc
    _reject_unknown(disp, "dispersion")

    exp = _require_mapping(document.pop("exposure", None), "exposure")
    exp_defaults = ExposureParams()
    try:
        exposure = ExposureParams(
            breathing_rate=_take(exp, "breathing_rate", "exposure", float, exp_defaults.breathing_rate),
            infectious_dose=_take(exp, "infectious_dose", "exposure", float, exp_defaults.infectious_dose),
            dose_probability=_take(exp, "dose_probability", "exposure", float, exp_defaults.dose_probability),
            contact_probability=_take(exp, "contact_probability", "exposure", float, exp_defaults.contact_probability),
            contact_frequency=_take(exp, "contact_frequency", "exposure", float, exp_defaults.contact_frequency),
        )
    except ValueError as exc:
        raise ConfigError(f"exposure: {exc}") from exc
    _reject_unknown(exp, "exposure")

    sim = _require_mapping(document.pop("simulation", None), "simulation")
    rates_section = _require_mapping(sim.pop("rates", None), "simulation.rates")
    rate_defaults = TransmissionRates()
    try:
        rates = TransmissionRates(
            same_cell=_take(rates_section, "same_cell", "simulation.rates", float, rate_defaults.same_cell),
            neighbor_cell=_take(rates_section, "neighbor_cell", "simulation.rates", float, rate_defaults.neighbor_cell),
            surface=_take(rates_section, "surface", "simulation.rates", float, rate_defaults.surface),
            diagonal_cell=_take(rates_section, "diagonal_cell", "simulation.rates", float, None),
        )
    except ValueError as exc:
        raise ConfigError(f"simulation.rates: {exc}") from exc
    _reject_unknown(rates_section, "simulation.rates")
    steps = _take(sim, "steps", "simulation", int, 480)
    replications = _take(sim, "replications", "simulation", int, 100)
    base_seed = _take(sim, "base_seed", "simulation", int, 0)
    world = _take(sim, "world", "simulation", str, None)
    _reject_unknown(sim, "simulation")
    if steps < 0:
        raise ConfigError(f"simulation.steps must be >= 0, got {steps}")
    if replications < 1:
        raise ConfigError(f"simulation.replications must be >= 1, got {replications}")

    sweep = _require_mapping(document.pop("sweep", None), "sweep")
    mobility_values = _take_list(sweep, "mobility", "sweep", float, (0.05,))
    population_values = _take_list(sweep, "population", "sweep", int, (70,))
    infected_values = _take_list(sweep, "initially_infected", "sweep", int, (9,))
    contamination_values = _take_list(sweep, "patch_contamination_probability", "sweep", float, (0.5,))
    _reject_unknown(sweep, "sweep")
    for mu in mobility_values:
        if not 0.0 <= mu <= 1.0:
            raise ConfigError(f"sweep.mobility values must be in [0, 1], got {mu}")
    for pc in contamination_values:
        if not 0.0 <= pc <= 0.5:
            raise ConfigError(f"sweep.patch_contamination_probability values must be in [0, 0.5], got {pc}")
    for n in population_values:
        if n < 1:
            raise ConfigError(f"sweep.population values must be >= 1, got {n}")
    for alpha in infected_values:
        if alpha < 0:
            raise ConfigError(f"sweep.initially_infected values must be >= 0, got {alpha}")
        for n in population_values:
            if alpha > n:
                raise ConfigError(f"initially_infected {alpha} exceeds population {n} in the sweep grid")

    out = _require_mapping(document.pop("output", None), "output")
    output_directory = _take(out, "directory", "output", str, "abm_results")
    write_histograms = _take(out, "histograms", "output", bool, True)
    event_log = _take(out, "event_log", "output", str, None)
    _reject_unknown(out, "output")
    _reject_unknown(document, "")

    return ExperimentConfig(
        dispersion=dispersion,
        exposure=exposure,
        steps=steps,
        replications=replications,
        base_seed=base_seed,
        world=world,
        rates=rates,
        mobility_values=mobility_values,
        population_values=population_values,
        initially_infected_values=infected_values,
        contamination_values=contamination_values,
        output_directory=output_directory,
        write_histograms=write_histograms,
        event_log=event_log,
    )


def resolved_mapping(config: ExperimentConfig) -> dict:
    """Plain mapping with every default explicit; re-parses identically."""
    return {
        "dispersion": {f.name: getattr(config.dispersion, f.name) for f in dataclass_fields(config.dispersion)},
        "exposure": {f.name: getattr(config.exposure, f.name) for f in dataclass_fields(config.exposure)},
        "simulation": {
            "steps": config.steps,
            "replications": config.replications,
            "base_seed": config.base_seed,
            "world": config.world,
            "rates": {
                "same_cell": config.rates.same_cell,
                "neighbor_cell": config.rates.neighbor_cell,
                "surface": config.rates.surface,
                "diagonal_cell": config.rates.diagonal_cell,
            },
        },
        "sweep": {
            "mobility": list(config.mobility_values),
            "population": list(config.population_values),
            "initially_infected": list(config.initially_infected_values),
            "patch_contamination_probability": list(config.contamination_values),
        },
        "output": {
            "directory": config.output_directory,
            "histograms": config.write_histograms,
            "event_log": config.event_log,
        },
    }


def config_to_yaml(config: ExperimentConfig) -> str:
    return yaml.safe_dump(resolved_mapping(config), sort_keys=False)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Path | str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a CSV with round-trip numeric formatting; returns the path."""
    path = Path(path)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        handle.write(",".join(columns) + "\n")
        for row in rows:
            handle.write(",".join(item if isinstance(item, str) else _fmt(item) for item in row) + "\n")
    return path


def write_aggregate_csv(statistics: Sequence[RunStatistics], path: Path | str) -> Path:
    rows = (
        (
            s.config.mobility,
            s.config.population,
            s.config.initially_infected,
            s.config.patch_contamination_probability,
            s.mean,
            s.variance,
            s.replications,
        )
        for s in statistics
    )
    return write_csv(path, AGGREGATE_COLUMNS, rows)


def histogram_filename(config: SimulationConfig) -> str:
    return (
        f"hist_mu{config.mobility:g}_n{config.population}"
        f"_alpha{config.initially_infected}_pc{config.patch_contamination_probability:g}.csv"
    )


def write_histogram_csv(statistics: RunStatistics, path: Path | str) -> Path:
    histogram = statistics.histogram
    return write_csv(path, HISTOGRAM_COLUMNS, ((count, int(occ)) for count, occ in enumerate(histogram)))


def write_event_log(events: Sequence[InfectionEvent], path: Path | str) -> Path:
    rows = ((e.replication, e.step, e.agent_id, e.channel, e.cell_x, e.cell_y) for e in events)
    return write_csv(path, EVENT_COLUMNS, rows)


def write_profile_csv(report: ComparisonReport, path: Path | str) -> Path:
    return write_csv(path, PROFILE_COLUMNS, report.rows())


def write_results(
    statistics: Sequence[RunStatistics],
    output_directory: Path | str,
    *,
    histograms: bool = True,
    event_log_path: Path | str | None = None,
) -> list[Path]:
    """Persist a sweep: aggregate CSV, per-point histograms, optional events."""
    directory = Path(output_directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = [write_aggregate_csv(statistics, directory / "aggregate.csv")]
    if histograms:
        for s in statistics:
            written.append(write_histogram_csv(s, directory / histogram_filename(s.config)))
    if event_log_path is not None:
        events: list[InfectionEvent] = []
        for s in statistics:
            events.extend(s.events or [])
        written.append(write_event_log(events, event_log_path))
    return written
