"""Grid-world workplace simulation of airborne and surface transmission.

Agents random-walk on a grid of 1.5 m cells (floor, wall, workplace).
Each step represents one minute.  The rules, in the fixed order they are
applied within a step:

1. **Movement.**  Every agent proposes a move with probability ``mu_eff``
   and a uniformly drawn orthogonal direction; proposals into walls are
   rejected (the agent stays).  ``mu_eff`` is the mobility ``mu``
   multiplied by 1e-2 while the agent is on or orthogonally adjacent to a
   workplace cell, which models slowing down to work.  (The mobility
   reduction "by 1e-2" is interpreted multiplicatively: a subtractive
   reading would zero out the whole interesting mobility range.)
2. **Patch contamination.**  Each workplace cell occupied by at least one
   infectious agent becomes contaminated with the configured probability
   (one draw per cell per step).  Contamination never reverts within a
   run: no cleaning happens during a shift.
3. **Transmission.**  Each susceptible agent is exposed through up to
   three independent channels: infectious agents on its own cell (rate
   ``same_cell`` each), infectious agents on orthogonally adjacent cells
   (``neighbor_cell`` each), and standing on a contaminated workplace cell
   (``surface``).  The per-step infection probability is
   ``1 - (1-p_same)^k0 (1-p_adj)^k1 (1-p_surf)^c``.  Newly infected agents
   enter the latent state: they keep moving but neither transmit nor
   contaminate for the rest of the run (one-day latency).

Randomness and reproducibility: replication ``i`` of a run with base seed
``b`` uses ``numpy.random.default_rng(SeedSequence((b, i)))``, a stable,
documented mixing of the two integers.  Within a step, draws happen in a
fixed order and batch shape: movement uniforms and directions for all
agents (skipped entirely when ``mu == 0``), one uniform per eligible
workplace cell in ascending cell order, one uniform per susceptible agent
in ascending agent order.  Results are therefore identical regardless of
how replications are distributed over processes.

When several channels could have caused an infection, the logged channel
is attributed by nested thresholds on the single transmission draw, which
reproduces the distribution of "first firing channel" in the order
same cell, adjacent cell, surface.
"""

from __future__ import annotations

import enum
import math
from concurrent import futures
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InvalidParameterError, InvariantViolation

#: Edge length of one grid cell, m.
CELL_SIZE = 1.5
#: Multiplicative mobility attenuation on and next to workplace cells.
MOBILITY_SLOWDOWN = 1.0e-2
#: Simulated seconds per step.
STEP_SECONDS = 60.0
#: Steps per 8-hour shift.
SHIFT_STEPS = 480

_ORTHOGONAL = ((-1, 0), (1, 0), (0, -1), (0, 1))
_DIAGONAL = ((-1, -1), (-1, 1), (1, -1), (1, 1))


class CellKind(enum.IntEnum):
    FLOOR = 0
    WALL = 1
    WORKPLACE = 2


class AgentState(enum.IntEnum):
    SUSCEPTIBLE = 0
    INFECTIOUS = 1
    LATENT_INFECTED = 2


class Channel(enum.Enum):
    DIRECT_SAME = "direct_same"
    DIRECT_ADJACENT = "direct_adjacent"
    DIRECT_DIAGONAL = "direct_diagonal"
    SURFACE = "surface"


@dataclass(eq=False)
class World:
    """Rectangular grid of floor, wall and workplace cells.

    The border must be entirely walls.  Lookup tables used by the stepper
    (flat kinds, neighbor indices, the near-workplace mask) are derived
    lazily and cached; the phantom index ``n_cells`` stands for "wall or
    outside" so occupancy arrays carry one extra, always-empty slot.
    """

    kinds: np.ndarray  # (height, width) int8 of CellKind values
    cell_size: float = CELL_SIZE

    def __post_init__(self):
        self.kinds = np.asarray(self.kinds, dtype=np.int8)
        if self.kinds.ndim != 2 or min(self.kinds.shape) < 3:
            raise InvalidParameterError("world must be a 2-D grid of at least 3x3 cells")
        if not np.isin(self.kinds, [k.value for k in CellKind]).all():
            raise InvalidParameterError("world contains unknown cell kinds")
        border = np.concatenate([self.kinds[0], self.kinds[-1], self.kinds[:, 0], self.kinds[:, -1]])
        if not (border == CellKind.WALL).all():
            raise InvalidParameterError("world border must consist entirely of walls")
        if (self.kinds != CellKind.WALL).sum() == 0:
            raise InvalidParameterError("world has no floor or workplace cells")
        if self.cell_size <= 0.0:
            raise InvalidParameterError("cell_size must be > 0")

    @property
    def height(self) -> int:
        return self.kinds.shape[0]

    @property
    def width(self) -> int:
        return self.kinds.shape[1]

    @property
    def n_cells(self) -> int:
        return self.kinds.size

    @cached_property
    def flat_kinds(self) -> np.ndarray:
        return self.kinds.reshape(-1)

    @cached_property
    def free_cells(self) -> np.ndarray:
        """Flat indices of non-wall cells, ascending."""
        return np.flatnonzero(self.flat_kinds != CellKind.WALL)

    @cached_property
    def workplace_mask(self) -> np.ndarray:
        """Boolean per flat cell index, plus the phantom slot."""
        mask = np.zeros(self.n_cells + 1, dtype=bool)
        mask[: self.n_cells] = self.flat_kinds == CellKind.WORKPLACE
        return mask

    def _neighbor_table(self, offsets) -> np.ndarray:
        height, width = self.kinds.shape
        rows, cols = np.divmod(np.arange(self.n_cells), width)
        table = np.empty((self.n_cells, len(offsets)), dtype=np.int64)
        for j, (dr, dc) in enumerate(offsets):
            nr, nc = rows + dr, cols + dc
            inside = (nr >= 0) & (nr < height) & (nc >= 0) & (nc < width)
            idx = np.where(inside, nr * width + nc, 0)
            blocked = ~inside | (self.flat_kinds[idx] == CellKind.WALL)
            table[:, j] = np.where(blocked, self.n_cells, idx)
        return table

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(n_cells, 4) orthogonal neighbor indices; walls map to the phantom index."""
        return self._neighbor_table(_ORTHOGONAL)

    @cached_property
    def diagonal_neighbors(self) -> np.ndarray:
        return self._neighbor_table(_DIAGONAL)

    @cached_property
    def near_workplace(self) -> np.ndarray:
        """True for cells on or orthogonally adjacent to a workplace (the slowdown zone)."""
        near = self.workplace_mask[: self.n_cells].copy()
        near |= self.workplace_mask[self.neighbors].any(axis=1)
        return near

    @cached_property
    def has_workplaces(self) -> bool:
        return bool(self.workplace_mask.any())


@dataclass(frozen=True)
class TransmissionRates:
    """Per-step infection probabilities of the individual channels.

    Defaults are the model's published per-minute rates for a coughing
    emitter at the grid's two contact distances (same cell 0.75 m,
    orthogonal neighbor 1.5 m) and for contaminated-surface contact.
    ``diagonal_cell`` is off by default; diagonal neighbors sit at 2.12 m,
    still inside the proximity model's validity range, and can be enabled
    with a rate derived from the concentration profile at that distance.
    """

    same_cell: float = 0.0049
    neighbor_cell: float = 0.0013
    surface: float = 0.0001
    diagonal_cell: float | None = None

    def __post_init__(self):
        for name in ("same_cell", "neighbor_cell", "surface"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameterError(f"rate {name} must be in [0, 1], got {value!r}")
        if self.diagonal_cell is not None and not 0.0 <= self.diagonal_cell <= 1.0:
            raise InvalidParameterError(f"rate diagonal_cell must be in [0, 1], got {self.diagonal_cell!r}")

    @classmethod
    def from_exposure_model(
        cls,
        proximity_field,
        exposure_params,
        step_seconds: float = STEP_SECONDS,
        cell_size: float = CELL_SIZE,
        include_diagonal: bool = False,
    ) -> "TransmissionRates":
        """Derive the per-step rates from the concentration/exposure model.

        Same-cell contact is evaluated at half a cell, adjacent contact at
        one cell, diagonal contact at sqrt(2) cells.
        """
        from .exposure import per_step_direct_probability, per_step_surface_probability

        return cls(
            same_cell=per_step_direct_probability(cell_size / 2.0, proximity_field, exposure_params, step_seconds),
            neighbor_cell=per_step_direct_probability(cell_size, proximity_field, exposure_params, step_seconds),
            surface=per_step_surface_probability(exposure_params, step_seconds),
            diagonal_cell=(
                per_step_direct_probability(
                    cell_size * math.sqrt(2.0), proximity_field, exposure_params, step_seconds
                )
                if include_diagonal
                else None
            ),
        )


@dataclass(frozen=True)
class SimulationConfig:
    """One grid point of the workplace experiment."""

    population: int
    initially_infected: int
    mobility: float
    patch_contamination_probability: float
    steps: int = SHIFT_STEPS
    replications: int = 1
    base_seed: int = 0
    rates: TransmissionRates = field(default_factory=TransmissionRates)

    def __post_init__(self):
        if self.population < 1:
            raise ConfigError(f"population must be >= 1, got {self.population!r}")
        if not 0 <= self.initially_infected <= self.population:
            raise ConfigError(
                f"initially_infected must be in [0, population]; got "
                f"{self.initially_infected} with population {self.population}"
            )
        if not 0.0 <= self.mobility <= 1.0:
            raise ConfigError(f"mobility must be in [0, 1], got {self.mobility!r}")
        if not 0.0 <= self.patch_contamination_probability <= 0.5:
            raise ConfigError(
                "patch_contamination_probability must be in [0, 0.5], got "
                f"{self.patch_contamination_probability!r}"
            )
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps!r}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications!r}")


class InfectionEvent(NamedTuple):
    replication: int
    step: int
    agent_id: int
    channel: str
    cell_x: int
    cell_y: int


def replication_seed(base_seed: int, replication_index: int) -> np.random.SeedSequence:
    """Stable per-replication seed: ``SeedSequence((base_seed, index))``."""
    return np.random.SeedSequence((base_seed, replication_index))


@dataclass(eq=False)
class SimulationState:
    """Mutable state of one running replication."""

    world: World
    config: SimulationConfig
    rng: np.random.Generator
    positions: np.ndarray  # flat cell index per agent
    states: np.ndarray  # AgentState value per agent
    contaminated: np.ndarray  # bool per flat cell (phantom slot included)
    susceptible: np.ndarray  # ascending indices of still-susceptible agents
    step_index: int = 0
    new_infections: int = 0
    events: list[InfectionEvent] | None = None
    replication: int = 0
    # transmission exposure cache, valid only for immobile populations
    _exposure: tuple | None = None
    _counts: np.ndarray | None = None

    @property
    def susceptible_count(self) -> int:
        return int(self.susceptible.size)


def initialize(
    config: SimulationConfig,
    world: World,
    rng,
    *,
    collect_events: bool = False,
    replication: int = 0,
) -> SimulationState:
    """Place agents uniformly at random on non-wall cells.

    Multiple agents per cell are allowed (co-location is the same-cell
    contact case).  The first ``initially_infected`` agents are marked
    infectious; all patches start clean.  ``rng`` may be a Generator, a
    SeedSequence or an integer seed.
    """
    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    free = world.free_cells
    positions = free[generator.integers(0, free.size, size=config.population)]
    states = np.full(config.population, AgentState.SUSCEPTIBLE, dtype=np.int8)
    states[: config.initially_infected] = AgentState.INFECTIOUS
    return SimulationState(
        world=world,
        config=config,
        rng=generator,
        positions=positions,
        states=states,
        contaminated=np.zeros(world.n_cells + 1, dtype=bool),
        susceptible=np.arange(config.initially_infected, config.population, dtype=np.int64),
        events=[] if collect_events else None,
        replication=replication,
    )


def _infectious_counts(state: SimulationState) -> np.ndarray:
    counts = state._counts
    if counts is None:
        infectious_positions = state.positions[state.states == AgentState.INFECTIOUS]
        counts = np.bincount(infectious_positions, minlength=state.world.n_cells + 1)
        if state.config.mobility == 0.0:
            state._counts = counts
    return counts


def step(state: SimulationState) -> SimulationState:
    """Advance the state by one minute: move, contaminate, transmit."""
    world, config, rng = state.world, state.config, state.rng
    n_cells = world.n_cells
    rates = config.rates

    if config.mobility > 0.0:
        mu_eff = np.where(
            world.near_workplace[state.positions], config.mobility * MOBILITY_SLOWDOWN, config.mobility
        )
        u_move = rng.random(config.population)
        directions = rng.integers(0, 4, size=config.population)
        proposals = world.neighbors[state.positions, directions]
        accepted = (u_move < mu_eff) & (proposals < n_cells)
        if accepted.any():
            state.positions = np.where(accepted, proposals, state.positions)
            state._counts = None
            state._exposure = None

    if world.has_workplaces and config.patch_contamination_probability > 0.0:
        infectious_positions = state.positions[state.states == AgentState.INFECTIOUS]
        candidates = np.unique(infectious_positions)
        candidates = candidates[
            world.workplace_mask[candidates] & ~state.contaminated[candidates]
        ]
        if candidates.size:
            hit = candidates[rng.random(candidates.size) < config.patch_contamination_probability]
            if hit.size:
                state.contaminated[hit] = True
                state._exposure = None

    susceptible = state.susceptible
    if susceptible.size:
        exposure = state._exposure
        if exposure is None:
            counts = _infectious_counts(state)
            pos = state.positions[susceptible]
            k_same = counts[pos]
            k_adjacent = counts[world.neighbors[pos]].sum(axis=1)
            survival = (1.0 - rates.same_cell) ** k_same * (1.0 - rates.neighbor_cell) ** k_adjacent
            thresh_same = 1.0 - (1.0 - rates.same_cell) ** k_same
            thresh_adjacent = 1.0 - survival
            if rates.diagonal_cell is not None:
                k_diagonal = counts[world.diagonal_neighbors[pos]].sum(axis=1)
                survival = survival * (1.0 - rates.diagonal_cell) ** k_diagonal
            thresh_diagonal = 1.0 - survival
            on_contaminated = state.contaminated[pos]
            survival = np.where(on_contaminated, survival * (1.0 - rates.surface), survival)
            probability = 1.0 - survival
            exposure = (probability, thresh_same, thresh_adjacent, thresh_diagonal, pos)
            if config.mobility == 0.0:
                state._exposure = exposure
        probability, thresh_same, thresh_adjacent, thresh_diagonal, pos = exposure
        draws = rng.random(susceptible.size)
        hit = draws < probability
        if hit.any():
            infected = susceptible[hit]
            state.states[infected] = AgentState.LATENT_INFECTED
            state.new_infections += int(hit.sum())
            if state.events is not None:
                u_hit = draws[hit]
                for agent, u, cell, t_same, t_adj, t_diag in zip(
                    infected.tolist(),
                    u_hit.tolist(),
                    pos[hit].tolist(),
                    thresh_same[hit].tolist(),
                    thresh_adjacent[hit].tolist(),
                    thresh_diagonal[hit].tolist(),
                ):
                    if u < t_same:
                        channel = Channel.DIRECT_SAME
                    elif u < t_adj:
                        channel = Channel.DIRECT_ADJACENT
                    elif u < t_diag:
                        channel = Channel.DIRECT_DIAGONAL
                    else:
                        channel = Channel.SURFACE
                    state.events.append(
                        InfectionEvent(
                            replication=state.replication,
                            step=state.step_index,
                            agent_id=agent,
                            channel=channel.value,
                            cell_x=cell % world.width,
                            cell_y=cell // world.width,
                        )
                    )
            state.susceptible = susceptible[~hit]
            state._exposure = None

    state.step_index += 1
    return state


@dataclass(eq=False)
class ReplicationResult:
    """Outcome of one replication."""

    replication: int
    new_infections: int
    steps_run: int
    events: list[InfectionEvent] | None = None


def _check_invariants(state: SimulationState) -> None:
    config, world = state.config, state.world
    counts = np.bincount(state.states, minlength=3)
    if counts.sum() != config.population:
        raise InvariantViolation("agent count changed during the run")
    if counts[AgentState.INFECTIOUS] != config.initially_infected:
        raise InvariantViolation("infectious count changed during the run (latency broken)")
    if counts[AgentState.LATENT_INFECTED] != state.new_infections:
        raise InvariantViolation("latent count disagrees with the infection counter")
    if (world.flat_kinds[state.positions] == CellKind.WALL).any():
        raise InvariantViolation("an agent ended up on a wall cell")
    if state.contaminated[~world.workplace_mask].any():
        raise InvariantViolation("a non-workplace cell was contaminated")


def run_replication(
    config: SimulationConfig,
    world: World,
    replication_index: int,
    *,
    collect_events: bool = False,
) -> ReplicationResult:
    """Run one seeded replication for the configured number of steps.

    The run stops early once no susceptible agents remain, which cannot
    change any observable outcome.  Cheap consistency checks run at the
    end and raise :class:`InvariantViolation` on failure.
    """
    rng = np.random.default_rng(replication_seed(config.base_seed, replication_index))
    state = initialize(config, world, rng, collect_events=collect_events, replication=replication_index)
    for _ in range(config.steps):
        step(state)
        if not state.susceptible.size:
            break
    _check_invariants(state)
    return ReplicationResult(
        replication=replication_index,
        new_infections=state.new_infections,
        steps_run=state.step_index,
        events=state.events,
    )


@dataclass(eq=False)
class RunStatistics:
    """Aggregate over the replications of one grid point."""

    config: SimulationConfig
    counts: np.ndarray  # new infections per replication, ordered by index
    events: list[InfectionEvent] | None = None

    @property
    def replications(self) -> int:
        return int(self.counts.size)

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    @property
    def variance(self) -> float:
        """Unbiased sample variance (0 for a single replication)."""
        return float(self.counts.var(ddof=1)) if self.counts.size > 1 else 0.0

    @property
    def histogram(self) -> np.ndarray:
        """Occurrences indexed by new-infection count."""
        return np.bincount(self.counts, minlength=1)


def _run_range(args):
    config, world, start, stop, collect_events = args
    results = [run_replication(config, world, i, collect_events=collect_events) for i in range(start, stop)]
    counts = [r.new_infections for r in results]
    events: list[InfectionEvent] = []
    if collect_events:
        for r in results:
            events.extend(r.events)
    return start, counts, events


def run_point(
    config: SimulationConfig,
    world: World,
    *,
    workers: int = 1,
    collect_events: bool = False,
) -> RunStatistics:
    """Run all replications of one grid point, optionally in parallel.

    Replications are independent and individually seeded, so the result
    is identical for any worker count; chunks are reassembled by
    replication index.
    """
    n = config.replications
    if workers <= 1 or n < 4:
        start, counts, events = _run_range((config, world, 0, n, collect_events))
        return RunStatistics(config, np.asarray(counts, dtype=np.int64), events if collect_events else None)
    chunk = max(1, math.ceil(n / (workers * 4)))
    ranges = [(config, world, lo, min(lo + chunk, n), collect_events) for lo in range(0, n, chunk)]
    counts = np.empty(n, dtype=np.int64)
    all_events: list[InfectionEvent] = []
    with futures.ProcessPoolExecutor(max_workers=workers) as pool:
        for start, chunk_counts, chunk_events in pool.map(_run_range, ranges):
            counts[start : start + len(chunk_counts)] = chunk_counts
            all_events.extend(chunk_events)
    all_events.sort(key=lambda e: (e.replication, e.step, e.agent_id))
    return RunStatistics(config, counts, all_events if collect_events else None)


def run_experiment(
    points: list[SimulationConfig],
    world: World,
    *,
    workers: int = 1,
    collect_events: bool = False,
) -> list[RunStatistics]:
    """Run every grid point of a sweep; order follows the input list."""
    return [run_point(cfg, world, workers=workers, collect_events=collect_events) for cfg in points]
