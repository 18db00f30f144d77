"""Closed-form droplet and aerosol concentration fields.

Covers the three contamination channels of the indoor exposure model:

* air in the immediate proximity of an emitting individual (a radial
  diffusion profile with first-order removal, flat inside a well-mixed
  control sphere, vanishing at the validity radius),
* well-mixed background air of a compartment,
* surfaces accumulating sedimented large droplets.

The proximity profile is normalized so that the standing airborne droplet
population equals ``source rate x removal time constant``; the volume
integral has a closed form, which is what :func:`normalization_constant`
evaluates.  All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError

# Droplet emission presets, droplets per second.
BREATHING_RATE = 1.5
SPEAKING_RATE = 5.0
COUGHING_SNEEZING_RATE = 66.0


class Activity(enum.Enum):
    """Respiratory activity of the emitting individual."""

    BREATHING = "breathing"
    SPEAKING = "speaking"
    COUGHING_SNEEZING = "coughing_sneezing"
    CUSTOM = "custom"


class Mask(enum.Enum):
    """Mask worn by the emitter; attenuates the source rate only."""

    NONE = "none"
    ORDINARY = "ordinary"
    DEDICATED = "dedicated"


ACTIVITY_RATES: dict[Activity, float] = {
    Activity.BREATHING: BREATHING_RATE,
    Activity.SPEAKING: SPEAKING_RATE,
    Activity.COUGHING_SNEEZING: COUGHING_SNEEZING_RATE,
}

# Source-rate multipliers; reduction pinned at 20% (ordinary) / 40% (dedicated).
MASK_FACTORS: dict[Mask, float] = {
    Mask.NONE: 1.0,
    Mask.ORDINARY: 0.8,
    Mask.DEDICATED: 0.6,
}


@dataclass(frozen=True)
class DispersionParams:
    """Physical constants of the droplet field.

    Attributes:
        diffusion_coefficient: Effective diffusion/convection coefficient
            of droplets in air, m^2/s.
        decay_constant_direct: Removal time constant of droplets in the
            near field (drying, sedimentation, ventilation), s.
        decay_constant_background: Removal time constant of small droplets
            and aerosols in compartment background air, s.  Larger than the
            near-field constant.
        control_radius: Radius of the well-mixed ~1 m^3 sphere around the
            emitter, m.
        validity_radius: Distance beyond which the proximity model sets the
            concentration to zero, m.
    """

    diffusion_coefficient: float = 0.05
    decay_constant_direct: float = 50.0
    decay_constant_background: float = 125.0
    control_radius: float = 0.62
    validity_radius: float = 2.6

    def __post_init__(self):
        for name in (
            "diffusion_coefficient",
            "decay_constant_direct",
            "decay_constant_background",
            "control_radius",
            "validity_radius",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
        if self.control_radius >= self.validity_radius:
            raise InvalidParameterError(
                "control_radius must be smaller than validity_radius "
                f"({self.control_radius} >= {self.validity_radius})"
            )

    @property
    def diffusion_length(self) -> float:
        """sqrt(D * tau), m; sets the decay scale of the proximity profile."""
        return math.sqrt(self.diffusion_coefficient * self.decay_constant_direct)


@dataclass(frozen=True)
class SourceProfile:
    """Emission profile of one individual.

    ``base_rate`` may be omitted for the preset activities; it is then
    filled in from the preset table.  ``CUSTOM`` requires an explicit rate.
    """

    activity: Activity = Activity.BREATHING
    mask: Mask = Mask.NONE
    base_rate: float | None = None

    def __post_init__(self):
        if self.activity is Activity.CUSTOM:
            if self.base_rate is None:
                raise InvalidParameterError("custom activity requires an explicit base_rate")
        else:
            preset = ACTIVITY_RATES[self.activity]
            if self.base_rate is None:
                object.__setattr__(self, "base_rate", preset)
            elif self.base_rate != preset:
                raise InvalidParameterError(
                    f"base_rate {self.base_rate} conflicts with the "
                    f"{self.activity.value} preset {preset}; use CUSTOM for other rates"
                )
        if not (math.isfinite(self.base_rate) and self.base_rate >= 0.0):
            raise InvalidParameterError(f"base_rate must be finite and >= 0, got {self.base_rate!r}")


def effective_source_rate(profile: SourceProfile) -> float:
    """Source rate after mask attenuation, droplets/s."""
    return profile.base_rate * MASK_FACTORS[profile.mask]


def _stable_coth(k: float) -> float:
    # coth(k) = 1 + 2/(e^{2k} - 1), overflow-free for large k
    return 1.0 + 2.0 / math.expm1(2.0 * k)


def _stable_csch(k: float) -> float:
    # csch(k) = 2 e^{-k} / (1 - e^{-2k})
    return 2.0 * math.exp(-k) / (-math.expm1(-2.0 * k))


def _mass_geometry(params: DispersionParams) -> float:
    """Volume integral of the unit-plateau profile, m^3.

    Integrating the piecewise profile (1 inside the control sphere, the
    sinh ratio between control and validity radii, 0 beyond) against
    4*pi*r^2 gives

        (4/3) pi r0^3 + 4 pi r0 (L r0 coth(k) - d L csch(k) + L^2)

    with L the diffusion length, d the validity radius and k = (d - r0)/L.
    """
    r0 = params.control_radius
    d = params.validity_radius
    lam = params.diffusion_length
    k = (d - r0) / lam
    shell = lam * r0 * _stable_coth(k) - d * lam * _stable_csch(k) + lam * lam
    return (4.0 / 3.0) * math.pi * r0**3 + 4.0 * math.pi * r0 * shell


def normalization_constant(params: DispersionParams, rate: float) -> float:
    """Plateau concentration inside the control sphere, droplets/m^3.

    Fixed by requiring the volume integral of the proximity profile to
    equal ``rate * decay_constant_direct`` (standing population = emission
    rate x droplet lifetime).  The integral is evaluated in closed form;
    the test suite cross-checks the result against adaptive quadrature of
    the profile to relative 1e-8.

    Raises:
        InvalidParameterError: For a negative rate or a degenerate
            geometry that yields a non-finite constant.
    """
    if not (math.isfinite(rate) and rate >= 0.0):
        raise InvalidParameterError(f"rate must be finite and >= 0, got {rate!r}")
    c = rate * params.decay_constant_direct / _mass_geometry(params)
    if not math.isfinite(c):
        raise InvalidParameterError(
            "normalization constant is not finite; parameters are degenerate "
            f"(D={params.diffusion_coefficient}, tau={params.decay_constant_direct}, "
            f"r0={params.control_radius}, d_max={params.validity_radius})"
        )
    return c


@dataclass(frozen=True)
class ProximityField:
    """Radial droplet concentration around one emitter.

    Attributes:
        params: Physical constants of the field.
        effective_rate: Source rate after mask attenuation, droplets/s.
        normalization: Plateau concentration inside the control sphere,
            droplets/m^3.
    """

    params: DispersionParams
    effective_rate: float
    normalization: float

    def __post_init__(self):
        if self.normalization < 0.0:
            raise InvalidParameterError("normalization must be >= 0")
        if (self.normalization == 0.0) != (self.effective_rate == 0.0):
            raise InvalidParameterError("normalization must vanish exactly when the rate does")

    @classmethod
    def from_rate(cls, params: DispersionParams, rate: float) -> "ProximityField":
        """Build the field for a bare emission rate in droplets/s."""
        return cls(params=params, effective_rate=rate, normalization=normalization_constant(params, rate))

    @classmethod
    def from_profile(cls, params: DispersionParams, profile: SourceProfile) -> "ProximityField":
        """Build the field for an activity/mask profile."""
        return cls.from_rate(params, effective_source_rate(profile))

    def concentration(self, r):
        """Concentration at distance(s) ``r`` in meters; see :func:`proximity_concentration`."""
        return proximity_concentration(r, self)


def proximity_concentration(r, field: ProximityField):
    """Droplet concentration at distance ``r`` from the emitter, droplets/m^3.

    Piecewise: the plateau value inside the control radius, the closed-form
    ``(r0/r) sinh((d_max - r)/L) / sinh((d_max - r0)/L)`` profile between
    control and validity radii, and zero beyond.  Accepts scalars or numpy
    arrays of nonnegative distances.
    """
    p = field.params
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0):
        raise InvalidParameterError("distance must be >= 0")
    lam = p.diffusion_length
    k = (p.validity_radius - p.control_radius) / lam
    inside = r_arr <= p.control_radius
    outside = r_arr >= p.validity_radius
    shell = ~inside & ~outside
    # sinh(x)/sinh(k) computed as exp(x-k) * (1 - e^{-2x}) / (1 - e^{-2k}),
    # stable for arbitrarily large k
    r_safe = np.where(shell, r_arr, p.control_radius)
    x = (p.validity_radius - r_safe) / lam
    ratio = np.exp(x - k) * (-np.expm1(-2.0 * x)) / (-math.expm1(-2.0 * k))
    values = np.where(
        inside,
        field.normalization,
        np.where(shell, field.normalization * (p.control_radius / r_safe) * ratio, 0.0),
    )
    if np.isscalar(r) or r_arr.ndim == 0:
        return float(values)
    return values


@dataclass(frozen=True)
class BackgroundField:
    """Well-mixed droplet/aerosol concentration of a compartment.

    Attributes:
        compartment_volume: Air volume of the compartment, m^3.
        source_rates: Emission rates of the infected occupants, droplets/s.
        decay_constant: Background removal time constant, s.
    """

    compartment_volume: float
    source_rates: tuple[float, ...] = ()
    decay_constant: float = 125.0

    def __post_init__(self):
        object.__setattr__(self, "source_rates", tuple(float(s) for s in self.source_rates))

    @property
    def concentration(self) -> float:
        """Stationary background concentration, droplets/m^3."""
        return background_concentration(self.source_rates, self.decay_constant, self.compartment_volume)


def background_concentration(rates, decay_constant: float, volume: float) -> float:
    """Stationary well-mixed concentration ``tau' * sum(rates) / V``, droplets/m^3."""
    if not (math.isfinite(volume) and volume > 0.0):
        raise InvalidParameterError(f"compartment volume must be > 0, got {volume!r}")
    if not (math.isfinite(decay_constant) and decay_constant > 0.0):
        raise InvalidParameterError(f"background decay constant must be > 0, got {decay_constant!r}")
    total = 0.0
    for s in rates:
        if s < 0.0:
            raise InvalidParameterError(f"source rates must be >= 0, got {s!r}")
        total += s
    return decay_constant * total / volume


@dataclass(frozen=True)
class PathogenSurfaceConstants:
    """Pathogen constants governing surface contamination.

    ``genomes_per_droplet`` must be consistent (within 5%) with the product
    of the viral load of saliva and the mean large-droplet volume.
    """

    genomes_per_droplet: float = 10.0  # gc/droplet
    contamination_threshold: float = 1.0e4  # gc/m^2, i.e. 1 gc/cm^2
    viral_load: float = 7.0e12  # gc per m^3 of saliva
    large_droplet_volume: float = 1.44e-12  # m^3

    def __post_init__(self):
        for name in ("genomes_per_droplet", "contamination_threshold", "viral_load", "large_droplet_volume"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
        implied = self.viral_load * self.large_droplet_volume
        if abs(self.genomes_per_droplet - implied) > 0.05 * implied:
            raise InvalidParameterError(
                f"genomes_per_droplet {self.genomes_per_droplet} deviates more than 5% from "
                f"viral_load * large_droplet_volume = {implied:.4g}"
            )


@dataclass(frozen=True)
class SurfaceState:
    """Contamination state of one work surface.

    ``surface_decay_constant`` of ``None`` means no decay, the default:
    surface half-lives of relevant pathogens are comparable to a full work
    shift, so accumulated droplets are not removed within one.
    """

    area: float  # m^2
    large_droplet_fraction: float = 0.10  # dimensionless share of sedimenting droplets
    surface_decay_constant: float | None = None  # s, None = no decay
    droplet_density: float = 0.0  # droplets/m^2
    pathogen: PathogenSurfaceConstants = field(default_factory=PathogenSurfaceConstants)

    def __post_init__(self):
        if not (math.isfinite(self.area) and self.area > 0.0):
            raise InvalidParameterError(f"area must be > 0, got {self.area!r}")
        if not 0.0 <= self.large_droplet_fraction <= 1.0:
            raise InvalidParameterError(
                f"large_droplet_fraction must be in [0, 1], got {self.large_droplet_fraction!r}"
            )
        if self.surface_decay_constant is not None and self.surface_decay_constant <= 0.0:
            raise InvalidParameterError("surface_decay_constant must be > 0 or None")
        if self.droplet_density < 0.0:
            raise InvalidParameterError("droplet_density must be >= 0")

    @property
    def genome_density(self) -> float:
        """Viral genome copies per m^2 on the surface."""
        return self.droplet_density * self.pathogen.genomes_per_droplet

    @property
    def contaminated(self) -> bool:
        """True once the genome density reaches the contamination threshold."""
        return self.genome_density >= self.pathogen.contamination_threshold

    def exposed(self, rate: float, duration: float) -> "SurfaceState":
        """State after an emitter with the given rate stays for ``duration`` seconds.

        Without decay the density grows linearly; with decay the existing
        deposit relaxes toward the equilibrium ``w * rate * tau_s / A``.
        """
        if duration < 0.0:
            raise InvalidParameterError("duration must be >= 0")
        gain = surface_density(rate, self.large_droplet_fraction, self.area, duration, self.surface_decay_constant)
        if self.surface_decay_constant is None:
            new_density = self.droplet_density + gain
        else:
            new_density = self.droplet_density * math.exp(-duration / self.surface_decay_constant) + gain
        return replace(self, droplet_density=new_density)


def surface_density(
    rate: float,
    large_droplet_fraction: float,
    area: float,
    duration: float,
    surface_decay_constant: float | None = None,
) -> float:
    """Droplets sedimented per unit area after ``duration`` seconds, droplets/m^2.

    No decay (the default): ``w * rate * t / A``.  With a finite surface
    decay constant the closed-form relaxation
    ``(w * rate * tau_s / A) * (1 - exp(-t / tau_s))`` is used, which
    converges to the linear form as tau_s grows.
    """
    if not (math.isfinite(area) and area > 0.0):
        raise InvalidParameterError(f"area must be > 0, got {area!r}")
    if not 0.0 <= large_droplet_fraction <= 1.0:
        raise InvalidParameterError(f"large_droplet_fraction must be in [0, 1], got {large_droplet_fraction!r}")
    if rate < 0.0:
        raise InvalidParameterError(f"rate must be >= 0, got {rate!r}")
    if duration < 0.0:
        raise InvalidParameterError(f"duration must be >= 0, got {duration!r}")
    influx = large_droplet_fraction * rate / area  # droplets per m^2 per s
    if surface_decay_constant is None:
        return influx * duration
    if surface_decay_constant <= 0.0:
        raise InvalidParameterError("surface_decay_constant must be > 0 or None")
    return influx * surface_decay_constant * -math.expm1(-duration / surface_decay_constant)


def disinfect(state: SurfaceState, reduction_fraction: float) -> SurfaceState:
    """Surface state after removing the given fraction of the deposit."""
    if not 0.0 <= reduction_fraction <= 1.0:
        raise InvalidParameterError(f"reduction_fraction must be in [0, 1], got {reduction_fraction!r}")
    return replace(state, droplet_density=state.droplet_density * (1.0 - reduction_fraction))


def contamination_threshold_time(
    area: float,
    contamination_threshold: float,
    large_droplet_fraction: float,
    rate: float,
    genomes_per_droplet: float,
) -> float:
    """Seconds of continuous emission until a surface counts as contaminated.

    Returns ``A * gc_thres / (w * rate * nu)``.  A zero (or negative) rate
    yields ``math.inf`` rather than an error, so rate sweeps that include
    an absent source do not abort.
    """
    for name, value in (
        ("area", area),
        ("contamination_threshold", contamination_threshold),
        ("large_droplet_fraction", large_droplet_fraction),
        ("genomes_per_droplet", genomes_per_droplet),
    ):
        if not (math.isfinite(value) and value > 0.0):
            raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
    if rate <= 0.0:
        return math.inf
    return area * contamination_threshold / (large_droplet_fraction * rate * genomes_per_droplet)
