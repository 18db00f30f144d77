"""Infection probabilities from concentration fields and surface contact.

Inhalation risk uses the dose-response curve ``1 - (1 - a)^(N / N_b)``
anchored so that inhaling the reference dose ``N_b`` gives probability
``a``.  Surface risk is linear in contact time once the surface has passed
its contamination threshold.  The per-step rates consumed by the
agent-based simulation are first-order-in-time reductions of these forms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .dispersion import BackgroundField, ProximityField, proximity_concentration
from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

#: Mean breathing rate of 19 dm^3/min expressed in m^3/s (~3.17e-4).
DEFAULT_BREATHING_RATE = 19.0e-3 / 60.0


@dataclass(frozen=True)
class ExposureParams:
    """Host and pathogen constants for the exposure-to-infection step.

    Attributes:
        breathing_rate: Inhaled air volume per second, m^3/s.  The mean
            value is used; a probabilistic breathing rate is out of scope.
        infectious_dose: Droplet count giving infection probability
            ``dose_probability`` when inhaled.
        dose_probability: Probability anchored at the infectious dose.
        contact_probability: Infection probability per hand-to-surface
            contact with a contaminated surface.
        contact_frequency: Hand-to-surface contacts per second.
    """

    breathing_rate: float = DEFAULT_BREATHING_RATE
    infectious_dose: float = 100.0
    dose_probability: float = 0.1
    contact_probability: float = 1.0e-4
    contact_frequency: float = 1.0 / 60.0

    def __post_init__(self):
        if not 0.0 < self.dose_probability < 1.0:
            raise InvalidParameterError(f"dose_probability must be in (0, 1), got {self.dose_probability!r}")
        for name in ("breathing_rate", "infectious_dose", "contact_probability", "contact_frequency"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")


def inhaled_count(concentration: float, breathing_rate: float, duration: float) -> float:
    """Droplets inhaled over ``duration`` seconds at constant concentration."""
    if concentration < 0.0 or duration < 0.0:
        raise InvalidParameterError("concentration and duration must be >= 0")
    return breathing_rate * concentration * duration


def infection_probability_inhalation(inhaled: float, params: ExposureParams) -> float:
    """Dose-response probability for an inhaled droplet count.

    ``1 - (1 - a)^(N / N_b)``; exactly ``a`` at the infectious dose,
    strictly below 1 for any finite dose, monotone increasing.
    """
    if inhaled < 0.0:
        raise InvalidParameterError(f"inhaled count must be >= 0, got {inhaled!r}")
    exponent = inhaled / params.infectious_dose
    return -math.expm1(exponent * math.log1p(-params.dose_probability))


def per_step_direct_probability(
    distance: float, field: ProximityField, params: ExposureParams, step_seconds: float
) -> float:
    """First-order per-step infection probability near an emitter.

    ``a * Q * c(r) * dt / N_b``, the leading term of the dose-response
    curve for small time steps.  If the linearization leaves the valid
    regime (result >= 1) the value saturates to 1 and a warning is logged.
    """
    if step_seconds < 0.0:
        raise InvalidParameterError(f"step_seconds must be >= 0, got {step_seconds!r}")
    c = proximity_concentration(distance, field)
    p = params.dose_probability * params.breathing_rate * c * step_seconds / params.infectious_dose
    if p >= 1.0:
        logger.warning(
            "per-step linearization invalid (p=%.3g >= 1 at r=%.3g m, dt=%.3g s); saturating to 1",
            p,
            distance,
            step_seconds,
        )
        return 1.0
    return p


def infection_probability_surface(
    exposure_seconds: float, prior_presence_seconds: float, threshold_seconds: float, params: ExposureParams
) -> float:
    """Infection probability from a possibly contaminated surface.

    Zero unless the emitter stayed long enough (``prior_presence_seconds``
    beyond ``threshold_seconds``) to contaminate the surface; then linear
    in the healthy individual's exposure time, clamped to [0, 1].
    """
    if exposure_seconds < 0.0 or prior_presence_seconds < 0.0 or threshold_seconds < 0.0:
        raise InvalidParameterError("times must be >= 0")
    if prior_presence_seconds <= threshold_seconds:
        return 0.0
    p = exposure_seconds * params.contact_frequency * params.contact_probability
    return min(p, 1.0)


def per_step_surface_probability(params: ExposureParams, step_seconds: float) -> float:
    """Per-step infection probability while on a contaminated surface patch."""
    if step_seconds < 0.0:
        raise InvalidParameterError(f"step_seconds must be >= 0, got {step_seconds!r}")
    return min(params.contact_frequency * params.contact_probability * step_seconds, 1.0)


def combined_inhalation_probability(
    distance: float,
    field: ProximityField,
    background: BackgroundField,
    params: ExposureParams,
    duration: float,
) -> float:
    """Infection probability with proximity and background air combined.

    Concentrations add before the dose conversion, so the result dominates
    each single-channel probability.
    """
    c = proximity_concentration(distance, field) + background.concentration
    return infection_probability_inhalation(inhaled_count(c, params.breathing_rate, duration), params)
