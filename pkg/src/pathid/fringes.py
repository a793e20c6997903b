"""Closed-form fringe models and visibilities, no density matrices.

Every detection probability in this setup is a pure sinusoid in the
interferometric phase, ``P(phi_in) = offset + amplitude * sin(phi_in +
phase0)``.  The complex cross-source amplitude carries all wave-plate,
attenuator and propagation-phase dependence; its modulus and argument are
the fringe amplitude and phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SettingsError, ValidationError
from .interferometer import InterferometerConfig, PhaseTable, PolarizationProjector

# Fringes with P_max + P_min below this are flat; visibility is defined as 0.
ZERO_OFFSET_TOL = 1e-15
# Angular slack when checking that delta / theta sit at a required setting.
SETTING_TOL = 1e-9


@dataclass(frozen=True)
class FringeModel:
    """offset + amplitude * sin(phi_in + phase0)."""

    offset: float
    amplitude: float
    phase0: float

    def __call__(self, phi_in):
        return self.offset + self.amplitude * np.sin(np.asarray(phi_in) + self.phase0)

    @property
    def p_max(self) -> float:
        return self.offset + self.amplitude

    @property
    def p_min(self) -> float:
        return self.offset - self.amplitude

    @property
    def visibility(self) -> float:
        total = self.p_max + self.p_min
        if total < ZERO_OFFSET_TOL:
            return 0.0
        return (self.p_max - self.p_min) / total


def combine_sinusoids(u: float, v: float, alpha: float) -> tuple[float, float]:
    """Resolve u sin(x) + v sin(x + alpha) into (amplitude, beta).

    amplitude >= 0 and u sin x + v sin(x + alpha) = amplitude sin(x + beta);
    atan2 fixes the quadrant, and full cancellation returns beta = 0.
    """
    amplitude = math.sqrt(max(u**2 + v**2 + 2.0 * u * v * math.cos(alpha), 0.0))
    beta = math.atan2(v * math.sin(alpha), u + v * math.cos(alpha))
    if amplitude < ZERO_OFFSET_TOL:
        beta = 0.0
    return amplitude, beta


def _mixing_terms(state) -> tuple[float, float, float, float, float]:
    eta = state.eta
    n = (1.0 - eta) / 4.0
    m_h = eta * state.i_h + n
    m_v = eta * state.i_v + n
    return n, m_h, m_v, m_h + n, m_v + n  # N, M_H, M_V, K_H, K_V


def cross_amplitudes(config: InterferometerConfig) -> dict[str, complex]:
    """The four complex cross-source coherences of the signal state."""
    n, m_h, m_v, _, _ = _mixing_terms(config.state)
    ph = config.phases
    delta = config.delta
    ell = m_h * config.t_h * np.exp(1.0j * (ph.phi_hh - delta)) - n * config.t_v * np.exp(
        1.0j * (ph.phi_vh + delta)
    )
    ell_p = n * config.t_h * np.exp(1.0j * (ph.phi_hv - delta)) - m_v * config.t_v * np.exp(
        1.0j * (ph.phi_vv + delta)
    )
    gamma = config.state.coh_product
    coh_hv = gamma * config.t_v * np.exp(1.0j * (ph.phi_hh_vv + delta))
    coh_vh = gamma * config.t_h * np.exp(1.0j * (ph.phi_vv_hh - delta))
    return {"ell": ell, "ell_p": ell_p, "coh_hv": coh_hv, "coh_vh": coh_vh}


def fringe_model(
    config: InterferometerConfig, projector: PolarizationProjector
) -> FringeModel:
    """Exact sinusoid for the detection probability at one analyzer setting."""
    _, _, _, k_h, k_v = _mixing_terms(config.state)
    amps = cross_amplitudes(config)
    c_h, c_v = projector.c_h, projector.c_v
    cos2t = math.cos(2.0 * config.theta)
    sin2t = math.sin(2.0 * config.theta)
    z = (abs(c_h) ** 2 * amps["ell"] + abs(c_v) ** 2 * amps["ell_p"]) * cos2t
    z += (np.conj(c_h) * c_v * amps["coh_hv"] + np.conj(c_v) * c_h * amps["coh_vh"]) * sin2t
    offset = (abs(c_h) ** 2 * k_h + abs(c_v) ** 2 * k_v) / 2.0
    amplitude = config.b1b2 * abs(z)
    phase0 = float(np.angle(z)) if amplitude >= ZERO_OFFSET_TOL else 0.0
    return FringeModel(offset=offset, amplitude=amplitude, phase0=phase0)


def blocked_arm_model(
    config: InterferometerConfig, projector: PolarizationProjector, which_source: int
) -> float:
    """Flat detection level when the other source's signal beam is blocked."""
    if which_source not in (1, 2):
        raise ValidationError(f"which_source must be 1 or 2, got {which_source!r}")
    _, _, _, k_h, k_v = _mixing_terms(config.state)
    weight = config.b1_mag**2 if which_source == 1 else config.b2_mag**2
    return weight * (abs(projector.c_h) ** 2 * k_h + abs(projector.c_v) ** 2 * k_v) / 2.0


def delta_star(phases: PhaseTable, which: str) -> float:
    """Wave-plate setting pinning the H/V fringe-amplitude cosine to +-1.

    ``H`` / ``V`` give cos(chi + 2 delta) = +1 (minimum nonzero visibility);
    the primed variants ``H'`` / ``V'`` give -1.  Values are canonical in
    [0, pi) since every fringe formula depends on delta through 2*delta.
    """
    targets = {
        "H": -phases.chi / 2.0,
        "V": -phases.chi_double / 2.0,
        "H'": (math.pi - phases.chi) / 2.0,
        "V'": (math.pi - phases.chi_double) / 2.0,
    }
    try:
        value = targets[which]
    except KeyError:
        raise ValidationError(
            f"which must be one of H, V, H', V'; got {which!r}"
        ) from None
    return value % math.pi


def _require_setting(name: str, actual: float, wanted: float, period: float) -> None:
    defect = (actual - wanted) % period
    defect = min(defect, period - defect)
    if defect > SETTING_TOL:
        raise SettingsError(
            f"{name} must equal {wanted!r} (mod {period!r}) for this formula, "
            f"got {actual!r}"
        )


def visibility_closed(
    config: InterferometerConfig, projector: PolarizationProjector
) -> float:
    """Closed-form visibility at the settings each formula is valid for.

    H and V require theta = 0 and delta at the corresponding delta_star;
    D/A/R/L require theta = pi/4 (any delta).  Attenuations generalize the
    lossless expressions and reduce to them at t_h = t_v = 1.
    """
    label = projector.label
    n, m_h, m_v, k_h, k_v = _mixing_terms(config.state)
    b = config.b1b2
    if label in ("H", "V"):
        _require_setting("theta", config.theta, 0.0, math.pi)
        _require_setting(
            "delta", config.delta, delta_star(config.phases, label), math.pi
        )
        if label == "H":
            return 2.0 * b * abs(m_h * config.t_h - n * config.t_v) / k_h
        return 2.0 * b * abs(m_v * config.t_v - n * config.t_h) / k_v
    if label in ("D", "A", "R", "L"):
        _require_setting("theta", config.theta, math.pi / 4.0, math.pi)
        cos_term = math.cos(config.phases.chi_prime - 2.0 * config.delta)
        sign = 1.0 if label in ("D", "A") else -1.0
        radicand = config.t_h**2 + config.t_v**2 + 2.0 * sign * config.t_h * config.t_v * cos_term
        return 2.0 * b * config.state.coh_product * math.sqrt(max(radicand, 0.0))
    raise ValidationError(f"unknown polarization label {label!r}")
