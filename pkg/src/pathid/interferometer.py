"""Full density-matrix simulation of the two-source path-identity setup.

Two identical pair sources emit into superposition; the source-2 idler is
rotated by a two-parameter wave-plate unitary, attenuated with
polarization-dependent amplitude transmissions and aligned onto the
source-1 idler mode.  Loss is carried as two extra orthogonal idler modes
so every intermediate state keeps trace one.  Only the signal photon is
ever detected, behind a balanced beamsplitter.

This module is the brute-force physics oracle; closed-form fringe
expressions live in :mod:`pathid.fringes`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .states import DensityMatrix, GeneralizedWernerParams, build_state

AMPLITUDE_NORM_TOL = 1e-12

# Order of the two-source pair basis: source-1 block then source-2 block.
JOINT_BASIS = (
    "H_I1 H_S1", "H_I1 V_S1", "V_I1 H_S1", "V_I1 V_S1",
    "H_I2 H_S2", "H_I2 V_S2", "V_I2 H_S2", "V_I2 V_S2",
)
# Aligned basis: idler {H_I1, V_I1, H_0, V_0} (loss modes last) x signal.
IDLER_BASIS = ("H_I1", "V_I1", "H_0", "V_0")
SIGNAL_BASIS = ("H_S1", "V_S1", "H_S2", "V_S2")
ALIGNED_BASIS = tuple(f"{i} {s}" for i in IDLER_BASIS for s in SIGNAL_BASIS)


@dataclass(frozen=True)
class PhaseTable:
    """Cross-source propagation phases, one orientation stored per pair.

    ``phi_hh`` is the phase of the source-1 HH component relative to the
    source-2 HH component; likewise for the other same-polarization pairs.
    ``phi_hh_vv`` / ``phi_vv_hh`` are the two cross-polarization coherence
    phases.  The antisymmetric partners are generated, never stored.
    """

    phi_hh: float = 0.0
    phi_vh: float = 0.0
    phi_hv: float = 0.0
    phi_vv: float = 0.0
    phi_hh_vv: float = 0.0
    phi_vv_hh: float = 0.0

    def __post_init__(self):
        for name in ("phi_hh", "phi_vh", "phi_hv", "phi_vv", "phi_hh_vv", "phi_vv_hh"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")

    @property
    def chi(self) -> float:
        return self.phi_vh - self.phi_hh

    @property
    def chi_double(self) -> float:
        return self.phi_vv - self.phi_hv

    @property
    def chi_prime(self) -> float:
        return self.phi_vv_hh - self.phi_hh_vv

    @classmethod
    def consistent(
        cls,
        state_phi: float,
        psi: float = 0.0,
        phi_hv: float = 0.0,
        phi_vh: float = 0.0,
    ) -> "PhaseTable":
        """Table on the positivity manifold of the two-source model.

        Free propagation phases keep the joint state positive only when the
        HH and VV components share a common cross-source phase ``psi`` and
        the coherence phases track the state phase (``psi -+ state_phi``).
        """
        return cls(
            phi_hh=psi,
            phi_vh=phi_vh,
            phi_hv=phi_hv,
            phi_vv=psi,
            phi_hh_vv=psi - state_phi,
            phi_vv_hh=psi + state_phi,
        )


@dataclass(frozen=True)
class PolarizationProjector:
    """Signal analyzer setting: |mu> = c_h |H> + c_v |V>."""

    label: str
    c_h: complex
    c_v: complex

    def __post_init__(self):
        norm = abs(self.c_h) ** 2 + abs(self.c_v) ** 2
        if abs(norm - 1.0) > AMPLITUDE_NORM_TOL:
            raise ValidationError(f"projector amplitudes not normalized ({norm})")


_SQ2 = 1.0 / math.sqrt(2.0)
# Circular convention: R = (H - iV)/sqrt2, L = (H + iV)/sqrt2.  Swapping the
# two only swaps which of the D/R-family fringes carries the minus cosine.
POLARIZATIONS = {
    "H": PolarizationProjector("H", 1.0, 0.0),
    "V": PolarizationProjector("V", 0.0, 1.0),
    "D": PolarizationProjector("D", _SQ2, _SQ2),
    "A": PolarizationProjector("A", _SQ2, -_SQ2),
    "R": PolarizationProjector("R", _SQ2, -1.0j * _SQ2),
    "L": PolarizationProjector("L", _SQ2, 1.0j * _SQ2),
}


def polarization(label: str) -> PolarizationProjector:
    try:
        return POLARIZATIONS[label.upper()]
    except KeyError:
        raise ValidationError(
            f"unknown polarization {label!r}; expected one of H, V, D, A, R, L"
        ) from None


@dataclass(frozen=True)
class InterferometerConfig:
    """Everything that fixes the optical state and settings of one run."""

    state: GeneralizedWernerParams
    b1_mag: float = _SQ2
    b2_mag: float = _SQ2
    arg_b1: float = 0.0
    arg_b2: float = 0.0
    phi_i: float = 0.0
    phi_s: float = 0.0
    phases: PhaseTable = field(default_factory=PhaseTable)
    theta: float = 0.0
    delta: float = 0.0
    t_h: float = 1.0
    t_v: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.b1_mag <= 1.0 or not 0.0 <= self.b2_mag <= 1.0:
            raise ValidationError("emission amplitudes must lie in [0, 1]")
        norm = self.b1_mag**2 + self.b2_mag**2
        if abs(norm - 1.0) > AMPLITUDE_NORM_TOL:
            raise ValidationError(
                f"b1_mag^2 + b2_mag^2 must equal 1, got {norm!r}"
            )
        for name in ("t_h", "t_v"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValidationError(f"{name} must lie in (0, 1], got {value!r}")
        for name in ("arg_b1", "arg_b2", "phi_i", "phi_s", "theta", "delta"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")

    @property
    def phi_in(self) -> float:
        """Interferometric phase arg b1 - arg b2 + phi_I - phi_S."""
        return self.arg_b1 - self.arg_b2 + self.phi_i - self.phi_s

    @property
    def b1b2(self) -> float:
        return self.b1_mag * self.b2_mag

    def at_phi_in(self, phi_in: float) -> "InterferometerConfig":
        """Same setup with phi_S moved so that phi_in takes the given value."""
        phi_s = self.arg_b1 - self.arg_b2 + self.phi_i - phi_in
        return replace(self, phi_s=phi_s)

    def lossless(self) -> bool:
        return self.t_h == 1.0 and self.t_v == 1.0


def idler_unitary(theta: float, delta: float) -> np.ndarray:
    """Wave-plate unitary acting on the idler between the sources."""
    c2, s2 = math.cos(2.0 * theta), math.sin(2.0 * theta)
    em, ep = np.exp(-1.0j * delta), np.exp(1.0j * delta)
    return np.array([[em * c2, em * s2], [ep * s2, -ep * c2]])


def _cross_phase_matrix(phases: PhaseTable) -> np.ndarray:
    """Phases of source-1-ket / source-2-bra elements, zero where weight is zero."""
    table = np.zeros((4, 4))
    table[0, 0] = phases.phi_hh
    table[1, 1] = phases.phi_hv
    table[2, 2] = phases.phi_vh
    table[3, 3] = phases.phi_vv
    table[0, 3] = phases.phi_hh_vv
    table[3, 0] = phases.phi_vv_hh
    return table


def joint_unaligned_state(
    config: InterferometerConfig, check_psd: bool = True
) -> DensityMatrix:
    """8x8 state jointly generated by the two sources, idlers not yet aligned.

    Diagonal blocks are the single-source state weighted by the emission
    probabilities; the cross block carries each element's magnitude with
    the cross-source phases from the table.
    """
    rho4 = build_state(config.state).entries
    b1 = config.b1_mag * np.exp(1.0j * config.arg_b1)
    b2 = config.b2_mag * np.exp(1.0j * config.arg_b2)
    cross = np.abs(rho4) * np.exp(1.0j * _cross_phase_matrix(config.phases))
    rho8 = np.zeros((8, 8), dtype=complex)
    rho8[:4, :4] = abs(b1) ** 2 * rho4
    rho8[4:, 4:] = abs(b2) ** 2 * rho4
    rho8[:4, 4:] = b1 * b2.conjugate() * cross
    rho8[4:, :4] = rho8[:4, 4:].conj().T
    return DensityMatrix(rho8, JOINT_BASIS).validate(psd=check_psd)


def alignment_isometry(config: InterferometerConfig) -> np.ndarray:
    """16x8 isometry substituting the source-2 idler kets.

    The source-2 idler passes the unitary and the attenuator; the lost
    amplitude lands in the orthogonal modes H_0 / V_0, so columns stay
    unit norm and the map preserves trace and positivity.
    """
    u_conj = idler_unitary(config.theta, config.delta).conj()
    prop = np.exp(-1.0j * config.phi_i)
    t = np.array([config.t_h, config.t_v])
    r = np.sqrt(1.0 - t**2)
    iso = np.zeros((16, 8), dtype=complex)
    for mu in range(2):  # source-1 kets map to themselves
        for nu in range(2):
            iso[mu * 4 + nu, mu * 2 + nu] = 1.0
    for mu in range(2):  # source-2 idler: rotated, attenuated, aligned
        for nu in range(2):
            col = 4 + mu * 2 + nu
            for lam in range(2):
                iso[lam * 4 + 2 + nu, col] = prop * t[mu] * u_conj[mu, lam]
            iso[(2 + mu) * 4 + 2 + nu, col] = r[mu]
    return iso


def apply_alignment(
    config: InterferometerConfig, rho8: DensityMatrix, check_psd: bool = True
) -> DensityMatrix:
    """Idler alignment with loss: 8-dim joint state -> 16-dim aligned state."""
    if rho8.dim != 8:
        raise ValidationError(f"apply_alignment expects dim 8, got {rho8.dim}")
    iso = alignment_isometry(config)
    rho16 = iso @ rho8.entries @ iso.conj().T
    return DensityMatrix(rho16, ALIGNED_BASIS).validate(psd=check_psd)


def reduce_signal(rho16: DensityMatrix) -> DensityMatrix:
    """Partial trace over the idler-plus-loss factor."""
    if rho16.dim != 16:
        raise ValidationError(f"reduce_signal expects dim 16, got {rho16.dim}")
    blocks = rho16.entries.reshape(4, 4, 4, 4)
    return DensityMatrix(np.einsum("isit->st", blocks), SIGNAL_BASIS)


def signal_state(config: InterferometerConfig, check_psd: bool = True) -> DensityMatrix:
    """Reduced signal-photon state before the beamsplitter."""
    rho8 = joint_unaligned_state(config, check_psd=check_psd)
    rho16 = apply_alignment(config, rho8, check_psd=check_psd)
    return reduce_signal(rho16)


def _detector_vector(
    config: InterferometerConfig, projector: PolarizationProjector, sources=(0, 1)
) -> np.ndarray:
    """Mode the detector projects onto at the monitored beamsplitter output."""
    d = np.zeros(4, dtype=complex)
    if 0 in sources:
        d[0] = projector.c_h
        d[1] = projector.c_v
    if 1 in sources:
        bs = -1.0j * np.exp(-1.0j * config.phi_s)
        d[2] = bs * projector.c_h
        d[3] = bs * projector.c_v
    return d / math.sqrt(2.0)


def _probability(rho_s: DensityMatrix, d: np.ndarray) -> float:
    return float(np.real(d.conj() @ rho_s.entries @ d))


def detection_probability(
    config: InterferometerConfig,
    projector: PolarizationProjector,
    check_psd: bool = True,
) -> float:
    """Single-photon counting probability for one analyzer setting."""
    rho_s = signal_state(config, check_psd=check_psd)
    return _probability(rho_s, _detector_vector(config, projector))


def blocked_arm_probability(
    config: InterferometerConfig,
    projector: PolarizationProjector,
    which_source: int,
    check_psd: bool = True,
) -> float:
    """Detection probability with the other source's signal beam blocked."""
    if which_source not in (1, 2):
        raise ValidationError(f"which_source must be 1 or 2, got {which_source!r}")
    rho_s = signal_state(config, check_psd=check_psd)
    d = _detector_vector(config, projector, sources=(which_source - 1,))
    return _probability(rho_s, d)
