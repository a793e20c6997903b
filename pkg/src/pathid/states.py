"""Generalized Werner states and their entanglement measures.

The state family lives on two polarization qubits (idler tensor signal,
computational basis HH, HV, VH, VV) and is parametrized by a mixing weight
``eta``, a coherence factor ``i_coh``, the horizontal intensity fraction
``i_h`` and a coherence phase ``phi``.  Closed-form PPT and concurrence
expressions are provided next to generic numeric oracles so that either
route can check the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
# Eigenvalues of rho * rho_tilde below this magnitude are numerical noise.
SPIN_FLIP_CLAMP = 1e-12
# |alpha_1| within this band counts as "boundary" rather than a hard verdict.
VERDICT_BAND = 1e-9

COMPUTATIONAL_BASIS = ("HH", "HV", "VH", "VV")

_SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])


@dataclass(frozen=True)
class GeneralizedWernerParams:
    """State parameters; ``i_v`` is always derived as ``1 - i_h``."""

    eta: float
    i_coh: float
    i_h: float
    phi: float = 0.0

    def __post_init__(self):
        for name in ("eta", "i_coh", "i_h"):
            value = getattr(self, name)
            if not np.isfinite(value) or not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
        if not np.isfinite(self.phi):
            raise ValidationError(f"phi must be finite, got {self.phi!r}")

    @property
    def i_v(self) -> float:
        return 1.0 - self.i_h

    @property
    def coh_product(self) -> float:
        """The combination eta * i_coh * sqrt(i_h * i_v) driving entanglement."""
        return self.eta * self.i_coh * np.sqrt(self.i_h * self.i_v)


@dataclass(frozen=True)
class DensityMatrix:
    """Square complex matrix with labelled basis; invariants via validate()."""

    entries: np.ndarray
    basis_labels: tuple[str, ...]

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "basis_labels", tuple(self.basis_labels))
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError(f"entries must be square, got shape {entries.shape}")
        if len(self.basis_labels) != entries.shape[0]:
            raise ValidationError("basis_labels length must match matrix dimension")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def trace_defect(self) -> float:
        return abs(np.trace(self.entries) - 1.0)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def validate(self, psd: bool = True) -> "DensityMatrix":
        """Check Hermiticity, unit trace and (optionally) positivity."""
        defect = self.hermiticity_defect()
        if defect > HERMITICITY_TOL:
            raise ValidationError(f"matrix is not Hermitian (defect {defect:.3e})")
        defect = self.trace_defect()
        if defect > TRACE_TOL:
            raise ValidationError(f"trace differs from 1 by {defect:.3e}")
        if psd:
            lo = self.min_eigenvalue()
            if lo < -PSD_TOL:
                raise ValidationError(f"matrix has negative eigenvalue {lo:.3e}")
        return self


@dataclass(frozen=True)
class PptSpectrum:
    """Eigenvalues of the partially transposed state; only alpha1 can go negative."""

    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.alpha3, self.alpha4])


def build_state(params: GeneralizedWernerParams) -> DensityMatrix:
    """Assemble the 4x4 generalized Werner density matrix."""
    mixed = (1.0 - params.eta) / 4.0
    corner = params.coh_product * np.exp(-1.0j * params.phi)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = params.eta * params.i_h + mixed
    rho[1, 1] = mixed
    rho[2, 2] = mixed
    rho[3, 3] = params.eta * params.i_v + mixed
    rho[0, 3] = corner
    rho[3, 0] = corner.conjugate()
    return DensityMatrix(rho, COMPUTATIONAL_BASIS).validate()


def partial_transpose(rho: DensityMatrix) -> DensityMatrix:
    """Transpose the idler (first) factor; output need not be positive."""
    if rho.dim != 4:
        raise ValidationError(f"partial transpose expects dim 4, got {rho.dim}")
    blocks = rho.entries.reshape(2, 2, 2, 2)
    transposed = blocks.transpose(2, 1, 0, 3).reshape(4, 4)
    return DensityMatrix(transposed, rho.basis_labels)


def ppt_spectrum_closed(params: GeneralizedWernerParams) -> PptSpectrum:
    """Closed-form eigenvalues of the partial transpose."""
    gamma = params.coh_product
    return PptSpectrum(
        alpha1=(1.0 - params.eta - 4.0 * gamma) / 4.0,
        alpha2=(1.0 - params.eta + 4.0 * gamma) / 4.0,
        alpha3=(1.0 + 3.0 * params.eta - 4.0 * params.eta * params.i_h) / 4.0,
        alpha4=(1.0 - params.eta + 4.0 * params.eta * params.i_h) / 4.0,
    )


def ppt_spectrum_numeric(rho: DensityMatrix) -> np.ndarray:
    """Eigenvalues of the partial transpose, ascending (numeric oracle)."""
    rho.validate()
    return np.linalg.eigvalsh(partial_transpose(rho).entries)


def alpha1_closed(params: GeneralizedWernerParams) -> float:
    return ppt_spectrum_closed(params).alpha1


def concurrence_closed(params: GeneralizedWernerParams) -> float:
    """Closed-form concurrence of the generalized Werner state."""
    return max((params.eta - 1.0 + 4.0 * params.coh_product) / 2.0, 0.0)


def lambda_spectrum_closed(params: GeneralizedWernerParams) -> np.ndarray:
    """Closed-form eigenvalues (lambda_1^2 .. lambda_4^2) of rho * rho_tilde."""
    eta, i_coh = params.eta, params.i_coh
    ihv = params.i_h * params.i_v
    base = (1.0 - eta) ** 2 / 16.0
    c1 = eta * (1.0 - eta) / 4.0 + eta**2 * ihv * (1.0 + i_coh**2)
    radicand = ihv * (1.0 + 2.0 * eta - eta**2 * (3.0 - 16.0 * ihv))
    c2 = eta * i_coh / 2.0 * np.sqrt(max(radicand, 0.0))
    return np.array([base, base, base + c1 - c2, base + c1 + c2])


def spin_flip(rho: DensityMatrix) -> np.ndarray:
    """(sigma_y x sigma_y) rho* (sigma_y x sigma_y)."""
    yy = np.kron(_SIGMA_Y, _SIGMA_Y)
    return yy @ rho.entries.conj() @ yy


def concurrence_wootters_numeric(rho: DensityMatrix) -> float:
    """Concurrence by the spin-flip construction (numeric oracle)."""
    rho.validate()
    evals = np.linalg.eigvals(rho.entries @ spin_flip(rho)).real
    evals[np.abs(evals) < SPIN_FLIP_CLAMP] = 0.0
    if np.any(evals < 0.0):
        raise ValidationError(
            f"rho * rho_tilde has a negative eigenvalue {evals.min():.3e}"
        )
    lams = np.sort(np.sqrt(evals))[::-1]
    return max(lams[0] - lams[1] - lams[2] - lams[3], 0.0)


def entanglement_verdict(alpha1: float, band: float = VERDICT_BAND) -> str:
    """Classify alpha1 as entangled / separable / boundary within a band."""
    if alpha1 < -band:
        return "entangled"
    if alpha1 > band:
        return "separable"
    return "boundary"
