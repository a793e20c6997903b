"""Measurement side: phase scans, fringe fits, and parameter inversion.

A run consists of ten records: four blocked-arm levels (each source, H and
V analyzers), four theta=0 fringe scans (H and V at their plain and primed
wave-plate settings), and two theta=pi/4 scans (D and R at a common
delta).  From those the pipeline recovers the emission balance, the
attenuator transmissions, the state parameters and the entanglement
verdict, entirely from signal-photon statistics.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AmbiguousBranchError,
    InconsistentDataError,
    ScanPlanError,
    UnderdeterminedFitError,
    UndefinedQuantityError,
    UnidentifiableError,
    ValidationError,
)
from .fringes import blocked_arm_model, delta_star, fringe_model
from .interferometer import InterferometerConfig, polarization
from .states import VERDICT_BAND, entanglement_verdict

MIN_SCAN_POINTS = 8
DEFAULT_SCAN_POINTS = 24
# Flat-fringe guard when forming visibilities from fitted extrema.
ZERO_SUM_TOL = 1e-15
# Exact-mode floor for the transmission solver's consistency gates; in
# sampled mode the gate widens to GATE_SIGMA standard errors per observable.
GATE_ATOL = 1e-8
GATE_SIGMA = 8.0
# Mixing weight (1 - eta)/4 below which the attenuations drop out of the
# measurable system and are reported as undefined.
MIXING_WEIGHT_MIN = 1e-10
# Margin used for "strictly inside (0, 1)" preconditions.
STRICT_MARGIN = 1e-9
# Marginal overshoots of i_coh above 1 are clamped; larger ones reported raw.
ICOH_CLAMP = 1e-6

SCAN_CSV_HEADER = (
    "polarization",
    "theta_rad",
    "delta_rad",
    "phi_in_rad",
    "probability",
    "counts",
    "shots",
)

REPORT_KEYS = (
    "b1b2",
    "eta",
    "coh_product",
    "alpha1",
    "verdict",
    "concurrence",
    "i_h",
    "i_coh",
    "t_h",
    "t_v",
)

ROLE_BLOCKED = ("blocked_q1_H", "blocked_q1_V", "blocked_q2_H", "blocked_q2_V")
ROLE_SCANS = (
    "scan_H_delta",
    "scan_H_delta_prime",
    "scan_V_delta",
    "scan_V_delta_prime",
    "scan_D",
    "scan_R",
)
ALL_ROLES = ROLE_BLOCKED + ROLE_SCANS


@dataclass(frozen=True)
class PhaseScanRecord:
    """Sampled (or exact) detection record over a phase grid."""

    polarization: str
    theta: float
    delta: float
    phi_in: np.ndarray
    probability: np.ndarray | None = None
    counts: np.ndarray | None = None
    shots: np.ndarray | None = None
    blocked_source: int | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi_in, dtype=float)
        object.__setattr__(self, "phi_in", phi)
        if len(np.unique(phi)) < 3:
            raise ValidationError("a scan needs at least 3 distinct phases")
        if (self.probability is None) == (self.counts is None):
            raise ValidationError("store either probabilities or counts, not both")
        if self.probability is not None:
            prob = np.asarray(self.probability, dtype=float)
            object.__setattr__(self, "probability", prob)
            if prob.shape != phi.shape:
                raise ValidationError("probability and phi_in shapes differ")
            if np.any(prob < 0.0) or np.any(prob > 1.0):
                raise ValidationError("probabilities must lie in [0, 1]")
        else:
            if self.shots is None:
                raise ValidationError("sampled records need shots per point")
            counts = np.asarray(self.counts, dtype=np.int64)
            shots = np.asarray(self.shots, dtype=np.int64)
            if shots.ndim == 0:
                shots = np.full(phi.shape, int(shots))
            object.__setattr__(self, "counts", counts)
            object.__setattr__(self, "shots", shots)
            if counts.shape != phi.shape or shots.shape != phi.shape:
                raise ValidationError("counts, shots and phi_in shapes differ")
            if np.any(counts < 0) or np.any(shots <= 0):
                raise ValidationError("counts must be >= 0 and shots > 0")
            if np.any(counts > shots):
                raise ValidationError("counts cannot exceed shots")

    @property
    def mode(self) -> str:
        return "exact" if self.probability is not None else "sampled"

    def values(self) -> np.ndarray:
        if self.probability is not None:
            return self.probability
        return self.counts / self.shots

    def point_variances(self) -> np.ndarray | None:
        """Poisson variance estimate of each per-point rate, or None if exact."""
        if self.probability is not None:
            return None
        return np.maximum(self.counts, 1) / self.shots.astype(float) ** 2


@dataclass(frozen=True)
class ExtremaEstimate:
    """Fringe max+min / max-min with propagated errors when sampled."""

    p_plus: float
    p_minus: float
    visibility: float
    p_plus_err: float | None = None
    p_minus_err: float | None = None
    visibility_err: float | None = None


@dataclass(frozen=True)
class ScanSetting:
    """One entry of the measurement plan."""

    role: str
    polarization: str
    theta: float
    delta: float
    blocked_source: int | None = None
    n_points: int = DEFAULT_SCAN_POINTS


@dataclass(frozen=True)
class TransmissionSolution:
    """Solution of the four-amplitude system for the attenuations."""

    t_h: float
    t_v: float
    eta: float
    i_h: float | None
    mixing_weight: float
    residual: float
    swapped_h: bool
    swapped_v: bool


@dataclass(frozen=True)
class EstimationReport:
    """Everything recovered from one measurement run."""

    b1b2: float
    eta: float
    coh_product: float
    alpha1: float
    verdict: str
    concurrence: float
    i_h: float | None
    i_coh: float | None
    t_h: float | None
    t_v: float | None
    inputs_digest: str
    errors: dict[str, float] | None = None

    def lines(self) -> list[str]:
        def fmt(value):
            if value is None or (isinstance(value, float) and not np.isfinite(value)):
                return "NA"
            if isinstance(value, str):
                return value
            return format(float(value), ".17g")

        out = [f"{key}={fmt(getattr(self, key))}" for key in REPORT_KEYS]
        if self.errors is not None:
            for key in REPORT_KEYS:
                if key in self.errors:
                    out.append(f"{key}_err={fmt(self.errors[key])}")
        out.append(f"inputs_digest={self.inputs_digest}")
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


# ---------------------------------------------------------------------------
# scan plans and simulation


def default_dr_delta(config: InterferometerConfig) -> float:
    """Delta putting chi' - 2 delta at pi/4 for the D/R quadrature scans."""
    return (config.phases.chi_prime - math.pi / 4.0) / 2.0 % math.pi


def build_scan_plan(
    config: InterferometerConfig,
    n_points: int = DEFAULT_SCAN_POINTS,
    delta_dr: float | None = None,
) -> tuple[ScanSetting, ...]:
    """The canonical ten-record measurement plan for one state."""
    if delta_dr is None:
        delta_dr = default_dr_delta(config)
    d_h = delta_star(config.phases, "H")
    d_hp = delta_star(config.phases, "H'")
    d_v = delta_star(config.phases, "V")
    d_vp = delta_star(config.phases, "V'")
    plan = [
        ScanSetting("blocked_q1_H", "H", 0.0, 0.0, 1, n_points),
        ScanSetting("blocked_q1_V", "V", 0.0, 0.0, 1, n_points),
        ScanSetting("blocked_q2_H", "H", 0.0, 0.0, 2, n_points),
        ScanSetting("blocked_q2_V", "V", 0.0, 0.0, 2, n_points),
        ScanSetting("scan_H_delta", "H", 0.0, d_h, None, n_points),
        ScanSetting("scan_H_delta_prime", "H", 0.0, d_hp, None, n_points),
        ScanSetting("scan_V_delta", "V", 0.0, d_v, None, n_points),
        ScanSetting("scan_V_delta_prime", "V", 0.0, d_vp, None, n_points),
        ScanSetting("scan_D", "D", math.pi / 4.0, delta_dr, None, n_points),
        ScanSetting("scan_R", "R", math.pi / 4.0, delta_dr, None, n_points),
    ]
    return tuple(plan)


def validate_plan(plan) -> dict[str, ScanSetting]:
    """Check the plan covers every required role; return the role map."""
    by_role = {setting.role: setting for setting in plan}
    missing = [role for role in ALL_ROLES if role not in by_role]
    if missing:
        raise ScanPlanError(f"scan plan is missing settings: {', '.join(missing)}")
    if abs(by_role["scan_D"].delta - by_role["scan_R"].delta) > 1e-12:
        raise ScanPlanError("scan_D and scan_R must share one delta")
    return by_role


def scan_seed_sequence(root_seed: int, setting: ScanSetting) -> np.random.SeedSequence:
    """Per-record seed keyed by the setting, not by execution order."""
    key = (
        f"{setting.polarization}|{setting.blocked_source or 0}"
        f"|{setting.theta:.12e}|{setting.delta:.12e}"
    )
    token = int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")
    return np.random.SeedSequence([int(root_seed), token])


def simulate_scan(
    config: InterferometerConfig,
    projector,
    n_points: int = DEFAULT_SCAN_POINTS,
    shots: int | None = None,
    seed=None,
    blocked_source: int | None = None,
) -> PhaseScanRecord:
    """Uniform phase grid over [0, 2pi); exact rates or Poisson counts.

    ``shots`` of ``None`` or 0 records the exact detection probabilities;
    otherwise each point draws counts ~ Poisson(shots * P) from ``seed``.
    The phase is scanned by moving phi_S with everything else fixed.
    """
    if isinstance(projector, str):
        projector = polarization(projector)
    if n_points < MIN_SCAN_POINTS:
        raise ValidationError(f"n_points must be >= {MIN_SCAN_POINTS}, got {n_points}")
    phi = 2.0 * math.pi * np.arange(n_points) / n_points
    if blocked_source is None:
        values = fringe_model(config, projector)(phi)
    else:
        values = np.full(n_points, blocked_arm_model(config, projector, blocked_source))
    base = dict(
        polarization=projector.label,
        theta=config.theta,
        delta=config.delta,
        phi_in=phi,
        blocked_source=blocked_source,
    )
    if not shots:
        return PhaseScanRecord(probability=values, **base)
    rng = np.random.default_rng(seed)
    counts = rng.poisson(shots * np.clip(values, 0.0, None))
    counts = np.minimum(counts, shots)
    return PhaseScanRecord(counts=counts, shots=np.full(n_points, shots), **base)


# ---------------------------------------------------------------------------
# fringe fitting


def fit_fringe(scan: PhaseScanRecord) -> ExtremaEstimate:
    """Least-squares c0 + c1 sin + c2 cos fit; extrema from the coefficients.

    The detection law is exactly single-harmonic in phi_in, so the
    three-parameter model is complete: p_plus = 2 c0 and p_minus =
    2 sqrt(c1^2 + c2^2) reproduce max+min and max-min of the fringe.
    """
    phi = scan.phi_in
    design = np.column_stack([np.ones_like(phi), np.sin(phi), np.cos(phi)])
    values = scan.values()
    coeffs, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < 3:
        raise UnderdeterminedFitError(
            "phase grid does not determine offset, sine and cosine terms"
        )
    c0, c1, c2 = coeffs
    amp = math.hypot(c1, c2)
    p_plus = 2.0 * c0
    p_minus = 2.0 * amp
    vis = p_minus / p_plus if p_plus > ZERO_SUM_TOL else 0.0

    variances = scan.point_variances()
    if variances is None:
        return ExtremaEstimate(p_plus, p_minus, vis)

    # Covariance of the LSQ coefficients under per-point Poisson variance.
    gram_inv = np.linalg.inv(design.T @ design)
    cov = gram_inv @ design.T @ (variances[:, None] * design) @ gram_inv
    if amp > ZERO_SUM_TOL:
        grad_amp = np.array([0.0, c1 / amp, c2 / amp])
    else:
        grad_amp = np.array([0.0, 1.0, 1.0]) / math.sqrt(2.0)
    p_plus_err = 2.0 * math.sqrt(max(cov[0, 0], 0.0))
    p_minus_err = 2.0 * math.sqrt(max(grad_amp @ cov @ grad_amp, 0.0))
    if p_plus > ZERO_SUM_TOL:
        grad_vis = np.array([-p_minus / p_plus**2 * 2.0, 0.0, 0.0]) + grad_amp * (
            2.0 / p_plus
        )
        vis_err = math.sqrt(max(grad_vis @ cov @ grad_vis, 0.0))
    else:
        vis_err = float("nan")
    return ExtremaEstimate(p_plus, p_minus, vis, p_plus_err, p_minus_err, vis_err)


# ---------------------------------------------------------------------------
# closed-form estimators


def estimate_b1b2(p1: float, p2: float) -> float:
    """Emission balance |b1||b2| from the two blocked-arm rates."""
    if p1 < 0.0 or p2 < 0.0:
        raise ValidationError("blocked-arm probabilities must be non-negative")
    if p1 + p2 <= 0.0:
        raise UndefinedQuantityError("both blocked-arm probabilities are zero")
    return math.sqrt(p1 * p2) / (p1 + p2)


def estimate_eta_lossless(v_h: float, v_v: float, b1b2: float) -> float:
    """Mixing weight from the two theta=0 visibilities (lossless data)."""
    if b1b2 <= 0.0:
        raise UndefinedQuantityError("b1b2 must be positive")
    denom = 4.0 * b1b2 - v_v - v_h
    if abs(denom) < ZERO_SUM_TOL:
        raise UndefinedQuantityError(
            "visibility form is indeterminate at eta = 1; use the probability form"
        )
    return (v_v + v_h - v_h * v_v / b1b2) / denom


def estimate_eta_prob(p_minus: float, p_plus: float, b1b2: float) -> float:
    """Mixing weight from one polarization's fringe extrema (lossless data)."""
    if b1b2 <= 0.0:
        raise UndefinedQuantityError("b1b2 must be positive")
    return p_minus / b1b2 - 2.0 * p_plus + 1.0


def estimate_eta_lossy(
    extrema_h: ExtremaEstimate,
    extrema_v: ExtremaEstimate,
    b1b2: float,
    t_h: float,
    t_v: float,
) -> float:
    """Mixing weight under polarization-dependent idler loss.

    The H-polarization branch is exact when t_h >= t_v (its fitted
    amplitude then carries no sign ambiguity) and vice versa; the branches
    agree at t_h = t_v and reduce to the lossless form at 1, 1.
    """
    if b1b2 <= 0.0:
        raise UndefinedQuantityError("b1b2 must be positive")
    if t_h >= t_v:
        num = 2.0 * extrema_h.p_minus + b1b2 * (t_h + t_v - 4.0 * extrema_h.p_plus * t_h)
    else:
        num = 2.0 * extrema_v.p_minus + b1b2 * (t_v + t_h - 4.0 * extrema_v.p_plus * t_v)
    return num / (b1b2 * (t_h + t_v))


def estimate_coh_product(
    p_minus_d: float,
    p_minus_r: float,
    b1b2: float,
    t_h: float = 1.0,
    t_v: float = 1.0,
) -> float:
    """Coherence product from the two quadrature fringe amplitudes.

    Squaring and adding the D and R amplitudes cancels the unknown fringe
    cosine, so the result does not depend on the delta the scans used.
    """
    if b1b2 <= 0.0:
        raise UndefinedQuantityError("b1b2 must be positive")
    return math.sqrt(2.0 * (p_minus_d**2 + p_minus_r**2)) / (
        2.0 * b1b2 * math.hypot(t_h, t_v)
    )


def ppt_and_concurrence(
    eta_est: float, coh_est: float, band: float = VERDICT_BAND
) -> tuple[float, str, float]:
    """Entanglement eigenvalue, verdict and concurrence from the estimates."""
    alpha1 = (1.0 - eta_est - 4.0 * coh_est) / 4.0
    concurrence = max(0.0, (eta_est + 4.0 * coh_est - 1.0) / 2.0)
    return alpha1, entanglement_verdict(alpha1, band), concurrence


def recover_ih(extrema_h: ExtremaEstimate, b1b2: float) -> float:
    """Horizontal intensity fraction from the H fringe (lossless data)."""
    denom = 2.0 * extrema_h.p_minus + b1b2 * (2.0 - 4.0 * extrema_h.p_plus)
    if abs(denom) < 1e-12:
        raise UndefinedQuantityError("i_h is undefined at eta = 0")
    return extrema_h.p_minus / denom


def recover_icoh(coh_est: float, eta_est: float, ih_est: float) -> float:
    """Coherence factor, defined only for eta > 0 and i_h strictly inside (0, 1)."""
    if eta_est <= STRICT_MARGIN:
        raise UndefinedQuantityError("i_coh is undefined at eta = 0")
    if not STRICT_MARGIN < ih_est < 1.0 - STRICT_MARGIN:
        raise UndefinedQuantityError("i_coh is undefined at i_h = 0 or 1")
    value = coh_est / (eta_est * math.sqrt(ih_est * (1.0 - ih_est)))
    if 1.0 < value <= 1.0 + ICOH_CLAMP:
        return 1.0
    return value


# ---------------------------------------------------------------------------
# transmission solver


def _forward_observables(
    eta: float, i_h: float, t_h: float, t_v: float, b1b2: float
) -> dict[str, float]:
    """The six theta=0 observables generated by a parameter set."""
    n = (1.0 - eta) / 4.0
    i_v = 1.0 - i_h
    return {
        "p_plus_h": eta * i_h + 2.0 * n,
        "p_plus_v": eta * i_v + 2.0 * n,
        "p_minus_h": 2.0 * b1b2 * abs(t_h * eta * i_h + (t_h - t_v) * n),
        "p_minus_hp": 2.0 * b1b2 * (t_h * eta * i_h + (t_h + t_v) * n),
        "p_minus_v": 2.0 * b1b2 * abs(t_v * eta * i_v + (t_v - t_h) * n),
        "p_minus_vp": 2.0 * b1b2 * (t_v * eta * i_v + (t_v + t_h) * n),
    }


def estimate_transmissions(
    extrema_h: ExtremaEstimate,
    extrema_h_primed: ExtremaEstimate,
    extrema_v: ExtremaEstimate,
    extrema_v_primed: ExtremaEstimate,
    p_plus_h: float,
    p_plus_v: float,
    b1b2: float,
    atol: float = GATE_ATOL,
    sigmas: dict[str, float] | None = None,
) -> TransmissionSolution:
    """Invert the four fringe amplitudes for (t_h, t_v, eta, i_h).

    Sums and differences of the plain and primed amplitudes isolate
    products of one transmission with one mixing term; eliminating them
    against the offsets yields the mixing weight (1 - eta)/4 by two
    independent routes, which must agree.  Because the plain amplitudes
    enter through an absolute value, the sum/difference assignment can be
    flipped per polarization: every branch is tried, and a branch is
    accepted only if the forward-computed observables reproduce all six
    inputs within tolerance.
    """
    if b1b2 <= 0.0:
        raise UndefinedQuantityError("b1b2 must be positive")
    measured = {
        "p_plus_h": p_plus_h,
        "p_plus_v": p_plus_v,
        "p_minus_h": extrema_h.p_minus,
        "p_minus_hp": extrema_h_primed.p_minus,
        "p_minus_v": extrema_v.p_minus,
        "p_minus_vp": extrema_v_primed.p_minus,
    }
    sigmas = sigmas or {}
    tol = {
        key: max(atol, GATE_SIGMA * sigmas.get(key, 0.0)) for key in measured
    }

    quarter = 0.25 / b1b2
    s_h0 = (measured["p_minus_hp"] + measured["p_minus_h"]) * quarter
    d_h0 = (measured["p_minus_hp"] - measured["p_minus_h"]) * quarter
    s_v0 = (measured["p_minus_vp"] + measured["p_minus_v"]) * quarter
    d_v0 = (measured["p_minus_vp"] - measured["p_minus_v"]) * quarter

    d_tol = max(
        tol["p_minus_h"], tol["p_minus_hp"], tol["p_minus_v"], tol["p_minus_vp"]
    ) * quarter * 2.0
    if d_h0 <= max(MIXING_WEIGHT_MIN, d_tol) and d_v0 <= max(MIXING_WEIGHT_MIN, d_tol):
        # Primed and plain amplitudes coincide: eta = 1 and the attenuations
        # scale out of every equation.
        raise UnidentifiableError(
            "transmissions are unidentifiable at eta = 1 (no mixed component)"
        )

    candidates: list[TransmissionSolution] = []
    for swapped_h in (False, True):
        for swapped_v in (False, True):
            s_h, d_h = (d_h0, s_h0) if swapped_h else (s_h0, d_h0)
            s_v, d_v = (d_v0, s_v0) if swapped_v else (s_v0, d_v0)
            if s_v + d_h <= 0.0 or s_h + d_v <= 0.0:
                continue
            a_1 = d_h * p_plus_v / (s_v + d_h)
            a_2 = d_v * p_plus_h / (s_h + d_v)
            cross_tol = max(tol.values())
            if abs(a_1 - a_2) > cross_tol:
                continue
            weight = 0.5 * (a_1 + a_2)
            if weight <= MIXING_WEIGHT_MIN:
                continue
            eta = 1.0 - 4.0 * weight
            t_h = d_v / weight
            t_v = d_h / weight
            if not (0.0 < t_h <= 1.0 + 1e-6 and 0.0 < t_v <= 1.0 + 1e-6):
                continue
            if eta > STRICT_MARGIN:
                i_h = (p_plus_h - 2.0 * weight) / eta
            else:
                i_h = None
            forward = _forward_observables(
                eta, i_h if i_h is not None else 0.5, t_h, t_v, b1b2
            )
            residual = max(
                abs(forward[key] - measured[key]) / tol[key] for key in measured
            )
            if residual <= 1.0:
                candidates.append(
                    TransmissionSolution(
                        t_h, t_v, eta, i_h, weight, residual, swapped_h, swapped_v
                    )
                )

    if not candidates:
        raise InconsistentDataError(
            "no sign branch reproduces the measured fringe amplitudes"
        )
    candidates.sort(key=lambda sol: sol.residual)
    best = candidates[0]
    for other in candidates[1:]:
        distinct = (
            abs(other.t_h - best.t_h) > 1e-9
            or abs(other.t_v - best.t_v) > 1e-9
            or abs(other.eta - best.eta) > 1e-9
        )
        if distinct and other.residual <= 2.0 * max(best.residual, 1e-3):
            raise AmbiguousBranchError(
                "two distinct transmission branches fit the data equally well"
            )
    return best


# ---------------------------------------------------------------------------
# pipeline


_OBSERVABLE_KEYS = ROLE_BLOCKED + (
    "p_plus_h",
    "p_minus_h",
    "p_minus_hp",
    "p_plus_v",
    "p_minus_v",
    "p_minus_vp",
    "p_minus_d",
    "p_minus_r",
)


def _observables_from_records(records: dict[str, PhaseScanRecord]):
    """Fit every record down to the twelve scalar observables (plus errors)."""
    fits = {role: fit_fringe(records[role]) for role in ALL_ROLES}
    values: dict[str, float] = {}
    sigmas: dict[str, float] = {}

    def put(key, value, err):
        values[key] = value
        if err is not None:
            sigmas[key] = err

    for role in ROLE_BLOCKED:
        fit = fits[role]
        put(role, fit.p_plus / 2.0, None if fit.p_plus_err is None else fit.p_plus_err / 2.0)
    put("p_plus_h", fits["scan_H_delta"].p_plus, fits["scan_H_delta"].p_plus_err)
    put("p_minus_h", fits["scan_H_delta"].p_minus, fits["scan_H_delta"].p_minus_err)
    put("p_minus_hp", fits["scan_H_delta_prime"].p_minus, fits["scan_H_delta_prime"].p_minus_err)
    put("p_plus_v", fits["scan_V_delta"].p_plus, fits["scan_V_delta"].p_plus_err)
    put("p_minus_v", fits["scan_V_delta"].p_minus, fits["scan_V_delta"].p_minus_err)
    put("p_minus_vp", fits["scan_V_delta_prime"].p_minus, fits["scan_V_delta_prime"].p_minus_err)
    put("p_minus_d", fits["scan_D"].p_minus, fits["scan_D"].p_minus_err)
    put("p_minus_r", fits["scan_R"].p_minus, fits["scan_R"].p_minus_err)
    return values, sigmas


def _estimates_from_observables(
    obs: dict[str, float],
    fallback_t: tuple[float, float],
    sigmas: dict[str, float] | None = None,
) -> dict[str, float | None]:
    """Pure arithmetic from observables to recovered quantities.

    Transmissions come from the measured amplitudes; only when they are
    unidentifiable (eta = 1, where they cancel from every formula) do the
    supplied fallback values enter, and the report then carries NA.
    """
    p_source_1 = obs["blocked_q1_H"] + obs["blocked_q1_V"]
    p_source_2 = obs["blocked_q2_H"] + obs["blocked_q2_V"]
    b1b2 = estimate_b1b2(p_source_1, p_source_2)

    extrema_h = ExtremaEstimate(obs["p_plus_h"], obs["p_minus_h"], 0.0)
    extrema_hp = ExtremaEstimate(obs["p_plus_h"], obs["p_minus_hp"], 0.0)
    extrema_v = ExtremaEstimate(obs["p_plus_v"], obs["p_minus_v"], 0.0)
    extrema_vp = ExtremaEstimate(obs["p_plus_v"], obs["p_minus_vp"], 0.0)

    try:
        solution = estimate_transmissions(
            extrema_h,
            extrema_hp,
            extrema_v,
            extrema_vp,
            obs["p_plus_h"],
            obs["p_plus_v"],
            b1b2,
            sigmas=sigmas,
        )
        t_h, t_v = solution.t_h, solution.t_v
        t_h_out, t_v_out = t_h, t_v
        i_h = solution.i_h
    except UnidentifiableError:
        t_h, t_v = fallback_t
        t_h_out = t_v_out = None
        i_h = obs["p_plus_h"]  # at eta = 1 the offset is i_h itself

    eta = estimate_eta_lossy(extrema_h, extrema_v, b1b2, t_h, t_v)
    coh = estimate_coh_product(obs["p_minus_d"], obs["p_minus_r"], b1b2, t_h, t_v)
    alpha1, _, concurrence = ppt_and_concurrence(eta, coh)

    eta_used = min(max(eta, 0.0), 1.0)
    i_coh: float | None
    try:
        ih_used = i_h if i_h is not None else float("nan")
        i_coh = recover_icoh(coh, eta_used, ih_used)
    except (UndefinedQuantityError, ValueError):
        i_coh = None
    return {
        "b1b2": b1b2,
        "eta": eta,
        "coh_product": coh,
        "alpha1": alpha1,
        "concurrence": concurrence,
        "i_h": i_h,
        "i_coh": i_coh,
        "t_h": t_h_out,
        "t_v": t_v_out,
    }


_PROPAGATED_KEYS = (
    "b1b2", "eta", "coh_product", "alpha1", "concurrence", "i_h", "i_coh", "t_h", "t_v",
)


def _propagate_errors(obs, sigmas, fallback_t) -> dict[str, float]:
    """First-order error propagation by central differences per observable."""
    def evaluate(values):
        try:
            result = _estimates_from_observables(values, fallback_t, sigmas)
        except (UndefinedQuantityError, InconsistentDataError, AmbiguousBranchError):
            return {key: float("nan") for key in _PROPAGATED_KEYS}
        return {
            key: float("nan") if result[key] is None else result[key]
            for key in _PROPAGATED_KEYS
        }

    totals = {key: 0.0 for key in _PROPAGATED_KEYS}
    for name, sigma in sigmas.items():
        if sigma <= 0.0:
            continue
        step = max(1e-9, 1e-3 * sigma)
        hi = dict(obs)
        lo = dict(obs)
        hi[name] += step
        lo[name] -= step
        f_hi, f_lo = evaluate(hi), evaluate(lo)
        for key in _PROPAGATED_KEYS:
            derivative = (f_hi[key] - f_lo[key]) / (2.0 * step)
            totals[key] += (derivative * sigma) ** 2
    return {key: math.sqrt(value) for key, value in totals.items()}


def _inputs_digest(config, plan, shots, seed) -> str:
    payload = repr((config, tuple(plan), shots, seed)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:12]


def estimate_from_records(
    config: InterferometerConfig,
    records: dict[str, PhaseScanRecord],
    inputs_digest: str = "",
) -> EstimationReport:
    """Run the inversion chain on a complete set of fitted records."""
    missing = [role for role in ALL_ROLES if role not in records]
    if missing:
        raise ScanPlanError(f"records are missing roles: {', '.join(missing)}")
    obs, sigmas = _observables_from_records(records)
    sampled = bool(sigmas)
    estimates = _estimates_from_observables(
        obs, (config.t_h, config.t_v), sigmas if sampled else None
    )
    errors = None
    band = VERDICT_BAND
    if sampled:
        errors = _propagate_errors(obs, sigmas, (config.t_h, config.t_v))
        alpha_err = errors.get("alpha1", 0.0)
        if np.isfinite(alpha_err):
            band = max(band, 2.0 * alpha_err)
    verdict = entanglement_verdict(estimates["alpha1"], band)
    return EstimationReport(
        b1b2=estimates["b1b2"],
        eta=estimates["eta"],
        coh_product=estimates["coh_product"],
        alpha1=estimates["alpha1"],
        verdict=verdict,
        concurrence=estimates["concurrence"],
        i_h=estimates["i_h"],
        i_coh=estimates["i_coh"],
        t_h=estimates["t_h"],
        t_v=estimates["t_v"],
        inputs_digest=inputs_digest,
        errors=errors,
    )


def run_scan_plan(
    config: InterferometerConfig,
    plan,
    shots: int | None = None,
    seed: int | None = None,
) -> dict[str, PhaseScanRecord]:
    """Simulate every plan entry; records are keyed by role, not run order."""
    records = {}
    for setting in plan:
        scan_config = replace(config, theta=setting.theta, delta=setting.delta)
        scan_seed = None
        if shots:
            scan_seed = scan_seed_sequence(0 if seed is None else seed, setting)
        records[setting.role] = simulate_scan(
            scan_config,
            setting.polarization,
            n_points=setting.n_points,
            shots=shots,
            seed=scan_seed,
            blocked_source=setting.blocked_source,
        )
    return records


def run_pipeline(
    config: InterferometerConfig,
    plan=None,
    shots: int | None = None,
    seed: int | None = None,
) -> EstimationReport:
    """Simulate the full measurement plan and invert it to a report."""
    if plan is None:
        plan = build_scan_plan(config)
    validate_plan(plan)
    records = run_scan_plan(config, plan, shots=shots, seed=seed)
    return estimate_from_records(
        config, records, inputs_digest=_inputs_digest(config, plan, shots, seed)
    )


def calibrate_delta(
    config: InterferometerConfig, which: str, n_grid: int = 720
) -> float:
    """Pick delta from a visibility scan the way an experimenter would.

    Scans delta over [0, pi) at theta = 0 and returns the grid point
    minimizing the fringe amplitude for "H"/"V" (maximizing for the primed
    variants).  Agrees with delta_star to within the grid step.
    """
    if which not in ("H", "V", "H'", "V'"):
        raise ValidationError(f"which must be one of H, V, H', V'; got {which!r}")
    label = which[0]
    grid = np.arange(n_grid) * math.pi / n_grid
    amps = [
        fringe_model(replace(config, theta=0.0, delta=d), polarization(label)).amplitude
        for d in grid
    ]
    index = int(np.argmax(amps)) if which.endswith("'") else int(np.argmin(amps))
    return float(grid[index])


# ---------------------------------------------------------------------------
# scan CSV interface


def _format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_scan_csv(path, record: PhaseScanRecord) -> None:
    """Write one record in the fixed seven-column schema (UTF-8, LF)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SCAN_CSV_HEADER)
        exact = record.mode == "exact"
        for i, phi in enumerate(record.phi_in):
            writer.writerow(
                [
                    record.polarization,
                    _format_float(record.theta),
                    _format_float(record.delta),
                    _format_float(phi),
                    _format_float(record.probability[i]) if exact else "",
                    "" if exact else str(int(record.counts[i])),
                    "" if exact else str(int(record.shots[i])),
                ]
            )


def read_scan_csv(path, blocked_source: int | None = None) -> PhaseScanRecord:
    """Parse a scan CSV back into a record (mode inferred from the columns)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != SCAN_CSV_HEADER:
            raise ValidationError(f"{path}: bad or missing scan CSV header")
        rows = [row for row in reader if row]
    if not rows:
        raise ValidationError(f"{path}: scan CSV has no data rows")
    pol = rows[0][0]
    theta = float(rows[0][1])
    delta = float(rows[0][2])
    phi = np.array([float(row[3]) for row in rows])
    has_prob = rows[0][4] != ""
    base = dict(
        polarization=pol,
        theta=theta,
        delta=delta,
        phi_in=phi,
        blocked_source=blocked_source,
    )
    if has_prob:
        prob = np.array([float(row[4]) for row in rows])
        return PhaseScanRecord(probability=prob, **base)
    counts = np.array([int(row[5]) for row in rows])
    shots = np.array([int(row[6]) for row in rows])
    return PhaseScanRecord(counts=counts, shots=shots, **base)


def scan_csv_text(record: PhaseScanRecord) -> str:
    """The exact file content write_scan_csv would produce."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SCAN_CSV_HEADER)
    exact = record.mode == "exact"
    for i, phi in enumerate(record.phi_in):
        writer.writerow(
            [
                record.polarization,
                _format_float(record.theta),
                _format_float(record.delta),
                _format_float(phi),
                _format_float(record.probability[i]) if exact else "",
                "" if exact else str(int(record.counts[i])),
                "" if exact else str(int(record.shots[i])),
            ]
        )
    return buffer.getvalue()
