"""Reference-state tables and figure data, built from exact-mode runs.

Five benchmark states (maximally mixed, a separable and an entangled
Werner state, an entangled non-Werner mixture, and a Bell state) are
pushed through the measurement simulation; their visibilities, recovered
parameters and verdicts form the two summary tables and the
concurrence-vs-concurrence figure data.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .estimation import (
    build_scan_plan,
    fit_fringe,
    run_pipeline,
    simulate_scan,
)
from .fringes import delta_star
from .interferometer import InterferometerConfig
from .states import GeneralizedWernerParams, concurrence_closed

# (label, eta, i_coh, i_h); i_coh and i_h are irrelevant for the mixed state.
REFERENCE_STATES = (
    ("rho1", 0.0, 1.0, 0.5),
    ("rho2", 0.2, 1.0, 0.5),
    ("rho3", 0.6, 0.8, 0.3),
    ("rho4", 0.7, 1.0, 0.5),
    ("rho5", 1.0, 1.0, 0.5),
)
QUADRATURE_OFFSET = math.pi / 4.0


def reference_config(
    eta: float, i_coh: float, i_h: float, t_h: float = 1.0, t_v: float = 1.0
) -> InterferometerConfig:
    """Balanced emission, zero propagation phases, optional idler loss."""
    return InterferometerConfig(
        state=GeneralizedWernerParams(eta, i_coh, i_h), t_h=t_h, t_v=t_v
    )


def _scan_visibility(config, pol: str, theta: float, delta: float) -> float:
    record = simulate_scan(
        replace(config, theta=theta, delta=delta), pol, n_points=24, shots=None
    )
    return fit_fringe(record).visibility


def table1_rows(
    chi_prime_minus_2delta: float = QUADRATURE_OFFSET,
) -> list[dict[str, object]]:
    """Visibility table for the five reference states, lossless (unrounded)."""
    rows = []
    for label, eta, i_coh, i_h in REFERENCE_STATES:
        config = reference_config(eta, i_coh, i_h)
        delta_dr = (config.phases.chi_prime - chi_prime_minus_2delta) / 2.0 % math.pi
        report = run_pipeline(
            config, plan=build_scan_plan(config, delta_dr=delta_dr)
        )
        rows.append(
            {
                "state": label,
                "eta": eta,
                "icoh": i_coh if eta > 0.0 else None,
                "ih": i_h if eta > 0.0 else None,
                "vis_R": _scan_visibility(config, "R", math.pi / 4.0, delta_dr),
                "vis_D": _scan_visibility(config, "D", math.pi / 4.0, delta_dr),
                "vis_V": _scan_visibility(
                    config, "V", 0.0, delta_star(config.phases, "V")
                ),
                "vis_H": _scan_visibility(
                    config, "H", 0.0, delta_star(config.phases, "H")
                ),
                "ppt": report.verdict,
                "concurrence": report.concurrence,
            }
        )
    return rows


def table_s1_rows(
    t_h: float = 0.25,
    t_v: float = 0.35,
    chi_prime_minus_2delta: float = QUADRATURE_OFFSET,
) -> list[dict[str, object]]:
    """Recovered-parameter table under heavy idler loss (unrounded)."""
    rows = []
    for label, eta, i_coh, i_h in REFERENCE_STATES:
        config = reference_config(eta, i_coh, i_h, t_h=t_h, t_v=t_v)
        delta_dr = (config.phases.chi_prime - chi_prime_minus_2delta) / 2.0 % math.pi
        report = run_pipeline(config, plan=build_scan_plan(config, delta_dr=delta_dr))
        rows.append(
            {
                "state": label,
                "eta": eta,
                "icoh": i_coh if eta > 0.0 else None,
                "ih": i_h if eta > 0.0 else None,
                "p_hv": report.eta,
                "p_dr": report.coh_product,
                "ppt": report.verdict,
                "concurrence": report.concurrence,
            }
        )
    return rows


def fig3_rows() -> list[dict[str, object]]:
    """Concurrence from state parameters vs from simulated fringes."""
    rows = []
    for label, eta, i_coh, i_h in REFERENCE_STATES:
        config = reference_config(eta, i_coh, i_h)
        report = run_pipeline(config)
        rows.append(
            {
                "state": label,
                "concurrence_from_parameters": concurrence_closed(
                    GeneralizedWernerParams(eta, i_coh, i_h)
                ),
                "concurrence_from_visibilities": report.concurrence,
            }
        )
    return rows
