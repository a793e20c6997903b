"""Command-line harness: build states, run scans, estimate entanglement.

Commands: state, sweep, scan, estimate, tables, fig3.  All outputs are
plain text or CSV, deterministic given the flags and seed; the estimate
exit code encodes the verdict (0 entangled, 1 separable, 3 boundary) and
usage or validation problems exit 2.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import estimation, tables
from .errors import PathidError, ScanPlanError, ValidationError
from .estimation import (
    ALL_ROLES,
    ROLE_BLOCKED,
    ScanSetting,
    build_scan_plan,
    default_dr_delta,
    estimate_from_records,
    read_scan_csv,
    run_pipeline,
    scan_seed_sequence,
    simulate_scan,
    write_scan_csv,
)
from .fringes import delta_star
from .interferometer import InterferometerConfig, PhaseTable, polarization
from .states import (
    GeneralizedWernerParams,
    build_state,
    concurrence_closed,
    concurrence_wootters_numeric,
    entanglement_verdict,
    ppt_spectrum_closed,
    ppt_spectrum_numeric,
)

VERDICT_EXIT = {"entangled": 0, "separable": 1, "boundary": 3}

_SQ2 = 1.0 / math.sqrt(2.0)

CONFIG_DEFAULTS = {
    "icoh": 1.0,
    "ih": 0.5,
    "phi": 0.0,
    "b1_mag": _SQ2,
    "b2_mag": _SQ2,
    "arg_b1": 0.0,
    "arg_b2": 0.0,
    "phi_i": 0.0,
    "phi_s": 0.0,
    "phi_hh": 0.0,
    "phi_vh": 0.0,
    "phi_hv": 0.0,
    "phi_vv": 0.0,
    "phi_hh_vv": 0.0,
    "phi_vv_hh": 0.0,
    "t_h": 1.0,
    "t_v": 1.0,
}
CONFIG_KEYS = ("eta",) + tuple(CONFIG_DEFAULTS)

_ANGLE_RE = re.compile(r"^([+-]?)(\d+(?:\.\d+)?)?pi(?:/(\d+(?:\.\d+)?))?$")


def parse_angle(text: str) -> float:
    """Radians from a float literal or a pi expression like pi/4 or -3pi/8."""
    token = text.strip().lower().replace(" ", "")
    match = _ANGLE_RE.match(token)
    if match:
        sign = -1.0 if match.group(1) == "-" else 1.0
        coef = float(match.group(2)) if match.group(2) else 1.0
        div = float(match.group(3)) if match.group(3) else 1.0
        return sign * coef * math.pi / div
    try:
        return float(token)
    except ValueError:
        raise ValidationError(f"cannot parse angle {text!r}") from None


def load_config_file(path) -> InterferometerConfig:
    """Parse the key=value run configuration into an InterferometerConfig."""
    values: dict[str, float] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = parse_angle(value)
        except ValidationError:
            raise ValidationError(
                f"{path}:{lineno}: bad value for {key!r}: {value.strip()!r}"
            ) from None
    if "eta" not in values:
        raise ValidationError(f"{path}: missing required key 'eta'")
    merged = dict(CONFIG_DEFAULTS)
    merged.update(values)
    try:
        state = GeneralizedWernerParams(
            eta=merged["eta"], i_coh=merged["icoh"], i_h=merged["ih"], phi=merged["phi"]
        )
        phases = PhaseTable(
            phi_hh=merged["phi_hh"],
            phi_vh=merged["phi_vh"],
            phi_hv=merged["phi_hv"],
            phi_vv=merged["phi_vv"],
            phi_hh_vv=merged["phi_hh_vv"],
            phi_vv_hh=merged["phi_vv_hh"],
        )
        return InterferometerConfig(
            state=state,
            b1_mag=merged["b1_mag"],
            b2_mag=merged["b2_mag"],
            arg_b1=merged["arg_b1"],
            arg_b2=merged["arg_b2"],
            phi_i=merged["phi_i"],
            phi_s=merged["phi_s"],
            phases=phases,
            t_h=merged["t_h"],
            t_v=merged["t_v"],
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _open_out(out: str | None):
    if out is None or out == "-":
        return sys.stdout, False
    return open(out, "w", encoding="utf-8", newline=""), True


def _emit(out: str | None, text: str) -> None:
    handle, close = _open_out(out)
    try:
        handle.write(text)
    finally:
        if close:
            handle.close()


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def _fmt2(value) -> str:
    """Round-half-even to two decimals; NA / -- handled by the caller."""
    return format(float(value), ".2f")


# ---------------------------------------------------------------------------
# subcommands


def cmd_state(args) -> int:
    params = GeneralizedWernerParams(args.eta, args.icoh, args.ih, args.phi)
    rho = build_state(params)
    spectrum = ppt_spectrum_closed(params)
    numeric = ppt_spectrum_numeric(rho)
    lines = [
        f"eta={_fmt(params.eta)}",
        f"icoh={_fmt(params.i_coh)}",
        f"ih={_fmt(params.i_h)}",
        f"phi={_fmt(params.phi)}",
        "basis=" + ",".join(rho.basis_labels),
    ]
    for i, label in enumerate(rho.basis_labels):
        row = " ".join(
            f"{entry.real:+.12f}{entry.imag:+.12f}j" for entry in rho.entries[i]
        )
        lines.append(f"rho[{label}]={row}")
    lines += [
        "alpha_closed=" + ",".join(_fmt(a) for a in spectrum.as_array()),
        "alpha_numeric=" + ",".join(_fmt(a) for a in numeric),
        f"concurrence_closed={_fmt(concurrence_closed(params))}",
        f"concurrence_wootters={_fmt(concurrence_wootters_numeric(rho))}",
        f"verdict={entanglement_verdict(spectrum.alpha1)}",
    ]
    _emit(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_sweep(args) -> int:
    try:
        lo_s, hi_s, n_s = args.range.split(":")
        lo, hi, n = float(lo_s), float(hi_s), int(n_s)
    except ValueError:
        raise ValidationError(f"malformed range {args.range!r}; expected lo:hi:n")
    if n < 2:
        raise ValidationError("range must have n >= 2")
    fixed = {"eta": args.eta, "icoh": args.icoh, "ih": args.ih}
    if args.param not in fixed:
        raise ValidationError(f"unknown sweep parameter {args.param!r}")
    lines = ["param_value,alpha1,concurrence"]
    for value in np.linspace(lo, hi, n):
        point = dict(fixed)
        point[args.param] = float(value)
        params = GeneralizedWernerParams(
            point["eta"], point["icoh"], point["ih"], args.phi
        )
        lines.append(
            f"{_fmt(value)},{_fmt(ppt_spectrum_closed(params).alpha1)},"
            f"{_fmt(concurrence_closed(params))}"
        )
    _emit(args.out, "\n".join(lines) + "\n")
    return 0


def _scan_setting_from_args(config, args) -> ScanSetting:
    pol = polarization(args.pol)
    blocked = args.block
    if args.theta is None:
        theta = 0.0 if (blocked or pol.label in ("H", "V")) else math.pi / 4.0
    else:
        theta = parse_angle(args.theta)
    token = (args.delta or "auto").strip().lower()
    if blocked and args.delta is None:
        delta = 0.0
    elif token == "auto":
        if pol.label in ("H", "V"):
            delta = delta_star(config.phases, pol.label)
        else:
            delta = default_dr_delta(config)
    elif token in ("auto-prime", "auto'"):
        if pol.label not in ("H", "V"):
            raise ValidationError("auto-prime delta is defined for H and V only")
        delta = delta_star(config.phases, pol.label + "'")
    else:
        delta = parse_angle(args.delta)
    role = f"manual_{pol.label}"
    return ScanSetting(role, pol.label, theta, delta, blocked, args.points)


def cmd_scan(args) -> int:
    config = load_config_file(args.config)
    setting = _scan_setting_from_args(config, args)
    scan_config = replace(config, theta=setting.theta, delta=setting.delta)
    seed = None
    if args.shots:
        seed = scan_seed_sequence(args.seed or 0, setting)
    record = simulate_scan(
        scan_config,
        setting.polarization,
        n_points=setting.n_points,
        shots=args.shots or None,
        seed=seed,
        blocked_source=setting.blocked_source,
    )
    if args.out is None or args.out == "-":
        sys.stdout.write(estimation.scan_csv_text(record))
    else:
        write_scan_csv(args.out, record)
    return 0


def _load_plan_records(config, directory):
    plan = {setting.role: setting for setting in build_scan_plan(config)}
    directory = Path(directory)
    missing = [
        role for role in ALL_ROLES if not (directory / f"{role}.csv").is_file()
    ]
    if missing:
        raise ScanPlanError(
            "missing scan CSVs: " + ", ".join(f"{role}.csv" for role in missing)
        )
    records = {}
    digest = hashlib.sha256()
    for role in ALL_ROLES:
        path = directory / f"{role}.csv"
        digest.update(path.read_bytes())
        blocked = int(role.split("_q")[1][0]) if role in ROLE_BLOCKED else None
        record = read_scan_csv(path, blocked_source=blocked)
        expected = plan[role]
        if record.polarization != expected.polarization:
            raise ScanPlanError(
                f"{path.name}: polarization {record.polarization} does not match "
                f"the {role} setting ({expected.polarization})"
            )
        if role not in ROLE_BLOCKED:
            for field_name in ("theta", "delta"):
                got = getattr(record, field_name)
                want = getattr(expected, field_name)
                if abs(got - want) > 1e-9:
                    raise ScanPlanError(
                        f"{path.name}: {field_name}={got!r} does not match the "
                        f"{role} setting ({want!r}) derived from the config"
                    )
        records[role] = record
    return records, digest.hexdigest()[:12]


def cmd_estimate(args) -> int:
    config = load_config_file(args.config)
    if args.from_csv is not None:
        records, digest = _load_plan_records(config, args.from_csv)
        report = estimate_from_records(config, records, inputs_digest=digest)
    else:
        report = run_pipeline(config, shots=args.shots or None, seed=args.seed)
    _emit(args.out, str(report) + "\n")
    return VERDICT_EXIT[report.verdict]


def _table_csv(rows, columns, two_decimal) -> str:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for column in columns:
            value = row[column]
            if value is None:
                cells.append("--")
            elif isinstance(value, str):
                cells.append(value)
            elif column in two_decimal:
                cells.append(_fmt2(value))
            else:
                cells.append(_fmt(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_tables(args) -> int:
    offset = parse_angle(args.chi_prime_minus_2delta)
    if args.which == "1":
        rows = tables.table1_rows(chi_prime_minus_2delta=offset)
        columns = (
            "state", "eta", "icoh", "ih",
            "vis_R", "vis_D", "vis_V", "vis_H", "ppt", "concurrence",
        )
        two_decimal = {"vis_R", "vis_D", "vis_V", "vis_H", "concurrence"}
    else:
        rows = tables.table_s1_rows(chi_prime_minus_2delta=offset)
        columns = ("state", "eta", "icoh", "ih", "p_hv", "p_dr", "ppt", "concurrence")
        two_decimal = {"p_hv", "p_dr", "concurrence"}
    _emit(args.out, _table_csv(rows, columns, two_decimal))
    return 0


def cmd_fig3(args) -> int:
    rows = tables.fig3_rows()
    columns = ("state", "concurrence_from_parameters", "concurrence_from_visibilities")
    _emit(args.out, _table_csv(rows, columns, two_decimal=set()))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathid",
        description="Single-photon entanglement verification in a two-source "
        "path-identity interferometer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed")
    common.add_argument("--config", default=None, help="key=value run config file")

    p_state = sub.add_parser("state", parents=[common], help="print one state's entanglement")
    p_state.add_argument("--eta", type=float, required=True)
    p_state.add_argument("--icoh", type=float, default=1.0)
    p_state.add_argument("--ih", type=float, default=0.5)
    p_state.add_argument("--phi", type=float, default=0.0)
    p_state.set_defaults(func=cmd_state)

    p_sweep = sub.add_parser("sweep", parents=[common], help="alpha1/concurrence curves")
    p_sweep.add_argument("--param", required=True, choices=("eta", "ih", "icoh"))
    p_sweep.add_argument("--range", required=True, help="lo:hi:n")
    p_sweep.add_argument("--eta", type=float, default=1.0)
    p_sweep.add_argument("--icoh", type=float, default=1.0)
    p_sweep.add_argument("--ih", type=float, default=0.5)
    p_sweep.add_argument("--phi", type=float, default=0.0)
    p_sweep.set_defaults(func=cmd_sweep)

    p_scan = sub.add_parser("scan", parents=[common], help="write one phase-scan CSV")
    p_scan.add_argument("--pol", required=True, help="H, V, D, A, R or L")
    p_scan.add_argument("--theta", default=None, help="radians or pi expression")
    p_scan.add_argument(
        "--delta", default=None,
        help="radians, pi expression, 'auto' or 'auto-prime'",
    )
    p_scan.add_argument("--points", type=int, default=estimation.DEFAULT_SCAN_POINTS)
    p_scan.add_argument("--shots", type=int, default=0, help="0 = exact mode")
    p_scan.add_argument("--block", type=int, choices=(1, 2), default=None,
                        help="block the other source's signal beam")
    p_scan.set_defaults(func=cmd_scan)

    p_est = sub.add_parser("estimate", parents=[common], help="run the estimation pipeline")
    p_est.add_argument("--shots", type=int, default=0, help="0 = exact mode")
    p_est.add_argument("--from-csv", default=None, metavar="DIR",
                       help="ingest a directory of scan CSVs instead of simulating")
    p_est.set_defaults(func=cmd_estimate)

    p_tab = sub.add_parser("tables", parents=[common], help="reproduce a summary table")
    p_tab.add_argument("--which", required=True, choices=("1", "s1"))
    p_tab.add_argument("--chi-prime-minus-2delta", default="pi/4")
    p_tab.set_defaults(func=cmd_tables)

    p_fig = sub.add_parser("fig3", parents=[common], help="concurrence comparison data")
    p_fig.set_defaults(func=cmd_fig3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("scan", "estimate") and args.config is None:
        parser.error(f"{args.command} requires --config")
    try:
        return args.func(args)
    except PathidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
