"""Scenario configs, the correspondence verification pipeline, and reports.

A scenario pins a potential, an energy, and a cone box
Q0 = {r e^(i theta0) : 0 < r < r_bar, |theta0 - theta_star| < delta_bar}
over which the dynamical and variational constructions are cross-checked in
both directions:

* containment of minimizers: at every grid point the minimal collision arc's
  departure angle phi0 must (a) be the unique multistart cluster, (b) agree
  with the stable-set graph Psi(r, theta0), and (c) start an orbit that the
  forward-integration membership test accepts into the equilibrium;
* containment of the graph: sampled graph points (r, theta, Psi(r, theta))
  are re-minimized from scratch and the minimizer must reproduce Psi.

All pipelines write their artifacts plus a manifest (config echo, content
hashes, timings) into the scenario's output directory.  Everything is
deterministic for a fixed config: the sampling RNG is seeded, grid reduction
is ordered, and report/CSV serialization uses canonical float reprs, so
repeated runs produce byte-identical reports.
"""

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .angles import wrap_signed
from .equilibria import equilibrium_records
from .manifold import (
    build_chart,
    chart_query,
    default_cone_halfwidth,
    default_r_loc,
    stable_membership,
)
from .mcgehee import McGeheeState, write_trajectory_csv
from .potential import PotentialSpec, lagrange_jacobi_radius
from .variational import convergence_study, minimize_collision_arc, to_physical

_SCHEMA_PATH = Path(__file__).with_name("scenario.schema.json")

SUBCOMMANDS = ("flow", "equilibria", "chart", "minimize", "verify", "convergence")


class ConfigError(ValueError):
    """Scenario configuration failed schema or semantic validation."""


@dataclass
class ScenarioConfig:
    """Validated scenario: potential, energy, cone box, and run knobs."""

    potential: PotentialSpec
    h: float
    theta_star: float
    r_bar: float
    delta_bar: float
    n_r: int
    n_theta: int
    tol_membership: float
    tol_chart: float
    tol_cluster: float
    n_nodes: int
    amplitudes: tuple
    seed: int
    out_dir: Path
    raw: dict = field(repr=False, default_factory=dict)


def _schema_validator() -> Draft202012Validator:
    with open(_SCHEMA_PATH, encoding="utf-8") as fh:
        return Draft202012Validator(json.load(fh))


def load_config(path, *, out_override=None) -> ScenarioConfig:
    """Read, schema-validate, and semantically validate a scenario file.

    Raises:
        ConfigError: schema violation, non-positive angular factor,
        theta_star not a nondegenerate minimum of U, or a cone box larger
        than the guaranteed validity box.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    errors = sorted(_schema_validator().iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.path) or "<root>"
        raise ConfigError(f"{path}: {where}: {first.message}")

    try:
        spec = PotentialSpec.from_json_dict(raw["potential"])
    except ValueError as exc:
        raise ConfigError(f"{path}: potential: {exc}") from exc

    cone = raw["cone"]
    theta_star = float(cone["theta_star"])
    u = spec.angular
    if abs(u.derivative(theta_star)) > 1e-8 * max(1.0, u.max_value()):
        raise ConfigError(f"theta_star={theta_star} is not a critical angle of U")
    if u.second_derivative(theta_star) <= 0.0:
        raise ConfigError(
            f"theta_star={theta_star} is not a nondegenerate minimum of U"
        )

    h = float(raw["h"])
    r_bar = float(cone["r_bar"])
    delta_bar = float(cone["delta_bar"])
    r_lj = lagrange_jacobi_radius(spec, h)
    r_loc = default_r_loc(spec, h)
    delta_loc = 0.5 * default_cone_halfwidth(spec, theta_star)
    if r_bar > min(r_lj, r_loc):
        raise ConfigError(
            f"cone radius r_bar={r_bar} exceeds the validity bound "
            f"min(r_LJ, r_loc) = {min(r_lj, r_loc)}"
        )
    if delta_bar > delta_loc:
        raise ConfigError(
            f"cone half-width delta_bar={delta_bar} exceeds the validity "
            f"bound delta_loc = {delta_loc}"
        )

    out_dir = Path(out_override) if out_override is not None else Path(
        raw.get("out_dir", "out")
    )
    return ScenarioConfig(
        potential=spec,
        h=h,
        theta_star=theta_star,
        r_bar=r_bar,
        delta_bar=delta_bar,
        n_r=int(raw["grid"]["n_r"]),
        n_theta=int(raw["grid"]["n_theta"]),
        tol_membership=float(raw["tolerances"]["membership"]),
        tol_chart=float(raw["tolerances"]["chart"]),
        tol_cluster=float(raw["tolerances"]["cluster"]),
        n_nodes=int(raw["discretization"]["n_nodes"]),
        amplitudes=tuple(float(b) for b in raw["discretization"]["amplitudes"]),
        seed=int(raw["seed"]),
        out_dir=out_dir,
        raw=raw,
    )


def config_echo(config: ScenarioConfig) -> dict:
    """Canonical dict form of the config (what reports and manifests echo)."""
    return {
        "potential": config.potential.to_json_dict(),
        "h": config.h,
        "cone": {
            "theta_star": config.theta_star,
            "r_bar": config.r_bar,
            "delta_bar": config.delta_bar,
        },
        "grid": {"n_r": config.n_r, "n_theta": config.n_theta},
        "tolerances": {
            "membership": config.tol_membership,
            "chart": config.tol_chart,
            "cluster": config.tol_cluster,
        },
        "discretization": {
            "n_nodes": config.n_nodes,
            "amplitudes": list(config.amplitudes),
        },
        "seed": config.seed,
    }


@dataclass
class PointRow:
    """One grid point of the containment-of-minimizers direction."""

    index: int
    r: float
    theta0: float
    phi0: float | None
    psi: float | None
    phi_error: float | None
    clusters: int | None
    value: float | None
    omega: float | None
    membership_accepted: bool | None
    membership_inconclusive: bool | None
    cone_confined: bool | None
    passed: bool
    reason: str


@dataclass
class SubsetRow:
    """One sampled graph point of the containment-of-graph direction."""

    index: int
    r: float
    theta: float
    psi: float
    phi0: float | None
    phi_error: float | None
    clusters: int | None
    passed: bool
    reason: str


@dataclass
class ControlRow:
    """Out-of-hypothesis probe near a non-minimal critical angle.

    Informational only: the correspondence offers no guarantee here, so
    these rows never enter the aggregates.
    """

    r: float
    theta0: float
    phi0: float | None
    clusters: int | None
    membership_accepted: bool | None
    note: str


@dataclass
class VerificationReport:
    """Both inclusion directions over the cone box, with aggregates."""

    config: dict
    rows: list
    subset_rows: list
    control_rows: list
    aggregates: dict


def _grid_axes(config: ScenarioConfig):
    """Open-box grid: one grid step of margin inside the cone on every side."""
    rs = np.linspace(0.0, config.r_bar, config.n_r + 2)[1:-1]
    thetas = np.linspace(
        config.theta_star - config.delta_bar,
        config.theta_star + config.delta_bar,
        config.n_theta + 2,
    )[1:-1]
    return rs, thetas


def _minimize_point(config: ScenarioConfig, q0):
    return minimize_collision_arc(
        config.potential,
        config.h,
        q0,
        n_nodes=config.n_nodes,
        amplitudes=config.amplitudes,
        cluster_eps=config.tol_cluster,
    )


def _grid_task(config: ScenarioConfig, chart, index: int, r: float, theta0: float):
    q0 = (r * math.cos(theta0), r * math.sin(theta0))
    psi, _ = chart_query(chart, r, theta0)
    try:
        results = _minimize_point(config, q0)
    except RuntimeError as exc:
        return PointRow(
            index=index, r=r, theta0=theta0, phi0=None, psi=psi, phi_error=None,
            clusters=None, value=None, omega=None, membership_accepted=None,
            membership_inconclusive=None, cone_confined=None, passed=False,
            reason=f"minimization failed: {exc}",
        )
    best = results[0]
    phi_err = abs(wrap_signed(best.phi0 - psi))
    verdict = stable_membership(
        config.potential,
        config.h,
        McGeheeState(r=r, theta=theta0, phi=best.phi0),
        config.theta_star,
        eps_eq=config.tol_membership,
    )
    checks = {
        "multiple clusters": len(results) == 1,
        "graph mismatch": phi_err <= config.tol_chart,
        "membership rejected": verdict.accepted,
        "left the cone": verdict.cone_confined,
    }
    failed = [name for name, ok in checks.items() if not ok]
    return PointRow(
        index=index,
        r=r,
        theta0=theta0,
        phi0=best.phi0,
        psi=psi,
        phi_error=phi_err,
        clusters=len(results),
        value=best.value,
        omega=best.omega,
        membership_accepted=verdict.accepted,
        membership_inconclusive=verdict.inconclusive,
        cone_confined=verdict.cone_confined,
        passed=not failed,
        reason="; ".join(failed),
    )


def _subset_task(config: ScenarioConfig, index: int, r: float, theta: float, psi: float):
    q0 = (r * math.cos(theta), r * math.sin(theta))
    try:
        results = _minimize_point(config, q0)
    except RuntimeError as exc:
        return SubsetRow(
            index=index, r=r, theta=theta, psi=psi, phi0=None, phi_error=None,
            clusters=None, passed=False, reason=f"minimization failed: {exc}",
        )
    best = results[0]
    phi_err = abs(wrap_signed(best.phi0 - psi))
    checks = {
        "multiple clusters": len(results) == 1,
        "graph mismatch": phi_err <= config.tol_chart,
    }
    failed = [name for name, ok in checks.items() if not ok]
    return SubsetRow(
        index=index,
        r=r,
        theta=theta,
        psi=psi,
        phi0=best.phi0,
        phi_error=phi_err,
        clusters=len(results),
        passed=not failed,
        reason="; ".join(failed),
    )


def _control_rows(config: ScenarioConfig):
    """Probe points near the nearest non-minimal critical angle, if any."""
    try:
        records = equilibrium_records(config.potential)
    except ValueError:
        return []
    others = sorted(
        {
            rec.theta_hat
            for rec in records
            if abs(wrap_signed(rec.theta_hat - config.theta_star)) > 1e-9
            and config.potential.angular.second_derivative(rec.theta_hat) < 0.0
        },
        key=lambda t: abs(wrap_signed(t - config.theta_star)),
    )
    if not others:
        return []
    theta_c = others[0]
    rows = []
    r = 0.5 * config.r_bar
    for offset in (-0.1, 0.0, 0.1):
        theta0 = theta_c + offset
        q0 = (r * math.cos(theta0), r * math.sin(theta0))
        note = "outside the cone hypothesis; informational"
        try:
            results = _minimize_point(config, q0)
        except RuntimeError as exc:
            rows.append(
                ControlRow(r=r, theta0=theta0, phi0=None, clusters=None,
                           membership_accepted=None, note=f"{note}; {exc}")
            )
            continue
        best = results[0]
        verdict = stable_membership(
            config.potential,
            config.h,
            McGeheeState(r=r, theta=theta0, phi=best.phi0),
            config.theta_star,
            eps_eq=config.tol_membership,
        )
        rows.append(
            ControlRow(
                r=r,
                theta0=theta0,
                phi0=best.phi0,
                clusters=len(results),
                membership_accepted=verdict.accepted,
                note=note,
            )
        )
    return rows


def verify_correspondence(
    config: ScenarioConfig, *, jobs: int = 1, subset_points: int = 30, timings=None
) -> VerificationReport:
    """Run both inclusion directions over the configured cone box.

    Grid-point failures are recorded in their rows, never raised; the
    aggregate block carries the pass rates the caller turns into exit codes.
    ``jobs`` parallelizes the independent point tasks; rows are reduced in
    grid order, so the report content does not depend on scheduling.
    """
    t0 = time.perf_counter()
    chart = build_chart(config.potential, config.h, config.theta_star)
    t1 = time.perf_counter()

    rs, thetas = _grid_axes(config)
    grid_points = [
        (i * len(thetas) + j, r, th)
        for i, r in enumerate(rs)
        for j, th in enumerate(thetas)
    ]

    rng = np.random.default_rng(config.seed)
    subset = []
    for k in range(subset_points):
        r = float(rng.uniform(0.05, 0.95)) * config.r_bar
        theta = config.theta_star + float(rng.uniform(-0.95, 0.95)) * config.delta_bar
        psi, _ = chart_query(chart, r, theta)
        subset.append((k, r, theta, psi))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(lambda p: _grid_task(config, chart, *p), grid_points)
            )
            subset_rows = list(pool.map(lambda p: _subset_task(config, *p), subset))
    else:
        rows = [_grid_task(config, chart, *p) for p in grid_points]
        subset_rows = [_subset_task(config, *p) for p in subset]
    rows.sort(key=lambda row: row.index)
    subset_rows.sort(key=lambda row: row.index)
    control_rows = _control_rows(config)
    t2 = time.perf_counter()

    phi_errors = [row.phi_error for row in rows if row.phi_error is not None]
    subset_errors = [r.phi_error for r in subset_rows if r.phi_error is not None]
    pass_rate = sum(row.passed for row in rows) / len(rows)
    subset_pass_rate = sum(r.passed for r in subset_rows) / len(subset_rows)
    aggregates = {
        "n_grid": len(rows),
        "n_subset": len(subset_rows),
        "pass_rate": pass_rate,
        "subset_pass_rate": subset_pass_rate,
        "max_phi_error": max(phi_errors) if phi_errors else None,
        "subset_max_phi_error": max(subset_errors) if subset_errors else None,
        "any_multiplicity": any(
            row.clusters is not None and row.clusters != 1
            for row in rows + subset_rows
        ),
        "overall_pass": pass_rate == 1.0 and subset_pass_rate == 1.0,
    }
    if timings is not None:
        timings["chart_build_s"] = t1 - t0
        timings["grid_s"] = t2 - t1
    return VerificationReport(
        config=config_echo(config),
        rows=rows,
        subset_rows=subset_rows,
        control_rows=control_rows,
        aggregates=aggregates,
    )


def _cell(value):
    """Deterministic CSV cell: shortest round-trip repr for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n",
        encoding="utf-8",
    )


def _row_dict(row) -> dict:
    return {k: v for k, v in vars(row).items()}


def write_report(report: VerificationReport, out_dir: Path) -> list:
    """Emit report.json plus the per-point CSV tables; returns the files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        out_dir / "report.json",
        {
            "config": report.config,
            "grid": [_row_dict(r) for r in report.rows],
            "subset": [_row_dict(r) for r in report.subset_rows],
            "controls": [_row_dict(r) for r in report.control_rows],
            "aggregates": report.aggregates,
        },
    )
    _write_csv(
        out_dir / "points.csv",
        [
            "index", "r", "theta0", "phi0", "psi", "phi_error", "clusters",
            "value", "omega", "membership_accepted", "membership_inconclusive",
            "cone_confined", "passed", "reason",
        ],
        [
            [
                row.index, row.r, row.theta0, row.phi0, row.psi, row.phi_error,
                row.clusters, row.value, row.omega, row.membership_accepted,
                row.membership_inconclusive, row.cone_confined, row.passed,
                row.reason,
            ]
            for row in report.rows
        ],
    )
    _write_csv(
        out_dir / "subset.csv",
        ["index", "r", "theta", "psi", "phi0", "phi_error", "clusters",
         "passed", "reason"],
        [
            [row.index, row.r, row.theta, row.psi, row.phi0, row.phi_error,
             row.clusters, row.passed, row.reason]
            for row in report.subset_rows
        ],
    )
    _write_csv(
        out_dir / "controls.csv",
        ["r", "theta0", "phi0", "clusters", "membership_accepted", "note"],
        [
            [row.r, row.theta0, row.phi0, row.clusters,
             row.membership_accepted, row.note]
            for row in report.control_rows
        ],
    )
    return ["report.json", "points.csv", "subset.csv", "controls.csv"]


def _content_hash(path: Path) -> str:
    digest = hashlib.sha256()
    payload = path.read_bytes()
    digest.update(b"blob %d\0" % len(payload))
    digest.update(payload)
    return "sha256:" + digest.hexdigest()


def _write_manifest(config, out_dir: Path, command: str, files, timings) -> None:
    from . import __version__

    manifest = {
        "tool": {"name": "anikep", "version": __version__},
        "command": command,
        "config": config_echo(config),
        "outputs": {name: _content_hash(out_dir / name) for name in files},
        "timings_s": timings,
    }
    _write_json(out_dir / "manifest.json", manifest)


def _scenario_center(config: ScenarioConfig):
    r = 0.5 * config.r_bar
    theta = config.theta_star + 0.5 * config.delta_bar
    return r, theta


def _run_flow(config: ScenarioConfig, out_dir: Path):
    chart = build_chart(config.potential, config.h, config.theta_star)
    r, theta = _scenario_center(config)
    psi, _ = chart_query(chart, r, theta)
    verdict = stable_membership(
        config.potential,
        config.h,
        McGeheeState(r=r, theta=theta, phi=psi),
        config.theta_star,
        eps_eq=config.tol_membership,
    )
    if not verdict.accepted:
        raise RuntimeError(
            "flow from the chart point did not converge to the equilibrium "
            f"(terminal distance {verdict.terminal_distance})"
        )
    write_trajectory_csv(
        config.potential, config.h, verdict.trajectory, out_dir / "trajectory.csv"
    )
    _write_json(
        out_dir / "flow.json",
        {
            "start": {"r": r, "theta": theta, "phi": psi},
            "converged": verdict.accepted,
            "converged_tau": verdict.converged_tau,
            "terminal_distance": verdict.terminal_distance,
            "cone_confined": verdict.cone_confined,
            "eps_eq": config.tol_membership,
        },
    )
    return ["trajectory.csv", "flow.json"], None


def _run_equilibria(config: ScenarioConfig, out_dir: Path):
    records = equilibrium_records(config.potential)
    _write_csv(
        out_dir / "equilibria.csv",
        ["theta_hat", "k", "classification", "borderline", "mu_minus", "mu_plus",
         "lambda_r", "lambda_minus", "lambda_plus"],
        [
            [rec.theta_hat, rec.k, rec.classification.value, rec.borderline,
             rec.mu_minus, rec.mu_plus, rec.lambda_r, rec.lambda_minus,
             rec.lambda_plus]
            for rec in records
        ],
    )
    return ["equilibria.csv"], None


def _run_chart(config: ScenarioConfig, out_dir: Path):
    chart = build_chart(config.potential, config.h, config.theta_star)
    order = np.lexsort((chart.samples[:, 1], chart.samples[:, 0]))
    _write_csv(
        out_dir / "chart.csv",
        ["r", "theta", "phi"],
        [[float(a), float(b), float(c)] for a, b, c in chart.samples[order]],
    )
    _write_json(
        out_dir / "chart.json",
        {
            "theta_star": chart.theta_star,
            "r_loc": chart.r_loc,
            "delta_loc": chart.delta_loc,
            "noise_floor": chart.noise_floor,
            "n_samples": int(chart.samples.shape[0]),
        },
    )
    return ["chart.csv", "chart.json"], None


def _run_minimize(config: ScenarioConfig, out_dir: Path):
    r, theta = _scenario_center(config)
    q0 = (r * math.cos(theta), r * math.sin(theta))
    results = _minimize_point(config, q0)
    best = results[0]
    arc = to_physical(config.potential, config.h, best)
    _write_csv(
        out_dir / "path.csv",
        ["s", "t", "x", "y", "radius"],
        [
            [float(s), float(t), float(x), float(y), float(math.hypot(x, y))]
            for s, t, (x, y) in zip(best.path.grid, arc.times, best.path.nodes)
        ],
    )
    _write_json(
        out_dir / "minimize.json",
        {
            "q0": [q0[0], q0[1]],
            "value": best.value,
            "omega": best.omega,
            "phi0": best.phi0,
            "speed0": best.speed0,
            "clusters": len(results),
            "cluster_sizes": [res.cluster_size for res in results],
            "iterations": best.iterations,
            "grad_norm": best.grad_norm,
            "ode_residual": arc.ode_residual,
            "ode_scale": arc.ode_scale,
        },
    )
    return ["path.csv", "minimize.json"], None


def _run_convergence(config: ScenarioConfig, out_dir: Path):
    r, theta = _scenario_center(config)
    q_star = (r * math.cos(theta), r * math.sin(theta))
    angles = [theta + 0.25 * config.delta_bar * 2.0 ** -k for k in range(8)]
    seq = [(r * math.cos(a), r * math.sin(a)) for a in angles]
    rep = convergence_study(
        config.potential, config.h, q_star, seq, n_nodes=config.n_nodes,
        amplitudes=config.amplitudes, cluster_eps=config.tol_cluster,
    )
    _write_csv(
        out_dir / "convergence.csv",
        ["k", "theta", "h1_to_limit", "sup_to_limit", "h1_successive", "value"],
        [
            [k, angles[k], float(rep.h1_to_limit[k]), float(rep.sup_to_limit[k]),
             float(rep.h1_successive[k]) if k < len(rep.h1_successive) else None,
             float(rep.values[k])]
            for k in range(len(angles))
        ],
    )
    _write_json(
        out_dir / "convergence.json",
        {
            "q_star": [q_star[0], q_star[1]],
            "limit_value": rep.limit_value,
            "final_h1": float(rep.h1_to_limit[-1]),
            "monotone": bool(np.all(np.diff(rep.h1_to_limit) < 0.0)),
        },
    )
    return ["convergence.csv", "convergence.json"], None


def _run_verify(config: ScenarioConfig, out_dir: Path, *, jobs: int = 1):
    timings = {}
    report = verify_correspondence(config, jobs=jobs, timings=timings)
    files = write_report(report, out_dir)
    return files, report, timings


def run_scenario(config: ScenarioConfig, which: str, *, jobs: int = 1):
    """Dispatch one subcommand pipeline and write its files plus manifest.

    Returns the VerificationReport for ``verify``, None otherwise.

    Raises:
        ValueError: unknown subcommand.
        RuntimeError: a pipeline computation failed to converge.
    """
    if which not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {which!r}; expected one of {SUBCOMMANDS}")
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = None
    if which == "verify":
        files, report, timings = _run_verify(config, out_dir, jobs=jobs)
    else:
        runner = {
            "flow": _run_flow,
            "equilibria": _run_equilibria,
            "chart": _run_chart,
            "minimize": _run_minimize,
            "convergence": _run_convergence,
        }[which]
        files, _ = runner(config, out_dir)
        timings = {}
    timings["total_s"] = time.perf_counter() - t0
    _write_manifest(config, out_dir, which, files, timings)
    return report
