"""Local stable manifold of the ingoing collision equilibrium.

Two complementary realizations of W^s_loc at (0, theta*, theta* + pi):

* ``stable_membership``: forward integration with the equilibrium-convergence
  event; interpolation-free, the primary criterion.
* ``build_chart``: the graph representation phi = Psi(r, theta) over the box
  [0, r_loc) x (theta* - delta_loc, theta* + delta_loc), realized by shooting
  backward from the stable tangent plane span(v_r, v_minus) and interpolating
  the scattered samples by moving least squares.

Backward seeds use a geometric ladder of v_r/v_minus mixtures rather than a
uniform angular fan: the backward flow expands the radial component at
|lambda_r| and the tangential one only at |lambda_minus| (a ratio of about
3.8 at the benchmark), so uniformly fanned seeds starve the large-|theta -
theta*| part of the box.  Seeds with zero radial component stay on {r = 0}
exactly and populate the collision edge of the chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .angles import wrap_signed
from .equilibria import Classification, classify, eigen_3d
from .mcgehee import (
    REASON_CONVERGED,
    REASON_HORIZON,
    McGeheeState,
    Trajectory,
    integrate,
)
from .potential import (
    PotentialSpec,
    central_configurations,
    hill_region_contains,
    lagrange_jacobi_radius,
)


class CoverageError(RuntimeError):
    """A chart query cell received no backward-shot samples."""


@dataclass(frozen=True)
class MembershipVerdict:
    """Outcome of the forward-integration membership test.

    ``accepted`` means converged to the equilibrium within the horizon;
    ``inconclusive`` marks horizon exits that were still approaching the
    equilibrium (distance decreasing over the final 20% of the run), which
    distinguishes slow convergence from genuine rejection.
    """

    accepted: bool
    inconclusive: bool
    converged_tau: float | None
    terminal_distance: float
    cone_confined: bool
    trajectory: Trajectory


@dataclass
class StableChart:
    """Scattered-sample graph representation of W^s_loc.

    samples rows are (r, theta, phi) with theta continued to the real line
    around theta* and phi around theta* + pi (no 2 pi jumps inside the box).
    ``noise_floor`` is the construction-error level measured at build time
    (see build_chart); query residuals are floored by it because the local
    fit cannot see systematics shared by all samples.
    """

    theta_star: float
    r_loc: float
    delta_loc: float
    samples: np.ndarray
    h: float
    eps_seed: float
    n_seeds: int
    noise_floor: float = 0.0

    def query(self, r: float, theta: float):
        return chart_query(self, r, theta)

    def write_csv(self, path) -> None:
        """CSV export r,theta,phi,residual; residual is the local fit RMS."""
        lines = ["r,theta,phi,residual"]
        for r, th, ph in self.samples:
            if r == 0.0:
                _, res = _query_collision_edge(self, th - self.theta_star)
            else:
                _, res = _query_interior(self, r, th - self.theta_star)
            res = max(res, self.noise_floor)
            lines.append(f"{float(r)!r},{float(th)!r},{float(ph)!r},{float(res)!r}")
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _nearest_critical(spec: PotentialSpec, theta_star: float):
    ccs = central_configurations(spec)
    if ccs.continuum:
        return None
    best = None
    for cc in ccs:
        d = abs(wrap_signed(cc.theta - theta_star))
        if best is None or d < best[0]:
            best = (d, cc)
    return best


def _require_minimal_angle(spec: PotentialSpec, theta_star: float):
    found = _nearest_critical(spec, theta_star)
    if found is None:
        raise ValueError(
            "isotropic angular potential: no isolated minimal angle exists"
        )
    dist, cc = found
    if dist > 1e-6:
        raise ValueError(f"theta*={theta_star} is not a critical angle")
    if not cc.is_global_min:
        raise ValueError(f"theta*={theta_star} is not a global minimum of U")
    if not cc.is_nondegenerate:
        raise ValueError(f"theta*={theta_star} is a degenerate minimum (U'' = 0)")
    return cc


def default_cone_halfwidth(spec: PotentialSpec, theta_star: float) -> float:
    """Half the angular distance to the nearest other critical angle.

    Falls back to pi/2 when no second critical angle exists.
    """
    ccs = central_configurations(spec)
    if ccs.continuum:
        return 0.5 * math.pi
    dists = [
        d
        for cc in ccs
        if (d := abs(wrap_signed(cc.theta - theta_star))) > 1e-9
    ]
    if not dists:
        return 0.5 * math.pi
    return 0.5 * min(dists)


def default_r_loc(spec: PotentialSpec, h: float) -> float:
    r_lj = lagrange_jacobi_radius(spec, h)
    return 0.25 * min(r_lj, 1.0)


def stable_membership(
    spec: PotentialSpec,
    h: float,
    state0: McGeheeState,
    theta_star: float,
    *,
    eps_eq: float = 1e-6,
    dwell: int = 5,
    tau_horizon: float | None = None,
    delta_cone: float | None = None,
    r_max: float | None = None,
    rtol: float = 1e-9,
    atol: float = 1e-10,
    max_step: float | None = None,
) -> MembershipVerdict:
    """Forward-integration membership test for W^s of (0, theta*, theta*+pi).

    Accepted iff the trajectory converges into the eps_eq ball around the
    equilibrium (dwell consecutive accepted steps) before the tau horizon
    (default 200/U(theta*)).  The cone flag reports whether theta stayed
    within delta_cone of theta* throughout; it never terminates the run.
    """
    _require_minimal_angle(spec, theta_star)
    if state0.r > 0.0 and not hill_region_contains(
        spec,
        h,
        state0.r * np.array([math.cos(state0.theta), math.sin(state0.theta)]),
    ):
        raise ValueError("state0 lies outside the Hill region")
    u_star = spec.angular.value(theta_star)
    if tau_horizon is None:
        tau_horizon = 200.0 / u_star
    if delta_cone is None:
        delta_cone = default_cone_halfwidth(spec, theta_star)
    if max_step is None:
        max_step = 0.25 / u_star
    if r_max is None:
        r_max = 2.0 * max(state0.r, default_r_loc(spec, h))
    target = McGeheeState(r=0.0, theta=theta_star, phi=theta_star + math.pi)
    traj = integrate(
        spec,
        h,
        state0,
        horizon=tau_horizon,
        equilibrium=target,
        eps_eq=eps_eq,
        dwell=dwell,
        r_window=(1e-12, r_max),
        rtol=rtol,
        atol=atol,
        max_step=max_step,
    )
    dtheta = np.abs(wrap_signed(traj.states[:, 1] - theta_star))
    cone_ok = bool(np.all(dtheta < delta_cone))
    dists = np.maximum.reduce(
        [
            np.abs(traj.states[:, 0]),
            dtheta,
            np.abs(wrap_signed(traj.states[:, 2] - theta_star - math.pi)),
        ]
    )
    terminal = float(dists[-1])
    accepted = traj.reason == REASON_CONVERGED
    inconclusive = False
    if not accepted and traj.reason == REASON_HORIZON and len(traj) >= 5:
        i80 = int(np.searchsorted(traj.taus, 0.8 * traj.taus[-1]))
        i80 = min(max(i80, 0), len(traj) - 2)
        inconclusive = terminal < float(dists[i80])
    return MembershipVerdict(
        accepted=accepted,
        inconclusive=inconclusive,
        converged_tau=traj.converged_tau,
        terminal_distance=terminal,
        cone_confined=cone_ok,
        trajectory=traj,
    )


def build_chart(
    spec: PotentialSpec,
    h: float,
    theta_star: float,
    *,
    r_loc: float | None = None,
    delta_loc: float | None = None,
    n_seeds: int = 96,
    eps_seed: float = 1e-4,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> StableChart:
    """Backward-shooting chart of W^s_loc over [0, r_loc) x (+-delta_loc).

    Seeds sit on the stable tangent plane at distance eps_seed from the
    equilibrium: eta v_r + sigma sqrt(1 - eta^2) v_minus, for both signs
    sigma.  Each seed is integrated backward until it leaves the box and the
    dense output inside the box becomes chart data.  The eta ladder is
    composite: a geometric ladder (including 0, the pure collision-edge
    shot) fans the interior, and a linear ladder below the corner value
    covers the angular faces, because a shot's face-exit height scales
    linearly with eta while the geometric ladder alone leaves gaps of a
    fixed r-ratio between consecutive face crossings.
    """
    cc = _require_minimal_angle(spec, theta_star)
    if classify(spec, theta_star, 1) is not Classification.SADDLE:
        raise ValueError("chart construction requires saddle data (U'' > 0)")
    lam_r, lam_m, _, v_r, v_m, _ = eigen_3d(spec, h, theta_star)
    if not (lam_r < 0.0 and complex(lam_m).imag == 0.0 and lam_m < 0.0):
        raise ValueError("chart construction requires lambda_r, lambda_minus < 0")
    if r_loc is None:
        r_loc = default_r_loc(spec, h)
    if delta_loc is None:
        delta_loc = 0.5 * default_cone_halfwidth(spec, theta_star)

    u_star = spec.angular.value(theta_star)
    tau_back = 30.0 / abs(lam_m)
    max_step = 0.15 / u_star
    v_hat_m = v_m / np.linalg.norm(v_m)
    phi_star = theta_star + math.pi
    # shots fly slightly past the box faces so arcs that graze a face and
    # re-enter are not truncated; samples are still restricted to the box
    r_shoot = 1.12 * r_loc
    delta_shoot = min(1.25 * delta_loc, 0.95 * math.pi)

    per_side = max(4, n_seeds // 2)
    n_face = max(12, per_side // 2)
    # accepted steps alone undersample the fast radial growth (r can gain a
    # cell width per step), so walk each shot's dense output instead; Hermite
    # interpolation keeps eta = 0 shots exactly on the collision edge
    tau_fine = 0.005 / u_star
    blocks = []

    def shoot(eta: float, sigma: float):
        direction = eta * np.array([1.0, 0.0, 0.0]) + sigma * math.sqrt(
            max(0.0, 1.0 - eta * eta)
        ) * v_hat_m
        seed = np.array([0.0, theta_star, phi_star]) + eps_seed * direction
        traj = integrate(
            spec,
            h,
            McGeheeState(r=seed[0], theta=seed[1], phi=seed[2]),
            horizon=tau_back,
            backward=True,
            r_window=(None, r_shoot),
            theta_window=(theta_star, delta_shoot),
            rtol=rtol,
            atol=atol,
            max_step=max_step,
        )
        taus = traj.taus
        span = float(taus[-1])
        grid = np.linspace(0.0, span, max(2, math.ceil(span / tau_fine)) + 1)
        i = np.clip(np.searchsorted(taus, grid, side="right") - 1, 0, len(taus) - 2)
        dt = (taus[i + 1] - taus[i])[:, None]
        x = ((grid - taus[i]) / dt[:, 0])[:, None]
        dense = (
            (1.0 + 2.0 * x) * (1.0 - x) ** 2 * traj.states[i]
            + x * (1.0 - x) ** 2 * dt * traj.derivs[i]
            + x * x * (3.0 - 2.0 * x) * traj.states[i + 1]
            + x * x * (x - 1.0) * dt * traj.derivs[i + 1]
        )
        dth = wrap_signed(dense[:, 1] - theta_star)
        keep = (dense[:, 0] >= 0.0) & (dense[:, 0] < r_loc) & (np.abs(dth) < delta_loc)
        blocks.append(
            np.column_stack([
                dense[keep, 0],
                theta_star + dth[keep],
                phi_star + wrap_signed(dense[keep, 2] - phi_star),
            ])
        )
        return traj

    for sigma in (1.0, -1.0):
        cm_traj = shoot(0.0, sigma)
        # backward log-growth of r along this side's collision-edge orbit:
        # a seed with radial weight eta crosses the angular offset where the
        # growth integral reads G at height ~ eps_seed eta e^G, so the eta
        # crossing the box corner (offset delta_loc, height r_loc) anchors
        # two face ladders, a linear one below it for uniform face heights
        # and a cell-ratio one above it so every column is crossed at
        # consecutive heights no further apart than a coverage cell
        th_cm = cm_traj.states[:, 1]
        ph_cm = cm_traj.states[:, 2]
        growth = -2.0 * spec.angular.value(th_cm) * np.cos(ph_cm - th_cm)
        gain = cumulative_trapezoid(growth, cm_traj.taus, initial=0.0)
        offset_cm = np.abs(wrap_signed(th_cm - theta_star))

        def log_gain_at(offset: float) -> float:
            outside = offset_cm >= offset
            i = int(np.argmax(outside)) if outside.any() else len(gain) - 1
            return float(gain[i])

        etas = list(np.geomspace(1e-14, 1.0, per_side - 1))
        log_corner = math.log(r_loc / eps_seed) - log_gain_at(delta_loc)
        if log_corner > math.log(1e-280):
            eta_corner = min(1.0, 1.15 * math.exp(log_corner))
            etas.extend(eta_corner * np.arange(1, n_face + 1) / n_face)
            eta_fan = min(
                1.0,
                math.exp(math.log(r_loc / eps_seed) - log_gain_at(0.25 * delta_loc)),
            )
            if eta_fan > eta_corner:
                count = min(
                    160,
                    math.ceil(math.log(eta_fan / eta_corner) / math.log(17.0 / 16.0)),
                )
                etas.extend(np.geomspace(eta_corner, eta_fan, count + 1)[1:])
        for eta in etas:
            if eta == 1.0 and sigma < 0.0:
                continue  # pure v_r seed is sigma-independent
            shoot(eta, sigma)

    samples = np.concatenate(blocks) if blocks else np.empty((0, 3))
    samples = _thin(samples, theta_star, r_loc, delta_loc)
    _check_coverage(samples, theta_star, r_loc, delta_loc)
    chart = StableChart(
        theta_star=theta_star,
        r_loc=r_loc,
        delta_loc=delta_loc,
        samples=samples,
        h=h,
        eps_seed=eps_seed,
        n_seeds=n_seeds,
    )
    chart.noise_floor = _calibrate_floor(spec, h, chart)
    return chart


def _calibrate_floor(
    spec: PotentialSpec, h: float, chart: StableChart, n_r: int = 13, n_theta: int = 13
) -> float:
    """Worst forward-flow self-consistency defect over a probe grid, doubled.

    The pointwise fit residual cannot see errors shared by a whole
    neighborhood, and the worst fit errors sit between shot trails where no
    sample lies, so the probes are a uniform grid of the chart's own
    queries, each flowed forward one time unit and re-queried.  The factor
    2 covers hot spots the grid misses.
    """
    floor = 0.0
    for fr in np.linspace(0.05, 0.95, n_r):
        r0 = fr * chart.r_loc
        for ft in np.linspace(-0.95, 0.95, n_theta):
            dth0 = ft * chart.delta_loc
            phi0, _ = _query_interior(chart, r0, dth0)
            traj = integrate(
                spec,
                h,
                McGeheeState(r=r0, theta=chart.theta_star + dth0, phi=phi0),
                horizon=1.0,
                rtol=1e-10,
                atol=1e-12,
            )
            r1, th1, ph1 = traj.states[-1]
            dth1 = wrap_signed(th1 - chart.theta_star)
            if not (0.0 < r1 < chart.r_loc and abs(dth1) < chart.delta_loc):
                continue
            pred, _ = _query_interior(chart, float(r1), float(dth1))
            floor = max(floor, abs(wrap_signed(ph1 - pred)))
    return 2.0 * floor


def _thin(samples, theta_star, r_loc, delta_loc, n_cells=64, cap=6):
    """Cap the interior sample density per fine cell.

    The dense-output walk oversamples by two orders of magnitude; capping
    keeps queries and exports cheap without touching sparse regions.  All
    r == 0 rows survive because collision-edge queries use only those.
    """
    if samples.size == 0:
        return samples
    edge = samples[:, 0] == 0.0
    interior = samples[~edge]
    ri = np.minimum((interior[:, 0] / r_loc * n_cells).astype(int), n_cells - 1)
    x = (interior[:, 1] - theta_star + delta_loc) / (2.0 * delta_loc)
    ti = np.minimum((x * n_cells).astype(int), n_cells - 1)
    key = ri * n_cells + ti
    order = np.argsort(key, kind="stable")
    ksort = key[order]
    new_group = np.r_[True, ksort[1:] != ksort[:-1]]
    group_start = np.maximum.accumulate(
        np.where(new_group, np.arange(len(ksort)), 0)
    )
    rank = np.arange(len(ksort)) - group_start
    # stride instead of truncate: consecutive dense-output points are nearly
    # identical, so the survivors must spread over the cell's whole passage
    # list (which also mixes samples from different shots)
    size = np.bincount(ksort, minlength=n_cells * n_cells)[ksort]
    stride = np.maximum(1, size // cap)
    keep = np.zeros(len(interior), dtype=bool)
    keep[order[rank % stride == 0]] = True
    return np.concatenate([samples[edge], interior[keep]])


def _check_coverage(samples, theta_star, r_loc, delta_loc, n_cells=16) -> None:
    if samples.size == 0:
        raise CoverageError("insufficient coverage: no samples landed in the box")
    ri = np.minimum((samples[:, 0] / r_loc * n_cells).astype(int), n_cells - 1)
    x = (samples[:, 1] - theta_star + delta_loc) / (2.0 * delta_loc)
    ti = np.minimum((x * n_cells).astype(int), n_cells - 1)
    filled = np.zeros((n_cells, n_cells), dtype=bool)
    filled[ri, ti] = True
    if not filled.all():
        empty = int((~filled).sum())
        raise CoverageError(
            f"insufficient coverage: {empty} of {n_cells * n_cells} cells are "
            "empty; raise n_seeds or eps_seed"
        )


_QUAD_BASIS = 6


def _query_interior(chart: StableChart, r: float, dtheta: float):
    x0 = np.array([r / chart.r_loc, dtheta / chart.delta_loc])
    pts = np.column_stack(
        (
            chart.samples[:, 0] / chart.r_loc,
            (chart.samples[:, 1] - chart.theta_star) / chart.delta_loc,
        )
    )
    d2 = np.sum((pts - x0) ** 2, axis=1)
    n = d2.shape[0]
    order = np.argsort(d2, kind="stable")
    k = min(12, n)
    k_max = min(96, n)
    while True:
        idx = order[:k]
        d = np.sqrt(d2[idx])
        bw = max(float(d.max()), 1e-12)
        w = np.exp(-((d / bw) ** 2))
        dx = pts[idx] - x0
        a = np.column_stack(
            (
                np.ones(k),
                dx[:, 0],
                dx[:, 1],
                dx[:, 0] ** 2,
                dx[:, 0] * dx[:, 1],
                dx[:, 1] ** 2,
            )
        )
        sw = np.sqrt(w)
        aw = a * sw[:, None]
        sv = np.linalg.svd(aw, compute_uv=False)
        # shots lay samples along trails; one or two trails leave part of the
        # quadratic unconstrained (the fit then extrapolates with a
        # deceptively small residual), which shows up as near-singularity of
        # the weighted design, so widen until it is well conditioned
        if sv[-1] >= 1e-4 * sv[0] or k >= k_max:
            break
        k = min(2 * k, k_max)
    phi = chart.samples[idx, 2]
    bw_vec = phi * sw
    # small Tikhonov rows keep one-curve neighborhoods from extrapolating wildly
    aug = np.vstack((aw, 1e-6 * np.eye(_QUAD_BASIS)))
    rhs = np.concatenate((bw_vec, 1e-6 * np.array([0.0] * _QUAD_BASIS)))
    rhs[k] = 1e-6 * np.average(phi, weights=w)
    coef, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    fit = a @ coef
    residual = math.sqrt(float(np.sum(w * (phi - fit) ** 2) / np.sum(w)))
    return float(coef[0]), residual


def _query_collision_edge(chart: StableChart, dtheta: float):
    mask = chart.samples[:, 0] == 0.0
    if not mask.any():
        raise CoverageError("insufficient coverage: no collision-edge samples")
    edge = chart.samples[mask]
    t = (edge[:, 1] - chart.theta_star) / chart.delta_loc
    x0 = dtheta / chart.delta_loc
    d = np.abs(t - x0)
    k = min(8, d.shape[0])
    idx = np.argpartition(d, k - 1)[:k]
    dk = d[idx]
    bw = max(float(dk.max()), 1e-12)
    w = np.exp(-((dk / bw) ** 2))
    dt = t[idx] - x0
    a = np.column_stack((np.ones(k), dt, dt**2))
    phi = edge[idx, 2]
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(a * sw[:, None], phi * sw, rcond=None)
    fit = a @ coef
    residual = math.sqrt(float(np.sum(w * (phi - fit) ** 2) / np.sum(w)))
    return float(coef[0]), residual


def chart_query(chart: StableChart, r: float, theta: float):
    """Interpolated Psi(r, theta) with a local-fit residual estimate.

    The collision edge r = 0 is interpolated purely from r = 0 samples, so
    the edge values depend only on the collision-manifold field (making the
    h-independence of Psi(0, .) structural rather than numerical).
    """
    dtheta = wrap_signed(theta - chart.theta_star)
    if not 0.0 <= r < chart.r_loc:
        raise ValueError(f"r={r} outside the chart box [0, {chart.r_loc})")
    if abs(dtheta) >= chart.delta_loc:
        raise ValueError(
            f"theta={theta} outside the chart box (+-{chart.delta_loc} around "
            f"{chart.theta_star})"
        )
    if r == 0.0:
        phi, res = _query_collision_edge(chart, dtheta)
    else:
        phi, res = _query_interior(chart, r, dtheta)
    return phi, max(res, chart.noise_floor)
