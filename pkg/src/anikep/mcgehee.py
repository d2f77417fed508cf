"""McGehee-regularized dynamics: transforms, vector fields, integration.

The planar regularized phase space is (r, theta, phi): radius, position
angle, momentum-direction angle.  With z = sqrt(2U + 2 r^alpha W + 2 h r^alpha)
and the rescaled time dt/dtau = z r^(1+alpha/2), the equations of motion are

    r'     = 2 r (U + r^alpha W + h r^alpha) cos(phi - theta)
    theta' = 2    (U + r^alpha W + h r^alpha) sin(phi - theta)
    phi'   = (U' + r^alpha W_theta) cos(phi - theta)
             + (alpha U - r^(1+alpha) W_r) sin(phi - theta)

which extend smoothly to the invariant collision manifold {r = 0}.  The
perturbation terms are evaluated through the scaled combination
r^alpha W = c r^(alpha - beta) g(theta), regular at r = 0 since beta < alpha.

General-dimension states (r, v, s, u), |s| = 1, <u, s> = 0 follow

    r' = r v,   v' = (alpha/2) v^2 + |u|^2 - alpha V(s),   s' = u,
    u' = -((2 - alpha)/2) v u - |u|^2 s + grad_T V(s)

on the shell (1/2)(|u|^2 + v^2) - V(s) = r^alpha h.  For d = 2 the two
formulations are related by v = z cos(phi-theta), u = z sin(phi-theta) t_hat,
with the planar tau running a factor z faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .angles import wrap_positive, wrap_signed
from .potential import PotentialSpec, eval_V

REASON_HORIZON = "horizon"
REASON_CONVERGED = "converged"
REASON_RADIUS = "exited_radius_window"
REASON_ANGLE = "exited_angular_window"
REASON_STEP_FAILURE = "step_failure"


@dataclass(frozen=True)
class CartesianState:
    """Planar position/momentum pair."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.array(self.q, dtype=float))
        object.__setattr__(self, "p", np.array(self.p, dtype=float))
        if self.q.shape != (2,) or self.p.shape != (2,):
            raise ValueError("CartesianState needs planar q and p")


@dataclass(frozen=True)
class McGeheeState:
    """Regularized planar state; angles normalized to [0, 2*pi)."""

    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if self.r < 0.0:
            raise ValueError(f"radius must be nonnegative, got {self.r}")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "theta", wrap_positive(float(self.theta)))
        object.__setattr__(self, "phi", wrap_positive(float(self.phi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.phi])


@dataclass(frozen=True)
class GeneralState:
    """General-dimension regularized state (r, v, s, u).

    s is snapped to the unit sphere and u to the tangent space at
    construction; inputs violating the constraints by more than 1e-8 are
    rejected rather than silently repaired.
    """

    r: float
    v: float
    s: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        u = np.array(self.u, dtype=float)
        if s.ndim != 1 or s.shape != u.shape:
            raise ValueError("s and u must be 1-D arrays of equal length")
        ns = float(np.linalg.norm(s))
        if abs(ns - 1.0) > 1e-8:
            raise ValueError(f"|s| = {ns} is not within 1e-8 of 1")
        s = s / ns
        proj = float(u @ s)
        if abs(proj) > 1e-8 * max(1.0, float(np.linalg.norm(u))):
            raise ValueError(f"<u, s> = {proj} is not within tolerance of 0")
        u = u - proj * s
        if self.r < 0.0:
            raise ValueError(f"radius must be nonnegative, got {self.r}")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.s.shape[0]

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.r, self.v], self.s, self.u))


def speed_scale(spec: PotentialSpec, h: float, r: float, theta: float) -> float:
    """z = sqrt(2U + 2 r^alpha W + 2 h r^alpha); requires the radicand >= 0."""
    u = spec.angular.value(theta)
    val = 2.0 * u + 2.0 * h * r**spec.alpha
    if spec.perturbation is not None:
        w = spec.perturbation
        val += 2.0 * w.c * r ** (spec.alpha - w.beta) * w.g.value(theta)
    if val < 0.0:
        if val > -1e-12 * max(1.0, abs(u)):
            val = 0.0
        else:
            raise ValueError(
                f"state outside the Hill region: 2U + 2hr^alpha = {val:.3e} < 0"
            )
    return math.sqrt(val)


def to_mcgehee(spec: PotentialSpec, h: float, cart: CartesianState) -> McGeheeState:
    """Cartesian shell state -> (r, theta, phi).

    The state must lie on the energy shell (residual below 1e-9 relative to
    the energy scale) and have nonzero momentum; at |p| = 0 the momentum
    direction phi is undefined (boundary of the Hill region).
    """
    r = float(np.linalg.norm(cart.q))
    if r == 0.0:
        raise ValueError("collision point has no McGehee chart")
    pnorm = float(np.linalg.norm(cart.p))
    if pnorm == 0.0:
        raise ValueError("momentum is zero: phi undefined on the Hill boundary")
    v = eval_V(spec, cart.q)
    residual = 0.5 * pnorm**2 - v - h
    if abs(residual) > 1e-9 * max(1.0, abs(h) + abs(v)):
        raise ValueError(
            f"state is off the energy shell: residual {residual:.3e}"
        )
    theta = math.atan2(cart.q[1], cart.q[0])
    phi = math.atan2(cart.p[1], cart.p[0])
    return McGeheeState(r=r, theta=theta, phi=phi)


def from_mcgehee(spec: PotentialSpec, h: float, state: McGeheeState) -> CartesianState:
    """(r, theta, phi) -> Cartesian shell state; rejects r = 0."""
    if state.r <= 0.0:
        raise ValueError("no Cartesian momentum exists at the collision manifold")
    z = speed_scale(spec, h, state.r, state.theta)
    pmag = state.r ** (-0.5 * spec.alpha) * z
    q = state.r * np.array([math.cos(state.theta), math.sin(state.theta)])
    p = pmag * np.array([math.cos(state.phi), math.sin(state.phi)])
    return CartesianState(q=q, p=p)


def _planar_rhs_factory(spec: PotentialSpec, h: float):
    u = spec.angular
    alpha = spec.alpha
    w = spec.perturbation
    if w is None:

        def rhs(y):
            r = y[0] if y[0] > 0.0 else 0.0
            th, ph = y[1], y[2]
            uu = u.value(th)
            up = u.derivative(th)
            delta = ph - th
            cd, sd = math.cos(delta), math.sin(delta)
            g = uu + h * r**alpha
            return np.array([2.0 * r * g * cd, 2.0 * g * sd, up * cd + alpha * uu * sd])

        return rhs

    gpot, c, beta = w.g, w.c, w.beta
    gap = alpha - beta

    def rhs_w(y):
        r = y[0] if y[0] > 0.0 else 0.0
        th, ph = y[1], y[2]
        uu = u.value(th)
        up = u.derivative(th)
        sw = c * r**gap
        gv = gpot.value(th)
        gp = gpot.derivative(th)
        delta = ph - th
        cd, sd = math.cos(delta), math.sin(delta)
        g = uu + sw * gv + h * r**alpha
        return np.array(
            [
                2.0 * r * g * cd,
                2.0 * g * sd,
                (up + sw * gp) * cd + (alpha * uu + beta * sw * gv) * sd,
            ]
        )

    return rhs_w


def field_3d(spec: PotentialSpec, h: float, state) -> np.ndarray:
    """Right-hand side of the planar regularized system at a state.

    Accepts a McGeheeState or a length-3 array (r, theta, phi); defined for
    all r >= 0 including the collision manifold.
    """
    y = state.as_array() if isinstance(state, McGeheeState) else np.asarray(state, float)
    return _planar_rhs_factory(spec, h)(y)


def field_collision(spec: PotentialSpec, theta: float, phi: float) -> np.ndarray:
    """Restriction of the planar field to the collision manifold {r = 0}.

    theta' = 2 U sin(phi - theta);  phi' = U' cos(phi - theta)
    + alpha U sin(phi - theta).  Energy and perturbation do not enter.
    """
    u = spec.angular
    uu = u.value(theta)
    up = u.derivative(theta)
    delta = phi - theta
    cd, sd = math.cos(delta), math.sin(delta)
    return np.array([2.0 * uu * sd, up * cd + spec.alpha * uu * sd])


def _sphere_potential(spec: PotentialSpec, s: np.ndarray):
    """Value and tangential gradient of the angular potential on S^(d-1).

    d = 2 uses the planar angle directly.  For d >= 3 the angular factor is
    read as a function of the polar angle from the first coordinate axis
    (an axially symmetric extension); potentials with sine harmonics are not
    smooth at the poles there, so prefer cosine-only factors in d >= 3.
    """
    d = s.shape[0]
    u = spec.angular
    if d == 2:
        th = math.atan2(s[1], s[0])
        tangent = np.array([-s[1], s[0]])
        return u.value(th), u.derivative(th) * tangent
    c1 = s[0]
    sin_th = math.sqrt(max(0.0, 1.0 - min(1.0, c1 * c1)))
    th = math.atan2(sin_th, c1)
    val = u.value(th)
    if sin_th < 1e-12:
        return val, np.zeros(d)
    e1_t = -c1 * s.copy()
    e1_t[0] += 1.0
    return val, (-u.derivative(th) / sin_th) * e1_t


def _general_rhs_factory(spec: PotentialSpec, h: float, dim: int):
    if spec.perturbation is not None:
        raise ValueError("general-dimension field supports unperturbed specs only")
    alpha = spec.alpha

    def rhs(y):
        r = y[0] if y[0] > 0.0 else 0.0
        v = y[1]
        s = y[2 : 2 + dim]
        u = y[2 + dim :]
        val, grad_t = _sphere_potential(spec, s)
        u2 = float(u @ u)
        out = np.empty(2 + 2 * dim)
        out[0] = r * v
        out[1] = 0.5 * alpha * v * v + u2 - alpha * val
        out[2 : 2 + dim] = u
        out[2 + dim :] = -0.5 * (2.0 - alpha) * v * u - u2 * s + grad_t
        return out

    return rhs


def field_general(spec: PotentialSpec, h: float, state) -> np.ndarray:
    """Right-hand side of the general-dimension regularized system.

    Accepts a GeneralState or a flat array (r, v, s_1..s_d, u_1..u_d).  The
    u-equation coefficient is (2 - alpha)/2, the value under which the energy
    shell (1/2)(|u|^2 + v^2) - V(s) - r^alpha h is conserved.
    """
    if isinstance(state, GeneralState):
        y, dim = state.as_array(), state.dim
    else:
        y = np.asarray(state, dtype=float)
        if y.size % 2 != 0 or y.size < 6:
            raise ValueError("flat general state must have length 2 + 2d, d >= 2")
        dim = (y.size - 2) // 2
    return _general_rhs_factory(spec, h, dim)(y)


def shell_residual(spec: PotentialSpec, h: float, state) -> float:
    """Energy-shell residual (1/2)(|u|^2 + v^2) - V(s) - r^alpha h."""
    st = state if isinstance(state, GeneralState) else None
    if st is None:
        y = np.asarray(state, dtype=float)
        dim = (y.size - 2) // 2
        r, v, s, u = y[0], y[1], y[2 : 2 + dim], y[2 + dim :]
    else:
        r, v, s, u = st.r, st.v, st.s, st.u
    val, _ = _sphere_potential(spec, s)
    return float(0.5 * (u @ u + v * v) - val - max(r, 0.0) ** spec.alpha * h)


def general_from_planar(
    spec: PotentialSpec, h: float, state: McGeheeState
) -> GeneralState:
    """Embed a planar state into the d = 2 general formulation."""
    z = speed_scale(spec, h, state.r, state.theta)
    delta = state.phi - state.theta
    ct, st = math.cos(state.theta), math.sin(state.theta)
    v = z * math.cos(delta)
    w = z * math.sin(delta)
    return GeneralState(
        r=state.r, v=v, s=np.array([ct, st]), u=w * np.array([-st, ct])
    )


# Dormand-Prince 5(4) tableau (FSAL: the last stage is the next first stage).
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


@dataclass
class Trajectory:
    """Accepted-step samples of one integration run.

    Attributes:
        kind: "planar" or "general".
        taus: strictly increasing integration times (the integrator's own
            abscissa; for backward runs the field was negated, flagged by
            ``backward``).
        states: (n, m) state rows.
        derivs: (n, m) field values at the samples (for Hermite interpolation).
        reason: one of the REASON_* constants.
        detail: extra context for window exits and failures.
        converged_tau: tau at which the equilibrium dwell completed, if it did.
        min_event_distance: smallest distance to the equilibrium target seen.
    """

    kind: str
    taus: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    reason: str
    detail: str | None = None
    converged_tau: float | None = None
    min_event_distance: float | None = None
    backward: bool = False
    dim: int = 2
    events: dict = dataclass_field(default_factory=dict)

    def __len__(self):
        return self.taus.shape[0]

    def sample(self, tau: float) -> np.ndarray:
        """Cubic-Hermite dense evaluation at tau inside the covered range."""
        taus = self.taus
        if not taus[0] <= tau <= taus[-1]:
            raise ValueError(f"tau={tau} outside [{taus[0]}, {taus[-1]}]")
        i = int(np.searchsorted(taus, tau, side="right") - 1)
        if i >= len(taus) - 1:
            return self.states[-1].copy()
        return _hermite(
            taus[i], taus[i + 1], self.states[i], self.states[i + 1],
            self.derivs[i], self.derivs[i + 1], tau,
        )


def _hermite(t0, t1, y0, y1, f0, f1, t):
    dt = t1 - t0
    x = (t - t0) / dt
    h00 = (1.0 + 2.0 * x) * (1.0 - x) ** 2
    h10 = x * (1.0 - x) ** 2
    h01 = x * x * (3.0 - 2.0 * x)
    h11 = x * x * (x - 1.0)
    return h00 * y0 + h10 * dt * f0 + h01 * y1 + h11 * dt * f1


def _rms_error(err, y_old, y_new, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


class _EventTracker:
    """Event bookkeeping evaluated at accepted steps."""

    def __init__(
        self,
        dist_fn=None,
        eps_eq=1e-6,
        dwell=5,
        r_index=None,
        r_min=None,
        r_max=None,
        angle_fn=None,
        angle_half=None,
    ):
        self.dist_fn = dist_fn
        self.eps_eq = eps_eq
        self.dwell = dwell
        self.r_index = r_index
        self.r_min = r_min
        self.r_max = r_max
        self.angle_fn = angle_fn
        self.angle_half = angle_half
        self.streak = 0
        self.min_distance = math.inf

    def window_violation(self, y):
        """Returns (predicate, detail) for the first violated window, else None."""
        if self.r_index is not None:
            r = y[self.r_index]
            if self.r_max is not None and r >= self.r_max:
                return (lambda yy: yy[self.r_index] - self.r_max), "r_max"
            if self.r_min is not None and r <= self.r_min:
                return (lambda yy: self.r_min - yy[self.r_index]), "r_min"
        if self.angle_fn is not None:
            if abs(self.angle_fn(y)) >= self.angle_half:
                return (lambda yy: abs(self.angle_fn(yy)) - self.angle_half), "angle"
        return None

    def update_equilibrium(self, y) -> bool:
        """Advance the dwell counter; True when convergence is declared."""
        if self.dist_fn is None:
            return False
        d = self.dist_fn(y)
        if d < self.min_distance:
            self.min_distance = d
        if d < self.eps_eq:
            self.streak += 1
            return self.streak >= self.dwell
        self.streak = 0
        return False


def _refine_crossing(t0, t1, y0, y1, f0, f1, predicate):
    """Bisection for the first sign change of predicate along the Hermite arc."""
    lo, hi = t0, t1
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ym = _hermite(t0, t1, y0, y1, f0, f1, mid)
        if predicate(ym) >= 0.0:
            hi = mid
        else:
            lo = mid
    t_star = hi
    return t_star, _hermite(t0, t1, y0, y1, f0, f1, t_star)


def _run_integration(
    rhs, y0, horizon, rtol, atol, max_step, tracker, max_steps, post_accept=None
):
    taus = [0.0]
    states = [np.array(y0, dtype=float)]
    f0 = rhs(states[0])
    derivs = [f0]
    reason, detail, converged_tau = None, None, None
    tracker.update_equilibrium(states[0])

    t = 0.0
    y = states[0]
    f = f0
    norm_f = float(np.max(np.abs(f)))
    h_step = min(
        horizon,
        max_step,
        0.1 * (1.0 + float(np.max(np.abs(y)))) / (1.0 + norm_f),
    )
    err_prev = 1.0
    h_min_floor = 1e-14 * max(1.0, horizon)
    k = [None] * 7

    for _ in range(max_steps):
        if horizon - t <= h_min_floor:
            reason = REASON_HORIZON
            break
        h_step = min(h_step, horizon - t)

        k[0] = f
        while True:
            for i in range(1, 7):
                yi = y.copy()
                for j, a in enumerate(_DP_A[i]):
                    if a != 0.0:
                        yi = yi + (h_step * a) * k[j]
                k[i] = rhs(yi)
            y_new = yi  # stage 7 argument equals the 5th-order solution (FSAL)
            err_vec = np.zeros_like(y)
            for j, e in enumerate(_DP_E):
                if e != 0.0:
                    err_vec = err_vec + e * k[j]
            err_vec *= h_step
            err = _rms_error(err_vec, y, y_new, atol, rtol)
            if err <= 1.0:
                break
            h_step *= max(0.2, 0.9 * err ** (-0.2))
            if h_step < h_min_floor:
                break
        if err > 1.0:
            reason, detail = REASON_STEP_FAILURE, "step size underflow"
            break

        t_new = t + h_step
        if post_accept is not None:
            y_new = post_accept(y_new)
            f_new = rhs(y_new)
        else:
            f_new = k[6]

        terminate = False
        violation = tracker.window_violation(y_new)
        if violation is not None:
            predicate, which = violation
            t_star, y_star = _refine_crossing(t, t_new, y, y_new, k[0], f_new, predicate)
            taus.append(t_star)
            states.append(y_star)
            derivs.append(rhs(y_star))
            reason = REASON_ANGLE if which == "angle" else REASON_RADIUS
            detail = None if which == "angle" else which
            terminate = True
        if not terminate:
            taus.append(t_new)
            states.append(y_new)
            derivs.append(f_new)
            if tracker.update_equilibrium(y_new):
                reason = REASON_CONVERGED
                converged_tau = t_new
                terminate = True
        if terminate:
            break

        if err == 0.0:
            factor = 5.0
        else:
            factor = 0.9 * err ** (-0.14) * err_prev**0.08
        h_step = h_step * min(5.0, max(0.2, factor))
        h_step = min(h_step, max_step)
        err_prev = max(err, 1e-4)
        t, y, f = t_new, y_new, f_new
    else:
        reason, detail = REASON_STEP_FAILURE, "maximum step count exceeded"

    min_dist = tracker.min_distance if tracker.dist_fn else None
    return (
        np.array(taus),
        np.array(states),
        np.array(derivs),
        reason,
        detail,
        converged_tau,
        min_dist,
    )


def integrate(
    spec: PotentialSpec,
    h: float,
    state0,
    horizon: float,
    *,
    equilibrium=None,
    eps_eq: float = 1e-6,
    dwell: int = 5,
    r_window=None,
    theta_window=None,
    rtol: float = 1e-9,
    atol: float = 1e-10,
    max_step: float = math.inf,
    backward: bool = False,
    renormalize: bool = True,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Adaptive RK5(4) integration of the regularized flow with events.

    Args:
        state0: McGeheeState (planar system, collision manifold included via
            r = 0) or GeneralState (general-dimension system).
        horizon: integration length in the regularized time.
        equilibrium: optional state of the same kind; triggers the
            convergence event when the trajectory stays within eps_eq of it
            (max norm, angles wrapped) for ``dwell`` consecutive accepted
            steps.
        r_window: optional (r_min, r_max); crossing either face terminates
            the run with the crossing point appended (r_min exits flag
            collision-manifold trapping in ``detail``).
        theta_window: optional (center, half_width) on the position angle;
            planar states only.
        backward: integrate the time-reversed field (taus stay increasing).
        renormalize: general states only; re-project s and u after every
            accepted step.

    Returns:
        Trajectory with accepted-step samples and the termination reason.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")

    if isinstance(state0, McGeheeState):
        kind = "planar"
        dim = 2
        y0 = state0.as_array()
        base_rhs = _planar_rhs_factory(spec, h)
    elif isinstance(state0, GeneralState):
        kind = "general"
        dim = state0.dim
        y0 = state0.as_array()
        base_rhs = _general_rhs_factory(spec, h, dim)
    else:
        raise TypeError("state0 must be a McGeheeState or a GeneralState")

    if backward:
        inner = base_rhs

        def rhs_run(y):
            return -inner(y)

    else:
        rhs_run = base_rhs

    post_accept = None
    if kind == "general" and renormalize:

        def post_accept(y):
            out = y.copy()
            s = out[2 : 2 + dim]
            ns = np.linalg.norm(s)
            if ns > 0.0:
                s = s / ns
            u = out[2 + dim :]
            u = u - (u @ s) * s
            out[2 : 2 + dim] = s
            out[2 + dim :] = u
            return out

    dist_fn = None
    if equilibrium is not None:
        if kind == "planar":
            if not isinstance(equilibrium, McGeheeState):
                raise TypeError("planar equilibrium target must be a McGeheeState")
            r_t, th_t, ph_t = equilibrium.r, equilibrium.theta, equilibrium.phi

            def dist_fn(y):
                return max(
                    abs(y[0] - r_t),
                    abs(wrap_signed(y[1] - th_t)),
                    abs(wrap_signed(y[2] - ph_t)),
                )

        else:
            if not isinstance(equilibrium, GeneralState):
                raise TypeError("general equilibrium target must be a GeneralState")
            target = equilibrium.as_array()

            def dist_fn(y):
                return float(np.max(np.abs(y - target)))

    angle_fn = None
    angle_half = None
    if theta_window is not None:
        if kind != "planar":
            raise ValueError("theta_window applies to planar states only")
        center, angle_half = float(theta_window[0]), float(theta_window[1])

        def angle_fn(y):
            return wrap_signed(y[1] - center)

    r_min = r_max = None
    if r_window is not None:
        r_min, r_max = r_window
    tracker = _EventTracker(
        dist_fn=dist_fn,
        eps_eq=eps_eq,
        dwell=dwell,
        r_index=0 if (r_min is not None or r_max is not None) else None,
        r_min=r_min,
        r_max=r_max,
        angle_fn=angle_fn,
        angle_half=angle_half,
    )

    taus, states, derivs, reason, detail, converged_tau, min_dist = _run_integration(
        rhs_run, y0, horizon, rtol, atol, max_step, tracker, max_steps,
        post_accept=post_accept,
    )

    if reason == REASON_RADIUS and detail == "r_min":
        detail = "r_min (collision-manifold trapping)"

    return Trajectory(
        kind=kind,
        taus=taus,
        states=states,
        derivs=derivs,
        reason=reason,
        detail=detail,
        converged_tau=converged_tau,
        min_event_distance=min_dist,
        backward=backward,
        dim=dim,
    )


def physical_time(spec: PotentialSpec, h: float, traj: Trajectory) -> np.ndarray:
    """Physical timestamps along a trajectory, starting at t = 0.

    Planar: dt/dtau = z r^(1 + alpha/2); general: dt/dtau = r^(1 + alpha/2).
    On the collision manifold (r = 0) the factor vanishes and time freezes.
    Backward trajectories get decreasing (nonpositive) timestamps.
    """
    if traj.kind == "planar":
        rates = np.empty(len(traj))
        for i in range(len(traj)):
            r, th = traj.states[i, 0], traj.states[i, 1]
            if r <= 0.0:
                rates[i] = 0.0
            else:
                rates[i] = speed_scale(spec, h, r, th) * r ** (1.0 + 0.5 * spec.alpha)
    else:
        r = np.maximum(traj.states[:, 0], 0.0)
        rates = r ** (1.0 + 0.5 * spec.alpha)
    if traj.backward:
        rates = -rates
    dt = 0.5 * (rates[1:] + rates[:-1]) * np.diff(traj.taus)
    return np.concatenate(([0.0], np.cumsum(dt)))


def lift_planar(spec: PotentialSpec, h: float, traj: Trajectory):
    """Cartesian (q, p) samples of a planar trajectory; rows with r = 0 are NaN."""
    if traj.kind != "planar":
        raise ValueError("lift_planar expects a planar trajectory")
    n = len(traj)
    q = np.full((n, 2), np.nan)
    p = np.full((n, 2), np.nan)
    for i in range(n):
        r, th, ph = traj.states[i]
        if r <= 0.0:
            continue
        z = speed_scale(spec, h, r, th)
        pmag = r ** (-0.5 * spec.alpha) * z
        q[i] = (r * math.cos(th), r * math.sin(th))
        p[i] = (pmag * math.cos(ph), pmag * math.sin(ph))
    return q, p


def energy_residuals(spec: PotentialSpec, h: float, traj: Trajectory) -> np.ndarray:
    """Per-sample energy residual.

    Planar rows are lifted to Cartesian and checked against
    (1/2)|p|^2 - V(q) - h; collision-manifold rows (r = 0) report 0.0 since
    no lift exists there.  General rows report the shell residual.
    """
    n = len(traj)
    out = np.zeros(n)
    if traj.kind == "planar":
        q, p = lift_planar(spec, h, traj)
        for i in range(n):
            if traj.states[i, 0] <= 0.0:
                out[i] = 0.0
            else:
                out[i] = 0.5 * float(p[i] @ p[i]) - eval_V(spec, q[i]) - h
    else:
        for i in range(n):
            out[i] = shell_residual(spec, h, traj.states[i])
    return out


def write_trajectory_csv(spec: PotentialSpec, h: float, traj: Trajectory, path) -> None:
    """CSV export: tau,r,theta,phi,t,energy_residual (planar) or
    tau,r,v,s_1..s_d,u_1..u_d,t,energy_residual (general)."""
    t = physical_time(spec, h, traj)
    res = energy_residuals(spec, h, traj)
    lines = []
    if traj.kind == "planar":
        lines.append("tau,r,theta,phi,t,energy_residual")
        for i in range(len(traj)):
            r, th, ph = traj.states[i]
            lines.append(
                f"{float(traj.taus[i])!r},{float(r)!r},{float(th)!r},"
                f"{float(ph)!r},{float(t[i])!r},{float(res[i])!r}"
            )
    else:
        d = traj.dim
        cols = ["tau", "r", "v"]
        cols += [f"s_{j + 1}" for j in range(d)]
        cols += [f"u_{j + 1}" for j in range(d)]
        cols += ["t", "energy_residual"]
        lines.append(",".join(cols))
        for i in range(len(traj)):
            row = [float(traj.taus[i])] + [float(x) for x in traj.states[i]]
            row += [float(t[i]), float(res[i])]
            lines.append(",".join(repr(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def sundman_values(spec: PotentialSpec, traj: Trajectory) -> np.ndarray:
    """The monotone collision-manifold function sqrt(U) cos(phi - theta)."""
    if traj.kind != "planar":
        raise ValueError("sundman_values expects a planar trajectory")
    th = traj.states[:, 1]
    ph = traj.states[:, 2]
    u = spec.angular.value(th)
    return np.sqrt(u) * np.cos(ph - th)
