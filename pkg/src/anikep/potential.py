"""Anisotropic power-law potentials V(x) = |x|^(-alpha) U(theta) and friends.

The angular factor U is a finite trigonometric polynomial, which keeps every
derivative exact and the whole family serializable.  An optional lower-order
perturbation W(r, theta) = c * r^(-beta) * g(theta) with 0 <= beta < alpha is
supported throughout.

Conventions: V > 0 (attractive), so the force is +grad V and the Hill region
is {V + h >= 0}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .angles import TWO_PI, wrap_positive

_POSITIVITY_GRID = 4096
_ROOT_GRID = 4096


@dataclass(frozen=True)
class AngularPotential:
    """Real trigonometric polynomial on the circle.

    value(theta) = a0 + sum_k (cos_coeffs[k-1]*cos(k*theta)
                               + sin_coeffs[k-1]*sin(k*theta))

    Args:
        a0: constant term.
        cos_coeffs: cosine coefficients for harmonics k = 1..K.
        sin_coeffs: sine coefficients for harmonics k = 1..K.
    """

    a0: float
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def __post_init__(self):
        cos_c = tuple(float(c) for c in self.cos_coeffs)
        sin_c = tuple(float(c) for c in self.sin_coeffs)
        degree = max(len(cos_c), len(sin_c))
        cos_c = cos_c + (0.0,) * (degree - len(cos_c))
        sin_c = sin_c + (0.0,) * (degree - len(sin_c))
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "cos_coeffs", cos_c)
        object.__setattr__(self, "sin_coeffs", sin_c)

    @property
    def degree(self) -> int:
        return len(self.cos_coeffs)

    @property
    def is_constant(self) -> bool:
        """True when the derivative vanishes identically."""
        return all(c == 0.0 for c in self.cos_coeffs) and all(
            c == 0.0 for c in self.sin_coeffs
        )

    def _eval(self, theta, order: int):
        if np.ndim(theta) == 0:
            th = wrap_positive(float(theta))
            acc = self.a0 if order == 0 else 0.0
            for k in range(1, self.degree + 1):
                a = self.cos_coeffs[k - 1]
                b = self.sin_coeffs[k - 1]
                c, s = math.cos(k * th), math.sin(k * th)
                if order == 0:
                    acc += a * c + b * s
                elif order == 1:
                    acc += k * (b * c - a * s)
                else:
                    acc += k * k * (-a * c - b * s)
            return acc
        th = wrap_positive(np.asarray(theta, dtype=float))
        out = np.full(th.shape, self.a0 if order == 0 else 0.0)
        for k in range(1, self.degree + 1):
            a = self.cos_coeffs[k - 1]
            b = self.sin_coeffs[k - 1]
            c, s = np.cos(k * th), np.sin(k * th)
            if order == 0:
                out += a * c + b * s
            elif order == 1:
                out += k * (b * c - a * s)
            else:
                out += k * k * (-a * c - b * s)
        return out

    def value(self, theta):
        return self._eval(theta, 0)

    def derivative(self, theta):
        return self._eval(theta, 1)

    def second_derivative(self, theta):
        return self._eval(theta, 2)

    def min_value(self, n: int = _POSITIVITY_GRID) -> float:
        """Global minimum over the circle: dense grid plus Newton polish."""
        return self._extremum(n, sign=1.0)

    def max_value(self, n: int = _POSITIVITY_GRID) -> float:
        return -self._extremum(n, sign=-1.0)

    def _extremum(self, n: int, sign: float) -> float:
        grid = np.linspace(0.0, TWO_PI, n, endpoint=False)
        vals = sign * self.value(grid)
        best = float(np.min(vals))
        theta = float(grid[int(np.argmin(vals))])
        for _ in range(8):
            d1 = sign * self.derivative(theta)
            d2 = sign * self.second_derivative(theta)
            if d2 <= 0.0 or not math.isfinite(d1 / d2 if d2 else math.inf):
                break
            theta -= d1 / d2
        cand = sign * float(self.value(theta))
        return min(best, cand)

    def to_json_dict(self) -> dict:
        return {
            "a0": self.a0,
            "cos": list(self.cos_coeffs),
            "sin": list(self.sin_coeffs),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "AngularPotential":
        return cls(
            a0=data["a0"],
            cos_coeffs=tuple(data.get("cos", ())),
            sin_coeffs=tuple(data.get("sin", ())),
        )


@dataclass(frozen=True)
class PerturbationSpec:
    """Lower-order radial perturbation W(r, theta) = c * r^(-beta) * g(theta).

    beta must satisfy 0 <= beta < alpha of the owning PotentialSpec, so the
    perturbation vanishes faster than the leading term as r -> 0.
    """

    c: float
    beta: float
    g: AngularPotential

    def __post_init__(self):
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "beta", float(self.beta))
        if self.beta < 0.0:
            raise ValueError(f"perturbation exponent beta must be >= 0, got {self.beta}")

    def to_json_dict(self) -> dict:
        return {"c": self.c, "beta": self.beta, "g": self.g.to_json_dict()}

    @classmethod
    def from_json_dict(cls, data: dict) -> "PerturbationSpec":
        return cls(
            c=data["c"],
            beta=data["beta"],
            g=AngularPotential.from_json_dict(data["g"]),
        )


@dataclass(frozen=True)
class PotentialSpec:
    """Full potential V(x) = |x|^(-alpha) U(theta) + W(|x|, theta).

    Args:
        alpha: homogeneity exponent, strictly inside (0, 2).
        angular: the angular factor U; must be positive everywhere.
        perturbation: optional PerturbationSpec with beta < alpha.
    """

    alpha: float
    angular: AngularPotential
    perturbation: PerturbationSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.perturbation is not None and self.perturbation.beta >= self.alpha:
            raise ValueError(
                f"perturbation exponent beta={self.perturbation.beta} must be "
                f"strictly below alpha={self.alpha}"
            )
        grid = np.linspace(0.0, TWO_PI, _POSITIVITY_GRID, endpoint=False)
        umin = float(np.min(self.angular.value(grid)))
        if umin <= 0.0:
            raise ValueError(
                f"angular potential must be positive; grid minimum {umin:.3e}"
            )

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "U": self.angular.to_json_dict(),
            "W": None
            if self.perturbation is None
            else self.perturbation.to_json_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "PotentialSpec":
        pert = data.get("W")
        return cls(
            alpha=data["alpha"],
            angular=AngularPotential.from_json_dict(data["U"]),
            perturbation=None
            if pert is None
            else PerturbationSpec.from_json_dict(pert),
        )

    @classmethod
    def from_json(cls, text: str) -> "PotentialSpec":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class CentralConfiguration:
    """A critical angle of U with its classification-relevant data."""

    theta: float
    value: float
    second_derivative: float
    is_global_min: bool
    is_nondegenerate: bool


@dataclass(frozen=True)
class CentralConfigurationSet:
    """Result of the critical-angle scan.

    ``continuum`` is set when U is constant: every angle is critical and the
    item list is empty.  Downstream stable-manifold pipelines refuse such
    specs; formula unit tests may still use them.
    """

    continuum: bool
    items: tuple = ()

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def global_minima(self):
        return [cc for cc in self.items if cc.is_global_min]


def _check_points(q):
    pts = np.asarray(q, dtype=float)
    single = pts.shape == (2,)
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected a planar point or an (n, 2) array, got shape {np.shape(q)}")
    r = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(r == 0.0):
        raise ValueError("potential is undefined at the collision point q = 0")
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    return pts, r, theta, single


def eval_V(spec: PotentialSpec, q):
    """Potential value at a planar point (or batch of points).

    V(q) = r^(-alpha) U(theta) + c r^(-beta) g(theta).

    Args:
        spec: potential definition.
        q: array-like of shape (2,) or (n, 2), away from the origin.
    """
    _, r, theta, single = _check_points(q)
    val = r ** (-spec.alpha) * spec.angular.value(theta)
    if spec.perturbation is not None:
        w = spec.perturbation
        val = val + w.c * r ** (-w.beta) * w.g.value(theta)
    return float(val[0]) if single else val


def _grad_term(alpha: float, u, du, pts, r):
    pre = r ** (-alpha - 2.0)
    gx = pre * (-alpha * u * pts[:, 0] - du * pts[:, 1])
    gy = pre * (-alpha * u * pts[:, 1] + du * pts[:, 0])
    return np.stack([gx, gy], axis=1)


def grad_V(spec: PotentialSpec, q):
    """Closed-form gradient of eval_V; shape follows the input."""
    pts, r, theta, single = _check_points(q)
    g = _grad_term(
        spec.alpha, spec.angular.value(theta), spec.angular.derivative(theta), pts, r
    )
    if spec.perturbation is not None:
        w = spec.perturbation
        g = g + w.c * _grad_term(w.beta, w.g.value(theta), w.g.derivative(theta), pts, r)
    return g[0] if single else g


def _hess_term(alpha: float, u, du, ddu, r, ct, st):
    f_rr = alpha * (alpha + 1.0) * u
    f_rt = -(alpha + 1.0) * du
    f_tt = ddu - alpha * u
    pre = r ** (-alpha - 2.0)
    hxx = pre * (f_rr * ct * ct - 2.0 * f_rt * ct * st + f_tt * st * st)
    hyy = pre * (f_rr * st * st + 2.0 * f_rt * ct * st + f_tt * ct * ct)
    hxy = pre * (f_rr * ct * st + f_rt * (ct * ct - st * st) - f_tt * ct * st)
    out = np.empty(np.shape(r) + (2, 2))
    out[..., 0, 0] = hxx
    out[..., 0, 1] = hxy
    out[..., 1, 0] = hxy
    out[..., 1, 1] = hyy
    return out


def hess_V(spec: PotentialSpec, q):
    """Closed-form Hessian of eval_V; (2, 2) for a point, (n, 2, 2) for a batch."""
    pts, r, theta, single = _check_points(q)
    ct, st = pts[:, 0] / r, pts[:, 1] / r
    h = _hess_term(
        spec.alpha,
        spec.angular.value(theta),
        spec.angular.derivative(theta),
        spec.angular.second_derivative(theta),
        r,
        ct,
        st,
    )
    if spec.perturbation is not None:
        w = spec.perturbation
        h = h + w.c * _hess_term(
            w.beta,
            w.g.value(theta),
            w.g.derivative(theta),
            w.g.second_derivative(theta),
            r,
            ct,
            st,
        )
    return h[0] if single else h


def central_configurations(spec: PotentialSpec) -> CentralConfigurationSet:
    """All critical angles of U on [0, 2*pi), annotated.

    Roots of U' are located by a sign-change scan on a dense grid followed by
    bisection and a Newton polish.  A constant U has no isolated critical
    angles; the result is then flagged ``continuum`` with an empty item list.
    """
    u = spec.angular
    if u.is_constant:
        return CentralConfigurationSet(continuum=True, items=())

    grid = np.linspace(0.0, TWO_PI, _ROOT_GRID, endpoint=False)
    dvals = u.derivative(grid)
    roots: list[float] = []
    for i in range(_ROOT_GRID):
        j = (i + 1) % _ROOT_GRID
        a, b = grid[i], grid[i] + (TWO_PI / _ROOT_GRID)
        fa, fb = dvals[i], dvals[j]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0.0:
            lo, hi, flo = a, b, fa
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                fm = u.derivative(mid)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if flo * fm < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))

    d1_scale = float(np.max(np.abs(dvals)))
    polished = []
    for theta in roots:
        best = theta
        best_res = abs(u.derivative(theta))
        for _ in range(4):
            d2 = u.second_derivative(best)
            if d2 == 0.0:
                break
            cand = best - u.derivative(best) / d2
            res = abs(u.derivative(cand))
            if res < best_res:
                best, best_res = cand, res
            else:
                break
        polished.append(wrap_positive(best))

    polished.sort()
    deduped: list[float] = []
    for theta in polished:
        if deduped and min(abs(theta - deduped[-1]), TWO_PI - abs(theta - deduped[-1])) < 1e-9:
            continue
        deduped.append(theta)
    if len(deduped) > 1 and TWO_PI - (deduped[-1] - deduped[0]) < 1e-9:
        deduped.pop()

    values = [float(u.value(t)) for t in deduped]
    seconds = [float(u.second_derivative(t)) for t in deduped]
    vmin = min(values)
    val_scale = max(1.0, abs(vmin))
    d2_scale = max(1.0, max(abs(s) for s in seconds))
    items = tuple(
        CentralConfiguration(
            theta=t,
            value=v,
            second_derivative=s,
            is_global_min=(v - vmin) <= 1e-9 * val_scale,
            is_nondegenerate=abs(s) > 1e-9 * d2_scale,
        )
        for t, v, s in zip(deduped, values, seconds)
    )
    return CentralConfigurationSet(continuum=False, items=items)


def lagrange_jacobi_radius(spec: PotentialSpec, h: float) -> float:
    """Radius of guaranteed convexity of the moment of inertia.

    For h < 0 and no perturbation: r = ((2-alpha) U_min / (-2h))^(1/alpha).
    For h >= 0 the radius is unbounded and +inf is returned as the marker.
    With a perturbation present the unperturbed radius is shrunk to the
    largest grid-verified radius on which the convexity inequality
    (2-alpha) U_min r^-alpha + (2-beta) min(c g) r^-beta + 2h > 0 still holds.
    """
    if h >= 0.0:
        return math.inf
    alpha = spec.alpha
    umin = spec.angular.min_value()
    base = ((2.0 - alpha) * umin / (-2.0 * h)) ** (1.0 / alpha)
    if spec.perturbation is None:
        return base
    w = spec.perturbation
    scaled_min = min(w.c * w.g.min_value(), w.c * w.g.max_value())
    radii = np.geomspace(1e-6 * base, base, 256)
    margin = (
        (2.0 - alpha) * umin * radii ** (-alpha)
        + (2.0 - w.beta) * scaled_min * radii ** (-w.beta)
        + 2.0 * h
    )
    bad = np.nonzero(margin <= 0.0)[0]
    if bad.size == 0:
        return base
    first = int(bad[0])
    if first == 0:
        raise ValueError(
            "perturbation destroys inertia convexity at every probed radius"
        )
    return float(radii[first - 1])


def hill_region_contains(spec: PotentialSpec, h: float, q) -> bool:
    """True iff the point lies in the Hill region {V + h >= 0}."""
    return bool(eval_V(spec, q) + h >= 0.0)
