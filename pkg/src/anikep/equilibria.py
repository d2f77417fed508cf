"""Collision-manifold equilibria: closed-form eigen-data and classification.

Equilibria of the regularized flow sit on {r = 0} at (theta_hat, theta_hat +
k pi) with U'(theta_hat) = 0; only k in {0, 1} is materialized (other k are
periodic repeats).  The within-manifold Jacobian is

    JF|_{r=0} = cos(k pi) U(theta_hat) [[-2, 2], [U''/U - alpha, alpha]]

with eigenvalues mu_{-+} = (1/2) cos(k pi) U {alpha - 2 -+ sqrt((alpha-2)^2
+ 8 U''/U)}, complex when the radicand is negative.  The full 3-D
linearization at the ingoing equilibrium (k = 1) adds the radial eigenvalue
lambda_r = -2U with eigendirection (1, 0, 0); the tangential pair is

    lambda_{-+} = ((2 - alpha)/2) U -+ (1/2) sqrt((2-alpha)^2 U^2 + 8 U U'').

The eigendirection paired with lambda_minus is (0, 1, 1/2 + alpha/4
+ (1/4) sqrt((2-alpha)^2 + 8 U''/U)) and the one paired with lambda_plus
carries the minus sign on the radical: substituting into JF v = lambda v
fixes the pairing this way round (the slope (2U - lambda)/(2U) grows when
lambda shrinks).
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np

from .potential import PotentialSpec, central_configurations


class Classification(enum.Enum):
    SINK = "Sink"
    SOURCE = "Source"
    ASYMPTOTICALLY_STABLE = "AsymptoticallyStable"
    UNSTABLE = "Unstable"
    SADDLE = "Saddle"
    STABLE_DEGENERATE_NODE = "StableDegenerateNode"
    UNSTABLE_DEGENERATE_NODE = "UnstableDegenerateNode"
    STABLE_TWO_TANGENT_NODE = "StableTwoTangentNode"
    UNSTABLE_TWO_TANGENT_NODE = "UnstableTwoTangentNode"


@dataclass(frozen=True)
class EquilibriumRecord:
    """One collision-manifold equilibrium with its eigen-data.

    lambda/eigendirection fields describe the 3-D linearization at
    (0, theta_hat, theta_hat + k pi); for k = 0 they are the negatives of the
    ingoing (k = 1) values, reported in the same (minus, plus) order, and the
    eigendirections swap accordingly.  ``borderline`` marks classification
    decided within 1e-12 of a branch boundary.
    """

    theta_hat: float
    k: int
    mu_minus: complex | float
    mu_plus: complex | float
    lambda_r: float
    lambda_minus: complex | float
    lambda_plus: complex | float
    v_r: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray
    classification: Classification
    borderline: bool


def _require_critical(spec: PotentialSpec, theta_hat: float) -> None:
    u = spec.angular
    tol = 1e-6 * max(1.0, u.max_value())
    du = u.derivative(theta_hat)
    if abs(du) > tol:
        raise ValueError(
            f"theta_hat={theta_hat} is not a critical angle: U' = {du:.3e}"
        )


def _maybe_real(z: complex) -> complex | float:
    return z.real if z.imag == 0.0 else z


def jacobian_collision(spec: PotentialSpec, theta_hat: float, k: int) -> np.ndarray:
    """Closed-form 2x2 Jacobian of the collision-manifold field."""
    _require_critical(spec, theta_hat)
    u = spec.angular.value(theta_hat)
    t = spec.angular.second_derivative(theta_hat) / u
    sign = 1.0 if k % 2 == 0 else -1.0
    return sign * u * np.array([[-2.0, 2.0], [t - spec.alpha, spec.alpha]])


def eigen_collision(spec: PotentialSpec, theta_hat: float, k: int):
    """Eigenvalue pair (mu_minus, mu_plus) of the 2x2 Jacobian.

    The labels follow the closed form: mu_minus carries the minus sign in
    front of the radical, which for the ingoing parity (k = 1) makes
    mu_minus the positive (unstable) one when U'' > 0.
    """
    _require_critical(spec, theta_hat)
    u = spec.angular.value(theta_hat)
    t = spec.angular.second_derivative(theta_hat) / u
    alpha = spec.alpha
    radicand = math.fsum([(alpha - 2.0) ** 2, 8.0 * t])
    root = cmath.sqrt(radicand)
    pref = 0.5 * math.cos(k * math.pi) * u
    return (
        _maybe_real(pref * ((alpha - 2.0) - root)),
        _maybe_real(pref * ((alpha - 2.0) + root)),
    )


def _classify_with_flag(spec: PotentialSpec, theta_hat: float, k: int):
    u = spec.angular.value(theta_hat)
    d2 = spec.angular.second_derivative(theta_hat)
    alpha = spec.alpha
    radicand = math.fsum([(alpha - 2.0) ** 2, 8.0 * d2 / u])
    borderline = abs(d2) <= 1e-12 * u or abs(radicand) <= 1e-12 * max(
        1.0, (alpha - 2.0) ** 2, abs(8.0 * d2 / u)
    )
    even = k % 2 == 0
    if d2 > 0.0:
        tag = Classification.SADDLE
    elif d2 == 0.0:
        tag = (
            Classification.STABLE_DEGENERATE_NODE
            if even
            else Classification.UNSTABLE_DEGENERATE_NODE
        )
    elif radicand < 0.0:
        tag = Classification.SINK if even else Classification.SOURCE
    elif radicand == 0.0:
        tag = Classification.ASYMPTOTICALLY_STABLE if even else Classification.UNSTABLE
    else:
        tag = (
            Classification.STABLE_TWO_TANGENT_NODE
            if even
            else Classification.UNSTABLE_TWO_TANGENT_NODE
        )
    return tag, borderline


def classify(spec: PotentialSpec, theta_hat: float, k: int) -> Classification:
    """Stability type of the collision-manifold equilibrium (theta_hat, k)."""
    _require_critical(spec, theta_hat)
    return _classify_with_flag(spec, theta_hat, k)[0]


def eigen_3d(spec: PotentialSpec, h: float, theta_star: float):
    """Closed-form eigen-data of the 3-D linearization at the ingoing
    equilibrium (0, theta*, theta* + pi).

    Returns (lambda_r, lambda_minus, lambda_plus, v_r, v_minus, v_plus).
    The data does not depend on h: the energy enters the field only through
    h r^alpha terms whose r-derivative vanishes at r = 0.
    """
    _require_critical(spec, theta_star)
    u = spec.angular.value(theta_star)
    d2 = spec.angular.second_derivative(theta_star)
    alpha = spec.alpha
    lam_r = -2.0 * u
    big = cmath.sqrt((2.0 - alpha) ** 2 * u * u + 8.0 * u * d2)
    lam_minus = _maybe_real(0.5 * (2.0 - alpha) * u - 0.5 * big)
    lam_plus = _maybe_real(0.5 * (2.0 - alpha) * u + 0.5 * big)
    small = cmath.sqrt(math.fsum([(2.0 - alpha) ** 2, 8.0 * d2 / u]))
    base = 0.5 + 0.25 * alpha
    slope_minus = _maybe_real(base + 0.25 * small)
    slope_plus = _maybe_real(base - 0.25 * small)
    v_r = np.array([1.0, 0.0, 0.0])
    v_minus = np.array([0.0, 1.0, slope_minus])
    v_plus = np.array([0.0, 1.0, slope_plus])
    return lam_r, lam_minus, lam_plus, v_r, v_minus, v_plus


def tangency_direction(spec: PotentialSpec, theta_star: float):
    """Direction along which the local stable manifold meets {r = 0}.

    Returns ("v_minus", v) when U''/U - (4 - alpha) < 0 (the tangential
    stable rate is the weak one, |lambda_minus| < |lambda_r|) and
    ("v_r", v) otherwise.
    """
    _require_critical(spec, theta_star)
    u = spec.angular.value(theta_star)
    d2 = spec.angular.second_derivative(theta_star)
    quantity = d2 / u - (4.0 - spec.alpha)
    _, lam_minus, _, v_r, v_minus, _ = eigen_3d(spec, 0.0, theta_star)
    if quantity < 0.0:
        return "v_minus", v_minus
    return "v_r", v_r


def equilibrium_records(spec: PotentialSpec) -> list[EquilibriumRecord]:
    """EquilibriumRecord for every critical angle and parity k in {0, 1}."""
    ccs = central_configurations(spec)
    if ccs.continuum:
        raise ValueError(
            "isotropic angular potential: critical angles form a continuum"
        )
    records = []
    for cc in ccs:
        lam_r, lam_m, lam_p, v_r, v_m, v_p = eigen_3d(spec, 0.0, cc.theta)
        for k in (0, 1):
            mu_m, mu_p = eigen_collision(spec, cc.theta, k)
            tag, borderline = _classify_with_flag(spec, cc.theta, k)
            if k == 1:
                rec = EquilibriumRecord(
                    theta_hat=cc.theta, k=k, mu_minus=mu_m, mu_plus=mu_p,
                    lambda_r=lam_r, lambda_minus=lam_m, lambda_plus=lam_p,
                    v_r=v_r, v_minus=v_m, v_plus=v_p,
                    classification=tag, borderline=borderline,
                )
            else:
                # outgoing parity: 3-D spectrum is the exact negative; keep
                # (minus, plus) ordered, so the eigendirections swap
                rec = EquilibriumRecord(
                    theta_hat=cc.theta, k=k, mu_minus=mu_m, mu_plus=mu_p,
                    lambda_r=-lam_r,
                    lambda_minus=_maybe_real(-complex(lam_p)),
                    lambda_plus=_maybe_real(-complex(lam_m)),
                    v_r=v_r, v_minus=v_p, v_plus=v_m,
                    classification=tag, borderline=borderline,
                )
            records.append(rec)
    return records
