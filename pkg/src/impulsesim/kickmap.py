"""Kick maps: reset maps induced by delta-train forcing of a vector field.

An impulse forcing g(x) * sum_n delta(t - t_n) acts, in the vanishing-width
limit, like the unit-time flow of zdot = g(z).  For affine fields
g(x) = Ax + c this flow has the closed form exp(A) r + K c with
K = integral_0^1 exp(uA) du.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class KickField:
    """Kick vector field g and (optionally) its Jacobian."""

    g: Callable[[np.ndarray], np.ndarray]
    g_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None


def regularized_kick(
    field: KickField, r: np.ndarray, delta: float, substeps: int
) -> np.ndarray:
    """Flow of the width-delta regularized kick, zdot = (1/delta) g(z) over [0, delta].

    Integrated in rescaled time as zdot = g(z) over [0, 1] with explicit
    Euler, so the result depends on substeps only, never on delta.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    z = np.atleast_1d(np.asarray(r, dtype=float)).copy()
    h = 1.0 / substeps
    for n in range(substeps):
        z = z + h * np.asarray(field.g(z), dtype=float)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(
                f"regularized kick overflowed at substep {n + 1}/{substeps}"
            )
    return z


def _exp_integral(A: np.ndarray) -> np.ndarray:
    """K = integral_0^1 exp(uA) du via the series sum_k A^k / (k+1)!."""
    d = A.shape[0]
    K = np.eye(d)
    term = np.eye(d)
    for k in range(1, 200):
        term = term @ A / (k + 1)
        K = K + term
        if np.linalg.norm(term) <= np.finfo(float).eps * np.linalg.norm(K):
            break
    return K


def affine_kick_map(A: np.ndarray, c: np.ndarray):
    """Closed-form kick map for the affine field g(x) = Ax + c.

    Returns (map, jacobian): the map r -> exp(A) r + K c with
    K = exp(A) * integral_0^1 exp(-sA) ds = integral_0^1 exp(uA) du,
    and the constant Jacobian exp(A).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (A.shape[0],):
        raise ValueError(f"c has shape {c.shape}, expected ({A.shape[0]},)")
    eA = expm(A)
    Kc = _exp_integral(A) @ c

    def kick(r):
        r = np.asarray(r, dtype=float)
        return r @ eA.T + Kc

    return kick, eA


def kick_limit_check(
    field: KickField,
    closed_form: Callable[[np.ndarray], np.ndarray],
    r: np.ndarray,
    deltas: Sequence[float],
    substeps_scale: float = 1.0,
) -> list[tuple[float, int, float]]:
    """Error table certifying convergence of the regularized flow to closed_form.

    For each delta the flow is integrated with substeps proportional to
    1/delta, rounded up to a power of two so the Euler step is an exact
    binary fraction; returns rows (delta, substeps, error).
    """
    deltas = list(deltas)
    if any(d <= 0 for d in deltas):
        raise ValueError("deltas must be positive")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    target = np.atleast_1d(np.asarray(closed_form(np.atleast_1d(r)), dtype=float))
    rows = []
    for delta in deltas:
        substeps = 1 << max(0, math.ceil(math.log2(substeps_scale / delta)))
        z = regularized_kick(field, r, delta, substeps)
        err = float(np.linalg.norm(z - target))
        rows.append((delta, substeps, err))
    return rows
