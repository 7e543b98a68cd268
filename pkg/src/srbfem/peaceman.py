"""Well-index relations: the Peaceman flux coefficient and its singularity-removal counterpart."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import WellSegment
from .singular import DegenerateCoefficientError, SingularField, circle_average

EQUIVALENT_RADIUS_FACTOR = 0.2  # r_e = 0.2 h on uniform grids


@dataclass(frozen=True)
class PeacemanParams:
    r_e: float
    R: float
    S: float = 0.0
    kappa: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (self.r_e > self.R > 0):
            raise ValueError(f"need r_e > R > 0, got r_e={self.r_e}, R={self.R}")
        if not (self.kappa > 0 and self.mu > 0):
            raise ValueError("kappa and mu must be positive")


def peaceman_flux_coefficient(p: PeacemanParams) -> float:
    """q / (p_w - p_K) = (2 pi kappa / mu) / (ln(r_e / R) + S)."""
    if math.isinf(p.S) and p.S > 0:
        return 0.0
    denom = math.log(p.r_e / p.R) + p.S
    if denom <= 0:
        raise DegenerateCoefficientError(f"ln(r_e/R) + S = {denom:.3g} <= 0")
    return 2.0 * math.pi * p.kappa / p.mu / denom


def skin_from_beta(beta: float, kappa: float = 1.0, mu: float = 1.0) -> float:
    """Skin factor that makes the two coefficients coincide: S = 2 pi kappa / (mu beta)."""
    return 2.0 * math.pi * kappa / (mu * beta)


def truncated_potential(R: float, r_e: float, kappa: float = 1.0, mu: float = 1.0,
                        axis=((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))) -> SingularField:
    seg = WellSegment(axis[0], axis[1], R)
    return SingularField(seg, kappa, mu, "truncated", r_e=r_e)


def averaged_truncated_potential(trunc: SingularField) -> float:
    """Closed-form borehole average of the truncated potential: -(mu / 2 pi kappa) ln(R / r_e)."""
    if trunc.kind != "truncated":
        raise ValueError("expected a truncated potential")
    R = trunc.well.R
    return trunc.ratio / (2.0 * math.pi) * math.log(trunc.r_e / R)


def srb_equivalent_coefficient(beta: float, trunc: SingularField, R: float | None = None) -> float:
    """beta* = beta / (1 + beta Gbar) with Gbar the averaged truncated potential.

    ``R`` defaults to the radius of the well carried by ``trunc``.
    """
    if trunc.kind != "truncated":
        raise ValueError("expected a truncated potential")
    R = trunc.well.R if R is None else R
    if trunc.r_e < R:
        raise ValueError(f"r_e={trunc.r_e} must not be smaller than R={R}")
    gbar = trunc.ratio / (2.0 * math.pi) * math.log(trunc.r_e / R)
    denom = 1.0 + beta * gbar
    if denom <= 0:
        raise DegenerateCoefficientError(f"1 + beta*Gbar = {denom:.3g} <= 0")
    return beta / denom


def numerical_circle_average(trunc: SingularField, n_theta: int = 16) -> float:
    seg = trunc.well
    return float(circle_average(trunc, seg, 0.5 * seg.L, n_theta))


def comparison_row(beta: float, r_e: float, R: float, kappa: float = 1.0, mu: float = 1.0) -> dict:
    S = skin_from_beta(beta, kappa, mu)
    trunc = truncated_potential(R, r_e, kappa, mu)
    srb = srb_equivalent_coefficient(beta, trunc)
    if r_e > R:
        pm = peaceman_flux_coefficient(PeacemanParams(r_e, R, S, kappa, mu))
    else:
        pm = 2.0 * math.pi * kappa / mu / S  # ln(r_e/R) = 0
    return {"beta": beta, "r_e": r_e, "R": R, "S": S, "kappa": kappa, "mu": mu,
            "peaceman": pm, "srb": srb, "difference": abs(pm - srb)}


def random_table(n: int = 100, seed: int = 0) -> list[dict]:
    """Rows for log-uniform random draws of (beta, R, r_e/R, kappa, mu)."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        R = 10 ** rng.uniform(-4, -1)
        r_e = R * 10 ** rng.uniform(0.01, 3)
        beta = 10 ** rng.uniform(-3, 3)
        kappa = 10 ** rng.uniform(-2, 2)
        mu = 10 ** rng.uniform(-2, 2)
        rows.append(comparison_row(beta, r_e, R, kappa, mu))
    return rows
