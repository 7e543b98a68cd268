"""Line-source potentials, cut-off functions, extension operators and the
corrected inflow coefficients used by the singularity-removal formulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .geometry import LineMesh1D, WellSegment

KINDS = ("infinite-line", "finite-segment", "truncated")


class DegenerateCoefficientError(ArithmeticError):
    """A corrected coefficient has a non-positive denominator."""


def _closest_offset(x, seg: WellSegment):
    x = np.asarray(x, dtype=float)
    t = np.clip(seg.arclength(x), 0.0, seg.L)
    return x - (seg.a + t[..., None] * seg.tau)


def _radial(x, seg: WellSegment):
    """Offset from the infinite line through the segment, and its length."""
    x = np.asarray(x, dtype=float)
    d = x - seg.a
    q = d - (d @ seg.tau)[..., None] * seg.tau
    return q, np.linalg.norm(q, axis=-1)


@dataclass(frozen=True)
class SingularField:
    """Potential of a unit line source on one well.

    ``finite-segment`` is the closed-form segment potential, ``infinite-line``
    the 2D fundamental solution about the centreline, and ``truncated`` the
    latter cut at ``r_e`` (only for well-index comparisons). Values inside
    ``clamp_radius`` (default: the well radius) are those on the clamp surface.
    """

    well: WellSegment
    kappa: float = 1.0
    mu: float = 1.0
    kind: str = "finite-segment"
    clamp_radius: float | None = None
    r_e: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "truncated" and not (self.r_e and self.r_e > 0):
            raise ValueError("truncated potential needs a positive r_e")
        if not (self.kappa > 0 and self.mu > 0):
            raise ValueError("kappa and mu must be positive")

    @property
    def clamp(self) -> float:
        return self.well.R if self.clamp_radius is None else float(self.clamp_radius)

    @property
    def ratio(self) -> float:
        return self.mu / self.kappa

    def value_and_grad(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "finite-segment":
            seg = self.well
            return _kernels.segment_green(x, seg.a, seg.tau, seg.L, self.ratio / (4.0 * np.pi), self.clamp)
        q, r = _radial(x, self.well)
        rc = np.maximum(r, self.clamp)
        unit = np.zeros_like(q)
        nz = r > 0
        unit[nz] = q[nz] / r[nz, None]
        unit[~nz] = self.well.normal_frame()[0]
        k = self.ratio / (2.0 * np.pi)
        if self.kind == "infinite-line":
            return -k * np.log(rc), -k * unit / rc[:, None]
        inside = rc <= self.r_e
        val = np.where(inside, -k * np.log(rc / self.r_e), 0.0)
        grad = np.where(inside[:, None], -k * unit / rc[:, None], 0.0)
        return val, grad

    def __call__(self, x):
        return eval_G(self, x)


def eval_G(field: SingularField, x):
    x = np.asarray(x, dtype=float)
    val, _ = field.value_and_grad(x)
    return float(val[0]) if x.ndim == 1 else val


def eval_gradG(field: SingularField, x):
    x = np.asarray(x, dtype=float)
    _, grad = field.value_and_grad(x)
    return grad[0] if x.ndim == 1 else grad


# --------------------------------------------------------------------------
# cut-off functions
# --------------------------------------------------------------------------

# ln(1e16): beyond sqrt(2 ln 1e16) c the Gaussian is below double rounding of 1
_GAUSS_TAIL = np.sqrt(2.0 * np.log(1e16))


@dataclass(frozen=True)
class CutoffFunction:
    """``unity``, ``gaussian`` (param ``c``) or ``plateau`` (``R_eps`` < ``R_c``)."""

    kind: str = "unity"
    c: float | None = None
    R_eps: float | None = None
    R_c: float | None = None

    def __post_init__(self):
        if self.kind == "gaussian":
            if not (self.c and self.c > 0):
                raise ValueError("gaussian cut-off needs c > 0")
        elif self.kind == "plateau":
            if not (self.R_eps is not None and self.R_c is not None and 0 <= self.R_eps < self.R_c):
                raise ValueError("plateau cut-off needs 0 <= R_eps < R_c")
        elif self.kind not in ("unity", "zero"):
            raise ValueError(f"unknown cut-off kind {self.kind!r}")

    @property
    def support_radius(self) -> float:
        if self.kind == "gaussian":
            return _GAUSS_TAIL * self.c
        if self.kind == "plateau":
            return self.R_c
        if self.kind == "zero":
            return 0.0
        return np.inf

    def value_and_grad(self, x, seg: WellSegment):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(x)
        if self.kind == "unity":
            return np.ones(n), np.zeros((n, 3))
        if self.kind == "zero":
            return np.zeros(n), np.zeros((n, 3))
        off = _closest_offset(x, seg)
        r = np.linalg.norm(off, axis=1)
        if self.kind == "gaussian":
            val = np.exp(-0.5 * (r / self.c) ** 2)
            return val, -val[:, None] * off / self.c**2
        width = self.R_c - self.R_eps
        t = np.clip((r - self.R_eps) / width, 0.0, 1.0)
        val = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
        dval = -30.0 * t * t * (1.0 - t) ** 2 / width
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, off / r[:, None], 0.0)
        return val, dval[:, None] * unit

    def __call__(self, x, seg: WellSegment):
        return self.value_and_grad(x, seg)[0]


def default_plateau(seg: WellSegment, box) -> CutoffFunction:
    """Plateau cut-off with R_eps = 2R and R_c = min(width/4, dist(Lambda, dOmega))/2."""
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    width = float(np.min(hi - lo))
    ends = np.vstack([seg.a, seg.b])
    wall = float(np.min(np.minimum(ends - lo, hi - ends)))
    R_c = 0.5 * min(0.25 * width, wall)
    R_eps = 2.0 * seg.R
    if R_eps >= R_c:
        raise ValueError(f"well radius {seg.R} too large for a plateau cut-off inside the box")
    return CutoffFunction("plateau", R_eps=R_eps, R_c=R_c)


# --------------------------------------------------------------------------
# extension operators
# --------------------------------------------------------------------------

def ramp_arclength(s, L: float, ramp: float | None):
    """Arclength bent beyond [0, L] by a C1 quadratic ramp of width ``ramp * L``.

    Returns the bent value and its derivative. ``ramp=None`` is the identity,
    ``ramp=0`` a hard clip.
    """
    s = np.asarray(s, dtype=float)
    if ramp is None:
        return s.copy(), np.ones_like(s)
    d = ramp * L
    lo = s < 0.0
    hi = s > L
    if d <= 0:
        return np.clip(s, 0.0, L), np.where(lo | hi, 0.0, 1.0)
    st = s.copy()
    ds = np.ones_like(s)
    m = lo & (s > -d)
    st[m] = s[m] + s[m] ** 2 / (2 * d)
    ds[m] = 1.0 + s[m] / d
    m = lo & (s <= -d)
    st[m], ds[m] = -0.5 * d, 0.0
    u = s - L
    m = hi & (u < d)
    st[m] = s[m] - u[m] ** 2 / (2 * d)
    ds[m] = 1.0 - u[m] / d
    m = hi & (u >= d)
    st[m], ds[m] = L + 0.5 * d, 0.0
    return st, ds


@dataclass(eq=False)
class ExtensionOperator:
    """Lift 1D nodal data on a line mesh to a field on all of R^3.

    The field is constant on planes normal to the centreline. ``axial`` uses
    the P1 interpolant in arclength, ``rbf`` the cubic polyharmonic spline
    with a linear tail. Beyond each end the arclength is bent with a C1
    ramp of width ``ramp * L`` and then frozen; ``ramp=None`` extrapolates
    the 1D interpolant instead.
    """

    mesh: LineMesh1D
    kind: str = "axial"
    ramp: float | None = 0.05
    _coef: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("axial", "rbf"):
            raise ValueError(f"unknown extension kind {self.kind!r}")
        if self.kind == "rbf":
            s = self.mesh.arc_coords
            if len(np.unique(s)) != len(s):
                raise ValueError("duplicate interpolation nodes make the RBF system singular")
            n = len(s)
            K = np.zeros((n + 2, n + 2))
            K[:n, :n] = np.abs(s[:, None] - s[None, :]) ** 3
            K[:n, n] = K[n, :n] = 1.0
            K[:n, n + 1] = K[n + 1, :n] = s
            rhs = np.zeros((n + 2, n))
            rhs[:n] = np.eye(n)
            try:
                self._coef = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError as exc:
                raise ValueError(f"RBF interpolation system is singular: {exc}") from exc

    @property
    def segment(self) -> WellSegment:
        return self.mesh.segment

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_vertices

    def smooth_arclength(self, x):
        """Bent arclength and its derivative with respect to the raw projection."""
        s = self.segment.arclength(np.atleast_2d(x))
        return ramp_arclength(s, self.segment.L, self.ramp)

    def basis_1d(self, s):
        """Cardinal functions of the nodes and their s-derivatives at ``s``."""
        s = np.asarray(s, dtype=float)
        nodes = self.mesh.arc_coords
        n = len(nodes)
        if self.kind == "rbf":
            diff = s[:, None] - nodes[None, :]
            row = np.concatenate([np.abs(diff) ** 3, np.ones((len(s), 1)), s[:, None]], axis=1)
            drow = np.concatenate([3.0 * diff * np.abs(diff), np.zeros((len(s), 1)), np.ones((len(s), 1))], axis=1)
            return row @ self._coef, drow @ self._coef
        j = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, n - 2)
        h = nodes[j + 1] - nodes[j]
        t = (s - nodes[j]) / h
        vals = np.zeros((len(s), n))
        ders = np.zeros((len(s), n))
        rows = np.arange(len(s))
        vals[rows, j] = 1.0 - t
        vals[rows, j + 1] = t
        ders[rows, j] = -1.0 / h
        ders[rows, j + 1] = 1.0 / h
        return vals, ders

    def basis(self, x):
        """Values (P, N) and gradients (P, N, 3) of the extended cardinal functions."""
        st, ds = self.smooth_arclength(x)
        vals, ders = self.basis_1d(st)
        grads = (ders * ds[:, None])[:, :, None] * self.segment.tau[None, None, :]
        return vals, grads

    def extend(self, f_nodal, x):
        vals, _ = self.basis(x)
        return vals @ np.asarray(f_nodal, dtype=float)

    def extend_grad(self, f_nodal, x):
        _, grads = self.basis(x)
        return np.einsum("pnk,n->pk", grads, np.asarray(f_nodal, dtype=float))


def extend(op: ExtensionOperator, f_nodal, x):
    x = np.asarray(x, dtype=float)
    val = op.extend(f_nodal, np.atleast_2d(x))
    return float(val[0]) if x.ndim == 1 else val


# --------------------------------------------------------------------------
# borehole averages and corrected coefficients
# --------------------------------------------------------------------------

def circle_points(seg: WellSegment, s, n_theta: int = 16, radius: float | None = None):
    """Points on the borehole circle(s) at arclength(s) ``s``; shape (len(s), n_theta, 3)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    R = seg.R if radius is None else radius
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    e1, e2 = seg.normal_frame()
    ring = R * (np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2)
    return seg.point_at(s)[:, None, :] + ring[None, :, :]


def circle_average(f: Callable, seg: WellSegment, s, n_theta: int = 16, radius: float | None = None):
    """Periodic trapezoid average of ``f`` over the borehole circle at ``s``."""
    scalar = np.ndim(s) == 0
    pts = circle_points(seg, s, n_theta, radius)
    vals = np.asarray(f(pts.reshape(-1, 3)), dtype=float).reshape(pts.shape[:2])
    avg = vals.mean(axis=1)
    return float(avg[0]) if scalar else avg


def averaged_potential(terms: Sequence, seg: WellSegment, s, n_theta: int = 16):
    """Sum over wells of the borehole average of G_w * Psi_w on ``seg`` at ``s``."""
    total = 0.0
    for G, psi in terms:
        if psi is None:
            total = total + circle_average(G, seg, s, n_theta)
        else:
            total = total + circle_average(lambda p, G=G, psi=psi: G(p) * psi(p, G.well), seg, s, n_theta)
    return total


def correction_factor(beta, gbar):
    """1 / (1 + beta * Gbar); raises if the denominator is not positive."""
    denom = 1.0 + np.asarray(beta, dtype=float) * np.asarray(gbar, dtype=float)
    if np.any(denom <= 0):
        raise DegenerateCoefficientError(
            f"1 + beta*Gbar = {np.min(denom):.3g} <= 0: inflow coefficient and well radius are incompatible")
    return 1.0 / denom


def beta_star(beta, terms: Sequence, seg: WellSegment, s, n_theta: int = 16):
    """beta / (1 + beta * sum_w avg(G_w Psi_w)) at arclength ``s`` of ``seg``.

    ``beta`` is a callable of ``s`` or an array of its values; ``terms`` holds
    ``(SingularField, CutoffFunction or None)`` pairs, one per well.
    """
    b = np.asarray(beta(s) if callable(beta) else beta, dtype=float)
    gbar = averaged_potential(terms, seg, s, n_theta)
    out = b * correction_factor(b, gbar)
    return float(out) if np.ndim(out) == 0 else out


def beta_hat_star(beta_star_value, R: float):
    """Corrected 1D coefficient beta* / (pi R^2)."""
    return np.asarray(beta_star_value) / (np.pi * R * R)
