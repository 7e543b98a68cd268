"""Monolithic sparse solves of assembled block systems."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import linalg as spla

from .coupling import BlockSystem

log = logging.getLogger(__name__)


class FactorizationError(RuntimeError):
    pass


class NoConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct-LU"  # or "gmres-ilu"
    rel_tol: float = 1e-10
    max_iter: int = 2000
    restart: int = 200
    direct_tol: float = 1e-10

    def __post_init__(self):
        if self.method not in ("direct-LU", "gmres-ilu"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def relative_residual(K, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - K @ x)
    return r / nb if nb > 0 else r


def solve(system: BlockSystem, config: SolverConfig | None = None):
    """Return ``(u3, u1)``: reservoir and well coefficient vectors."""
    config = SolverConfig() if config is None else config
    K = system.matrix().tocsc()
    b = system.rhs
    if config.method == "direct-LU":
        try:
            lu = spla.splu(K)
        except RuntimeError as exc:
            raise FactorizationError(f"sparse LU failed: {exc}") from exc
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise FactorizationError("sparse LU produced non-finite values (singular matrix)")
        res = relative_residual(K, x, b)
        if res > config.direct_tol:
            raise FactorizationError(f"direct solve residual {res:.3e} exceeds {config.direct_tol:.1e}")
    else:
        try:
            ilu = spla.spilu(K, drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            raise FactorizationError(f"incomplete LU failed: {exc}") from exc
        M = spla.LinearOperator(K.shape, ilu.solve)
        x, info = None, 0
        # GMRES stops on the preconditioned residual; restart from the iterate
        # a few times until the true residual meets the tolerance
        for _ in range(4):
            x, info = spla.gmres(K, b, x0=x, M=M, rtol=config.rel_tol * 0.1, atol=0.0,
                                 restart=config.restart, maxiter=config.max_iter)
            res = relative_residual(K, x, b)
            if info != 0 or res <= config.rel_tol:
                break
        if info != 0 or res > config.rel_tol:
            raise NoConvergenceError(f"GMRES stopped with info={info}, relative residual {res:.3e}", res)
    log.debug("%s solve: %d dofs, relative residual %.2e", config.method, K.shape[0], res)
    return x[:system.n3], x[system.n3:]
