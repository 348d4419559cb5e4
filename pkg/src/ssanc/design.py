"""Time-domain control-filter designs.

All three designs minimize a quadratic in the stacked filter ``w``:

* conventional ANC: ``E{e^2} + beta ||w||^2``
* hard-constrained: the same cost subject to ``H (q + G w) = target``
* soft-constrained: ``E{e^2} + beta ||w||^2 + mu ||H (q + G w) - target||^2``

with ``E{e^2} = (q + G w)^T Phi_xx (q + G w)``. :class:`TimeDomainProblem`
assembles the operator products once so that sweeping ``mu`` only costs one
Cholesky factorization per value.

Note that the hard design with regularization ``rho > 0`` is algebraically
identical to the soft design with ``mu = 1 / rho`` (Woodbury identity); only
``rho = 0`` enforces the constraint exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefiniteError
from .sigcore import (
    BlockConvOperator,
    Covariance,
    OperatorKind,
    SelectionVector,
    SpdSolver,
    lambda_max,
)

__all__ = [
    "ControlFilter",
    "DesignParams",
    "CostBreakdown",
    "TimeDomainProblem",
    "design_anc_time",
    "design_hard_time",
    "design_soft_time",
    "cost_breakdown",
    "compute_beta",
    "compute_rho",
]

DEFAULT_REG_SCALE = 4e5


@dataclass(frozen=True)
class ControlFilter:
    """Causal multichannel FIR, ``taps`` of shape ``(K+1, L_w)``."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64, copy=True)
        if taps.ndim != 2:
            raise ValueError("control filter taps must be (channels, L_w)")
        if not np.all(np.isfinite(taps)):
            raise ValueError("control filter contains NaN or Inf")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @classmethod
    def from_stacked(cls, w: np.ndarray, n_channels: int) -> "ControlFilter":
        return cls(np.asarray(w).reshape(n_channels, -1))

    @classmethod
    def zeros(cls, n_channels: int, L_w: int) -> "ControlFilter":
        return cls(np.zeros((n_channels, L_w)))

    @property
    def stacked(self) -> np.ndarray:
        return self.taps.reshape(-1)

    @property
    def n_channels(self) -> int:
        return self.taps.shape[0]

    @property
    def L_w(self) -> int:
        return self.taps.shape[1]


@dataclass(frozen=True)
class DesignParams:
    L_w: int
    L_g: int
    L_a: int
    L_h: int
    delta: int
    beta_scale: float = DEFAULT_REG_SCALE
    rho_scale: float = DEFAULT_REG_SCALE
    mu: float = 0.0

    def __post_init__(self):
        if min(self.L_w, self.L_g, self.L_h) < 1 or self.L_a < 0:
            raise ValueError("filter lengths must be positive (L_a may be 0)")
        if self.delta < 0:
            raise ValueError("delay must be non-negative")
        if self.beta_scale <= 0 or self.rho_scale <= 0:
            raise ValueError("regularization scales must be positive")
        if not self.mu >= 0:
            raise ValueError("mu must be non-negative (math.inf selects the hard design)")

    @property
    def L(self) -> int:
        return self.L_g + self.L_w - 1


@dataclass(frozen=True)
class CostBreakdown:
    error_power: float
    weight_norm: float
    distortion: float

    def total(self, beta: float, mu: float = 0.0) -> float:
        return self.error_power + beta * self.weight_norm + mu * self.distortion


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _phi_matrix(phi) -> np.ndarray:
    return phi.matrix if isinstance(phi, Covariance) else np.asarray(phi, dtype=np.float64)


class TimeDomainProblem:
    """Cached products for one (Phi_xx, G, H, target) instance.

    ``h_op`` and ``sel`` may be omitted when only the conventional ANC
    design is needed. ``beta`` defaults to ``lambda_max(G^T Phi G) /
    beta_scale``; ``rho`` (used by :meth:`hard`) defaults to
    ``lambda_max(HG Phi_rr^-1 G^T H^T) / rho_scale``.
    """

    def __init__(
        self,
        phi,
        g_op: BlockConvOperator,
        h_op: BlockConvOperator | None = None,
        sel: SelectionVector | None = None,
        beta: float | None = None,
        rho: float | None = None,
        beta_scale: float = DEFAULT_REG_SCALE,
        rho_scale: float = DEFAULT_REG_SCALE,
    ):
        if g_op.kind is not OperatorKind.SECONDARY_PATH:
            raise ValueError("g_op must be a secondary-path operator")
        self.phi = _phi_matrix(phi)
        self.g_op = g_op
        self.h_op = h_op
        self.C = g_op.n_blocks
        self.L = g_op.block_out
        self.L_w = g_op.block_in
        if self.phi.shape != (self.C * self.L,) * 2:
            raise ValueError(f"Phi_xx must be {self.C * self.L} square, got {self.phi.shape}")
        if sel is None:
            q = np.zeros(self.C * self.L)
            q[(self.C - 1) * self.L] = 1.0
            self.q, self.target = q, None
        else:
            self.q, self.target = np.asarray(sel.q), np.asarray(sel.target)
            if self.q.shape != (self.C * self.L,):
                raise ValueError("selection vector does not match the input dimension")
        if h_op is not None:
            if h_op.kind is not OperatorKind.CONSTRAINT or h_op.block_in != self.L or h_op.n_blocks != self.C:
                raise ValueError("h_op does not match G's channel count and convolution length")
            if self.target is None or self.target.shape[0] != h_op.shape[0]:
                raise ValueError("constraint target missing or of the wrong length")

        g_block = scipy.linalg.convolution_matrix(g_op.blocks[0].taps, self.L_w, mode="full")
        C, L, Lw = self.C, self.L, self.L_w
        # Phi @ G and G^T (Phi G), exploiting the block-diagonal G
        phi_g = np.matmul(self.phi.reshape(C * L, C, L), g_block).reshape(C * L, C * Lw)
        self.gtpg = _sym(np.matmul(g_block.T, phi_g.reshape(C, L, C * Lw)).reshape(C * Lw, C * Lw))
        self.phi_vec = g_op.rmatvec(self.phi @ self.q)
        self._beta_scale = beta_scale
        self._rho_scale = rho_scale
        self.beta = float(beta) if beta is not None else compute_beta(self.gtpg, beta_scale)
        self.phi_rr = self.gtpg + self.beta * np.eye(C * Lw)
        self._rho = rho
        try:
            self.solver = SpdSolver(self.phi_rr)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(
                "G^T Phi G + beta I is not positive definite; increase beta"
            ) from exc

    # -- cached constraint products --------------------------------------
    def _need_constraint(self):
        if self.h_op is None:
            raise ValueError("this design needs the constraint operator H and target")

    @cached_property
    def hg(self) -> np.ndarray:
        """Dense ``H G``; block ``k`` is the convolution matrix of ``h_k * g``."""
        self._need_constraint()
        g = self.g_op.blocks[0].taps
        return np.hstack(
            [
                scipy.linalg.convolution_matrix(np.convolve(h.taps, g), self.L_w, mode="full")
                for h in self.h_op.blocks
            ]
        )

    @cached_property
    def hq(self) -> np.ndarray:
        self._need_constraint()
        return self.h_op.matvec(self.q)

    @cached_property
    def residual_target(self) -> np.ndarray:
        """``target - H q``."""
        return self.target - self.hq

    @cached_property
    def hg_gram(self) -> np.ndarray:
        return _sym(self.hg.T @ self.hg)

    @cached_property
    def hg_rhs(self) -> np.ndarray:
        return self.hg.T @ self.residual_target

    @cached_property
    def _inv_gt_ht(self) -> np.ndarray:
        """``Phi_rr^-1 G^T H^T``."""
        return self.solver.solve(self.hg.T)

    @cached_property
    def constraint_gram(self) -> np.ndarray:
        """``H G Phi_rr^-1 G^T H^T``."""
        return _sym(self.hg @ self._inv_gt_ht)

    @property
    def rho(self) -> float:
        if self._rho is None:
            self._rho = compute_rho(self.constraint_gram, self._rho_scale)
        return self._rho

    # -- designs -------------------------------------------------------------
    @cached_property
    def _anc_vec(self) -> np.ndarray:
        return -self.solver.solve(self.phi_vec)

    def anc(self) -> ControlFilter:
        return ControlFilter.from_stacked(self._anc_vec, self.C)

    def hard(self, rho: float | None = None) -> ControlFilter:
        self._need_constraint()
        rho = self.rho if rho is None else float(rho)
        if rho < 0:
            raise ValueError("rho must be non-negative")
        w0 = self._anc_vec
        inner = self.constraint_gram + rho * np.eye(self.constraint_gram.shape[0])
        try:
            lam = SpdSolver(inner).solve(self.residual_target - self.hg @ w0)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(
                "H G Phi_rr^-1 G^T H^T + rho I is not positive definite; increase rho "
                "(H G may not have full row rank)"
            ) from exc
        return ControlFilter.from_stacked(w0 + self._inv_gt_ht @ lam, self.C)

    def soft(self, mu: float) -> ControlFilter:
        mu = float(mu)
        if not mu >= 0:
            raise ValueError("mu must be non-negative")
        if math.isinf(mu):
            return self.hard()
        if mu == 0.0:
            return self.anc()
        self._need_constraint()
        a = self.phi_rr + mu * self.hg_gram
        rhs = self.phi_vec - mu * self.hg_rhs
        try:
            w = -SpdSolver(a).solve(rhs)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(
                f"Phi_rr + mu G^T H^T H G not positive definite at mu={mu:g}; increase beta"
            ) from exc
        return ControlFilter.from_stacked(w, self.C)

    # -- diagnostics ---------------------------------------------------------
    def cost(self, w: ControlFilter | np.ndarray) -> CostBreakdown:
        wv = np.asarray(getattr(w, "stacked", w), dtype=np.float64).reshape(-1)
        r = self.q + self.g_op.matvec(wv)
        dist = 0.0
        if self.h_op is not None:
            d = self.h_op.matvec(r) - self.target
            dist = float(d @ d)
        return CostBreakdown(float(r @ self.phi @ r), float(wv @ wv), dist)

    def objective(self, w, mu: float = 0.0) -> float:
        return self.cost(w).total(self.beta, mu)

    def constraint_residual(self, w) -> float:
        """``||H(q + G w) - target|| / ||target||``."""
        return math.sqrt(self.cost(w).distortion) / float(np.linalg.norm(self.target))


def compute_beta(gtpg: np.ndarray, scale: float = DEFAULT_REG_SCALE) -> float:
    """``lambda_max(G^T Phi_xx G) / scale``."""
    return lambda_max(gtpg) / scale


def compute_rho(constraint_gram: np.ndarray, scale: float = DEFAULT_REG_SCALE) -> float:
    """``lambda_max(H G Phi_rr^-1 G^T H^T) / scale``."""
    return lambda_max(constraint_gram) / scale


def design_anc_time(phi, g_op: BlockConvOperator, beta: float) -> ControlFilter:
    return TimeDomainProblem(phi, g_op, beta=beta).anc()


def design_hard_time(phi, g_op, h_op, sel, beta: float, rho: float) -> ControlFilter:
    return TimeDomainProblem(phi, g_op, h_op, sel, beta=beta, rho=rho).hard()


def design_soft_time(phi, g_op, h_op, sel, beta: float, mu: float, rho: float | None = None) -> ControlFilter:
    """Soft-constrained design; ``mu = math.inf`` returns the hard design with ``rho``."""
    return TimeDomainProblem(phi, g_op, h_op, sel, beta=beta, rho=rho).soft(mu)


def cost_breakdown(w, phi, g_op: BlockConvOperator, h_op=None, sel: SelectionVector | None = None) -> CostBreakdown:
    """The three addends of the soft-constrained cost, without weights."""
    wv = np.asarray(getattr(w, "stacked", w), dtype=np.float64).reshape(-1)
    if sel is None:
        q = np.zeros(g_op.shape[0])
        q[(g_op.n_blocks - 1) * g_op.block_out] = 1.0
    else:
        q = np.asarray(sel.q)
    r = q + g_op.matvec(wv)
    dist = 0.0
    if h_op is not None:
        d = h_op.matvec(r) - sel.target
        dist = float(d @ d)
    return CostBreakdown(float(r @ _phi_matrix(phi) @ r), float(wv @ wv), dist)
