"""Marginal moments under the score transform and the moment-equality constraints.

The four symmetric hypotheses compare marginal summaries across variables:
means (ME), variances (VE), correlations (CE), and the joint second-moment
version (ME2) whose constraint rows are exactly the design difference vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import design
from .tables import ProbTable, TableShape

ME = "me"
VE = "ve"
CE = "ce"
ME2 = "me2"
MOMENT_FAMILIES = (ME2, ME, VE, CE)


class DegenerateMarginalError(ValueError):
    """A marginal has zero variance, so correlations are undefined."""


@dataclass(frozen=True)
class MomentSet:
    mu: np.ndarray  # marginal means
    sigma2: np.ndarray  # marginal variances
    rho: np.ndarray  # correlation matrix
    mixed: np.ndarray  # raw second moments E[g_s g_t]


def _score_columns(shape: TableShape) -> np.ndarray:
    return np.column_stack(
        [design.score_vector(shape, h) for h in range(1, shape.T + 1)]
    )


def moments(p: ProbTable) -> MomentSet:
    """Means, variances, correlations, and raw mixed moments of the scores."""
    s = _score_columns(p.shape)
    mu = s.T @ p.probs
    mixed = s.T @ (s * p.probs[:, None])
    cov = mixed - np.outer(mu, mu)
    sigma2 = np.diag(cov).copy()
    if np.any(sigma2 <= 0):
        raise DegenerateMarginalError(
            f"marginal variances {sigma2} include a non-positive value"
        )
    sd = np.sqrt(sigma2)
    rho = cov / np.outer(sd, sd)
    np.fill_diagonal(rho, 1.0)
    return MomentSet(mu=mu, sigma2=sigma2, rho=rho, mixed=mixed)


def constraint_dimension(model: str, T: int) -> int:
    if model == ME:
        return T - 1
    if model == VE:
        return T - 1
    if model == CE:
        return (T * T - T - 2) // 2
    if model == ME2:
        return design.family_d2(design.GS, T)
    raise ValueError(f"unknown moment model {model!r}")


def constraint_vector(model: str, p: ProbTable) -> np.ndarray:
    """Constraint residuals; all zero exactly when the hypothesis holds."""
    shape = p.shape
    if model == ME:
        rows = np.array([design.delta1(shape, h) for h in range(1, shape.T)])
        return rows @ p.probs
    if model == ME2:
        return design.moment_matrix(shape) @ p.probs
    m = moments(p)
    if model == VE:
        return m.sigma2[:-1] - m.sigma2[1:]
    if model == CE:
        chain = design.pair_chain(shape.T)
        rhos = np.array([m.rho[s - 1, t - 1] for s, t in chain])
        return rhos[:-1] - rhos[1:]
    raise ValueError(f"unknown moment model {model!r}")


def constraint_jacobian(model: str, p: ProbTable) -> np.ndarray:
    """Analytic Jacobian of :func:`constraint_vector` with respect to the cells."""
    shape = p.shape
    if model == ME:
        return np.array([design.delta1(shape, h) for h in range(1, shape.T)])
    if model == ME2:
        return design.moment_matrix(shape)
    s = _score_columns(shape)
    m = moments(p)
    if model == VE:
        # d sigma_h^2 / d pi = s_h^2 - 2 mu_h s_h
        grads = s**2 - 2.0 * m.mu[None, :] * s
        return (grads[:, :-1] - grads[:, 1:]).T
    if model == CE:
        sd = np.sqrt(m.sigma2)
        grad_sigma2 = s**2 - 2.0 * m.mu[None, :] * s
        chain = design.pair_chain(shape.T)
        rho_grads = []
        for a, b in chain:
            i, j = a - 1, b - 1
            grad_cov = s[:, i] * s[:, j] - m.mu[j] * s[:, i] - m.mu[i] * s[:, j]
            rho = m.rho[i, j]
            grad = grad_cov / (sd[i] * sd[j]) - 0.5 * rho * (
                grad_sigma2[:, i] / m.sigma2[i] + grad_sigma2[:, j] / m.sigma2[j]
            )
            rho_grads.append(grad)
        rows = np.array(rho_grads)
        return rows[:-1] - rows[1:]
    raise ValueError(f"unknown moment model {model!r}")
