"""Score vectors, difference vectors, and design systems for the asymmetry families.

Column blocks of the full design:

* ``alpha``: first-order score differences, one per adjacent variable pair
* ``beta_diag``: squared-score differences
* ``beta_offdiag``: consecutive differences of pairwise score products along
  the lexicographic chain of unordered variable pairs
* ``gamma``: 0/1 indicators of the symmetric classes

The extended-linear family drops the off-diagonal block and the linear family
additionally drops the diagonal block; the dropped effects are constant on
orbits and get absorbed by the gamma block.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tables import TableShape, orbit_structure

GS = "gs"
ELS = "els"
LS = "ls"
ASYMMETRY_FAMILIES = (GS, ELS, LS)


class ConfigurationError(ValueError):
    """Design construction failed, e.g. rank deficiency from degenerate scores."""


def score_vector(shape: TableShape, h: int) -> np.ndarray:
    """Scores of variable h across all cells, 1_{r^{h-1}} (x) u (x) 1_{r^{T-h}}."""
    if not 1 <= h <= shape.T:
        raise ValueError(f"variable index {h} outside 1..{shape.T}")
    u = np.asarray(shape.scores)
    left = np.ones(shape.r ** (h - 1))
    right = np.ones(shape.r ** (shape.T - h))
    return np.kron(np.kron(left, u), right)


def delta1(shape: TableShape, h: int) -> np.ndarray:
    """First-order difference s_h - s_{h+1}, h in 1..T-1."""
    if not 1 <= h <= shape.T - 1:
        raise ValueError(f"difference index {h} outside 1..{shape.T - 1}")
    return score_vector(shape, h) - score_vector(shape, h + 1)


def delta2(shape: TableShape, h: int) -> np.ndarray:
    """Squared-score difference s_h*s_h - s_{h+1}*s_{h+1}."""
    if not 1 <= h <= shape.T - 1:
        raise ValueError(f"difference index {h} outside 1..{shape.T - 1}")
    return score_vector(shape, h) ** 2 - score_vector(shape, h + 1) ** 2


def pair_chain(T: int) -> list[tuple[int, int]]:
    """All unordered variable pairs in lexicographic order, ending at (T-1, T)."""
    return [(s, t) for s in range(1, T) for t in range(s + 1, T + 1)]


def n_offdiag(T: int) -> int:
    """Number of off-diagonal difference columns, T(T-1)/2 - 1."""
    return T * (T - 1) // 2 - 1


def delta_v2(shape: TableShape, k: int) -> np.ndarray:
    """k-th interaction difference along the pair chain, k in 1..T(T-1)/2 - 1."""
    chain = pair_chain(shape.T)
    if not 1 <= k <= len(chain) - 1:
        raise ValueError(f"pair index {k} outside 1..{len(chain) - 1}")
    s, t = chain[k - 1]
    s_next, t_next = chain[k]
    return score_vector(shape, s) * score_vector(shape, t) - score_vector(
        shape, s_next
    ) * score_vector(shape, t_next)


def symmetry_indicator(shape: TableShape) -> np.ndarray:
    """0/1 matrix mapping each cell to its symmetric class (rows sum to one)."""
    struct = orbit_structure(shape)
    xs = np.zeros((shape.n_cells, len(struct.members)))
    xs[np.arange(shape.n_cells), struct.orbit_id] = 1.0
    return xs


def moment_matrix(shape: TableShape) -> np.ndarray:
    """Rows are all difference vectors; the joint second-moment constraints."""
    rows = [delta1(shape, h) for h in range(1, shape.T)]
    rows += [delta2(shape, h) for h in range(1, shape.T)]
    rows += [delta_v2(shape, k) for k in range(1, n_offdiag(shape.T) + 1)]
    return np.array(rows)


def family_d2(family: str, T: int) -> int:
    """Number of non-gamma design columns per family."""
    if family == GS:
        return (T * T + 3 * T - 6) // 2
    if family == ELS:
        return 2 * T - 2
    if family == LS:
        return T - 1
    raise ValueError(f"unknown asymmetry family {family!r}")


@dataclass(frozen=True)
class DesignSystem:
    """Design matrix, symmetry indicator and orthogonal complement for a family."""

    shape: TableShape
    family: str
    X: np.ndarray
    Xs: np.ndarray
    U: np.ndarray
    v2_chain: tuple[tuple[int, int], ...]
    column_layout: dict[str, slice]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    @property
    def d1(self) -> int:
        return self.U.shape[1]

    @property
    def d2(self) -> int:
        return self.n_columns - self.Xs.shape[1]


def _null_space_basis(X: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the column space."""
    q, s, _ = np.linalg.svd(X, full_matrices=True)
    tol = max(X.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return q[:, rank:]


@lru_cache(maxsize=None)
def _design_matrix(r: int, T: int, scores: tuple, family: str) -> DesignSystem:
    shape = TableShape(r, T, scores)
    blocks: list[tuple[str, np.ndarray]] = []
    blocks.append(("alpha", np.column_stack([delta1(shape, h) for h in range(1, T)])))
    if family in (GS, ELS):
        blocks.append(
            ("beta_diag", np.column_stack([delta2(shape, h) for h in range(1, T)]))
        )
    if family == GS and n_offdiag(T) > 0:
        blocks.append(
            (
                "beta_offdiag",
                np.column_stack(
                    [delta_v2(shape, k) for k in range(1, n_offdiag(T) + 1)]
                ),
            )
        )
    xs = symmetry_indicator(shape)
    blocks.append(("gamma", xs))

    layout: dict[str, slice] = {}
    start = 0
    for name, block in blocks:
        layout[name] = slice(start, start + block.shape[1])
        start += block.shape[1]
    X = np.hstack([block for _, block in blocks])

    # Full column rank is required; report the first offending block otherwise.
    expected = 0
    for name, block in blocks:
        expected += block.shape[1]
        partial = X[:, :expected]
        if np.linalg.matrix_rank(partial) < expected:
            raise ConfigurationError(
                f"design for family {family!r} at r={r}, T={T} is rank deficient "
                f"starting at the {name!r} block (degenerate scores?)"
            )

    U = _null_space_basis(X)
    return DesignSystem(
        shape=shape,
        family=family,
        X=X,
        Xs=xs,
        U=U,
        v2_chain=tuple(pair_chain(T)),
        column_layout=layout,
    )


def design_matrix(shape: TableShape, family: str) -> DesignSystem:
    if family not in ASYMMETRY_FAMILIES:
        raise ValueError(f"unknown asymmetry family {family!r}")
    return _design_matrix(shape.r, shape.T, shape.scores, family)


def _telescope(prime: np.ndarray, length: int) -> np.ndarray:
    """Coefficients on raw terms from coefficients on consecutive differences.

    With values v_1..v_L and parameters on v_k - v_{k+1} for k < L, the raw
    coefficient of v_k is p_k - p_{k-1} (p_0 = 0) and of v_L is -p_{L-1}.
    """
    out = np.zeros(length)
    out[: len(prime)] = prime
    out[1 : len(prime) + 1] -= prime
    return out


def recover_coefficients(
    ds: DesignSystem, theta_prime: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Map difference-basis parameters to the (alpha, B) of the model form.

    Normalized so alpha_T = B_TT = B_{(T-1)T} = 0; the discarded constants are
    symmetric functions of the cell scores and fold into the per-orbit terms.
    The off-diagonal entries of B are half the per-pair coefficients, so that
    u'Bu reproduces each unordered pair product exactly once.
    """
    theta_prime = np.asarray(theta_prime, dtype=float)
    if theta_prime.shape != (ds.n_columns,):
        raise ValueError(
            f"expected {ds.n_columns} parameters, got {theta_prime.shape}"
        )
    T = ds.shape.T
    alpha = _telescope(theta_prime[ds.column_layout["alpha"]], T)
    alpha -= alpha[-1]

    B = np.zeros((T, T))
    if "beta_diag" in ds.column_layout:
        diag = _telescope(theta_prime[ds.column_layout["beta_diag"]], T)
        diag -= diag[-1]
        np.fill_diagonal(B, diag)
    if "beta_offdiag" in ds.column_layout:
        chain = ds.v2_chain
        pair_coef = _telescope(
            theta_prime[ds.column_layout["beta_offdiag"]], len(chain)
        )
        pair_coef -= pair_coef[-1]
        for (s, t), b in zip(chain, pair_coef):
            B[s - 1, t - 1] = B[t - 1, s - 1] = 0.5 * b
    return alpha, B


def cell_predictor(shape: TableShape, alpha: np.ndarray, B: np.ndarray) -> np.ndarray:
    """u_i' alpha + u_i' B u_i evaluated at every cell."""
    svecs = np.column_stack([score_vector(shape, h) for h in range(1, shape.T + 1)])
    return svecs @ alpha + np.einsum("ns,st,nt->n", svecs, B, svecs)
