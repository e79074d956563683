"""Constrained maximum-likelihood fitting of the symmetry and asymmetry models.

All non-closed-form models are fitted by the same routine: maximize the
multinomial log likelihood subject to smooth constraints h(pi) = 0.  The
iteration works on cell log scales (pi = softmax(xi)), which keeps every
iterate strictly positive and the unit-sum exact, and takes damped Newton
steps on the Lagrangian stationarity system with the multinomial information
as curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import design
from .moments import (
    CE,
    ME,
    ME2,
    MOMENT_FAMILIES,
    VE,
    constraint_dimension,
    constraint_jacobian as moment_jacobian,
    constraint_vector as moment_vector,
)
from .chi2 import chi2_sf
from .divergences import FFunction, HELLINGER, KL, PEARSON, POWER
from .tables import (
    CountTable,
    ProbTable,
    TableShape,
    all_cells,
    cell_index,
    conditional_within_orbit,
    orbit_structure,
    orbit_sums,
)
from .wald import f_jacobian

SYMMETRY = "s"
FAMILIES = (SYMMETRY,) + design.ASYMMETRY_FAMILIES + MOMENT_FAMILIES


class FitError(RuntimeError):
    """Fit did not converge; carries the residual trace for diagnosis."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []


class InvalidFitError(ValueError):
    """Fitted frequencies unusable for the requested statistic."""


@dataclass(frozen=True)
class ModelSpec:
    """A model family plus, for the asymmetry families, its f-function."""

    family: str
    ff: FFunction | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        if self.family in design.ASYMMETRY_FAMILIES and self.ff is None:
            raise ValueError(f"family {self.family!r} needs an f-function")

    @property
    def label(self) -> str:
        if self.ff is not None and self.family in design.ASYMMETRY_FAMILIES:
            return f"{self.family}[{self.ff.name}]"
        return self.family


@dataclass
class FitResult:
    spec: ModelSpec | None
    counts: CountTable
    pihat: ProbTable
    mhat: np.ndarray
    theta_prime: np.ndarray | None
    g2: float
    df: int
    pvalue: float
    converged: bool
    iterations: int
    constraint_residual: float

    @property
    def shape(self) -> TableShape:
        return self.counts.shape


@dataclass(frozen=True)
class Constraint:
    """Smooth constraint h(pi) = 0 with analytic Jacobian.

    ``hess``, when provided, maps (pi, weights) to the weighted sum of the
    constraint Hessians sum_k w_k d2 h_k / dpi dpi'; the fitter uses it for
    exact Lagrangian curvature and falls back to Gauss-Newton otherwise.
    """

    dim: int
    fun: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None


def _zero_hess(pi: np.ndarray, weights: np.ndarray) -> float:
    return 0.0


def symmetry_constraint(shape: TableShape) -> Constraint:
    """Pairwise probability equalities within each orbit (linear)."""
    struct = orbit_structure(shape)
    rows = []
    for members in struct.members:
        for other in members[1:]:
            row = np.zeros(shape.n_cells)
            row[members[0]] = 1.0
            row[other] = -1.0
            rows.append(row)
    A = np.array(rows) if rows else np.zeros((0, shape.n_cells))
    return Constraint(
        dim=A.shape[0], fun=lambda pi: A @ pi, jac=lambda pi: A, hess=_zero_hess
    )


def _link_curvature(
    shape: TableShape, ff: FFunction, pi: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """sum_i w_i d2 F(x_i) / dpi dpi' with x_i = |D(i)| pi_i / orbit sum.

    Orbit-local: x_i depends only on pi_i and its orbit's total.
    """
    struct = orbit_structure(shape)
    n_cells = shape.n_cells
    x = pi * struct.size_of_cell / orbit_sums(shape, pi)
    f2 = np.asarray(ff.f_second(x))
    f3 = np.asarray(ff.f_third(x))
    out = np.zeros((n_cells, n_cells))
    for members in struct.members:
        m = len(members)
        S = float(pi[members].sum())
        for i in members:
            # a = dx_i/dpi (supported on the orbit), and the rank-one + shared
            # parts of d2 x_i
            a = np.full(m, -len(members) * pi[i] / S**2)
            a[np.where(members == i)[0][0]] += m / S
            w = weights[i]
            block = w * f3[i] * np.outer(a, a)
            # d2 x_i / dpi_j dpi_k = -m [delta_ij + delta_ik] / S^2 + 2 m pi_i / S^3
            block += w * f2[i] * (2.0 * m * pi[i] / S**3)
            i_local = np.where(members == i)[0][0]
            block[i_local, :] -= w * f2[i] * m / S**2
            block[:, i_local] -= w * f2[i] * m / S**2
            out[np.ix_(members, members)] += block
    return out


def linkform_constraint(shape: TableShape, family: str, ff: FFunction) -> Constraint:
    """U' F(pi / pi_sym) = 0 for the requested asymmetry family."""
    ds = design.design_matrix(shape, family)
    struct = orbit_structure(shape)
    U = ds.U

    def fun(pi: np.ndarray) -> np.ndarray:
        # a numerically dead orbit yields NaN here, which the fitter's line
        # search treats as an out-of-domain probe
        with np.errstate(invalid="ignore", divide="ignore"):
            pi_s = orbit_sums(shape, pi) / struct.size_of_cell
            ratio = pi / pi_s
        if np.any(~np.isfinite(ratio)) or np.any(ratio <= 0):
            return np.full(U.shape[1], np.nan)
        return U.T @ np.asarray(ff.F(ratio))

    def jac(pi: np.ndarray) -> np.ndarray:
        return U.T @ f_jacobian(ProbTable(shape, pi / pi.sum()), ff)

    def hess(pi: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return _link_curvature(shape, ff, pi, U @ weights)

    return Constraint(dim=U.shape[1], fun=fun, jac=jac, hess=hess)


def moment_constraint(shape: TableShape, model: str) -> Constraint:
    def fun(pi: np.ndarray) -> np.ndarray:
        return moment_vector(model, ProbTable(shape, pi / pi.sum()))

    def jac(pi: np.ndarray) -> np.ndarray:
        return moment_jacobian(model, ProbTable(shape, pi / pi.sum()))

    hess = None
    if model in (ME, ME2):
        hess = _zero_hess
    elif model == VE:
        svecs = np.column_stack(
            [design.score_vector(shape, h) for h in range(1, shape.T + 1)]
        )
        # d2 (sigma_h^2 - sigma_{h+1}^2) = -2 s_h s_h' + 2 s_{h+1} s_{h+1}'
        def hess(pi: np.ndarray, weights: np.ndarray) -> np.ndarray:
            coef = np.zeros(shape.T)
            coef[:-1] -= 2.0 * weights
            coef[1:] += 2.0 * weights
            return (svecs * coef[None, :]) @ svecs.T

    elif model == CE:
        def hess(pi: np.ndarray, weights: np.ndarray) -> np.ndarray:
            return _correlation_curvature(shape, pi / pi.sum(), weights)

    return Constraint(
        dim=constraint_dimension(model, shape.T), fun=fun, jac=jac, hess=hess
    )


def _correlation_curvature(
    shape: TableShape, pi: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Weighted Hessian of the consecutive correlation differences.

    The chain differences telescope into per-pair weights, and each pairwise
    correlation rho = cov * (var_s var_t)^(-1/2) differentiates by the product
    and quotient rules into rank-one terms built from the score vectors.
    """
    svecs = np.column_stack(
        [design.score_vector(shape, h) for h in range(1, shape.T + 1)]
    )
    mu = svecs.T @ pi
    mixed = svecs.T @ (svecs * pi[:, None])
    var = np.diag(mixed) - mu**2
    chain = design.pair_chain(shape.T)
    pair_w = np.zeros(len(chain))
    pair_w[: len(weights)] += weights
    pair_w[1 : len(weights) + 1] -= weights

    out = np.zeros((shape.n_cells, shape.n_cells))
    for (s, t), w in zip(chain, pair_w):
        if w == 0.0:
            continue
        i, j = s - 1, t - 1
        si, sj = svecs[:, i], svecs[:, j]
        A, B = var[i], var[j]
        cov = mixed[i, j] - mu[i] * mu[j]
        g = (A * B) ** -0.5
        a = svecs[:, i] ** 2 - 2.0 * mu[i] * si  # grad of var_s
        b = svecs[:, j] ** 2 - 2.0 * mu[j] * sj
        c = si * sj - mu[j] * si - mu[i] * sj  # grad of cov
        PA = -2.0 * np.outer(si, si)
        PB = -2.0 * np.outer(sj, sj)
        PC = -(np.outer(si, sj) + np.outer(sj, si))
        dg = -(g / 2.0) * (a / A + b / B)
        u = a / A + b / B
        d2g = (g / 4.0) * np.outer(u, u) - (g / 2.0) * (
            PA / A - np.outer(a, a) / A**2 + PB / B - np.outer(b, b) / B**2
        )
        out += w * (
            g * PC + np.outer(c, dg) + np.outer(dg, c) + cov * d2g
        )
    return out


# --------------------------------------------------------------------------
# Generic constrained Newton fitter
# --------------------------------------------------------------------------


def _softmax(xi: np.ndarray) -> np.ndarray:
    z = np.exp(xi - xi.max())
    return z / z.sum()


def _loglik(nvec: np.ndarray, xi: np.ndarray) -> float:
    z = xi - xi.max()
    return float(nvec @ z - nvec.sum() * math.log(np.sum(np.exp(z))))


def _lagrangian_curvature(constraint, pi, mu, H, sig):
    """Hessian of mu'h(softmax(xi)) in log-scale coordinates.

    Splits into the softmax curvature (exact, family independent) and the
    pi-space constraint curvature sandwiched between Sigma factors (supplied
    by the constraint when it is cheap).  Returns None when the constraint
    offers no curvature, in which case the caller stays with Gauss-Newton.
    """
    if constraint.hess is None or not np.any(mu):
        return None
    with np.errstate(over="ignore", invalid="ignore"):
        gbar = H.T @ mu
        w = gbar * pi
        T = np.diag(w) - np.outer(w, pi) - np.outer(pi, w)
        T += (w.sum()) * np.outer(pi, pi) - float(gbar @ pi) * sig
        inner = constraint.hess(pi, mu)
        if np.ndim(inner) != 0:  # zero-curvature constraints return a scalar 0
            T += sig @ inner @ sig
    if not np.all(np.isfinite(T)):
        return None  # curvature useless at this iterate; Gauss-Newton instead
    return T


def _newton_loop(nvec, constraint, xi, max_iter, tol_constraint, tol_loglik):
    """One run of the damped Lagrangian Newton iteration.

    Returns (xi, converged, iterations, residual, trace).
    """
    n = float(nvec.sum())
    N = len(nvec)
    d = constraint.dim
    trace: list[tuple[int, float, float]] = []
    prev_ll = None
    nu = 1.0  # exact-penalty weight for the line search merit
    gauge = np.ones((N, N)) / N
    mu_carry = np.zeros(d)

    stationarity = math.inf
    for it in range(1, max_iter + 1):
        pi = _softmax(xi)
        h = np.atleast_1d(np.asarray(constraint.fun(pi), dtype=float))
        hmax = float(np.max(np.abs(h))) if d else 0.0
        ll = _loglik(nvec, xi)
        rel = math.inf if prev_ll is None else abs(ll - prev_ll) / (1.0 + abs(ll))
        trace.append((it, hmax, rel))
        # stationarity (from the previous multiplier estimate) guards against
        # declaring victory at a point where the line search merely stalled
        if hmax < tol_constraint and rel < tol_loglik and stationarity < 1e-7:
            return xi, True, it, hmax, trace
        prev_ll = ll

        H = np.atleast_2d(np.asarray(constraint.jac(pi), dtype=float))
        sig = np.diag(pi) - np.outer(pi, pi)
        C = H @ sig  # constraint Jacobian in log-scale coordinates
        grad = nvec - n * pi
        stationarity = (
            float(np.max(np.abs(grad + C.T @ mu_carry))) / (1.0 + n) if d else 0.0
        )
        # tiny ridge keeps the block solvable when boundary cells underflow
        A_gn = n * (sig + gauge + 1e-12 * np.eye(N))
        curvature = _lagrangian_curvature(constraint, pi, mu_carry, H, sig)

        def try_point(xi_new, nu):
            xi_new = xi_new - xi_new.max()
            try:
                h_new = np.atleast_1d(
                    np.asarray(constraint.fun(_softmax(xi_new)), dtype=float)
                )
            except (ValueError, FloatingPointError):
                return None
            if not np.all(np.isfinite(h_new)):
                return None
            return xi_new, h_new, -_loglik(nvec, xi_new) + nu * float(
                np.sum(np.abs(h_new))
            )

        accepted = None
        modes = ("exact", "gauss-newton") if curvature is not None else ("gauss-newton",)
        for mode in modes:
            A = A_gn - curvature if mode == "exact" else A_gn
            K = np.zeros((N + d, N + d))
            K[:N, :N] = A
            K[:N, N:] = -C.T
            K[N:, :N] = C
            rhs = np.concatenate([grad, -h])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError as exc:
                if mode == "exact":
                    continue
                raise FitError(
                    f"constraint Jacobian lost rank at iteration {it}", trace
                ) from exc
            if not np.all(np.isfinite(sol)):
                if mode == "exact":
                    continue
                raise FitError(f"non-finite Newton step at iteration {it}", trace)
            delta, mu = sol[:N], sol[N:]
            width = float(np.max(np.abs(delta)))
            if width > 8.0:  # keep the constraint linearization honest
                delta = delta * (8.0 / width)
            quad = float(delta @ (A @ delta))
            if quad <= 0:
                continue  # not a descent direction for the merit; other mode

            # track the current multipliers rather than ratcheting: one early
            # ill-scaled solve must not freeze the penalty at a huge value
            nu = max(2.0 * float(np.max(np.abs(mu), initial=0.0)) + 1.0, 0.1 * nu)
            merit0 = -ll + nu * float(np.sum(np.abs(h)))
            predicted = quad + 0.5 * nu * float(np.sum(np.abs(h)))
            step = 1.0
            for attempt in range(30):
                cand = try_point(xi + step * delta, nu)
                if cand is not None and cand[2] <= merit0 - 1e-4 * step * predicted:
                    accepted = (cand, mu)
                    break
                if attempt == 0 and cand is not None:
                    # Second-order correction: re-solve with the trial point's
                    # curvature-induced violation, defeating the Maratos
                    # rejection of full steps near the solution.
                    soc = np.linalg.solve(K, np.concatenate([np.zeros(N), -cand[1]]))
                    cand_soc = try_point(xi + delta + soc[:N], nu)
                    if cand_soc is not None and cand_soc[2] <= merit0 - 1e-4 * predicted:
                        accepted = (cand_soc, mu)
                        break
                step *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            return xi, False, it, hmax, trace
        xi = accepted[0][0]
        mu_carry = accepted[1]
    pi = _softmax(xi)
    h = np.atleast_1d(np.asarray(constraint.fun(pi), dtype=float))
    return xi, False, max_iter, float(np.max(np.abs(h), initial=0.0)), trace


def fit_hlp(
    counts: CountTable,
    constraint: Constraint,
    *,
    spec: ModelSpec | None = None,
    df: int | None = None,
    max_iter: int = 200,
    tol_constraint: float = 1e-9,
    tol_loglik: float = 1e-10,
) -> FitResult:
    """Maximum likelihood under h(pi) = 0 for a smooth constraint h."""
    shape = counts.shape
    nvec = counts.counts
    n = counts.n
    if constraint.dim == 0:
        pihat = counts.proportions()
        return _finish(spec, counts, pihat, None, df or 0, True, 0, 0.0)

    start = np.log(counts.smoothed_proportions().probs)
    attempts = (start, np.zeros(shape.n_cells))
    last_trace = None
    for attempt, xi0 in enumerate(attempts):
        xi, ok, iters, resid, trace = _newton_loop(
            nvec, constraint, xi0.copy(), max_iter, tol_constraint, tol_loglik
        )
        last_trace = trace
        if ok:
            pihat = ProbTable(shape, _softmax(xi))
            theta_prime = None
            if spec is not None and spec.family in design.ASYMMETRY_FAMILIES:
                theta_prime = _theta_prime(shape, spec, pihat)
            return _finish(
                spec, counts, pihat, theta_prime,
                constraint.dim if df is None else df, True, iters, resid,
            )
    raise FitError(
        f"no convergence within {max_iter} iterations (after uniform restart); "
        f"final constraint residual {resid:.3e}",
        last_trace,
    )


def _theta_prime(shape: TableShape, spec: ModelSpec, pihat: ProbTable) -> np.ndarray:
    """Difference-basis parameters recovered from the fitted link values."""
    ds = design.design_matrix(shape, spec.family)
    struct = orbit_structure(shape)
    pi_s = orbit_sums(shape, pihat.probs) / struct.size_of_cell
    zeta = np.asarray(spec.ff.F(pihat.probs / pi_s))
    theta, *_ = np.linalg.lstsq(ds.X, zeta, rcond=None)
    return theta


def _finish(spec, counts, pihat, theta_prime, df, converged, iterations, resid):
    mhat = counts.n * pihat.probs
    stat = g2(counts, mhat)
    return FitResult(
        spec=spec,
        counts=counts,
        pihat=pihat,
        mhat=mhat,
        theta_prime=theta_prime,
        g2=stat,
        df=df,
        pvalue=pvalue(stat, df),
        converged=converged,
        iterations=iterations,
        constraint_residual=resid,
    )


# --------------------------------------------------------------------------
# Family-level fitting
# --------------------------------------------------------------------------


def fit_symmetry(counts: CountTable) -> FitResult:
    """Closed-form MLE of complete symmetry: orbit averages of the counts."""
    shape = counts.shape
    struct = orbit_structure(shape)
    mhat = orbit_sums(shape, counts.counts) / struct.size_of_cell
    pihat = ProbTable(shape, mhat / counts.n)
    stat = g2(counts, mhat)
    df = degrees_of_freedom(SYMMETRY, shape)
    return FitResult(
        spec=ModelSpec(SYMMETRY),
        counts=counts,
        pihat=pihat,
        mhat=mhat,
        theta_prime=None,
        g2=stat,
        df=df,
        pvalue=pvalue(stat, df),
        converged=True,
        iterations=0,
        constraint_residual=0.0,
    )


def fit_model(counts: CountTable, spec: ModelSpec, **kwargs) -> FitResult:
    """Dispatch a family to its constraint formulation (or closed form)."""
    shape = counts.shape
    df = degrees_of_freedom(spec.family, shape)
    if spec.family == SYMMETRY:
        return fit_symmetry(counts)
    if spec.family in design.ASYMMETRY_FAMILIES:
        constraint = linkform_constraint(shape, spec.family, spec.ff)
    else:
        constraint = moment_constraint(shape, spec.family)
    return fit_hlp(counts, constraint, spec=spec, df=df, **kwargs)


def g2(counts: CountTable, mhat: np.ndarray) -> float:
    """Likelihood-ratio statistic 2 sum n log(n / mhat), with 0 log 0 = 0."""
    nvec = counts.counts
    mhat = np.asarray(mhat, dtype=float)
    pos = nvec > 0
    if np.any(mhat[pos] <= 0):
        raise InvalidFitError("fitted frequencies must be positive where counts are")
    value = float(2.0 * np.sum(nvec[pos] * np.log(nvec[pos] / mhat[pos])))
    if value < 0:
        if value < -1e-8:
            raise InvalidFitError(
                f"negative statistic {value}: fitted mass does not match the total"
            )
        value = 0.0  # roundoff at a perfect fit
    return value


def table1_df(family: str, r: int, T: int) -> int:
    """Degrees-of-freedom formulas by family (may be negative for tiny tables)."""
    L = math.comb(r + T - 1, T)
    cells = r**T
    if family == SYMMETRY:
        return cells - L
    if family == design.GS:
        return cells - L - (T * T + 3 * T - 6) // 2
    if family == design.ELS:
        return cells - L - 2 * T + 2
    if family == design.LS:
        return cells - L - T + 1
    if family == ME2:
        return (T * T + 3 * T - 6) // 2
    if family in (ME, VE):
        return T - 1
    if family == CE:
        return (T * T - T - 2) // 2
    raise ValueError(f"unknown model family {family!r}")


def degrees_of_freedom(family: str, shape: TableShape) -> int:
    df = table1_df(family, shape.r, shape.T)
    if df < 0:
        raise ValueError(
            f"family {family!r} has negative degrees of freedom ({df}) "
            f"for r={shape.r}, T={shape.T}"
        )
    return df


def pvalue(stat: float, df: int) -> float:
    """Upper chi-square tail probability of the statistic."""
    if stat < 0:
        raise ValueError(f"test statistic must be non-negative, got {stat}")
    return chi2_sf(stat, df)


# --------------------------------------------------------------------------
# Potential parameters and discrepancy measures
# --------------------------------------------------------------------------


def linear_coefficients(fit: FitResult) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (alpha, B) of a fitted asymmetry model."""
    if fit.spec is None or fit.spec.family not in design.ASYMMETRY_FAMILIES:
        raise ValueError("linear coefficients exist only for asymmetry-family fits")
    if fit.theta_prime is None:
        raise ValueError("fit carries no recovered parameters")
    ds = design.design_matrix(fit.shape, fit.spec.family)
    return design.recover_coefficients(ds, fit.theta_prime)


def potential_params(fit: FitResult) -> dict[tuple[int, ...], float]:
    """Per-cell potential parameters, plugging the MLEs into the family formula."""
    alpha, B = linear_coefficients(fit)
    shape = fit.shape
    pred = design.cell_predictor(shape, alpha, B)
    sizes = orbit_structure(shape).size_of_cell
    ff = fit.spec.ff
    if ff.family == KL or (ff.family == POWER and ff.lam == 0.0):
        theta = np.exp(pred)
    elif ff.family == PEARSON:
        theta = pred / sizes
    elif ff.family == HELLINGER:
        theta = -0.5 * np.sqrt(sizes) * pred
    else:
        theta = ff.lam * pred / sizes**ff.lam
    return {cell: float(theta[i]) for i, cell in enumerate(all_cells(shape))}


def discrepancy_measure(
    fit: FitResult,
    cell_a: tuple[int, ...],
    cell_b: tuple[int, ...],
    ff: FFunction | None = None,
) -> float:
    """Fitted conditional-probability comparison between two symmetric cells.

    Ratio for the KL link, difference for Pearson, inverse-square-root
    difference for Hellinger, power difference otherwise.  The benchmark under
    complete symmetry is 1 for the ratio and 0 for the differences.
    """
    if sorted(cell_a) != sorted(cell_b):
        raise ValueError(f"cells {cell_a} and {cell_b} are not in the same orbit")
    ff = ff or (fit.spec.ff if fit.spec else None)
    if ff is None:
        raise ValueError("no f-function available to pick the measure")
    cond = conditional_within_orbit(fit.pihat)
    ca = cond[cell_index(fit.shape, cell_a)]
    cb = cond[cell_index(fit.shape, cell_b)]
    if ff.family == KL or (ff.family == POWER and ff.lam == 0.0):
        return float(ca / cb)
    if ff.family == PEARSON:
        return float(ca - cb)
    if ff.family == HELLINGER:
        return float(ca**-0.5 - cb**-0.5)
    return float(ca**ff.lam - cb**ff.lam)
