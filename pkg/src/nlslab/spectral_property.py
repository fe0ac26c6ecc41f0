"""Linearized operators about the ground state and the coercivity check.

The two Schrodinger operators entering the coercivity form are

    A1 = -lap + (2/d)(4/d + 1) Q^{4/d - 1} (y . grad Q)
    A2 = -lap + (2/d)          Q^{4/d - 1} (y . grad Q)

and the classical linearizations are

    L+ = -lap + 1 - (4/d + 1) Q^{4/d},     L- = -lap + 1 - Q^{4/d}.

All four are discretized on the radial grid with the 6th-order Laplacian of
the requested angular sector (ell = 0 scalar, ell = 1 vector radial part).
Each operator exists in two exactly-form-equal realizations: the raw stencil,
which is pointwise consistent everywhere (used for the algebraic-identity
checks), and its symmetrization in the r^{d-1} inner product, for which
(Af, g) = (f, Ag) holds to roundoff on arbitrary vectors (used inside the
quadratic form and the eigensolvers).  The two share the same quadratic form
identically; for odd d they also agree pointwise to truncation error, while
for even d the |r|^{d-1} weight has a kink at the axis that makes the
symmetrized stencil inconsistent on the first few nodes, which is why the
pointwise path stays raw.

The coercivity check minimizes

    [ (A1 e1, e1) + (A2 e2, e2) ] / int( |grad e|^2 + |e|^2 exp(-kappa |y|) )

over the subspace orthogonal to the ground-state directions; the minimum is a
measured quantity reported together with the grid parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .spectral_core import (
    ComplexField,
    Grid,
    SolverError,
    as_spectral,
    inverse_transform,
)
from .ground_state import (
    EVEN,
    ODD,
    RadialGrid,
    RadialProfile,
    apply_scaling_generator,
    radial_inner,
    solve_ground_state,
)


def _symmetrize(mat, w):
    """(A + W^-1 A^T W)/2: exactly self-adjoint in the weight w, and
    consistent with A wherever A is consistent (the true operator is
    self-adjoint, so the skew part is pure truncation error)."""
    winv = sp.diags(1.0 / w)
    wdia = sp.diags(w)
    return 0.5 * (mat + winv @ (mat.T @ wdia))


class LinearizedOperators:
    """Matrix representations of L+, L-, A1, A2 on a radial grid."""

    def __init__(self, d, grid: RadialGrid | None = None, q: RadialProfile | None = None):
        if grid is None:
            grid = RadialGrid(d, 512, 30.0)
        if grid.d != d:
            raise ValueError("grid dimension mismatch")
        self.d = d
        self.grid = grid
        self.q = q if q is not None else solve_ground_state(d, grid)
        qv = np.real(self.q.values)
        r = grid.r
        dq = grid.d1(EVEN) @ qv
        self.v_plus = (4.0 / d + 1.0) * qv ** (4.0 / d)
        self.v_minus = qv ** (4.0 / d)
        # y.grad Q = r Q'(r); Q > 0 so the fractional power is well defined
        self.w_drift = (2.0 / d) * qv ** (4.0 / d - 1.0) * (r * dq)
        self.weights = grid.weights()
        self._neg_lap = {}
        self._mats = {}

    def _neg_laplacian(self, ell, symmetrized):
        key = (ell, symmetrized)
        if key not in self._neg_lap:
            raw = -self.grid.laplacian(ell)
            self._neg_lap[key] = (
                _symmetrize(raw, self.weights).tocsr() if symmetrized else raw
            )
        return self._neg_lap[key]

    def matrix(self, name, ell=0, symmetrized=True):
        """Sparse operator for name in {'L+','L-','A1','A2'}; the symmetrized
        realization is exactly self-adjoint in the r^{d-1} inner product and
        has the same quadratic form as the raw one."""
        key = (name, ell, symmetrized)
        if key not in self._mats:
            nl = self._neg_laplacian(ell, symmetrized)
            m = self.grid.m
            if name == "L+":
                mat = nl + sp.identity(m) - sp.diags(self.v_plus)
            elif name == "L-":
                mat = nl + sp.identity(m) - sp.diags(self.v_minus)
            elif name == "A1":
                mat = nl + sp.diags((4.0 / self.d + 1.0) * self.w_drift)
            elif name == "A2":
                mat = nl + sp.diags(self.w_drift)
            else:
                raise ValueError(f"unknown operator {name!r}")
            self._mats[key] = mat.tocsr()
        return self._mats[key]

    def apply(self, name, values, ell=0):
        """Pointwise-consistent application (raw stencil)."""
        return self.matrix(name, ell, symmetrized=False) @ np.asarray(values)

    def apply_symmetric(self, name, values, ell=0):
        """Exactly self-adjoint application; same quadratic form as apply()."""
        return self.matrix(name, ell, symmetrized=True) @ np.asarray(values)

    def inner(self, f, g, parity=EVEN):
        return radial_inner(self.grid, f, g, parity)


def identity_suite(d, grid: RadialGrid | None = None, ops: LinearizedOperators | None = None):
    """Relative residuals of the five ground-state linearization identities:

        L-(Q) = 0,           L+(LamQ) = -2Q,     L-(|y|^2 Q) = -4 LamQ,
        L+(gradQ) = 0,       L-(yQ) = -2 gradQ,

    the last two evaluated in the ell = 1 sector through the radial parts
    Q'(r) and r Q(r)."""
    if ops is None:
        ops = LinearizedOperators(d, grid)
    g = ops.grid
    q = np.real(ops.q.values)
    lam_q = np.real(apply_scaling_generator(ops.q).values)
    dq = g.d1(EVEN) @ q
    w = ops.weights

    def rel(residual, target):
        num = math.sqrt(float(np.sum(w * residual ** 2)))
        den = math.sqrt(float(np.sum(w * target ** 2)))
        return num / den

    out = {}
    out["Lminus_Q"] = rel(ops.apply("L-", q), q)
    out["Lplus_LamQ"] = rel(ops.apply("L+", lam_q) + 2.0 * q, 2.0 * q)
    out["Lminus_r2Q"] = rel(ops.apply("L-", g.r ** 2 * q) + 4.0 * lam_q, 4.0 * lam_q)
    out["Lplus_gradQ"] = rel(ops.apply("L+", dq, ell=1), dq)
    out["Lminus_yQ"] = rel(ops.apply("L-", g.r * q, ell=1) + 2.0 * dq, 2.0 * dq)
    return out


def coercivity_form(ops: LinearizedOperators, e1, e2) -> float:
    """(A1 e1, e1) + (A2 e2, e2) in the radial L^2(R^d) inner product."""
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    w = ops.weights
    return float(
        np.sum(w * e1 * ops.apply("A1", e1)) + np.sum(w * e2 * ops.apply("A2", e2))
    )


# ----------------------------------------------------------------------
# constraints
# ----------------------------------------------------------------------

@dataclass
class ConstraintSet:
    """Orthogonality directions for the two sectors (lists of node vectors)."""

    sector1: list = field(default_factory=list)
    sector2: list = field(default_factory=list)
    labels1: list = field(default_factory=list)
    labels2: list = field(default_factory=list)

    def gram_condition(self, weights):
        conds = []
        for group in (self.sector1, self.sector2):
            if group:
                G = np.array([[float(np.sum(weights * a * b)) for b in group] for a in group])
                conds.append(float(np.linalg.cond(G)))
        return max(conds) if conds else 1.0


def radial_constraints(ops: LinearizedOperators) -> ConstraintSet:
    """The ground-state directions in the radial (ell = 0) sector.

    The vector-valued directions y Q and grad Q have no radial component,
    so in this sector the real part is constrained against {Q, LamQ} and the
    imaginary part against {LamQ, Lam^2 Q}."""
    q = np.real(ops.q.values)
    lam_q = np.real(apply_scaling_generator(ops.q).values)
    lam2_q = np.real(
        apply_scaling_generator(RadialProfile(ops.grid, lam_q)).values
    )
    return ConstraintSet(
        sector1=[q, lam_q],
        sector2=[lam_q, lam2_q],
        labels1=["Q", "LamQ"],
        labels2=["LamQ", "Lam2Q"],
    )


def project_constraints(ops: LinearizedOperators, e1, e2, cset: ConstraintSet,
                        cond_limit=1e12):
    """L^2-orthogonal projection of (e1, e2) against the constraint set."""
    cond = cset.gram_condition(ops.weights)
    if cond > cond_limit:
        raise SolverError(
            f"constraint Gram matrix is ill-conditioned (cond={cond:.3e})",
            residual=cond,
        )
    w = ops.weights

    def proj(e, group):
        e = np.asarray(e, dtype=float).copy()
        if not group:
            return e
        G = np.array([[float(np.sum(w * a * b)) for b in group] for a in group])
        rhs = np.array([float(np.sum(w * a * e)) for a in group])
        coef = np.linalg.solve(G, rhs)
        for c, a in zip(coef, group):
            e -= c * a
        return e

    return proj(e1, cset.sector1), proj(e2, cset.sector2)


# ----------------------------------------------------------------------
# constrained generalized Rayleigh minimization
# ----------------------------------------------------------------------

@dataclass
class RayleighResult:
    delta_min: float
    sector_values: dict
    minimizer1: np.ndarray
    minimizer2: np.ndarray
    iterations: int
    residual: float
    kappa: float
    grid: object
    constrained: bool
    solver: str


def _denominator_matrix(ops, kappa):
    """Quadratic form int |grad e|^2 + int |e|^2 exp(-kappa r), as the weighted
    symmetric matrix W B with B = -lap + diag(exp(-kappa r))."""
    B = ops._neg_laplacian(0, True) + sp.diags(np.exp(-kappa * ops.grid.r))
    return B


def _sector_min_dense(A, B, W, constraints):
    wA = sp.diags(W) @ A
    wB = sp.diags(W) @ B
    wA = np.asarray(0.5 * (wA + wA.T).todense())
    wB = np.asarray(0.5 * (wB + wB.T).todense())
    if constraints:
        C = np.column_stack([W * c for c in constraints])
        Z = scipy.linalg.null_space(C.T)
        vals, vecs = scipy.linalg.eigh(Z.T @ wA @ Z, Z.T @ wB @ Z)
        vec = Z @ vecs[:, 0]
    else:
        vals, vecs = scipy.linalg.eigh(wA, wB)
        vec = vecs[:, 0]
    return float(vals[0]), vec


def _sector_min_subspace(A, B, W, constraints, tol, maxiter, rng):
    """Locally optimal preconditioned 3-term iteration for the smallest
    eigenvalue of the pencil (W A, W B) on {x : (W c_k)^T x = 0}.

    Each step preconditions the dual-projected residual by the factorized
    denominator form, re-projects onto the constraint subspace, and takes the
    Rayleigh-Ritz minimum over span{x, p, x_prev}."""
    n = A.shape[0]
    wA = (sp.diags(W) @ A).tocsr()
    wB = (sp.diags(W) @ B).tocsc()
    lu = spla.splu(wB)
    cons = [np.asarray(c, float) for c in constraints] if constraints else []
    if cons:
        Wc = [W * c for c in cons]
        G = np.array([[float(np.dot(c, wc)) for wc in Wc] for c in cons])
        Ginv = np.linalg.inv(G)

        def project(v):
            coef = Ginv @ np.array([float(np.dot(wc, v)) for wc in Wc])
            out = v.copy()
            for g_, c in zip(coef, cons):
                out -= g_ * c
            return out

        def dual_project(v):
            coef = Ginv @ np.array([float(np.dot(c, v)) for c in cons])
            out = v.copy()
            for g_, wc in zip(coef, Wc):
                out -= g_ * wc
            return out
    else:
        def project(v):
            return v

        def dual_project(v):
            return v

    x = project(rng.standard_normal(n))
    x = x / math.sqrt(abs(float(x @ (wB @ x))))
    x_prev = None
    rho, rel = np.nan, np.inf
    it = 0
    for it in range(1, maxiter + 1):
        Ax, Bx = wA @ x, wB @ x
        rho = float(x @ Ax)
        r_v = dual_project(Ax - rho * Bx)
        rel = float(np.linalg.norm(r_v)) / float(np.linalg.norm(Bx))
        if rel < tol:
            break
        p = project(lu.solve(r_v))
        cols = [x, p] + ([x_prev] if x_prev is not None else [])
        Qb, _ = np.linalg.qr(np.column_stack(cols))
        vals, vecs = scipy.linalg.eigh(Qb.T @ (wA @ Qb), Qb.T @ (wB @ Qb))
        x_new = project(Qb @ vecs[:, 0])
        x_prev = x
        x = x_new / math.sqrt(abs(float(x_new @ (wB @ x_new))))
    return rho, x, it, rel


def constrained_min_rayleigh(d=3, grid: RadialGrid | None = None, kappa=1.9,
                             ops: LinearizedOperators | None = None,
                             constraints="default", solver="subspace",
                             tol=1e-9, maxiter=6000, seed=0) -> RayleighResult:
    """Minimize the coercivity form over the constrained radial subspace.

    Returns the minimal generalized Rayleigh quotient (per sector and overall)
    of (A_i e, e) against int |grad e|^2 + |e|^2 exp(-kappa r).  `constraints`
    is "default" for the ground-state directions, None to remove them, or a
    ConstraintSet.  `solver` is "subspace" (projected preconditioned
    Rayleigh-Ritz iteration with deterministic seeded start vectors) or
    "dense" (exact null-space reduction, used as the coarse-grid oracle).
    """
    if not 0.0 < kappa < 2.0:
        raise ValueError("weight exponent kappa must lie in (0, 2)")
    if ops is None:
        ops = LinearizedOperators(d, grid)
    cset = radial_constraints(ops) if constraints == "default" else constraints
    groups = (cset.sector1, cset.sector2) if cset is not None else ([], [])
    B = _denominator_matrix(ops, kappa)
    W = ops.weights
    rng = np.random.default_rng(seed)

    sector_values = {}
    minimizers = {}
    iterations = 0
    residual = 0.0
    for label, opname, cons in (("sector1", "A1", groups[0]), ("sector2", "A2", groups[1])):
        A = ops.matrix(opname)
        if solver == "dense":
            mu, vec = _sector_min_dense(A, B, W, cons)
            it, rel = 0, 0.0
        elif solver == "subspace":
            mu, vec, it, rel = _sector_min_subspace(A, B, W, cons, tol, maxiter, rng)
            if not np.isfinite(mu) or rel > 100 * tol:
                raise SolverError(
                    f"rayleigh iteration did not converge in {label} "
                    f"(residual {rel:.3e} after {it} iterations)",
                    residual=rel, iterations=it,
                )
        else:
            raise ValueError(f"unknown solver {solver!r}")
        den = float(vec @ (sp.diags(W) @ B @ vec))
        vec = vec / math.sqrt(abs(den))
        sector_values[label] = mu
        minimizers[label] = vec
        iterations = max(iterations, it)
        residual = max(residual, rel)

    return RayleighResult(
        delta_min=min(sector_values.values()),
        sector_values=sector_values,
        minimizer1=minimizers["sector1"],
        minimizer2=minimizers["sector2"],
        iterations=iterations,
        residual=residual,
        kappa=kappa,
        grid=ops.grid,
        constrained=cset is not None,
        solver=solver,
    )


def rayleigh_quotient(ops: LinearizedOperators, kappa, e1, e2) -> float:
    """The minimized functional evaluated at a given pair; degree-0 homogeneous."""
    num = coercivity_form(ops, e1, e2)
    B = _denominator_matrix(ops, kappa)
    W = ops.weights
    den = 0.0
    for e in (np.asarray(e1, float), np.asarray(e2, float)):
        den += float(e @ (sp.diags(W) @ B @ e))
    return num / den


# ----------------------------------------------------------------------
# Cartesian cross-check at low resolution
# ----------------------------------------------------------------------

def _min_subspace_callable(apply_A, apply_B, precond, constraints, n, tol, maxiter, rng):
    """Same projected locally-optimal iteration as the radial path, phrased in
    terms of callables; plain Euclidean metric (uniform quadrature weight)."""
    cons = [np.asarray(c, float) for c in constraints] if constraints else []
    if cons:
        G = np.array([[float(np.dot(a, b)) for b in cons] for a in cons])
        Ginv = np.linalg.inv(G)

        def project(v):
            coef = Ginv @ np.array([float(np.dot(c, v)) for c in cons])
            out = v.copy()
            for g_, c in zip(coef, cons):
                out -= g_ * c
            return out
    else:
        def project(v):
            return v

    x = project(rng.standard_normal(n))
    x = x / math.sqrt(abs(float(x @ apply_B(x))))
    x_prev = None
    rho, rel = np.nan, np.inf
    for it in range(1, maxiter + 1):
        Ax, Bx = apply_A(x), apply_B(x)
        rho = float(x @ Ax)
        r_v = project(Ax - rho * Bx)
        rel = float(np.linalg.norm(r_v)) / float(np.linalg.norm(Bx))
        if rel < tol:
            break
        p = project(precond(r_v))
        cols = [x, p] + ([x_prev] if x_prev is not None else [])
        Qb, _ = np.linalg.qr(np.column_stack(cols))
        Ab = np.column_stack([apply_A(Qb[:, j]) for j in range(Qb.shape[1])])
        Bb = np.column_stack([apply_B(Qb[:, j]) for j in range(Qb.shape[1])])
        vals, vecs = scipy.linalg.eigh(Qb.T @ Ab, Qb.T @ Bb)
        x_new = project(Qb @ vecs[:, 0])
        x_prev = x
        x = x_new / math.sqrt(abs(float(x_new @ apply_B(x_new))))
    return rho, x, it, rel


def cartesian_min_rayleigh(d, grid: Grid, kappa=1.9, q: RadialProfile | None = None,
                           constraints=True, tol=1e-7, maxiter=600, seed=0):
    """Full-box cross-check with the vector constraints imposed componentwise.

    The two sectors decouple exactly as in the radial reduction; each is
    minimized over real fields on the box with a spectral Laplacian.  Intended
    for coarse grids only.
    """
    from .ground_state import RadialInterpolant

    if q is None:
        q = solve_ground_state(d)
    interp = RadialInterpolant(q)
    rho = np.sqrt(grid.radius2())
    qx = np.real(interp(rho))
    # y.grad Q on the box
    dq_r = np.real(RadialInterpolant(
        RadialProfile(q.grid, q.grid.d1(EVEN) @ np.real(q.values)), tail="zero"
    )(rho))
    ydotgrad = rho * dq_r
    wdrift = (2.0 / d) * np.where(qx > 0, qx, 1e-300) ** (4.0 / d - 1.0) * ydotgrad
    lam_qx = (d / 2.0) * qx + ydotgrad
    lam2_qx = np.real(apply_scaling_generator(
        ComplexField(grid, "physical", lam_qx.astype(complex))
    ).values)

    xi2 = grid.xi_norm2()
    npts = grid.n ** grid.d
    expw = np.exp(-kappa * rho).ravel()

    def neg_lap(v):
        spec = np.fft.fftn(v.reshape(grid.shape()))
        return np.real(np.fft.ifftn(xi2 * spec)).ravel()

    mu_pc = max(float(np.mean(expw)), 1e-3)

    def precond(v):
        spec = np.fft.fftn(v.reshape(grid.shape()))
        return np.real(np.fft.ifftn(spec / (xi2 + mu_pc))).ravel()

    cons1, cons2 = [], []
    if constraints:
        cons1 = [qx.ravel(), lam_qx.ravel()]
        cons2 = [lam_qx.ravel(), lam2_qx.ravel()]
        for ax in range(d):
            y_ax = np.broadcast_to(grid.coordinate(ax), grid.shape())
            cons1.append((y_ax * qx).ravel())
            gq = np.zeros(grid.shape())
            nz = rho > 0
            gq[nz] = dq_r[nz] * (y_ax[nz] / rho[nz])
            cons2.append(gq.ravel())

    rng = np.random.default_rng(seed)
    out = {}
    for label, vpot, cons in (
        ("sector1", (4.0 / d + 1.0) * wdrift, cons1),
        ("sector2", wdrift, cons2),
    ):
        vflat = vpot.ravel()

        def apply_A(v, vflat=vflat):
            return neg_lap(v) + vflat * v

        def apply_B(v):
            return neg_lap(v) + expw * v

        mu, _, it, rel = _min_subspace_callable(
            apply_A, apply_B, precond, cons, npts, tol, maxiter, rng
        )
        if rel > 100 * tol:
            raise SolverError(
                f"cartesian rayleigh iteration stalled in {label} "
                f"(residual {rel:.3e} after {it} iterations)",
                residual=rel, iterations=it,
            )
        out[label] = mu
    return min(out.values()), out
