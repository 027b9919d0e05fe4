"""Sparse operators, grid fields and the linear algebra kernels.

The stiffness operator uses the standard (2d+1)-point stencil.  With the
zero-extension (Dirichlet) convention, the operator's quadratic form equals
the squared forward-difference gradient summed over interior edges and
boundary faces, exactly; all energy inequalities in the solver modules rely
on that identity, so the gradient is forward-difference, not centered.

Linear solves use Jacobi-preconditioned conjugate gradients with a fixed
iteration order so repeated runs are bit-reproducible.  The smallest
eigenvalue (the discrete Poincare constant of the form) comes from inverse
power iteration on top of the same solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import expr as ex
from .domain import GridDomain
from .errors import (
    NegativeBetaError,
    NonConvergenceError,
    NonSPDError,
    PreconditionError,
)

__all__ = [
    "SparseOperator",
    "Field",
    "assemble_dirichlet_laplacian",
    "assemble_robin_form",
    "apply_gradient",
    "gradient_form",
    "solve_spd",
    "cg_solve",
    "smallest_eigenvalue",
    "Discretization",
]


@dataclass
class SparseOperator:
    """Symmetric positive (semi)definite operator in CSR form."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    symmetric: bool = True
    _csr: sp.csr_matrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.data, self.indices, self.indptr), shape=(self.n, self.n)
            )

    @classmethod
    def from_coo(cls, n, rows, cols, vals, symmetric=True) -> "SparseOperator":
        m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        return cls(n, m.indptr, m.indices, m.data, symmetric, _csr=m)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._csr @ x

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def plus_diagonal(self, sigma) -> "SparseOperator":
        m = (self._csr + sp.diags(np.broadcast_to(sigma, (self.n,)))).tocsr()
        return SparseOperator(self.n, m.indptr, m.indices, m.data, self.symmetric, _csr=m)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()


@dataclass
class Field:
    """Grid function on the active nodes; (N,) scalars or (N, c) vectors."""

    dom: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape[0] != self.dom.n_nodes:
            raise PreconditionError("field length does not match the node count")
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("field contains non-finite entries")

    @classmethod
    def zeros(cls, dom: GridDomain, ncomp: int = 1, dtype=float) -> "Field":
        shape = (dom.n_nodes,) if ncomp == 1 else (dom.n_nodes, ncomp)
        return cls(dom, np.zeros(shape, dtype=dtype))

    @classmethod
    def from_expr(cls, dom: GridDomain, e: ex.Expr) -> "Field":
        env = {f"x{i + 1}": dom.coords[:, i] for i in range(dom.dim)}
        vals = ex.eval_array(e, env)
        return cls(dom, np.broadcast_to(vals, (dom.n_nodes,)).astype(float).copy())

    @property
    def ncomp(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def assemble_dirichlet_laplacian(dom: GridDomain) -> SparseOperator:
    """Zero-extension stencil operator: diagonal 2d/h^2, neighbors -1/h^2."""
    n = dom.n_nodes
    inv_h2 = 1.0 / dom.h**2
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 2.0 * dom.dim * inv_h2)]
    for axis in range(dom.dim):
        for s in (0, 1):
            j = dom.nbr[:, axis, s]
            m = j >= 0
            rows.append(np.nonzero(m)[0])
            cols.append(j[m])
            vals.append(np.full(m.sum(), -inv_h2))
    return SparseOperator.from_coo(
        n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def assemble_robin_form(dom: GridDomain, beta: ex.Expr) -> SparseOperator:
    """Free-boundary stiffness plus lumped boundary mass.

    The quadratic form <A u, u> h^d equals the edge sum of squared forward
    differences times h^d plus sum over boundary faces of beta * u^2 times
    h^(d-1), term by term.  Positive definite when beta is bounded away
    from zero, semidefinite for beta == 0.
    """
    n = dom.n_nodes
    inv_h2 = 1.0 / dom.h**2
    degree = np.count_nonzero(dom.nbr >= 0, axis=(1, 2)).astype(float)
    diag = degree * inv_h2

    mids = dom.face_midpoints()
    env = {f"x{i + 1}": mids[:, i] for i in range(dom.dim)}
    beta_vals = np.broadcast_to(ex.eval_array(beta, env), (len(mids),))
    if np.any(beta_vals < 0):
        bad = int(np.argmin(beta_vals))
        raise NegativeBetaError(tuple(mids[bad]), float(beta_vals[bad]))
    # h^(d-1) face area against the h^d node weight leaves a factor 1/h
    np.add.at(diag, dom.faces[:, 0], beta_vals / dom.h)

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [diag]
    for axis in range(dom.dim):
        for s in (0, 1):
            j = dom.nbr[:, axis, s]
            m = j >= 0
            rows.append(np.nonzero(m)[0])
            cols.append(j[m])
            vals.append(np.full(m.sum(), -inv_h2))
    return SparseOperator.from_coo(
        n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def apply_gradient(dom: GridDomain, u: Field, zero_extend: bool = True) -> Field:
    """Forward differences per axis; exterior neighbors read as 0 (Dirichlet)
    or as the node value itself (free boundary), giving a zero component."""
    v = u.values
    out = np.zeros((dom.n_nodes, dom.dim), dtype=v.dtype)
    for axis in range(dom.dim):
        j = dom.nbr[:, axis, 1]
        m = j >= 0
        out[m, axis] = (v[j[m]] - v[m]) / dom.h
        if zero_extend:
            out[~m, axis] = -v[~m] / dom.h
    return Field(dom, out)


def gradient_form(dom: GridDomain, u: np.ndarray, v: np.ndarray,
                  zero_extend: bool = True) -> float:
    """Edge-and-face gradient inner product, h^d weighted.

    Independent of the assembled operator; with zero extension it matches
    <Lap u, v> h^d exactly (summation by parts).
    """
    inv_h2 = 1.0 / dom.h**2
    total = 0.0
    for axis in range(dom.dim):
        j = dom.nbr[:, axis, 1]
        m = j >= 0
        du = u[j[m]] - u[m]
        dv = v[j[m]] - v[m]
        total += float(np.dot(du, dv))
        if zero_extend:
            for s in (0, 1):
                outside = dom.nbr[:, axis, s] < 0
                total += float(np.dot(u[outside], v[outside]))
    return total * inv_h2 * dom.h**dom.dim


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def cg_solve(A: SparseOperator, b: np.ndarray, tol: float,
             max_iter: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned CG to relative residual tol; deterministic."""
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    b = np.asarray(b, dtype=float)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b)
    if max_iter is None:
        max_iter = 20 * A.n + 200

    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NonSPDError("operator has a non-positive diagonal entry")
    inv_diag = 1.0 / diag

    x = np.zeros_like(b)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(np.dot(r, z))
    for _ in range(max_iter):
        Ap = A @ p
        pAp = float(np.dot(p, Ap))
        if pAp <= 0.0:
            raise NonSPDError("negative curvature direction encountered")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * b_norm:
            true_r = b - (A @ x)
            if np.linalg.norm(true_r) <= tol * b_norm:
                return x
            r = true_r  # recurrence drifted; continue on the true residual
        z = inv_diag * r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergenceError(
        f"CG did not reach tol={tol} in {max_iter} iterations",
        residual=float(np.linalg.norm(b - (A @ x)) / b_norm),
    )


def solve_spd(A: SparseOperator, rhs: Field, tol: float) -> Field:
    return Field(rhs.dom, cg_solve(A, rhs.values, tol))


def smallest_eigenvalue(A: SparseOperator, tol: float,
                        dom: GridDomain | None = None,
                        max_iter: int = 200) -> tuple:
    """Inverse power iteration; returns (Rayleigh quotient, eigenvector).

    A small diagonal shift keeps the inner solves definite when A is only
    semidefinite; the Rayleigh quotient is evaluated on A itself, so the
    shift does not bias the eigenvalue.
    """
    scale = float(np.max(A.diagonal()))
    shift = 1e-10 * scale
    # direct factorization: the shifted system is far too ill-conditioned for
    # Jacobi CG when A is only semidefinite, and LU is equally deterministic
    try:
        lu = sp.linalg.splu(A.plus_diagonal(shift)._csr.tocsc())
    except RuntimeError as err:
        raise NonConvergenceError(f"inner factorization failed: {err}") from err
    x = np.ones(A.n)
    x /= np.linalg.norm(x)
    lam_old = np.inf
    lam = np.inf
    for _ in range(max_iter):
        y = lu.solve(x)
        if not np.all(np.isfinite(y)):
            raise NonConvergenceError("inner solve of the inverse iteration broke down")
        y /= np.linalg.norm(y)
        lam = float(np.dot(y, A @ y))
        if abs(lam - lam_old) <= tol * abs(lam) + 1e-14 * scale:
            x = y
            break
        lam_old = lam
        x = y
    else:
        raise NonConvergenceError("inverse power iteration did not settle")
    if dom is not None:
        x = x / np.sqrt(np.dot(x, x) * dom.h**dom.dim)
        return lam, Field(dom, x)
    return lam, x


# ---------------------------------------------------------------------------
# discretization bundle
# ---------------------------------------------------------------------------


class Discretization:
    """One boundary realization of the problem: operator plus conventions.

    Keeps the solver modules independent of the boundary mode: Dirichlet
    (zero extension) and Robin (closure nodes with boundary mass) expose the
    same interface.  ``form(v)`` is the energy <A v, v> h^d and plays the
    role of the squared gradient norm in every estimate.
    """

    def __init__(self, dom: GridDomain, lap: SparseOperator, zero_extend: bool,
                 mode: str, beta: ex.Expr | None = None):
        self.dom = dom
        self.lap = lap
        self.zero_extend = zero_extend
        self.mode = mode
        self.beta = beta

    @classmethod
    def dirichlet(cls, dom: GridDomain) -> "Discretization":
        return cls(dom, assemble_dirichlet_laplacian(dom), True, "dirichlet")

    @classmethod
    def robin(cls, dom: GridDomain, beta: ex.Expr) -> "Discretization":
        return cls(dom, assemble_robin_form(dom, beta), False, "robin", beta)

    @property
    def weight(self) -> float:
        return self.dom.h**self.dom.dim

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u, v)) * self.weight

    def l2(self, v: np.ndarray) -> float:
        return float(np.sqrt(np.dot(v, v) * self.weight))

    def form(self, v: np.ndarray) -> float:
        return float(np.dot(v, self.lap @ v)) * self.weight

    def h1(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(self.form(v), 0.0) + np.dot(v, v) * self.weight))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return apply_gradient(self.dom, Field(self.dom, v), self.zero_extend).values

    def gradient_norms(self, v: np.ndarray) -> np.ndarray:
        """Pointwise Euclidean norm of the forward-difference gradient."""
        g = self.gradient(v)
        return np.sqrt(np.sum(g * g, axis=1))

    def solve(self, b: np.ndarray, tol: float, shift: float = 0.0) -> np.ndarray:
        op = self.lap if shift == 0.0 else self.lap.plus_diagonal(shift)
        return cg_solve(op, b, tol)
