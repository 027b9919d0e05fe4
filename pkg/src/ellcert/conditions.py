"""Explicit constants of the a priori machinery and sampling falsifiers.

The admissible gradient-coupling threshold, the epsilon split, the bound
constants and the norm-bootstrap exponents are closed formulas; this module
computes them and, separately, tries to refute the structural conditions on
the nonlinearity by sampling.  A falsifier PASS means "no counterexample
within budget", never a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .domain import GridDomain
from .errors import ExprDomainError, PreconditionError, ThresholdViolationError

__all__ = [
    "SemilinearitySpec",
    "EpsilonSplit",
    "MoserParams",
    "FalsifyResult",
    "Witness",
    "lmax",
    "q_double_star",
    "epsilon_split",
    "h1_constant",
    "moser_params",
    "falsify_condition",
]


def lmax(epsilon: float, lambda1: float) -> float:
    """Admissible upper threshold for the gradient coupling strength.

    eps/sqrt(lam) below the eps = 2*lam crossover, 2*sqrt(eps - lam) above;
    both branches are evaluated through sqrt(4*lam)-equivalent forms so they
    agree bitwise at the crossover.
    """
    if epsilon <= 0 or lambda1 < 0:
        raise PreconditionError("need epsilon > 0 and lambda1 >= 0")
    if lambda1 > 0 and epsilon <= 2.0 * lambda1:
        return math.sqrt(epsilon * (epsilon / lambda1))
    return math.sqrt(4.0 * (epsilon - lambda1))


def q_double_star(q: float, d_hat: float) -> float:
    """Terminal integrability exponent q*d/(d-2q), infinite for 2q > d."""
    if q < 2:
        raise PreconditionError("q must be >= 2")
    if q == d_hat / 2.0:
        raise PreconditionError("q equal to half the effective dimension is excluded")
    if q > d_hat / 2.0:
        return math.inf
    return q * d_hat / (d_hat - 2.0 * q)


@dataclass(frozen=True)
class EpsilonSplit:
    eps1: float
    eps2: float
    delta1: float


def epsilon_split(epsilon: float, lambda1: float) -> EpsilonSplit:
    """Split eps = eps1 + eps2 with eps1 = min(eps/2, lambda1).

    delta1 = eps1/lambda1 (1 when lambda1 = 0); the split satisfies
    4*delta1*eps2 = lmax(eps, lambda1)**2, which is what makes L < Lmax
    equivalent to 4*delta1*eps2 > L**2.
    """
    if epsilon <= 0 or lambda1 < 0:
        raise PreconditionError("need epsilon > 0 and lambda1 >= 0")
    eps1 = min(epsilon / 2.0, lambda1)
    eps2 = epsilon - eps1
    delta1 = eps1 / lambda1 if lambda1 > 0 else 1.0
    return EpsilonSplit(eps1, eps2, delta1)


def h1_constant(lambda1: float, epsilon: float, L: float) -> tuple[float, float]:
    """Data-to-solution constants (rho0, C) of the energy bound.

    rho0 bounds the L2 norm against the data norm; C bounds the full graph
    norm.  Obtained by chaining the energy identity, the split inequality
    and the resulting quadratic in the gradient norm; the test suite
    validates C against a worst-case ascent oracle.
    """
    threshold = lmax(epsilon, lambda1)
    if not 0 <= L < threshold:
        raise ThresholdViolationError(
            f"gradient coupling L={L} is not below the threshold {threshold}")
    split = epsilon_split(epsilon, lambda1)
    denom = 4.0 * split.delta1 * split.eps2 - L * L
    rho0 = 4.0 * split.delta1 / denom
    lin = max(lambda1 - epsilon, 0.0)
    b = L * rho0
    grad_c = 0.5 * (b + math.sqrt(b * b + 4.0 * (lin * rho0 * rho0 + rho0)))
    if lambda1 > 0:
        c = grad_c * math.sqrt(1.0 + 1.0 / lambda1)
    else:
        # no Poincare control; the shifted mass term supplies the L2 part
        c = math.sqrt(grad_c**2 + (L * grad_c + 1.0) * rho0 / epsilon)
    return rho0, c


@dataclass(frozen=True)
class MoserParams:
    chi: float
    theta: float
    beta_seq: tuple
    qss: float


def moser_params(q: float, d_hat: float, n_terms: int = 40) -> MoserParams:
    """Bootstrap exponents for the 2q > d regime.

    chi = 2*/(2q') with 2* = 2d/(d-2) and q' the conjugate exponent; the
    exponent sequence is beta_0 = 1, beta_n = 1/2 + chi*beta_{n-1}, and
    chi^n/beta_n decreases to theta = (2chi-2)/(2chi-1).
    """
    if d_hat <= 2:
        raise PreconditionError("effective dimension must exceed 2 for the exponent chain")
    if q <= d_hat / 2.0:
        raise PreconditionError(
            "the exponent sequence applies only for q above half the dimension; "
            "below it the doubling chain is used instead")
    two_star = 2.0 * d_hat / (d_hat - 2.0)
    q_prime = q / (q - 1.0)
    chi = two_star / (2.0 * q_prime)
    theta = (2.0 * chi - 2.0) / (2.0 * chi - 1.0)
    betas = [1.0]
    for _ in range(n_terms - 1):
        betas.append(0.5 + chi * betas[-1])
    return MoserParams(chi, theta, tuple(betas), math.inf)


# ---------------------------------------------------------------------------
# the semilinearity and its sampled conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemilinearitySpec:
    """Nonlinearity f(x, s, xi) with its declared constants and majorants.

    Expressions are already bound (constants like the eigenvalue folded in).
    """

    f: ex.Expr
    h: ex.Expr
    h0: ex.Expr
    gamma: ex.Expr
    epsilon: float
    L: float
    L0: float
    q: float
    d_hat: float
    dim: int = 1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise PreconditionError("epsilon must be positive")
        if not 0 <= self.L <= self.L0:
            raise PreconditionError("need 0 <= L <= L0")
        if self.q < 2:
            raise PreconditionError("q must be >= 2")
        if self.q == self.d_hat / 2.0:
            raise PreconditionError("q equal to half the effective dimension is excluded")

    def check_data_sign(self, dom: GridDomain) -> None:
        for name, e in (("h", self.h), ("h0", self.h0)):
            vals = _eval_on_nodes(e, dom)
            if np.any(vals < 0):
                bad = int(np.argmin(vals))
                raise PreconditionError(
                    f"{name} must be nonnegative; value {vals[bad]} at {tuple(dom.coords[bad])}")


def _eval_on_nodes(e: ex.Expr, dom: GridDomain) -> np.ndarray:
    env = {f"x{i + 1}": dom.coords[:, i] for i in range(dom.dim)}
    return np.broadcast_to(ex.eval_array(e, env), (dom.n_nodes,))


@dataclass(frozen=True)
class Witness:
    point: dict
    lhs: float
    rhs: float


@dataclass(frozen=True)
class FalsifyResult:
    kind: str
    passed: bool
    checked: int
    seed: int
    witness: Witness | None = None
    note: str = ""


_S_GRID = np.concatenate([-np.logspace(6, -6, 41), [0.0], np.logspace(-6, 6, 41)])
_XI_MAGS = np.concatenate([[0.0], np.logspace(-6, 6, 13)])


def _directions(dim: int, rng: np.random.Generator, count: int) -> np.ndarray:
    if dim == 1:
        out = np.ones((count, 1))
        out[1::2, 0] = -1.0
        return out
    v = rng.standard_normal((count, dim))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
    return v


def _f_env(dom: GridDomain, s, xi) -> dict:
    env = {f"x{i + 1}": dom.coords[:, i] for i in range(dom.dim)}
    env["s"] = s
    for i in range(dom.dim):
        env[f"xi{i + 1}"] = xi[..., i] if np.ndim(xi) > 1 else xi[i]
    env["gnorm"] = np.linalg.norm(xi, axis=-1)
    return env


def _eval_f(spec: SemilinearitySpec, dom: GridDomain, s, xi, context: str) -> np.ndarray:
    env = _f_env(dom, s, xi)
    try:
        vals = ex.eval_array(spec.f, env)
    except ExprDomainError as err:
        raise ExprDomainError(f"{err} while sampling {context} at s={s}, xi={xi}") from err
    return np.broadcast_to(vals, (dom.n_nodes,))


def falsify_condition(kind: str, spec: SemilinearitySpec, dom: GridDomain,
                      lambda1: float, budget: int, seed: int = 20240901,
                      cap: float = 1e8) -> FalsifyResult:
    """Search for a point violating the named condition.

    Samples the deterministic log grids plus ``budget`` seeded random tuples
    and checks the inequality with relative slack 1e-9.  Returns PASS with
    the number of checked samples, or the first witness found.
    """
    if budget < 1:
        raise PreconditionError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "coercive":
        return _falsify_onesided(kind, spec, dom, lambda1, budget, rng, seed)
    if kind == "growth":
        return _falsify_onesided(kind, spec, dom, lambda1, budget, rng, seed)
    if kind == "monotone":
        return _falsify_monotone(spec, dom, lambda1, budget, rng, seed)
    if kind == "gamma0":
        return _falsify_gamma(spec, seed, cap, at_zero=True)
    if kind == "gammaInf":
        return _falsify_gamma(spec, seed, cap, at_zero=False)
    raise PreconditionError(f"unknown condition kind '{kind}'")


def _slack(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return 1e-9 * (np.abs(lhs) + np.abs(rhs))


def _witness_from(dom: GridDomain, node: int, extra: dict, lhs: float, rhs: float) -> Witness:
    point = {"x": tuple(dom.coords[node])}
    point.update(extra)
    return Witness(point, float(lhs), float(rhs))


def _check_batch(kind, spec, dom, lambda1, s, xi):
    """One (s, xi) sample against all nodes; returns a witness or None."""
    f_vals = _eval_f(spec, dom, s, xi, kind)
    s_arr = np.broadcast_to(np.asarray(s, float), (dom.n_nodes,))
    gn = float(np.linalg.norm(xi))
    lhs = f_vals * s_arr
    if kind == "coercive":
        h_vals = _eval_on_nodes(spec.h, dom)
        rhs = ((lambda1 - spec.epsilon) * s_arr**2 + spec.L * gn * np.abs(s_arr)
               + h_vals * np.abs(s_arr))
        bad = lhs > rhs + _slack(lhs, rhs)
    else:  # growth: a lower bound
        h0_vals = _eval_on_nodes(spec.h0, dom)
        gamma_vals = ex.eval_array(spec.gamma, {"s": np.abs(s_arr)})
        rhs = (-np.broadcast_to(gamma_vals, (dom.n_nodes,)) * np.abs(s_arr)
               - spec.L0 * gn * np.abs(s_arr) - h0_vals * np.abs(s_arr))
        bad = lhs < rhs - _slack(lhs, rhs)
    if not np.all(np.isfinite(lhs)) or not np.all(np.isfinite(rhs)):
        raise ExprDomainError(f"non-finite value while sampling {kind} at s={s}, xi={xi}")
    if np.any(bad):
        node = int(np.argmax(bad))
        return _witness_from(dom, node, {"s": float(s), "xi": tuple(np.atleast_1d(xi))},
                             lhs[node], rhs[node])
    return None


def _falsify_onesided(kind, spec, dom, lambda1, budget, rng, seed) -> FalsifyResult:
    checked = 0
    dirs = _directions(dom.dim, rng, len(_XI_MAGS))
    for s in _S_GRID:
        for mag, direction in zip(_XI_MAGS, dirs):
            xi = mag * direction
            w = _check_batch(kind, spec, dom, lambda1, float(s), xi, checked)
            checked += dom.n_nodes
            if w is not None:
                return FalsifyResult(kind, False, checked, seed, witness=w)
    for _ in range(budget):
        s = float(rng.choice([-1.0, 1.0]) * 10.0 ** rng.uniform(-6, 6))
        xi = (10.0 ** rng.uniform(-6, 6)) * _directions(dom.dim, rng, 1)[0]
        w = _check_batch(kind, spec, dom, lambda1, s, xi, checked)
        checked += dom.n_nodes
        if w is not None:
            return FalsifyResult(kind, False, checked, seed, witness=w)
    return FalsifyResult(kind, True, checked, seed)


def _falsify_monotone(spec, dom, lambda1, budget, rng, seed) -> FalsifyResult:
    checked = 0

    def check_pair(s1, xi1, s2, xi2):
        nonlocal checked
        f1 = _eval_f(spec, dom, s1, xi1, "monotone")
        f2 = _eval_f(spec, dom, s2, xi2, "monotone")
        ds = s2 - s1
        lhs = (f2 - f1) * ds
        rhs = ((lambda1 - spec.epsilon) * ds * ds
               + spec.L * float(np.linalg.norm(np.asarray(xi2) - np.asarray(xi1))) * abs(ds))
        checked += dom.n_nodes
        if not np.all(np.isfinite(lhs)):
            raise ExprDomainError(
                f"non-finite value while sampling monotone at s1={s1}, s2={s2}")
        bad = lhs > rhs + _slack(lhs, rhs)
        if np.any(bad):
            node = int(np.argmax(bad))
            return _witness_from(dom, node,
                                 {"s1": float(s1), "s2": float(s2),
                                  "xi1": tuple(np.atleast_1d(xi1)),
                                  "xi2": tuple(np.atleast_1d(xi2))},
                                 lhs[node], rhs[node])
        return None

    sub = _S_GRID[::4]
    dirs = _directions(dom.dim, rng, 2 * len(sub))
    for i, s1 in enumerate(sub):
        s2 = sub[len(sub) - 1 - i]
        xi1 = _XI_MAGS[i % len(_XI_MAGS)] * dirs[2 * i]
        xi2 = _XI_MAGS[(3 * i) % len(_XI_MAGS)] * dirs[2 * i + 1]
        w = check_pair(float(s1), xi1, float(s2), xi2)
        if w is not None:
            return FalsifyResult("monotone", False, checked, seed, witness=w)
    for _ in range(budget):
        s1, s2 = (float(rng.choice([-1, 1]) * 10.0 ** rng.uniform(-6, 6)) for _ in range(2))
        d1, d2 = _directions(dom.dim, rng, 2)
        xi1 = (10.0 ** rng.uniform(-6, 6)) * d1
        xi2 = (10.0 ** rng.uniform(-6, 6)) * d2
        w = check_pair(s1, xi1, s2, xi2)
        if w is not None:
            return FalsifyResult("monotone", False, checked, seed, witness=w)
    return FalsifyResult("monotone", True, checked, seed)


def _falsify_gamma(spec, seed, cap, at_zero: bool) -> FalsifyResult:
    if at_zero:
        s = np.logspace(-8, -2, 61)
        ratios = ex.eval_array(spec.gamma, {"s": s}) / s
        kind = "gamma0"
    else:
        qss = q_double_star(spec.q, spec.d_hat)
        if math.isinf(qss):
            return FalsifyResult("gammaInf", True, 0, seed,
                                 note="terminal exponent is infinite; condition is vacuous")
        s = np.logspace(2, 8, 61)
        ratios = ex.eval_array(spec.gamma, {"s": s}) / s ** (qss / 2.0)
        kind = "gammaInf"
    ratios = np.broadcast_to(ratios, s.shape)
    bad = ratios > cap
    if np.any(bad):
        i = int(np.argmax(bad))
        return FalsifyResult(kind, False, len(s), seed,
                             witness=Witness({"s": float(s[i])}, float(ratios[i]), cap))
    return FalsifyResult(kind, True, len(s), seed)
