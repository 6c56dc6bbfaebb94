"""Problem data model: per-agent objectives and boxes, coupled quadratic
constraints, and the constants (Lipschitz bounds, diameters, dual-ball radius)
that drive both the solver schedule and the noise calibration."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, SlaterViolationError

_PSD_TOL = 1e-9


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class QuadraticObjective:
    """Convex quadratic 0.5 x'Px + c'x + d with P positive semidefinite."""

    P: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        c = _as_vector(self.c, "c")
        if P.shape != (c.size, c.size):
            raise ValueError("P must be square and match c")
        if not np.allclose(P, P.T, atol=1e-12):
            raise ValueError("P must be symmetric")
        if np.linalg.eigvalsh(P).min() < -_PSD_TOL:
            raise ConfigError("objective quadratic form is not positive semidefinite")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "c", c)

    def value(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.P @ x) + float(self.c @ x) + self.d

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.P @ x + self.c


@dataclass(frozen=True)
class AgentSpec:
    """One agent: its box, and either a target (cost 0.5||x - t||^2) or an
    explicit convex quadratic objective."""

    index: int
    lo: np.ndarray
    hi: np.ndarray
    target: np.ndarray | None = None
    objective: QuadraticObjective | None = None

    def __post_init__(self):
        lo = _as_vector(self.lo, "lo")
        hi = _as_vector(self.hi, "hi")
        if lo.size != hi.size or lo.size < 1:
            raise ValueError("box bounds must be equal-length, non-empty vectors")
        if np.any(lo > hi):
            raise ConfigError(f"agent {self.index}: box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if (self.target is None) == (self.objective is None):
            raise ConfigError(
                f"agent {self.index}: exactly one of target/objective required"
            )
        if self.target is not None:
            t = _as_vector(self.target, "target")
            if t.size != lo.size:
                raise ValueError("target dimension does not match box")
            object.__setattr__(self, "target", t)
        else:
            if self.objective.c.size != lo.size:
                raise ValueError("objective dimension does not match box")

    @property
    def dim(self) -> int:
        return self.lo.size

    def objective_value(self, x_i: np.ndarray) -> float:
        x_i = _as_vector(x_i, "x_i")
        if x_i.size != self.dim:
            raise ValueError(
                f"agent {self.index}: expected dimension {self.dim}, got {x_i.size}"
            )
        if self.target is not None:
            diff = x_i - self.target
            return 0.5 * float(diff @ diff)
        return self.objective.value(x_i)

    def objective_gradient(self, x_i: np.ndarray) -> np.ndarray:
        if x_i.size != self.dim:
            raise ValueError(
                f"agent {self.index}: expected dimension {self.dim}, got {x_i.size}"
            )
        if self.target is not None:
            return x_i - self.target
        return self.objective.gradient(x_i)

    def gradient_sup_norm(self) -> float:
        """Exact sup over the box of ||grad f_i||_inf (gradient is affine)."""
        mid = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        if self.target is not None:
            return float(np.max(np.abs(mid - self.target) + half))
        row_max = np.abs(self.objective.P @ mid + self.objective.c) + np.abs(
            self.objective.P
        ) @ half
        return float(np.max(row_max))

    def box_minimum(self) -> float:
        """Exact minimum of f_i over the box for separable quadratics.

        Raises ConfigError for non-diagonal quadratic forms, where no
        separable closed form exists; callers must then supply f_lower.
        """
        if self.target is not None:
            dist = np.maximum(self.lo - self.target, 0.0) + np.maximum(
                self.target - self.hi, 0.0
            )
            return 0.5 * float(dist @ dist)
        P, c, d = self.objective.P, self.objective.c, self.objective.d
        if np.any(P != np.diag(np.diagonal(P))):
            raise ConfigError(
                f"agent {self.index}: non-separable quadratic objective, "
                "f_lower must be supplied"
            )
        total = d
        for p, cc, lo, hi in zip(np.diagonal(P), c, self.lo, self.hi):
            candidates = [0.5 * p * lo * lo + cc * lo, 0.5 * p * hi * hi + cc * hi]
            if p > 0 and lo <= -cc / p <= hi:
                v = -cc / p
                candidates.append(0.5 * p * v * v + cc * v)
            total += min(candidates)
        return float(total)


def eval_objective(agent: AgentSpec, x_i: np.ndarray) -> float:
    """Agent i's local cost at x_i."""
    return agent.objective_value(np.asarray(x_i, dtype=float))


class ConstraintSet:
    """Coupled inequality constraints g(x) <= 0 over the ensemble state.

    Concrete implementations supply evaluation, the full Jacobian, and the
    per-agent Jacobian block, plus enough structure to derive (or declare)
    the 1-norm Lipschitz constants used by the noise calibration.
    """

    m: int
    n: int
    slater: np.ndarray
    agent_dims: tuple[int, ...]

    def __init__(self, agent_dims: Sequence[int], slater):
        self.agent_dims = tuple(int(d) for d in agent_dims)
        self.n = sum(self.agent_dims)
        offsets = np.concatenate([[0], np.cumsum(self.agent_dims)])
        self._offsets = offsets
        self.slater = _as_vector(slater, "slater point")
        if self.slater.size != self.n:
            raise ValueError("Slater point dimension does not match ensemble")

    def agent_slice(self, i: int) -> slice:
        if not 0 <= i < len(self.agent_dims):
            raise ValueError(f"agent index {i} out of range")
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian_block(self, x: np.ndarray, i: int) -> np.ndarray:
        return self.jacobian(x)[:, self.agent_slice(i)]

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected ensemble vector of length {self.n}")
        return x


class QuadraticConstraintSet(ConstraintSet):
    """g_j(x) = 0.5 x'Q_j x + c_j'x + d_j with every Q_j positive semidefinite.

    Q is held dense (problems here are small); block builders keep the
    user-facing representation sparse by agent pair.
    """

    def __init__(self, agent_dims, Q, c, d, slater):
        super().__init__(agent_dims, slater)
        Q = np.asarray(Q, dtype=float)
        c = np.asarray(c, dtype=float)
        d = np.asarray(d, dtype=float).ravel()
        if Q.ndim != 3 or Q.shape[1] != self.n or Q.shape[2] != self.n:
            raise ValueError("Q must have shape (m, n, n)")
        if c.shape != (Q.shape[0], self.n) or d.shape != (Q.shape[0],):
            raise ValueError("c, d shapes inconsistent with Q")
        for j in range(Q.shape[0]):
            if not np.allclose(Q[j], Q[j].T, atol=1e-12):
                raise ValueError(f"constraint {j + 1}: Q must be symmetric")
            if np.linalg.eigvalsh(Q[j]).min() < -_PSD_TOL:
                raise ConfigError(
                    f"constraint {j + 1}: quadratic form is not positive semidefinite"
                )
        self.m = Q.shape[0]
        self.Q = Q
        self.c = c
        self.d = d

    @classmethod
    def from_blocks(cls, agent_dims, constraints, slater):
        """Build from sparse per-constraint specs.

        Each spec is a dict with keys:
          offset: scalar d_j
          blocks: list of (agent_a, agent_b, matrix) quadratic blocks, 0-based;
                  (a, b) with a != b is mirrored to keep Q symmetric
          linear: dict agent -> vector
          squared_distances: list of (a, b) pairs, shorthand adding
                  ||x_a - x_b||^2 for equal-dimension agents
        """
        dims = tuple(int(x) for x in agent_dims)
        n = sum(dims)
        offsets = np.concatenate([[0], np.cumsum(dims)])

        def sl(i):
            return slice(int(offsets[i]), int(offsets[i + 1]))

        m = len(constraints)
        Q = np.zeros((m, n, n))
        C = np.zeros((m, n))
        d = np.zeros(m)
        for j, spec in enumerate(constraints):
            d[j] = float(spec.get("offset", 0.0))
            for a, b in spec.get("squared_distances", []):
                if dims[a] != dims[b]:
                    raise ValueError("squared_distances needs equal agent dims")
                eye = np.eye(dims[a])
                Q[j, sl(a), sl(a)] += 2.0 * eye
                Q[j, sl(b), sl(b)] += 2.0 * eye
                Q[j, sl(a), sl(b)] -= 2.0 * eye
                Q[j, sl(b), sl(a)] -= 2.0 * eye
            for a, b, block in spec.get("blocks", []):
                block = np.asarray(block, dtype=float)
                if block.shape != (dims[a], dims[b]):
                    raise ValueError(
                        f"constraint {j + 1}: block ({a}, {b}) has wrong shape"
                    )
                Q[j, sl(a), sl(b)] += block
                if a != b:
                    Q[j, sl(b), sl(a)] += block.T
            for a, vec in spec.get("linear", {}).items():
                vec = _as_vector(vec, "linear coefficient")
                if vec.size != dims[a]:
                    raise ValueError(
                        f"constraint {j + 1}: linear term for agent {a} has wrong size"
                    )
                C[j, sl(a)] += vec
        return cls(dims, Q, C, d, slater)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_dim(x)
        return 0.5 * ((self.Q @ x) @ x) + self.c @ x + self.d

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = self._check_dim(x)
        return self.Q @ x + self.c

    def hessian_combination(self, mu: np.ndarray) -> np.ndarray:
        """Sum_j mu_j Q_j, the constraint part of the Lagrangian Hessian."""
        return np.einsum("j,jkl->kl", mu, self.Q)


class CallbackConstraintSet(ConstraintSet):
    """Opaque constraints supplied as callables.

    Because nothing analytic is known about them, the caller must declare the
    1-norm Lipschitz constants (constraint_lipschitz for g itself and one
    gradient_lipschitz entry per agent for the Jacobian blocks); those feed
    the noise calibration unchanged.
    """

    def __init__(
        self,
        agent_dims,
        m: int,
        func: Callable[[np.ndarray], np.ndarray],
        jacobian_func: Callable[[np.ndarray], np.ndarray],
        slater,
        constraint_lipschitz: float,
        gradient_lipschitz: Sequence[float],
    ):
        super().__init__(agent_dims, slater)
        self.m = int(m)
        self._func = func
        self._jac = jacobian_func
        if constraint_lipschitz <= 0:
            raise ConfigError("constraint_lipschitz must be positive")
        lg = [float(v) for v in gradient_lipschitz]
        if len(lg) != len(self.agent_dims) or any(v <= 0 for v in lg):
            raise ConfigError("gradient_lipschitz needs one positive entry per agent")
        self.constraint_lipschitz = float(constraint_lipschitz)
        self.gradient_lipschitz = tuple(lg)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self._func(self._check_dim(x)), dtype=float).ravel()
        if out.size != self.m:
            raise ValueError("constraint callback returned wrong dimension")
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self._jac(self._check_dim(x)), dtype=float)
        if out.shape != (self.m, self.n):
            raise ValueError("jacobian callback returned wrong shape")
        return out


@dataclass(frozen=True)
class ProblemSpec:
    """The full multi-agent program: agents, coupled constraints, and an
    optional explicit lower bound on the total objective over the box."""

    agents: tuple[AgentSpec, ...]
    constraints: ConstraintSet
    f_lower: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        dims = tuple(a.dim for a in self.agents)
        if dims != self.constraints.agent_dims:
            raise ValueError("agent dimensions disagree with constraint set")
        for k, a in enumerate(self.agents):
            if a.index != k:
                raise ValueError("agent indices must be 0..N-1 in order")

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def dim(self) -> int:
        return self.constraints.n

    @property
    def num_constraints(self) -> int:
        return self.constraints.m

    def agent_slice(self, i: int) -> slice:
        return self.constraints.agent_slice(i)

    @property
    def lo(self) -> np.ndarray:
        return np.concatenate([a.lo for a in self.agents])

    @property
    def hi(self) -> np.ndarray:
        return np.concatenate([a.hi for a in self.agents])

    def box_centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def objective(self, x: np.ndarray) -> float:
        return sum(
            a.objective_value(x[self.agent_slice(i)]) for i, a in enumerate(self.agents)
        )

    def objective_gradient(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for i, a in enumerate(self.agents):
            sl = self.agent_slice(i)
            out[sl] = a.objective_gradient(x[sl])
        return out

    def agent_costs(self, x: np.ndarray) -> np.ndarray:
        return np.array(
            [a.objective_value(x[self.agent_slice(i)]) for i, a in enumerate(self.agents)]
        )


def eval_constraints(constraints: ConstraintSet, x: np.ndarray) -> np.ndarray:
    """g(x) componentwise."""
    return constraints.evaluate(np.asarray(x, dtype=float))


def eval_jacobian_block(constraints: ConstraintSet, x: np.ndarray, i: int) -> np.ndarray:
    """The m x n_i Jacobian block of g with respect to agent i's state."""
    return constraints.jacobian_block(np.asarray(x, dtype=float), i)


@dataclass(frozen=True)
class DerivedConstants:
    """Everything the schedule, calibration, and incentive bounds consume.

    K[i]    1-norm Lipschitz constant of f_i over its box
    D[i]    1-norm diameter of the box
    K_g     1-norm Lipschitz constant of g over the ensemble box
    L_g[i]  1-norm Lipschitz constant of x -> g_{x_i}(x), with the matrix
            output flattened to a vector before taking the 1-norm; exactly 0
            for agents appearing only in affine constraints, whose Jacobian
            blocks are constant and therefore leak nothing
    """

    K: np.ndarray
    D: np.ndarray
    K_g: float
    L_g: np.ndarray
    f_lower: float
    M_radius: float

    def __post_init__(self):
        if np.any(self.K < 0) or np.any(self.D < 0):
            raise ValueError("Lipschitz constants and diameters must be nonnegative")
        if self.K_g <= 0:
            raise ValueError("constraints must depend on the state (K_g > 0)")
        if np.any(self.L_g < 0):
            raise ValueError("gradient Lipschitz constants must be nonnegative")
        if self.M_radius <= 0:
            raise ValueError("dual-ball radius must be positive")


def derive_constants(problem: ProblemSpec) -> DerivedConstants:
    """Compute all constants analytically.

    Gradients of quadratics are affine, so suprema over boxes reduce to
    interval bounds that are exact at box corners. Underestimating any of
    these would silently weaken the privacy calibration, which is why this
    path never samples.
    """
    agents = problem.agents
    K = np.array([a.gradient_sup_norm() for a in agents])
    D = np.array([float(np.sum(a.hi - a.lo)) for a in agents])

    cs = problem.constraints
    if isinstance(cs, QuadraticConstraintSet):
        lo, hi = problem.lo, problem.hi
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        # entry (j, col) of the Jacobian is affine: Q_j[col] @ x + c[j, col]
        entry_max = np.abs(cs.Q @ mid + cs.c) + np.abs(cs.Q) @ half  # (m, n)
        K_g = float(np.max(entry_max.sum(axis=0)))
        # the map x -> vec(g_{x_i}(x)) is linear with constant coefficient
        # rows Q_j[coord]; its l1->l1 norm is the max absolute column sum
        L_g = np.empty(len(agents))
        for i in range(len(agents)):
            sl = cs.agent_slice(i)
            cols = np.abs(cs.Q[:, sl, :]).sum(axis=(0, 1))  # (n,)
            L_g[i] = float(np.max(cols))
    elif isinstance(cs, CallbackConstraintSet):
        K_g = cs.constraint_lipschitz
        L_g = np.array(cs.gradient_lipschitz)
    else:
        raise ConfigError("unknown constraint set type")

    if problem.f_lower is not None:
        f_lower = float(problem.f_lower)
    else:
        f_lower = float(sum(a.box_minimum() for a in agents))

    xbar = cs.slater
    g_bar = eval_constraints(cs, xbar)
    if np.any(g_bar >= 0):
        raise SlaterViolationError(
            f"declared Slater point has g = {g_bar}; all components must be < 0"
        )
    f_bar = sum(
        eval_objective(a, xbar[problem.agent_slice(i)]) for i, a in enumerate(agents)
    )
    m_radius = (f_bar - f_lower) / float(np.min(-g_bar))
    return DerivedConstants(K=K, D=D, K_g=K_g, L_g=L_g, f_lower=f_lower, M_radius=m_radius)
