"""Howard policy iteration for one implicit time step.

Alternates the node-wise argmax of the step residual with an exact linear
solve of the selected policy system until the relative change of the iterate
drops below tolerance or the policy repeats exactly.  Under the verified
matrix conditions (Z-matrix, diagonal dominance, and an impulse chain from
every d = 1 node to a continuation node) the iterates are entrywise
nondecreasing and converge in finitely many steps, which is asserted at
verification level ``per-step`` and above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linsolve, scheme
from .grid import Grid, StencilSet
from .model import ModelParams
from .scheme import Policy, SparseSystem

# Relative stopping metric falls back to absolute differences below this.
RELATIVE_FLOOR = 1e-12

VERIFICATION_LEVELS = ("off", "per-step", "exhaustive")


class PolicyIterationError(RuntimeError):
    """Policy iteration failed; carries the trace collected so far."""

    def __init__(self, message: str, trace: "PiterTrace | None" = None):
        super().__init__(message)
        self.trace = trace


class VerificationError(RuntimeError):
    """A matrix or impulse-graph condition failed; carries the report."""

    def __init__(self, message: str, report: "VerificationReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class PiterConfig:
    """Stopping rule and safeguards for one policy-iteration call."""

    tol: float = 1e-8
    max_iter: int = 200
    solver_tol: float = 1e-10
    verification: str = "per-step"

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol!r}")
        if not (isinstance(self.max_iter, int) and self.max_iter >= 1):
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if self.verification not in VERIFICATION_LEVELS:
            raise ValueError(
                f"verification must be one of {VERIFICATION_LEVELS}, got {self.verification!r}"
            )


@dataclass
class PiterTrace:
    """Per-iteration diagnostics: policy digests, stopping metrics, and the
    smallest entrywise increment of each new iterate (negative = decrease)."""

    policy_digests: list[str] = field(default_factory=list)
    stop_metrics: list[float] = field(default_factory=list)
    min_increments: list[float] = field(default_factory=list)
    converged_by: str = ""

    @property
    def iterations(self) -> int:
        return len(self.stop_metrics)


@dataclass
class VerificationReport:
    """Outcome of the matrix/impulse-graph checks for one assembled system.

    ``findings`` lists tolerated degradations (paper-mode extrapolation rows);
    ``hard_failures`` lists conditions whose failure makes the solve unsound.
    """

    mode: str
    diag_positive: bool
    z_matrix_ok: bool
    interior_dominance_ok: bool
    boundary_dominance_ok: bool
    impulse_rows_ok: bool
    path_ok: bool
    failing_node: int | None
    min_interior_margin: float
    min_boundary_margin: float
    findings: list[str] = field(default_factory=list)
    hard_failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.hard_failures and not self.findings

    @property
    def sound(self) -> bool:
        return not self.hard_failures


def improve_policy(
    grid: Grid, p: ModelParams, st: StencilSet, v: np.ndarray, v_next: np.ndarray
) -> Policy:
    """Node-wise argmax policy of the step residual at the iterate ``v``."""
    _, policy = scheme.residual(grid, p, st, v, v_next)
    return policy


def verify_theorem_conditions(
    grid: Grid,
    policy: Policy,
    system: SparseSystem,
    z_tol: float = 1e-12,
    margin_tol: float = 1e-10,
) -> VerificationReport:
    """Check the matrix and impulse-graph conditions behind convergence.

    Continuation rows of A(P) must form a Z-matrix with positive diagonal,
    strictly dominant on rows untouched by cap handling and positively
    dominant on the rest; impulse rows must be weakly dominant with zero row
    sum; and the z-directed chain from every d = 1 node must reach a d = 0
    node within 2*q_bar moves.  In paper extrapolation mode, Z/dominance
    violations confined to extrapolated rows are reported as findings rather
    than failures.
    """
    a = system.matrix.tocoo()
    m = grid.n_nodes
    diag = system.matrix.diagonal()
    off = a.col != a.row

    findings: list[str] = []
    hard: list[str] = []

    diag_positive = bool(np.all(diag > 0))
    if not diag_positive:
        hard.append(f"nonpositive diagonal at row {int(np.argmin(diag))}")

    pos_off_rows = np.unique(a.row[off & (a.data > z_tol)])
    z_matrix_ok = pos_off_rows.size == 0
    if not z_matrix_ok:
        outside = np.setdiff1d(pos_off_rows, np.flatnonzero(system.boundary_rows))
        if system.mode == "paper" and outside.size == 0:
            findings.append(
                f"paper mode: positive off-diagonals on {pos_off_rows.size} extrapolated rows"
            )
        else:
            where = outside[0] if outside.size else pos_off_rows[0]
            hard.append(f"positive off-diagonal entry on row {int(where)}")

    abs_off = np.zeros(m)
    np.add.at(abs_off, a.row[off], np.abs(a.data[off]))
    margin = diag - abs_off

    interior = ~system.impulse_mask & ~system.boundary_rows
    boundary = system.boundary_rows
    min_interior = float(margin[interior].min()) if interior.any() else np.inf
    min_boundary = float(margin[boundary].min()) if boundary.any() else np.inf

    interior_dominance_ok = min_interior >= 1.0 - margin_tol
    if not interior_dominance_ok:
        hard.append(
            f"interior dominance margin {min_interior:.3e} < 1 at row "
            f"{int(np.flatnonzero(interior)[np.argmin(margin[interior])])}"
        )
    boundary_dominance_ok = min_boundary > 0.0
    if not boundary_dominance_ok:
        row = int(np.flatnonzero(boundary)[np.argmin(margin[boundary])])
        msg = f"boundary-row dominance margin {min_boundary:.3e} <= 0 at row {row}"
        if system.mode == "paper":
            findings.append("paper mode: " + msg)
        else:
            hard.append(msg)

    row_sums = np.asarray(system.matrix.sum(axis=1)).ravel()
    imp = system.impulse_mask
    impulse_rows_ok = True
    if imp.any():
        impulse_rows_ok = bool(
            np.all(np.abs(row_sums[imp]) <= z_tol)
            and np.all(np.abs(diag[imp] - 1.0) <= z_tol)
        )
        if not impulse_rows_ok:
            hard.append("impulse row deviates from (diag 1, neighbor -1, row sum 0)")

    path_ok, failing_node = _check_impulse_paths(grid, policy)
    if not path_ok:
        hard.append(
            f"no impulse chain from d=1 node {failing_node} reaches a continuation node"
        )

    return VerificationReport(
        mode=system.mode,
        diag_positive=diag_positive,
        z_matrix_ok=z_matrix_ok,
        interior_dominance_ok=interior_dominance_ok,
        boundary_dominance_ok=boundary_dominance_ok,
        impulse_rows_ok=impulse_rows_ok,
        path_ok=path_ok,
        failing_node=failing_node,
        min_interior_margin=min_interior,
        min_boundary_margin=min_boundary,
        findings=findings,
        hard_failures=hard,
    )


def _check_impulse_paths(grid: Grid, policy: Policy) -> tuple[bool, int | None]:
    """Walk z-directed inventory neighbors from every d = 1 node.

    Succeeds when every walk lands on a d = 0 node within 2*q_bar moves;
    walks that leave the inventory band or cycle mark the starting node.
    """
    d = policy.d.astype(bool)
    cur = np.flatnonzero(d)
    start = cur.copy()
    n_alpha, n_q = grid.n_alpha, grid.n_q
    for _ in range(n_q - 1):
        if cur.size == 0:
            return True, None
        step = policy.z[cur].astype(np.int64)
        nxt_jj = cur // n_alpha + step
        escaped = (nxt_jj < 0) | (nxt_jj >= n_q)
        if escaped.any():
            return False, int(start[escaped][0])
        cur = cur + step * n_alpha
        alive = d[cur]
        cur, start = cur[alive], start[alive]
    if cur.size:
        return False, int(start[0])
    return True, None


def _stopping_metric(v_new: np.ndarray, v_old: np.ndarray) -> float:
    err = np.abs(v_new - v_old)
    denom = np.abs(v_new)
    rel = np.where(denom >= RELATIVE_FLOOR, err / np.maximum(denom, RELATIVE_FLOOR), err)
    return float(rel.max())


def iterate(
    grid: Grid,
    p: ModelParams,
    st: StencilSet,
    v0: np.ndarray,
    v_next: np.ndarray,
    cfg: PiterConfig = PiterConfig(),
) -> tuple[np.ndarray, Policy, PiterTrace]:
    """Run policy iteration from warm start ``v0`` for one time step.

    Returns the converged value vector, the policy whose system it solves,
    and the iteration trace.  Raises PolicyIterationError when the iteration
    budget is exhausted or (at verification per-step and above) when an
    iterate decreases by more than 10x the solver tolerance.
    """
    v = np.array(v0, dtype=float, copy=True)
    v_next = np.asarray(v_next, dtype=float)
    trace = PiterTrace()
    prev_policy: Policy | None = None

    for _ in range(cfg.max_iter):
        policy = improve_policy(grid, p, st, v, v_next)
        if prev_policy is not None and policy.equals(prev_policy):
            trace.converged_by = "policy-repeat"
            return v, prev_policy, trace

        system = scheme.assemble_system(grid, p, st, policy, v_next)
        if cfg.verification != "off":
            report = verify_theorem_conditions(grid, policy, system)
            if not report.sound:
                raise VerificationError(
                    "; ".join(report.hard_failures), report
                )

        rep = linsolve.solve(system.matrix, system.rhs, tol=cfg.solver_tol)
        v_new = rep.solution
        increment = float((v_new - v).min())
        metric = _stopping_metric(v_new, v)
        trace.policy_digests.append(policy.digest())
        trace.stop_metrics.append(metric)
        trace.min_increments.append(increment)

        if cfg.verification != "off" and increment < -10.0 * cfg.solver_tol:
            raise PolicyIterationError(
                f"iterate decreased by {-increment:.3e} "
                f"(> 10x solver tol {cfg.solver_tol:.1e})",
                trace,
            )

        v = v_new
        prev_policy = policy
        if metric < cfg.tol:
            trace.converged_by = "metric"
            if cfg.verification == "exhaustive":
                _check_complementarity(grid, p, st, v, v_next, cfg)
            return v, policy, trace

    raise PolicyIterationError(
        f"no convergence within {cfg.max_iter} iterations "
        f"(last metric {trace.stop_metrics[-1]:.3e})",
        trace,
    )


def _check_complementarity(grid, p, st, v, v_next, cfg) -> None:
    """At termination the node-wise residual max must vanish to solve scale."""
    res, _ = scheme.residual(grid, p, st, v, v_next)
    scale = float(np.max(np.abs(v), initial=1.0))
    bound = (10.0 * cfg.tol * max(1.0, scale) + 100.0 * cfg.solver_tol) / grid.d_t
    worst = float(np.max(np.abs(res)))
    if worst > bound:
        raise PolicyIterationError(
            f"complementarity residual {worst:.3e} exceeds bound {bound:.3e}"
        )
