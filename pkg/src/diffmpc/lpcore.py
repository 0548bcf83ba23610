"""Self-contained dense linear-programming solver.

Problems are stated as  min c.x  subject to  A_eq x = b_eq,  A_ub x <= b_ub,
lb <= x <= ub  (infinite bounds allowed).  ``solve`` runs a two-phase primal
simplex on the standard-form conversion.  Pivoting is deterministic: largest
reduced cost with lowest-index tie-breaks, switching to Bland's rule on
degenerate stalls, which keeps the method anti-cycling while staying much
faster than pure Bland on the dispatch-sized problems.
``enumerate_vertices_oracle`` is a brute-force reference for tiny problems,
used only in tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

DEFAULT_FEAS_TOL = 1e-8
DEFAULT_OPT_TOL = 1e-9
_STALL_LIMIT = 64


class BuildError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class OracleError(ValueError):
    pass


@dataclass
class LpProblem:
    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.size
        self.a_eq, self.b_eq = _check_system(self.a_eq, self.b_eq, n, "eq")
        self.a_ub, self.b_ub = _check_system(self.a_ub, self.b_ub, n, "ub")
        self.lb = _check_bound(self.lb, n, -np.inf)
        self.ub = _check_bound(self.ub, n, np.inf)
        if not np.all(np.isfinite(self.c)):
            raise BuildError("cost vector must be finite")
        if np.any(self.lb > self.ub):
            raise BuildError("lb > ub for some variable")
        if self.names and len(self.names) != n:
            raise BuildError("name table length mismatch")
        if not self.names:
            self.names = [f"x{j}" for j in range(n)]

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0


def _check_system(a, b, n, tag):
    if a is None and b is None:
        return np.zeros((0, n)), np.zeros(0)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.size == 0:
        return np.zeros((0, n)), np.zeros(0)
    if a.shape[1] != n or a.shape[0] != b.size:
        raise BuildError(f"{tag} system has inconsistent dimensions")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise BuildError(f"{tag} system has non-finite entries")
    return a, b


def _check_bound(v, n, default):
    if v is None:
        return np.full(n, default)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size != n:
        raise BuildError("bound vector length mismatch")
    if np.any(np.isnan(v)):
        raise BuildError("bounds may not be NaN")
    return v


class _StandardForm:
    """min c.y, A y = b, y >= 0, plus bookkeeping to map y back to x.

    Variables with a finite lower bound are shifted, upper-only ones are
    mirrored, free ones are split into a positive pair.  Two-sided bounds
    add one inequality row each; every inequality row gets a slack column.
    Equality rows come first in A.
    """

    def __init__(self, p: LpProblem):
        n = p.n
        shift = np.zeros(n)
        col_var = []
        col_sign = []
        for j in range(n):
            lo, hi = p.lb[j], p.ub[j]
            if np.isfinite(lo):
                shift[j] = lo
                col_var.append(j)
                col_sign.append(1.0)
            elif np.isfinite(hi):
                shift[j] = hi
                col_var.append(j)
                col_sign.append(-1.0)
            else:
                col_var.extend([j, j])
                col_sign.extend([1.0, -1.0])
        ns = len(col_var)
        T = np.zeros((n, ns))
        T[col_var, np.arange(ns)] = col_sign
        self.T = T
        self.shift = shift
        self.n_struct = ns

        two_sided = np.nonzero(np.isfinite(p.lb) & np.isfinite(p.ub))[0]
        bound_a = np.zeros((two_sided.size, n))
        bound_a[np.arange(two_sided.size), two_sided] = 1.0
        bound_b = p.ub[two_sided]

        a_ub = np.vstack([p.a_ub, bound_a])
        b_ub = np.concatenate([p.b_ub, bound_b])

        eq_a = p.a_eq @ T
        eq_b = p.b_eq - p.a_eq @ shift
        ub_a = a_ub @ T
        ub_b = b_ub - a_ub @ shift

        self.n_eq = eq_a.shape[0]
        m_ub = ub_a.shape[0]
        self.A = np.block([
            [eq_a, np.zeros((self.n_eq, m_ub))],
            [ub_a, np.eye(m_ub)],
        ])
        self.b = np.concatenate([eq_b, ub_b])
        self.c = np.concatenate([p.c @ T, np.zeros(m_ub)])

    def to_x(self, y: np.ndarray) -> np.ndarray:
        return self.shift + self.T @ y[: self.n_struct]


def solve(p: LpProblem, feas_tol: float = DEFAULT_FEAS_TOL,
          opt_tol: float = DEFAULT_OPT_TOL, max_iter: int = 500000) -> LpSolution:
    """Two-phase primal simplex; see the module docstring for pivot policy.

    The final basic solution is re-solved against the unpivoted data, so
    feasibility residuals do not inherit tableau round-off.
    """
    sf = _StandardForm(p)
    A = sf.A.copy()
    b = sf.b.copy()
    m, n = A.shape

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # starting basis: +1 slack columns where usable, artificials elsewhere
    basis = np.full(m, -1, dtype=int)
    need_art = []
    for i in range(m):
        if i >= sf.n_eq and not flip[i]:
            basis[i] = sf.n_struct + (i - sf.n_eq)
        else:
            need_art.append(i)

    iters = 0
    if need_art:
        n_art = len(need_art)
        A1 = np.hstack([A, np.zeros((m, n_art))])
        A1[need_art, n + np.arange(n_art)] = 1.0
        c1 = np.concatenate([np.zeros(n), np.ones(n_art)])
        basis[need_art] = n + np.arange(n_art)

        status, basis, it1 = _simplex(A1, b, c1, basis, opt_tol, max_iter)
        iters += it1
        if status == UNBOUNDED:
            raise SolverError("phase-1 subproblem reported unbounded")
        xb = _resolve_basis(A1, b, basis)
        phase1 = float(c1[basis] @ xb)
        if phase1 > feas_tol * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(status=INFEASIBLE, iterations=iters)

        basis, keep = _purge_artificials(A1, b, basis, n)
        A, b, basis = A[keep], b[keep], basis[keep]
        m = A.shape[0]

    status, basis, it2 = _simplex(A, b, sf.c, basis, opt_tol, max_iter)
    iters += it2
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, iterations=iters)

    y = np.zeros(n)
    y[basis] = _resolve_basis(A, b, basis)
    y[np.abs(y) < 1e-13] = 0.0
    x = sf.to_x(y)
    obj = float(p.c @ x)
    return LpSolution(status=OPTIMAL, x=x, objective=obj, iterations=iters)


def _resolve_basis(A, b, basis):
    Bmat = A[:, basis]
    try:
        return np.linalg.solve(Bmat, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(Bmat, b, rcond=None)[0]


def _basis_tableau(A, b, basis):
    """B^-1 [A | b] computed directly, avoiding pivot-order failures."""
    rhs = np.hstack([A, b.reshape(-1, 1)])
    Bmat = A[:, basis]
    try:
        return np.linalg.solve(Bmat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular basis matrix: {exc}") from exc


def _purge_artificials(A1, b, basis, n):
    """After phase 1, pivot zero-valued basic artificials onto real columns
    where possible and flag rows with no real support as redundant."""
    m = A1.shape[0]
    T = _basis_tableau(A1, b, basis)
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n:
            cand = np.nonzero(np.abs(T[i, :n]) > 1e-9)[0]
            if cand.size == 0:
                keep[i] = False
                continue
            j = int(cand[0])
            T[i] /= T[i, j]
            col = T[:, j].copy()
            col[i] = 0.0
            T -= np.outer(col, T[i])
            basis[i] = j
    return basis, keep


def _simplex(A, b, c, basis, opt_tol, max_iter):
    """Primal simplex on equality form from a feasible starting basis.

    Tableau carries the objective row as its last row: L = c_B B^-1 A - c,
    rhs = current objective.  Entering column: argmax L_j > tol (lowest
    index on ties); after _STALL_LIMIT degenerate steps, lowest eligible
    index (Bland) until the objective strictly improves again.
    """
    m, n = A.shape
    basis = basis.copy()
    T = np.empty((m + 1, n + 1))
    T[:m] = _basis_tableau(A, b, basis)
    T[m, :n] = c[basis] @ T[:m, :n] - c
    T[m, n] = c[basis] @ T[:m, n]

    stall = 0
    bland = False
    last_obj = T[m, n]
    it = 0
    while True:
        if it >= max_iter:
            raise SolverError(f"simplex iteration limit {max_iter} exceeded")
        L = T[m, :n]
        if bland:
            elig = np.nonzero(L > opt_tol)[0]
            if elig.size == 0:
                return OPTIMAL, basis, it
            j = int(elig[0])
        else:
            j = int(np.argmax(L))
            if L[j] <= opt_tol:
                return OPTIMAL, basis, it

        col = T[:m, j]
        pos = col > 1e-9
        if not np.any(pos):
            return UNBOUNDED, basis, it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, n][pos] / col[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + 1e-12)[0]
        r = int(ties[np.argmin(basis[ties])])

        T[r] /= T[r, j]
        upd = T[:, j].copy()
        upd[r] = 0.0
        T -= np.outer(upd, T[r])
        basis[r] = j
        it += 1

        obj = T[m, n]
        if obj < last_obj - 1e-12:
            stall = 0
            bland = False
            last_obj = obj
        else:
            stall += 1
            if stall > _STALL_LIMIT:
                bland = True


def enumerate_vertices_oracle(p: LpProblem, box: float = 1e6) -> LpSolution:
    """Exact optimum of a tiny LP by basic-solution enumeration (test oracle).

    The feasible set is intersected with a large box so vertices always
    exist; unboundedness shows up as the optimum running away when the box
    is enlarged.
    """
    n_rows = p.a_eq.shape[0] + p.a_ub.shape[0]
    if p.n + n_rows > 20:
        raise OracleError("oracle size guard exceeded (vars + constraints > 20)")

    # dependent or inconsistent equality rows would make every active-set
    # matrix singular, so reduce them up front
    if p.a_eq.shape[0]:
        aug = np.hstack([p.a_eq, p.b_eq.reshape(-1, 1)])
        if np.linalg.matrix_rank(aug) > np.linalg.matrix_rank(p.a_eq):
            return LpSolution(status=INFEASIBLE)
        keep = []
        for i in range(p.a_eq.shape[0]):
            trial = p.a_eq[keep + [i]]
            if np.linalg.matrix_rank(trial) > len(keep):
                keep.append(i)
        if len(keep) < p.a_eq.shape[0]:
            p = LpProblem(c=p.c, a_eq=p.a_eq[keep], b_eq=p.b_eq[keep],
                          a_ub=p.a_ub, b_ub=p.b_ub, lb=p.lb, ub=p.ub,
                          names=list(p.names))

    v1 = _enumerate_box(p, box)
    if v1 is None:
        return LpSolution(status=INFEASIBLE)
    v2 = _enumerate_box(p, 4.0 * box)
    obj1, _ = v1
    obj2, x2 = v2
    if obj2 < obj1 - 1e-3 * max(1.0, abs(obj1)):
        return LpSolution(status=UNBOUNDED)
    return LpSolution(status=OPTIMAL, x=x2, objective=obj2)


def _enumerate_box(p: LpProblem, box: float):
    n = p.n
    lb = np.where(np.isfinite(p.lb), p.lb, -box)
    ub = np.where(np.isfinite(p.ub), p.ub, box)

    G = np.vstack([p.a_eq, p.a_ub, np.eye(n), -np.eye(n)])
    h = np.concatenate([p.b_eq, p.b_ub, ub, -lb])
    me = p.a_eq.shape[0]
    n_free = n - me
    if n_free < 0:
        return None
    idx_pool = np.arange(me, G.shape[0])

    combos = np.asarray(list(itertools.combinations(idx_pool, n_free)), dtype=int)
    if combos.size == 0 and n_free > 0:
        return None
    if n_free == 0:
        combos = np.zeros((1, 0), dtype=int)
    active = np.hstack([
        np.broadcast_to(np.arange(me), (combos.shape[0], me)),
        combos,
    ]).astype(int)

    mats = G[active]
    vecs = h[active]
    dets = np.abs(np.linalg.det(mats))
    ok = dets > 1e-9
    if not np.any(ok):
        return None
    xs = np.linalg.solve(mats[ok], vecs[ok][..., None])[..., 0]

    # solved systems have modest entries, so residuals stay ~1e-10 * |x|;
    # anything looser starts accepting genuinely infeasible box-scale points
    tol = 1e-8 * np.maximum(1.0, np.abs(xs).max(axis=1)) + 1e-9
    feas = np.ones(xs.shape[0], dtype=bool)
    if p.a_ub.size:
        feas &= np.max(p.a_ub @ xs.T - p.b_ub[:, None], axis=0) <= tol
    if p.a_eq.size:
        feas &= np.max(np.abs(p.a_eq @ xs.T - p.b_eq[:, None]), axis=0) <= tol
    feas &= np.all(xs >= lb[None, :] - tol[:, None], axis=1)
    feas &= np.all(xs <= ub[None, :] + tol[:, None], axis=1)
    if not np.any(feas):
        return None
    objs = xs[feas] @ p.c
    k = int(np.argmin(objs))
    return float(objs[k]), xs[feas][k]


def write_lp(path, p: LpProblem) -> None:
    """Plain-text dump in CPLEX-LP style for external cross-checking."""
    def row_terms(row):
        return "".join(
            f"{'+' if a >= 0 else '-'} {abs(a):.12g} {nm} "
            for a, nm in zip(row, p.names) if a != 0.0
        )

    with open(path, "w") as f:
        f.write("Minimize\n obj: ")
        f.write(row_terms(p.c) or "0 " + p.names[0])
        f.write("\nSubject To\n")
        for i, (row, rhs) in enumerate(zip(p.a_eq, p.b_eq)):
            f.write(f" e{i}: {row_terms(row)}= {rhs:.12g}\n")
        for i, (row, rhs) in enumerate(zip(p.a_ub, p.b_ub)):
            f.write(f" u{i}: {row_terms(row)}<= {rhs:.12g}\n")
        f.write("Bounds\n")
        for j, nm in enumerate(p.names):
            lo, hi = p.lb[j], p.ub[j]
            if not np.isfinite(lo) and not np.isfinite(hi):
                f.write(f" {nm} free\n")
            else:
                lo_s = f"{lo:.12g}" if np.isfinite(lo) else "-inf"
                hi_s = f"{hi:.12g}" if np.isfinite(hi) else "+inf"
                f.write(f" {lo_s} <= {nm} <= {hi_s}\n")
        f.write("End\n")
