"""Quantitative invertibility: certified radii, the contraction fixed-point
local inverse, inverse jets, and the constant-rank normal form.

Everything here works in the l-infinity norms (max norm on vectors,
max-row-sum subordinate norm on matrices).  Maps are supplied in closed
form with exact derivatives because the fixed-point loop must evaluate at
iterates off any fixed cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import compose, smooth_lip_bound
from .errors import CertificationError, InputError
from .expressions import SmoothMap
from .jet import LipCertificate, LipGrade, LipJet, certify, lip_grade
from .tensor import NormFamily, symmetrize_array

_ITERATION_CAP = 64


def _inf_norm(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.max(np.abs(v))) if v.size else 0.0


def matrix_inf_norm(mat) -> float:
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    return float(np.max(np.sum(np.abs(mat), axis=1)))


# ---------------------------------------------------------------------------
# Partial-pivot elimination
# ---------------------------------------------------------------------------


def pivot_solve(A, B):
    """Solve A X = B by Gaussian elimination with partial pivoting."""
    A = np.array(A, dtype=np.float64)
    B = np.array(B, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise InputError("pivot_solve needs a square matrix")
    vec = B.ndim == 1
    X = B.reshape(n, -1).copy()
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(A[col:, col])))
        if abs(A[pivot, col]) < 1e-300:
            raise InputError("matrix is singular to working precision")
        if pivot != col:
            A[[col, pivot]] = A[[pivot, col]]
            X[[col, pivot]] = X[[pivot, col]]
        inv_p = 1.0 / A[col, col]
        for row in range(col + 1, n):
            factor = A[row, col] * inv_p
            if factor != 0.0:
                A[row, col:] -= factor * A[col, col:]
                X[row] -= factor * X[col]
    for col in range(n - 1, -1, -1):
        X[col] /= A[col, col]
        for row in range(col):
            X[row] -= A[row, col] * X[col]
    return X[:, 0] if vec else X


def pivot_inverse(mat) -> tuple[np.ndarray, float]:
    """Inverse by partial-pivot elimination, with its condition number."""
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    inv = pivot_solve(mat, np.eye(mat.shape[0]))
    cond = matrix_inf_norm(mat) * matrix_inf_norm(inv)
    return inv, cond


# ---------------------------------------------------------------------------
# Invertibility radius
# ---------------------------------------------------------------------------


def radius_condition(grade: LipGrade, t: float) -> float:
    """The scalar majorant sum_{k=1}^{n} t^k/k! + t^gamma (increasing in t)."""
    total = sum(t**k / math.factorial(k) for k in range(1, grade.n + 1))
    return total + t**grade.gamma


def invertibility_radius(grade: LipGrade, M1M2: float) -> float:
    """Largest delta with radius_condition(t) <= 1/(2 M1 M2) for all t <= delta.

    The condition is continuous, increasing and 0 at t = 0, so delta is the
    root in the bracket [0, 10]; n = 0 admits the closed form
    (1/(2 M1 M2))**(1/eps), otherwise bisection to 1e-12.
    """
    if M1M2 <= 0:
        raise InputError("M1M2 must be positive")
    if grade.gamma < 1:
        raise InputError("the radius lemma needs gamma >= 1")
    target = 1.0 / (2.0 * M1M2)
    if grade.n == 0:
        return min(target ** (1.0 / grade.eps), 10.0)
    lo, hi = 0.0, 10.0
    if radius_condition(grade, hi) <= target:
        return hi
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if radius_condition(grade, mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Inverse problems and the fixed-point solver
# ---------------------------------------------------------------------------


@dataclass
class InverseProblem:
    """A local inversion task around x0 for a closed-form map.

    ``M1`` bounds the Lip-(gamma-1) norm of the derivative map, ``M2``
    bounds the inverse of the Jacobian at x0 (both caller-declared; M2 is
    checked against the computed inverse).  ``alpha`` is the working
    radius and must not exceed the certified invertibility radius.  The
    target neighbourhood is V0 = phi(x0) + dphi(x0)(B(0, alpha/2)).
    """

    phi: SmoothMap
    x0: np.ndarray
    M1: float
    M2: float
    alpha: float
    grade: LipGrade
    dphi0: np.ndarray = field(init=False, repr=False)
    dphi0_inv: np.ndarray = field(init=False, repr=False)
    condition: float = field(init=False)
    radius: float = field(init=False)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64).reshape(-1)
        if self.phi.dim_in != self.phi.dim_out or self.phi.dim_in != self.x0.size:
            raise InputError("inverse problems need a square map matching x0")
        if self.grade.gamma <= 1:
            raise InputError("inverse function machinery needs gamma > 1")
        if self.M1 <= 0 or self.M2 <= 0:
            raise InputError("M1 and M2 must be positive")
        self.dphi0 = self.phi.jacobian(self.x0)
        self.dphi0_inv, self.condition = pivot_inverse(self.dphi0)
        inv_norm = matrix_inf_norm(self.dphi0_inv)
        if inv_norm > self.M2 * (1 + 1e-12):
            raise InputError(
                f"declared M2={self.M2} is below the computed inverse norm {inv_norm:.6g}"
            )
        self.radius = invertibility_radius(
            lip_grade(self.grade.gamma - 1.0), self.M1 * self.M2
        )
        if not 0 < self.alpha <= self.radius * (1 + 1e-12):
            raise InputError(
                f"alpha={self.alpha} must lie in (0, {self.radius:.6g}] "
                "(the certified invertibility radius)"
            )

    def target_offset(self, y) -> float:
        """||dphi(x0)^{-1}(y - phi(x0))||; y is in V0 iff this is < alpha/2."""
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        return _inf_norm(self.dphi0_inv @ (y - self.phi(self.x0)))

    def contains_target(self, y) -> bool:
        return self.target_offset(y) < self.alpha / 2.0

    def sample_targets(self, count: int, seed: int = 0, fill: float = 0.9) -> np.ndarray:
        """Deterministic targets spread over V0 (fill < 1 stays interior)."""
        rng = np.random.default_rng(seed)
        p = self.x0.size
        u = rng.uniform(-1.0, 1.0, size=(count, p)) * (fill * self.alpha / 2.0)
        return self.phi(self.x0)[None, :] + u @ self.dphi0.T


@dataclass
class LocalInverseResult:
    x: np.ndarray
    iterations: int
    residual: float
    inside_ball: bool
    contraction_factors: list[float]
    trace: list[list[float]]

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "inside_ball": self.inside_ball,
            "contraction_factors": self.contraction_factors,
            "trace": self.trace,
        }


def solve_local_inverse(prob: InverseProblem, y, tol: float = 1e-12) -> LocalInverseResult:
    """Find x in B(x0, alpha) with phi(x) = y by the contraction iteration
    x -> x + dphi(x0)^{-1}(y - phi(x)).

    The per-step contraction factor is asserted against the guaranteed 1/2;
    exceeding the iteration cap or the factor signals violated
    preconditions, not slow convergence, and raises CertificationError.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not prob.contains_target(y):
        raise InputError(
            f"target offset {prob.target_offset(y):.6g} is not inside V0 "
            f"(alpha/2 = {prob.alpha / 2:.6g})"
        )
    x = prob.x0.copy()
    trace = [x.tolist()]
    factors: list[float] = []
    prev_step = None
    y_scale = 1.0 + _inf_norm(y)
    for iteration in range(1, _ITERATION_CAP + 1):
        step = prob.dphi0_inv @ (y - prob.phi(x))
        x = x + step
        trace.append(x.tolist())
        step_norm = _inf_norm(step)
        if prev_step is not None and prev_step > 0:
            factor = step_norm / prev_step
            factors.append(factor)
            if factor > 0.5 + 1e-9:
                raise CertificationError(
                    f"contraction factor {factor:.6g} exceeded the guaranteed 1/2 "
                    f"at iteration {iteration}"
                )
        prev_step = step_norm
        residual = _inf_norm(prob.phi(x) - y)
        if residual <= 1e-16 * y_scale or (step_norm <= tol and residual <= tol):
            break
    else:
        raise CertificationError(
            f"iteration cap {_ITERATION_CAP} exceeded (preconditions violated?)"
        )
    inside = _inf_norm(x - prob.x0) < prob.alpha
    if not inside:
        raise CertificationError("solution escaped the working ball B(x0, alpha)")
    return LocalInverseResult(x, iteration, residual, inside, factors, trace)


@dataclass
class InnerBallReport:
    """Check that B(x0, alpha/3) maps into V0 (so the inverse covers it)."""

    n_checked: int
    max_offset: float
    v0_radius: float

    @property
    def passed(self) -> bool:
        return self.max_offset < self.v0_radius

    def to_dict(self) -> dict:
        return {
            "n_checked": self.n_checked,
            "max_offset": self.max_offset,
            "v0_radius": self.v0_radius,
            "passed": self.passed,
        }


def verify_inner_ball(prob: InverseProblem, n_samples: int = 128, seed: int = 0) -> InnerBallReport:
    rng = np.random.default_rng(seed)
    p = prob.x0.size
    r = prob.alpha / 3.0
    pts = [prob.x0]
    for corner in range(min(2**p, 32)):
        signs = np.array([1.0 if (corner >> b) & 1 else -1.0 for b in range(p)])
        pts.append(prob.x0 + r * signs)
    pts.extend(prob.x0 + rng.uniform(-r, r, size=(n_samples, p)))
    max_off = max(prob.target_offset(prob.phi(np.asarray(x))) for x in pts)
    return InnerBallReport(len(pts), max_off, prob.alpha / 2.0)


# ---------------------------------------------------------------------------
# Inverse jets
# ---------------------------------------------------------------------------


def _inversion_level(minv: np.ndarray, k: int) -> np.ndarray:
    """k-th derivative tensor of matrix inversion at M, flattened to p^2 axes.

    d^k inv(M)[H_1..H_k] = (-1)^k sum over orderings of
    M^-1 H_(1) M^-1 ... H_(k) M^-1.
    """
    p = minv.shape[0]
    if k == 0:
        return minv.reshape(p * p)
    letters = "cdefgijk"
    subs = []
    operands = []
    left = "a"
    for slot in range(k):
        subs.append(left + letters[2 * slot])
        operands.append(minv)
        left = letters[2 * slot + 1]
    subs.append(left + "b")
    operands.append(minv)
    out = "ab" + letters[: 2 * k]
    base = np.einsum(",".join(subs) + "->" + out, *operands, optimize=True)
    base = base.reshape((p * p,) + (p * p,) * k)
    return (-1.0) ** k * math.factorial(k) * symmetrize_array(base, k)


def inverse_jet(
    prob: InverseProblem,
    grade: LipGrade,
    cloud,
    fam: NormFamily | None = None,
    tol: float = 1e-12,
) -> tuple[LipJet, LipCertificate]:
    """Jet of the local inverse over a cloud in V0, re-certified at ``grade``.

    Values come from the fixed-point solver; the first level inverts the
    Jacobian at the solved preimage; higher levels bootstrap through the
    composition calculus applied to (matrix inversion) o (dphi) o (inverse),
    symmetrizing each new level.
    """
    fam = fam or NormFamily.linf()
    cloud = np.atleast_2d(np.asarray(cloud, dtype=np.float64))
    p = prob.x0.size
    if cloud.shape[1] != p:
        raise InputError("cloud dimension does not match the problem")
    if grade.gamma > prob.grade.gamma + 1e-12:
        raise InputError("requested grade exceeds the problem's declared smoothness")
    solves = [solve_local_inverse(prob, y, tol) for y in cloud]
    xs = np.stack([s.x for s in solves])
    n = grade.n
    psi_levels = [xs.copy()]
    jac_inv = np.stack([pivot_inverse(prob.phi.jacobian(x))[0] for x in xs])
    if n >= 1:
        psi_levels.append(jac_inv.copy())
    for k in range(1, n):
        gamma_k = float(k + 1)
        gk = lip_grade(gamma_k)
        psi_jet = LipJet(gk, cloud, psi_levels[: k + 1], validate=False)
        dphi_levels = []
        for j in range(k + 1):
            D = prob.phi.derivative_tensor(xs, j + 1)
            dphi_levels.append(D.reshape((xs.shape[0], p * p) + (p,) * j))
        dphi_jet = LipJet(gk, xs, dphi_levels, validate=False)
        mats_flat = dphi_levels[0]
        inv_levels = [
            np.stack([_inversion_level(jac_inv[i], j) for i in range(xs.shape[0])])
            .reshape((xs.shape[0], p * p) + (p * p,) * j)
            for j in range(k + 1)
        ]
        inv_jet = LipJet(gk, mats_flat, inv_levels, validate=False)
        dpsi_jet = compose(inv_jet, compose(dphi_jet, psi_jet))
        top = dpsi_jet.levels[k].reshape((cloud.shape[0], p, p) + (p,) * k)
        new_level = np.stack(
            [symmetrize_array(top[i], k + 1) for i in range(cloud.shape[0])]
        )
        psi_levels.append(new_level)
    jet = LipJet(grade, cloud, psi_levels, validate=True)
    return jet, certify(jet, fam)


# ---------------------------------------------------------------------------
# Rank certificates
# ---------------------------------------------------------------------------


@dataclass
class RankCertificate:
    rank: int
    delta: float
    displacement_bound: float
    max_displacement: float
    n_checked: int
    all_invertible: bool
    witness: int | None

    @property
    def passed(self) -> bool:
        return self.all_invertible and self.max_displacement <= self.displacement_bound * (
            1 + 1e-9
        )

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "delta": self.delta,
            "displacement_bound": self.displacement_bound,
            "max_displacement": self.max_displacement,
            "n_checked": self.n_checked,
            "all_invertible": self.all_invertible,
            "witness": self.witness,
            "passed": self.passed,
        }


def perturbation_rank_check(
    jet: LipJet,
    x0,
    k: int,
    rows,
    cols,
    M2: float,
    matrix_shape: tuple[int, int],
    M1: float | None = None,
) -> RankCertificate:
    """Certify that a matrix-valued map keeps rank >= k near x0.

    The jet's outputs are row-major flattened (m, p) matrices.  The k x k
    minor at x0 (given row/column index sets, 0-based and strictly
    increasing) must be invertible with inverse norm at most M2; the
    radius from the scalar majorant then guarantees the minor stays
    invertible, which is re-verified on every cloud point inside it.
    M1 defaults to a conservative bound derived from the jet certificate.
    """
    m, p = matrix_shape
    if jet.dim_out != m * p:
        raise InputError(f"jet outputs {jet.dim_out} values, expected {m}x{p}")
    rows = tuple(int(r) for r in rows)
    cols = tuple(int(c) for c in cols)
    if len(rows) != k or len(cols) != k:
        raise InputError("index sets must have length k")
    if sorted(set(rows)) != list(rows) or sorted(set(cols)) != list(cols):
        raise InputError("index sets must be strictly increasing")
    i0 = x0 if isinstance(x0, (int, np.integer)) else jet.find_point(x0)
    values = jet.levels[0].reshape(jet.n_points, m, p)
    minor0 = values[i0][np.ix_(rows, cols)]
    try:
        inv0, _ = pivot_inverse(minor0)
    except InputError as exc:
        raise InputError(f"the k x k minor at the base point is singular: {exc}") from exc
    inv_norm = matrix_inf_norm(inv0)
    if inv_norm > M2 * (1 + 1e-12):
        raise InputError(
            f"declared M2={M2} is below the computed minor inverse norm {inv_norm:.6g}"
        )
    if M1 is None:
        # matrix inf-norm is at most k times the entrywise max, so scaling a
        # vector-linf certificate of the extracted minor map stays a bound
        sub = _extract_minor_jet(jet, matrix_shape, rows, cols)
        M1 = k * certify(sub, NormFamily.linf()).M
    delta = invertibility_radius(jet.grade, M1 * M2)
    bound = 1.0 / (2.0 * M2)
    center = jet.points[i0]
    inside = [
        i
        for i in range(jet.n_points)
        if _inf_norm(jet.points[i] - center) <= delta * (1 + 1e-12)
    ]
    max_disp = 0.0
    all_inv = True
    witness = None
    for i in inside:
        minor = values[i][np.ix_(rows, cols)]
        max_disp = max(max_disp, matrix_inf_norm(minor - minor0))
        try:
            pivot_inverse(minor)
        except InputError:
            all_inv = False
            if witness is None:
                witness = i
    return RankCertificate(k, delta, bound, max_disp, len(inside), all_inv, witness)


def _extract_minor_jet(jet: LipJet, matrix_shape, rows, cols) -> LipJet:
    m, p = matrix_shape
    out_idx = [r * p + c for r in rows for c in cols]
    levels = [L[:, out_idx] for L in jet.levels]
    return LipJet(jet.grade, jet.points, levels, validate=False)


# ---------------------------------------------------------------------------
# Constant-rank normal form
# ---------------------------------------------------------------------------


@dataclass
class ConstantRankDecomposition:
    """Changes of variables putting a rank-k map into projection form.

    ``f``/``f_inv`` and ``g`` are evaluable closures built from coordinate
    shuffles, the solved inner inverse and the graph map F; on the working
    set H, g(phi(f_inv(h))) = (h_1..h_k, 0..0) up to the recorded error.
    """

    rank: int
    rows: tuple[int, ...]
    cols: tuple[int, ...]
    f: callable
    f_inv: callable
    g: callable
    h_matrix: np.ndarray
    h_radius: float
    alpha: float
    x0: np.ndarray
    normal_form_error: float
    n_samples: int
    local_inverse: callable | None
    local_inverse_error: float | None

    def in_h(self, h) -> bool:
        return _inf_norm(pivot_solve(self.h_matrix, np.asarray(h, dtype=np.float64))) < self.h_radius


def constant_rank_decompose(
    phi: SmoothMap,
    x0,
    k: int,
    rows,
    cols,
    grade: LipGrade,
    M1: float | None = None,
    M2: float | None = None,
    alpha: float | None = None,
    n_samples: int = 32,
    seed: int = 0,
    tol: float = 1e-10,
) -> ConstantRankDecomposition:
    """Build the rank-k normal form g o phi o f^{-1} = projection.

    Coordinate shuffles move the selected minor to the leading block; the
    graph map f2 = (A - A(x0~), b - b0) is inverted by the fixed-point
    solver; the trailing output block is straightened by subtracting
    F(y1) = B(f2^{-1}(y1, 0)).  The constant rank assumption is checked on
    samples and violations are rejected with a witness.  For k = p the
    immersion case also returns the local inverse f^{-1} o pi_p o g.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    p, q = phi.dim_in, phi.dim_out
    rows = tuple(int(r) for r in rows)
    cols = tuple(int(c) for c in cols)
    if len(rows) != k or len(cols) != k:
        raise InputError("index sets must have length k")
    if not (0 < k <= min(p, q)):
        raise InputError(f"rank k={k} out of range for a {q}x{p} Jacobian")
    col_order = list(cols) + [j for j in range(p) if j not in cols]
    row_order = list(rows) + [i for i in range(q) if i not in rows]

    import sympy as sp

    from .expressions import variables

    us = variables(p)
    subs = {variables(p)[col_order[l]]: us[l] for l in range(p)}
    tilde_exprs = [sp.expand(phi.exprs[i].subs(subs, simultaneous=True)) for i in row_order]
    phi_tilde = SmoothMap(tilde_exprs, p)
    u0 = x0[col_order]
    A_exprs = tilde_exprs[:k]
    a0 = np.asarray(SmoothMap(A_exprs, p)(u0), dtype=np.float64)
    f2_exprs = [A_exprs[r] - sp.Float(a0[r]) for r in range(k)] + [
        us[k + j] - sp.Float(u0[k + j]) for j in range(p - k)
    ]
    f2 = SmoothMap(f2_exprs, p)

    df2_0 = f2.jacobian(u0)
    minor = df2_0[:k, :k]
    try:
        minor_inv, _ = pivot_inverse(minor)
    except InputError as exc:
        raise InputError(f"selected minor is singular at x0: {exc}") from exc
    if M2 is None:
        M2 = matrix_inf_norm(pivot_inverse(df2_0)[0])
    if M1 is None:
        box = [[u0[j] - 1.0, u0[j] + 1.0] for j in range(p)]
        n_grid = max(3, int(round(200 ** (1.0 / p))))
        sups = [f2.grid_sup(box, j + 1, n_grid) for j in range(grade.n + 1)]
        M1 = max(smooth_lip_bound(sups, grade.gamma - 1.0), 1e-9)
    prob = InverseProblem(
        f2,
        u0,
        max(M1, 1e-9),
        max(M2, matrix_inf_norm(pivot_inverse(df2_0)[0])),
        alpha
        or invertibility_radius(lip_grade(grade.gamma - 1.0), max(M1, 1e-9) * M2),
        grade,
    )
    alpha = prob.alpha
    f2_inv = lambda y: solve_local_inverse(prob, y, tol=min(tol, 1e-12)).x

    B_map = SmoothMap(tilde_exprs[k:], p) if q > k else None

    def F(y1):
        y = np.concatenate([np.asarray(y1, dtype=np.float64).reshape(-1), np.zeros(p - k)])
        x = f2_inv(y)
        return B_map(x) if B_map is not None else np.zeros(0)

    def f1(x):
        return np.asarray(x, dtype=np.float64).reshape(-1)[col_order]

    def f1_inv(u):
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        x = np.empty(p)
        x[col_order] = u
        return x

    def g1(z):
        return np.asarray(z, dtype=np.float64).reshape(-1)[row_order]

    def f(x):
        return f2(f1(x))

    def f_inv(h):
        return f1_inv(f2_inv(np.asarray(h, dtype=np.float64).reshape(-1)))

    def g(z):
        zt = g1(z)
        y1 = zt[:k] - a0
        return np.concatenate([y1, zt[k:] - F(y1)])

    # sampling stays inside the slice where (y1, 0) is itself in H
    mtilde = df2_0[:k, k:] if p > k else np.zeros((k, 0))
    shrink = 1.0 + (matrix_inf_norm(minor_inv @ mtilde) if p > k else 0.0)
    rng = np.random.default_rng(seed)
    radius = 0.9 * (alpha / 2.0) / shrink
    errors = []
    for _ in range(n_samples):
        u = rng.uniform(-radius, radius, size=p)
        h = df2_0 @ u
        x = f_inv(h)
        jac = phi.jacobian(x)
        sv = np.linalg.svd(jac, compute_uv=False)
        rank = int(np.sum(sv > max(1e-8 * sv[0], 1e-12)))
        if rank != k:
            raise InputError(
                f"rank violation on sample: rank {rank} != {k} at x={x.tolist()}"
            )
        out = g(phi(x))
        target = np.concatenate([h[:k], np.zeros(q - k)])
        errors.append(_inf_norm(out - target))
    normal_error = max(errors) if errors else 0.0

    local_inverse = None
    local_error = None
    if k == p:

        def local_inverse(z):  # noqa: F811 - deliberate closure rebinding
            return f_inv(g(z)[:p])

        errs = []
        for _ in range(n_samples):
            u = rng.uniform(-radius, radius, size=p)
            x = f_inv(df2_0 @ u)
            errs.append(_inf_norm(local_inverse(phi(x)) - x))
        local_error = max(errs) if errs else 0.0

    return ConstantRankDecomposition(
        rank=k,
        rows=rows,
        cols=cols,
        f=f,
        f_inv=f_inv,
        g=g,
        h_matrix=df2_0,
        h_radius=alpha / 2.0,
        alpha=alpha,
        x0=x0,
        normal_form_error=normal_error,
        n_samples=n_samples,
        local_inverse=local_inverse,
        local_inverse_error=local_error,
    )
