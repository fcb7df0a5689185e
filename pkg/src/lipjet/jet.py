"""Lip-gamma collections over finite point sets and their certification.

A jet stores, for every point x of a finite cloud and every k in 0..n,
a symmetric k-linear map f^k(x) into R^m (m stacked coefficient tensors).
Certification computes the least constant M such that, restricted to the
cloud, all level sups and all Taylor-remainder ratios stay below M; this
is exactly the defining constant of the Lipschitz class on that finite
set.  Domains are finite point clouds throughout: certifying on samples
of U is the computable stand-in for the class on U.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass

import numpy as np

from ._parallel import map_batches, split_batches
from .errors import InputError
from .expressions import SmoothMap
from .tensor import (
    MAX_ORDER,
    NormFamily,
    subordinate_matrix_norm,
)

_LETTERS = [c for c in string.ascii_lowercase if c not in "amxy"]


# ---------------------------------------------------------------------------
# Grades
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LipGrade:
    """gamma = n + eps with 0 < eps <= 1 (so integer gamma has eps = 1)."""

    gamma: float
    n: int
    eps: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")
        if not (0 < self.eps <= 1) or abs(self.n + self.eps - self.gamma) > 1e-12:
            raise InputError(f"inconsistent grade ({self.gamma}, {self.n}, {self.eps})")


def lip_grade(gamma: float) -> LipGrade:
    """Split gamma > 0 as n + eps with eps in (0, 1]."""
    if gamma <= 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    n = int(math.ceil(gamma)) - 1
    return LipGrade(float(gamma), n, float(gamma) - n)


# ---------------------------------------------------------------------------
# LipJet
# ---------------------------------------------------------------------------


class LipJet:
    """Points plus level tensors (f^0, ..., f^n) per point.

    ``levels[k]`` is a read-only array of shape (N, m) + (d,)*k holding
    f^k at every point.  All values are 64-bit floats; every stored level
    must pass the symmetry invariant and points must be pairwise distinct.
    """

    __slots__ = ("grade", "points", "levels", "dim_in", "dim_out")

    def __init__(self, grade: LipGrade, points, levels, validate: bool = True):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n_pts, d = points.shape
        if n_pts == 0:
            raise InputError("a jet needs at least one point")
        if grade.n > MAX_ORDER:
            raise InputError(f"grade n={grade.n} exceeds the order cap {MAX_ORDER}")
        levels = [np.asarray(L, dtype=np.float64) for L in levels]
        if len(levels) != grade.n + 1:
            raise InputError(
                f"expected {grade.n + 1} levels for gamma={grade.gamma}, got {len(levels)}"
            )
        m = levels[0].shape[1] if levels[0].ndim >= 2 else 1
        for k, L in enumerate(levels):
            want = (n_pts, m) + (d,) * k
            if L.shape != want:
                raise InputError(f"level {k} has shape {L.shape}, expected {want}")
        if validate:
            _check_distinct(points)
            for k, L in enumerate(levels):
                if k >= 2 and not _is_symmetric_batch(L, k):
                    raise InputError(f"level {k} violates the symmetry invariant")
        points = points.copy()
        points.flags.writeable = False
        frozen = []
        for L in levels:
            L = L.copy()
            L.flags.writeable = False
            frozen.append(L)
        self.grade = grade
        self.points = points
        self.levels = tuple(frozen)
        self.dim_in = d
        self.dim_out = m

    # -- constructors / accessors ------------------------------------------

    @classmethod
    def from_point_levels(cls, grade, points, point_levels, validate=True):
        """Build from per-point nested levels [point][k] -> (m,)+(d,)*k."""
        n = grade.n
        stacked = [
            np.stack([np.asarray(pl[k], dtype=np.float64) for pl in point_levels])
            for k in range(n + 1)
        ]
        return cls(grade, points, stacked, validate)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def level(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.grade.n:
            raise InputError(f"level {k} outside 0..{self.grade.n}")
        return self.levels[k]

    def point_level(self, point_index: int, k: int) -> np.ndarray:
        return self.levels[k][point_index]

    def values(self) -> np.ndarray:
        return self.levels[0]

    def find_point(self, x, tol: float = 1e-9) -> int:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        dist = np.max(np.abs(self.points - x[None, :]), axis=1)
        i = int(np.argmin(dist))
        if dist[i] > tol:
            raise InputError(f"point {x.tolist()} is not in the jet's point set")
        return i

    def truncate(self, grade: LipGrade) -> "LipJet":
        if grade.n > self.grade.n:
            raise InputError("cannot truncate to a higher order")
        return LipJet(grade, self.points, self.levels[: grade.n + 1], validate=False)

    def restrict(self, indices) -> "LipJet":
        indices = np.asarray(indices, dtype=int)
        return LipJet(
            self.grade,
            self.points[indices],
            [L[indices] for L in self.levels],
            validate=False,
        )

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(float(np.max(np.abs(L))) <= tol for L in self.levels)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim_in": self.dim_in,
            "dim_out": self.dim_out,
            "gamma": self.grade.gamma,
            "points": self.points.tolist(),
            "levels": [
                [self.levels[k][p].reshape(-1).tolist() for k in range(self.grade.n + 1)]
                for p in range(self.n_points)
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LipJet":
        try:
            d = int(obj["dim_in"])
            m = int(obj["dim_out"])
            grade = lip_grade(float(obj["gamma"]))
            points = np.asarray(obj["points"], dtype=np.float64)
            raw_levels = obj["levels"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed jet object: {exc}") from exc
        points = np.atleast_2d(points)
        if points.shape[1] != d:
            raise InputError(
                f"jet points have dim {points.shape[1]}, header says {d}"
            )
        if len(raw_levels) != points.shape[0]:
            raise InputError("jet levels and points disagree in length")
        point_levels = []
        for p, per_point in enumerate(raw_levels):
            if len(per_point) != grade.n + 1:
                raise InputError(
                    f"point {p} carries {len(per_point)} levels, expected {grade.n + 1}"
                )
            this = []
            for k, flat in enumerate(per_point):
                want = m * d**k
                if len(flat) != want:
                    raise InputError(
                        f"point {p} level {k} has {len(flat)} coefficients, expected {want}"
                    )
                this.append(np.asarray(flat, dtype=np.float64).reshape((m,) + (d,) * k))
            point_levels.append(this)
        return cls.from_point_levels(grade, points, point_levels)

    def __repr__(self):
        return (
            f"LipJet(gamma={self.grade.gamma}, points={self.n_points}, "
            f"dim {self.dim_in}->{self.dim_out})"
        )


def _check_distinct(points: np.ndarray):
    n = points.shape[0]
    if n < 2:
        return
    diff = points[:, None, :] - points[None, :, :]
    dist = np.max(np.abs(diff), axis=2)
    np.fill_diagonal(dist, np.inf)
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    if dist[i, j] < 1e-12:
        raise InputError(
            f"coincident points at indices {i} and {j}: remainder ratios would divide by zero"
        )


def _is_symmetric_batch(L: np.ndarray, k: int, tol: float = 1e-12) -> bool:
    scale = float(np.max(np.abs(L))) or 1.0
    lead = L.ndim - k
    for ax in range(k - 1):
        axes = list(range(L.ndim))
        axes[lead + ax], axes[lead + ax + 1] = axes[lead + ax + 1], axes[lead + ax]
        if float(np.max(np.abs(L - np.transpose(L, axes)))) > tol * scale:
            return False
    return True


# ---------------------------------------------------------------------------
# Norms of stacked level tensors
# ---------------------------------------------------------------------------


def _out_reduce(flat_abs: np.ndarray, axis: int, kind: str, q):
    if kind == "ell1":
        return np.sum(flat_abs, axis=axis)
    if kind == "ellinf":
        return np.max(flat_abs, axis=axis)
    return np.sum(flat_abs**q, axis=axis) ** (1.0 / q)


def batched_level_norms(
    T: np.ndarray,
    k: int,
    fam: NormFamily,
    out_kind: str | None = None,
    out_q: float | None = None,
) -> np.ndarray:
    """Subordinate norms of a batch of k-linear maps into R^m.

    ``T`` has shape (B, m) + (d,)*k.  The input space E^{(x)k} carries the
    family norm at order k (scale s_k); the output space R^m carries the
    plain out-kind norm (defaults to the family kind).  Norms of linear
    maps are subordinate norms throughout.
    """
    out_kind = out_kind or fam.kind
    if out_kind == "ellp" and out_q is None:
        out_q = fam.q
    B, m = T.shape[0], T.shape[1]
    D = int(np.prod(T.shape[2:], dtype=np.int64)) if k else 1
    flat = T.reshape(B, m, D)
    if k == 0:
        return _out_reduce(np.abs(flat[:, :, 0]), 1, out_kind, out_q)
    s = float(fam.scale(k))
    if fam.kind == "ell1":
        cols = _out_reduce(np.abs(flat), 1, out_kind, out_q)
        return np.max(cols, axis=1) / s
    if fam.kind == "ellinf" and out_kind == "ellinf":
        return np.max(np.sum(np.abs(flat), axis=2), axis=1) / s
    vals = np.array(
        [
            subordinate_matrix_norm(flat[b], fam.kind, fam.q, out_kind, out_q)
            for b in range(B)
        ]
    )
    return vals / s


def level_norm(tensor: np.ndarray, k: int, fam: NormFamily, out_kind=None, out_q=None) -> float:
    """Norm of a single k-linear map, shape (m,) + (d,)*k."""
    return float(batched_level_norms(tensor[None], k, fam, out_kind, out_q)[0])


# ---------------------------------------------------------------------------
# Taylor machinery
# ---------------------------------------------------------------------------


def _displacement_powers(disp: np.ndarray, q: int) -> np.ndarray:
    """(x-y)^{(x)q} for a batch of displacements: (..., d) -> (...,) + (d,)*q."""
    lead = disp.shape[:-1]
    if q == 0:
        return np.ones(lead)
    P = disp
    for _ in range(q - 1):
        P = P[..., None] * disp.reshape(lead + (1,) * (P.ndim - len(lead)) + (-1,))
    return P


def _prediction_batch(levels, k: int, n: int, disp: np.ndarray) -> np.ndarray:
    """Taylor prediction of level k from base y for a (X, Y) pair batch.

    ``levels[j]`` is (Y, m) + (d,)*j; ``disp`` is (X, Y, d) holding x - y.
    Returns (X, Y, m) + (d,)*k.
    """
    X = disp.shape[0]
    out = np.broadcast_to(levels[k][None], (X,) + levels[k].shape).copy()
    i_letters = "".join(_LETTERS[:k])
    for j in range(k + 1, n + 1):
        q = j - k
        m_letters = "".join(_LETTERS[k : k + q])
        D_q = _displacement_powers(disp, q)
        spec = "ya" + i_letters + m_letters + ",xy" + m_letters + "->xya" + i_letters
        out += np.einsum(spec, levels[j], D_q, optimize=True) / math.factorial(q)
    return out


def taylor_expand(jet: LipJet, base, target, k: int) -> np.ndarray:
    """Level-k Taylor prediction of the jet at ``target`` expanded from ``base``.

    Returns sum_{j=k}^{n} f^j(base)( . (x) (target-base)^{(x)(j-k)} / (j-k)! )
    as an array of shape (m,) + (d,)*k.  Both points must belong to the
    jet's cloud; the remainder R_k(target, base) is f^k(target) minus this.
    """
    n = jet.grade.n
    if not 0 <= k <= n:
        raise InputError(f"level {k} outside 0..{n}")
    yi = base if isinstance(base, (int, np.integer)) else jet.find_point(base)
    xi = target if isinstance(target, (int, np.integer)) else jet.find_point(target)
    disp = (jet.points[xi] - jet.points[yi]).reshape(1, 1, -1)
    levels = [L[[yi]] for L in jet.levels]
    return _prediction_batch(levels, k, n, disp)[0, 0]


# ---------------------------------------------------------------------------
# Remainders and certification
# ---------------------------------------------------------------------------


@dataclass
class RemainderTable:
    """All remainders R_k(x, y) over ordered point pairs, with their ratios.

    ``tensors[k]`` has shape (N, N, m) + (d,)*k indexed [x, y]; ``ratios``
    has shape (n+1, N, N) with zeros on the diagonal.  By construction
    R_k(x,y) added to the level-k Taylor sum at y reproduces f^k(x); this
    identity is re-checked to 1e-12 when the table is built.
    """

    points: np.ndarray
    gamma: float
    tensors: list[np.ndarray]
    ratios: np.ndarray
    distances: np.ndarray

    def tensor(self, k: int, x_index: int, y_index: int) -> np.ndarray:
        return self.tensors[k][x_index, y_index]

    def ratio(self, k: int, x_index: int, y_index: int) -> float:
        return float(self.ratios[k, x_index, y_index])

    def max_ratio(self, k: int | None = None) -> float:
        return float(np.max(self.ratios if k is None else self.ratios[k]))


def remainders(jet: LipJet, fam: NormFamily) -> RemainderTable:
    """Remainder tensors and decay ratios over all ordered pairs.

    Ratios divide by the family norm of the input-side displacement raised
    to gamma - k; they are the quantities the certificate must dominate.
    """
    if jet.n_points < 2:
        raise InputError("remainders need at least two points")
    n = jet.grade.n
    gamma = jet.grade.gamma
    pts = jet.points
    disp = pts[:, None, :] - pts[None, :, :]
    dist = fam.scale(1) * _agg_axis(np.abs(disp), fam, axis=2)
    tensors = []
    ratios = np.zeros((n + 1, jet.n_points, jet.n_points))
    for k in range(n + 1):
        pred = _prediction_batch(jet.levels, k, n, disp)
        R = jet.levels[k][:, None] - pred
        # identity check: prediction + remainder reproduces the level
        recon = pred + R
        scale = float(np.max(np.abs(jet.levels[k]))) or 1.0
        if float(np.max(np.abs(recon - jet.levels[k][:, None]))) > 1e-12 * scale:
            raise InputError("remainder identity failed; inconsistent levels")
        norms = batched_level_norms(
            R.reshape((-1,) + R.shape[2:]), k, fam
        ).reshape(jet.n_points, jet.n_points)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[k] = np.where(dist > 0, norms / dist ** (gamma - k), 0.0)
        tensors.append(R)
    return RemainderTable(pts, gamma, tensors, ratios, dist)


def _agg_axis(mags: np.ndarray, fam: NormFamily, axis: int) -> np.ndarray:
    if fam.kind == "ell1":
        return np.sum(mags, axis=axis)
    if fam.kind == "ellinf":
        return np.max(mags, axis=axis)
    return np.sum(mags**fam.q, axis=axis) ** (1.0 / fam.q)


@dataclass
class LipCertificate:
    """The least constant M valid for the jet on its finite point set.

    ``witness`` records where the max is achieved: a level sup at a point,
    or a remainder ratio at an ordered pair; reproducible from the stored
    indices.
    """

    M: float
    sup_levels: float
    sup_ratios: float
    witness: dict
    gamma: float

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "sup_levels": self.sup_levels,
            "sup_ratios": self.sup_ratios,
            "witness": self.witness,
            "gamma": self.gamma,
        }


def certify(
    jet: LipJet,
    fam: NormFamily,
    out_kind: str | None = None,
    out_q: float | None = None,
) -> LipCertificate:
    """Compute M = max(level sups, remainder ratios) with its witness.

    This is exactly the smallest constant satisfying the defining
    inequalities of the class restricted to the jet's point cloud.  Pair
    work is chunked and fanned out to workers; the reduction is a plain
    max in chunk order, so results are deterministic.
    """
    n = jet.grade.n
    gamma = jet.grade.gamma
    pts = jet.points
    N = jet.n_points

    sup_levels = 0.0
    sup_witness = {}
    for k in range(n + 1):
        norms = batched_level_norms(jet.levels[k], k, fam, out_kind, out_q)
        i = int(np.argmax(norms))
        if float(norms[i]) > sup_levels:
            sup_levels = float(norms[i])
            sup_witness = {"kind": "level", "level": k, "point": i}

    sup_ratios = 0.0
    ratio_witness = {}
    if N >= 2:
        chunks = split_batches(N, max(1, N // 24))

        def work(chunk):
            disp = pts[chunk, None, :] - pts[None, :, :]
            dist = fam.scale(1) * _agg_axis(np.abs(disp), fam, axis=2)
            best = (0.0, None)
            for k in range(n + 1):
                pred = _prediction_batch(jet.levels, k, n, disp)
                R = jet.levels[k][chunk][:, None] - pred
                norms = batched_level_norms(
                    R.reshape((-1,) + R.shape[2:]), k, fam, out_kind, out_q
                ).reshape(len(chunk), N)
                with np.errstate(divide="ignore", invalid="ignore"):
                    r = np.where(dist > 0, norms / dist ** (gamma - k), 0.0)
                xi, yi = np.unravel_index(int(np.argmax(r)), r.shape)
                if float(r[xi, yi]) > best[0]:
                    best = (
                        float(r[xi, yi]),
                        {"kind": "ratio", "level": k, "pair": [int(chunk[xi]), int(yi)]},
                    )
            return best

        for value, wit in map_batches(work, chunks):
            if value > sup_ratios:
                sup_ratios = value
                ratio_witness = wit

    if sup_ratios > sup_levels:
        M, witness = sup_ratios, ratio_witness
    else:
        M, witness = sup_levels, sup_witness
    return LipCertificate(M, sup_levels, sup_ratios, witness, gamma)


# ---------------------------------------------------------------------------
# Jets of closed-form maps
# ---------------------------------------------------------------------------


def jet_of_polynomial(p: SmoothMap, points, grade: LipGrade) -> LipJet:
    """Jet with levels equal to the exact symbolic derivatives of ``p``.

    Works for any closed-form SmoothMap (polynomial or trig-polynomial);
    each level is symmetric by equality of mixed partials.
    """
    if grade.n > MAX_ORDER:
        raise InputError(f"grade n={grade.n} exceeds the order cap {MAX_ORDER}")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    levels = [p.derivative_tensor(points, k) for k in range(grade.n + 1)]
    return LipJet(grade, points, levels, validate=True)


# ---------------------------------------------------------------------------
# Recursive characterization check
# ---------------------------------------------------------------------------


@dataclass
class HolderReport:
    M: float
    max_level_sup: float
    max_holder_ratio: float
    max_violation: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= 1e-12 * max(1.0, self.M)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "max_level_sup": self.max_level_sup,
            "max_holder_ratio": self.max_holder_ratio,
            "max_violation": self.max_violation,
            "passed": self.passed,
        }


def holder_characterization_check(jet: LipJet, fam: NormFamily) -> HolderReport:
    """Check the derivative-style description against the certificate M.

    On the jet's grid: every level sup must stay below M, and the top
    level must be eps-Hoelder with the same constant, the computable
    direction of the recursive characterization.  Intended for jets over
    convex grids (box lattices).
    """
    cert = certify(jet, fam)
    n = jet.grade.n
    eps = jet.grade.eps
    sup = 0.0
    for k in range(n + 1):
        sup = max(sup, float(np.max(batched_level_norms(jet.levels[k], k, fam))))
    holder = 0.0
    if jet.n_points >= 2:
        pts = jet.points
        disp = pts[:, None, :] - pts[None, :, :]
        dist = fam.scale(1) * _agg_axis(np.abs(disp), fam, axis=2)
        diff = jet.levels[n][:, None] - jet.levels[n][None, :]
        norms = batched_level_norms(
            diff.reshape((-1,) + diff.shape[2:]), n, fam
        ).reshape(jet.n_points, jet.n_points)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(dist > 0, norms / dist**eps, 0.0)
        holder = float(np.max(r))
    violation = max(0.0, sup - cert.M, holder - cert.M)
    return HolderReport(cert.M, sup, holder, violation)
