"""The operation calculus on jets.

Embeddings with explicit constants, localization factors, cartesian
products, linear pre/post-composition, bilinear images, the full
composition formula, the combinatorial slot identity, the quantitative
local estimate at a vanishing point, and the smooth-map bound.

All 1-D infima (embedding constants, the smooth-map bound) are computed
by a coarse scan plus golden-section refinement on log10(delta) in
[-6, 6] with 1e-10 relative convergence; any evaluated delta yields a
valid constant, so the reported value is always an upper bound for the
true infimum reached from above.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InputError
from .jet import LipCertificate, LipGrade, LipJet, certify, lip_grade
from .tensor import (
    COMPATIBLE,
    PROJECTIVE,
    RATIONAL,
    SYMMETRIC,
    LinearMap,
    NormFamily,
    SymTensor,
    symmetrize_array,
)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_LETTERS = [c for c in string.ascii_lowercase if c not in "hx"]


def _minimize_log_delta(fn, lo=-6.0, hi=6.0, rel_tol=1e-10, grid=241, extra=(0.5,)):
    """Minimize fn(delta) over delta = 10**t, t in [lo, hi].

    Coarse grid scan, golden-section refinement around the best cell, then
    comparison against a few fixed candidate deltas (any delta is valid).
    Returns (value, delta).
    """
    ts = np.linspace(lo, hi, grid)
    vals = [fn(10.0**t) for t in ts]
    i = int(np.argmin(vals))
    a, b = ts[max(0, i - 1)], ts[min(grid - 1, i + 1)]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(10.0**c), fn(10.0**d)
    for _ in range(200):
        if abs(b - a) <= 1e-13 + rel_tol * max(abs(a), abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(10.0**c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(10.0**d)
    t_best = c if fc < fd else d
    best_val, best_delta = fn(10.0**t_best), 10.0**t_best
    for delta in extra:
        v = fn(delta)
        if v < best_val:
            best_val, best_delta = v, delta
    return best_val, best_delta


# ---------------------------------------------------------------------------
# Embedding constants
# ---------------------------------------------------------------------------

GENERAL_CAP_FACTOR = math.e * (1.0 + math.exp(0.5))  # pairs with 2**gamma'


@dataclass(frozen=True)
class EmbedConstant:
    """A valid constant for lowering the grade from gamma to gamma_prime.

    ``variant``: 'general' (arbitrary domains), 'convex' (open convex
    domains; value <= 4), or 'bounded' (domains of diameter <= L).
    ``delta_star`` is the minimizing delta where one was searched.
    """

    gamma: float
    gamma_prime: float
    value: float
    variant: str
    delta_star: float | None

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "gamma_prime": self.gamma_prime,
            "value": self.value,
            "variant": self.variant,
            "delta_star": self.delta_star,
        }


def _truncation_factor(gamma, n, gamma_prime, n_prime, L: float) -> float:
    """max(1, sum_{j=n'+1}^{n} L^{j-g'}/(j-n')! + L^{g-g'}) with 0^+ = 0."""
    total = 0.0
    for j in range(n_prime + 1, n + 1):
        total += _safe_pow(L, j - gamma_prime) / math.factorial(j - n_prime)
    total += _safe_pow(L, gamma - gamma_prime)
    return max(1.0, total)


def _safe_pow(base: float, exp: float) -> float:
    if base == 0.0:
        return 0.0 if exp > 0 else 1.0
    return base**exp


def _local_factor(gamma, n, delta: float) -> float:
    best = 1.0
    for k in range(n + 1):
        s = sum(delta**j / math.factorial(j) for j in range(n - k + 1))
        best = max(best, (1.0 + s) / delta ** (gamma - k))
    return best


def embed_constant(
    gamma: float,
    gamma_prime: float,
    variant: str = "general",
    L: float | None = None,
) -> EmbedConstant:
    """Constant such that the gamma'-norm is at most constant * gamma-norm.

    'general' minimizes the product of the ball-truncation factor at
    diameter 2*delta and the patching factor at delta; 'convex' minimizes
    the sharper open-convex pair; 'bounded' evaluates the closed diameter
    formula at L (no minimization).
    """
    g = lip_grade(gamma)
    gp = lip_grade(gamma_prime)
    if not gp.gamma < g.gamma:
        raise InputError(
            f"gamma_prime={gamma_prime} must be strictly below gamma={gamma}"
        )
    if variant == "bounded":
        if L is None or L < 0:
            raise InputError("bounded variant needs a diameter bound L >= 0")
        value = _truncation_factor(g.gamma, g.n, gp.gamma, gp.n, L)
        return EmbedConstant(g.gamma, gp.gamma, value, variant, None)
    if variant == "general":

        def fn(delta):
            first = _truncation_factor(g.gamma, g.n, gp.gamma, gp.n, 2.0 * delta)
            return first * _local_factor(gp.gamma, gp.n, delta)

    elif variant == "convex":
        exp1 = min(gp.n + 1, g.gamma) - gp.gamma

        def fn(delta):
            first = max(1.0, _safe_pow(2.0 * delta, exp1))
            return first * max(1.0, 2.0 / delta ** (gp.gamma - gp.n))

    else:
        raise InputError(f"unknown embed constant variant {variant!r}")
    value, delta = _minimize_log_delta(fn)
    return EmbedConstant(g.gamma, gp.gamma, value, variant, delta)


def embed(jet: LipJet, gamma_prime: float, fam: NormFamily):
    """Truncate the jet to grade gamma' < gamma and re-certify.

    Returns (jet', certificate).  The certified constant is guaranteed to
    stay below embed_constant(gamma, gamma').value times the original
    certificate (the embedding theorem applied to the cloud).
    """
    if gamma_prime >= jet.grade.gamma:
        raise InputError(
            f"gamma_prime={gamma_prime} must be below the jet grade {jet.grade.gamma}"
        )
    if not fam.declares(PROJECTIVE):
        raise InputError("embedding requires a family declaring the projective property")
    trunc = jet.truncate(lip_grade(gamma_prime))
    return trunc, certify(trunc, fam)


def localization_factor(gamma: float, delta: float, variant: str = "general") -> float:
    """Factor turning uniform local control on delta-balls into global control.

    'general' evaluates max(1, max_k delta^-(gamma-k) (1 + sum delta^j/j!));
    'convex' the sharper max(1, 2/delta^(gamma - n)).
    """
    if delta <= 0:
        raise InputError(f"delta must be positive, got {delta}")
    g = lip_grade(gamma)
    if variant == "general":
        return max(1.0, _local_factor(g.gamma, g.n, delta))
    if variant == "convex":
        return max(1.0, 2.0 / delta ** (g.gamma - g.n))
    raise InputError(f"unknown localization variant {variant!r}")


# ---------------------------------------------------------------------------
# Products and linear composition
# ---------------------------------------------------------------------------

_PAIR_KINDS = {"l1": ("ell1", None), "l2": ("ellp", 2.0), "linf": ("ellinf", None)}


def _same_cloud(f: LipJet, g: LipJet):
    if f.n_points != g.n_points or not np.allclose(
        f.points, g.points, rtol=0.0, atol=1e-12
    ):
        raise InputError("jets must share the same point cloud")
    if abs(f.grade.gamma - g.grade.gamma) > 1e-12:
        raise InputError("jets must share the same grade")


def cartesian_product(f: LipJet, g: LipJet, pair_norm: str = "linf") -> LipJet:
    """Stack two jets over the same cloud into one with outputs side by side.

    Certify the result with :func:`product_certificate`, which applies the
    chosen pair norm on the stacked output block.
    """
    if pair_norm not in _PAIR_KINDS:
        raise InputError(f"pair_norm must be one of {sorted(_PAIR_KINDS)}")
    _same_cloud(f, g)
    levels = [
        np.concatenate([f.levels[k], g.levels[k]], axis=1)
        for k in range(f.grade.n + 1)
    ]
    return LipJet(f.grade, f.points, levels, validate=False)


def product_certificate(h: LipJet, fam: NormFamily, pair_norm: str = "linf") -> LipCertificate:
    out_kind, out_q = _PAIR_KINDS[pair_norm]
    return certify(h, fam, out_kind=out_kind, out_q=out_q)


def postcompose_linear(u: LinearMap, jet: LipJet) -> LipJet:
    """u o f: apply the linear map to every level's output axis."""
    if u.cols != jet.dim_out:
        raise InputError(
            f"linear map expects input dim {u.cols}, jet outputs {jet.dim_out}"
        )
    levels = [np.tensordot(L, u.entries, axes=([1], [1]))
              for L in jet.levels]
    # tensordot puts the new output axis last; restore (N, m', ...) layout
    levels = [np.moveaxis(L, -1, 1) for L in levels]
    return LipJet(jet.grade, jet.points, levels, validate=False)


def precompose_linear(
    jet: LipJet,
    u: LinearMap,
    points,
    fam_E: NormFamily,
    fam_F: NormFamily,
) -> LipJet:
    """f o u over the requested preimage points z (with u(z) in the cloud).

    Levels are g^k(z) = f^k(u z) o u^{(x)k}.  Both families must declare
    1-compatibility (rescale a compatible family to reach C = 1 first).
    """
    for fam in (fam_E, fam_F):
        c = fam.compatible_constant()
        if not fam.declares(COMPATIBLE) or c is None or abs(c - 1.0) > 1e-12:
            raise InputError(
                "precomposition requires families declared compatible with C=1"
            )
    if u.rows != jet.dim_in:
        raise InputError(
            f"linear map outputs dim {u.rows}, jet domain has dim {jet.dim_in}"
        )
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != u.cols:
        raise InputError("preimage points do not match the map's input size")
    indices = []
    for z in points:
        try:
            indices.append(jet.find_point(u(z)))
        except InputError as exc:
            raise InputError(
                f"u(z) for z={z.tolist()} is not in the jet's point set"
            ) from exc
    indices = np.asarray(indices, dtype=int)
    n = jet.grade.n
    levels = []
    for k in range(n + 1):
        L = jet.levels[k][indices]
        for axis in range(2, 2 + k):
            L = np.moveaxis(np.tensordot(L, u.entries, axes=([axis], [0])), -1, axis)
        levels.append(L)
    return LipJet(jet.grade, points, levels, validate=False)


# ---------------------------------------------------------------------------
# Bilinear images
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BilinearMap:
    """A bilinear map F x G -> H stored as coefficients B[h][i][j]."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.float64)
        if arr.ndim != 3:
            raise InputError("bilinear coefficients must be a 3-D array")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        h, f, g = self.coeffs.shape
        return f, g, h

    def __call__(self, x, y) -> np.ndarray:
        return np.einsum("hij,i,j->h", self.coeffs, np.asarray(x), np.asarray(y))

    @classmethod
    def scalar_multiplication(cls) -> "BilinearMap":
        return cls(np.ones((1, 1, 1)))

    def norm_estimate(
        self,
        fam_F: NormFamily,
        fam_G: NormFamily | None = None,
        fam_H: NormFamily | None = None,
        samples: int = 256,
        seed: int = 0,
    ) -> float:
        """Operator norm; exact for ell1 inputs, sampled lower bound otherwise."""
        fam_G = fam_G or fam_F
        fam_H = fam_H or fam_F
        dF, dG, _ = self.dims
        if fam_F.kind == "ell1" and fam_G.kind == "ell1":
            best = 0.0
            for i in range(dF):
                for j in range(dG):
                    best = max(best, fam_H.aggregate(self.coeffs[:, i, j]))
            return best / (fam_F.scale(1) * fam_G.scale(1))
        rng = np.random.default_rng(seed)
        best = 0.0
        for i in range(dF):
            for j in range(dG):
                x = np.zeros(dF)
                x[i] = 1.0
                y = np.zeros(dG)
                y[j] = 1.0
                best = max(best, _bilinear_ratio(self, x, y, fam_F, fam_G, fam_H))
        for _ in range(samples):
            x = rng.uniform(-1, 1, dF)
            y = rng.uniform(-1, 1, dG)
            best = max(best, _bilinear_ratio(self, x, y, fam_F, fam_G, fam_H))
        return best


def _bilinear_ratio(B, x, y, fam_F, fam_G, fam_H) -> float:
    nx = fam_F.vector_norm(x)
    ny = fam_G.vector_norm(y)
    if nx == 0 or ny == 0:
        return 0.0
    return fam_H.aggregate(B(x, y)) / (nx * ny)


def bilinear_image(B: BilinearMap, f: LipJet, g: LipJet, fam: NormFamily) -> LipJet:
    """The jet of x -> B(f(x), g(x)) via the symmetrized Leibniz formula.

    Level k collects B(f^i, g^{k-i}) over all splits, averaged over slot
    permutations with weights 1/(i!(k-i)!); the family must declare both
    the projective and symmetric properties.
    """
    if not (fam.declares(PROJECTIVE) and fam.declares(SYMMETRIC)):
        raise InputError(
            "bilinear images require a family declaring projective and symmetric"
        )
    _same_cloud(f, g)
    dF, dG, dH = B.dims
    if f.dim_out != dF or g.dim_out != dG:
        raise InputError(
            f"bilinear map dims {B.dims} do not match jet outputs "
            f"({f.dim_out}, {g.dim_out})"
        )
    n = f.grade.n
    N = f.n_points
    d = f.dim_in
    levels = []
    for k in range(n + 1):
        raw = np.zeros((N, dH) + (d,) * k)
        for i in range(k + 1):
            left = "".join(_LETTERS[:i])
            right = "".join(_LETTERS[i:k])
            spec = f"hab,za{left},zb{right}->zh{left}{right}"
            term = np.einsum(spec, B.coeffs, f.levels[i], g.levels[k - i], optimize=True)
            raw += math.comb(k, i) * term
        levels.append(_symmetrize_trailing(raw, k))
    return LipJet(f.grade, f.points, levels, validate=False)


def _symmetrize_trailing(arr: np.ndarray, k: int) -> np.ndarray:
    return symmetrize_array(arr, k)


# ---------------------------------------------------------------------------
# Combinatorial slot identity
# ---------------------------------------------------------------------------


@dataclass
class SymIdentityResult:
    lhs: SymTensor
    rhs: SymTensor
    equal: bool


def sym_group_identity_check(vectors, i: int) -> SymIdentityResult:
    """Evaluate both sides of the slot-shuffle counting identity exactly.

    Left: double sum over all permutations of 1..N and all reorderings of
    the leading i-block, tensored with the symmetric part of the trailing
    word.  Right: i!(N-i)! times the sum over ordered position subsets
    r_1 < ... < r_i of all reorderings of the subset block, tensored with
    the symmetric part of the increasing complement word (the complement
    block enters through its symmetric part: that is how the identity is
    applied, with the trailing slots always feeding a symmetric map, and
    the raw-word variant is false already for N=3, i=1 on basis vectors).

    Rational mode only.  Both sides are accumulated over cleared
    denominators in exact integer arithmetic, which yields the identical
    rational tensors; the empty trailing word has symmetric part 1.
    """
    N = len(vectors)
    if not (1 <= i <= N <= 5):
        raise InputError("need 1 <= i <= N <= 5")
    fracs = [[Fraction(c) for c in v] for v in vectors]
    d = len(fracs[0])
    if any(len(v) != d for v in fracs):
        raise InputError("all vectors must share the same dimension")
    scale = Fraction(1)
    ws = []
    for v in fracs:
        den = math.lcm(*(c.denominator for c in v)) if v else 1
        ws.append(np.array([int(c * den) for c in v], dtype=np.int64))
        scale *= Fraction(1, den)
    W = max((int(np.max(np.abs(w))) for w in ws), default=0)
    tail_fact = math.factorial(N - i)
    bound = math.factorial(N) * math.factorial(i) * tail_fact * max(1, W) ** N
    if bound >= 2**62:
        ws = [w.astype(object) for w in ws]

    def outer_chain(idx_seq):
        acc = ws[idx_seq[0]]
        for j in idx_seq[1:]:
            acc = np.multiply.outer(acc, ws[j])
        return acc

    head_cache: dict[frozenset, np.ndarray] = {}
    tail_cache: dict[frozenset, np.ndarray] = {}

    def ordering_sum(s: frozenset, cache) -> np.ndarray:
        # sum of the tensor words over all orderings of the index set;
        # tail_fact times the symmetric part of any single ordering
        if s not in cache:
            if not s:
                cache[s] = np.int64(1)
            else:
                acc = None
                for ordering in itertools.permutations(sorted(s)):
                    term = outer_chain(ordering)
                    acc = term.copy() if acc is None else acc + term
                cache[s] = acc
        return cache[s]

    # both sides carry a 1/(N-i)! from the symmetric parts; accumulate the
    # (N-i)!-scaled integer tensors and divide exactly on the way out
    lhs_scaled = None
    for sigma in itertools.permutations(range(N)):
        head = ordering_sum(frozenset(sigma[:i]), head_cache)
        tail = ordering_sum(frozenset(sigma[i:]), tail_cache)
        term = np.multiply.outer(head, tail)
        lhs_scaled = term.copy() if lhs_scaled is None else lhs_scaled + term

    multiplier = math.factorial(i) * tail_fact
    rhs_scaled = None
    for subset in itertools.combinations(range(N), i):
        complement = frozenset(range(N)) - frozenset(subset)
        tail = ordering_sum(complement, tail_cache)
        for ordering in itertools.permutations(subset):
            term = np.multiply.outer(outer_chain(ordering), tail)
            rhs_scaled = term.copy() if rhs_scaled is None else rhs_scaled + term
    rhs_scaled = rhs_scaled * multiplier

    equal = bool(np.array_equal(lhs_scaled, rhs_scaled))
    out_scale = scale * Fraction(1, tail_fact)
    to_frac = np.vectorize(lambda v: Fraction(int(v)) * out_scale, otypes=[object])
    lhs = SymTensor(d, to_frac(np.asarray(lhs_scaled)), RATIONAL)
    rhs = SymTensor(d, to_frac(np.asarray(rhs_scaled)), RATIONAL)
    return SymIdentityResult(lhs, rhs, equal)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def _compositions(k: int, parts: int):
    """Ordered tuples of positive integers of given length summing to k."""
    if parts == 1:
        yield (k,)
        return
    for first in range(1, k - parts + 2):
        for rest in _compositions(k - first, parts - 1):
            yield (first,) + rest


def compose_level_tensor(outer_levels, inner_levels, k: int) -> np.ndarray:
    """Level k of (outer o inner) at one point from both ends' level tensors.

    ``outer_levels[j]`` has shape (m,) + (p,)*j (evaluated at the image
    point); ``inner_levels[q]`` has shape (p,) + (d,)*q.  Implements the
    multi-index chain-rule formula: sums over 1 <= j <= k of the outer
    level j contracted against every ordered split i_1 + ... + i_j = k of
    inner levels, weighted by k!/(j! i_1! ... i_j!), symmetrized once at
    the end (symmetrization commutes with the sum, so the slot-average is
    shared across all terms).
    """
    m = outer_levels[0].shape[0]
    d = inner_levels[1].shape[-1] if len(inner_levels) > 1 else 1
    if k == 0:
        return outer_levels[0].copy()
    total = np.zeros((m,) + (d,) * k)
    for j in range(1, k + 1):
        gj = outer_levels[j]
        for comp in _compositions(k, j):
            coeff = math.factorial(k) / (
                math.factorial(j) * math.prod(math.factorial(q) for q in comp)
            )
            operands = [gj]
            out_sub = "h"
            g_sub = "h" + "".join(_LETTERS[:j])
            in_subs = []
            pos = j
            for slot, q in enumerate(comp):
                block = "".join(_LETTERS[pos : pos + q])
                in_subs.append(_LETTERS[slot] + block)
                out_sub += block
                pos += q
                operands.append(inner_levels[q])
            spec = ",".join([g_sub] + in_subs) + "->" + out_sub
            total += coeff * np.einsum(spec, *operands, optimize=True)
    return symmetrize_array(total, k)


def compose(
    g: LipJet,
    f: LipJet,
    fam_E: NormFamily | None = None,
    fam_F: NormFamily | None = None,
) -> LipJet:
    """The jet of g o f over f's cloud (f must map cloud points onto g's).

    Grades must agree and any supplied families must declare the
    projective property.  The composed jet can be re-certified with
    :func:`lipjet.jet.certify`; the realized constant relative to
    ||g|| * max(||f||^gamma, 1) is reported by
    :func:`composition_constant`.
    """
    for fam in (fam_E, fam_F):
        if fam is not None and not fam.declares(PROJECTIVE):
            raise InputError("composition requires projective norm families")
    if f.dim_out != g.dim_in:
        raise InputError(
            f"inner jet outputs dim {f.dim_out}, outer jet domain has dim {g.dim_in}"
        )
    if abs(f.grade.gamma - g.grade.gamma) > 1e-12:
        raise InputError("composition requires equal grades")
    n = f.grade.n
    image_index = []
    for yi in range(f.n_points):
        value = f.levels[0][yi]
        try:
            image_index.append(g.find_point(value))
        except InputError:
            raise InputError(
                f"image point {value.tolist()} of cloud point "
                f"{f.points[yi].tolist()} is missing from the outer jet's cloud"
            ) from None
    levels = [np.empty((f.n_points, g.dim_out) + (f.dim_in,) * k) for k in range(n + 1)]
    for yi, gi in enumerate(image_index):
        outer = [g.levels[j][gi] for j in range(n + 1)]
        inner = [f.levels[q][yi] for q in range(n + 1)]
        for k in range(n + 1):
            levels[k][yi] = compose_level_tensor(outer, inner, k)
    return LipJet(f.grade, f.points, levels, validate=False)


def composition_constant(
    composed: LipCertificate, outer: LipCertificate, inner: LipCertificate
) -> float:
    """The constant realized by the construction: M_h / (M_g max(M_f^gamma, 1)).

    No optimality is claimed; the theorem only asserts some finite constant.
    """
    gamma = composed.gamma
    denom = outer.M * max(inner.M**gamma, 1.0)
    return composed.M / denom if denom > 0 else math.inf


# ---------------------------------------------------------------------------
# Quantitative local estimate
# ---------------------------------------------------------------------------


@dataclass
class LocalVanishingBound:
    """Certified local bound after lowering the grade at a vanishing point."""

    bound: float
    local_certificate: float
    delta: float
    gamma: float
    gamma_prime: float
    M: float
    n_points_in_ball: int

    @property
    def margin(self) -> float:
        return self.bound - self.local_certificate

    @property
    def passed(self) -> bool:
        return self.local_certificate <= self.bound * (1 + 1e-12) + 1e-15

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "local_certificate": self.local_certificate,
            "margin": self.margin,
            "delta": self.delta,
            "gamma": self.gamma,
            "gamma_prime": self.gamma_prime,
            "M": self.M,
            "n_points_in_ball": self.n_points_in_ball,
            "passed": self.passed,
        }


def vanishing_bound_factor(gamma: float, gamma_prime: float, delta: float) -> float:
    """The delta-dependent factor of the local estimate at a vanishing point."""
    g, gp = lip_grade(gamma), lip_grade(gamma_prime)
    if not gp.gamma < g.gamma:
        raise InputError("gamma_prime must be strictly below gamma")
    if delta <= 0:
        raise InputError("delta must be positive")
    tail = sum(
        2.0 ** (j - gp.gamma) / math.factorial(j - gp.n)
        for j in range(gp.n + 1, g.n + 1)
    )
    tail += 2.0 ** (g.gamma - gp.gamma)
    return max(
        delta**g.gamma,
        delta ** (g.gamma - gp.n),
        delta ** (g.gamma - gp.gamma) * tail,
    )


def localize_vanishing(
    jet: LipJet,
    x0,
    gamma_prime: float,
    delta: float,
    fam: NormFamily,
) -> LocalVanishingBound:
    """Local grade-lowered bound M * factor(delta) when all levels vanish at x0.

    Re-certifies the restriction of the truncated jet to the closed
    delta-ball around x0 and reports it against the formula bound.
    """
    if not fam.declares(PROJECTIVE):
        raise InputError("the local estimate requires a projective family")
    i0 = x0 if isinstance(x0, (int, np.integer)) else jet.find_point(x0)
    for k in range(jet.grade.n + 1):
        if float(np.max(np.abs(jet.levels[k][i0]))) > 1e-12:
            raise InputError(
                f"level {k} does not vanish at the base point; the local bound "
                "does not apply"
            )
    factor = vanishing_bound_factor(jet.grade.gamma, gamma_prime, delta)
    M = certify(jet, fam).M
    center = jet.points[i0]
    dist = np.array([fam.vector_norm(p - center) for p in jet.points])
    inside = np.nonzero(dist <= delta * (1 + 1e-12))[0]
    local = jet.restrict(inside).truncate(lip_grade(gamma_prime))
    local_cert = certify(local, fam)
    return LocalVanishingBound(
        bound=M * factor,
        local_certificate=local_cert.M,
        delta=delta,
        gamma=jet.grade.gamma,
        gamma_prime=gamma_prime,
        M=M,
        n_points_in_ball=int(inside.size),
    )


# ---------------------------------------------------------------------------
# Smooth-map bound
# ---------------------------------------------------------------------------


def smooth_lip_bound(sup_norms, gamma: float) -> float:
    """Grade-gamma norm bound for a map with bounded derivatives up to n+1.

    ``sup_norms`` lists the sup norms of orders 0..n+1 on a convex set;
    the bound is the minimized product of the truncated-derivative max and
    the convex patching factor.
    """
    g = lip_grade(gamma)
    sups = [float(s) for s in sup_norms]
    if len(sups) != g.n + 2:
        raise InputError(
            f"expected {g.n + 2} sup norms for gamma={gamma}, got {len(sups)}"
        )
    if any(s < 0 for s in sups):
        raise InputError("sup norms must be non-negative")
    lower = max(sups[: g.n + 1], default=0.0)
    top = sups[g.n + 1]
    exp_top = g.n + 1 - g.gamma

    def fn(delta):
        first = max(lower, top * _safe_pow(2.0 * delta, exp_top))
        return first * max(1.0, 2.0 / delta ** (g.gamma - g.n))

    value, _ = _minimize_log_delta(fn)
    return value
