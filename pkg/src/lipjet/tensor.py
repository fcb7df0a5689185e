"""Dense symmetric tensor algebra over R^d with configurable norm families.

Tensors of order k are stored dense, all d**k coefficients in row-major
multi-index order, including for symmetric tensors.  At desk scale
(k <= 6, d <= 8) the duplication is irrelevant and keeps every operation
a plain ndarray manipulation.

Two arithmetic modes exist: 64-bit float (default) and exact rational
(object arrays of ``fractions.Fraction`` / ``int``).  The mode is chosen
when a value is constructed and is never mixed within one computation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._parallel import map_batches, split_batches
from .errors import InputError

MAX_ORDER = 6

FLOAT = "float"
RATIONAL = "rational"

_SYM_TOL = 1e-12


def _factorial(k: int) -> int:
    return math.factorial(k)


# ---------------------------------------------------------------------------
# SymTensor
# ---------------------------------------------------------------------------


class SymTensor:
    """Dense order-k tensor over R^d.

    ``coeffs`` is an ndarray of shape (dim,)*order; order 0 holds a single
    scalar.  A k-linear map into R^m is represented elsewhere as m stacked
    SymTensors (one extra leading axis); this class is the single-output
    building block.
    """

    __slots__ = ("dim", "order", "coeffs", "mode")

    def __init__(self, dim: int, coeffs, mode: str | None = None):
        if dim < 1:
            raise InputError(f"dim must be positive, got {dim}")
        arr = np.asarray(coeffs)
        if mode is None:
            mode = RATIONAL if arr.dtype == object else FLOAT
        if mode == FLOAT:
            arr = np.asarray(arr, dtype=np.float64)
        elif mode == RATIONAL:
            arr = np.asarray(arr, dtype=object)
        else:
            raise InputError(f"unknown arithmetic mode {mode!r}")
        order = arr.ndim
        if arr.shape != (dim,) * order:
            # accept a flat row-major coefficient list
            if arr.ndim == 1 and dim > 1:
                order = _infer_order(dim, arr.size)
                arr = arr.reshape((dim,) * order)
            elif arr.ndim == 1 and dim == 1:
                if arr.size != 1:
                    raise InputError(
                        f"coeff length {arr.size} is not a power of dim {dim}"
                    )
                order = 1
                arr = arr.reshape((1,))
            else:
                raise InputError(
                    f"coeff shape {arr.shape} incompatible with dim {dim}"
                )
        if order > MAX_ORDER:
            raise InputError(
                f"order {order} exceeds the supported cap {MAX_ORDER}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        self.dim = dim
        self.order = order
        self.coeffs = arr
        self.mode = mode

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, dim: int, order: int, mode: str = FLOAT) -> "SymTensor":
        if order > MAX_ORDER:
            raise InputError(f"order {order} exceeds the supported cap {MAX_ORDER}")
        if mode == RATIONAL:
            arr = np.full((dim,) * order, Fraction(0), dtype=object)
        else:
            arr = np.zeros((dim,) * order)
        return cls(dim, arr, mode)

    @classmethod
    def scalar(cls, value, dim: int = 1, mode: str = FLOAT) -> "SymTensor":
        arr = np.array(value, dtype=object if mode == RATIONAL else np.float64)
        return cls(dim, arr, mode)

    @classmethod
    def from_vector(cls, v, mode: str = FLOAT) -> "SymTensor":
        v = np.asarray(v, dtype=object if mode == RATIONAL else np.float64)
        return cls(v.shape[0], v, mode)

    @classmethod
    def basis(cls, dim: int, indices: tuple[int, ...], mode: str = FLOAT) -> "SymTensor":
        """Elementary tensor e_{i1} (x) ... (x) e_{ik}; indices are 0-based."""
        t = cls.zeros(dim, len(indices), mode)
        arr = t.coeffs.copy()
        arr.flags.writeable = True
        arr[tuple(indices)] = Fraction(1) if mode == RATIONAL else 1.0
        return cls(dim, arr, mode)

    # -- basic algebra -----------------------------------------------------

    def _check_compatible(self, other: "SymTensor"):
        if self.mode != other.mode:
            raise InputError("cannot mix float and rational tensors")
        if self.dim != other.dim:
            raise InputError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "SymTensor") -> "SymTensor":
        self._check_compatible(other)
        if self.order != other.order:
            raise InputError("cannot add tensors of different order")
        return SymTensor(self.dim, self.coeffs + other.coeffs, self.mode)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        self._check_compatible(other)
        if self.order != other.order:
            raise InputError("cannot subtract tensors of different order")
        return SymTensor(self.dim, self.coeffs - other.coeffs, self.mode)

    def __mul__(self, scalar) -> "SymTensor":
        return SymTensor(self.dim, self.coeffs * scalar, self.mode)

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor":
        return SymTensor(self.dim, -self.coeffs, self.mode)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymTensor):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.order == other.order
            and self.mode == other.mode
            and bool(np.all(self.coeffs == other.coeffs))
        )

    def __hash__(self):
        return hash((self.dim, self.order, self.mode, self.coeffs.tobytes() if self.mode == FLOAT else tuple(self.coeffs.flat)))

    def allclose(self, other: "SymTensor", tol: float = 1e-12) -> bool:
        self._check_compatible(other)
        if self.order != other.order:
            return False
        if self.mode == RATIONAL:
            return bool(np.all(self.coeffs == other.coeffs))
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=tol, atol=tol))

    def is_symmetric(self, tol: float = _SYM_TOL) -> bool:
        """True when every slot permutation leaves the coefficients invariant.

        Exact equality in rational mode, relative tolerance in float mode.
        """
        if self.order < 2:
            return True
        # transpositions of adjacent axes generate the symmetric group
        for ax in range(self.order - 1):
            axes = list(range(self.order))
            axes[ax], axes[ax + 1] = axes[ax + 1], axes[ax]
            swapped = np.transpose(self.coeffs, axes)
            if self.mode == RATIONAL:
                if not np.all(self.coeffs == swapped):
                    return False
            else:
                scale = float(np.max(np.abs(self.coeffs))) or 1.0
                if float(np.max(np.abs(self.coeffs - swapped))) > tol * scale:
                    return False
        return True

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        if self.mode == RATIONAL:
            coeffs = [str(c) for c in self.coeffs.reshape(-1)]
        else:
            coeffs = [float(c) for c in self.coeffs.reshape(-1)]
        return {"dim": self.dim, "order": self.order, "coeffs": coeffs}

    @classmethod
    def from_dict(cls, obj: dict, mode: str = FLOAT) -> "SymTensor":
        try:
            dim = int(obj["dim"])
            order = int(obj["order"])
            raw = obj["coeffs"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed tensor object: {exc}") from exc
        if len(raw) != dim**order:
            raise InputError(
                f"tensor coeffs length {len(raw)} != dim**order = {dim**order}"
            )
        if mode == RATIONAL:
            arr = np.array([Fraction(c) for c in raw], dtype=object)
        else:
            arr = np.asarray(raw, dtype=np.float64)
        return cls(dim, arr.reshape((dim,) * order), mode)

    def __repr__(self):
        return f"SymTensor(dim={self.dim}, order={self.order}, mode={self.mode})"


def _infer_order(dim: int, size: int) -> int:
    order = 0
    n = 1
    while n < size:
        n *= dim
        order += 1
    if n != size:
        raise InputError(f"coeff length {size} is not a power of dim {dim}")
    return order


# ---------------------------------------------------------------------------
# Permutation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Permutation:
    """A bijection of {1..n}, given by the tuple of images of 1..n."""

    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        object.__setattr__(self, "images", images)
        n = len(images)
        if sorted(images) != list(range(1, n + 1)):
            raise InputError(f"{images} is not a bijection of 1..{n}")

    @property
    def size(self) -> int:
        return len(self.images)

    def inverse(self) -> "Permutation":
        inv = [0] * self.size
        for slot, img in enumerate(self.images, start=1):
            inv[img - 1] = slot
        return Permutation(tuple(inv))

    def __call__(self, slot: int) -> int:
        return self.images[slot - 1]

    def compose(self, other: "Permutation") -> "Permutation":
        """self after other: (self*other)(i) = self(other(i))."""
        if self.size != other.size:
            raise InputError("permutation size mismatch")
        return Permutation(tuple(self(other(i)) for i in range(1, self.size + 1)))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def all(cls, n: int):
        for images in itertools.permutations(range(1, n + 1)):
            yield cls(images)


def apply_permutation(sigma: Permutation, t: SymTensor) -> SymTensor:
    """Slot action on tensors: sigma(x1 (x) ... (x) xk) = x_{sigma(1)} (x) ...

    On coefficients: sigma(t)[j_1..j_k] = t[j_{sigma^{-1}(1)}..j_{sigma^{-1}(k)}],
    which with numpy's transpose convention means axes = sigma itself.
    """
    if sigma.size != t.order:
        raise InputError(
            f"permutation size {sigma.size} != tensor order {t.order}"
        )
    if t.order < 2:
        return t
    return SymTensor(t.dim, permute_axes(t.coeffs, sigma), t.mode)


def permute_axes(coeffs: np.ndarray, sigma: Permutation) -> np.ndarray:
    """Raw-array version of :func:`apply_permutation` (no leading axes)."""
    axes = [img - 1 for img in sigma.images]
    return np.transpose(coeffs, axes)


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def tensor_product(a: SymTensor, b: SymTensor) -> SymTensor:
    """a (x) b: coefficients are the outer product, orders add."""
    a._check_compatible(b)
    if a.order + b.order > MAX_ORDER:
        raise InputError(
            f"product order {a.order + b.order} exceeds cap {MAX_ORDER}"
        )
    coeffs = np.multiply.outer(a.coeffs, b.coeffs)
    return SymTensor(a.dim, coeffs, a.mode)


def symmetrize(t: SymTensor) -> SymTensor:
    """(1/k!) sum over S_k of the slot action; idempotent."""
    k = t.order
    if k < 2:
        return t
    acc = None
    for sigma in Permutation.all(k):
        term = permute_axes(t.coeffs, sigma)
        acc = term.copy() if acc is None else acc + term
    if t.mode == RATIONAL:
        acc = acc * Fraction(1, _factorial(k))
    else:
        acc = acc / _factorial(k)
    return SymTensor(t.dim, acc, t.mode)


def symmetrize_array(coeffs: np.ndarray, input_axes: int) -> np.ndarray:
    """Symmetrize the trailing ``input_axes`` axes of a raw array.

    Leading axes (output stacking) are untouched.  Float only.
    """
    k = input_axes
    if k < 2:
        return coeffs
    lead = coeffs.ndim - k
    acc = np.zeros_like(coeffs)
    for perm in itertools.permutations(range(k)):
        axes = list(range(lead)) + [lead + p for p in perm]
        acc += np.transpose(coeffs, axes)
    return acc / _factorial(k)


# ---------------------------------------------------------------------------
# Norm families
# ---------------------------------------------------------------------------

_KINDS = ("ell1", "ellp", "ellinf")

PROJECTIVE = "projective"
SYMMETRIC = "symmetric"
COMPATIBLE = "compatible"


@dataclass(frozen=True)
class NormFamily:
    """A rule assigning a norm to every tensor order.

    ``kind`` selects the coefficient aggregate (ell1, ellp with exponent q,
    ellinf); ``scales`` holds per-order factors s_k > 0 (missing orders
    default to 1).  ``declared`` lists properties the family claims:
    'projective', 'symmetric', or ('compatible', C); claims are audited by
    :func:`verify_norm_properties`, never assumed.
    """

    kind: str = "ellinf"
    q: float | None = None
    scales: tuple[float, ...] | None = None
    declared: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown norm kind {self.kind!r}")
        if self.kind == "ellp":
            if self.q is None or not (1 <= float(self.q) < math.inf):
                raise InputError("ellp requires a finite exponent q >= 1")
        if self.scales is not None:
            scales = tuple(float(s) for s in self.scales)
            if any(s <= 0 for s in scales):
                raise InputError("scale factors must be positive")
            object.__setattr__(self, "scales", scales)
        declared = []
        for item in self.declared:
            if item in (PROJECTIVE, SYMMETRIC):
                declared.append(item)
            elif isinstance(item, (tuple, list)) and len(item) == 2 and item[0] == COMPATIBLE:
                declared.append((COMPATIBLE, float(item[1])))
            else:
                raise InputError(f"unknown declared property {item!r}")
        object.__setattr__(self, "declared", tuple(declared))

    # -- constructors ------------------------------------------------------

    @classmethod
    def l1(cls, scales=None, declared=(PROJECTIVE, SYMMETRIC, (COMPATIBLE, 1.0))):
        return cls("ell1", None, scales, declared)

    @classmethod
    def linf(cls, scales=None, declared=(PROJECTIVE, SYMMETRIC)):
        return cls("ellinf", None, scales, declared)

    @classmethod
    def lp(cls, q, scales=None, declared=(PROJECTIVE, SYMMETRIC)):
        return cls("ellp", q, scales, declared)

    # -- norms -------------------------------------------------------------

    def scale(self, order: int):
        if self.scales is None:
            return 1.0
        if order >= len(self.scales):
            raise InputError(
                f"norm family defines scales up to order {len(self.scales) - 1}, "
                f"got order {order}"
            )
        return self.scales[order]

    def aggregate(self, flat: np.ndarray):
        """The unscaled coefficient aggregate of a flat array."""
        if flat.dtype == object:
            mags = np.array([abs(c) for c in flat], dtype=object)
            if self.kind == "ell1":
                return sum(mags, Fraction(0)) if len(mags) else Fraction(0)
            if self.kind == "ellinf":
                return max(mags) if len(mags) else Fraction(0)
            return float(np.sum(np.array([float(m) for m in mags]) ** self.q) ** (1.0 / self.q))
        mags = np.abs(flat)
        if self.kind == "ell1":
            return float(np.sum(mags))
        if self.kind == "ellinf":
            return float(np.max(mags)) if mags.size else 0.0
        return float(np.sum(mags**self.q) ** (1.0 / self.q))

    def vector_norm(self, v) -> float:
        """Order-1 norm on R^d (the norm used for displacements)."""
        v = np.asarray(v)
        return self.scale(1) * self.aggregate(v.reshape(-1))

    def declares(self, prop) -> bool:
        if prop == COMPATIBLE:
            return any(isinstance(p, tuple) and p[0] == COMPATIBLE for p in self.declared)
        return prop in self.declared

    def compatible_constant(self) -> float | None:
        for p in self.declared:
            if isinstance(p, tuple) and p[0] == COMPATIBLE:
                return p[1]
        return None

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        declared = []
        for p in self.declared:
            if isinstance(p, tuple):
                declared.append({p[0]: p[1]})
            else:
                declared.append(p)
        out = {"kind": self.kind, "declared": declared}
        if self.q is not None:
            out["q"] = self.q
        if self.scales is not None:
            out["scales"] = list(self.scales)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "NormFamily":
        try:
            kind = obj["kind"]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed norm family: {exc}") from exc
        declared = []
        for p in obj.get("declared", []):
            if isinstance(p, dict):
                ((name, value),) = p.items()
                declared.append((name, value))
            else:
                declared.append(p)
        scales = obj.get("scales")
        return cls(kind, obj.get("q"), tuple(scales) if scales else None, tuple(declared))

    @classmethod
    def from_spec(cls, spec: str) -> "NormFamily":
        """Parse CLI shorthand: 'l1', 'linf', or 'lp:2.5'."""
        spec = spec.strip().lower()
        if spec in ("l1", "ell1"):
            return cls.l1()
        if spec in ("linf", "ellinf"):
            return cls.linf()
        if spec.startswith(("lp:", "ellp:")):
            return cls.lp(float(spec.split(":", 1)[1]))
        raise InputError(f"unknown norm spec {spec!r}")


def tensor_norm(t: SymTensor, fam: NormFamily):
    """s_k times the coefficient aggregate; exact in rational mode for l1/linf."""
    s = fam.scale(t.order)
    agg = fam.aggregate(t.coeffs.reshape(-1))
    if t.mode == RATIONAL and fam.kind in ("ell1", "ellinf"):
        s_exact = Fraction(s).limit_denominator(10**12) if not isinstance(s, Fraction) else s
        if float(s_exact) == s:
            return s_exact * agg
    return float(s) * float(agg)


# ---------------------------------------------------------------------------
# Linear maps and their lifts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearMap:
    """An m x d real matrix acting as a linear map R^d -> R^m."""

    entries: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.entries, dtype=np.float64)
        if mat.ndim != 2:
            raise InputError("LinearMap entries must be 2-D")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "entries", mat)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def __call__(self, x):
        return self.entries @ np.asarray(x, dtype=np.float64)

    def compose(self, other: "LinearMap") -> "LinearMap":
        if self.cols != other.rows:
            raise InputError("LinearMap composition shape mismatch")
        return LinearMap(self.entries @ other.entries)

    @classmethod
    def identity(cls, d: int) -> "LinearMap":
        return cls(np.eye(d))

    def subordinate_norm(self, fam: NormFamily, fam_out: NormFamily | None = None) -> float:
        """Operator norm with the family's order-1 norms on both sides.

        Closed form for ell1 (max column sum) and ellinf (max row sum);
        for ellp the value is a power-iteration estimate.
        """
        fam_out = fam_out or fam
        base = subordinate_matrix_norm(
            self.entries, fam.kind, fam.q, fam_out.kind, fam_out.q
        )
        return base * fam_out.scale(1) / fam.scale(1)


def _dual_vector(y: np.ndarray, kind: str, q: float | None) -> np.ndarray:
    """A unit-dual-norm vector z with z @ y = ||y||."""
    a = np.abs(y)
    if kind == "ell1":
        return np.sign(y) if np.any(y) else np.ones_like(y)
    if kind == "ellinf":
        z = np.zeros_like(y)
        if np.any(a):
            i = int(np.argmax(a))
            z[i] = np.sign(y[i]) or 1.0
        else:
            z[0] = 1.0
        return z
    norm = float(np.sum(a**q) ** (1.0 / q))
    if norm == 0.0:
        z = np.zeros_like(y)
        z[0] = 1.0
        return z
    return np.sign(y) * (a / norm) ** (q - 1.0)


def _vec_norm(y: np.ndarray, kind: str, q: float | None) -> float:
    a = np.abs(y)
    if kind == "ell1":
        return float(np.sum(a))
    if kind == "ellinf":
        return float(np.max(a)) if a.size else 0.0
    return float(np.sum(a**q) ** (1.0 / q))


def subordinate_matrix_norm(
    mat: np.ndarray,
    in_kind: str,
    in_q: float | None = None,
    out_kind: str | None = None,
    out_q: float | None = None,
    corner_limit: int = 16,
) -> float:
    """Subordinate norm of ``mat`` from (R^n, in-norm) to (R^m, out-norm).

    Exact for ell1 inputs (max column out-norm) and for ellinf -> ellinf
    (max row sum).  ellinf inputs with other outputs are exact by sign-corner
    enumeration while n <= corner_limit; everything else falls back to a
    Boyd-Higham projected power iteration and is documented as an estimate
    (a guaranteed lower bound, converged to 1e-10).
    """
    mat = np.asarray(mat, dtype=np.float64)
    if out_kind is None:
        out_kind, out_q = in_kind, in_q
    if out_kind == "ellp" and out_q is None:
        out_q = in_q
    if mat.size == 0:
        return 0.0
    if in_kind == "ell1":
        col_norms = [_vec_norm(mat[:, j], out_kind, out_q) for j in range(mat.shape[1])]
        return max(col_norms)
    if in_kind == "ellinf" and out_kind == "ellinf":
        return float(np.max(np.sum(np.abs(mat), axis=1)))
    if in_kind == "ellinf" and mat.shape[1] <= corner_limit:
        n = mat.shape[1]
        best = 0.0
        for bits in range(2 ** (n - 1)):
            signs = np.array([1.0] + [1.0 if (bits >> i) & 1 else -1.0 for i in range(n - 1)])
            best = max(best, _vec_norm(mat @ signs, out_kind, out_q))
        return best
    return _power_norm_estimate(mat, in_kind, in_q, out_kind, out_q)


def _power_norm_estimate(mat, in_kind, in_q, out_kind, out_q, tol=1e-10, max_iter=500):
    n = mat.shape[1]
    # dual exponent of the input norm drives the update
    if in_kind == "ellp":
        q_dual = math.inf if in_q == 1 else in_q / (in_q - 1.0)
    elif in_kind == "ell1":
        q_dual = math.inf
    else:
        q_dual = 1.0
    dual_kind = "ellinf" if q_dual == math.inf else ("ell1" if q_dual == 1.0 else "ellp")
    dual_q = None if dual_kind != "ellp" else q_dual

    best = 0.0
    rng = np.random.default_rng(12345)
    starts = [np.ones(n)] + [rng.standard_normal(n) for _ in range(4)]
    for x in starts:
        x = x / (_vec_norm(x, in_kind, in_q) or 1.0)
        gamma_old = -1.0
        for _ in range(max_iter):
            y = mat @ x
            gamma = _vec_norm(y, out_kind, out_q)
            z = mat.T @ _dual_vector(y, out_kind, out_q)
            if gamma <= gamma_old * (1 + tol):
                break
            gamma_old = gamma
            zx = _dual_vector(z, dual_kind, dual_q)
            x = zx / (_vec_norm(zx, in_kind, in_q) or 1.0)
        best = max(best, gamma_old)
    return best


class TensorPowerMap:
    """The lift u^{(x)k}: applies u to every slot of an order-k tensor."""

    def __init__(self, u: LinearMap, k: int):
        if k < 1:
            raise InputError("lift order must be >= 1")
        if k > MAX_ORDER:
            raise InputError(f"lift order {k} exceeds cap {MAX_ORDER}")
        self.u = u
        self.k = k

    def __call__(self, t: SymTensor) -> SymTensor:
        if t.order != self.k:
            raise InputError(f"expected order {self.k}, got {t.order}")
        if t.dim != self.u.cols:
            raise InputError("tensor dimension does not match map input size")
        coeffs = np.asarray(t.coeffs, dtype=np.float64)
        for axis in range(self.k):
            coeffs = np.moveaxis(
                np.tensordot(self.u.entries, coeffs, axes=(1, axis)), 0, axis
            )
        return SymTensor(self.u.rows, coeffs, FLOAT)

    def apply_array(self, coeffs: np.ndarray) -> np.ndarray:
        """Apply to the trailing k axes of a raw array (leading axes kept)."""
        lead = coeffs.ndim - self.k
        for axis in range(lead, coeffs.ndim):
            coeffs = np.moveaxis(
                np.tensordot(self.u.entries, coeffs, axes=(1, axis)), 0, axis
            )
        return coeffs

    def norm_estimate(
        self,
        fam_in: NormFamily,
        fam_out: NormFamily | None = None,
        samples: int = 64,
        seed: int = 0,
    ) -> float:
        """Measured operator norm: max ratio over basis tensors, random
        tensors and elementary products of random vectors (a lower bound)."""
        fam_out = fam_out or fam_in
        d = self.u.cols
        rng = np.random.default_rng(seed)
        best = 0.0
        candidates = []
        for idx in itertools.product(range(d), repeat=self.k):
            if len(candidates) >= 64:
                break
            candidates.append(SymTensor.basis(d, idx))
        for _ in range(samples):
            candidates.append(SymTensor(d, rng.standard_normal((d,) * self.k)))
            vecs = rng.standard_normal((self.k, d))
            elem = SymTensor.from_vector(vecs[0])
            for v in vecs[1:]:
                elem = tensor_product(elem, SymTensor.from_vector(v))
            candidates.append(elem)
        for t in candidates:
            denom = tensor_norm(t, fam_in)
            if float(denom) == 0.0:
                continue
            best = max(best, float(tensor_norm(self(t), fam_out)) / float(denom))
        return best


def lift_linear_map(u: LinearMap, k: int) -> TensorPowerMap:
    """Operator v1 (x) ... (x) vk -> u(v1) (x) ... (x) u(vk), linear extension."""
    return TensorPowerMap(u, k)


# ---------------------------------------------------------------------------
# Property verification
# ---------------------------------------------------------------------------


@dataclass
class PropertyCheck:
    name: str
    passed: bool
    max_ratio: float
    witness: dict | None


@dataclass
class NormPropertyReport:
    family: NormFamily
    dim: int
    k_max: int
    sample_count: int
    seed: int
    checks: list[PropertyCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> PropertyCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "k_max": self.k_max,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "max_ratio": c.max_ratio,
                    "witness": c.witness,
                }
                for c in self.checks
            ],
        }


def _unit_ball_tensor(rng, dim, order, fam) -> SymTensor:
    t = SymTensor(dim, rng.uniform(-1.0, 1.0, size=(dim,) * order))
    n = float(tensor_norm(t, fam))
    return t if n == 0 else t * (1.0 / n)


def _projective_batch(args):
    fam, dim, k_max, seed, count = args
    rng = np.random.default_rng(seed)
    worst = (0.0, None)
    pairs = []
    # all basis pairs once per batch (cheap, catches scale corruption exactly)
    for p in range(1, k_max):
        for q in range(1, k_max - p + 1):
            for ia in itertools.product(range(dim), repeat=p):
                for ib in itertools.product(range(dim), repeat=q):
                    pairs.append((SymTensor.basis(dim, ia), SymTensor.basis(dim, ib)))
                    if len(pairs) >= 128:
                        break
                if len(pairs) >= 128:
                    break
            if len(pairs) >= 128:
                break
    for _ in range(count):
        p = int(rng.integers(1, k_max))
        q = int(rng.integers(1, k_max - p + 1))
        pairs.append(
            (_unit_ball_tensor(rng, dim, p, fam), _unit_ball_tensor(rng, dim, q, fam))
        )
    for a, b in pairs:
        na, nb = float(tensor_norm(a, fam)), float(tensor_norm(b, fam))
        nab = float(tensor_norm(tensor_product(a, b), fam))
        denom = na * nb
        if denom == 0:
            continue
        ratio = nab / denom
        if ratio > worst[0]:
            worst = (ratio, {"a": a.to_dict(), "b": b.to_dict(), "ratio": ratio})
    return worst


def _symmetric_batch(args):
    fam, dim, k_max, seed, count = args
    rng = np.random.default_rng(seed)
    worst = (0.0, None)
    for _ in range(count):
        k = int(rng.integers(2, k_max + 1)) if k_max >= 2 else 2
        t = SymTensor(dim, rng.standard_normal((dim,) * k))
        images = tuple(int(i) + 1 for i in rng.permutation(k))
        sigma = Permutation(images)
        n0 = float(tensor_norm(t, fam))
        n1 = float(tensor_norm(apply_permutation(sigma, t), fam))
        if n0 == 0:
            continue
        dev = abs(n1 - n0) / n0
        if dev > worst[0]:
            worst = (dev, {"tensor": t.to_dict(), "sigma": sigma.images, "deviation": dev})
    return worst


def _compatible_batch(args):
    fam, dim, k_max, seed, count, cconst = args
    rng = np.random.default_rng(seed)
    worst = (0.0, None)
    for _ in range(count):
        u = LinearMap(rng.uniform(-1.0, 1.0, size=(dim, dim)))
        nu = u.subordinate_norm(fam)
        if nu == 0:
            continue
        for k in range(1, k_max + 1):
            lifted = lift_linear_map(u, k).norm_estimate(fam, samples=8, seed=int(rng.integers(2**31)))
            bound = cconst * nu**k
            ratio = lifted / bound if bound > 0 else math.inf
            if ratio > worst[0]:
                worst = (ratio, {"u": u.entries.tolist(), "k": k, "lifted": lifted, "bound": bound})
    return worst


def verify_norm_properties(
    fam: NormFamily,
    dim: int,
    k_max: int = 4,
    sample_count: int = 200,
    seed: int = 0,
) -> NormPropertyReport:
    """Audit every declared property on randomized samples plus basis tensors.

    A failed check is a report entry with a witness, not an exception.
    Sample batches fan out to workers; the per-run seed keeps results
    deterministic.
    """
    if sample_count < 1:
        raise InputError("sample_count must be >= 1")
    if k_max < 1 or k_max > MAX_ORDER:
        raise InputError(f"k_max must be in 1..{MAX_ORDER}")
    checks: list[PropertyCheck] = []
    n_batches = len(split_batches(sample_count, 8))
    per = -(-sample_count // n_batches)

    def run(batch_fn, extra=()):
        args = [
            (fam, dim, k_max, seed * 7919 + i, per) + tuple(extra)
            for i in range(n_batches)
        ]
        results = map_batches(batch_fn, args)
        worst = (0.0, None)
        for r in results:
            if r[0] > worst[0]:
                worst = r
        return worst

    slack = 1.0 + 1e-12
    if fam.declares(PROJECTIVE):
        ratio, witness = run(_projective_batch)
        ok = ratio <= slack
        checks.append(PropertyCheck(PROJECTIVE, ok, ratio, None if ok else witness))
    if fam.declares(SYMMETRIC):
        dev, witness = run(_symmetric_batch)
        ok = dev <= 1e-12
        checks.append(PropertyCheck(SYMMETRIC, ok, dev, None if ok else witness))
    if fam.declares(COMPATIBLE):
        c = fam.compatible_constant()
        ratio, witness = run(_compatible_batch, (c,))
        ok = ratio <= 1.0 + 1e-9
        checks.append(PropertyCheck(f"{COMPATIBLE}({c:g})", ok, ratio, None if ok else witness))
    return NormPropertyReport(fam, dim, k_max, sample_count, seed, checks)
