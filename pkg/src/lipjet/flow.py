"""Flows of closed-form vector fields with empirical bound certification.

The integrator is an adaptive Cash-Karp embedded pair (orders 4/5) with
per-step error below the requested tolerance, both time directions, and
exact checkpoint landings.  Spatial flow derivatives come from prolonged
variational systems whose right-hand sides use the field's exact
symbolic derivatives; finite differences appear only in tests.

Certification margins absorb integrator error through an explicit
allowance (a multiple of the tolerance): the a-priori bounds hold for
the true flow, not the numerical one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from ._parallel import map_batches, split_batches
from .calculus import compose_level_tensor, smooth_lip_bound
from .errors import CertificationError, InputError
from .expressions import SmoothMap, box_grid, parse_ast, to_ast
from .jet import LipCertificate, LipGrade, LipJet, certify
from .tensor import NormFamily, symmetrize_array

_MIN_STEP = 1e-14

# Cash-Karp tableau (5th order propagated, 4th order error estimate)
_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = (37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771)
_CK_B4 = (2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4)


def _inf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------


class VectorField:
    """A closed-form field on R^d with exact derivatives and a working box.

    ``gamma`` is the declared grade; measured sup norms over a box are
    grid values (documented as measurements, not exact sups) and feed the
    smooth-map bound to produce valid Lipschitz-norm upper bounds.
    """

    def __init__(self, smap: SmoothMap, box, gamma: float):
        if smap.dim_in != smap.dim_out:
            raise InputError("a vector field must map R^d to itself")
        box = np.atleast_2d(np.asarray(box, dtype=np.float64))
        if box.shape != (smap.dim_in, 2):
            raise InputError(f"box must be {smap.dim_in} pairs [lo, hi]")
        if np.any(box[:, 1] <= box[:, 0]):
            raise InputError("box intervals must have positive length")
        if gamma <= 0:
            raise InputError("gamma must be positive")
        self.map = smap
        self.box = box
        self.gamma = float(gamma)
        self._sup_cache: dict[tuple, float] = {}

    @property
    def dim(self) -> int:
        return self.map.dim_in

    @classmethod
    def from_strings(cls, coord_texts, box, gamma: float) -> "VectorField":
        return cls(SmoothMap.from_strings(coord_texts, len(coord_texts)), box, gamma)

    def __call__(self, y) -> np.ndarray:
        return self.map(y)

    def eval_states(self, Y: np.ndarray) -> np.ndarray:
        return self.map._eval_level(Y, 0)

    def derivative_sup(self, k: int, box=None, n_per_dim: int | None = None) -> float:
        box = self.box if box is None else np.asarray(box, dtype=np.float64)
        if n_per_dim is None:
            n_per_dim = max(3, int(round(100001 ** (1.0 / self.dim))))
        key = (k, box.tobytes(), n_per_dim)
        if key not in self._sup_cache:
            self._sup_cache[key] = self.map.grid_sup(box, k, n_per_dim)
        return self._sup_cache[key]

    def lip_norm_bound(self, gamma_sub: float, box=None) -> float:
        """Upper bound for the Lip-gamma_sub norm over the box.

        Derivative sups up to order n+1 enter the smooth-map bound; valid
        on convex boxes because the map is smooth there.
        """
        from .jet import lip_grade

        g = lip_grade(gamma_sub)
        sups = [self.derivative_sup(k, box) for k in range(g.n + 2)]
        return smooth_lip_bound(sups, gamma_sub)

    def measured_constants(self, eps: float, box=None) -> dict:
        return {
            "sup": self.derivative_sup(0, box),
            "lip1": self.lip_norm_bound(1.0, box),
            "lip_1_eps": self.lip_norm_bound(1.0 + eps, box),
        }

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "coords": [to_ast(e, self.dim) for e in self.map.exprs],
            "box": self.box.tolist(),
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "VectorField":
        try:
            dim = int(obj["dim"])
            coords = obj["coords"]
            box = obj["box"]
            gamma = float(obj["gamma"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed field object: {exc}") from exc
        if len(coords) != dim:
            raise InputError(f"field lists {len(coords)} coordinates for dim {dim}")
        exprs = [parse_ast(c, dim) for c in coords]
        return cls(SmoothMap(exprs, dim), box, gamma)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Accepted integration path of a single initial state."""

    times: np.ndarray
    states: np.ndarray
    step_errors: np.ndarray
    tol: float
    accepted: int
    rejected: int

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path):
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"y{i}" for i in range(d)])
            for t, y in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in y])


class _BatchStepper:
    """Shared-step adaptive Cash-Karp driver for a batch of identical systems."""

    def __init__(self, rhs, Y0: np.ndarray, tol: float):
        self.rhs = rhs
        self.Y = np.array(Y0, dtype=np.float64)
        self.tol = float(tol)
        self.t = 0.0
        self.accepted = 0
        self.rejected = 0
        self.max_err = 0.0
        self.history: list[tuple[float, np.ndarray, float]] = []

    def _step_once(self, h: float):
        k = [self.rhs(self.Y)]
        for stage in range(1, 6):
            Ys = self.Y + h * sum(
                a * k[j] for j, a in enumerate(_CK_A[stage])
            )
            k.append(self.rhs(Ys))
        y5 = self.Y + h * sum(b * k[j] for j, b in enumerate(_CK_B5) if b)
        y4 = self.Y + h * sum(b * k[j] for j, b in enumerate(_CK_B4) if b)
        return y5, _inf(y5 - y4)

    def advance_to(self, t_target: float, record: bool = False):
        direction = 1.0 if t_target >= self.t else -1.0
        if t_target == self.t:
            return
        span = abs(t_target - self.t)
        scale = (1.0 + _inf(self.Y)) / (1.0 + _inf(self.rhs(self.Y)))
        h = direction * min(0.01 * scale, span)
        while (t_target - self.t) * direction > 0:
            if abs(h) < _MIN_STEP:
                raise CertificationError(
                    f"stiffness failure: step underflow ({abs(h):.3e}) at t={self.t:.6g}"
                )
            if (self.t + h - t_target) * direction > 0:
                h = t_target - self.t
            y_new, err = self._step_once(h)
            if err <= self.tol:
                self.t = self.t + h
                self.Y = y_new
                self.accepted += 1
                self.max_err = max(self.max_err, err)
                if record:
                    self.history.append((self.t, y_new.copy(), err))
                grow = 0.9 * (self.tol / err) ** 0.2 if err > 0 else 5.0
                h *= min(5.0, max(0.2, grow))
            else:
                self.rejected += 1
                h *= max(0.2, 0.9 * (self.tol / err) ** 0.2)


def integrate(
    A: VectorField,
    y0,
    t_final: float,
    tol: float,
    checkpoints=None,
) -> Trajectory:
    """Integrate a single initial state to t_final (either sign).

    The trajectory records every accepted step; its invariant is that the
    embedded-pair error estimate of each step stays below the tolerance.
    ``checkpoints`` forces exact landings at intermediate times.
    """
    if tol <= 0:
        raise InputError("tolerance must be positive")
    y0 = np.asarray(y0, dtype=np.float64).reshape(1, -1)
    if y0.shape[1] != A.dim:
        raise InputError("initial state dimension mismatch")
    stepper = _BatchStepper(lambda Y: A.eval_states(Y), y0, tol)
    stepper.history.append((0.0, y0.copy(), 0.0))
    stops = sorted(set(list(checkpoints or []) + [t_final]), key=abs)
    for stop in stops:
        if stop * (1 if t_final >= 0 else -1) < 0:
            raise InputError("checkpoints must lie between 0 and t_final")
        stepper.advance_to(stop, record=True)
    times = np.array([h[0] for h in stepper.history])
    states = np.stack([h[1][0] for h in stepper.history])
    errs = np.array([h[2] for h in stepper.history])
    return Trajectory(times, states, errs, tol, stepper.accepted, stepper.rejected)


def flow_map(A: VectorField, y0, t: float, tol: float) -> np.ndarray:
    """The flow evaluated at a single (t, y0)."""
    y0 = np.asarray(y0, dtype=np.float64).reshape(1, -1)
    if t == 0.0:
        return y0[0]
    stepper = _BatchStepper(lambda Y: A.eval_states(Y), y0, tol)
    stepper.advance_to(t)
    return stepper.Y[0]


def _batch_flow_at(A_rhs, Y0: np.ndarray, times, tol: float) -> dict[float, np.ndarray]:
    """States of a batch at the requested times (one pass per sign)."""
    out = {}
    times = sorted(set(float(t) for t in times), key=abs)
    pos = [t for t in times if t > 0]
    neg = [t for t in times if t < 0]
    if 0.0 in times:
        out[0.0] = np.array(Y0, dtype=np.float64)
    for group in (pos, neg):
        if not group:
            continue
        stepper = _BatchStepper(A_rhs, Y0, tol)
        for t in group:
            stepper.advance_to(t)
            out[t] = stepper.Y.copy()
    return out


def comparison_bound(a: float, b: float, u0: float, dt: float) -> float:
    """Growth bound e^{a dt} u0 + (b/a)(e^{a dt} - 1), with the a -> 0 limit
    u0 + b dt taken below 1e-13 to avoid cancellation."""
    if a < 0 or b < 0 or u0 < 0:
        raise InputError("comparison bound needs non-negative a, b, u0")
    dt = abs(dt)
    if a < 1e-13:
        return u0 + b * dt
    growth = math.exp(a * dt)
    return growth * u0 + (b / a) * (growth - 1.0)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass
class FlowCertificate:
    """One checked a-priori bound with its measured counterpart.

    ``margin`` is bound minus measured; a run passes while the margin does
    not undershoot minus the allowance (integrator error budget).
    """

    kind: str
    T: float
    r: float | None
    x0: list | None
    bound: float
    measured: float
    allowance: float

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return self.margin >= -self.allowance

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.T,
            "r": self.r,
            "x0": self.x0,
            "bound": self.bound,
            "measured": self.measured,
            "allowance": self.allowance,
            "margin": self.margin,
            "passed": self.passed,
        }


def _visited_box(states: np.ndarray, pad: float = 0.05) -> np.ndarray:
    lo = np.min(states, axis=0)
    hi = np.max(states, axis=0)
    width = np.maximum(hi - lo, 1e-6)
    return np.stack([lo - pad * width, hi + pad * width], axis=1)


def flow_space_lipschitz_check(
    A: VectorField,
    T: float,
    pairs,
    tol: float,
    x0=None,
    r: float | None = None,
    n_checkpoints: int = 4,
) -> list[FlowCertificate]:
    """Check the displayed flow bounds on the given pairs of initial points.

    Returns three certificates: the space contraction with factor
    e^{|t| L1}, the time-space variant with the extra sup |t - t~| term,
    and ball confinement within r + T * sup.  Field constants are grid
    measurements on a box covering every visited state (the growth
    arguments only ever see visited states, so this is sound).
    """
    if T <= 0:
        raise InputError("T must be positive")
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 3 or pairs.shape[1] != 2 or pairs.shape[2] != A.dim:
        raise InputError("pairs must have shape (n_pairs, 2, dim)")
    n_pairs = pairs.shape[0]
    checks = [T * (j + 1) / n_checkpoints for j in range(n_checkpoints)]
    times = [t for c in checks for t in (c, -c)]
    flat = pairs.reshape(-1, A.dim)
    states = _batch_flow_at(lambda Y: A.eval_states(Y), flat, times, tol)

    if x0 is None:
        x0 = np.mean(flat, axis=0)
    else:
        x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if r is None:
        r = max(_inf(p - x0) for p in flat)
    corners = []
    d = A.dim
    for corner in range(min(2**d, 64)):
        signs = np.array([1.0 if (corner >> b) & 1 else -1.0 for b in range(d)])
        corners.append(x0 + r * signs)
    fan = np.concatenate([flat, np.stack(corners)], axis=0)
    fan_states = _batch_flow_at(lambda Y: A.eval_states(Y), fan, times, tol)

    everything = np.concatenate(
        [flat, fan] + [states[t] for t in states] + [fan_states[t] for t in fan_states]
    )
    box = _visited_box(everything)
    L1 = A.lip_norm_bound(1.0, box)
    sup = A.derivative_sup(0, box)
    allowance = 10.0 * tol

    worst_contraction = (math.inf, 0.0, 0.0)
    for t in times:
        Z = states[t].reshape(n_pairs, 2, d)
        for idx in range(n_pairs):
            base = _inf(pairs[idx, 0] - pairs[idx, 1])
            measured = _inf(Z[idx, 0] - Z[idx, 1])
            bound = math.exp(abs(t) * L1) * base
            if bound - measured < worst_contraction[0]:
                worst_contraction = (bound - measured, bound, measured)
    cert_contraction = FlowCertificate(
        "space-contraction", T, float(r), x0.tolist(),
        bound=worst_contraction[1], measured=worst_contraction[2],
        allowance=allowance,
    )

    worst_ts = (math.inf, 0.0, 0.0)
    for ti in times:
        for tj in times:
            if ti >= tj:
                continue
            Zi = states[ti].reshape(n_pairs, 2, d)
            Zj = states[tj].reshape(n_pairs, 2, d)
            for idx in range(n_pairs):
                base = _inf(pairs[idx, 0] - pairs[idx, 1])
                measured = _inf(Zi[idx, 0] - Zj[idx, 1])
                bound = math.exp(min(abs(ti), abs(tj)) * L1) * base + sup * abs(ti - tj)
                if bound - measured < worst_ts[0]:
                    worst_ts = (bound - measured, bound, measured)
    cert_ts = FlowCertificate(
        "time-space-Hoelder", T, float(r), x0.tolist(),
        bound=worst_ts[1], measured=worst_ts[2], allowance=allowance,
    )

    reach = max(
        _inf(fan_states[t][idx] - x0) for t in fan_states for idx in range(fan.shape[0])
    )
    cert_conf = FlowCertificate(
        "ball-confinement", T, float(r), x0.tolist(),
        bound=float(r) + T * sup, measured=reach, allowance=allowance,
    )
    return [cert_contraction, cert_ts, cert_conf]


def flow_group_deviation(A: VectorField, triples, tol: float) -> dict:
    """Max deviation of the two-leg flow against the one-leg flow.

    ``triples`` rows are (s, t, y...); the flow property asks the two
    routes to agree within the integrator allowance 10*tol.
    """
    triples = np.asarray(triples, dtype=np.float64)
    worst = 0.0
    for row in triples:
        s, t = float(row[0]), float(row[1])
        y = row[2:]
        one = flow_map(A, y, s + t, tol) if s + t != 0 else np.asarray(y)
        mid = flow_map(A, y, t, tol)
        two = flow_map(A, mid, s, tol)
        worst = max(worst, _inf(one - two))
    return {
        "max_deviation": worst,
        "allowance": 10.0 * tol,
        "passed": worst <= 10.0 * tol,
        "n_triples": int(triples.shape[0]),
    }


# ---------------------------------------------------------------------------
# Variational systems
# ---------------------------------------------------------------------------


def _prolonged_sizes(d: int, order: int) -> list[int]:
    return [d ** (j + 1) for j in range(order + 1)]


def _prolonged_rhs(smap: SmoothMap, order: int):
    """Right-hand side of the nested tangent prolongation up to ``order``.

    State rows pack (y, J, H, K): y' = A(y), J' = dA J,
    H' = d2A[J,J] + dA H, K' = d3A[J,J,J] + three d2A[H,J] pairings + dA K.
    """
    d = smap.dim_in
    sizes = _prolonged_sizes(d, order)
    offs = np.cumsum([0] + sizes)

    def rhs(S: np.ndarray) -> np.ndarray:
        B = S.shape[0]
        y = S[:, offs[0] : offs[1]]
        A0 = smap._eval_level(y, 0)
        dA = smap._eval_level(y, 1)
        parts = [A0]
        J = S[:, offs[1] : offs[2]].reshape(B, d, d)
        parts.append(np.einsum("xab,xbi->xai", dA, J).reshape(B, -1))
        if order >= 2:
            d2A = smap._eval_level(y, 2)
            H = S[:, offs[2] : offs[3]].reshape(B, d, d, d)
            Hp = np.einsum("xabc,xbi,xcj->xaij", d2A, J, J, optimize=True)
            Hp += np.einsum("xab,xbij->xaij", dA, H)
            parts.append(Hp.reshape(B, -1))
        if order >= 3:
            d3A = smap._eval_level(y, 3)
            K = S[:, offs[3] : offs[4]].reshape(B, d, d, d, d)
            Kp = np.einsum("xabce,xbi,xcj,xel->xaijl", d3A, J, J, J, optimize=True)
            Kp += np.einsum("xabc,xbij,xcl->xaijl", d2A, H, J, optimize=True)
            Kp += np.einsum("xabc,xbil,xcj->xaijl", d2A, H, J, optimize=True)
            Kp += np.einsum("xabc,xbjl,xci->xaijl", d2A, H, J, optimize=True)
            Kp += np.einsum("xab,xbijl->xaijl", dA, K)
            parts.append(Kp.reshape(B, -1))
        return np.concatenate(parts, axis=1)

    return rhs, offs


def _prolonged_initial(Y0: np.ndarray, d: int, order: int) -> np.ndarray:
    B = Y0.shape[0]
    parts = [Y0]
    parts.append(np.broadcast_to(np.eye(d).reshape(1, -1), (B, d * d)).copy())
    if order >= 2:
        parts.append(np.zeros((B, d**3)))
    if order >= 3:
        parts.append(np.zeros((B, d**4)))
    return np.concatenate(parts, axis=1)


def flow_jacobian(
    A: VectorField,
    y0,
    T: float,
    tol: float,
    checkpoints=None,
) -> tuple[np.ndarray, np.ndarray, FlowCertificate]:
    """Space derivative of the flow along the trajectory of y0.

    Integrates the extended field (A(a), dA(a) b) once per basis vector
    (batched) and assembles the columns; returns (times, matrices, cert)
    where the certificate checks the columns against e^{|t| L1}.
    """
    if A.gamma <= 1:
        raise InputError("flow differentiability needs a field of grade > 1")
    y0 = np.asarray(y0, dtype=np.float64).reshape(-1)
    d = A.dim
    times = sorted(set(checkpoints or [T]), key=abs)
    Y0 = np.concatenate(
        [np.broadcast_to(y0, (d, d)).copy(), np.eye(d)], axis=1
    )

    def rhs(S):
        a = S[:, :d]
        b = S[:, d:]
        A0 = A.map._eval_level(a, 0)
        dA = A.map._eval_level(a, 1)
        return np.concatenate([A0, np.einsum("xab,xb->xa", dA, b)], axis=1)

    recorded = _batch_flow_at(rhs, Y0, times, tol)
    mats = []
    visited = [y0.reshape(1, -1)]
    for t in times:
        cols = recorded[t][:, d:]
        mats.append(cols.T.copy())
        visited.append(recorded[t][:, :d])
    mats = np.stack(mats)
    box = _visited_box(np.concatenate(visited))
    L1 = A.lip_norm_bound(1.0, box)
    worst = (math.inf, 0.0, 0.0)
    for idx, t in enumerate(times):
        bound = math.exp(abs(t) * L1)
        for i in range(d):
            measured = _inf(mats[idx][:, i])
            if bound - measured < worst[0]:
                worst = (bound - measured, bound, measured)
    cert = FlowCertificate(
        "derivative-bound",
        max(abs(t) for t in times),
        None,
        y0.tolist(),
        bound=worst[1],
        measured=worst[2],
        allowance=10.0 * tol,
    )
    return np.asarray(times), mats, cert


# ---------------------------------------------------------------------------
# Flow jets
# ---------------------------------------------------------------------------


def flow_jet(
    A: VectorField,
    x0,
    r: float,
    T: float,
    grade: LipGrade,
    grid_spec: tuple[int, int],
    tol: float,
    fam: NormFamily | None = None,
) -> tuple[LipJet, LipCertificate, list[FlowCertificate]]:
    """Space-time jet of the flow on (-T, T) x B(x0, r), certified.

    Level tensors: the time direction comes from the field composed with
    the flow (chain rule via the composition calculus), space directions
    from the nested variational prolongations.  Returns the jet, its
    certificate, and the checked displayed bounds (time-derivative sup
    and the eps-Hoelder constants of the first derivative).
    """
    fam = fam or NormFamily.linf()
    n = grade.n
    if n > 3:
        raise InputError("flow jets support grade n <= 3 (state size grows as d^(n+1))")
    if A.gamma + 1e-12 < grade.gamma:
        raise InputError("field grade is below the requested jet grade")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    d = A.dim
    n_t, n_x = grid_spec
    if n_t < 2 or n_x < 1:
        raise InputError("grid_spec needs at least 2 time and 1 space points")
    times = np.linspace(-T, T, n_t) * (1.0 - 1e-12)
    space = box_grid([[x0[i] - r, x0[i] + r] for i in range(d)], n_x)

    order = max(n, 1)
    rhs, offs = _prolonged_rhs(A.map, order)
    S0 = _prolonged_initial(space, d, order)
    recorded = _batch_flow_at(rhs, S0, times, tol)

    B = space.shape[0]
    points = []
    point_levels = []
    visited = [space]
    for t in times:
        S = recorded[float(t)]
        z = S[:, offs[0] : offs[1]]
        visited.append(z)
        J = S[:, offs[1] : offs[2]].reshape(B, d, d)
        H = S[:, offs[2] : offs[3]].reshape(B, d, d, d) if order >= 2 else None
        K = S[:, offs[3] : offs[4]].reshape(B, d, d, d, d) if order >= 3 else None
        A_levels = [A.map._eval_level(z, j) for j in range(n + 1)]
        for b in range(B):
            points.append(np.concatenate([[t], space[b]]))
            levels = [z[b].copy()]
            if n >= 1:
                D1 = np.zeros((d, 1 + d))
                D1[:, 0] = A_levels[0][b]
                D1[:, 1:] = J[b]
                levels.append(D1)
            if n >= 2:
                outer = [A_levels[j][b] for j in range(n + 1)]
                inner = [z[b], D1]
                U1 = compose_level_tensor(outer, inner, 1)
                D2 = np.zeros((d, 1 + d, 1 + d))
                D2[:, 1:, 1:] = H[b]
                D2[:, 0, :] = U1
                D2[:, :, 0] = U1
                D2 = symmetrize_array(D2, 2)
                levels.append(D2)
                inner.append(D2)
            if n >= 3:
                U2 = compose_level_tensor(outer, inner, 2)
                D3 = np.zeros((d, 1 + d, 1 + d, 1 + d))
                D3[:, 1:, 1:, 1:] = K[b]
                D3[:, 0, :, :] = U2
                D3[:, :, 0, :] = U2
                D3[:, :, :, 0] = U2
                D3 = symmetrize_array(D3, 3)
                levels.append(D3)
            point_levels.append(levels)
    jet = LipJet.from_point_levels(grade, np.stack(points), point_levels)
    lip_cert = certify(jet, fam)

    box = _visited_box(np.concatenate(visited))
    eps = grade.eps if grade.eps < 1 else min(1.0, A.gamma - 1.0) if A.gamma < 2 else 1.0
    L1 = A.lip_norm_bound(1.0, box)
    L1e = A.lip_norm_bound(1.0 + eps, box)
    certs = []

    if n >= 1:
        time_cols = jet.levels[1][:, :, 0]
        measured_dt = float(np.max(np.abs(time_cols).max(axis=1)))
        certs.append(
            FlowCertificate(
                "derivative-bound", T, float(r), x0.tolist(),
                bound=L1e, measured=measured_dt, allowance=10.0 * tol,
            )
        )
        space_cols = jet.levels[1][:, :, 1:]
        measured_dx = float(np.max(np.abs(space_cols)))
        tmax = float(np.max(np.abs(jet.points[:, 0])))
        certs.append(
            FlowCertificate(
                "derivative-bound-space", T, float(r), x0.tolist(),
                bound=math.exp(tmax * L1), measured=measured_dx,
                allowance=10.0 * tol,
            )
        )
        certs.append(_derivative_holder_cert(jet, L1, L1e, eps, T, r, x0, tol))
    return jet, lip_cert, certs


def _derivative_holder_cert(jet, L1, L1e, eps, T, r, x0, tol) -> FlowCertificate:
    """eps-Hoelder check of the full first derivative against max(m1..m4)."""
    two_r = 2.0 * r
    two_t = 2.0 * T
    m1 = L1 * (math.exp(T * L1) * two_r ** (1 - eps) + L1e * two_t ** (1 - eps))
    m2 = math.exp(T * L1) * (
        math.exp(eps * T * L1) * (math.exp(T * L1e) - 1.0)
        + two_t ** (1 - eps) * L1e
    )
    m3 = L1e
    m4 = math.exp(T * L1)
    bound = max(m1, m2, m3, m4)
    pts = jet.points
    D = jet.levels[1]
    N = pts.shape[0]
    measured = 0.0
    min_dist = math.inf
    for i in range(N):
        diff = np.max(np.abs(pts - pts[i]), axis=1)
        rows = np.max(np.sum(np.abs(D - D[i]), axis=2), axis=1)
        mask = diff > 0
        if np.any(mask):
            ratios = rows[mask] / diff[mask] ** eps
            measured = max(measured, float(np.max(ratios)))
            min_dist = min(min_dist, float(np.min(diff[mask])))
    allowance = 20.0 * tol / (min_dist**eps if math.isfinite(min_dist) else 1.0)
    return FlowCertificate(
        "derivative-Hoelder", T, float(r), x0.tolist(),
        bound=bound, measured=measured, allowance=allowance,
    )
