"""Closed-form polynomial / trig-polynomial maps with exact derivatives.

Vector fields and inverse problems are supplied in closed form so that
right-hand sides of variational systems and jet levels are exact, not
finite differences.  Expressions live in variables x0..x{d-1} and may be
given either as a restricted JSON AST or as plain strings.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
import sympy as sp

from .errors import InputError

_AST_OPS = ("const", "var", "add", "mul", "neg", "pow", "sin", "cos")


def variables(dim: int) -> tuple[sp.Symbol, ...]:
    return sp.symbols(f"x0:{dim}", real=True)


def parse_ast(node, dim: int) -> sp.Expr:
    """Turn a JSON expression AST node into a sympy expression."""
    xs = variables(dim)
    if isinstance(node, (int, float)):
        return sp.Float(node) if isinstance(node, float) else sp.Integer(node)
    if isinstance(node, str):
        return parse_expression(node, dim)
    if not isinstance(node, dict) or "op" not in node:
        raise InputError(f"malformed expression node: {node!r}")
    op = node["op"]
    try:
        if op == "const":
            return sp.nsimplify(node["value"], rational=False)
        if op == "var":
            idx = int(node["index"])
            if not 0 <= idx < dim:
                raise InputError(f"variable index {idx} out of range for dim {dim}")
            return xs[idx]
        if op == "add":
            return sp.Add(*(parse_ast(a, dim) for a in node["args"]))
        if op == "mul":
            return sp.Mul(*(parse_ast(a, dim) for a in node["args"]))
        if op == "neg":
            return -parse_ast(node["arg"], dim)
        if op == "pow":
            exp = int(node["exp"])
            if exp < 0:
                raise InputError("negative powers are not polynomial")
            return parse_ast(node["base"], dim) ** exp
        if op == "sin":
            return sp.sin(parse_ast(node["arg"], dim))
        if op == "cos":
            return sp.cos(parse_ast(node["arg"], dim))
    except KeyError as exc:
        raise InputError(f"expression node {op!r} missing field {exc}") from exc
    raise InputError(f"unknown expression op {op!r} (supported: {_AST_OPS})")


def parse_expression(text: str, dim: int) -> sp.Expr:
    """Parse a string like '0.1*sin(x0) + x1**2' in a restricted namespace."""
    xs = variables(dim)
    local = {f"x{i}": xs[i] for i in range(dim)}
    local.update({"sin": sp.sin, "cos": sp.cos, "pi": sp.pi})
    try:
        expr = sp.sympify(text, locals=local, rational=False)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise InputError(f"cannot parse expression {text!r}: {exc}") from exc
    extra = expr.free_symbols - set(xs)
    if extra:
        raise InputError(f"expression {text!r} uses unknown symbols {extra}")
    return expr


def to_ast(expr: sp.Expr, dim: int):
    """Serialize a sympy expression back to the JSON AST."""
    xs = variables(dim)
    if expr.is_Number:
        value = float(expr)
        if value == int(value) and abs(value) < 2**53:
            return {"op": "const", "value": int(value)}
        return {"op": "const", "value": value}
    if expr in xs:
        return {"op": "var", "index": xs.index(expr)}
    if isinstance(expr, sp.Add):
        return {"op": "add", "args": [to_ast(a, dim) for a in expr.args]}
    if isinstance(expr, sp.Mul):
        return {"op": "mul", "args": [to_ast(a, dim) for a in expr.args]}
    if isinstance(expr, sp.Pow):
        base, exp = expr.args
        if not (exp.is_Integer and exp >= 0):
            raise InputError(f"cannot serialize non-polynomial power {expr}")
        return {"op": "pow", "base": to_ast(base, dim), "exp": int(exp)}
    if isinstance(expr, sp.sin):
        return {"op": "sin", "arg": to_ast(expr.args[0], dim)}
    if isinstance(expr, sp.cos):
        return {"op": "cos", "arg": to_ast(expr.args[0], dim)}
    raise InputError(f"cannot serialize expression {expr!r}")


class SmoothMap:
    """A map R^d -> R^m given per coordinate in closed form.

    Derivative tensors of any order are exact (symbolic differentiation,
    lambdified once and cached); evaluation is vectorized over points.
    """

    def __init__(self, exprs, dim_in: int):
        xs = variables(dim_in)
        self.dim_in = dim_in
        self.exprs = tuple(sp.sympify(e) for e in exprs)
        self.dim_out = len(self.exprs)
        for e in self.exprs:
            extra = e.free_symbols - set(xs)
            if extra:
                raise InputError(f"expression {e} uses unknown symbols {extra}")
        self._symbols = xs
        self._deriv_cache: dict[int, tuple] = {}

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_strings(cls, texts, dim_in: int) -> "SmoothMap":
        return cls([parse_expression(t, dim_in) for t in texts], dim_in)

    @classmethod
    def from_ast(cls, nodes, dim_in: int) -> "SmoothMap":
        return cls([parse_ast(n, dim_in) for n in nodes], dim_in)

    @classmethod
    def identity(cls, dim: int) -> "SmoothMap":
        return cls(list(variables(dim)), dim)

    def to_ast(self):
        return [to_ast(e, self.dim_in) for e in self.exprs]

    def __repr__(self):
        return f"SmoothMap({[str(e) for e in self.exprs]}, dim_in={self.dim_in})"

    # -- evaluation --------------------------------------------------------

    def _level(self, k: int):
        """Lambdified distinct k-th partials plus the index bookkeeping."""
        if k not in self._deriv_cache:
            combos = list(
                itertools.combinations_with_replacement(range(self.dim_in), k)
            )
            derivs = []
            for e in self.exprs:
                for combo in combos:
                    d = e
                    for i in combo:
                        d = sp.diff(d, self._symbols[i])
                    derivs.append(d)
            fn = sp.lambdify(self._symbols, derivs, modules="numpy")
            self._deriv_cache[k] = (combos, fn)
        return self._deriv_cache[k]

    def _eval_level(self, pts: np.ndarray, k: int) -> np.ndarray:
        """Values of all k-th partials at pts (N,d) -> (N, m, d, ..., d)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        n = pts.shape[0]
        combos, fn = self._level(k)
        cols = fn(*(pts[:, i] for i in range(self.dim_in)))
        out = np.empty((n, self.dim_out) + (self.dim_in,) * k)
        for row, (a, combo) in enumerate(
            itertools.product(range(self.dim_out), range(len(combos)))
        ):
            col = np.broadcast_to(np.asarray(cols[row], dtype=np.float64), (n,))
            for perm in set(itertools.permutations(combos[combo])):
                out[(slice(None), a) + perm] = col
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        vals = self._eval_level(x, 0)[:, :, ]
        vals = vals.reshape(-1, self.dim_out)
        return vals[0] if single else vals

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        vals = self._eval_level(x, 1)
        return vals[0] if single else vals

    def derivative_tensor(self, x, k: int) -> np.ndarray:
        """Exact k-th derivative tensor at x, shape (m,) + (d,)*k."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        vals = self._eval_level(x, k)
        return vals[0] if single else vals

    # -- composition / algebra at the symbolic level ------------------------

    def then(self, outer: "SmoothMap") -> "SmoothMap":
        """outer o self, composed symbolically (the test-oracle route).

        The result stays unexpanded; differentiation chain-rules through
        the nested expressions, which is far cheaper than expanding.
        """
        if outer.dim_in != self.dim_out:
            raise InputError("composition dimension mismatch")
        subs = dict(zip(variables(outer.dim_in), self.exprs))
        return SmoothMap(
            [e.subs(subs, simultaneous=True) for e in outer.exprs], self.dim_in
        )

    def grid_sup(self, box, k: int, n_per_dim: int = 801) -> float:
        """Sup over a box grid of the subordinate linf norm of level k.

        A measured value on samples; exact closed forms are not attempted.
        """
        pts = box_grid(box, n_per_dim)
        vals = self._eval_level(pts, k)
        flat = np.abs(vals).reshape(vals.shape[0], self.dim_out, -1)
        return float(np.max(np.sum(flat, axis=2))) if k > 0 else float(
            np.max(np.max(flat, axis=2))
        )


def box_grid(box, n_per_dim: int) -> np.ndarray:
    """Uniform lattice over a box [[lo, hi], ...] as an (N, d) array."""
    box = np.asarray(box, dtype=np.float64)
    if box.ndim == 1:
        box = box[None, :]
    axes = [np.linspace(lo, hi, n_per_dim) for lo, hi in box]
    if len(axes) == 1:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)
