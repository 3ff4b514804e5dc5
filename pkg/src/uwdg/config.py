"""Flat key = value study configurations.

One study per file.  Values are scalars, comma-separated lists, or small
arithmetic expressions in the symbols ``k`` and ``h`` (so penalty parameters
like ``0.4/h`` or ``k**2/(h*(1+h))`` can be written directly).  ``#`` starts
a comment.  Parsing then serializing then parsing again is the identity on
the parsed mapping.

Recognized keys (superset; studies use what they need):

    study      projection | convergence | energy | soliton | diagnose
    problem    test function id (projection) or equation id (evolution)
    alpha1, alpha2, beta1, beta2      expressions in k and h
    beta1_tilde, A1, beta2_tilde, A2  scaled-family form (tilde may use k)
    k          list of degrees; may repeat to zip against A1/A2 lists
    N          list of cell counts; N_k<deg> overrides per degree
    T, dt, domain_a, domain_b
    compare_p1 true: measure distance to the one-sided projection instead
    expect_l2_r<i>, expect_order_l2_r<i>   reference error/order columns for
               study row i (paper-table comparisons)
    out, format
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError

__all__ = ["StudyConfig", "parse_config", "parse_text", "serialize", "eval_expr"]

_BIN_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.Mod: operator.mod,
}
_UNARY_OPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def eval_expr(expr: str | float | int, **names: float) -> float:
    """Safely evaluate an arithmetic expression in the given names.

    Allowed: numbers, + - * / ** %, parentheses, the provided names, and pi.
    """
    if isinstance(expr, (int, float)):
        return float(expr)
    scope = {"pi": math.pi, **names}

    def ev(node: ast.AST) -> float:
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in scope:
                return float(scope[node.id])
            raise ConfigError(f"unknown symbol {node.id!r} in expression {expr!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN_OPS:
            return _BIN_OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY_OPS:
            return _UNARY_OPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"unsupported syntax in expression {expr!r}")

    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}") from exc
    return ev(tree)


@dataclass
class StudyConfig:
    """Parsed study description; raw key/value pairs stay available in
    ``raw`` so serialization is lossless."""

    study: str
    raw: dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.raw.get(key, default)

    def get_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        v = self.raw.get(key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: expected a number, got {v!r}") from exc

    def get_bool(self, key: str, default: bool = False) -> bool:
        v = self.raw.get(key)
        if v is None:
            return default
        if v.lower() in ("true", "yes", "1", "on"):
            return True
        if v.lower() in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {v!r}")

    def get_list(self, key: str, default: Optional[list[str]] = None) -> Optional[list[str]]:
        v = self.raw.get(key)
        if v is None:
            return default
        return [item.strip() for item in v.split(",") if item.strip()]

    def get_float_list(self, key: str, default=None) -> Optional[list[float]]:
        items = self.get_list(key)
        if items is None:
            return default
        try:
            return [float(x) for x in items]
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: expected numbers, got {items}") from exc

    def get_int_list(self, key: str, default=None) -> Optional[list[int]]:
        vals = self.get_float_list(key, None)
        if vals is None:
            return default
        out = [int(round(v)) for v in vals]
        if any(abs(v - o) > 1e-9 for v, o in zip(vals, out)):
            raise ConfigError(f"key {key!r}: expected integers")
        return out


def parse_text(text: str) -> StudyConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    if "study" not in raw:
        raise ConfigError("missing required key 'study'")
    return StudyConfig(study=raw["study"], raw=raw)


def parse_config(path) -> StudyConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def serialize(cfg: StudyConfig) -> str:
    lines = [f"{key} = {value}" for key, value in cfg.raw.items()]
    return "\n".join(lines) + "\n"
