"""Pairwise linear operators built from the tangent projectors of two points.

An operator expression is a sum of weighted atoms or two-fold compositions::

    expr := term ("+" term)*
    term := [float "*"] atom ["." atom]
    atom := Id | T | S | Tperp | Sperp

``T`` is the projector at the evaluation point, ``S`` the projector at the
neighbour, ``X.Y`` means ``X @ Y``.  A leading ``-`` before an atom and ``-``
between terms are accepted as shorthand for a coefficient of ``-1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

ATOMS = ("Id", "T", "S", "Tperp", "Sperp")
MAX_DEPTH = 2


class OperatorSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownAtomError(OperatorSyntaxError):
    pass


@dataclass(frozen=True)
class Term:
    coeff: float
    atoms: tuple[str, ...]

    def __str__(self):
        return f"{self.coeff!r}*{'.'.join(self.atoms)}"


@dataclass(frozen=True)
class OperatorSpec:
    terms: tuple[Term, ...]

    def __str__(self):
        return " + ".join(str(t) for t in self.terms)

    @property
    def uses_tangents(self) -> bool:
        return any(a != "Id" for t in self.terms for a in t.atoms)

    def scaled(self, factor: float) -> OperatorSpec:
        return OperatorSpec(tuple(Term(factor * t.coeff, t.atoms) for t in self.terms))

    def __add__(self, other: OperatorSpec) -> OperatorSpec:
        return OperatorSpec(self.terms + other.terms)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[*.+-]))"
)


def _tokens(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = len(text) - len(text[pos:].lstrip())
            raise OperatorSyntaxError(f"unexpected character {text[start]!r}", len(text[:start].encode()))
        kind = m.lastgroup
        value = m.group(kind)
        start = m.start(kind)
        toks.append((kind, value, len(text[:start].encode())))
        pos = m.end()
    toks.append(("end", "", len(text.encode())))
    return toks


def parse_operator(text: str) -> OperatorSpec:
    toks = _tokens(text)
    i = 0

    def peek():
        return toks[i]

    def take():
        nonlocal i
        tok = toks[i]
        i += 1
        return tok

    def atom():
        kind, value, off = take()
        if kind != "name":
            raise OperatorSyntaxError(f"expected operator atom, got {value or 'end of input'!r}", off)
        if value not in ATOMS:
            raise UnknownAtomError(f"unknown atom {value!r} (expected one of {', '.join(ATOMS)})", off)
        return value

    def term(sign: float):
        coeff = sign
        kind, value, off = peek()
        if kind == "num":
            take()
            k2, v2, o2 = take()
            if v2 != "*":
                raise OperatorSyntaxError("expected '*' after coefficient", o2)
            coeff = sign * float(value)
        elif kind == "op" and value == "-":
            take()
            coeff = -sign
        atoms = [atom()]
        while peek()[1] == ".":
            _, _, off = take()
            if len(atoms) == MAX_DEPTH:
                raise OperatorSyntaxError(f"composition deeper than {MAX_DEPTH}", off)
            atoms.append(atom())
        return Term(coeff, tuple(atoms))

    terms = [term(1.0)]
    while True:
        kind, value, off = peek()
        if kind == "end":
            break
        if kind == "op" and value in "+-":
            take()
            terms.append(term(1.0 if value == "+" else -1.0))
        elif kind == "num" and value[0] in "+-":
            # "S -2*T": the sign was absorbed into the number token
            terms.append(term(1.0))
        else:
            raise OperatorSyntaxError(f"unexpected token {value!r}", off)
    return OperatorSpec(tuple(terms))


def as_spec(spec: OperatorSpec | str) -> OperatorSpec:
    return parse_operator(spec) if isinstance(spec, str) else spec


def _atom_matrix(name: str, T: np.ndarray, S: np.ndarray, eye: np.ndarray) -> np.ndarray:
    if name == "Id":
        return np.broadcast_to(eye, T.shape)
    if name == "T":
        return T
    if name == "S":
        return S
    if name == "Tperp":
        return eye - T
    return eye - S


def compile_operator(spec: OperatorSpec | str, T: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Matrix of the operator for projector pair(s) ``T``, ``S``.

    Works on single ``(n, n)`` matrices or stacks ``(..., n, n)``.
    """
    spec = as_spec(spec)
    T = np.asarray(T, dtype=float)
    S = np.asarray(S, dtype=float)
    if T.shape != S.shape or T.shape[-1] != T.shape[-2]:
        raise ValueError(f"projector shapes differ: {T.shape} vs {S.shape}")
    eye = np.eye(T.shape[-1])
    out = np.zeros(T.shape)
    for t in spec.terms:
        m = _atom_matrix(t.atoms[0], T, S, eye)
        if len(t.atoms) == 2:
            m = m @ _atom_matrix(t.atoms[1], T, S, eye)
        out = out + t.coeff * m
    return out


def _apply_atom(name: str, T: np.ndarray, S: np.ndarray, v: np.ndarray) -> np.ndarray:
    if name == "Id":
        return v
    if name in ("T", "Tperp"):
        pv = np.einsum("...ij,...j->...i", T, v)
    else:
        pv = np.einsum("...ij,...j->...i", S, v)
    return pv if name in ("T", "S") else v - pv


def apply_operator(spec: OperatorSpec | str, T: np.ndarray, S: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``Pi(T, S) @ v`` for stacks of projector pairs and vectors, without forming Pi."""
    spec = as_spec(spec)
    out = np.zeros(np.shape(v))
    for t in spec.terms:
        w = v
        for name in reversed(t.atoms):
            w = _apply_atom(name, T, S, w)
        out = out + t.coeff * w
    return out


# Limit of H_eps^Pi as a multiple of H for C2 submanifolds: linear in Pi, and
# on the words generated by T and S one has Id -> 1/2, T -> 0, S -> 1,
# T.S -> 0, S.T -> 1 (T.T = T, S.S = S).
_WORD_LIMIT = {(): Fraction(1, 2), ("T",): Fraction(0), ("S",): Fraction(1),
               ("T", "S"): Fraction(0), ("S", "T"): Fraction(1)}


def _expand(atom_name: str) -> list[tuple[int, tuple[str, ...]]]:
    return {"Id": [(1, ())], "T": [(1, ("T",))], "S": [(1, ("S",))],
            "Tperp": [(1, ()), (-1, ("T",))], "Sperp": [(1, ()), (-1, ("S",))]}[atom_name]


def _reduce(word: tuple[str, ...]) -> tuple[str, ...]:
    out: list[str] = []
    for a in word:
        if not out or out[-1] != a:
            out.append(a)
    return tuple(out)


def limit_factor(spec: OperatorSpec | str) -> float:
    """Factor ``lam`` with ``H_eps^spec -> lam * H`` as ``eps -> 0`` on smooth samples."""
    spec = as_spec(spec)
    total = Fraction(0)
    for t in spec.terms:
        words = [(1, ())]
        for name in t.atoms:
            words = [(s1 * s2, w1 + w2) for s1, w1 in words for s2, w2 in _expand(name)]
        total += sum(sign * _WORD_LIMIT[_reduce(w)] for sign, w in words) * Fraction(t.coeff).limit_denominator(10**9)
    return float(total)


CONVERGING_SPECS = ("S", "-2*Sperp", "2*Id", "Tperp.S", "-2*Tperp.Sperp", "2*Tperp",
                    "2*Sperp.Tperp", "S.T", "-1*Sperp.T")
NULL_SPECS = ("T", "T.S", "S.Tperp", "T.Sperp")
