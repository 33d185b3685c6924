"""Symbolic index-function space: grammar, enumeration, evaluation, clustering.

A formula is a nested-tuple expression tree over the four episode statistics
(rbar, sbar, tk, t), the constants {1, 2, 3, 5, 7}, six binary operators
(+, -, *, /, min, max) and five unary operators (sqrt, ln, abs, opposite,
inverse).  Leaves are a variable name (str) or a constant (int); internal
nodes are ("op", child) or ("op", left, right).

The canonical text form is call-style prefix notation, e.g.
``add(rbar, inverse(add(tk, inverse(2))))``; ``parse_formula`` round-trips it.

Evaluation uses real semantics: any NaN or infinity produced anywhere in the
tree (division by zero, log of a nonpositive value, sqrt of a negative,
inverse of zero, overflow) makes the formula INVALID at that point.

Formulas are clustered into behavioral equivalence classes by how they rank
a fixed set of random sample points: two formulas with the same dense-rank
vector (under a relative tie tolerance) induce the same index policy on
those points and share a class.  Each class keeps its first-enumerated
minimal-length member as representative.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import rng as rngmod

logger = logging.getLogger(__name__)

BINARY_OPS = ("add", "sub", "mul", "div", "min", "max")
UNARY_OPS = ("sqrt", "ln", "abs", "opposite", "inverse")
VARIABLES = ("rbar", "sbar", "tk", "t")
CONSTANTS = (1, 2, 3, 5, 7)

Formula = Union[str, int, tuple]

ATOMS: Tuple[Formula, ...] = VARIABLES + CONSTANTS

RANK_TIE_TOL = 1e-9


# ---------------------------------------------------------------------------
# Structure


def formula_length(f: Formula) -> int:
    """Number of symbols in the tree (leaves count 1, operators count 1)."""
    if not isinstance(f, tuple):
        return 1
    if len(f) == 2:
        return 1 + formula_length(f[1])
    return 1 + formula_length(f[1]) + formula_length(f[2])


def format_formula(f: Formula) -> str:
    if isinstance(f, str):
        return f
    if isinstance(f, int):
        return str(f)
    if len(f) == 2:
        return f"{f[0]}({format_formula(f[1])})"
    return f"{f[0]}({format_formula(f[1])},{format_formula(f[2])})"


class FormulaSyntaxError(ValueError):
    pass


def parse_formula(text: str) -> Formula:
    """Parse the canonical prefix notation back into a tree."""
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def parse_expr() -> Formula:
        nonlocal pos
        skip_ws()
        start = pos
        while pos < n and (text[pos].isalnum() or text[pos] == "_"):
            pos += 1
        token = text[start:pos]
        if not token:
            raise FormulaSyntaxError(f"expected a token at position {start} in {text!r}")
        skip_ws()
        if pos < n and text[pos] == "(":
            pos += 1
            args = [parse_expr()]
            skip_ws()
            while pos < n and text[pos] == ",":
                pos += 1
                args.append(parse_expr())
                skip_ws()
            if pos >= n or text[pos] != ")":
                raise FormulaSyntaxError(f"missing ')' in {text!r}")
            pos += 1
            if token in UNARY_OPS and len(args) == 1:
                return (token, args[0])
            if token in BINARY_OPS and len(args) == 2:
                return (token, args[0], args[1])
            raise FormulaSyntaxError(f"bad operator or arity: {token}/{len(args)}")
        if token in VARIABLES:
            return token
        if token.isdigit():
            value = int(token)
            if value not in CONSTANTS:
                raise FormulaSyntaxError(f"constant {value} is not in {CONSTANTS}")
            return value
        raise FormulaSyntaxError(f"unknown variable {token!r}")

    out = parse_expr()
    skip_ws()
    if pos != n:
        raise FormulaSyntaxError(f"trailing input at position {pos} in {text!r}")
    return out


# ---------------------------------------------------------------------------
# Enumeration

def count_formulas(max_length: int) -> int:
    """Number of distinct trees with length <= max_length (closed-form DP)."""
    per = counts_by_length(max_length)
    return sum(per)


def counts_by_length(max_length: int) -> List[int]:
    """counts[i] = number of distinct trees of length exactly i+1."""
    counts: List[int] = []
    for length in range(1, max_length + 1):
        if length == 1:
            counts.append(len(ATOMS))
            continue
        total = len(UNARY_OPS) * counts[length - 2]
        for a in range(1, length - 1):
            b = length - 1 - a
            total += len(BINARY_OPS) * counts[a - 1] * counts[b - 1]
        counts.append(total)
    return counts


def _level_stream(length: int, stored: List[List[Formula]]) -> Iterator[Formula]:
    """All trees of exact length, in canonical order; uses stored lower levels."""
    if length <= len(stored):
        yield from stored[length - 1]
        return
    if length == 1:
        yield from ATOMS
        return
    for op in UNARY_OPS:
        for child in _level_stream(length - 1, stored):
            yield (op, child)
    for op in BINARY_OPS:
        for a in range(1, length - 1):
            b = length - 1 - a
            for left in _level_stream(a, stored):
                for right in _level_stream(b, stored):
                    yield (op, left, right)


def _levels_in_order(max_length: int) -> Iterator[tuple]:
    """Yield (length, stored_flag, tree) over all trees, nondecreasing length.

    Levels up to max_length - 2 (the ones needed as binary children) are
    materialized and their trees are long-lived shared objects; longer
    levels stream.
    """
    stored: List[List[Formula]] = []
    for length in range(1, max_length + 1):
        if length <= max_length - 2:
            level = list(_level_stream(length, stored))
            stored.append(level)
            for tree in level:
                yield length, True, tree
        else:
            for tree in _level_stream(length, stored):
                yield length, False, tree


def enumerate_formulas(max_length: int) -> Iterator[Formula]:
    """Every distinct tree with length <= max_length, exactly once, by length.

    Within a length the order is fixed: unary nodes first (operator order as
    declared, children in enumeration order), then binary nodes by left-child
    length.  Memory stays bounded: only levels up to max_length - 2 (needed
    as binary children) are materialized, the rest stream.
    """
    for _length, _stored, tree in _levels_in_order(max_length):
        yield tree


# ---------------------------------------------------------------------------
# Evaluation

@dataclass(frozen=True)
class SamplePoint:
    """One random realization of the episode statistics."""

    rbar: float
    sbar: float
    tk: int
    t: int


class SamplePoints:
    """Column-oriented batch of sample points (fast vectorized evaluation)."""

    def __init__(self, rbar, sbar, tk, t):
        self.rbar = np.asarray(rbar, dtype=float)
        self.sbar = np.asarray(sbar, dtype=float)
        self.tk = np.asarray(tk, dtype=float)
        self.t = np.asarray(t, dtype=float)
        if not (self.rbar.shape == self.sbar.shape == self.tk.shape == self.t.shape):
            raise ValueError("sample point columns must share one shape")

    def __len__(self) -> int:
        return self.rbar.shape[0]

    def __getitem__(self, i: int) -> SamplePoint:
        return SamplePoint(
            rbar=float(self.rbar[i]),
            sbar=float(self.sbar[i]),
            tk=int(self.tk[i]),
            t=int(self.t[i]),
        )

    def env(self) -> dict:
        return {"rbar": self.rbar, "sbar": self.sbar, "tk": self.tk, "t": self.t}


def draw_sample_points(
    count: int,
    seed: int,
    *,
    mode: str = "bernoulli",
    t_max: int = 1000,
    sbar_max: float = 0.5,
) -> SamplePoints:
    """Random realizations of the episode statistics.

    mode="bernoulli" (default) draws statistics an actual Bernoulli episode
    can produce: t uniform in [2, t_max], tk uniform in [1, t], rbar = j/tk
    for a uniform success count j, and sbar = sqrt(rbar (1 - rbar)) (the
    population stddev of two-valued rewards).  The exact zeros and ones this
    places on the grid exercise the partial operators (ln, inverse, division)
    the way live statistics do.

    mode="uniform" draws each variable independently: rbar ~ U[0,1],
    sbar ~ U[0, sbar_max], t uniform in [2, t_max], tk uniform in [1, t].
    """
    g = rngmod.derive_rng(seed, rngmod.SAMPLE_POINTS)
    if mode == "bernoulli":
        t = g.integers(2, t_max + 1, size=count)
        tk = g.integers(1, t + 1)
        successes = g.integers(0, tk + 1)
        rbar = successes / tk
        sbar = np.sqrt(rbar * (1.0 - rbar))
        return SamplePoints(rbar=rbar, sbar=sbar, tk=tk, t=t)
    if mode == "uniform":
        rbar = g.random(count)
        sbar = g.random(count) * sbar_max
        t = g.integers(2, t_max + 1, size=count)
        tk = g.integers(1, t + 1)
        return SamplePoints(rbar=rbar, sbar=sbar, tk=tk, t=t)
    raise ValueError(f"unknown sample mode {mode!r}")


def as_sample_points(samples) -> SamplePoints:
    if isinstance(samples, SamplePoints):
        return samples
    pts = list(samples)
    return SamplePoints(
        rbar=[p.rbar for p in pts],
        sbar=[p.sbar for p in pts],
        tk=[p.tk for p in pts],
        t=[p.t for p in pts],
    )


def eval_formula(f: Formula, p: SamplePoint) -> Optional[float]:
    """Reference scalar evaluation; returns None when INVALID at this point."""
    fn = compile_formula_scalar(f)
    v = fn(p.rbar, p.sbar, float(p.tk), float(p.t))
    return None if math.isnan(v) else v


# Scalar compilation: helpers return nan for any out-of-domain or nonfinite
# result, and nan propagates (min/max check their inputs explicitly because
# Python's min/max would otherwise swallow it).

def _s_add(a, b):
    r = a + b
    return r if -math.inf < r < math.inf else math.nan


def _s_sub(a, b):
    r = a - b
    return r if -math.inf < r < math.inf else math.nan


def _s_mul(a, b):
    r = a * b
    return r if -math.inf < r < math.inf else math.nan


def _s_div(a, b):
    if b == 0.0 or a != a or b != b:
        return math.nan
    r = a / b
    return r if -math.inf < r < math.inf else math.nan


def _s_min(a, b):
    if a != a or b != b:
        return math.nan
    return a if a < b else b


def _s_max(a, b):
    if a != a or b != b:
        return math.nan
    return a if a > b else b


def _s_sqrt(a):
    if a != a or a < 0.0:
        return math.nan
    return math.sqrt(a)


def _s_ln(a):
    if a != a or a <= 0.0:
        return math.nan
    return math.log(a)


def _s_abs(a):
    return abs(a)


def _s_opposite(a):
    return -a


def _s_inverse(a):
    if a == 0.0 or a != a:
        return math.nan
    r = 1.0 / a
    return r if -math.inf < r < math.inf else math.nan


_SCALAR_OPS = {
    "add": "_s_add", "sub": "_s_sub", "mul": "_s_mul", "div": "_s_div",
    "min": "_s_min", "max": "_s_max", "sqrt": "_s_sqrt", "ln": "_s_ln",
    "abs": "_s_abs", "opposite": "_s_opposite", "inverse": "_s_inverse",
}

_SCALAR_NS = {
    "_s_add": _s_add, "_s_sub": _s_sub, "_s_mul": _s_mul, "_s_div": _s_div,
    "_s_min": _s_min, "_s_max": _s_max, "_s_sqrt": _s_sqrt, "_s_ln": _s_ln,
    "_s_abs": _s_abs, "_s_opposite": _s_opposite, "_s_inverse": _s_inverse,
}


def _scalar_source(f: Formula) -> str:
    if isinstance(f, str):
        return f
    if isinstance(f, int):
        return f"{float(f)!r}"
    if len(f) == 2:
        return f"{_SCALAR_OPS[f[0]]}({_scalar_source(f[1])})"
    return f"{_SCALAR_OPS[f[0]]}({_scalar_source(f[1])},{_scalar_source(f[2])})"


def compile_formula_scalar(f: Formula):
    """Compile to a plain-float function (rbar, sbar, tk, t) -> value or nan."""
    src = f"lambda rbar, sbar, tk, t: {_scalar_source(f)}"
    return eval(src, dict(_SCALAR_NS))


# Vectorized evaluation over numpy arrays.  Values propagate nan/inf through
# arithmetic; operators able to swallow a nonfinite operand (min, max, div,
# inverse) fold their operands' finiteness into an "invalid anywhere" mask,
# and the root result is checked as well.

def eval_formula_arrays(f: Formula, env: dict) -> Tuple[np.ndarray, np.ndarray]:
    """Return (values, valid_mask) for an env of broadcastable float arrays."""
    with np.errstate(all="ignore"):
        value, bad = _eval_arrays(f, env, None)
        bad = bad | ~np.isfinite(value)
    return value, ~bad


def _apply_unary(op, a, bad):
    if op == "sqrt":
        return np.sqrt(a), bad
    if op == "ln":
        return np.log(a), bad
    if op == "abs":
        return np.abs(a), bad
    if op == "opposite":
        return -a, bad
    if op == "inverse":
        # 1/x swallows infinities (1/inf = 0), so check the operand
        return 1.0 / a, bad | ~np.isfinite(a)
    raise ValueError(f"unknown operator {op!r}")


def _apply_binary(op, a, bad_a, b, bad_b):
    bad = bad_a | bad_b
    if op == "add":
        return a + b, bad
    if op == "sub":
        return a - b, bad
    if op == "mul":
        return a * b, bad
    if op == "div":
        return a / b, bad | ~np.isfinite(a) | ~np.isfinite(b)
    if op == "min":
        return np.minimum(a, b), bad | ~np.isfinite(a) | ~np.isfinite(b)
    if op == "max":
        return np.maximum(a, b), bad | ~np.isfinite(a) | ~np.isfinite(b)
    raise ValueError(f"unknown operator {op!r}")


def _eval_arrays(f: Formula, env: dict, cache: Optional[dict]):
    """Recursive evaluation; ``cache`` maps id(shared subtree) -> (value, bad)."""
    if isinstance(f, str):
        return np.asarray(env[f], dtype=float), False
    if isinstance(f, int):
        return np.float64(f), False
    if cache is not None:
        hit = cache.get(id(f))
        if hit is not None:
            return hit
    if len(f) == 2:
        a, bad = _eval_arrays(f[1], env, cache)
        return _apply_unary(f[0], a, bad)
    a, bad_a = _eval_arrays(f[1], env, cache)
    b, bad_b = _eval_arrays(f[2], env, cache)
    return _apply_binary(f[0], a, bad_a, b, bad_b)


# ---------------------------------------------------------------------------
# Signatures and partitioning

@dataclass(frozen=True, eq=False)
class Signature:
    """Dense-rank fingerprint of a formula over the sample points."""

    digest: bytes
    ranks: np.ndarray

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __eq__(self, other):
        return isinstance(other, Signature) and self.digest == other.digest

    def __hash__(self):
        return hash(self.digest)


def dense_ranks(values: np.ndarray, tol: float = RANK_TIE_TOL) -> np.ndarray:
    """Dense ranks with relative tie tolerance (chained through neighbors).

    Equal values receive equal ranks under any sort order, so the result is
    deterministic without a stable sort.
    """
    order = values.argsort()
    sv = values[order]
    ranks = np.empty(values.shape[0], dtype=np.int16)
    if sv.size > 1:
        av = np.abs(sv)
        gaps = (sv[1:] - sv[:-1]) > tol * np.maximum(av[1:], av[:-1])
        ranks_sorted = np.empty(sv.size, dtype=np.int16)
        ranks_sorted[0] = 0
        np.cumsum(gaps, dtype=np.int16, out=ranks_sorted[1:])
        ranks[order] = ranks_sorted
    else:
        ranks[:] = 0
    return ranks


_RANK_BYTE_VIEW = "<i2" if __import__("sys").byteorder == "little" else None


def _digest(ranks: np.ndarray) -> bytes:
    data = ranks.tobytes() if _RANK_BYTE_VIEW else ranks.astype("<i2").tobytes()
    return hashlib.blake2b(data, digest_size=16).digest()


def signature_of(f: Formula, samples) -> Optional[Signature]:
    """Signature over the sample points, or None if INVALID on any of them."""
    pts = as_sample_points(samples)
    if len(pts) > 32000:
        raise ValueError("rank storage uses int16; use at most 32000 sample points")
    values, valid = eval_formula_arrays(f, pts.env())
    values = np.broadcast_to(values, pts.rbar.shape)
    if not np.all(valid):
        return None
    ranks = dense_ranks(np.asarray(values, dtype=float))
    return Signature(digest=_digest(ranks), ranks=ranks)


@dataclass
class FormulaClass:
    representative: Formula
    length: int
    size: int
    signature_hex: str


@dataclass
class PartitionResult:
    classes: List[FormulaClass]
    total_enumerated: int
    total_invalid: int

    @property
    def invalid_fraction(self) -> float:
        return self.total_invalid / max(1, self.total_enumerated)


def partition(
    max_length: int,
    samples,
    *,
    tie_tol: float = RANK_TIE_TOL,
    verify_collisions: bool = True,
    log_every: int = 2_000_000,
) -> PartitionResult:
    """Cluster all formulas of length <= max_length by rank signature.

    Streams the enumeration (nondecreasing length), discards formulas that
    are INVALID on any sample point, and keeps per signature the first-seen
    formula, which by stream order has minimal length.  When
    ``verify_collisions`` is set, each digest hit is confirmed against the
    representative's stored rank vector, so a blake2b collision cannot
    silently merge distinct classes.
    """
    pts = as_sample_points(samples)
    env = pts.env()
    shape = pts.rbar.shape
    classes: dict = {}
    order: List[bytes] = []
    total = 0
    invalid = 0
    # Value vectors of short, long-lived subtrees are cached by object id;
    # the enumeration shares those subtree objects across parents.
    cache: dict = {}
    cache_max_len = min(4, max_length - 2)
    with np.errstate(all="ignore"):
        for length, long_lived, f in _levels_in_order(max_length):
            total += 1
            if log_every and total % log_every == 0:
                logger.info("partition: %d formulas, %d classes, %d invalid",
                            total, len(classes), invalid)
            values, bad = _eval_arrays(f, env, cache)
            if long_lived and length <= cache_max_len and isinstance(f, tuple):
                cache[id(f)] = (values, bad)
            bad = bad | ~np.isfinite(values)
            if bad.any():
                invalid += 1
                continue
            if values.ndim == 0:
                values = np.broadcast_to(values, shape)
            ranks = dense_ranks(values, tol=tie_tol)
            digest = _digest(ranks)
            entry = classes.get(digest)
            if entry is None:
                classes[digest] = [f, length, 1, ranks if verify_collisions else None]
                order.append(digest)
            else:
                if verify_collisions and not np.array_equal(entry[3], ranks):
                    raise RuntimeError(
                        "signature digest collision between "
                        f"{format_formula(entry[0])} and {format_formula(f)}"
                    )
                entry[2] += 1
    out = [
        FormulaClass(
            representative=classes[d][0],
            length=classes[d][1],
            size=classes[d][2],
            signature_hex=d.hex(),
        )
        for d in order
    ]
    return PartitionResult(classes=out, total_enumerated=total, total_invalid=invalid)


# ---------------------------------------------------------------------------
# Persistence

def write_representatives(path: str, result: PartitionResult) -> None:
    with open(path, "w") as fh:
        for c in result.classes:
            rec = {
                "expr": format_formula(c.representative),
                "length": c.length,
                "class_size": c.size,
                "signature": c.signature_hex,
            }
            fh.write(json.dumps(rec) + "\n")


def read_representatives(path: str) -> List[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            rec["formula"] = parse_formula(rec["expr"])
            out.append(rec)
    return out
