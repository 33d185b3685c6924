"""Index-based E/E strategies behind a single batch-policy interface.

Every policy exposes ``select(state, t, counts, means, stds, ws)`` over a
lockstep batch of episodes (see :mod:`bandit_meta.episodes`); pure index
policies only implement ``batch_indices``.  Arm statistics use the
population stddev; policy-specific corrections (UCB1-Normal's t_k - 1
denominator, its forced-play rule, UCB2's epochs) live inside the policy.

Hyper-parameters may be scalars or per-episode arrays of shape (B,), which
is how the tuner scores a whole candidate population in one simulation
pass.  Out-of-domain parameter values are evaluated as written: an index
that comes out NaN/inf simply loses the argmax (treated as -inf), and
selection never crashes.
"""

from __future__ import annotations

import json
import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import rel_entr

from . import formulas as formulas_mod
from . import power as power_mod
from .episodes import ArmStats

KLUCB_TOL = 1e-9
KLUCB_MAX_ITER = 100


# ---------------------------------------------------------------------------
# Index formulas (work on scalars and arrays alike)

def _ucb1_raw(mean, plays, t, c):
    return mean + np.sqrt(c * np.log(t) / plays)


def _ucb1_tuned_raw(mean, plays, std, t, variance_form=False):
    spread = std * std if variance_form else std
    log_t = np.log(t)
    return mean + np.sqrt(
        log_t / plays * np.minimum(0.25, spread + np.sqrt(2.0 * log_t / plays))
    )


def _ucb1_normal_raw(mean, plays, std, t):
    return mean + np.sqrt(
        16.0 * (plays * std * std / (plays - 1)) * np.log(t - 1) / plays
    )


def _ucbv_raw(mean, plays, std, t, zeta, c):
    log_t = np.log(t)
    return mean + np.sqrt(2.0 * std * std * zeta * log_t / plays) \
        + c * 3.0 * zeta * log_t / plays


def bernoulli_kl(p, q):
    """KL divergence between Bernoulli(p) and Bernoulli(q), edge cases exact."""
    return rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q)


def klucb_budget(t, c) -> float:
    """Exploration budget ln t + c ln ln t; the c-term is clamped to 0 for t < 3."""
    budget = math.log(t)
    if t >= 3:
        budget = budget + c * math.log(math.log(t))
    return budget


def _klucb_raw(mean, plays, t, c):
    mean = np.clip(np.asarray(mean, dtype=float), 0.0, 1.0)
    plays = np.asarray(plays, dtype=float)
    if np.ndim(c) == 0:
        budget = klucb_budget(t, float(c))
    else:
        base = math.log(t)
        extra = math.log(math.log(t)) if t >= 3 else 0.0
        budget = base + np.asarray(c, dtype=float) * extra
    target = budget / plays
    lo = mean.copy()
    hi = np.ones_like(lo)
    for _ in range(KLUCB_MAX_ITER):
        mid = 0.5 * (lo + hi)
        ok = bernoulli_kl(mean, mid) <= target
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
        if float(np.max(hi - lo)) < KLUCB_TOL:
            break
    return lo


# Scalar spec surface over ArmStats ---------------------------------------

def index_ucb1(stats: ArmStats, t: int, C: float) -> float:
    """UCB1 index rbar + sqrt(C ln t / t_k)."""
    return float(_ucb1_raw(stats.mean, stats.plays, t, C))


def index_ucb1_tuned(stats: ArmStats, t: int, *, variance_form: bool = False) -> float:
    """UCB1-Tuned index, with the stddev (not variance) inside the min as printed."""
    return float(_ucb1_tuned_raw(stats.mean, stats.plays, stats.stddev, t,
                                 variance_form=variance_form))


def index_ucb1_normal(stats: ArmStats, t: int) -> float:
    """UCB1-Normal index; requires plays >= 2 (guaranteed by the forced-play rule)."""
    return float(_ucb1_normal_raw(stats.mean, stats.plays, stats.stddev, t))


def index_ucbv(stats: ArmStats, t: int, zeta: float, c: float) -> float:
    """UCB-V index with variance term and c * 3 zeta ln t / t_k bias term."""
    return float(_ucbv_raw(stats.mean, stats.plays, stats.stddev, t, zeta, c))


def index_klucb(stats: ArmStats, t: int, c: float) -> float:
    """max{q in [rbar, 1] : t_k kl(rbar, q) <= ln t + c ln ln t} by bisection."""
    return float(_klucb_raw(stats.mean, stats.plays, t, c))


def ucb2_tau(alpha: float, r) -> "np.ndarray | float":
    """Epoch play target tau(r) = ceil((1 + alpha)^r)."""
    return np.ceil(np.power(1.0 + alpha, r))


def epsgreedy_epsilon(c: float, d: float, k: int, t: int) -> float:
    """Exploration probability min(1, c K / (d^2 t)); never raises."""
    denom = d * d * t
    if denom == 0:
        return 1.0
    return min(1.0, c * k / denom)


def pick_argmax(values: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise argmax with exact ties broken uniformly via the uniforms u.

    Non-finite entries are treated as -inf and lose to any finite value; a
    row of only non-finite entries falls back to a uniform choice.
    """
    vals = np.where(np.isfinite(values), values, -np.inf)
    best = vals.max(axis=1, keepdims=True)
    ties = vals == best
    ncand = ties.sum(axis=1)
    kth = np.minimum((u * ncand).astype(np.int64), ncand - 1)
    return (ties.cumsum(axis=1) > kth[:, None]).argmax(axis=1)


def select_arm(policy, t: int, stats: Sequence[ArmStats], rng: np.random.Generator) -> int:
    """Argmax of the policy's scalar index; exact ties uniform, non-finite loses."""
    values = np.array([policy.index(s, t) for s in stats], dtype=float)
    values = np.where(np.isfinite(values), values, -np.inf)
    best = values.max()
    candidates = np.flatnonzero(values == best)
    if candidates.size == 1:
        return int(candidates[0])
    return int(candidates[rng.integers(candidates.size)])


# ---------------------------------------------------------------------------
# Batch policies


def _col(v):
    """Per-episode parameter arrays broadcast against (B, K) index arrays."""
    a = np.asarray(v, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _fmt(v) -> str:
    return repr(float(v))


class BatchPolicy:
    """Protocol: extra_uniform_rows, init_state(B, K), select(...) -> (B,) arms."""

    extra_uniform_rows = 0

    def init_state(self, n: int, k: int):
        return None

    def select(self, state, t, counts, means, stds, ws) -> np.ndarray:
        raise NotImplementedError

    @property
    def spec_string(self) -> str:
        raise NotImplementedError


class IndexBatchPolicy(BatchPolicy):
    """Policy fully described by an index; selection is tie-broken argmax."""

    def batch_indices(self, t, counts, means, stds) -> np.ndarray:
        raise NotImplementedError

    def select(self, state, t, counts, means, stds, ws) -> np.ndarray:
        idx = self.batch_indices(t, counts, means, stds)
        return pick_argmax(idx, ws.tiebreak[:, t - 1])

    def index(self, stats: ArmStats, t: int) -> float:
        out = self.batch_indices(
            t,
            np.array([[float(stats.plays)]]),
            np.array([[stats.mean]]),
            np.array([[stats.stddev]]),
        )
        return float(np.asarray(out).reshape(-1)[0])


class UCB1(IndexBatchPolicy):
    def __init__(self, C: float = 2.0):
        self.C = C

    def batch_indices(self, t, counts, means, stds):
        return _ucb1_raw(means, counts, t, _col(self.C))

    def index(self, stats, t):
        return index_ucb1(stats, t, float(self.C))

    @property
    def spec_string(self):
        return f"ucb1:C={_fmt(self.C)}"


class UCB1Tuned(IndexBatchPolicy):
    def __init__(self, variance_form: bool = False):
        self.variance_form = variance_form

    def batch_indices(self, t, counts, means, stds):
        return _ucb1_tuned_raw(means, counts, stds, t, variance_form=self.variance_form)

    def index(self, stats, t):
        return index_ucb1_tuned(stats, t, variance_form=self.variance_form)

    @property
    def spec_string(self):
        return "ucb1tuned:variance=1" if self.variance_form else "ucb1tuned"


class UCB1Normal(BatchPolicy):
    """UCB1-Normal with the forced-play rule for under-sampled arms.

    Before any index comparison, an arm with t_k < ceil(8 ln t) is played
    (lowest such arm), which also keeps t_k - 1 >= 1 in the index.
    """

    def select(self, state, t, counts, means, stds, ws):
        need = counts < math.ceil(8.0 * math.log(t))
        idx = _ucb1_normal_raw(means, counts, stds, t)
        chosen = pick_argmax(idx, ws.tiebreak[:, t - 1])
        return np.where(need.any(axis=1), need.argmax(axis=1), chosen)

    def index(self, stats, t):
        return index_ucb1_normal(stats, t)

    @property
    def spec_string(self):
        return "ucb1normal"


class UCBV(IndexBatchPolicy):
    def __init__(self, zeta: float = 1.0, c: float = 1.0):
        self.zeta = zeta
        self.c = c

    def batch_indices(self, t, counts, means, stds):
        return _ucbv_raw(means, counts, stds, t, _col(self.zeta), _col(self.c))

    def index(self, stats, t):
        return index_ucbv(stats, t, float(self.zeta), float(self.c))

    @property
    def spec_string(self):
        return f"ucbv:zeta={_fmt(self.zeta)},c={_fmt(self.c)}"


class KLUCB(IndexBatchPolicy):
    def __init__(self, c: float = 0.0):
        self.c = c

    def batch_indices(self, t, counts, means, stds):
        return _klucb_raw(means, counts, t, self.c)

    def index(self, stats, t):
        return index_klucb(stats, t, float(self.c))

    @property
    def spec_string(self):
        return f"klucb:c={_fmt(self.c)}"


class UCB2(BatchPolicy):
    """UCB2 epochs: the chosen arm is replayed tau(r+1) - tau(r) times.

    Zero-length epochs (common for small alpha, where consecutive
    tau(r) = ceil((1+alpha)^r) coincide) play nothing and only advance r,
    so a selection skips ahead to the next r whose epoch reaches a new
    integer milestone; the closed-form skip below implements that spin.
    The pending-play queue is honored before any index computation.
    """

    def __init__(self, alpha: float = 0.001):
        self.alpha = alpha

    def init_state(self, n, k):
        return {
            "epochs": np.zeros((n, k), dtype=np.int64),
            "milestone": np.ones((n, k)),  # tau(r) for the current r
            "pending_arm": np.zeros(n, dtype=np.int64),
            "pending_left": np.zeros(n, dtype=np.int64),
        }

    def select(self, state, t, counts, means, stds, ws):
        pending = state["pending_left"] > 0
        if pending.all():
            state["pending_left"] -= 1
            return state["pending_arm"].copy()

        alpha = np.asarray(self.alpha, dtype=float)
        alpha_bk = alpha[:, None] if alpha.ndim == 1 else alpha
        tau_cur = state["milestone"]
        idx = means + np.sqrt(
            (1.0 + alpha_bk) * np.log(np.e * t / tau_cur) / (2.0 * tau_cur)
        )
        sel = pick_argmax(idx, ws.tiebreak[:, t - 1])

        rows = np.arange(sel.shape[0])
        alpha_row = alpha if alpha.ndim == 1 else float(alpha)
        x = 1.0 + alpha_row
        log_x = np.log(np.maximum(x, np.nextafter(1.0, 2.0)))
        r_sel = state["epochs"][rows, sel].astype(float)
        m_sel = tau_cur[rows, sel]
        # Smallest r2 > r with ceil(x^r2) > m: skip the zero-length epochs.
        r2 = np.maximum(r_sel + 1.0, np.floor(np.log(m_sel) / log_x) + 1.0)
        r2 = np.nan_to_num(r2, nan=1.0, posinf=1.0, neginf=1.0)
        m_new = np.ceil(np.power(x, r2))
        for _ in range(4):  # float-edge guard; advances at most a step or two
            short = m_new <= m_sel
            if not short.any():
                break
            r2 = r2 + short
            m_new = np.ceil(np.power(x, r2))
        m_new = np.nan_to_num(m_new, nan=m_sel + 1.0, posinf=2**62, neginf=m_sel + 1.0)
        m_new = np.minimum(np.maximum(m_new, m_sel + 1.0), m_sel + 2**31)
        plays = (m_new - m_sel).astype(np.int64)

        arms = np.where(pending, state["pending_arm"], sel)
        state["pending_left"] = np.where(pending, state["pending_left"] - 1, plays - 1)
        state["pending_arm"] = arms
        fresh = ~pending
        state["epochs"][rows[fresh], sel[fresh]] = r2[fresh].astype(np.int64)
        state["milestone"][rows[fresh], sel[fresh]] = m_new[fresh]
        return arms

    @property
    def spec_string(self):
        return f"ucb2:alpha={_fmt(self.alpha)}"


class EpsGreedy(BatchPolicy):
    """eps_n-greedy with schedule eps_t = min(1, c K / (d^2 t))."""

    extra_uniform_rows = 2

    def __init__(self, c: float = 1.0, d: float = 1.0):
        self.c = c
        self.d = d

    def select(self, state, t, counts, means, stds, ws):
        k = means.shape[1]
        c = np.asarray(self.c, dtype=float)
        d = np.asarray(self.d, dtype=float)
        denom = d * d * t
        eps = np.where(denom != 0, c * k / np.where(denom != 0, denom, 1.0), np.inf)
        eps = np.minimum(eps, 1.0)
        greedy = pick_argmax(means, ws.tiebreak[:, t - 1])
        explore = ws.extras[:, 0, t - 1] < eps
        random_arm = np.minimum((ws.extras[:, 1, t - 1] * k).astype(np.int64), k - 1)
        return np.where(explore, random_arm, greedy)

    @property
    def spec_string(self):
        return f"epsgreedy:c={_fmt(self.c)},d={_fmt(self.d)}"


class FormulaPolicy(IndexBatchPolicy):
    """Index policy whose score is a symbolic formula of (rbar, sbar, tk, t).

    An arm whose formula value is INVALID (NaN/inf anywhere in the tree)
    scores -inf and loses the argmax.
    """

    def __init__(self, tree):
        if isinstance(tree, str):
            tree = formulas_mod.parse_formula(tree)
        self.tree = tree
        self._compiled = None

    def __getstate__(self):
        return {"tree": self.tree}

    def __setstate__(self, state):
        self.tree = state["tree"]
        self._compiled = None

    def batch_indices(self, t, counts, means, stds):
        env = {
            "rbar": means,
            "sbar": stds,
            "tk": counts.astype(float) if counts.dtype != float else counts,
            "t": float(t),
        }
        values, valid = formulas_mod.eval_formula_arrays(self.tree, env)
        idx = np.where(valid, values, -np.inf)
        return np.broadcast_to(idx, means.shape)

    def index(self, stats, t):
        if self._compiled is None:
            self._compiled = formulas_mod.compile_formula_scalar(self.tree)
        return self._compiled(stats.mean, stats.stddev, float(stats.plays), float(t))

    @property
    def spec_string(self):
        return f"formula:{formulas_mod.format_formula(self.tree)}"


class PowerPolicy(IndexBatchPolicy):
    """Power-P policy: index = theta . features(stats, t).

    theta may be one vector of length (P+1)^4 or a (B, (P+1)^4) matrix for
    per-episode candidates during learning.
    """

    def __init__(self, theta, degree: Optional[int] = None):
        if isinstance(theta, power_mod.ThetaVector):
            degree = theta.degree
            theta = theta.theta
        theta = np.asarray(theta, dtype=float)
        if degree is None:
            degree = round(theta.shape[-1] ** 0.25) - 1
        if power_mod.feature_count(degree) != theta.shape[-1]:
            raise ValueError("theta length does not match (P+1)^4")
        self.theta = theta
        self.degree = degree
        self._exponents = power_mod.feature_exponents(degree)

    def batch_indices(self, t, counts, means, stds):
        v1 = math.sqrt(math.log(t))
        counts_f = counts.astype(float) if counts.dtype != float else counts
        v2 = 1.0 / np.sqrt(counts_f)
        pows2 = [None] * (self.degree + 1)
        pows3 = [None] * (self.degree + 1)
        pows4 = [None] * (self.degree + 1)
        ones = np.ones_like(means)
        pows2[0] = pows3[0] = pows4[0] = ones
        for e in range(1, self.degree + 1):
            pows2[e] = pows2[e - 1] * v2
            pows3[e] = pows3[e - 1] * means
            pows4[e] = pows4[e - 1] * stds
        theta = self.theta
        per_row = theta.ndim == 2
        out = np.zeros_like(means)
        for m, (i, j, k, l) in enumerate(self._exponents):
            coef = theta[:, m][:, None] if per_row else theta[m]
            out += coef * ((v1 ** i) * pows2[j] * pows3[k] * pows4[l])
        return out

    def index(self, stats, t):
        if self.theta.ndim != 1:
            raise ValueError("scalar index needs a single theta vector")
        return power_mod.index_power(
            power_mod.ThetaVector(self.theta, self.degree), stats, t
        )

    @property
    def spec_string(self):
        digest = __import__("hashlib").blake2b(
            np.ascontiguousarray(self.theta).tobytes(), digest_size=6
        ).hexdigest()
        return f"power:P={self.degree},theta#{digest}"


# ---------------------------------------------------------------------------
# Policy spec strings


class PolicySpecError(ValueError):
    pass


def _split_params(text: str):
    """Split 'a=1,b=[2,3]' on top-level commas only."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    out = {}
    for part in parts:
        part = part.strip()
        if not part:
            continue
        key, eq, value = part.partition("=")
        if not eq:
            raise PolicySpecError(f"expected key=value, got {part!r}")
        out[key.strip().lower()] = value.strip()
    return out


def _get_float(params, key, default):
    raw = params.pop(key.lower(), None)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise PolicySpecError(f"bad numeric value for {key}: {raw!r}") from exc


def parse_policy(spec: str) -> BatchPolicy:
    """Build a policy from its CLI/config name.

    Examples: ``ucb1:C=2.0``, ``ucb1tuned``, ``ucb1normal``,
    ``ucbv:zeta=1,c=1``, ``klucb:c=0``, ``ucb2:alpha=0.001``,
    ``epsgreedy:c=1,d=1``, ``formula:add(rbar,inverse(tk))``,
    ``power:P=1,theta=@weights.json``.
    """
    spec = spec.strip()
    name, _, rest = spec.partition(":")
    name = name.strip().lower()
    if name == "formula":
        if not rest:
            raise PolicySpecError("formula policy needs an expression")
        try:
            return FormulaPolicy(formulas_mod.parse_formula(rest))
        except formulas_mod.FormulaSyntaxError as exc:
            raise PolicySpecError(str(exc)) from exc
    params = _split_params(rest)
    if name == "ucb1":
        policy = UCB1(C=_get_float(params, "C", 2.0))
    elif name == "ucb1tuned":
        policy = UCB1Tuned(variance_form=bool(_get_float(params, "variance", 0.0)))
    elif name == "ucb1normal":
        policy = UCB1Normal()
    elif name == "ucbv":
        policy = UCBV(zeta=_get_float(params, "zeta", 1.0), c=_get_float(params, "c", 1.0))
    elif name == "klucb":
        policy = KLUCB(c=_get_float(params, "c", 0.0))
    elif name == "ucb2":
        policy = UCB2(alpha=_get_float(params, "alpha", 0.001))
    elif name == "epsgreedy":
        policy = EpsGreedy(c=_get_float(params, "c", 1.0), d=_get_float(params, "d", 1.0))
    elif name == "power":
        degree = params.pop("p", None)
        source = params.pop("theta", None)
        if source is None:
            raise PolicySpecError("power policy needs theta=@file or theta=[...]")
        if source.startswith("@"):
            theta = power_mod.load_theta(source[1:])
        else:
            values = json.loads(source)
            theta = power_mod.ThetaVector(
                np.asarray(values, dtype=float),
                int(degree) if degree is not None else round(len(values) ** 0.25) - 1,
            )
        if degree is not None and int(degree) != theta.degree:
            raise PolicySpecError(
                f"P={degree} does not match theta of degree {theta.degree}"
            )
        policy = PowerPolicy(theta)
    else:
        raise PolicySpecError(f"unknown policy {name!r}")
    if params:
        raise PolicySpecError(f"unknown parameters for {name}: {sorted(params)}")
    return policy
