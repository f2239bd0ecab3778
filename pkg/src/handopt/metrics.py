"""Connection, handover and outage probabilities of the hysteresis rule.

Everything here reduces to box-event probabilities over the joint Gaussian
law of the estimated gap y(n). Connected-state probabilities expand the
decision recursion backwards: the MT is on BS1 at n iff the gap last left
the margin band through the lower side and stayed inside since,

    Pr[b(n) = 1] = sum_j Pr[ L(j), M(j+1), ..., M(n) ] + band-carry term,

with L = (-inf, -h], M = (-h, h], N = (h, inf). The expansion is truncated
to a memory of `depth` samples; the remainder factorizes against the
connected-state probability at the truncation point (the one approximation
in the exact method, negligible once the shadowing has decorrelated across
the window). Within-window terms are evaluated by exact_prob.

method="pairwise" replaces every within-window joint by a Markov telescope
of adjacent-pair conditionals, each evaluated by deterministic bivariate
quadrature. It is a documented approximation used where thousands of chain
evaluations are needed; the exact method is the reference.

Naming: p_h01 is the probability of a margin crossing that lands the MT on
BS0 (upper exit while previously on BS1); p_h10 the reverse switch onto
BS1. Outage probabilities condition the serving link's power falling under
the threshold on the serving state; the literal sum p_o = p_o0 + p_o1 of
the two conditionals is reported as defined (it is not itself a
probability and can exceed 1), together with the unconditional mixture
Pr[out & on BS0] + Pr[out & on BS1], which is one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateConditioningError
from .gaussian import (
    EventSpec,
    GapProcess,
    exact_prob,
    gap_above,
    gap_below,
    gap_inside,
    power_below,
)


@dataclass(frozen=True)
class ConnectionProb:
    """Connected-state probabilities at one sample."""

    n: int
    p_connected_bs1: float
    p_connected_bs0: float
    stderr_bs1: float
    stderr_bs0: float
    method: str


@dataclass(frozen=True)
class HandoverOutageProbs:
    """Handover and/or outage probabilities at one sample.

    Fields of the side not requested are NaN.
    """

    n: int
    p_h01: float = math.nan
    p_h10: float = math.nan
    p_h: float = math.nan
    p_o0: float = math.nan
    p_o1: float = math.nan
    p_o: float = math.nan
    p_o_mixture: float = math.nan
    stderr: float = math.nan
    method: str = "exact"


def _h_lookup(h_series, n_last: int) -> np.ndarray:
    h = np.asarray(h_series, dtype=float)
    if h.ndim == 0:
        h = np.full(n_last + 1, float(h))
    if h.ndim != 1 or h.shape[0] < n_last + 1:
        raise ConfigurationError("h_series must cover samples 0..n")
    if not np.all(np.isfinite(h[: n_last + 1])) or np.any(h[: n_last + 1] < 0):
        raise ConfigurationError("margins must be finite and nonnegative")
    return h[: n_last + 1]


def _term_seed(base_seed: int, constraints) -> int:
    digest = hashlib.blake2b(
        f"{base_seed}|{constraints!r}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") >> 1


def _pairwise_chain(process: GapProcess, constraints) -> float:
    """Markov telescope over adjacent constraints, bivariate quadrature."""
    y_cs = [c for c in constraints if c[0][0] == "y"]
    p_cs = [c for c in constraints if c[0][0] == "p"]
    prev = y_cs[0]
    prob = exact_prob(process.joint([prev[0]]), EventSpec((prev,))).estimate
    for c in y_cs[1:] + p_cs:
        if prob <= 0.0:
            return 0.0
        joint = exact_prob(
            process.joint([prev[0], c[0]]), EventSpec((prev, c))
        ).estimate
        marg = exact_prob(process.joint([prev[0]]), EventSpec((prev,))).estimate
        if marg <= 0.0:
            return 0.0
        prob *= joint / marg
        if c[0][0] == "y":
            prev = c
    return prob


def _eval_term(process, constraints, method, mc_samples, seed):
    """Probability of one chain conjunction; (estimate, stderr)."""
    if not constraints:
        return 1.0, 0.0
    ev = EventSpec(tuple(constraints))
    if method == "pairwise":
        return _pairwise_chain(process, ev.constraints), 0.0
    r = exact_prob(
        process.joint(ev.labels), ev, mc_samples, _term_seed(seed, ev.constraints)
    )
    return r.estimate, r.stderr


def _band_constraints(h, times):
    """Inside-band constraints for the given times; None if impossible."""
    out = []
    for t in times:
        if h[t] <= 0.0:
            return None
        out.append(gap_inside(t, h[t]))
    return out


def _exit_chain_terms(h, t, depth, root_side):
    """Expansion terms for the connected state at sample t.

    root_side 1 expands Pr[b(t) = 1] (lower exits), 0 the complement.
    Yields (root index j or None for the carry, constraint list). The carry
    entry's weight is supplied by the caller.
    """
    m = max(0, t - depth)
    j_lo = 0 if m == 0 else m + 1
    root = gap_below if root_side == 1 else gap_above
    for j in range(j_lo, t + 1):
        band = _band_constraints(h, range(j + 1, t + 1))
        if band is None:
            continue
        yield j, [root(j, h[j])] + band
    band = _band_constraints(h, range(j_lo if m == 0 else m + 1, t + 1))
    yield None, band


def _connection_sweep(
    process, n_last, h, depth, b_init, method, mc_samples, seed
):
    """Connected-state probabilities for both sides at samples 0..n_last."""
    pe = np.zeros(n_last + 1)
    pnot = np.zeros(n_last + 1)
    var_e = np.zeros(n_last + 1)
    var_not = np.zeros(n_last + 1)
    for t in range(n_last + 1):
        m = max(0, t - depth)
        for side, acc, var_acc in ((1, pe, var_e), (0, pnot, var_not)):
            total = 0.0
            var = 0.0
            for j, constraints in _exit_chain_terms(h, t, depth, side):
                if j is None:
                    if m == 0:
                        w, se_w = (1.0, 0.0) if b_init == side else (0.0, 0.0)
                    else:
                        w = pe[m] if side == 1 else pnot[m]
                        se_w = math.sqrt(var_e[m] if side == 1 else var_not[m])
                    if constraints is None or w == 0.0:
                        continue
                    q, se_q = _eval_term(process, constraints, method, mc_samples, seed)
                    total += q * w
                    var += (se_q * w) ** 2 + (q * se_w) ** 2
                else:
                    q, se_q = _eval_term(process, constraints, method, mc_samples, seed)
                    total += q
                    var += se_q**2
            acc[t] = total
            var_acc[t] = var
    return pe, pnot, np.sqrt(var_e), np.sqrt(var_not)


def connection_series(
    process: GapProcess,
    n_last: int,
    h_series,
    depth: int,
    *,
    b_init: int = 0,
    method: str = "exact",
    mc_samples: int = 1_000_000,
    seed: int = 0,
):
    """Arrays (p_bs1, p_bs0, stderr_bs1, stderr_bs0) over samples 0..n_last."""
    if depth < 1:
        raise ConfigurationError("depth must be at least 1")
    if b_init not in (0, 1):
        raise ConfigurationError("b_init must be 0 or 1")
    if method not in ("exact", "pairwise"):
        raise ConfigurationError(f"unknown method {method!r}")
    h = _h_lookup(h_series, n_last)
    return _connection_sweep(process, n_last, h, depth, b_init, method, mc_samples, seed)


def connection_prob(
    process: GapProcess,
    n: int,
    h_series,
    depth: int,
    *,
    b_init: int = 0,
    method: str = "exact",
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> ConnectionProb:
    """Connected-state probabilities at sample n (both sides assembled
    independently; their sum tends to 1 by the event partition)."""
    pe, pnot, se_e, se_not = connection_series(
        process, n, h_series, depth,
        b_init=b_init, method=method, mc_samples=mc_samples, seed=seed,
    )
    return ConnectionProb(n, float(pe[n]), float(pnot[n]), float(se_e[n]), float(se_not[n]), method)


def handover_series(
    process: GapProcess,
    n_last: int,
    h_series,
    depth: int,
    *,
    b_init: int = 0,
    method: str = "exact",
    mc_samples: int = 1_000_000,
    seed: int = 0,
):
    """Arrays (p_h01, p_h10, stderr) of switch probabilities at 0..n_last."""
    if depth < 1:
        raise ConfigurationError("depth must be at least 1")
    if method not in ("exact", "pairwise"):
        raise ConfigurationError(f"unknown method {method!r}")
    h = _h_lookup(h_series, n_last)
    pe, pnot, se_e, se_not = _connection_sweep(
        process, n_last, h, depth, b_init, method, mc_samples, seed
    )
    p01 = np.zeros(n_last + 1)
    p10 = np.zeros(n_last + 1)
    var = np.zeros(n_last + 1)
    for n in range(n_last + 1):
        if n == 0:
            if b_init == 1:
                q, se = _eval_term(
                    process, [gap_above(0, h[0])], method, mc_samples, seed
                )
                p01[0] = q
            else:
                q, se = _eval_term(
                    process, [gap_below(0, h[0])], method, mc_samples, seed
                )
                p10[0] = q
            var[0] = se**2
            continue
        m = max(0, (n - 1) - depth)
        for side, out in ((1, p01), (0, p10)):
            exit_c = gap_above(n, h[n]) if side == 1 else gap_below(n, h[n])
            total = 0.0
            v = 0.0
            for j, constraints in _exit_chain_terms(h, n - 1, depth, side):
                if j is None:
                    if m == 0:
                        w, se_w = (1.0, 0.0) if b_init == side else (0.0, 0.0)
                    else:
                        w = pe[m] if side == 1 else pnot[m]
                        se_w = se_e[m] if side == 1 else se_not[m]
                    if constraints is None or w == 0.0:
                        continue
                    q, se_q = _eval_term(
                        process, constraints + [exit_c], method, mc_samples, seed
                    )
                    total += q * w
                    v += (se_q * w) ** 2 + (q * se_w) ** 2
                else:
                    q, se_q = _eval_term(
                        process, constraints + [exit_c], method, mc_samples, seed
                    )
                    total += q
                    v += se_q**2
            out[n] = total
            var[n] += v
    return p01, p10, np.sqrt(var)


def handover_prob(
    process: GapProcess,
    n: int,
    h_series,
    depth: int,
    *,
    b_init: int = 0,
    method: str = "exact",
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> HandoverOutageProbs:
    """Switch probabilities at sample n: upper exit from BS1 (p_h01), lower
    exit from BS0 (p_h10), and their sum."""
    p01, p10, se = handover_series(
        process, n, h_series, depth,
        b_init=b_init, method=method, mc_samples=mc_samples, seed=seed,
    )
    return HandoverOutageProbs(
        n,
        p_h01=float(p01[n]),
        p_h10=float(p10[n]),
        p_h=float(p01[n] + p10[n]),
        stderr=float(se[n]),
        method=method,
    )


_DEGENERATE_FLOOR = 1e-9


def outage_series(
    process: GapProcess,
    n_last: int,
    h_series,
    depth: int,
    threshold_db: float,
    *,
    b_init: int = 0,
    method: str = "exact",
    mc_samples: int = 1_000_000,
    seed: int = 0,
):
    """Arrays (p_o0, p_o1, p_o, p_o_mixture, stderr) at samples 0..n_last."""
    if depth < 1:
        raise ConfigurationError("depth must be at least 1")
    if method not in ("exact", "pairwise"):
        raise ConfigurationError(f"unknown method {method!r}")
    if not math.isfinite(threshold_db):
        raise ConfigurationError("threshold_db must be finite")
    h = _h_lookup(h_series, n_last)
    pe, pnot, se_e, se_not = _connection_sweep(
        process, n_last, h, depth, b_init, method, mc_samples, seed
    )
    po0 = np.zeros(n_last + 1)
    po1 = np.zeros(n_last + 1)
    mix = np.zeros(n_last + 1)
    var = np.zeros(n_last + 1)
    for n in range(n_last + 1):
        m = max(0, n - depth)
        for side, cond_p, out in ((0, pnot[n], po0), (1, pe[n], po1)):
            if cond_p < _DEGENERATE_FLOOR:
                raise DegenerateConditioningError(
                    f"connection to BS{side} at sample {n} has probability "
                    f"{cond_p:.3e}; conditional outage undefined"
                )
            serving_out = power_below(side, n, threshold_db)
            total = 0.0
            v = 0.0
            for j, constraints in _exit_chain_terms(h, n, depth, side):
                if j is None:
                    if m == 0:
                        w, se_w = (1.0, 0.0) if b_init == side else (0.0, 0.0)
                    else:
                        w = pnot[m] if side == 0 else pe[m]
                        se_w = se_not[m] if side == 0 else se_e[m]
                    if constraints is None or w == 0.0:
                        continue
                    q, se_q = _eval_term(
                        process, constraints + [serving_out], method, mc_samples, seed
                    )
                    total += q * w
                    v += (se_q * w) ** 2 + (q * se_w) ** 2
                else:
                    q, se_q = _eval_term(
                        process, constraints + [serving_out], method, mc_samples, seed
                    )
                    total += q
                    v += se_q**2
            out[n] = total / cond_p
            mix[n] += total
            var[n] += v / cond_p**2
    return po0, po1, po0 + po1, mix, np.sqrt(var)


def outage_prob(
    process: GapProcess,
    n: int,
    h_series,
    depth: int,
    threshold_db: float,
    *,
    b_init: int = 0,
    method: str = "exact",
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> HandoverOutageProbs:
    """Serving-link outage at sample n, conditioned each way on the serving
    state, plus the literal conditional sum and the unconditional mixture."""
    po0, po1, po, mix, se = outage_series(
        process, n, h_series, depth, threshold_db,
        b_init=b_init, method=method, mc_samples=mc_samples, seed=seed,
    )
    return HandoverOutageProbs(
        n,
        p_o0=float(po0[n]),
        p_o1=float(po1[n]),
        p_o=float(po[n]),
        p_o_mixture=float(mix[n]),
        stderr=float(se[n]),
        method=method,
    )
