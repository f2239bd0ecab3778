"""Joint Gaussian statistics of the decision process and box-event probabilities.

The estimated strength gap y(n) and the received powers p_s(n) are jointly
Gaussian because both are linear images of the log-normal shadowing. This
module builds their joint mean/covariance over a set of sample times
(y_stats) and evaluates rectangle-event probabilities over the resulting
vectors: exactly (closed form / deterministic quadrature up to dimension 3,
Monte Carlo above), and through a family of cheaper approximations used when
the event dimension grows.

Coordinates are addressed by labels: ("y", t) for the gap at sample t and
("p", s, t) for BS s received power at sample t. Events are conjunctions of
half-open boxes lo < x <= hi over distinct labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.special import ndtr

from .channel import ChannelParams, path_loss
from .errors import ConfigurationError, NumericalConsistencyError

# Integration window half-width in standard deviations; the neglected tail
# mass is below 1e-17, far under every reported error figure.
_WINDOW_SD = 8.5
_MC_CHUNK = 200_000
_DEGENERATE_VAR = 1e-30

# Reported absolute-error figures for the deterministic branches.
_STDERR_CLOSED = 1e-9
_STDERR_QUAD = 1e-6


def _as_label(label):
    if not isinstance(label, tuple) or len(label) < 2:
        raise ConfigurationError(f"bad coordinate label {label!r}")
    if label[0] == "y" and len(label) == 2:
        return ("y", int(label[1]))
    if label[0] == "p" and len(label) == 3:
        return ("p", int(label[1]), int(label[2]))
    raise ConfigurationError(f"bad coordinate label {label!r}")


@dataclass(frozen=True)
class EventSpec:
    """Conjunction of half-open boxes lo < x <= hi over distinct labels."""

    constraints: tuple

    def __post_init__(self):
        norm = []
        seen = set()
        for c in self.constraints:
            if len(c) != 3:
                raise ConfigurationError("each constraint is (label, lower, upper)")
            label, lo, hi = c
            label = _as_label(label)
            lo = float(lo)
            hi = float(hi)
            if math.isnan(lo) or math.isnan(hi) or not lo < hi:
                raise ConfigurationError(f"constraint on {label} needs lower < upper")
            if label in seen:
                raise ConfigurationError(f"duplicate constraint label {label}")
            seen.add(label)
            norm.append((label, lo, hi))
        object.__setattr__(self, "constraints", tuple(norm))

    def __len__(self):
        return len(self.constraints)

    def __and__(self, other: "EventSpec") -> "EventSpec":
        return EventSpec(self.constraints + other.constraints)

    @property
    def labels(self):
        return tuple(c[0] for c in self.constraints)


def gap_below(t: int, h: float):
    """y(t) <= -h: the strength gap favors BS1 by at least the margin."""
    return (("y", t), -math.inf, -float(h))


def gap_inside(t: int, h: float):
    """-h < y(t) <= h: the gap stays inside the margin (requires h > 0)."""
    return (("y", t), -float(h), float(h))


def gap_above(t: int, h: float):
    """y(t) > h: the gap favors BS0 beyond the margin."""
    return (("y", t), float(h), math.inf)


def power_below(s: int, t: int, threshold: float):
    """p_s(t) <= threshold: link s in outage at sample t."""
    return (("p", s, t), -math.inf, float(threshold))


def power_above(s: int, t: int, threshold: float):
    """p_s(t) > threshold: link s clear of outage at sample t."""
    return (("p", s, t), float(threshold), math.inf)


@dataclass(frozen=True)
class GaussianVector:
    """Mean/covariance over labelled coordinates."""

    mu: np.ndarray
    Sigma: np.ndarray
    labels: tuple

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        labels = tuple(_as_label(l) for l in self.labels)
        k = mu.shape[0]
        if Sigma.shape != (k, k) or len(labels) != k:
            raise ConfigurationError("mu, Sigma, labels sizes disagree")
        if len(set(labels)) != k:
            raise ConfigurationError("labels must be distinct")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(Sigma))):
            raise ConfigurationError("mu and Sigma must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", 0.5 * (Sigma + Sigma.T))
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def subset(self, labels) -> "GaussianVector":
        labels = tuple(_as_label(l) for l in labels)
        pos = {l: i for i, l in enumerate(self.labels)}
        try:
            idx = np.array([pos[l] for l in labels], dtype=int)
        except KeyError as exc:
            raise ConfigurationError(f"label {exc.args[0]} not in vector") from exc
        return GaussianVector(self.mu[idx], self.Sigma[np.ix_(idx, idx)], labels)


@dataclass(frozen=True)
class ProbResult:
    """Probability estimate with its working standard error and provenance."""

    estimate: float
    stderr: float
    method: str
    jittered: bool = False

    def __float__(self):
        return float(self.estimate)


def check_psd(Sigma: np.ndarray, context: str = "covariance") -> None:
    """Raise unless Sigma is symmetric PSD within tolerance."""
    Sigma = np.asarray(Sigma, dtype=float)
    sym = 0.5 * (Sigma + Sigma.T)
    eigmin = float(np.linalg.eigvalsh(sym).min()) if sym.size else 0.0
    tol = 1e-8 * max(float(np.trace(sym)), 0.0)
    if eigmin < -tol:
        raise NumericalConsistencyError(
            f"{context} is not PSD: min eigenvalue {eigmin:.3e} under tolerance {-tol:.3e}"
        )


@dataclass(frozen=True)
class YProcessStats:
    """Joint Gaussian law of selected y(t) and p_s(t) coordinates.

    window_bounds maps each y time to the (first, last) sample index its
    filter weights touch.
    """

    vector: GaussianVector
    window_bounds: dict = field(compare=False)

    @property
    def labels(self):
        return self.vector.labels

    @property
    def mu(self) -> np.ndarray:
        return self.vector.mu

    @property
    def Sigma(self) -> np.ndarray:
        return self.vector.Sigma

    def joint(self, labels) -> GaussianVector:
        return self.vector.subset(labels)

    def mean_of(self, label) -> float:
        label = _as_label(label)
        return float(self.vector.mu[self.vector.labels.index(label)])

    def sd_of(self, label) -> float:
        label = _as_label(label)
        i = self.vector.labels.index(label)
        return float(math.sqrt(max(self.vector.Sigma[i, i], 0.0)))


def y_stats(
    table0: np.ndarray,
    table1: np.ndarray,
    channels,
    distances_m: np.ndarray,
    step_m: float,
    y_times,
    p_times=(),
    *,
    check: bool = True,
) -> YProcessStats:
    """Exact joint law of the gap process and selected received powers.

    table0/table1 are dense [N, N] filter-coefficient tables for the two
    links (row t holds the weights producing l_s(t)); channels the per-link
    ChannelParams pair; distances_m the [2, N] per-link distances. y_times
    and p_times=(s, t) pairs pick the coordinates.
    """
    table0 = np.asarray(table0, dtype=float)
    table1 = np.asarray(table1, dtype=float)
    distances_m = np.asarray(distances_m, dtype=float)
    if distances_m.ndim != 2 or distances_m.shape[0] != 2:
        raise ConfigurationError("distances_m must be [2, N]")
    n_total = distances_m.shape[1]
    if table0.shape != (n_total, n_total) or table1.shape != (n_total, n_total):
        raise ConfigurationError("coefficient tables must be [N, N]")
    if len(channels) != 2 or not all(isinstance(c, ChannelParams) for c in channels):
        raise ConfigurationError("channels must be a pair of ChannelParams")
    y_times = [int(t) for t in y_times]
    p_times = [(int(s), int(t)) for (s, t) in p_times]
    for t in y_times:
        if not 0 <= t < n_total:
            raise ConfigurationError(f"y time {t} out of range")
    for s, t in p_times:
        if s not in (0, 1) or not 0 <= t < n_total:
            raise ConfigurationError(f"bad p coordinate ({s}, {t})")

    tables = (table0, table1)
    # Support of all requested rows plus the p times: one small slice of the
    # trace carries every covariance sum.
    bounds = {}
    lo = min(y_times + [t for _, t in p_times], default=0)
    hi = max(y_times + [t for _, t in p_times], default=0)
    for t in y_times:
        nz0 = np.nonzero(table0[t])[0]
        nz1 = np.nonzero(table1[t])[0]
        first = int(min(nz0[0] if nz0.size else t, nz1[0] if nz1.size else t))
        last = int(max(nz0[-1] if nz0.size else t, nz1[-1] if nz1.size else t))
        bounds[t] = (first, last)
        lo = min(lo, first)
        hi = max(hi, last)
    cols = np.arange(lo, hi + 1)
    w = cols.size

    lag = np.abs(cols[:, None] - cols[None, :]).astype(float)
    autocov = []
    means_pl = []
    for s in (0, 1):
        ch = channels[s]
        a = ch.ar_coeff(step_m)
        autocov.append(ch.shadow_sigma_db**2 * a**lag)
        means_pl.append(path_loss(ch, distances_m[s]))

    g = [tables[s][np.ix_(y_times, cols)] for s in (0, 1)] if y_times else [
        np.zeros((0, w)),
        np.zeros((0, w)),
    ]

    ky, kp = len(y_times), len(p_times)
    k = ky + kp
    mu = np.zeros(k)
    Sigma = np.zeros((k, k))

    if ky:
        mu[:ky] = g[0] @ means_pl[0][cols] - g[1] @ means_pl[1][cols]
        Sigma[:ky, :ky] = g[0] @ autocov[0] @ g[0].T + g[1] @ autocov[1] @ g[1].T

    for j, (s, t) in enumerate(p_times):
        ch = channels[s]
        mu[ky + j] = means_pl[s][t]
        sign = 1.0 if s == 0 else -1.0
        if ky:
            a = ch.ar_coeff(step_m)
            r_row = ch.shadow_sigma_db**2 * a ** np.abs(t - cols).astype(float)
            Sigma[ky + j, :ky] = sign * (g[s] @ r_row)
            Sigma[:ky, ky + j] = Sigma[ky + j, :ky]
        for j2, (s2, t2) in enumerate(p_times[: j + 1]):
            if s2 == s:
                a = ch.ar_coeff(step_m)
                cov = ch.shadow_sigma_db**2 * a ** abs(t - t2)
                Sigma[ky + j, ky + j2] = cov
                Sigma[ky + j2, ky + j] = cov

    if check:
        check_psd(Sigma, "joint y/p covariance")
    labels = tuple(("y", t) for t in y_times) + tuple(("p", s, t) for s, t in p_times)
    return YProcessStats(GaussianVector(mu, Sigma, labels), bounds)


def _match_event(gv: GaussianVector, ev: EventSpec):
    """Restrict gv to the event's labels, in event order."""
    sub = gv.subset(ev.labels)
    lo = np.array([c[1] for c in ev.constraints])
    hi = np.array([c[2] for c in ev.constraints])
    return sub.mu, sub.Sigma, lo, hi


def _strip_degenerate(mu, Sigma, lo, hi):
    """Resolve near-zero-variance coordinates deterministically."""
    var = np.diag(Sigma)
    fixed = var <= _DEGENERATE_VAR
    if not np.any(fixed):
        return mu, Sigma, lo, hi, False
    inside = (lo[fixed] < mu[fixed]) & (mu[fixed] <= hi[fixed])
    if not np.all(inside):
        return None
    keep = ~fixed
    return mu[keep], Sigma[np.ix_(keep, keep)], lo[keep], hi[keep], True


def _cholesky_jittered(Sigma):
    try:
        return np.linalg.cholesky(Sigma), False
    except np.linalg.LinAlgError:
        pass
    k = Sigma.shape[0]
    jitter = 1e-10 * max(float(np.trace(Sigma)), 1e-300) / k
    try:
        return np.linalg.cholesky(Sigma + jitter * np.eye(k)), True
    except np.linalg.LinAlgError as exc:
        raise NumericalConsistencyError(
            "covariance not factorizable even after jitter"
        ) from exc


def _mc_box_prob(mu, Sigma, lo, hi, n_samples, seed):
    L, jittered = _cholesky_jittered(Sigma)
    k = mu.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    done = 0
    while done < n_samples:
        m = min(_MC_CHUNK, n_samples - done)
        z = rng.standard_normal((m, k))
        x = mu + z @ L.T
        inside = np.all((lo < x) & (x <= hi), axis=1)
        hits += int(inside.sum())
        done += m
    p = hits / n_samples
    # Clip only inside the stderr so an empty count still reports a usable
    # scale instead of a zero-width interval.
    pc = min(max(p, 1.0 / (n_samples + 2)), 1.0 - 1.0 / (n_samples + 2))
    stderr = math.sqrt(pc * (1.0 - pc) / n_samples)
    return p, stderr, jittered


def _simpson_nodes(lo, hi, n=2001):
    return np.linspace(lo, hi, n)


def _quad_dim2(mu, Sigma, lo, hi):
    s0 = math.sqrt(Sigma[0, 0])
    a = max(lo[0], mu[0] - _WINDOW_SD * s0)
    b = min(hi[0], mu[0] + _WINDOW_SD * s0)
    if not a < b:
        return 0.0
    x = _simpson_nodes(a, b)
    beta = Sigma[1, 0] / Sigma[0, 0]
    m = mu[1] + beta * (x - mu[0])
    s1 = math.sqrt(max(Sigma[1, 1] - beta * Sigma[1, 0], 1e-300))
    dens = np.exp(-0.5 * ((x - mu[0]) / s0) ** 2) / (s0 * math.sqrt(2 * math.pi))
    inner = ndtr((hi[1] - m) / s1) - ndtr((lo[1] - m) / s1)
    return float(simpson(dens * inner, x=x))


def _quad_dim3(mu, Sigma, lo, hi):
    s0 = math.sqrt(Sigma[0, 0])
    a0 = max(lo[0], mu[0] - _WINDOW_SD * s0)
    b0 = min(hi[0], mu[0] + _WINDOW_SD * s0)
    s1m = math.sqrt(Sigma[1, 1])
    a1 = max(lo[1], mu[1] - _WINDOW_SD * s1m)
    b1 = min(hi[1], mu[1] + _WINDOW_SD * s1m)
    if not (a0 < b0 and a1 < b1):
        return 0.0
    x0 = _simpson_nodes(a0, b0)
    x1 = _simpson_nodes(a1, b1)

    beta10 = Sigma[1, 0] / Sigma[0, 0]
    s1c = math.sqrt(max(Sigma[1, 1] - beta10 * Sigma[1, 0], 1e-300))
    top = np.linalg.inv(Sigma[:2, :2])
    beta2 = Sigma[2, :2] @ top
    s2c = math.sqrt(max(Sigma[2, 2] - beta2 @ Sigma[:2, 2], 1e-300))

    dens0 = np.exp(-0.5 * ((x0 - mu[0]) / s0) ** 2) / (s0 * math.sqrt(2 * math.pi))
    out = np.empty(x0.size)
    for i, xi in enumerate(x0):
        m1 = mu[1] + beta10 * (xi - mu[0])
        dens1 = np.exp(-0.5 * ((x1 - m1) / s1c) ** 2) / (s1c * math.sqrt(2 * math.pi))
        m2 = mu[2] + beta2[0] * (xi - mu[0]) + beta2[1] * (x1 - mu[1])
        inner = ndtr((hi[2] - m2) / s2c) - ndtr((lo[2] - m2) / s2c)
        out[i] = simpson(dens0[i] * dens1 * inner, x=x1)
    return float(simpson(out, x=x0))


def exact_prob(
    gv: GaussianVector,
    ev: EventSpec,
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> ProbResult:
    """Probability of the box event under the joint Gaussian law.

    Dimensions 1-3 use closed form / deterministic Simpson quadrature with a
    reported conservative absolute-error figure; higher dimensions fall back
    to chunked Monte Carlo with a binomial standard error. Near-zero-variance
    coordinates are resolved as deterministic memberships first.
    """
    if mc_samples < 10_000:
        raise ConfigurationError("mc_samples must be at least 10000")
    if len(ev) == 0:
        return ProbResult(1.0, 0.0, "closed-form")
    mu, Sigma, lo, hi = _match_event(gv, ev)
    check_psd(Sigma, "event covariance")
    stripped = _strip_degenerate(mu, Sigma, lo, hi)
    if stripped is None:
        return ProbResult(0.0, 0.0, "degenerate")
    mu, Sigma, lo, hi, any_fixed = stripped
    k = mu.shape[0]
    if k == 0:
        return ProbResult(1.0, 0.0, "degenerate")
    if k == 1:
        s = math.sqrt(Sigma[0, 0])
        p = float(ndtr((hi[0] - mu[0]) / s) - ndtr((lo[0] - mu[0]) / s))
        return ProbResult(max(p, 0.0), _STDERR_CLOSED, "closed-form")
    if k == 2:
        return ProbResult(max(_quad_dim2(mu, Sigma, lo, hi), 0.0), _STDERR_QUAD, "quadrature")
    if k == 3:
        return ProbResult(max(_quad_dim3(mu, Sigma, lo, hi), 0.0), _STDERR_QUAD, "quadrature")
    p, stderr, jittered = _mc_box_prob(mu, Sigma, lo, hi, mc_samples, seed)
    return ProbResult(p, stderr, "mc", jittered)


def approx1(
    gv: GaussianVector,
    ev: EventSpec,
    group_size: int,
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> ProbResult:
    """Correlation-truncating product: split the event into contiguous blocks
    of group_size coordinates and multiply the blocks' exact probabilities.

    With group_size >= dim(event) this is exactly exact_prob, same seed and
    all. Per-block seeds otherwise derive from (seed, block index).
    """
    if group_size < 1:
        raise ConfigurationError("group_size must be at least 1")
    k = len(ev)
    if group_size >= k:
        return exact_prob(gv, ev, mc_samples, seed)
    blocks = [
        EventSpec(ev.constraints[i : i + group_size]) for i in range(0, k, group_size)
    ]
    probs = np.empty(len(blocks))
    errs = np.empty(len(blocks))
    jittered = False
    for idx, block in enumerate(blocks):
        block_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
        r = exact_prob(gv, block, mc_samples, block_seed)
        probs[idx] = r.estimate
        errs[idx] = r.stderr
        jittered |= r.jittered
    estimate = float(np.prod(probs))
    # First-order propagation: each block's partial derivative is the product
    # of the other blocks' estimates.
    partials = np.array([np.prod(np.delete(probs, i)) for i in range(len(blocks))])
    stderr = float(np.sqrt(np.sum((partials * errs) ** 2)))
    return ProbResult(estimate, stderr, "approx1", jittered)


def _eigen_box_factor(mu, lo, hi, lam, det):
    k = mu.shape[0]
    s = math.sqrt(lam)
    factors = ndtr((hi - mu) / s) - ndtr((lo - mu) / s)
    return float(lam ** (k / 2.0) / math.sqrt(det) * np.prod(factors))


def approx2_bounds(gv: GaussianVector, ev: EventSpec):
    """Eigenvalue sandwich (lower, upper) on the box probability.

    Replaces the covariance by lambda_min*I / lambda_max*I inside the
    exponent; for isotropic covariance both sides collapse to the exact
    value. Raw bounds: the upper side may exceed 1. Requires a positive
    definite covariance.
    """
    mu, Sigma, lo, hi = _match_event(gv, ev)
    lam = np.linalg.eigvalsh(0.5 * (Sigma + Sigma.T))
    if lam[0] <= 0.0:
        raise NumericalConsistencyError(
            "eigenvalue sandwich needs a positive definite covariance; "
            f"min eigenvalue {lam[0]:.3e}"
        )
    det = float(np.prod(lam))
    lower = _eigen_box_factor(mu, lo, hi, float(lam[0]), det)
    upper = _eigen_box_factor(mu, lo, hi, float(lam[-1]), det)
    return lower, upper


def gershgorin_bracket(Sigma: np.ndarray, m_mem: int):
    """Cheap eigenvalue bracket from banded Gershgorin row sums.

    Off-diagonal mass beyond |i - j| > m_mem is ignored, which is how the
    caller encodes a known correlation memory. m_mem = 0 brackets by the
    diagonal range alone.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.shape[0] != Sigma.shape[1]:
        raise ConfigurationError("Sigma must be square")
    if m_mem < 0:
        raise ConfigurationError("m_mem must be nonnegative")
    k = Sigma.shape[0]
    idx = np.arange(k)
    band = (np.abs(idx[:, None] - idx[None, :]) <= m_mem) & ~np.eye(k, dtype=bool)
    radius = np.abs(Sigma * band).sum(axis=1)
    diag = np.diag(Sigma)
    return float(np.min(diag - radius)), float(np.max(diag + radius))


def approx3_upper(
    gv: GaussianVector,
    ev: EventSpec,
    m_split: int,
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> ProbResult:
    """Cauchy-Schwarz upper bound mixing an exact tail block with an
    eigenvalue bound on the head block.

    The last m_split coordinates keep their exact joint probability (square
    rooted); the first k - m_split contribute the square-rooted eigenvalue
    upper bound of their marginal. m_split = k degenerates to sqrt(exact).
    """
    k = len(ev)
    if not 1 <= m_split <= k:
        raise ConfigurationError("m_split must lie in [1, dim(event)]")
    tail = EventSpec(ev.constraints[k - m_split :])
    r = exact_prob(gv, tail, mc_samples, seed)
    if m_split == k:
        est = math.sqrt(max(r.estimate, 0.0))
        stderr = r.stderr / (2.0 * est) if est > 0 else math.sqrt(r.stderr)
        return ProbResult(est, stderr, "approx3", r.jittered)
    head = EventSpec(ev.constraints[: k - m_split])
    _, head_upper = approx2_bounds(gv, head)
    est = math.sqrt(max(r.estimate, 0.0)) * math.sqrt(max(head_upper, 0.0))
    if r.estimate > 0:
        stderr = est * r.stderr / (2.0 * r.estimate)
    else:
        stderr = math.sqrt(max(head_upper, 0.0) * r.stderr)
    return ProbResult(est, stderr, "approx3", r.jittered)


class GapProcess:
    """Bundles the filter tables and channel pair behind y_stats.

    Callers hand events around as label sets; this object turns them into
    the right joint Gaussian on demand.
    """

    def __init__(self, table0, table1, channels, distances_m, step_m):
        self.table0 = np.asarray(table0, dtype=float)
        self.table1 = np.asarray(table1, dtype=float)
        self.channels = tuple(channels)
        self.distances_m = np.asarray(distances_m, dtype=float)
        self.step_m = float(step_m)
        if self.distances_m.ndim != 2 or self.distances_m.shape[0] != 2:
            raise ConfigurationError("distances_m must be [2, N]")

    @property
    def n_samples(self) -> int:
        return self.distances_m.shape[1]

    def stats(self, y_times, p_times=(), *, check: bool = True) -> YProcessStats:
        return y_stats(
            self.table0,
            self.table1,
            self.channels,
            self.distances_m,
            self.step_m,
            y_times,
            p_times,
            check=check,
        )

    def joint(self, labels) -> GaussianVector:
        labels = tuple(_as_label(l) for l in labels)
        y_times = [l[1] for l in labels if l[0] == "y"]
        p_times = [(l[1], l[2]) for l in labels if l[0] == "p"]
        return self.stats(y_times, p_times, check=False).vector.subset(labels)

    def prob(self, ev: EventSpec, mc_samples: int = 1_000_000, seed: int = 0) -> ProbResult:
        return exact_prob(self.joint(ev.labels), ev, mc_samples, seed)


def bvn_cdf_lattice(mu, Sigma, xs, ys):
    """P(X <= x, Y <= y) on the lattice xs × ys for a bivariate Gaussian.

    Deterministic segmented Gauss-Legendre integration over X with the exact
    conditional normal CDF inside; every lattice value is an integration
    border, so box probabilities assembled from the returned table carry no
    interpolation error (absolute error well under 1e-10). xs must ascend.
    +-inf entries are allowed in both lattices.
    """
    mu = np.asarray(mu, dtype=float)
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if mu.shape != (2,) or Sigma.shape != (2, 2):
        raise ConfigurationError("bvn_cdf_lattice needs a bivariate law")
    if np.any(np.diff(xs) < 0):
        raise ConfigurationError("xs must be sorted ascending")
    sx = math.sqrt(max(Sigma[0, 0], _DEGENERATE_VAR))
    sy = math.sqrt(max(Sigma[1, 1], _DEGENERATE_VAR))
    beta = Sigma[1, 0] / max(Sigma[0, 0], _DEGENERATE_VAR)
    s_cond = math.sqrt(max(Sigma[1, 1] - beta * Sigma[1, 0], 1e-300))

    lo_w = mu[0] - _WINDOW_SD * sx
    hi_w = mu[0] + _WINDOW_SD * sx
    interior = [float(x) for x in xs if lo_w < x < hi_w]
    borders = np.array([lo_w] + interior + [hi_w])

    nodes, weights = np.polynomial.legendre.leggauss(24)
    half = 0.5 * (borders[1:] - borders[:-1])
    mid = 0.5 * (borders[1:] + borders[:-1])
    x_nodes = mid[:, None] + half[:, None] * nodes[None, :]
    w_nodes = half[:, None] * weights[None, :]

    flat_x = x_nodes.ravel()
    dens = np.exp(-0.5 * ((flat_x - mu[0]) / sx) ** 2) / (sx * math.sqrt(2 * math.pi))
    m_cond = mu[1] + beta * (flat_x - mu[0])
    with np.errstate(invalid="ignore"):
        z = (ys[None, :] - m_cond[:, None]) / s_cond
    inner = ndtr(np.where(np.isnan(z), -np.inf, z))
    seg = ((dens * w_nodes.ravel())[:, None] * inner).reshape(
        borders.size - 1, 24, ys.size
    ).sum(axis=1)
    cum = np.vstack([np.zeros(ys.size), np.cumsum(seg, axis=0)])

    border_pos = {b: i for i, b in enumerate(borders)}
    out = np.empty((xs.size, ys.size))
    for i, x in enumerate(xs):
        if x <= lo_w:
            out[i] = 0.0
        elif x >= hi_w:
            out[i] = cum[-1]
        else:
            out[i] = cum[border_pos[float(x)]]
    return out
