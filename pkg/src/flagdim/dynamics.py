"""Orbits of the flag cocycle and everything read off them.

Two engines share the QR step.  The streaming engine keeps only the current
flag bases of a batch of replicas and accumulates log determinant
increments: that is all a Lyapunov spectrum needs, and it runs a million
steps in seconds.  The rich engine ('OrbitTrace') additionally keeps the
flags, the fiber coordinates, and the induced circle map of every step over
a short window; the interval machinery and the stable-line computations
work on traces.

Composed circle maps are never formed as long matrix products.  Intervals
are carried as an anchor plus two signed offsets and pushed one step at a
time through each map's closed-form offset formula, so lengths that decay
like e^(-gap n) stay fully resolved long after the endpoints' absolute
coordinates have collapsed onto one double.
"""

from dataclasses import dataclass

import numpy as np

from . import circle
from .ensemble import SeededSampler, sample_batch
from .errors import DegenerateFiberPair, GapTooSmall, IntervalWrap
from .flagcore import CircleMap, Flag, partial_flag

PRODUCT_COND_CAP = 1e10   # stop extending singular products past this


def batched_orthonormalize(mats):
    """QR with positive diagonal across a stack; returns Q and log|diag R|.

    Stacked inputs take a vectorized Gram-Schmidt path: LAPACK's per-matrix
    overhead dominates np.linalg.qr for tiny matrices, and the pool pushes
    in the entropy estimators live or die on this loop.
    """
    mats = np.asarray(mats, dtype=float)
    if mats.ndim < 3:
        q, r = np.linalg.qr(mats)
        diag = np.einsum("...ii->...i", r)
        signs = np.sign(diag)
        signs[signs == 0] = 1.0
        return q * signs[..., None, :], np.log(np.abs(diag))
    q = mats.copy()
    d = q.shape[-1]
    logs = np.empty(q.shape[:-2] + (d,))
    for j in range(d):
        col = q[..., :, j]
        for k in range(j):
            prev = q[..., :, k]
            col = col - np.sum(prev * col, axis=-1, keepdims=True) * prev
        nrm = np.linalg.norm(col, axis=-1, keepdims=True)
        q[..., :, j] = col / nrm
        logs[..., j] = np.log(nrm[..., 0])
    return q, logs


def evolve_flags(spec, bases, n_steps, sampler, accumulate=None):
    """Advance a stack of flag bases n_steps with fresh draws.

    ``accumulate`` receives (step, log_r) per step when given; used by the
    spectrum estimator without retaining the whole history.
    """
    bases = np.array(bases, dtype=float)
    n = bases.shape[0]
    for t in range(n_steps):
        mats = sample_batch(spec, sampler, n)
        bases, logr = batched_orthonormalize(mats @ bases)
        if accumulate is not None:
            accumulate(t, logr)
    return bases


def push_flags(pinned, bases):
    """Apply a fixed matrix sequence to every base in the stack."""
    bases = np.array(bases, dtype=float)
    for a in pinned:
        bases, _ = batched_orthonormalize(a @ bases)
    return bases


def stationary_flag_pool(spec, count, burnin, sampler):
    """Approximate i.i.d. draws from the stationary flag distribution.

    Runs ``count`` independent replicas from the standard flag for
    ``burnin`` steps; with a positive gap they forget the start exponentially.
    """
    start = np.broadcast_to(np.eye(spec.dim), (count, spec.dim, spec.dim))
    return evolve_flags(spec, start, burnin, sampler)


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    chi: np.ndarray
    stderr: np.ndarray
    n_steps: int
    burnin: int
    replicas: int

    def gap(self, i):
        """chi_i - chi_{i+1}, 1-based."""
        return float(self.chi[i - 1] - self.chi[i])

    def gap_stderr(self, i):
        return float(np.hypot(self.stderr[i - 1], self.stderr[i]))

    @property
    def dim(self):
        return len(self.chi)


def lyapunov_spectrum(spec, n_steps, burnin=1000, replicas=64, sampler=None):
    """Per-step log determinant increments averaged over time and replicas.

    chi_i is the mean i-th diagonal log increment of the QR cocycle after
    burn-in; the standard error comes from the spread of replica means,
    which are independent by construction.
    """
    if sampler is None:
        sampler = SeededSampler(0)
    d = spec.dim
    start = np.broadcast_to(np.eye(d), (replicas, d, d))
    sums = np.zeros((replicas, d))

    def accumulate(t, logr):
        if t >= burnin:
            sums[...] += logr

    # one child stream per replica would forbid batching across replicas;
    # instead the whole batch advances under one stream, and determinism
    # follows from the fixed call sequence.
    evolve_flags(spec, start, burnin + n_steps, sampler.child(0xCC), accumulate)
    means = sums / n_steps
    chi = means.mean(axis=0)
    stderr = means.std(axis=0, ddof=1) / np.sqrt(replicas)
    return SpectrumEstimate(chi=chi, stderr=stderr, n_steps=n_steps,
                            burnin=burnin, replicas=replicas)


def circle_map_between(a_entries, src, dst):
    """CircleMap of a matrix between two already-built partial flags."""
    su, sw = src.frame
    tu, tw = dst.frame
    au, aw = a_entries @ su, a_entries @ sw
    return CircleMap(source=src, target=dst,
                     matrix=np.array([[tu @ au, tu @ aw], [tw @ au, tw @ aw]]))


@dataclass(frozen=True, eq=False)
class OrbitTrace:
    """A realization over a window of consecutive integer times.

    flags[k] is the flag at time times[k]; matrices[k] maps it to
    flags[k+1]; maps[k] is the induced circle diffeomorphism between the
    corresponding fibers; x[k] is the fiber coordinate of the flag's own
    i-dimensional subspace; log_r[k] holds the per-step log determinant
    increments.
    """

    fiber_index: int
    times: np.ndarray
    matrices: np.ndarray
    flags: tuple
    partials: tuple
    maps: tuple
    x: np.ndarray
    log_r: np.ndarray

    def index(self, t):
        k = int(t) - int(self.times[0])
        if not 0 <= k < len(self.times):
            raise IndexError(f"time {t} outside window [{self.times[0]}, {self.times[-1]}]")
        return k

    @property
    def window(self):
        return int(self.times[0]), int(self.times[-1])


def forward_orbit(spec, f0, n_steps, sampler, fiber_index=1, t0=0):
    """Run the cocycle from a given flag, keeping the full trace."""
    i = fiber_index
    d = spec.dim
    mats = sample_batch(spec, sampler, n_steps)
    flags = [f0]
    log_r = np.zeros((n_steps, d))
    for t in range(n_steps):
        q, logr = batched_orthonormalize(mats[t] @ flags[-1].basis)
        flags.append(Flag(q))
        log_r[t] = logr
    partials = tuple(partial_flag(f, i) for f in flags)
    maps = tuple(circle_map_between(mats[t], partials[t], partials[t + 1])
                 for t in range(n_steps))
    x = np.empty(n_steps + 1)
    for k, (f, p) in enumerate(zip(flags, partials)):
        u, w = p.frame
        b = f.basis[:, i - 1]
        x[k] = circle.wrap(np.arctan2(b @ w, b @ u))
    return OrbitTrace(fiber_index=i, times=np.arange(t0, t0 + n_steps + 1),
                      matrices=mats, flags=tuple(flags), partials=partials,
                      maps=maps, x=x, log_r=log_r)


def stationary_orbit(spec, fiber_index, n_steps, burnin, sampler, t_end=0):
    """A trace whose window ends at ``t_end``, started from burn-in.

    The window covers times [t_end - n_steps, t_end]; the burn-in approximates
    drawing the first window flag from the stationary distribution.
    """
    base = np.eye(spec.dim)
    for a in sample_batch(spec, sampler, burnin):
        base, _ = batched_orthonormalize(a @ base)
    return forward_orbit(spec, Flag(base), n_steps, sampler,
                         fiber_index=fiber_index, t0=t_end - n_steps)


@dataclass(frozen=True)
class StableLine:
    coordinate: float
    shift: float       # coordinate change between half and full lookahead
    lookahead: int


def _contracted_direction(maps, start, lookahead):
    """Most contracted source direction of maps[start .. start+lookahead)."""
    p = np.eye(2)
    used = 0
    for k in range(start, start + lookahead):
        p = maps[k].matrix @ p
        p = p / np.linalg.norm(p)
        used += 1
        sv = np.linalg.svd(p, compute_uv=False)
        if sv[0] > PRODUCT_COND_CAP * sv[-1]:
            break  # direction resolved to working precision
    v = np.linalg.svd(p)[2][-1]
    return float(circle.wrap(np.arctan2(v[1], v[0]))), used


def oseledets_stable_line(trace, t, lookahead=None, tol=1e-2):
    """Fiber coordinate of the slow line of the quotient cocycle at time t.

    The slow (stable) line is the most contracted right singular direction
    of the composed 2x2 fiber maps looking forward from t.  The reported
    shift compares half against full lookahead and decays like
    exp(-gap * lookahead / 2), so mild-gap ensembles need long windows;
    when the full window cannot pin the direction down to ``tol`` the gap
    is too small to trust the downstream interval machinery.  ``tol=None``
    skips the check and reports the shift as-is.
    """
    k = trace.index(t)
    avail = len(trace.maps) - k
    if lookahead is None:
        lookahead = avail
    if lookahead < 2 or lookahead > avail:
        raise ValueError(f"lookahead {lookahead} outside 2..{avail}")
    full, used = _contracted_direction(trace.maps, k, lookahead)
    half, _ = _contracted_direction(trace.maps, k, max(1, lookahead // 2))
    shift = float(circle.distance(full, half))
    if tol is not None and shift > tol:
        raise GapTooSmall(
            f"stable line moved {shift:.2e} between lookaheads {lookahead // 2} "
            f"and {lookahead} (tolerance {tol:g})")
    return StableLine(coordinate=full, shift=shift, lookahead=used)


def stable_coordinates(trace, lookahead=None, tol=1e-2):
    """Stable-line coordinates on the window's prefix, with certification.

    Two transverse directions pulled back from the window's end both
    converge to the stable line (backward iteration contracts toward it at
    the rate the forward cocycle expands away from it); their distance at
    the anchor index is the realized resolution there, and every earlier
    time only contracts further.  The anchor sits ``lookahead`` steps
    before the window's end, so the certifying event is a function of the
    maps after the anchor alone; callers that drop uncertified replicas
    do not bias statistics collected before it.  Raises GapTooSmall when
    the anchor resolution exceeds ``tol`` (``tol=None`` skips the check,
    for isometric actions where no stable line exists).
    """
    n_maps = len(trace.maps)
    if lookahead is None:
        lookahead = min(n_maps, 400)
    anchor_k = n_maps - lookahead
    if anchor_k < 0:
        raise ValueError("window shorter than the requested lookahead")
    pair = np.eye(2)
    angles = np.empty((n_maps + 1, 2))
    angles[n_maps] = (0.0, circle.HALF_TURN / 2)
    for k in range(n_maps - 1, -1, -1):
        pair = np.linalg.solve(trace.maps[k].matrix, pair)
        pair = pair / np.linalg.norm(pair, axis=0, keepdims=True)
        angles[k] = circle.wrap(np.arctan2(pair[1], pair[0]))
    resolution = circle.distance(angles[anchor_k, 0], angles[anchor_k, 1])
    if tol is not None and resolution > tol:
        raise GapTooSmall(
            f"stable line resolved only to {resolution:.2e} at the anchor "
            f"({lookahead} steps from the window end, tolerance {tol:g})")
    return trace.times[: anchor_k + 1], angles[: anchor_k + 1, 0]


@dataclass(frozen=True)
class AngleDecayReport:
    slope: float
    stderr: float
    n_points: int

    @property
    def band(self):
        return (self.slope - 2 * self.stderr, self.slope + 2 * self.stderr)


def angle_decay_check(trace, lookahead=None, tol=1e-2):
    """Regression slope of log dist(x_n, y_n) against n; sublinear means ~0."""
    times, y = stable_coordinates(trace, lookahead=lookahead, tol=tol)
    x = trace.x[: len(y)]
    d = circle.distance(x, y)
    if np.any(d <= 0):
        raise DegenerateFiberPair("x and y coincide somewhere in the window")
    t = times.astype(float)
    logd = np.log(d)
    slope, intercept = np.polyfit(t, logd, 1)
    resid = logd - (slope * t + intercept)
    denom = float(np.sum((t - t.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid ** 2) / max(len(t) - 2, 1) / denom))
    return AngleDecayReport(slope=float(slope), stderr=stderr, n_points=len(t))


@dataclass(frozen=True)
class Arc:
    """Closed arc {anchor + t : lo <= t <= hi} with lo <= 0 <= hi.

    Offsets are kept separate from the anchor so lengths far below the
    anchor's own floating point resolution remain exact.
    """

    anchor: float
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= 0.0 <= self.hi):
            raise IntervalWrap(f"anchor left the arc: offsets [{self.lo}, {self.hi}]")
        if self.hi - self.lo >= circle.HALF_TURN:
            raise IntervalWrap(f"arc of length {self.hi - self.lo} covers the circle")

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def endpoints(self):
        return (float(circle.wrap(self.anchor + self.lo)),
                float(circle.wrap(self.anchor + self.hi)))

    def contains(self, theta):
        d = np.mod(np.asarray(theta, dtype=float) - (self.anchor + self.lo),
                   circle.HALF_TURN)
        # a point one rounding step below lo wraps to just under a half
        # turn; fold it back so the slack covers both endpoints
        d = np.where(d > circle.HALF_TURN - 1e-12, d - circle.HALF_TURN, d)
        return d <= self.length + 1e-12


def stationary_interval(trace, t, y=None, lookahead=None):
    """The arc around x_t excluding the half-distance ball at the stable line.

    ``y`` may be passed when stable coordinates were already computed for
    the whole window; otherwise the stable line is estimated here.
    """
    k = trace.index(t)
    x = float(trace.x[k])
    if y is None:
        y = oseledets_stable_line(trace, t, lookahead=lookahead).coordinate
    y = float(y)
    rho = float(circle.distance(x, y))
    if rho < 1e-12:
        raise DegenerateFiberPair(f"x and y coincide at time {t} (distance {rho:.2e})")
    start = y + rho / 2.0  # forward endpoint of the excluded ball
    lo = -float(np.mod(x - start, circle.HALF_TURN))
    return Arc(anchor=x, lo=lo, hi=lo + (circle.HALF_TURN - rho))


def push_arc(cmap, arc):
    """Image of an arc under one circle map, anchored offsets throughout."""
    d1 = cmap.map_offset(arc.anchor, arc.lo)
    d2 = cmap.map_offset(arc.anchor, arc.hi)
    lo, hi = (d1, d2) if d1 <= d2 else (d2, d1)
    return Arc(anchor=cmap(arc.anchor), lo=lo, hi=hi)


def interval_pullforward(trace, n, y=None, lookahead=None):
    """Image at time 0 of the stationary interval at time -n.

    Applies the step maps T_{-n}, ..., T_{-1} to I_{-n}; the anchor rides
    at x, so the result contains x_0 by construction and the containment
    is asserted by the Arc invariant at every step.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    arc = stationary_interval(trace, -n, y=y, lookahead=lookahead)
    k = trace.index(-n)
    k0 = trace.index(0)
    for step in range(k, k0):
        arc = push_arc(trace.maps[step], arc)
    return arc


@dataclass(frozen=True, eq=False)
class IntervalDecayReport:
    n_grid: np.ndarray
    mean_log_length: np.ndarray
    slope: float
    slope_stderr: float
    replicas: int

    def summary(self):
        return (f"log length(J_n) slope {self.slope:.5f} "
                f"(stderr {self.slope_stderr:.5f}, {self.replicas} replicas)")


def interval_decay_curve(spec, fiber_index, n_grid, replicas, sampler,
                         burnin=1000, lookahead=900, tol=1e-2):
    """Mean log length of pulled-forward stationary intervals on a grid of n.

    Each replica runs one stationary window covering [-max n, lookahead]
    and contributes every grid point; the regression slope of the means
    should match the negative exponent gap.  Replicas whose future window
    cannot certify the stable line are dropped; the certificate involves
    only maps after time 0, so dropping them leaves the lengths unbiased.
    """
    n_grid = np.asarray(sorted(int(n) for n in n_grid))
    n_max = int(n_grid[-1])
    rows = []
    for r in range(replicas):
        child = sampler.child(r)
        trace = stationary_orbit(spec, fiber_index, n_max + lookahead, burnin,
                                 child, t_end=lookahead)
        try:
            times, y = stable_coordinates(trace, lookahead=lookahead, tol=tol)
        except GapTooSmall:
            continue
        row = np.empty(len(n_grid))
        for j, n in enumerate(n_grid):
            k = trace.index(-n)
            arc = stationary_interval(trace, -n, y=y[k])
            for step in range(k, trace.index(0)):
                arc = push_arc(trace.maps[step], arc)
            row[j] = np.log(arc.length)
        rows.append(row)
    if not rows:
        raise GapTooSmall(
            f"no replica of {replicas} certified a stable line at "
            f"lookahead {lookahead}")
    rows = np.asarray(rows)
    replicas = len(rows)
    mean = rows.mean(axis=0)
    t = n_grid.astype(float)
    slope, intercept = np.polyfit(t, mean, 1)
    resid = mean - (slope * t + intercept)
    denom = float(np.sum((t - t.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid ** 2) / max(len(t) - 2, 1) / denom))
    return IntervalDecayReport(n_grid=n_grid, mean_log_length=mean,
                               slope=float(slope), slope_stderr=stderr,
                               replicas=replicas)


def trace_to_csv(trace, path, y=None):
    """One row per time: n, log-det increments, x, optional y, step interval."""
    import csv as _csv

    d = trace.matrices.shape[-1]
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        header = ["n"] + [f"log_r_{i}" for i in range(1, d + 1)] + ["x", "y"]
        writer.writerow(header)
        for k, t in enumerate(trace.times):
            logs = ["" for _ in range(d)] if k >= len(trace.log_r) else \
                [repr(float(v)) for v in trace.log_r[k]]
            yv = "" if y is None or k >= len(y) else repr(float(y[k]))
            writer.writerow([int(t)] + logs + [repr(float(trace.x[k])), yv])
