"""Empirical measures on the fiber circle and their regularity queries.

An empirical measure is a sorted list of coordinates in [0, pi) with
positive weights summing to one.  Prefix sums make every arc-mass query a
pair of binary searches, which keeps the dimension fits and maximal
functions exact rather than binned.

Local dimension is reported as a least-squares slope of log mass against
log radius over a geometric radius grid; the liminf in the definition is
not estimable from finitely many samples, but when the underlying measure
is exact dimensional a single slope is the honest summary and the fit
residual plus the spread over base points quantify how believable it is.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import circle
from .errors import BandwidthTooSmall, InsufficientMass

MASS_FLOOR_COUNT = 10   # minimum expected sample count per usable radius level
MASS_CEILING = 0.9      # saturated balls carry no scaling information
MIN_FIT_LEVELS = 4
KDE_MIN_NEIGHBORS = 5


@dataclass(frozen=True, eq=False)
class EmpiricalCircleMeasure:
    """Weighted point samples on the circle of circumference pi."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = circle.wrap(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != w.shape or len(pts) == 0:
            raise ValueError("points and weights must be matching nonempty vectors")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum():.17g}, not 1")
        order = np.argsort(pts, kind="stable")
        pts, w = pts[order], w[order]
        prefix = np.concatenate([[0.0], np.cumsum(w)])
        prefix[-1] = 1.0
        for arr in (pts, w, prefix):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_prefix", prefix)

    @staticmethod
    def from_samples(samples):
        samples = np.asarray(samples, dtype=float).ravel()
        n = len(samples)
        return EmpiricalCircleMeasure(samples, np.full(n, 1.0 / n))

    def __len__(self):
        return len(self.points)

    def _segment_mass(self, lo, hi):
        """Mass of the closed unwrapped segment [lo, hi] inside [0, pi)."""
        a = np.searchsorted(self.points, lo, side="left")
        b = np.searchsorted(self.points, hi, side="right")
        return self._prefix[b] - self._prefix[a]

    def arc_mass(self, start, length):
        """Mass of the closed arc from ``start`` running ``length`` forward."""
        if length >= circle.HALF_TURN:
            return 1.0
        lo = float(circle.wrap(start))
        hi = lo + float(length)
        if hi < circle.HALF_TURN:
            return float(self._segment_mass(lo, hi))
        return float(self._segment_mass(lo, np.nextafter(circle.HALF_TURN, np.inf))
                     + self._segment_mass(0.0, hi - circle.HALF_TURN))

    def cdf(self, t):
        """Mass of [0, t]; staircase in t."""
        b = np.searchsorted(self.points, t, side="right")
        return self._prefix[b]


def ball_mass(m, x, r):
    """Mass of the closed ball of radius r around x; monotone in r.

    ``r`` may be an array; balls of radius >= pi/2 cover the circle.
    """
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    out = np.empty(len(r))
    for k, rk in enumerate(r):
        if rk >= circle.HALF_TURN / 2:
            out[k] = 1.0
        else:
            out[k] = m.arc_mass(float(x) - rk, 2.0 * rk)
    return float(out[0]) if scalar else out


def default_radius_grid(r_max=np.pi / 8, ratio=2.0, levels=12):
    """Geometric radii r_max, r_max/ratio, ...; largest first."""
    return r_max / ratio ** np.arange(levels)


@dataclass(frozen=True, eq=False)
class DimensionEstimate:
    point: float
    slope: float
    r_range: tuple
    residual: float
    mass_floor_hit: bool
    levels_used: int


def local_dimension(m, x, r_grid=None):
    """Least-squares slope of log ball mass against log radius at x.

    Levels whose mass falls below the floor of 10 samples' worth are
    dropped (small-count masses are binomial noise), as are levels whose
    ball already holds nearly all the mass (saturation flattens the
    slope); fewer than four surviving levels is an InsufficientMass
    error, not a number.
    """
    if r_grid is None:
        r_grid = default_radius_grid()
    r_grid = np.asarray(r_grid, dtype=float)
    if len(r_grid) < 8:
        raise ValueError("radius grid needs at least 8 levels")
    ratios = r_grid[:-1] / r_grid[1:]
    if np.any(r_grid <= 0) or np.ptp(ratios) > 1e-9 * ratios[0]:
        raise ValueError("radius grid must be geometric and positive")
    masses = ball_mass(m, x, r_grid)
    floor = MASS_FLOOR_COUNT / len(m)
    keep = (masses > floor) & (masses <= MASS_CEILING)
    if keep.sum() < MIN_FIT_LEVELS:
        if np.all(masses > MASS_CEILING) and np.ptp(masses) < 1e-12:
            # every ball holds the same near-total mass: an atom cluster at
            # x swallowing the whole grid, and a flat mass curve has slope 0
            return DimensionEstimate(
                point=float(circle.wrap(x)), slope=0.0,
                r_range=(float(r_grid.min()), float(r_grid.max())),
                residual=0.0, mass_floor_hit=False, levels_used=int(len(r_grid)))
        raise InsufficientMass(
            f"only {int(keep.sum())} of {len(r_grid)} levels between mass floor "
            f"{floor:.2e} and ceiling {MASS_CEILING}")
    lr = np.log(r_grid[keep])
    lm = np.log(masses[keep])
    slope, intercept = np.polyfit(lr, lm, 1)
    fit = slope * lr + intercept
    residual = float(np.sqrt(np.mean((lm - fit) ** 2)))
    return DimensionEstimate(
        point=float(circle.wrap(x)),
        slope=float(slope),
        r_range=(float(r_grid[keep].min()), float(r_grid[keep].max())),
        residual=residual,
        mass_floor_hit=bool((masses <= floor).any()),
        levels_used=int(keep.sum()),
    )


def max_cluster_weight(m, eps):
    """Largest mass carried by any closed arc of length eps.

    For an empirical measure the supremum over arcs is attained by an arc
    whose left endpoint is a sample point, so the sweep is exact.
    """
    if eps >= circle.HALF_TURN:
        return 1.0
    best = 0.0
    for theta in m.points:
        best = max(best, m.arc_mass(theta, eps))
    return float(best)


@dataclass(frozen=True)
class NonatomicityReport:
    resolution: float
    sizes: tuple
    cluster_weights: tuple

    @property
    def decreasing(self):
        w = self.cluster_weights
        return all(b <= a * 1.05 + 1e-12 for a, b in zip(w, w[1:]))

    @property
    def final_weight(self):
        return self.cluster_weights[-1]


def nonatomicity_diagnostic(measures, resolution=1e-3):
    """Max cluster weight at a fixed resolution across growing sample sizes.

    A persistent heavy cluster as samples grow is the signature of an atom;
    entropy estimators use this to refuse rather than average garbage.
    """
    measures = list(measures)
    if not measures:
        raise ValueError("need at least one measure")
    sizes = tuple(len(m) for m in measures)
    weights = tuple(max_cluster_weight(m, resolution) for m in measures)
    return NonatomicityReport(resolution=float(resolution), sizes=sizes,
                              cluster_weights=weights)


def maximal_function(f, m, x):
    """Supremum over arcs containing x of the arc average of f.

    ``f`` gives one nonnegative value per sample point of m.  Endpoints
    range over sample points (the supremum for an empirical measure is
    attained there); singleton arcs are included, so the value dominates
    f at any atom of positive weight.
    """
    f = np.asarray(f, dtype=float)
    n = len(m)
    if f.shape != (n,):
        raise ValueError("f must assign one value to each sample point")
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    pts = m.points
    w = m.weights
    fw = f * w
    cw = np.cumsum(w)
    cfw = np.cumsum(fw)
    x = float(circle.wrap(x))
    # offset of x and of every endpoint ahead of every start, mod pi
    off_x = np.mod(x - pts, circle.HALF_TURN)[:, None]          # (start, 1)
    off_end = np.mod(pts[None, :] - pts[:, None], circle.HALF_TURN)
    contains = off_end >= off_x - 1e-15
    # arc mass/integral from start a to end b inclusive; ends with smaller
    # index wrap past pi and pick up the full total once
    mass = cw[None, :] - cw[:, None] + w[:, None]
    integ = cfw[None, :] - cfw[:, None] + fw[:, None]
    below = np.arange(n)[None, :] < np.arange(n)[:, None]
    mass = np.where(below, 1.0 + mass, mass)
    integ = np.where(below, float(fw.sum()) + integ, integ)
    ratios = np.where(contains, integ / mass, -np.inf)
    return float(ratios.max())


def kde_density(m, x, bandwidth):
    """Wrapped triangular kernel density of m at x, against arc length.

    Raises BandwidthTooSmall when fewer than 5 sample points lie within one
    bandwidth of x (the estimate would be dominated by single samples).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = float(bandwidth)
    if not 0 < h < circle.HALF_TURN / 2:
        raise ValueError("bandwidth must lie in (0, pi/2)")
    out = np.empty(len(x))
    for k, xk in enumerate(x):
        d = circle.distance(m.points, xk)
        inside = d < h
        count = int(np.count_nonzero(inside))
        if count < KDE_MIN_NEIGHBORS:
            raise BandwidthTooSmall(
                f"{count} samples within bandwidth {h:g} of {float(xk):.6f}")
        out[k] = np.sum(m.weights[inside] * (1.0 - d[inside] / h)) / h
    return out if out.size > 1 else float(out[0])


def neighbor_counts(m, x, bandwidth):
    """Number of sample points within one bandwidth of each query point.

    Matches the count kde_density gates on; vectorized so callers can screen
    large candidate sets before committing to kernel evaluations.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = float(bandwidth)
    pts = m.points
    ext = np.concatenate([pts, pts + circle.HALF_TURN, pts + 2 * circle.HALF_TURN])
    q = circle.wrap(x) + circle.HALF_TURN
    lo = np.searchsorted(ext, q - h, side="right")
    hi = np.searchsorted(ext, q + h, side="left")
    return hi - lo


def density_ratio(m1, m2, bandwidth=0.05):
    """Pointwise ratio of the two kernel density estimates (shared bandwidth)."""
    def ratio(x):
        return kde_density(m1, x, bandwidth) / kde_density(m2, x, bandwidth)
    return ratio


def wasserstein_circle(m1, m2):
    """Exact 1-Wasserstein distance between two circle measures.

    On the circle the optimal transport shifts the CDF difference by its
    length-weighted median; the distance is the integral of the recentered
    difference.
    """
    grid = np.union1d(m1.points, m2.points)
    seg = np.diff(np.concatenate([grid, [grid[0] + circle.HALF_TURN]]))
    d = m1.cdf(grid) - m2.cdf(grid)
    order = np.argsort(d, kind="stable")
    csum = np.cumsum(seg[order])
    k = min(int(np.searchsorted(csum, csum[-1] / 2.0)), len(grid) - 1)
    median = d[order][k]
    return float(np.sum(seg * np.abs(d - median)))


def kolmogorov_uniform_distance(m):
    """Sup distance between the CDF of m and the uniform CDF."""
    t = m.points
    above = np.abs(m.cdf(t) - t / circle.HALF_TURN)
    below = np.abs((m.cdf(t) - m.weights) - t / circle.HALF_TURN)
    return float(max(above.max(), below.max()))


def to_csv(m, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "weight"])
        for t, w in zip(m.points, m.weights):
            writer.writerow([repr(float(t)), repr(float(w))])


def from_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["theta", "weight"]:
        raise ValueError(f"{path}: expected a theta,weight header")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return EmpiricalCircleMeasure(data[:, 0], data[:, 1])
