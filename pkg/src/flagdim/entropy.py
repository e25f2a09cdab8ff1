"""Fiber entropy estimation and the two theorem-level reports.

The fiber entropy kappa_i is the mean log density of the pushed conditional
fiber measure against the conditional measure at the image flag.  Neither
measure has a closed form, so both are realized empirically by the same
trick: pin the recent past of a realization, resample the remote past from
a pool of stationary flags, and read off where each resampled history puts
the missing subspace inside the reference fiber.  Convergence in the pin
length is a reported diagnostic (Wasserstein distance between full- and
half-pin versions), not an assumption.

Two independent estimators must agree:

- density route: push the time-0 conditional sample through one more
  matrix and compare kernel densities against the time-1 conditional at
  points of the pushed sample (the realized coordinate x_1 is one of
  them; the others have the same conditional law and shrink the variance).
- interval route: pull the stationary interval at time -n forward and
  compare its conditional mass at both ends; replicas whose interval
  carries less than half the conditional mass at time -n are filtered
  out, and that acceptance rate is part of the result.

Estimators refuse (rather than return noise) when fibers are atomic or
when the stable line needed by the interval route cannot be certified
on a non-isometric system.

Pin length matters in both directions: too short and the reference fiber
is not pinned down across tails, too long and the resampled coordinate
collapses below the working resolution (the fiber synchronizes at rate
gap_i, so gap_i * M should stay around one while the other gaps pin the
base).  The defaults suit the benchmark ensembles; M is a parameter
everywhere.
"""

from dataclasses import dataclass, field

import numpy as np

from . import circle
from .dynamics import (Arc, batched_orthonormalize, circle_map_between,
                       forward_orbit, lyapunov_spectrum, push_arc, push_flags,
                       stable_coordinates, stationary_flag_pool,
                       stationary_interval)
from .ensemble import SeededSampler, sample_batch
from .errors import (AtomicFiber, BandwidthTooSmall, DegenerateFiberPair,
                     GapTooSmall, HypothesisNotMet, InsufficientMass,
                     NoAcceptedReplicas)
from .flagcore import Flag, partial_flag
from .measures import (KDE_MIN_NEIGHBORS, EmpiricalCircleMeasure,
                       default_radius_grid, kde_density, local_dimension,
                       max_cluster_weight, neighbor_counts,
                       wasserstein_circle)

ATOM_RESOLUTION = 1e-6
ATOM_THRESHOLD = 0.5


def _screened(candidates, measures, bandwidth):
    """Candidates with enough neighbors under every measure to query a KDE.

    Held-out query points are a variance reduction device; isolated tail
    points would trip the kernel's neighbor gate without adding signal,
    so they are dropped up front.  Mandatory queries are never screened.
    """
    ok = np.ones(len(candidates), dtype=bool)
    for m in measures:
        ok &= neighbor_counts(m, candidates, bandwidth) >= KDE_MIN_NEIGHBORS
    return candidates[ok]


def _default_pin(spec, pin_length):
    """Resolve a None pin length: 0 when the partial flag is trivial.

    For d = 2 the partial flag carries no data, the disintegration is the
    stationary measure itself, and a pin would condition the fiber on a
    recent past the definition does not condition on.
    """
    if pin_length is not None:
        return int(pin_length)
    return 0 if spec.dim == 2 else 60


def _fiber_coordinates(bases, reference):
    """Coordinates of each base's missing subspace in the reference frame.

    The tail replicas carry their own full flags; their i-th basis vectors
    are read in the single reference fiber frame, which is what makes the
    replicas one empirical measure rather than many.
    """
    i = reference.missing
    u, w = reference.frame
    b = bases[:, :, i - 1]
    return np.mod(np.arctan2(b @ w, b @ u), circle.HALF_TURN)


def _atomic_gate(coords, context):
    """Refuse when half and full samples agree on a dominant atom."""
    full = EmpiricalCircleMeasure.from_samples(coords)
    half = EmpiricalCircleMeasure.from_samples(coords[: max(2, len(coords) // 2)])
    wf = max_cluster_weight(full, ATOM_RESOLUTION)
    wh = max_cluster_weight(half, ATOM_RESOLUTION)
    if wf > ATOM_THRESHOLD and wh > ATOM_THRESHOLD:
        raise AtomicFiber(
            f"{context}: cluster of weight {wf:.3f} at resolution "
            f"{ATOM_RESOLUTION:g} persists across sample sizes")


def _realization(spec, pin_length, sampler, burnin):
    """One pinned recent past and the flag it produces.

    Returns (pinned matrices, flag at the pin's end); the preceding burn-in
    approximates a stationary start.
    """
    mats = sample_batch(spec, sampler, burnin + pin_length)
    base = np.eye(spec.dim)
    for a in mats:
        base, _ = batched_orthonormalize(a @ base)
    return mats[burnin:], Flag(base)


@dataclass(frozen=True, eq=False)
class ConditionalFiberSample:
    fiber_index: int
    pin_length: int
    tail_replicas: int
    measure: EmpiricalCircleMeasure
    diagnostic: float   # Wasserstein distance between full- and half-pin versions
    reference: object


def conditional_fiber_sample(spec, fiber_index, pin_length=None,
                             tail_replicas=10_000, sampler=None,
                             tail_burnin=300, realization_burnin=1000,
                             pinned=None, reference=None, pool=None,
                             convergence_tol=None):
    """Empirical conditional measure on the fiber over one partial flag.

    All tail replicas share the pinned recent past and differ in the
    remote past.  When ``pinned``/``reference`` are given (an (M, d, d)
    array and a PartialFlag) the realization step is skipped; ``pool``
    likewise reuses stationary tail flags across calls.
    ``pin_length=None`` resolves to 0 when d = 2 and 60 otherwise (a
    trivial partial flag needs no pin).

    The diagnostic is always reported; when ``convergence_tol`` is given
    a diagnostic above it raises GapTooSmall (the pin did not determine
    the fiber measure).
    """
    sampler = sampler or SeededSampler(0)
    pin_length = _default_pin(spec, pin_length)
    if pinned is None:
        pinned, f_end = _realization(spec, pin_length, sampler.child(0),
                                     realization_burnin)
        reference = partial_flag(f_end, fiber_index)
    else:
        pinned = np.asarray(pinned, dtype=float)
        if reference is None:
            raise ValueError("a reference partial flag must accompany a pinned past")
    if pool is None:
        pool = stationary_flag_pool(spec, tail_replicas, tail_burnin,
                                    sampler.child(1))
    coords = _fiber_coordinates(push_flags(pinned, pool), reference)
    half = _fiber_coordinates(push_flags(pinned[len(pinned) // 2:], pool),
                              reference)
    diag = wasserstein_circle(EmpiricalCircleMeasure.from_samples(coords),
                              EmpiricalCircleMeasure.from_samples(half))
    if convergence_tol is not None and diag > convergence_tol:
        raise GapTooSmall(
            f"half-pin diagnostic {diag:.4f} exceeds {convergence_tol:g}; "
            f"pin length {len(pinned)} does not determine the fiber measure")
    return ConditionalFiberSample(
        fiber_index=fiber_index, pin_length=int(len(pinned)),
        tail_replicas=len(pool),
        measure=EmpiricalCircleMeasure.from_samples(coords),
        diagnostic=float(diag), reference=reference)


@dataclass(frozen=True, eq=False)
class KappaEstimate:
    kappa: float
    stderr: float
    method: str
    fiber_index: int
    diagnostics: dict = field(default_factory=dict)

    def summary(self):
        extra = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in sorted(self.diagnostics.items()))
        return (f"kappa[{self.fiber_index}] = {self.kappa:.5f} "
                f"+- {self.stderr:.5f} ({self.method}; {extra})")


def kappa_density_estimator(spec, fiber_index, pin_length=None,
                            tail_replicas=10_000, orbit_samples=100,
                            bandwidth=0.05, sampler=None, tail_burnin=300,
                            realization_burnin=1000, eval_points=64,
                            convergence_tol=None):
    """Entropy via kernel density ratios of pushed conditional samples.

    Per orbit sample: pin a fresh recent past, build the conditional
    measures at times 0 and 1 from two independent tail pools, push the
    time-0 sample through the realized matrix, and average the log density
    ratio at points of the pushed sample (x_1 together with held-out
    pushed points, which share its conditional law).  Each density is
    built from half the points and evaluated on the other half, so no
    query sits on its own kernel.  Independence of the two pools matters:
    with a shared pool the pushed and target samples coincide pointwise
    and the ratio degenerates to one.

    x_1 is itself one more draw from the conditional, so a small fraction
    of realizations put it where the sample is too thin for the kernel's
    neighbor gate (tail mass of order the gate count over the pool size).
    Those realizations are skipped and counted; when more than a tenth of
    them skip, the bandwidth undersamples the ensemble as such and the
    estimator raises BandwidthTooSmall instead of censoring its way to a
    number.

    ``pin_length=None`` resolves to 0 when d = 2 and 60 otherwise: a
    trivial partial flag means the conditional measure is the stationary
    measure itself and any pin would condition on more than the flag.
    """
    sampler = sampler or SeededSampler(0)
    pin_length = _default_pin(spec, pin_length)
    i = fiber_index
    pool0 = stationary_flag_pool(spec, tail_replicas, tail_burnin, sampler.child(1))
    pool1 = stationary_flag_pool(spec, tail_replicas, tail_burnin, sampler.child(2))
    kappas = []
    skipped = 0
    diag = None
    for r in range(orbit_samples):
        child = sampler.child(10, r)
        pin0, f0 = _realization(spec, pin_length, child, realization_burnin)
        a0 = sample_batch(spec, child, 1)[0]
        q1, _ = batched_orthonormalize(a0 @ f0.basis)
        f1 = Flag(q1)
        p0 = partial_flag(f0, i)
        p1 = partial_flag(f1, i)
        tmap = circle_map_between(a0, p0, p1)
        b = f1.basis[:, i - 1]
        u, w = p1.frame
        x1 = float(np.mod(np.arctan2(b @ w, b @ u), circle.HALF_TURN))
        tail = np.concatenate([pin0, a0[None]], axis=0)
        pin1 = tail[len(tail) - pin_length:]
        coords0 = _fiber_coordinates(push_flags(pin0, pool0), p0)
        coords1 = _fiber_coordinates(push_flags(pin1, pool1), p1)
        if r == 0:
            _atomic_gate(coords1, f"{spec.name} fiber {i}")
            half = _fiber_coordinates(
                push_flags(pin1[len(pin1) // 2:], pool1), p1)
            diag = wasserstein_circle(
                EmpiricalCircleMeasure.from_samples(coords1),
                EmpiricalCircleMeasure.from_samples(half))
            if convergence_tol is not None and diag > convergence_tol:
                raise GapTooSmall(
                    f"half-pin diagnostic {diag:.4f} exceeds {convergence_tol:g}")
        pushed_all = tmap(coords0)
        pushed = EmpiricalCircleMeasure.from_samples(pushed_all[::2])
        target = EmpiricalCircleMeasure.from_samples(coords1[::2])
        if len(_screened(np.array([x1]), (pushed, target), bandwidth)) == 0:
            skipped += 1
            continue
        held_out = _screened(pushed_all[1::2], (pushed, target), bandwidth)
        take = min(eval_points, len(held_out))
        queries = np.concatenate(
            [[x1], child.rng.choice(held_out, size=take, replace=False)]
        ) if take else np.array([x1])
        vals = (np.log(kde_density(pushed, queries, bandwidth))
                - np.log(kde_density(target, queries, bandwidth)))
        kappas.append(vals.mean())
    if skipped > 0.1 * orbit_samples or not kappas:
        raise BandwidthTooSmall(
            f"{skipped} of {orbit_samples} realizations put x_1 where "
            f"fewer than {KDE_MIN_NEIGHBORS} of {tail_replicas // 2} samples "
            f"sit within bandwidth {bandwidth:g}")
    kappas = np.asarray(kappas)
    return KappaEstimate(
        kappa=float(kappas.mean()),
        stderr=float(kappas.std(ddof=1) / np.sqrt(len(kappas))),
        method="density", fiber_index=i,
        diagnostics={"effective_samples": len(kappas),
                     "undersampled_skips": skipped,
                     "eval_points": eval_points, "bandwidth": bandwidth,
                     "pin_length": pin_length, "tail_replicas": tail_replicas,
                     "pin_diagnostic": float(diag)})


def _isometric_fiber_action(trace):
    """True when every step's fiber map has unit metric derivative."""
    logs = [abs(np.log(m.derivative(float(x))))
            for m, x in zip(trace.maps, trace.x[:-1])]
    return max(logs) < 1e-9


def kappa_interval_estimator(spec, fiber_index, n=100, replicas=100,
                             sampler=None, pin_length=None, tail_replicas=10_000,
                             tail_burnin=300, realization_burnin=1000,
                             lookahead=600, stable_tol=0.05):
    """Entropy via conditional masses of pulled-forward stationary intervals.

    kappa_r = (log mass_{-n}(I_{-n}) - log mass_0(J_n)) / n over replicas
    whose interval carries at least half the conditional mass at time -n.
    The masses at the two times use independent tail pools (a shared pool
    would make the two masses equal by construction).  Replicas whose
    image interval captures no tail sample are dropped and reported; when
    many are, the expected count R exp(-kappa n) is too small and n
    should shrink.

    ``pin_length=None`` resolves to 0 here, for every dimension.  A time-0
    pin necessarily overlaps the measurement window, and along the overlap
    the shared composed fiber map cancels between the image interval and
    the pushed pool, so those steps stop contributing and the estimate
    reads roughly kappa (n - M) / n (measured: M = 60 recovers about half
    of the M = 0 value at n = 100).  With no pin the image interval probes
    the unconditioned fiber-coordinate measure, which scales like the
    conditionals do at the interval's scale; the residual bias is the
    O(1/n) local-density offset shared with every interval method.

    Isometric fiber actions have no stable line; there any fixed arc is
    mass-preserved in law, so one anchored at x substitutes and the
    estimator correctly reads ~0.  Non-isometric replicas whose future
    window cannot certify the stable line are dropped and counted; the
    certificate depends only on maps after time 0, so the drop is
    independent of the masses measured on [-n, 0].
    """
    sampler = sampler or SeededSampler(0)
    pin_length = 0 if pin_length is None else int(pin_length)
    i = fiber_index
    pool_a = stationary_flag_pool(spec, tail_replicas, tail_burnin, sampler.child(1))
    pool_b = stationary_flag_pool(spec, tail_replicas, tail_burnin, sampler.child(2))
    accepted = []
    rejected = 0
    zero_mass = 0
    degenerate = 0
    unresolved = 0
    diag = None
    for r in range(replicas):
        child = sampler.child(10, r)
        burn = sample_batch(spec, child, realization_burnin + pin_length)
        base = np.eye(spec.dim)
        for a in burn:
            base, _ = batched_orthonormalize(a @ base)
        pin_minus = burn[len(burn) - pin_length:]
        trace = forward_orbit(spec, Flag(base), n + lookahead, child,
                              fiber_index=i, t0=-n)
        try:
            _, y = stable_coordinates(trace, lookahead=lookahead, tol=stable_tol)
            interval = stationary_interval(trace, -n, y=y[0])
        except GapTooSmall:
            if not _isometric_fiber_action(trace):
                unresolved += 1
                continue
            interval = Arc(anchor=float(trace.x[0]),
                           lo=-0.4 * circle.HALF_TURN, hi=0.4 * circle.HALF_TURN)
        except DegenerateFiberPair:
            degenerate += 1
            continue
        arc = interval
        for step in range(trace.index(-n), trace.index(0)):
            arc = push_arc(trace.maps[step], arc)
        ref_minus = trace.partials[trace.index(-n)]
        coords_minus = _fiber_coordinates(push_flags(pin_minus, pool_a), ref_minus)
        if r == 0:
            _atomic_gate(coords_minus, f"{spec.name} fiber {i}")
            half = _fiber_coordinates(
                push_flags(pin_minus[pin_length // 2:], pool_a), ref_minus)
            diag = wasserstein_circle(
                EmpiricalCircleMeasure.from_samples(coords_minus),
                EmpiricalCircleMeasure.from_samples(half))
        m_minus = EmpiricalCircleMeasure.from_samples(coords_minus)
        mass_i = m_minus.arc_mass(interval.anchor + interval.lo, interval.length)
        if mass_i < 0.5:
            rejected += 1
            continue
        seq = np.concatenate([burn, trace.matrices], axis=0)
        cut = len(burn) + n
        pin_zero = seq[cut - pin_length: cut]
        ref_zero = trace.partials[trace.index(0)]
        coords_zero = _fiber_coordinates(push_flags(pin_zero, pool_b), ref_zero)
        m_zero = EmpiricalCircleMeasure.from_samples(coords_zero)
        mass_j = m_zero.arc_mass(arc.anchor + arc.lo, arc.length)
        if mass_j <= 0:
            zero_mass += 1
            continue
        accepted.append((np.log(mass_i) - np.log(mass_j)) / n)
    if not accepted:
        raise NoAcceptedReplicas(
            f"all {replicas} replicas rejected (mass filter {rejected}, "
            f"empty image {zero_mass}, degenerate {degenerate}, "
            f"unresolved stable line {unresolved})")
    accepted = np.asarray(accepted)
    stderr = (float(accepted.std(ddof=1) / np.sqrt(len(accepted)))
              if len(accepted) > 1 else float("inf"))
    return KappaEstimate(
        kappa=float(accepted.mean()), stderr=stderr,
        method="interval", fiber_index=i,
        diagnostics={"effective_samples": len(accepted), "n": n,
                     "acceptance_rate": len(accepted) / replicas,
                     "mass_filter_rejections": rejected,
                     "empty_image_replicas": zero_mass,
                     "degenerate_replicas": degenerate,
                     "unresolved_replicas": unresolved,
                     "pin_diagnostic": float(diag)})


def furstenberg_entropy_d2(spec, tail_replicas=10_000, orbit_samples=200,
                           bandwidth=0.05, sampler=None, burnin=1000,
                           thinning=5, eval_points=64):
    """d = 2 specialization: the fiber is the whole projective line.

    The stationary measure is sampled once from a long thinned orbit (no
    conditioning; the partial flag is trivial for d = 2); each evaluation
    pushes it through a fresh matrix and averages the log density ratio
    over the orbit's own next coordinate plus held-out pushed points,
    which share its law.  Densities come from the even half of the
    sample, queries from the odd half, so no query sits on its own
    kernel.
    """
    if spec.dim != 2:
        raise ValueError("the shortcut applies to d = 2 only")
    sampler = sampler or SeededSampler(0)
    child = sampler.child(3)
    v = np.array([1.0, 0.0])
    for a in sample_batch(spec, child, burnin):
        v = a @ v
        v /= np.linalg.norm(v)
    samples = np.empty(tail_replicas)
    mats = sample_batch(spec, child, tail_replicas * thinning)
    for k in range(tail_replicas):
        for a in mats[k * thinning: (k + 1) * thinning]:
            v = a @ v
            v /= np.linalg.norm(v)
        samples[k] = np.arctan2(v[1], v[0])
    samples = np.mod(samples, circle.HALF_TURN)
    _atomic_gate(samples, f"{spec.name} stationary measure")
    nu = EmpiricalCircleMeasure.from_samples(samples[::2])
    base = circle.unit_vector(samples)
    vals = np.empty(orbit_samples)
    eval_mats = sample_batch(spec, child, orbit_samples * thinning)
    x = float(np.mod(np.arctan2(v[1], v[0]), circle.HALF_TURN))
    for k in range(orbit_samples):
        a = eval_mats[k * thinning]
        img = base @ a.T
        ang = np.mod(np.arctan2(img[:, 1], img[:, 0]), circle.HALF_TURN)
        pushed = EmpiricalCircleMeasure.from_samples(ang[::2])
        xv = a @ np.array([np.cos(x), np.sin(x)])
        x_next = float(np.mod(np.arctan2(xv[1], xv[0]), circle.HALF_TURN))
        held_out = _screened(ang[1::2], (pushed, nu), bandwidth)
        take = min(eval_points, len(held_out))
        queries = np.concatenate(
            [[x_next], child.rng.choice(held_out, size=take, replace=False)]
        ) if take else np.array([x_next])
        vals[k] = np.mean(np.log(kde_density(pushed, queries, bandwidth))
                          - np.log(kde_density(nu, queries, bandwidth)))
        x = x_next
        for a in eval_mats[k * thinning + 1: (k + 1) * thinning]:
            xv = a @ np.array([np.cos(x), np.sin(x)])
            x = float(np.mod(np.arctan2(xv[1], xv[0]), circle.HALF_TURN))
    return KappaEstimate(
        kappa=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / np.sqrt(orbit_samples)),
        method="furstenberg_d2", fiber_index=1,
        diagnostics={"effective_samples": orbit_samples,
                     "bandwidth": bandwidth, "eval_points": eval_points,
                     "tail_replicas": tail_replicas, "thinning": thinning})


def conditional_independence_diagnostic(spec, fiber_index, pin_length=50,
                                        replicas=200, sampler=None,
                                        tail_burnin=300, future_steps=400):
    """Correlation between past-determined x and future-determined y.

    Replicas share the pinned recent past (pinning the reference fiber)
    but draw independent remote pasts and independent futures.  Under the
    conditional independence statement the correlation between the two
    fiber coordinates drops as the pin grows; reported as the largest
    absolute correlation between the doubled-angle embeddings.
    """
    sampler = sampler or SeededSampler(0)
    i = fiber_index
    pinned = sample_batch(spec, sampler.child(0), pin_length)
    pool = stationary_flag_pool(spec, replicas, tail_burnin, sampler.child(1))
    bases = push_flags(pinned, pool)
    xs = np.empty(replicas)
    ys = np.empty(replicas)
    for r in range(replicas):
        f = Flag(bases[r])
        p = partial_flag(f, i)
        u, w = p.frame
        b = f.basis[:, i - 1]
        xs[r] = np.mod(np.arctan2(b @ w, b @ u), circle.HALF_TURN)
        trace = forward_orbit(spec, f, future_steps, sampler.child(2, r),
                              fiber_index=i)
        _, y = stable_coordinates(trace, lookahead=future_steps, tol=None)
        ys[r] = y[0]
    ex = np.stack([np.cos(2 * xs), np.sin(2 * xs)])
    ey = np.stack([np.cos(2 * ys), np.sin(2 * ys)])
    rho = 0.0
    for a in ex:
        for b in ey:
            if a.std() > 1e-12 and b.std() > 1e-12:
                rho = max(rho, abs(float(np.corrcoef(a, b)[0, 1])))
    return {"pin_length": pin_length, "replicas": replicas,
            "max_abs_corr": rho}


@dataclass(frozen=True, eq=False)
class GapRow:
    fiber_index: int
    kappa: float
    kappa_stderr: float
    gap: float
    gap_stderr: float

    @property
    def bound_satisfied(self):
        slack = 2.0 * float(np.hypot(self.kappa_stderr, self.gap_stderr))
        return self.kappa <= self.gap + slack

    @property
    def zero_consistent(self):
        return abs(self.kappa) <= 2.0 * self.kappa_stderr

    def line(self):
        verdict = "ok" if self.bound_satisfied else "VIOLATED"
        zero = " (consistent with invariance, kappa ~ 0)" if self.zero_consistent else ""
        return (f"fiber {self.fiber_index}: kappa = {self.kappa:.5f} "
                f"+- {self.kappa_stderr:.5f} <= gap = {self.gap:.5f} "
                f"+- {self.gap_stderr:.5f}: {verdict}{zero}")


@dataclass(frozen=True, eq=False)
class GapInequalityReport:
    spec_name: str
    spectrum: object
    rows: tuple
    agreement: dict    # fiber -> (density kappa, interval kappa, relative gap)

    @property
    def all_satisfied(self):
        return all(r.bound_satisfied for r in self.rows)

    def lines(self):
        out = [f"entropy/gap inequality on {self.spec_name}:"]
        out += ["  " + r.line() for r in self.rows]
        for i, (kd, ki, rel) in sorted(self.agreement.items()):
            out.append(f"  fiber {i}: density {kd:.5f} vs interval {ki:.5f} "
                       f"(relative difference {rel:.1%})")
        return out


def gap_inequality_report(spec, sampler=None, fiber_indices=None,
                          spectrum=None, spectrum_steps=20_000,
                          include_interval=False, density_kwargs=None,
                          interval_kwargs=None):
    """Entropy against exponent gap, fiber by fiber."""
    sampler = sampler or SeededSampler(0)
    if spectrum is None:
        spectrum = lyapunov_spectrum(spec, spectrum_steps, sampler=sampler.child(100))
    if fiber_indices is None:
        fiber_indices = range(1, spec.dim)
    density_kwargs = dict(density_kwargs or {})
    interval_kwargs = dict(interval_kwargs or {})
    rows = []
    agreement = {}
    for i in fiber_indices:
        kd = kappa_density_estimator(spec, i, sampler=sampler.child(200, i),
                                     **density_kwargs)
        rows.append(GapRow(fiber_index=i, kappa=kd.kappa, kappa_stderr=kd.stderr,
                           gap=spectrum.gap(i), gap_stderr=spectrum.gap_stderr(i)))
        if include_interval:
            ki = kappa_interval_estimator(spec, i, sampler=sampler.child(300, i),
                                          **interval_kwargs)
            scale = max(abs(kd.kappa), abs(ki.kappa), 1e-12)
            agreement[i] = (kd.kappa, ki.kappa, abs(kd.kappa - ki.kappa) / scale)
    return GapInequalityReport(spec_name=spec.name, spectrum=spectrum,
                               rows=tuple(rows), agreement=agreement)


@dataclass(frozen=True, eq=False)
class DimensionReport:
    spec_name: str
    fiber_index: int
    kappa: float
    kappa_stderr: float
    gap: float
    predicted: float      # kappa / gap
    mean_slope: float
    slope_iqr: float
    n_points: int
    skipped_points: int

    @property
    def relative_error(self):
        return abs(self.mean_slope - self.predicted) / max(abs(self.predicted), 1e-12)

    def lines(self):
        return [
            f"dimension of fiber measures on {self.spec_name}, fiber {self.fiber_index}:",
            f"  predicted kappa/gap = {self.kappa:.5f}/{self.gap:.5f} = {self.predicted:.4f}",
            f"  measured mean local slope = {self.mean_slope:.4f} "
            f"(IQR {self.slope_iqr:.4f}, {self.n_points} points, "
            f"{self.skipped_points} skipped)",
            f"  relative error {self.relative_error:.1%}",
        ]


def _slope_distribution(measure, rng, base_points, r_grid):
    slopes = []
    skipped = 0
    idx = rng.choice(len(measure.points),
                     size=min(base_points, len(measure.points)), replace=False)
    for k in idx:
        try:
            est = local_dimension(measure, float(measure.points[k]), r_grid)
        except InsufficientMass:
            skipped += 1
            continue
        slopes.append(est.slope)
    return np.asarray(slopes), skipped


def dimension_formula_report(spec, fiber_index, sampler=None, spectrum=None,
                             kappa=None, spectrum_steps=20_000,
                             base_points=200, r_grid=None,
                             stationary_samples=100_000, thinning=5,
                             density_kwargs=None, pin_realizations=6,
                             sample_kwargs=None, significance=2.0):
    """Local dimension of the fiber measures against kappa over gap.

    Refuses (HypothesisNotMet) when the entropy estimate is statistically
    indistinguishable from zero; a dimension number under a failed
    hypothesis would be noise with a confident face.

    For d = 2 the fiber measure is the stationary measure itself and
    kappa defaults to the unconditioned d = 2 estimator; for d >= 3 the
    slopes are taken on conditional samples across several pinned pasts.
    """
    sampler = sampler or SeededSampler(0)
    i = fiber_index
    if spectrum is None:
        spectrum = lyapunov_spectrum(spec, spectrum_steps, sampler=sampler.child(100))
    if kappa is None:
        if spec.dim == 2:
            kappa = furstenberg_entropy_d2(spec, sampler=sampler.child(200),
                                           **dict(density_kwargs or {}))
        else:
            kappa = kappa_density_estimator(spec, i, sampler=sampler.child(200, i),
                                            **dict(density_kwargs or {}))
    if kappa.kappa <= significance * kappa.stderr:
        raise HypothesisNotMet(
            f"kappa[{i}] = {kappa.kappa:.5f} +- {kappa.stderr:.5f} is not "
            "significantly positive; the dimension formula does not apply")
    gap = spectrum.gap(i)
    if gap <= 0:
        raise HypothesisNotMet(f"exponent gap at fiber {i} is not positive")
    if r_grid is None:
        r_grid = default_radius_grid()
    rng = sampler.child(400, i).rng
    if spec.dim == 2:
        child = sampler.child(500)
        v = np.array([1.0, 0.0])
        total = 1000 + stationary_samples * thinning
        mats = sample_batch(spec, child, total)
        pts = np.empty(stationary_samples)
        for t, a in enumerate(mats):
            v = a @ v
            v /= np.linalg.norm(v)
            k = t - 1000
            if k >= 0 and k % thinning == 0:
                pts[k // thinning] = np.arctan2(v[1], v[0])
        measure = EmpiricalCircleMeasure.from_samples(
            np.mod(pts, circle.HALF_TURN))
        slopes, skipped = _slope_distribution(measure, rng, base_points, r_grid)
    else:
        slopes = []
        skipped = 0
        per = max(8, base_points // pin_realizations)
        for k in range(pin_realizations):
            cs = conditional_fiber_sample(spec, i,
                                          sampler=sampler.child(600, i, k),
                                          **dict(sample_kwargs or {}))
            s, sk = _slope_distribution(cs.measure, rng, per, r_grid)
            slopes.append(s)
            skipped += sk
        slopes = np.concatenate(slopes)
    if len(slopes) < 8:
        raise HypothesisNotMet(
            f"only {len(slopes)} usable dimension fits (needed 8)")
    q25, q75 = np.percentile(slopes, [25, 75])
    return DimensionReport(
        spec_name=spec.name, fiber_index=i,
        kappa=kappa.kappa, kappa_stderr=kappa.stderr, gap=gap,
        predicted=kappa.kappa / gap,
        mean_slope=float(slopes.mean()), slope_iqr=float(q75 - q25),
        n_points=int(len(slopes)), skipped_points=int(skipped))
