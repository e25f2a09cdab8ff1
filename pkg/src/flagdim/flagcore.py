"""Linear algebra of flags and their one-dimensional fiber circles.

A complete flag in R^d is a nested chain of subspaces S_1 c ... c S_d with
dim S_i = i, stored as a single orthonormal matrix whose first i columns span
S_i.  Removing the i-dimensional subspace leaves a partial flag whose
compatible completions form a circle: the candidate S_i are the lines in the
2-plane between S_{i-1} and S_{i+1}, parameterized by an angle in [0, pi).

The key closed form is ``flag_jacobian``: the density at AF of the rotation
invariant fiber measure pushed through A, against the rotation invariant
measure on the image fiber,

    det_{S_i}(A)^2 / (det_{S_{i-1}}(A) * det_{S_{i+1}}(A)).

The metric derivative of the induced circle map at the coordinate of F is the
reciprocal of this value (pushing a measure forward divides its density by
the map's expansion rate).  ``CircleMap.derivative`` returns the metric
derivative; ``flag_jacobian`` returns the density.
"""

from dataclasses import dataclass, field

import numpy as np

from . import circle
from .errors import DegenerateBasis, ZeroVector

COND_CAP = 1e12          # invertibility threshold for maps and bases
ORTHO_TOL = 1e-10        # allowed deviation of basis^T basis from identity
_PROJ_TOL = 1e-8         # minimum projection norm in the completion rule


def orthonormalize(basis):
    """QR-orthonormalize columns, preserving every leading span.

    The triangular factor's diagonal is made positive, which pins the result
    uniquely; without a sign convention Q is only determined up to column
    flips and tests become gauge-dependent.
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
        raise DegenerateBasis(f"expected a square matrix, got shape {basis.shape}")
    if not np.all(np.isfinite(basis)):
        raise DegenerateBasis("basis contains non-finite entries")
    # cond of any leading column block is bounded by cond of the full matrix,
    # so one check covers every nested span.
    if np.linalg.cond(basis) > COND_CAP:
        raise DegenerateBasis(f"basis condition number exceeds {COND_CAP:g}")
    q, r = np.linalg.qr(basis)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


@dataclass(frozen=True, eq=False)
class LinearMap:
    """An invertible d x d real matrix."""

    entries: np.ndarray
    cond_cap: float = COND_CAP

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DegenerateBasis(f"expected a square matrix, got shape {entries.shape}")
        if entries.shape[0] < 2:
            raise DegenerateBasis("dimension must be at least 2")
        if not np.all(np.isfinite(entries)):
            raise DegenerateBasis("matrix contains non-finite entries")
        if np.linalg.cond(entries) > self.cond_cap:
            raise DegenerateBasis(f"matrix condition number exceeds {self.cond_cap:g}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self):
        return self.entries.shape[0]

    def __matmul__(self, other):
        if isinstance(other, LinearMap):
            return LinearMap(self.entries @ other.entries)
        return NotImplemented

    def inverse(self):
        return LinearMap(np.linalg.inv(self.entries))


@dataclass(frozen=True, eq=False)
class Flag:
    """A complete flag: orthonormal columns, first i of which span S_i."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        d = basis.shape[0]
        if basis.ndim != 2 or basis.shape != (d, d):
            raise DegenerateBasis(f"expected a square basis, got shape {basis.shape}")
        err = np.max(np.abs(basis.T @ basis - np.eye(d)))
        if not err < ORTHO_TOL:
            raise DegenerateBasis(f"basis is not orthonormal (deviation {err:.3e})")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self):
        return self.basis.shape[0]

    def subspace(self, i):
        """Orthonormal basis of S_i (d x i array)."""
        return self.basis[:, :i]

    @staticmethod
    def standard(d):
        return Flag(np.eye(d))

    @staticmethod
    def from_matrix(m):
        """Flag spanned by the leading column blocks of an arbitrary basis."""
        return Flag(orthonormalize(m))

    @staticmethod
    def random(d, rng):
        return Flag.from_matrix(rng.standard_normal((d, d)))


def act_flag(a, f):
    """Image flag with subspaces A(S_i)."""
    return Flag(orthonormalize(a.entries @ f.basis))


def det_on_subspace(a, f, i):
    """Volume scaling |det| of A restricted to S_i; 1 for i = 0."""
    if not 0 <= i <= f.dim:
        raise ValueError(f"subspace index {i} outside 0..{f.dim}")
    if i == 0:
        return 1.0
    r = np.linalg.qr(a.entries @ f.basis[:, :i], mode="r")
    return float(np.prod(np.abs(np.diag(r))))


def flag_jacobian(a, f, i):
    """Density at AF of the pushed fiber measure over the i-th partial flag.

    Equals det_{S_i}(A)^2 / (det_{S_{i-1}}(A) * det_{S_{i+1}}(A)), which
    telescopes to the ratio |r_i| / |r_{i+1}| of consecutive diagonal entries
    of the triangular factor of A * basis.
    """
    if not 1 <= i <= f.dim - 1:
        raise ValueError(f"fiber index {i} outside 1..{f.dim - 1}")
    r = np.abs(np.diag(np.linalg.qr(a.entries @ f.basis, mode="r")))
    return float(r[i - 1] / r[i])


def angle_between_lines(u, v):
    """Angle in [0, pi/2] between the lines spanned by u and v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        raise ZeroVector("cannot take the angle of a zero-length direction")
    c = abs(float(u @ v)) / (nu * nv)
    return float(np.arccos(min(c, 1.0)))


def _completion_pair(plane):
    """Deterministic orthonormal frame (u, w) of a 2-plane.

    Projects the standard basis vectors onto the plane in order and keeps the
    first two independent directions, each with its first significant
    component made positive.  The frame depends only on the plane, so fiber
    coordinates are reproducible across runs and code paths.
    """
    d = plane.shape[0]
    u = None
    for j in range(d):
        p = plane @ plane[j, :]
        if u is not None:
            p = p - (u @ p) * u
        n = np.linalg.norm(p)
        if n > _PROJ_TOL:
            p = p / n
            if u is not None:
                # small n amplifies roundoff; one more pass restores
                # orthogonality to machine precision
                p = p - (u @ p) * u
                p = p / np.linalg.norm(p)
            k = np.argmax(np.abs(p) > _PROJ_TOL)
            if p[k] < 0:
                p = -p
            if u is None:
                u = p
            else:
                return u, p
    raise DegenerateBasis("completion rule found no independent directions")


@dataclass(frozen=True, eq=False)
class PartialFlag:
    """A complete flag with its i-dimensional subspace removed.

    Columns [0, i-1) of ``basis`` span the surviving chain S_1 .. S_{i-1},
    columns i-1 and i are the completion frame (u, w) of the fiber plane
    inside S_{i+1}, and the remaining columns continue S_{i+2} .. S_d.
    ``missing`` is the 1-based dimension i of the removed subspace.
    """

    missing: int
    basis: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        d = basis.shape[0]
        if not 1 <= self.missing <= d - 1:
            raise DegenerateBasis(f"missing index {self.missing} outside 1..{d - 1}")
        err = np.max(np.abs(basis.T @ basis - np.eye(d)))
        if not err < ORTHO_TOL:
            raise DegenerateBasis(f"basis is not orthonormal (deviation {err:.3e})")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def frame(self):
        """The (u, w) frame of the fiber plane, as two d-vectors."""
        i = self.missing
        return self.basis[:, i - 1], self.basis[:, i]


def partial_flag(f, i):
    """Forget the i-dimensional subspace of a complete flag."""
    if not 1 <= i <= f.dim - 1:
        raise ValueError(f"fiber index {i} outside 1..{f.dim - 1}")
    u, w = _completion_pair(f.basis[:, i - 1 : i + 1])
    basis = np.column_stack([f.basis[:, : i - 1], u, w, f.basis[:, i + 1 :]])
    return PartialFlag(missing=i, basis=basis)


def fiber_embed(fi, theta):
    """Complete a partial flag with S_i at fiber coordinate theta."""
    u, w = fi.frame
    c, s = np.cos(theta), np.sin(theta)
    v = c * u + s * w
    vperp = -s * u + c * w
    i = fi.missing
    basis = np.column_stack([fi.basis[:, : i - 1], v, vperp, fi.basis[:, i + 1 :]])
    return Flag(basis)


def fiber_coordinate(f, i):
    """Position of S_i within the fiber circle over the rest of the flag."""
    fi = partial_flag(f, i)
    u, w = fi.frame
    b = f.basis[:, i - 1]
    return float(circle.wrap(np.arctan2(b @ w, b @ u)))


def act_partial(a, fi):
    """Image partial flag with subspaces A(S_j), j != missing."""
    q = orthonormalize(a.entries @ fi.basis)
    i = fi.missing
    u, w = _completion_pair(q[:, i - 1 : i + 1])
    basis = np.column_stack([q[:, : i - 1], u, w, q[:, i + 1 :]])
    return PartialFlag(missing=i, basis=basis)


@dataclass(frozen=True, eq=False)
class CircleMap:
    """The circle diffeomorphism a matrix induces between two fibers.

    In the source and target completion frames the map is projectivization
    of an invertible 2x2 matrix: theta apply-> angle of B (cos, sin).
    """

    source: PartialFlag
    target: PartialFlag
    matrix: np.ndarray
    _det: float = field(init=False, repr=False)
    _cond: float = field(init=False, repr=False)

    def __post_init__(self):
        b = np.array(self.matrix, dtype=float)
        det = float(b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0])
        if det == 0.0 or not np.isfinite(det):
            raise DegenerateBasis("induced fiber map is singular")
        b.setflags(write=False)
        object.__setattr__(self, "matrix", b)
        object.__setattr__(self, "_det", det)
        object.__setattr__(self, "_cond", float(np.linalg.cond(b)))

    def __call__(self, theta):
        v = circle.unit_vector(theta)
        y = v @ self.matrix.T
        out = circle.wrap(np.arctan2(y[..., 1], y[..., 0]))
        return float(out) if np.isscalar(theta) else out

    def derivative(self, theta):
        """Metric derivative |T'(theta)|; reciprocal of the fiber density."""
        v = circle.unit_vector(theta)
        y = v @ self.matrix.T
        out = abs(self._det) / np.sum(y * y, axis=-1)
        return float(out) if np.isscalar(theta) else out

    def map_offset(self, anchor, delta):
        """Signed image offset T(anchor + delta) - T(anchor), fully resolved.

        Returns the lift of the image displacement, so magnitudes below the
        angle resolution of the anchor's image survive (needed when interval
        lengths shrink like e^{-gap * n}).  The two-term closed form

            atan2(sin(d) det B, cos(d) |Bv|^2 + sin(d) <Bv, B v_perp>)

        is exact for |image offset| < pi/2; larger steps are subdivided,
        with the worst-case expansion rate cond(B) bounding each piece.
        """
        delta = float(delta)
        steps = int(np.ceil(abs(delta) * self._cond / 1.0)) + 1
        sub = delta / steps
        total = 0.0
        theta = float(anchor)
        for _ in range(steps):
            u = np.array([np.cos(theta), np.sin(theta)])
            bu = self.matrix @ u
            bup = self.matrix @ np.array([-u[1], u[0]])
            c, s = np.cos(sub), np.sin(sub)
            total += np.arctan2(s * self._det, c * (bu @ bu) + s * (bu @ bup))
            theta += sub
        return total

    def inverse(self):
        return CircleMap(
            source=self.target,
            target=self.source,
            matrix=np.linalg.inv(self.matrix),
        )


def induced_circle_map(a, fi):
    """Circle map of A from the fiber over Fi to the fiber over A(Fi)."""
    target = act_partial(a, fi)
    su, sw = fi.frame
    tu, tw = target.frame
    au, aw = a.entries @ su, a.entries @ sw
    matrix = np.array([[tu @ au, tu @ aw], [tw @ au, tw @ aw]])
    return CircleMap(source=fi, target=target, matrix=matrix)
