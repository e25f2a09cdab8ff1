"""Exact information theory on finite joint distributions.

Everything here is computed in closed form from a probability table: no
estimation, no smoothing.  Mutual information uses natural logarithms
(nats) with the convention 0 log 0 = 0; cells outside the support are
skipped.  On a finite space the partition supremum defining mutual
information is attained by the point partition, and refining a partition
never decreases the partition information; ``gyp_check`` exercises exactly
that, comparing the per-cell density form against the partition machinery.

Variables are named axes of the table.  Operations accept either a single
name or a tuple of names wherever a variable is expected, so composite
variables like (Y, Z) in the chain rule need no special casing.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AbsolutelyContinuousViolation, InvalidSpec

NATS_PER_BIT = float(np.log(2.0))  # multiply bits by this to get nats

MAX_VARIABLES = 4
MAX_ALPHABET = 64


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """A joint probability table over up to four named finite variables."""

    names: tuple
    table: np.ndarray
    labels: tuple = None  # per-variable symbol labels, for CSV round trips

    def __post_init__(self):
        names = tuple(self.names)
        table = np.array(self.table, dtype=float)
        if not 1 <= len(names) <= MAX_VARIABLES:
            raise InvalidSpec([f"need 1..{MAX_VARIABLES} variables, got {len(names)}"])
        if len(set(names)) != len(names):
            raise InvalidSpec(["variable names must be distinct"])
        if table.ndim != len(names):
            raise InvalidSpec([f"table rank {table.ndim} != {len(names)} variables"])
        if any(s > MAX_ALPHABET for s in table.shape):
            raise InvalidSpec([f"alphabet sizes {table.shape} exceed {MAX_ALPHABET}"])
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise InvalidSpec(["table entries must be finite and nonnegative"])
        if abs(float(table.sum()) - 1.0) > 1e-14:
            raise InvalidSpec([f"table sums to {table.sum():.17g}, not 1"])
        labels = self.labels
        if labels is None:
            labels = tuple(tuple(str(k) for k in range(s)) for s in table.shape)
        else:
            labels = tuple(tuple(lab) for lab in labels)
            if any(len(lab) != s for lab, s in zip(labels, table.shape)):
                raise InvalidSpec(["label counts must match the table shape"])
        table.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "labels", labels)

    def axes(self, group):
        """Axis indices for a variable name or tuple of names."""
        if isinstance(group, str):
            group = (group,)
        try:
            return tuple(self.names.index(n) for n in group)
        except ValueError as e:
            raise InvalidSpec([f"unknown variable in {group!r}: {e}"])

    def marginal(self, group):
        """Marginal table over a name group, axes in the group's order."""
        keep = self.axes(group)
        dropped = tuple(i for i in range(self.table.ndim) if i not in keep)
        return np.transpose(self.table.sum(axis=dropped) if dropped else self.table,
                            np.argsort(np.argsort(keep)))

    @staticmethod
    def from_counts(names, counts, labels=None):
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise InvalidSpec(["counts must have positive total"])
        return DiscreteJoint(tuple(names), counts / total, labels)


def _flat2(j, x, y):
    """Joint of two name groups as a 2-d array plus its marginals."""
    ax, ay = j.axes(x), j.axes(y)
    if set(ax) & set(ay):
        raise InvalidSpec([f"groups {x!r} and {y!r} overlap"])
    rest = tuple(i for i in range(j.table.ndim) if i not in ax + ay)
    p = np.transpose(j.table, ax + ay + rest)
    nx = int(np.prod(p.shape[: len(ax)], dtype=int))
    p = p.reshape(nx, -1) if not rest else p.reshape(
        nx, int(np.prod(p.shape[len(ax): len(ax) + len(ay)], dtype=int)), -1).sum(axis=2)
    return p


def _kl_mi(p2):
    """Sum p log p/(px py) over the support of a 2-d joint."""
    px = p2.sum(axis=1, keepdims=True)
    py = p2.sum(axis=0, keepdims=True)
    mask = p2 > 0
    ratio = p2[mask] / (px @ py)[mask]
    return float(np.sum(p2[mask] * np.log(ratio)))


def mutual_information(j, x, y):
    """I(X; Y) in nats; x and y may be names or tuples of names."""
    return _kl_mi(_flat2(j, x, y))


def conditional_mutual_information(j, x, y, given):
    """I(X; Y | W) in nats, the p(w)-weighted information within each slice."""
    ax, ay, aw = j.axes(x), j.axes(y), j.axes(given)
    groups = (ax, ay, aw)
    for a, b in ((0, 1), (0, 2), (1, 2)):
        if set(groups[a]) & set(groups[b]):
            raise InvalidSpec(["conditioning groups overlap"])
    rest = tuple(i for i in range(j.table.ndim) if i not in ax + ay + aw)
    # reshape to (x, y, w), summing out the remaining axes
    p3 = np.transpose(j.table, ax + ay + aw + rest)
    shape = p3.shape
    nx = int(np.prod(shape[: len(ax)], dtype=int))
    ny = int(np.prod(shape[len(ax): len(ax) + len(ay)], dtype=int))
    nw = int(np.prod(shape[len(ax) + len(ay): len(ax) + len(ay) + len(aw)], dtype=int))
    p3 = p3.reshape(nx, ny, nw, -1).sum(axis=3)
    pw = p3.sum(axis=(0, 1))
    total = 0.0
    for k in range(p3.shape[2]):
        if pw[k] <= 0:
            continue
        total += pw[k] * _kl_mi(p3[:, :, k] / pw[k])
    return float(total)


def chain_rule_check(j, x, y, z, given=None):
    """Residual |I(X;(Y,Z)|W) - I(X;Y|(Z,W)) - I(X;Z|W)|; zero in exact arithmetic."""
    y = (y,) if isinstance(y, str) else tuple(y)
    z = (z,) if isinstance(z, str) else tuple(z)
    if given is None:
        lhs = mutual_information(j, x, y + z)
        inner = conditional_mutual_information(j, x, y, z)
        outer = mutual_information(j, x, z)
    else:
        given = (given,) if isinstance(given, str) else tuple(given)
        lhs = conditional_mutual_information(j, x, y + z, given)
        inner = conditional_mutual_information(j, x, y, z + given)
        outer = conditional_mutual_information(j, x, z, given)
    return abs(lhs - (inner + outer))


def partition_mutual_information(j, x, y, blocks_x, blocks_y):
    """Partition-form information: coarsen each side into blocks, then sum.

    ``blocks_x`` assigns each symbol of the (flattened) x group to a block
    index, and likewise for y.  Refining blocks never decreases the value;
    singleton blocks recover ``mutual_information``.
    """
    p2 = _flat2(j, x, y)
    bx = np.asarray(blocks_x, dtype=int)
    by = np.asarray(blocks_y, dtype=int)
    if bx.shape != (p2.shape[0],) or by.shape != (p2.shape[1],):
        raise InvalidSpec(["block assignments must cover each symbol exactly once"])
    coarse = np.zeros((bx.max() + 1, by.max() + 1))
    np.add.at(coarse, (bx[:, None], by[None, :]), p2)
    return _kl_mi(coarse)


def gyp_check(j, x, y, marginal_x=None, marginal_y=None):
    """Gap between density-form and partition-form information.

    The density form averages log of the joint density against the product
    of marginals over the support; the partition form runs the point
    partition through the coarsening machinery.  Optional explicit
    reference marginals are checked for absolute continuity first: a
    support cell with zero reference product mass is a hypothesis
    violation, not a numerical issue.
    """
    p2 = _flat2(j, x, y)
    px = p2.sum(axis=1) if marginal_x is None else np.asarray(marginal_x, dtype=float)
    py = p2.sum(axis=0) if marginal_y is None else np.asarray(marginal_y, dtype=float)
    prod = px[:, None] * py[None, :]
    bad = (p2 > 0) & (prod <= 0)
    if np.any(bad):
        cell = tuple(int(c) for c in np.argwhere(bad)[0])
        raise AbsolutelyContinuousViolation(cell)
    mask = p2 > 0
    density_form = float(np.sum(p2[mask] * np.log(p2[mask] / prod[mask])))
    partition_form = partition_mutual_information(
        j, x, y, np.arange(p2.shape[0]), np.arange(p2.shape[1]))
    return abs(density_form - partition_form)


@dataclass(frozen=True)
class SemicontinuityReport:
    sequence_mi: tuple
    limit_mi: float
    ok: bool


def semicontinuity_smoke(j_sequence, j_limit, x, y, tail=None):
    """Check I(limit) <= min over the tail of I(j_n) + 1e-10.

    ``tail`` restricts the minimum to the last so-many sequence elements
    (default: second half), approximating the liminf.
    """
    values = tuple(mutual_information(jn, x, y) for jn in j_sequence)
    limit = mutual_information(j_limit, x, y)
    if tail is None:
        tail = max(1, len(values) // 2)
    floor = min(values[-tail:])
    return SemicontinuityReport(sequence_mi=values, limit_mi=limit,
                                ok=limit <= floor + 1e-10)


def random_joint(rng, shape, names=None):
    """Dirichlet(1) distributed table: uniform over the simplex of tables."""
    if names is None:
        names = tuple("XYZW"[: len(shape)])
    cells = int(np.prod(shape, dtype=int))
    return DiscreteJoint(names, rng.dirichlet(np.ones(cells)).reshape(shape))


def xor_joint():
    """X, Y independent fair signs, Z = XY: pairwise independent triple."""
    table = np.zeros((2, 2, 2))
    for ix, sx in enumerate((-1, 1)):
        for iy, sy in enumerate((-1, 1)):
            table[ix, iy, (0 if sx * sy < 0 else 1)] = 0.25
    labels = (("-1", "1"), ("-1", "1"), ("-1", "1"))
    return DiscreteJoint(("X", "Y", "Z"), table, labels)


def markov_sum_joint():
    """Partial sums X_k = Y_1 + .. + Y_k of three fair signs: a Markov chain."""
    x1 = (-1, 1)
    x2 = (-2, 0, 2)
    x3 = (-3, -1, 1, 3)
    table = np.zeros((2, 3, 4))
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            for s3 in (-1, 1):
                table[x1.index(s1), x2.index(s1 + s2), x3.index(s1 + s2 + s3)] += 0.125
    labels = tuple(tuple(str(v) for v in vals) for vals in (x1, x2, x3))
    return DiscreteJoint(("X1", "X2", "X3"), table, labels)


def to_csv(j, path):
    """One row per cell: symbol per variable, then the probability."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(j.names) + ["probability"])
        for idx in np.ndindex(*j.table.shape):
            row = [j.labels[k][i] for k, i in enumerate(idx)]
            writer.writerow(row + [repr(float(j.table[idx]))])


def from_csv(path):
    """Rebuild a joint written by ``to_csv``; symbol order is first-seen."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2 or rows[0][-1] != "probability":
        raise InvalidSpec([f"{path}: expected a header ending in 'probability'"])
    names = tuple(rows[0][:-1])
    symbols = [dict() for _ in names]
    cells = []
    for row in rows[1:]:
        idx = []
        for k, sym in enumerate(row[:-1]):
            idx.append(symbols[k].setdefault(sym, len(symbols[k])))
        cells.append((tuple(idx), float(row[-1])))
    shape = tuple(len(s) for s in symbols)
    table = np.zeros(shape)
    for idx, p in cells:
        table[idx] += p
    labels = tuple(tuple(s.keys()) for s in symbols)
    return DiscreteJoint(names, table, labels)
