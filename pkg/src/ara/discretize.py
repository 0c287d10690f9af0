"""Compile hybrid diagrams to fully discrete ones.

Each continuous chance node is replaced by a discrete variable over intervals
of its declared range. The interval grid comes from the node's envelope: the
equal-weight mixture of its per-parent-configuration distributions. Grid
construction:

  * point masses that carry at least half a bin of pooled envelope weight get
    their own sliver interval [v, v + d) with representative exactly v, so
    downstream arithmetic sees the exact value (a zero loss stays zero);
  * the remaining cuts are envelope quantiles, so bins are dense where the
    mixture puts mass;
  * each interval's representative is the envelope's conditional mean inside
    it, which preserves means through the discretization.

Deterministic expressions (the resolved column is a point mass) are spread
over a small sub-quantile grid of each referenced discretized parent instead
of being evaluated only at interval representatives; this keeps kinks such as
min/max clips from collapsing to one side of the cut. Discrete nodes defined
by expressions are materialized into tables; utilities stay symbolic and are
evaluated against interval representatives at query time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from . import exprlang
from . import model as M
from .distributions import DistributionSpec
from .errors import DiscretizationError, ExprEvalError

DEFAULT_BINS = 32
QUADRATURE_POINTS = 4
_BISECT_ITERS = 80


# -- interval grid ------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    representative: float
    atom: bool = False
    closed_top: bool = False

    @property
    def label(self) -> str:
        if self.atom:
            return exprlang.format_number(self.lower)
        close = "]" if self.closed_top else ")"
        return f"[{exprlang.format_number(self.lower)}, {exprlang.format_number(self.upper)}{close}"


@dataclass(frozen=True)
class Partition:
    intervals: tuple[Interval, ...]

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def boundaries(self) -> tuple[float, ...]:
        return tuple(i.lower for i in self.intervals) + (self.intervals[-1].upper,)

    def domain(self) -> M.DiscreteDomain:
        states = []
        last = -math.inf
        for interval in self.intervals:
            rep = interval.representative
            if rep <= last:  # guard against flat stretches collapsing reps
                rep = float(np.nextafter(last, math.inf))
            last = rep
            states.append(M.StateDef(interval.label, rep))
        return M.DiscreteDomain(tuple(states))


@dataclass(frozen=True)
class WeightedSpec:
    spec: DistributionSpec
    weight: float


Column = tuple[WeightedSpec, ...]


def _family_mass_below(family: str, params: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Strict-below mass P(X < x) for a batch of same-family specs.

    One scipy call per family instead of one per spec; rows are specs,
    columns are thresholds. The bisection in _Mixture.invert hammers this.
    """
    if family == "uniform":
        lo, hi = params[:, :1], params[:, 1:2]
        return np.clip((xs - lo) / (hi - lo), 0.0, 1.0)
    if family == "normal":
        mean, sd = params[:, :1], np.sqrt(params[:, 1:2])
        return special.ndtr((xs - mean) / sd)
    if family == "tnormal":
        mean, sd = params[:, :1], np.sqrt(params[:, 1:2])
        lo, hi = params[:, 2:3], params[:, 3:4]
        zx = (np.clip(xs, lo, hi) - mean) / sd
        zl, zh = (lo - mean) / sd, (hi - mean) / sd
        # evaluate from whichever tail the window sits in, to dodge cancellation
        upper = zl > 0
        num = np.where(upper, special.ndtr(-zl) - special.ndtr(-zx), special.ndtr(zx) - special.ndtr(zl))
        den = np.where(upper, special.ndtr(-zl) - special.ndtr(-zh), special.ndtr(zh) - special.ndtr(zl))
        return np.clip(num / np.maximum(den, 1e-300), 0.0, 1.0)
    if family == "gamma":
        shape, scale = params[:, :1], params[:, 1:2]
        return special.gammainc(shape, np.maximum(xs, 0.0) / scale)
    if family == "binomial":
        n = np.round(params[:, :1])
        p = np.clip(params[:, 1:2], 0.0, 1.0)
        k = np.ceil(xs) - 1.0  # strict: P(X < x) = P(X <= ceil(x) - 1)
        k = np.broadcast_to(k, np.broadcast_shapes(k.shape, n.shape))
        out = special.bdtr(np.clip(k, 0.0, None), n, np.broadcast_to(p, k.shape))
        return np.where(k < 0.0, 0.0, out)
    raise AssertionError(family)


class _Mixture:
    """Weighted mixture with per-family vectorized CDF evaluation."""

    def __init__(self, pairs):
        locs: list[float] = []
        point_w: list[float] = []
        self.rest: list[tuple[DistributionSpec, float]] = []
        for spec, w in pairs:
            if w <= 0.0:
                continue
            if spec.family == "point" or (spec.family == "normal" and spec.params[1] == 0.0):
                locs.append(spec.params[0])
                point_w.append(w)
            else:
                self.rest.append((spec, w))
        self.locs = np.asarray(locs, dtype=float)
        self.point_w = np.asarray(point_w, dtype=float)
        self.total = float(self.point_w.sum()) + sum(w for _, w in self.rest)
        grouped: dict[str, tuple[list, list]] = {}
        for spec, w in self.rest:
            ps, ws = grouped.setdefault(spec.family, ([], []))
            ps.append(spec.params)
            ws.append(w)
        self._groups = {
            f: (np.asarray(ps, dtype=float), np.asarray(ws, dtype=float))
            for f, (ps, ws) in grouped.items()
        }

    def mass_below(self, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        out = np.zeros_like(xs)
        if self.locs.size:
            out += self.point_w @ (self.locs[:, None] < xs[None, :])
        for family, (params, weights) in self._groups.items():
            out += weights @ _family_mass_below(family, params, xs[None, :])
        return out

    def mass_at_most(self, x: float) -> float:
        out = 0.0
        if self.locs.size:
            out += float(self.point_w[self.locs <= x].sum())
        return out + sum(w * spec.cdf(x) for spec, w in self.rest)

    def interval_mass(self, lo: float, hi: float, closed: bool) -> float:
        top = self.mass_at_most(hi) if closed else float(self.mass_below([hi])[0])
        return max(0.0, top - float(self.mass_below([lo])[0]))

    def interval_moment(self, lo: float, hi: float, closed: bool) -> float:
        out = 0.0
        if self.locs.size:
            inside = (self.locs >= lo) & ((self.locs <= hi) if closed else (self.locs < hi))
            out += float((self.point_w[inside] * self.locs[inside]).sum())
        for spec, w in self.rest:
            out += w * _spec_moment(spec, lo, hi, closed)
        return out

    def atoms(self) -> dict[float, float]:
        pooled: dict[float, float] = {}
        for loc, w in zip(self.locs, self.point_w):
            pooled[float(loc)] = pooled.get(float(loc), 0.0) + float(w)
        for spec, w in self.rest:
            for loc, mass in spec.atoms():
                pooled[loc] = pooled.get(loc, 0.0) + w * mass
        return pooled

    def invert(self, targets: np.ndarray, lo: float, hi: float) -> np.ndarray:
        los = np.full_like(targets, lo)
        his = np.full_like(targets, hi)
        for _ in range(_BISECT_ITERS):
            mids = 0.5 * (los + his)
            go_right = self.mass_below(mids) < targets
            los = np.where(go_right, mids, los)
            his = np.where(go_right, his, mids)
        return his


def _spec_moment(spec: DistributionSpec, lo: float, hi: float, closed: bool) -> float:
    if spec.family == "binomial":
        top = math.floor(hi) if closed or hi != math.floor(hi) else int(hi) - 1
        ks = range(max(0, math.ceil(lo)), min(spec.trials, int(top)) + 1)
        return sum(k * spec.pmf(k) for k in ks)
    return spec.mean_between(lo, hi) * spec.mass_between(lo, hi)


def _sliver(v: float) -> float:
    return max(1e-9, abs(v) * 1e-9)


def build_partition(columns, bins: int, bounds: tuple[float, float]) -> Partition:
    """Interval grid for the equal-weight envelope of the given columns."""
    lo, hi = bounds
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise DiscretizationError(f"discretization needs finite bounds, got [{lo}, {hi}]")
    if not columns:
        raise DiscretizationError("no columns to discretize")
    if bins < 1:
        raise DiscretizationError("bins must be at least 1")
    col_w = 1.0 / len(columns)
    pairs = [(ws.spec, col_w * ws.weight) for column in columns for ws in column]
    mixture = _Mixture(pairs)

    pooled = {v: m for v, m in mixture.atoms().items() if lo <= v <= hi}
    threshold = 0.5 / bins
    isolated = sorted(v for v, m in pooled.items() if m >= threshold)

    floor = float(mixture.mass_below([lo])[0])
    total = mixture.mass_at_most(hi) - floor
    cuts: list[float] = []
    if total > 0.0 and bins > 1:
        levels = np.arange(1, bins) / bins
        cuts = list(mixture.invert(floor + levels * total, lo, hi))

    slivers = [(v, min(v + _sliver(v), hi) if v < hi else hi + _sliver(hi)) for v in isolated]
    boundaries = {lo, hi}
    for a, b in slivers:
        boundaries.update((a, b))
    for c in cuts:
        if not any(a < c < b or (c == a) for a, b in slivers):
            boundaries.add(float(c))
    ordered = sorted(boundaries)
    merged = [ordered[0]]
    tol = (hi - lo) * 1e-12
    sliver_edges = {x for ab in slivers for x in ab}
    for b in ordered[1:]:
        if b - merged[-1] <= tol and b not in sliver_edges:
            continue
        merged.append(b)

    intervals: list[Interval] = []
    atom_starts = {v for v, _ in slivers}
    for i, (a, b) in enumerate(zip(merged, merged[1:])):
        closed = i == len(merged) - 2
        is_atom = a in atom_starts
        mass = mixture.interval_mass(a, b, closed)
        if mass <= 0.0 and not is_atom:
            continue
        if is_atom:
            rep = a
        else:
            moment = mixture.interval_moment(a, b, closed)
            rep = moment / mass if mass > 0 else 0.5 * (a + b)
            rep = min(max(rep, a), b)
        intervals.append(Interval(a, b, rep, atom=is_atom, closed_top=closed))
    if not intervals:
        mid = 0.5 * (lo + hi)
        intervals = [Interval(lo, hi, mid, closed_top=True)]
    last = intervals[-1]
    if not last.closed_top:
        intervals[-1] = replace(last, closed_top=True)
    return Partition(tuple(intervals))


def column_masses(column: Column, partition: Partition) -> np.ndarray:
    """Probability of each interval under one column, clipped mass renormalized."""
    edges = np.asarray(partition.boundaries)
    out = np.zeros(len(partition))
    for ws in column:
        below = ws.spec.mass_below_many(edges)
        masses = np.diff(below)
        masses[-1] += ws.spec.cdf(edges[-1]) - below[-1]
        out += ws.weight * masses
    total = float(out.sum())
    if total <= 0.0:
        raise DiscretizationError("column has no mass inside the declared bounds")
    return out / total


@dataclass(frozen=True)
class EnvelopeDigest:
    """Envelope mixture plus its grid; answers sub-quantile queries for
    children that spread deterministic expressions over parent intervals."""

    partition: Partition
    mixture: _Mixture = field(compare=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def subpoints(self, index: int, q: int) -> tuple[tuple[float, float], ...]:
        hit = self._cache.get((index, q))
        if hit is not None:
            return hit
        interval = self.partition.intervals[index]
        if interval.atom:
            out = ((interval.representative, 1.0),)
        else:
            lo, hi, closed = interval.lower, interval.upper, interval.closed_top
            floor = float(self.mixture.mass_below([lo])[0])
            mass = self.mixture.interval_mass(lo, hi, closed)
            if mass <= 0.0:
                out = ((interval.representative, 1.0),)
            else:
                levels = (np.arange(q) + 0.5) / q
                xs = self.mixture.invert(floor + levels * mass, lo, hi)
                # recenter so the grid's mean is the interval's conditional mean;
                # linear maps downstream then stay mean-exact through re-spreading
                shifted = xs + (interval.representative - float(xs.mean()))
                if shifted.min() >= lo and shifted.max() <= hi:
                    xs = shifted
                out = tuple((float(x), 1.0 / q) for x in xs)
        self._cache[(index, q)] = out
        return out


# -- diagram compilation ---------------------------------------------------------------


@dataclass(frozen=True)
class NodeReport:
    name: str
    bins: int
    n_states: int
    n_atoms: int
    clipped_mass: float


@dataclass(frozen=True)
class DiscretizationResult:
    diagram: M.InfluenceDiagram
    reports: tuple[NodeReport, ...]
    digests: dict[str, EnvelopeDigest] = field(compare=False)


def topological_order(diagram: M.InfluenceDiagram) -> tuple[str, ...]:
    """Parents before children, declaration order breaking ties."""
    names = [v.name for v in diagram.variables]
    position = {n: i for i, n in enumerate(names)}
    remaining = set(names)
    order: list[str] = []
    while remaining:
        ready = [n for n in remaining if not any(p in remaining for p in diagram.cpd_parents(n))]
        if not ready:
            raise DiscretizationError("dependency cycle")
        nxt = min(ready, key=position.__getitem__)
        order.append(nxt)
        remaining.remove(nxt)
    return tuple(order)


def discretize_diagram(
    diagram: M.InfluenceDiagram,
    default_bins: int = DEFAULT_BINS,
    quadrature: int = QUADRATURE_POINTS,
) -> DiscretizationResult:
    worker = _Discretizer(diagram, default_bins, quadrature)
    return worker.run()


def discretize_node(
    diagram: M.InfluenceDiagram, name: str, bins: int, quadrature: int = QUADRATURE_POINTS
) -> tuple[M.Variable, EnvelopeDigest]:
    """Discretize a single continuous node whose parents are already discrete."""
    worker = _Discretizer(diagram, bins, quadrature)
    for n in topological_order(diagram):
        v = diagram.variable(n)
        worker.vars[n] = v
        if n == name:
            out = worker._continuous_chance(replace(v, bins=bins))
            return out, worker.digests[name]
    raise DiscretizationError(f"unknown variable {name!r}")


class _Discretizer:
    def __init__(self, diagram: M.InfluenceDiagram, default_bins: int, quadrature: int):
        self.source = diagram
        self.default_bins = default_bins
        self.quadrature = quadrature
        self.vars: dict[str, M.Variable] = {}
        self.digests: dict[str, EnvelopeDigest] = {}
        self.reports: list[NodeReport] = []
        self.rebinned: set[str] = set()

    def run(self) -> DiscretizationResult:
        order = topological_order(self.source)
        for name in order:
            v = self.source.variable(name)
            self.vars[name] = self._compile(v)
        by_position = {v.name: i for i, v in enumerate(self.source.variables)}
        variables = tuple(sorted(self.vars.values(), key=lambda v: by_position[v.name]))
        out = replace(self.source, variables=variables)
        out = self._compile_overlays(out)
        for v in out.decisions():
            if v.cpd is None or any(p in self.rebinned for p in v.informational_parents):
                out = out.with_cpd(v.name, M.uniform_table(out, v.name))
        return DiscretizationResult(out, tuple(self.reports), self.digests)

    def _compile(self, v: M.Variable) -> M.Variable:
        if v.kind == M.UTILITY or v.kind == M.DECISION:
            return v
        if isinstance(v.domain, M.DiscreteDomain):
            if isinstance(v.cpd, M.ExpressionCpd):
                return replace(v, cpd=self._discrete_table(v, v.cpd))
            return v
        return self._continuous_chance(v)

    def _compile_overlays(self, diagram: M.InfluenceDiagram) -> M.InfluenceDiagram:
        if not diagram.overlays:
            return diagram
        new_overlays = []
        for owner, entries in diagram.overlays:
            compiled = []
            for name, cpd in entries:
                v = diagram.variable(name)
                if isinstance(cpd, M.ExpressionCpd) and name in self.digests:
                    compiled.append((name, self._masses_on_partition(v, cpd, self.digests[name].partition)))
                elif isinstance(cpd, M.ExpressionCpd) and isinstance(v.domain, M.DiscreteDomain):
                    compiled.append((name, self._discrete_table(v, cpd)))
                else:
                    compiled.append((name, cpd))
            new_overlays.append((owner, tuple(compiled)))
        return replace(diagram, overlays=tuple(new_overlays))

    # -- helpers --

    def _bins_for(self, v: M.Variable) -> int:
        return v.bins if v.bins is not None else self.default_bins

    def _configs(self, parents: tuple[str, ...]):
        axes = []
        for p in parents:
            pv = self.vars[p]
            if not isinstance(pv.domain, M.DiscreteDomain):
                raise DiscretizationError(f"parent {p} is still continuous; declaration order must be topological")
            axes.append(tuple(pv.domain.states))
        if not axes:
            return (tuple(),)
        return tuple(itertools.product(*axes))

    def _env(self, parents: tuple[str, ...], config) -> dict:
        return {p: exprlang.StateBinding(s.label, s.value) for p, s in zip(parents, config)}

    def _spread_parents(self, v: M.Variable, expr: exprlang.Expr) -> tuple[str, ...]:
        used = exprlang.referenced_variables(expr)
        return tuple(p for p in v.parents if p in self.digests and p in used)

    def _columns(self, v: M.Variable, cpd: M.ExpressionCpd):
        """One column per parent configuration; deterministic columns spread
        over sub-quantile grids of their discretized continuous parents."""
        expr = cpd.expr
        parents = v.parents
        spread = self._spread_parents(v, expr)
        index_of = {p: i for i, p in enumerate(parents)}
        columns: list[Column] = []
        for config in self._configs(parents):
            env = self._env(parents, config)
            try:
                spec = exprlang.evaluate_distribution(expr, env)
            except ExprEvalError as exc:
                raise DiscretizationError(f"{v.name} at {tuple(s.label for s in config)}: {exc}") from exc
            if spec.family != "point" or not spread:
                columns.append((WeightedSpec(spec, 1.0),))
                continue
            grids = []
            for p in spread:
                state = config[index_of[p]]
                idx = self.vars[p].domain.index(state.label)
                grids.append(self.digests[p].subpoints(idx, self.quadrature))
            entries = []
            for combo in itertools.product(*grids):
                sub_env = dict(env)
                weight = 1.0
                for p, (value, w) in zip(spread, combo):
                    sub_env[p] = value
                    weight *= w
                sub = exprlang.evaluate_distribution(expr, sub_env)
                entries.append(WeightedSpec(sub, weight))
            columns.append(tuple(entries))
        return columns

    def _continuous_chance(self, v: M.Variable) -> M.Variable:
        if not isinstance(v.cpd, M.ExpressionCpd):
            raise DiscretizationError(f"continuous {v.name} needs an expression")
        assert isinstance(v.domain, M.ContinuousDomain)
        bins = self._bins_for(v)
        columns = self._columns(v, v.cpd)
        partition = build_partition(columns, bins, (v.domain.lower, v.domain.upper))
        rows: list[float] = []
        clipped = 0.0
        edges = np.asarray(partition.boundaries)
        for column in columns:
            raw = np.zeros(len(partition))
            covered = 0.0
            for ws in column:
                below = ws.spec.mass_below_many(edges)
                masses = np.diff(below)
                masses[-1] += ws.spec.cdf(edges[-1]) - below[-1]
                raw += ws.weight * masses
                covered += ws.weight
            total = float(raw.sum())
            if total <= 0.0:
                raise DiscretizationError(f"{v.name}: a configuration has no mass inside [{edges[0]}, {edges[-1]}]")
            clipped = max(clipped, covered - total)
            rows.extend(float(x) for x in raw / total)
        mixture = _Mixture([(ws.spec, ws.weight / len(columns)) for c in columns for ws in c])
        self.digests[v.name] = EnvelopeDigest(partition, mixture)
        self.rebinned.add(v.name)
        n_atoms = sum(1 for i in partition.intervals if i.atom)
        self.reports.append(NodeReport(v.name, bins, len(partition), n_atoms, clipped))
        return replace(v, domain=partition.domain(), cpd=M.TableCpd(tuple(rows)), bins=bins)

    def _masses_on_partition(self, v: M.Variable, cpd: M.ExpressionCpd, partition: Partition) -> M.TableCpd:
        rows: list[float] = []
        for column in self._columns(v, cpd):
            rows.extend(float(x) for x in column_masses(column, partition))
        return M.TableCpd(tuple(rows))

    def _discrete_table(self, v: M.Variable, cpd: M.ExpressionCpd) -> M.TableCpd:
        assert isinstance(v.domain, M.DiscreteDomain)
        expr = cpd.expr
        states = v.domain.states
        deterministic = not _has_dist(expr)
        rows: list[float] = []
        for config in self._configs(v.parents):
            env = self._env(v.parents, config)
            where = f"{v.name} at {tuple(s.label for s in config)}"
            if deterministic:
                try:
                    value = exprlang.evaluate_deterministic(expr, env)
                except ExprEvalError as exc:
                    raise DiscretizationError(f"{where}: {exc}") from exc
                rows.extend(self._one_hot(v, value, where))
            else:
                try:
                    spec = exprlang.evaluate_distribution(expr, env)
                except ExprEvalError as exc:
                    raise DiscretizationError(f"{where}: {exc}") from exc
                atoms = spec.atoms()
                if not atoms:
                    raise DiscretizationError(f"{where}: continuous distribution on a discrete variable")
                row = [0.0] * len(states)
                for loc, mass in atoms:
                    idx = self._state_index(v, loc)
                    if idx is None:
                        if mass > 1e-9:
                            raise DiscretizationError(f"{where}: outcome {loc} is outside the declared states")
                        continue
                    row[idx] += mass
                total = sum(row)
                if abs(total - 1.0) > 1e-6:
                    raise DiscretizationError(f"{where}: state masses sum to {total}")
                rows.extend(x / total for x in row)
        return M.TableCpd(tuple(rows))

    def _one_hot(self, v: M.Variable, value, where: str) -> list[float]:
        assert isinstance(v.domain, M.DiscreteDomain)
        labels = v.domain.labels
        if isinstance(value, exprlang.StateBinding):
            value = value.label
        if isinstance(value, bool):
            value = "True" if value else "False"
        if isinstance(value, str):
            if value not in labels:
                raise DiscretizationError(f"{where}: result {value!r} is not a declared state")
            idx = labels.index(value)
        else:
            idx = self._state_index(v, float(value))
            if idx is None:
                raise DiscretizationError(f"{where}: result {value} matches no declared state value")
        row = [0.0] * len(labels)
        row[idx] = 1.0
        return row

    def _state_index(self, v: M.Variable, value: float) -> int | None:
        assert isinstance(v.domain, M.DiscreteDomain)
        best = None
        for i, s in enumerate(v.domain.states):
            target = s.value
            if target is None:
                try:
                    target = float(s.label)
                except ValueError:
                    continue
            if abs(target - value) <= 1e-9 * max(1.0, abs(target)):
                best = i
                break
        return best


def _has_dist(expr: exprlang.Expr) -> bool:
    if isinstance(expr, exprlang.Dist):
        return True
    if isinstance(expr, (exprlang.Num, exprlang.Str, exprlang.Var)):
        return False
    if isinstance(expr, exprlang.Neg):
        return _has_dist(expr.operand)
    if isinstance(expr, (exprlang.Bin, exprlang.Cmp)):
        return _has_dist(expr.left) or _has_dist(expr.right)
    if isinstance(expr, exprlang.Call):
        return any(_has_dist(a) for a in expr.args)
    if isinstance(expr, exprlang.Partition):
        return any(_has_dist(e) for _, e in expr.branches)
    raise AssertionError(type(expr))
