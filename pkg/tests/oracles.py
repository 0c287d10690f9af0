"""Independent reference computations used to check the engine.

Everything here recomputes results from first principles: full-joint
enumeration with plain dictionaries and itertools, scipy for distribution
moments, numpy only for seeded Monte Carlo. No inference, discretization or
induction code is shared with the package, so agreement between the two is
meaningful evidence rather than an identity.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats

DEFENDER = "defender"
ATTACKER = "attacker"


# -- plain-dict view of a discrete diagram ---------------------------------------------


class PlainNet:
    """Snapshot of a discrete diagram as dictionaries, enumerable by hand.

    rows[name][parent_config] is the probability row of a chance or decision
    variable; utable[name][parent_config] is a utility's value. Decision rows
    can be replaced freely, which is how the reference induction installs
    policies.
    """

    def __init__(self, diagram):
        self.order: list[str] = []
        self.kind: dict[str, str] = {}
        self.owner: dict[str, str | None] = {}
        self.labels: dict[str, list[str]] = {}
        self.parents: dict[str, tuple[str, ...]] = {}
        self.rows: dict[str, dict[tuple, list[float]]] = {}
        self.utable: dict[str, dict[tuple, float]] = {}
        self.aggregates = {name: tuple(parts) for name, parts in diagram.utility_aggregates}
        self.info_parents: dict[str, tuple[str, ...]] = {}

        for v in diagram.variables:
            self.order.append(v.name)
            self.kind[v.name] = v.kind
            self.owner[v.name] = v.owner
            self.parents[v.name] = tuple(diagram.cpd_parents(v.name))
            if v.kind == "decision":
                self.info_parents[v.name] = tuple(v.informational_parents)
            if v.kind == "utility":
                if v.name not in self.aggregates:
                    self.utable[v.name] = self._utility_rows(diagram, v)
                continue
            self.labels[v.name] = list(v.domain.labels)
            self.rows[v.name] = self._prob_rows(diagram, v)

    def _configs(self, diagram, parents):
        lists = [list(diagram.variable(p).domain.labels) for p in parents]
        return itertools.product(*lists)

    def _prob_rows(self, diagram, v):
        parents = tuple(diagram.cpd_parents(v.name))
        k = len(v.domain.labels)
        flat = list(v.cpd.values)
        rows = {}
        for i, config in enumerate(self._configs(diagram, parents)):
            rows[config] = [float(x) for x in flat[i * k : (i + 1) * k]]
        return rows

    def _utility_rows(self, diagram, v):
        parents = tuple(v.parents)
        if hasattr(v.cpd, "values"):
            flat = list(v.cpd.values)
            return {config: float(flat[i]) for i, config in enumerate(self._configs(diagram, parents))}
        # formula payoffs: borrow the expression evaluator (checked separately
        # against hand oracles) purely to ingest the fixture
        from ara import exprlang

        domains = [diagram.variable(p).domain for p in parents]
        out = {}
        for config in self._configs(diagram, parents):
            env = {p: d.binding(s) for p, d, s in zip(parents, domains, config)}
            out[config] = float(exprlang.evaluate_distribution(v.cpd.expr, env).params[0])
        return out

    # -- enumeration ---------------------------------------------------------------

    def assignments(self):
        names = [n for n in self.order if n in self.rows]
        for combo in itertools.product(*(self.labels[n] for n in names)):
            assign = dict(zip(names, combo))
            p = 1.0
            for n in names:
                config = tuple(assign[q] for q in self.parents[n])
                p *= self.rows[n][config][self.labels[n].index(assign[n])]
                if p == 0.0:
                    break
            if p > 0.0:
                yield assign, p

    def probability(self, evidence: dict[str, str]) -> float:
        total = 0.0
        for assign, p in self.assignments():
            if all(assign[n] == s for n, s in evidence.items()):
                total += p
        return total

    def posterior(self, target: str, evidence: dict[str, str]) -> dict[str, float]:
        mass = {label: 0.0 for label in self.labels[target]}
        for assign, p in self.assignments():
            if all(assign[n] == s for n, s in evidence.items()):
                mass[assign[target]] += p
        z = sum(mass.values())
        if z <= 0.0:
            raise ZeroDivisionError("evidence has probability zero")
        return {label: m / z for label, m in mass.items()}

    def utility_value(self, name: str, assign: dict[str, str]) -> float:
        if name in self.aggregates:
            return sum(self.utility_value(part, assign) for part in self.aggregates[name])
        config = tuple(assign[q] for q in self.parents[name])
        return self.utable[name][config]

    def expected_utility(self, name: str, evidence: dict[str, str]) -> float:
        num = 0.0
        z = 0.0
        for assign, p in self.assignments():
            if all(assign[n] == s for n, s in evidence.items()):
                num += p * self.utility_value(name, assign)
                z += p
        if z <= 0.0:
            raise ZeroDivisionError("evidence has probability zero")
        return num / z

    def utility_root(self, owner: str) -> str:
        for name, parts in self.aggregates.items():
            if self.owner.get(name) == owner:
                return name
        for name in self.order:
            if self.kind[name] == "utility" and self.owner[name] == owner:
                return name
        raise KeyError(owner)

    def uniform_row(self, name: str) -> list[float]:
        k = len(self.labels[name])
        return [1.0 / k] * k

    def set_uniform(self, name: str) -> None:
        self.rows[name] = {c: self.uniform_row(name) for c in self.rows[name]}

    def owner_scale(self, owner: str) -> float:
        root = self.utility_root(owner)
        parts = self.aggregates.get(root, (root,))
        return sum(max(abs(v) for v in self.utable[p].values()) for p in parts)


def induct(net: PlainNet, stages: list[str], tie_abs: float = 1e-9, tie_rel: float = 1e-6):
    """Reference backward induction by brute-force enumeration.

    Returns ({stage: {config: (scores, maximizers, reachable)}}, defender
    value, attacker value). Decision rows in `net` are mutated to the
    computed policies, exactly as the engine overwrites CPDs.
    """
    for name in stages:
        net.set_uniform(name)
    policies: dict[str, dict] = {}
    for name in reversed(stages):
        owner = net.owner[name]
        root = net.utility_root(owner)
        threshold = max(tie_abs, tie_rel * net.owner_scale(owner))
        info = net.info_parents[name]
        options = net.labels[name]
        net.set_uniform(name)
        table: dict[tuple, tuple] = {}
        for config in itertools.product(*(net.labels[p] for p in info)):
            evidence = dict(zip(info, config))
            if net.probability(evidence) <= 0.0:
                table[config] = (None, list(options), False)
                continue
            scores = [net.expected_utility(root, {**evidence, name: opt}) for opt in options]
            best = max(scores)
            maximizers = [o for o, s in zip(options, scores) if s >= best - threshold]
            table[config] = (scores, maximizers, True)
        policies[name] = table
        for config, (_, maximizers, _) in table.items():
            row = [1.0 / len(maximizers) if o in maximizers else 0.0 for o in options]
            net.rows[name][config] = row
    dv = net.expected_utility(net.utility_root(DEFENDER), {})
    av = net.expected_utility(net.utility_root(ATTACKER), {})
    return policies, dv, av


# -- random discrete fixtures ------------------------------------------------------------


def random_net(rng: np.random.Generator, n_chance: int = 5, max_states: int = 4):
    """Random chance-only diagram spec: (names, states, parents, rows)."""
    names = [f"X{i}" for i in range(n_chance)]
    spec = []
    for i, name in enumerate(names):
        k = int(rng.integers(2, max_states + 1))
        n_par = int(rng.integers(0, min(i, 2) + 1))
        parents = sorted(rng.choice(i, size=n_par, replace=False).tolist()) if n_par else []
        spec.append((name, k, [names[j] for j in parents]))
    return spec


def random_rows(rng: np.random.Generator, k: int, n_rows: int, sparse: bool = False):
    rows = []
    for _ in range(n_rows):
        w = rng.random(k)
        if sparse and rng.random() < 0.3:
            w[rng.integers(0, k)] = 0.0
        if w.sum() == 0.0:
            w[:] = 1.0
        rows.append((w / w.sum()).tolist())
    return rows


# -- alternating-game fixtures (exact, tiny) ---------------------------------------------


def defend_attack_reference():
    """Two-stage deterrence game solved by hand.

    Defender first (defend Yes/No at cost 100), attacker second observing the
    defense; an attack against a defense succeeds with probability 0.2,
    against none with probability 0.8. Success costs the defender 200 extra
    and pays the attacker 200 at a price of 100.
    """
    # attacker, given D: EU(attack | defended) = 0.2 * 200 - 100 = -60 < 0
    #                    EU(attack | open)     = 0.8 * 200 - 100 = +60 > 0
    # so: attack exactly when undefended
    # defender: defend -> -100 (deterred, no success)
    #           open   -> 0.8 * (-200) + 0.2 * 0 = -160  (attacked)
    return {
        "attacker_policy": {("Yes",): ["No"], ("No",): ["Yes"]},
        "defender_policy": {(): ["Yes"]},
        "defender_value": -100.0,
        "attacker_value": 0.0,
    }


# -- escalation ladder: exact continuous recursion ---------------------------------------


def tn_mean(mu: float, var: float, lo: float, hi: float) -> float:
    sd = math.sqrt(var)
    return float(stats.truncnorm.mean((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd))


LADDER_LEVELS = [0.0, 12.0, 24.0]


def ladder_impact(defense: float, attack: float) -> float:
    """Expected impact of one ladder round: zero unless the attack tops the defense."""
    if attack <= defense:
        return 0.0
    return tn_mean((attack - defense) / 0.24, 400.0, 0.0, 200.0)


def ladder_stage_utils(d1, a2, d3, a4, d5):
    """Totals for one full play-out; postures persist across two rounds.

    Round r charges each side its current level and credits the attacker the
    round's impact: round 2 pairs (d1, a2), round 3 (d3, a2), round 4
    (d3, a4), round 5 (d5, a4). The opening defense and the final moves are
    live for one round; a2, d3 and a4 are each paid for twice.
    """
    i2 = ladder_impact(d1, a2)
    i3 = ladder_impact(d3, a2)
    i4 = ladder_impact(d3, a4)
    i5 = ladder_impact(d5, a4)
    ud = -0.5 * d1 - 0.3 * i2 - 0.5 * d3 - 0.3 * i3 - 0.5 * d3 - 0.3 * i4 - 0.5 * d5 - 0.3 * i5
    ua = -0.5 * a2 + 0.3 * i2 - 0.5 * a2 + 0.3 * i3 - 0.5 * a4 + 0.3 * i4 - 0.5 * a4 + 0.3 * i5
    return ud, ua


def ladder_solve(tie: float = 1e-3):
    """Exact subgame-perfect solve of the five-stage escalation ladder.

    Later players observe the full history. Expected utilities are linear in
    the per-round impacts, so each history's value follows from truncated
    normal means; ties within `tie` are kept as co-maximizers.
    """
    L = LADDER_LEVELS

    def argmax(scored):
        best = max(s for s, _ in scored)
        return [x for s, x in scored if s >= best - tie], best

    policy = {"D1": {}, "A2": {}, "D3": {}, "A4": {}, "D5": {}}

    def v5(d1, a2, d3, a4):
        scored = [(ladder_stage_utils(d1, a2, d3, a4, d5)[0], d5) for d5 in L]
        maxi, _ = argmax(scored)
        policy["D5"][(d1, a2, d3, a4)] = maxi
        d5 = maxi[0]
        return ladder_stage_utils(d1, a2, d3, a4, d5)

    def v4(d1, a2, d3):
        scored = [(v5(d1, a2, d3, a4)[1], a4) for a4 in L]
        maxi, _ = argmax(scored)
        policy["A4"][(d1, a2, d3)] = maxi
        outs = [v5(d1, a2, d3, a4) for a4 in maxi]
        return tuple(sum(o[i] for o in outs) / len(outs) for i in range(2))

    def v3(d1, a2):
        scored = [(v4(d1, a2, d3)[0], d3) for d3 in L]
        maxi, _ = argmax(scored)
        policy["D3"][(d1, a2)] = maxi
        outs = [v4(d1, a2, d3) for d3 in maxi]
        return tuple(sum(o[i] for o in outs) / len(outs) for i in range(2))

    def v2(d1):
        scored = [(v3(d1, a2)[1], a2) for a2 in L]
        maxi, _ = argmax(scored)
        policy["A2"][(d1,)] = maxi
        outs = [v3(d1, a2) for a2 in maxi]
        return tuple(sum(o[i] for o in outs) / len(outs) for i in range(2))

    scored = [(v2(d1)[0], d1) for d1 in L]
    maxi, best = argmax(scored)
    policy["D1"][()] = maxi
    outs = [v2(d1) for d1 in maxi]
    value = tuple(sum(o[i] for o in outs) / len(outs) for i in range(2))
    return policy, value[0], value[1], dict(zip(L, [s for s, _ in scored]))


def ladder_followup_choice(d1: float, breach_first: bool, d3: float, breach_second: bool):
    """Reference for the mid-game decisions when only breaches are seen.

    The opening attack stays hidden; `breach_first` says whether it overcame
    d1. The posterior over the hidden attack is uniform on the consistent
    levels. Returns (best third-stage levels, per-option scores) when called
    with breach_second None, else the final-stage equivalent.
    """
    L = LADDER_LEVELS
    a2_support = [a for a in L if (a > d1) == breach_first]

    if breach_second is None:
        # choose d3 against the a2 posterior; a4 and d5 play on optimally
        scores = []
        for d3x in L:
            total = 0.0
            for a2 in a2_support:
                # attacker picks a4 knowing everything; defender then d5
                best_a = None
                for a4 in L:
                    best_d5 = max(L, key=lambda d5: ladder_stage_utils(d1, a2, d3x, a4, d5)[0])
                    ua = ladder_stage_utils(d1, a2, d3x, a4, best_d5)[1]
                    if best_a is None or ua > best_a[0]:
                        best_a = (ua, a4, best_d5)
                _, a4, d5 = best_a
                total += ladder_stage_utils(d1, a2, d3x, a4, d5)[0]
            scores.append(total / len(a2_support))
        best = max(scores)
        return [L[i] for i, s in enumerate(scores) if s >= best - 1e-9], scores

    # final stage: posterior over the second hidden attack given its breach
    a4_support = [a for a in L if (a > d3) == breach_second]
    scores = []
    for d5 in L:
        total = 0.0
        for a2 in a2_support:
            for a4 in a4_support:
                total += ladder_stage_utils(d1, a2, d3, a4, d5)[0]
        scores.append(total / (len(a2_support) * len(a4_support)))
    best = max(scores)
    return [L[i] for i, s in enumerate(scores) if s >= best - 1e-9], scores


# -- seeded Monte Carlo for the site-protection game -------------------------------------

MC_SEED = 20250815


def site_protection_cell(defense: float, attacks: int, n: int, rng: np.random.Generator):
    """Simulate one (defense level, attack count) cell of the intrusion game.

    Returns ((defender mean, se), (attacker mean, se)) over n paths drawn
    directly from the generative story, bypassing every engine approximation.
    """
    shape = rng.uniform(4.8, 5.6, n)
    scale = rng.uniform(0.8, 1.2, n)
    skill = rng.gamma(shape, scale)
    exposure = np.minimum(np.maximum(skill - defense, 0.0) / (defense + 1e-4), 1.0)
    hits = rng.binomial(attacks, exposure)
    caught = rng.binomial(attacks, 0.002, n)
    detected = caught > 0
    blowback = rng.normal(2430000.0, math.sqrt(400000.0), n)
    legal = np.where(detected, blowback, 0.0)
    h_shape = rng.uniform(3.6, 4.8, n)
    h_scale = rng.uniform(0.8, 1.2, n)
    hours = rng.gamma(h_shape, h_scale)
    downtime = hours * hits
    loss_rate = rng.uniform(0.00521, 0.00833, n)
    impact = np.minimum(1500000.0, downtime * loss_rate * 1500000.0)
    cost = {0: 0.0, 2: 2400.0, 5: 3600.0, 10: 4800.0, 100: 12000.0}[int(defense)]
    du = -impact - cost
    au = impact - legal - 792.0 * attacks
    return (
        (float(du.mean()), float(du.std(ddof=1) / math.sqrt(n))),
        (float(au.mean()), float(au.std(ddof=1) / math.sqrt(n))),
    )
