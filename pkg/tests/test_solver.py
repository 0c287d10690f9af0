"""Backward induction checked against brute-force reference induction.

The reference (oracles.induct) solves by enumerating complete assignments,
so agreement on randomized alternating games checks policies, tie handling,
reachability flags and root values end to end. The deterrence fixture is
solved by hand in oracles.defend_attack_reference.
"""

from __future__ import annotations

import numpy as np
import pytest

from ara import model as M
from ara.discretize import discretize_diagram
from ara.errors import StageError
from ara.modelio import load_model
from ara.solver import TiePolicy, backward_induct, build_stage_tree, rollback, solve_stage

from oracles import PlainNet, defend_attack_reference, induct, random_rows


def _labels(k: int) -> list[str]:
    return [f"o{i}" for i in range(k)]


def _random_game(rng) -> M.InfluenceDiagram:
    """Alternating game with optional observed context, hidden moves and a
    noisy outcome feeding both payoffs."""
    b = M.DiagramBuilder()
    n_stages = int(rng.integers(1, 4))
    stage_names = [("D" if i % 2 == 0 else "A") + str(i) for i in range(n_stages)]
    owners = [M.DEFENDER if i % 2 == 0 else M.ATTACKER for i in range(n_stages)]

    observed = []
    if rng.random() < 0.5:
        k = int(rng.integers(2, 4))
        b.chance("C", states=_labels(k), table=random_rows(rng, k, 1, sparse=True)[0])
        observed.append("C")

    for i, (name, owner) in enumerate(zip(stage_names, owners)):
        inform = observed + stage_names[:i]
        if inform and rng.random() < 0.3:
            inform = [x for x in inform if x != inform[int(rng.integers(0, len(inform)))]]
        b.decision(name, owner, _labels(int(rng.integers(2, 4))), inform=inform)

    # outcome over every move; row count is the product of option counts
    k = int(rng.integers(2, 4))
    counts = [v.domain.size for v in b._variables if v.kind == M.DECISION]
    n_rows = int(np.prod(counts)) if counts else 1
    flat = [x for row in random_rows(rng, k, n_rows, sparse=True) for x in row]
    b.chance("S", states=_labels(k), parents=stage_names, table=flat)

    aggregates = {}
    for owner, prefix in ((M.DEFENDER, "UD"), (M.ATTACKER, "UA")):
        n_parts = int(rng.integers(1, 3))
        parts = []
        for i in range(n_parts):
            name = f"{prefix}{i}" if n_parts > 1 else prefix
            pool = stage_names + ["S"]
            n_par = int(rng.integers(1, min(len(pool), 2) + 1))
            parents = sorted(rng.choice(pool, size=n_par, replace=False).tolist())
            size = 1
            for p in parents:
                size *= next(v.domain.size for v in b._variables if v.name == p)
            b.utility(name, owner, parents=parents, table=(rng.random(size) * 20.0 - 10.0).tolist())
            parts.append(name)
        if n_parts > 1:
            b.utility(prefix, owner)
            aggregates[prefix] = tuple(parts)
    return b.build(stage_order=stage_names, utility_aggregates=aggregates)


def _compare_with_reference(diagram: M.InfluenceDiagram, tol: float = 1e-9) -> None:
    order = [n for n, _ in M.stage_order(diagram)]
    oracle = PlainNet(diagram)
    want_policies, want_dv, want_av = induct(oracle, order)
    got = backward_induct(diagram)
    assert [s.decision for s in got.stages] == order
    for stage in got.stages:
        want = want_policies[stage.decision]
        assert set(stage.as_assignments()) == set(want)
        for entry in stage.entries:
            scores, maximizers, reachable = want[entry.config]
            assert entry.reachable == reachable, (stage.decision, entry.config)
            assert list(entry.maximizers) == maximizers, (stage.decision, entry.config)
            if reachable:
                assert entry.expected == pytest.approx(scores, abs=tol)
            else:
                assert entry.expected is None
    assert got.defender_value == pytest.approx(want_dv, abs=tol)
    assert got.attacker_value == pytest.approx(want_av, abs=tol)


class TestDeterrenceFixture:
    def test_hand_solved_policies_and_values(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        want = defend_attack_reference()
        got = backward_induct(diagram)
        attacker = got.stage("A")
        for config, choice in want["attacker_policy"].items():
            assert list(attacker.entry_for(config).maximizers) == choice
        defender = got.stage("D")
        assert list(defender.entry_for(()).maximizers) == want["defender_policy"][()]
        assert got.defender_value == pytest.approx(want["defender_value"], abs=1e-9)
        assert got.attacker_value == pytest.approx(want["attacker_value"], abs=1e-9)

    def test_matches_reference_induction(self, models_dir):
        _compare_with_reference(load_model(models_dir / "da.json"))

    def test_policy_overwrites_decision_tables(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        got = backward_induct(diagram)
        d = got.diagram.variable("D").cpd
        a = got.diagram.variable("A").cpd
        assert d.values == (1.0, 0.0)  # defend
        assert a.values == (0.0, 1.0, 1.0, 0.0)  # attack exactly when open

    def test_three_stage_fixture_matches_reference(self, models_dir):
        # breach indicators are formulas; compile them to tables first
        diagram = discretize_diagram(load_model(models_dir / "dad.json")).diagram
        _compare_with_reference(diagram)


class TestRandomGames:
    def test_hundred_games_match_reference(self, rng):
        for _ in range(100):
            _compare_with_reference(_random_game(rng))

    def test_committed_stages_are_respected(self, rng):
        for _ in range(10):
            diagram = _random_game(rng)
            order = [n for n, _ in M.stage_order(diagram)]
            if len(order) < 2:
                continue
            first = order[0]
            state = diagram.variable(first).domain.labels[0]
            # solve only the tail with the opening move fixed
            got = backward_induct(diagram, evidence={first: state}, stages=tuple(order[1:]))
            assert [s.decision for s in got.stages] == order[1:]
            oracle = PlainNet(diagram)
            oracle.rows[first] = {c: [1.0 if lbl == state else 0.0 for lbl in oracle.labels[first]] for c in oracle.rows[first]}
            want_policies, want_dv, want_av = induct(oracle, order[1:])
            for stage in got.stages:
                want = want_policies[stage.decision]
                for entry in stage.entries:
                    scores, maximizers, reachable = want[entry.config]
                    if entry.reachable and reachable:
                        assert list(entry.maximizers) == maximizers
            assert got.defender_value == pytest.approx(want_dv, abs=1e-9)
            assert got.attacker_value == pytest.approx(want_av, abs=1e-9)


class TestTies:
    def _symmetric_game(self):
        # left and right cost the same and work the same: a pure tie;
        # skip lands at -24 against their -20
        return (
            M.DiagramBuilder()
            .decision("D", M.DEFENDER, ["left", "right", "skip"])
            .chance("S", states=["hit", "miss"], parents=["D"], table=[0.1, 0.9, 0.1, 0.9, 0.2, 0.8])
            .utility("U", M.DEFENDER, parents=["D", "S"], table=[-110.0, -10.0, -110.0, -10.0, -100.0, -5.0])
            .utility("V", M.ATTACKER, parents=["S"], table=[50.0, 0.0])
            .build()
        )

    def test_exact_ties_split_uniformly(self):
        got = backward_induct(self._symmetric_game())
        stage = got.stage("D")
        entry = stage.entry_for(())
        assert list(entry.maximizers) == ["left", "right"]
        assert got.diagram.variable("D").cpd.values == (0.5, 0.5, 0.0)

    def test_wide_relative_tolerance_pools_near_ties(self):
        # EU(left) = EU(right) = -20, EU(skip) = -24; only the defender's own
        # payoffs set the scale, so threshold max(1e-9, 0.05 * 110) = 5.5
        # swallows the gap of 4
        got = backward_induct(self._symmetric_game(), tie=TiePolicy(absolute=1e-9, relative=0.05))
        entry = got.stage("D").entry_for(())
        assert list(entry.maximizers) == ["left", "right", "skip"]
        assert got.diagram.variable("D").cpd.values == pytest.approx((1 / 3, 1 / 3, 1 / 3))

    def test_threshold_scales_with_owner_payoffs(self):
        got = backward_induct(self._symmetric_game())
        stage = got.stage("D")
        assert stage.scale == pytest.approx(110.0)
        assert stage.threshold == pytest.approx(max(1e-9, 1e-6 * 110.0))


class TestAffineInvariance:
    def test_policies_survive_positive_affine_rescaling(self, rng):
        alpha, beta = 2.0, -7.0
        for _ in range(20):
            diagram = _random_game(rng)
            base = backward_induct(diagram)
            defender_utils = [
                v.name
                for v in diagram.variables
                if v.kind == M.UTILITY and v.owner == M.DEFENDER and v.cpd is not None
            ]
            rebuilt = diagram
            for i, name in enumerate(defender_utils):
                u = diagram.variable(name)
                shift = beta if i == 0 else 0.0  # shift once so the sum moves by beta
                rebuilt = rebuilt.with_cpd(name, M.TableCpd(tuple(alpha * x + shift for x in u.cpd.values)))
            scaled = backward_induct(rebuilt)
            for stage, stage2 in zip(base.stages, scaled.stages):
                assert stage.as_assignments() == stage2.as_assignments(), stage.decision
            assert scaled.defender_value == pytest.approx(alpha * base.defender_value + beta, abs=1e-8)
            assert scaled.attacker_value == pytest.approx(base.attacker_value, abs=1e-9)


class TestStageGuards:
    def test_non_decision_rejected(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        with pytest.raises(StageError):
            solve_stage(diagram, "S")

    def test_committed_stage_rejected(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        with pytest.raises(StageError):
            solve_stage(diagram, "A", evidence={"A": "Yes"})

    def test_unknown_stage_list_rejected(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        with pytest.raises(StageError):
            backward_induct(diagram, stages=("D", "nope"))

    def test_evidence_marks_contradicting_configs_unreachable(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        policy = solve_stage(diagram, "A", evidence={"D": "No"})
        open_entry = policy.entry_for(("No",))
        assert open_entry.reachable
        assert list(open_entry.maximizers) == ["Yes"]
        blocked = policy.entry_for(("Yes",))
        assert not blocked.reachable
        assert blocked.expected is None
        assert blocked.maximizers == policy.options

    def test_empty_stage_tuple_solves_nothing_but_values(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        got = backward_induct(diagram, stages=())
        assert got.stages == ()
        # both decisions still uniform: value is the average play
        oracle = PlainNet(diagram)
        assert got.defender_value == pytest.approx(oracle.expected_utility("U_D", {}), abs=1e-9)
        assert got.attacker_value == pytest.approx(oracle.expected_utility("U_A", {}), abs=1e-9)


class TestRollback:
    def test_rollback_resets_tail_stages(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        solved = backward_induct(diagram).diagram
        tail = rollback(solved, "A")
        assert tail.variable("A").cpd.values == (0.5, 0.5, 0.5, 0.5)
        assert tail.variable("D").cpd.values == (1.0, 0.0)  # earlier stage untouched
        full = rollback(solved, "D")
        assert full.variable("D").cpd.values == (0.5, 0.5)
        assert full.variable("A").cpd.values == (0.5, 0.5, 0.5, 0.5)

    def test_rollback_then_resolve_reproduces_solution(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        first = backward_induct(diagram)
        again = backward_induct(rollback(first.diagram, "D"))
        assert first.defender_value == pytest.approx(again.defender_value, abs=1e-12)
        assert first.diagram.variable("A").cpd.values == again.diagram.variable("A").cpd.values

    def test_unknown_stage_rejected(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        with pytest.raises(StageError):
            rollback(diagram, "S")


class TestStageTrees:
    def test_deterrence_tree_from_the_top(self, models_dir):
        solved = backward_induct(load_model(models_dir / "da.json")).diagram
        tree = build_stage_tree(solved, "D")
        assert (tree.variable, tree.kind, tree.owner) == ("D", "decision", M.DEFENDER)
        assert tree.value == pytest.approx(-100.0, abs=1e-9)
        by_label = {b.label: b for b in tree.branches}
        assert by_label["Yes"].chosen and not by_label["No"].chosen
        assert by_label["Yes"].probability is None
        assert by_label["Yes"].value == pytest.approx(-100.0, abs=1e-9)
        assert by_label["No"].value == pytest.approx(-160.0, abs=1e-9)

    def test_zero_probability_branches_are_pruned(self, models_dir):
        solved = backward_induct(load_model(models_dir / "da.json")).diagram
        tree = build_stage_tree(solved, "D")
        defended = next(b for b in tree.branches if b.label == "Yes").child
        assert defended.variable == "A"
        assert defended.kind == "chance"
        assert [b.label for b in defended.branches] == ["No"]  # attack branch pruned
        assert defended.branches[0].probability == pytest.approx(1.0, abs=1e-12)

    def test_anticipated_chance_values_average_children(self, models_dir):
        diagram = discretize_diagram(load_model(models_dir / "dad.json")).diagram
        solved = backward_induct(diagram).diagram
        tree = build_stage_tree(solved, "D1")
        for branch in tree.branches:
            child = branch.child
            if child is None or child.kind != "chance":
                continue
            want = sum(b.probability * b.value for b in child.branches)
            assert child.value == pytest.approx(want, abs=1e-9)

    def test_mid_game_tree_honours_evidence(self, models_dir):
        # the solved opener never leaves the site open, so reset it before
        # asking what the attacker would do at an open site
        solved = backward_induct(load_model(models_dir / "da.json")).diagram
        tree = build_stage_tree(rollback(solved, "D"), "A", evidence={"D": "No"})
        assert (tree.variable, tree.owner) == ("A", M.ATTACKER)
        by_label = {b.label: b for b in tree.branches}
        assert by_label["Yes"].chosen and not by_label["No"].chosen
        assert by_label["Yes"].value == pytest.approx(60.0, abs=1e-9)
        assert by_label["No"].value == pytest.approx(0.0, abs=1e-9)
        assert tree.value == pytest.approx(60.0, abs=1e-9)

    def test_non_stage_root_rejected(self, models_dir):
        diagram = load_model(models_dir / "da.json")
        with pytest.raises(StageError):
            build_stage_tree(diagram, "S")
