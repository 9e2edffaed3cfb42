"""Exact joint-tensor inference: utility distributions, tail risk,
enumeration, and the exhaustive optimizer, checked against slow
pure-Python re-computations and hand-worked numbers."""

import numpy as np
import pytest

from limid.diagram import CapExceededError, Strategy
from limid.generators import PigFarmSpec, gen_pigfarm
from limid.inference import (
    Evaluator,
    UtilityDistribution,
    cvar_of_distribution,
    enumerate_strategies,
    evaluate_strategy,
    joint_marginal,
    oracle_optimize,
    strategy_count,
    tail_witness,
)
from limid.risk import (
    ChanceConstraint,
    CvarConstraint,
    CvarObjective,
    MeuObjective,
    parse_chance_text,
    parse_event,
)

from helpers import (
    slow_cvar,
    small_random_diagram,
    slow_distribution,
    slow_expected,
    slow_marginal,
    slow_meu,
    slow_strategies,
)


def match_atoms(dist: UtilityDistribution, slow: dict, tol: float = 1e-12):
    """Assert the package distribution equals the dict-based slow one."""
    assert len(dist.atoms) == len(slow)
    slow_sorted = sorted(slow.items())
    for (u, p), (su, sp) in zip(dist.atoms, slow_sorted):
        assert u == pytest.approx(su, abs=1e-9)
        assert p == pytest.approx(sp, abs=tol)


class TestUtilityDistribution:
    def test_rejects_unsorted_or_unnormalized(self):
        with pytest.raises(ValueError, match="ascending"):
            UtilityDistribution(
                utilities=np.array([2.0, 1.0]),
                probabilities=np.array([0.5, 0.5]),
            )
        with pytest.raises(ValueError, match="sum"):
            UtilityDistribution(
                utilities=np.array([1.0, 2.0]),
                probabilities=np.array([0.5, 0.6]),
            )

    def test_from_values_aggregates_duplicates(self):
        d = UtilityDistribution.from_values(
            np.array([3.0, 1.0, 3.0]), np.array([0.2, 0.5, 0.3])
        )
        assert d.atoms == [(1.0, 0.5), (3.0, 0.5)]
        assert d.expected() == pytest.approx(2.0)

    def test_from_values_drops_zero_mass_atoms(self):
        d = UtilityDistribution.from_values(
            np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.0, 0.5])
        )
        assert [u for u, _ in d.atoms] == [1.0, 3.0]


class TestCvar:
    def setup_method(self):
        self.coin = UtilityDistribution(
            utilities=np.array([0.0, 10.0]),
            probabilities=np.array([0.5, 0.5]),
        )

    def test_hand_worked_two_atom_cases(self):
        assert cvar_of_distribution(self.coin, 0.25).cvar == pytest.approx(0.0)
        assert cvar_of_distribution(self.coin, 0.25).var == 0.0
        assert cvar_of_distribution(self.coin, 0.5).cvar == pytest.approx(0.0)
        r = cvar_of_distribution(self.coin, 0.75)
        assert r.var == 10.0
        assert r.cvar == pytest.approx(10.0 / 3.0)

    def test_alpha_one_recovers_expectation(self):
        assert cvar_of_distribution(self.coin, 1.0).cvar == pytest.approx(5.0)

    def test_alpha_validated(self):
        with pytest.raises(ValueError):
            cvar_of_distribution(self.coin, 0.0)
        with pytest.raises(ValueError):
            cvar_of_distribution(self.coin, 1.5)

    def test_matches_slow_cvar_on_random_distributions(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = int(rng.integers(1, 7))
            u = np.sort(rng.uniform(-50, 50, size=k))
            u = np.unique(np.round(u, 6))
            p = rng.random(u.size) + 0.05
            p = p / p.sum()
            dist = UtilityDistribution(utilities=u, probabilities=p)
            alpha = float(rng.uniform(0.05, 1.0))
            got = cvar_of_distribution(dist, alpha).cvar
            want = slow_cvar(dict(dist.atoms), alpha)
            assert got == pytest.approx(want, abs=1e-9)


class TestTailWitness:
    def test_boundary_atom_gets_partial_share(self):
        dist = UtilityDistribution(
            utilities=np.array([200.0, 300.0, 1000.0]),
            probabilities=np.array([0.1, 0.5, 0.4]),
        )
        w = tail_witness(dist, alpha=0.15)
        assert w["eta"] == 300.0
        assert w["below"].tolist() == [True, False, False]
        assert w["at_or_below"].tolist() == [True, True, False]
        assert w["tail_share"].tolist() == pytest.approx([0.1, 0.05, 0.0])
        assert w["tail_share"].sum() == pytest.approx(0.15)
        # averaging the tail shares reproduces CVaR
        cvar = float(np.dot(w["tail_share"], dist.utilities)) / 0.15
        assert cvar == pytest.approx(cvar_of_distribution(dist, 0.15).cvar)

    def test_explicit_eta_is_respected(self):
        dist = UtilityDistribution(
            utilities=np.array([0.0, 10.0]),
            probabilities=np.array([0.5, 0.5]),
        )
        w = tail_witness(dist, alpha=0.6, eta=5.0)
        assert w["eta"] == 5.0
        assert w["below"].tolist() == [True, False]
        assert w["at_or_below"].tolist() == [True, False]

    def test_shares_sum_to_alpha_across_random_cases(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            k = int(rng.integers(1, 6))
            u = np.unique(np.round(rng.uniform(-5, 5, size=k), 5))
            p = rng.random(u.size) + 0.1
            dist = UtilityDistribution(utilities=u, probabilities=p / p.sum())
            alpha = float(rng.uniform(0.05, 1.0))
            w = tail_witness(dist, alpha)
            assert w["tail_share"].sum() == pytest.approx(alpha, abs=1e-12)
            assert np.all(w["tail_share"] >= -1e-15)
            assert np.all(w["tail_share"] <= dist.probabilities + 1e-15)


class TestEvaluateStrategy:
    def test_matches_slow_enumeration_on_random_diagrams(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            d = small_random_diagram(rng, max_nodes=7, require_value=True)
            for strategy in slow_strategies(d):
                dist = evaluate_strategy(d, strategy)
                match_atoms(dist, slow_distribution(d, strategy))
                break  # one strategy per diagram keeps this loop quick

    def test_expected_utility_matches_slow_on_all_strategies(self):
        rng = np.random.default_rng(12)
        d = small_random_diagram(
            rng, limit=64, min_nodes=5, max_nodes=6, require_value=True
        )
        for strategy in slow_strategies(d):
            got = evaluate_strategy(d, strategy).expected()
            assert got == pytest.approx(slow_expected(d, strategy), abs=1e-9)

    def test_never_treating_pig_farm_matches_markov_chain(self):
        # Independent re-computation: with no treatment the health stage is
        # a two-state Markov chain with P(ill stays ill) = 0.9 and
        # P(healthy turns ill) = 0.2; the only payoff is the final price.
        T = np.array([[0.8, 0.2], [0.1, 0.9]])
        start = np.array([0.9, 0.1])
        final = start @ np.linalg.matrix_power(T, 3)
        want = 1000.0 * final[0] + 300.0 * final[1]
        assert want == pytest.approx(669.39)

        d = gen_pigfarm(PigFarmSpec(n_periods=3))
        never = Strategy(
            rules={"D1": (0, 0), "D2": (0, 0), "D3": (0, 0)}
        )
        assert evaluate_strategy(d, never).expected() == pytest.approx(
            want, abs=1e-9
        )

    def test_rejects_inconsistent_strategy(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=1))
        with pytest.raises(ValueError):
            evaluate_strategy(d, Strategy(rules={"D1": (0,)}))

    def test_joint_cap_enforced(self):
        rng = np.random.default_rng(3)
        d = small_random_diagram(rng, min_nodes=6, max_nodes=6)
        with pytest.raises(CapExceededError):
            evaluate_strategy(d, next(slow_strategies(d)), cap=4)


class TestJointMarginal:
    def test_matches_slow_marginal(self):
        rng = np.random.default_rng(31)
        for _ in range(15):
            d = small_random_diagram(rng, max_nodes=6)
            strategy = next(slow_strategies(d))
            names = [n.name for n in d.nodes]
            k = int(rng.integers(1, min(3, len(names)) + 1))
            scope = [str(s) for s in rng.choice(names, size=k, replace=False)]
            table = joint_marginal(d, strategy, scope)
            indexer = d.indexer(scope)
            slow = slow_marginal(d, strategy, scope)
            assert table.size == indexer.total
            assert table.sum() == pytest.approx(1.0, abs=1e-9)
            for idx in range(indexer.total):
                key = indexer.states_of(idx)
                assert table[idx] == pytest.approx(
                    slow.get(key, 0.0), abs=1e-12
                )

    def test_scope_order_is_respected(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=1))
        strategy = Strategy(rules={"D1": (0, 1)})
        ab = joint_marginal(d, strategy, ["H1", "T1"]).reshape(2, 2)
        ba = joint_marginal(d, strategy, ["T1", "H1"]).reshape(2, 2)
        np.testing.assert_allclose(ab, ba.T, atol=1e-15)

    def test_repeated_scope_rejected(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=1))
        with pytest.raises(ValueError, match="repeat"):
            joint_marginal(d, Strategy(rules={"D1": (0, 1)}), ["H1", "H1"])


class TestEnumeration:
    def test_count_and_uniqueness_on_pig_farm(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=2))
        assert strategy_count(d) == 16
        seen = [
            tuple(sorted((k, v) for k, v in s.rules.items()))
            for s in enumerate_strategies(d)
        ]
        assert len(seen) == 16
        assert len(set(seen)) == 16

    def test_lexicographic_order(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=2))
        strategies = list(enumerate_strategies(d))
        assert strategies[0].rules == {"D1": (0, 0), "D2": (0, 0)}
        assert strategies[1].rules == {"D1": (0, 0), "D2": (0, 1)}
        assert strategies[-1].rules == {"D1": (1, 1), "D2": (1, 1)}

    def test_cap_enforced(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=3))
        with pytest.raises(CapExceededError):
            list(enumerate_strategies(d, cap=10))


class TestOracleOptimize:
    def test_pig_farm_expected_utilities(self):
        # Frozen optima, re-derivable by the slow oracle below.
        for n, want in [(1, 821.8), (2, 767.06), (3, 728.742)]:
            d = gen_pigfarm(PigFarmSpec(n_periods=n))
            res = oracle_optimize(d)
            assert res.feasible
            assert res.objective_value == pytest.approx(want, abs=1e-9)
            assert evaluate_strategy(d, res.best).expected() == pytest.approx(
                res.objective_value, abs=1e-12
            )

    def test_matches_slow_meu_on_random_diagrams(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            d = small_random_diagram(rng, max_nodes=6, require_value=True)
            res = oracle_optimize(d)
            want, _ = slow_meu(d)
            assert res.objective_value == pytest.approx(want, abs=1e-9)
            assert res.n_strategies == strategy_count(d)
            assert res.n_feasible == res.n_strategies

    def test_cvar_objective_prefers_safe_strategy(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=3))
        res = oracle_optimize(d, objective=CvarObjective(alpha=0.15))
        # check against explicit enumeration with the slow tail formula
        best = max(
            slow_cvar(slow_distribution(d, s), 0.15)
            for s in slow_strategies(d)
        )
        assert res.objective_value == pytest.approx(best, abs=1e-9)

    def test_cvar_alpha_one_equals_meu(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=2))
        meu = oracle_optimize(d, objective=MeuObjective())
        cvar = oracle_optimize(d, objective=CvarObjective(alpha=1.0))
        assert cvar.objective_value == pytest.approx(
            meu.objective_value, abs=1e-12
        )

    def test_chance_constraint_filters_strategies(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=2))
        con = parse_chance_text("P(H2=ill) <= 0.15")
        res = oracle_optimize(d, constraints=[con])
        assert res.feasible
        assert 0 < res.n_feasible < res.n_strategies
        # verify the winner honours the bound via the slow marginal
        got = slow_marginal(d, res.best, ["H2"])[(1,)]
        assert got <= 0.15 + 1e-9
        # and that it beats every other feasible strategy
        for s in slow_strategies(d):
            if slow_marginal(d, s, ["H2"]).get((1,), 0.0) <= 0.15 + 1e-9:
                assert slow_expected(d, s) <= res.objective_value + 1e-9

    def test_unsatisfiable_constraint_reports_infeasible(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=1))
        con = ChanceConstraint(
            event=parse_event("H1=ill"), sense="<=", p=0.05
        )
        res = oracle_optimize(d, constraints=[con])
        assert not res.feasible
        assert res.best is None
        assert res.objective_value is None
        assert res.n_feasible == 0

    def test_cvar_constraint_respected(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=2))
        con = CvarConstraint(alpha=0.2, bound=250.0)
        res = oracle_optimize(d, constraints=[con])
        assert res.feasible
        dist = evaluate_strategy(d, res.best)
        assert cvar_of_distribution(dist, 0.2).cvar >= 250.0 - 1e-9

    def test_tie_break_is_lexicographically_first(self):
        rng = np.random.default_rng(41)
        d = small_random_diagram(rng, max_nodes=5, require_value=False)
        # with no value nodes every strategy scores zero: the first wins
        res = oracle_optimize(d)
        first = next(enumerate_strategies(d))
        assert res.best == first
        assert res.objective_value == pytest.approx(0.0)


class TestEvaluatorReuse:
    def test_cached_evaluator_agrees_with_one_shot_calls(self):
        d = gen_pigfarm(PigFarmSpec(n_periods=2))
        ev = Evaluator(d)
        for s in enumerate_strategies(d):
            assert ev.distribution(s).expected() == pytest.approx(
                evaluate_strategy(d, s).expected(), abs=1e-12
            )
