import numpy as np
import pytest

from liftworlds import (
    Constant,
    Constraint,
    ConstraintsMisaligned,
    Evidence,
    GroundAtom,
    InferenceError,
    NotCountNormalized,
    Parfactor,
    ParameterisedModel,
    PotentialTable,
    QuerySpec,
    ValidationError,
    absorb,
    ground,
    ground_ve,
    lift_multiply,
    lift_sum_out,
    lifted_query,
    split,
)
from support import (
    EPID,
    SICK,
    T,
    TRAVEL,
    TREAT,
    X,
    all_atoms,
    epidemic_model,
    joint_enumeration,
    ts,
    unnormalized_table,
    xs,
)


def atom(name, *args):
    return GroundAtom(name, tuple(Constant(a) for a in args))


def c_x(n):
    return Constraint.extensional((X,), [(x,) for x in xs(n)])


def c_xt(nx, nt):
    return Constraint.extensional((X, T), [(x, t) for x in xs(nx) for t in ts(nt)])


class TestGroundVE:
    def test_single_factor_normalization(self):
        m = ParameterisedModel(
            (Parfactor(PotentialTable((EPID,), [1, 3]), Constraint.extensional((), [()])),)
        )
        result = ground_ve(m, QuerySpec((atom("Epid"),)))
        assert np.allclose(result.probs, [0.25, 0.75])

    def test_disconnected_factors_are_independent_of_domain_size(self):
        for d in (1, 3, 5):
            g = Parfactor(PotentialTable((SICK,), [1, 4]), c_x(d))
            m = ParameterisedModel((g,))
            result = ground_ve(m, QuerySpec((atom("Sick", "x1"),)))
            assert np.allclose(result.probs, [0.2, 0.8])

    def test_matches_joint_enumeration(self, rng):
        for _ in range(20):
            dx, dt = int(rng.integers(1, 4)), int(rng.integers(1, 3))
            m = epidemic_model(dx, dt, rng)
            atoms = all_atoms(m)
            target = atoms[int(rng.integers(len(atoms)))]
            others = [a for a in atoms if a != target]
            n_ev = int(rng.integers(0, 3))
            ev = [
                (others[i], ["false", "true"][int(rng.integers(2))])
                for i in rng.permutation(len(others))[:n_ev]
            ]
            got = ground_ve(m, QuerySpec((target,), Evidence(tuple(ev))))
            want = joint_enumeration(m, (target,), ev)
            assert np.max(np.abs(got.probs - want)) < 1e-9

    def test_unknown_atom_rejected(self):
        m = epidemic_model(2, 2)
        with pytest.raises(InferenceError, match="not in model"):
            ground_ve(m, QuerySpec((atom("Sick", "x9"),)))

    def test_inconsistent_evidence_rejected(self):
        g = Parfactor(PotentialTable((EPID, SICK), [1, 0, 1, 0]), c_x(1))
        m = ParameterisedModel((g,))
        q = QuerySpec((atom("Epid"),), Evidence(((atom("Sick", "x1"), "true"),)))
        with pytest.raises(InferenceError, match="inconsistent evidence"):
            ground_ve(m, q)


class TestLiftMultiply:
    def test_identical_constraints_multiply_pointwise(self, rng):
        v1, v2 = rng.uniform(0.1, 2, 4), rng.uniform(0.1, 2, 4)
        g1 = Parfactor(PotentialTable((EPID, SICK), v1), c_x(3))
        g2 = Parfactor(PotentialTable((EPID, SICK), v2), c_x(3))
        out = lift_multiply(g1, g2)
        assert out.constraint == c_x(3)
        assert np.allclose(out.table.values, v1 * v2, rtol=1e-12)

    def test_table_of_ones_is_identity(self, rng):
        v = rng.uniform(0.1, 2, 4)
        g1 = Parfactor(PotentialTable((EPID, SICK), v), c_x(2))
        g2 = Parfactor(PotentialTable((EPID, SICK), np.ones(4)), c_x(2))
        out = lift_multiply(g1, g2)
        assert np.allclose(out.table.values, v, rtol=1e-12)

    def test_disjoint_arguments_outer_product(self, rng):
        # singleton groups over unrelated logvars; checked against ground_ve
        from liftworlds import Logvar, PRV

        y = Logvar("Y")
        travel_y = PRV("Travel", (y,))
        v1, v2 = rng.uniform(0.1, 2, 2), rng.uniform(0.1, 2, 2)
        g1 = Parfactor(PotentialTable((SICK,), v1), c_x(1))
        g2 = Parfactor(
            PotentialTable((travel_y,), v2),
            Constraint.extensional((y,), [(Constant("x2"),)]),
        )
        out = lift_multiply(g1, g2)
        assert np.allclose(out.table.as_array(), np.outer(v1, v2), rtol=1e-12)
        m = ParameterisedModel((g1, g2))
        q = QuerySpec((atom("Sick", "x1"), atom("Travel", "x2")))
        got = ground_ve(m, q).probs
        want = (np.outer(v1, v2) / np.outer(v1, v2).sum()).ravel()
        assert np.max(np.abs(got - want)) < 1e-9

    def test_misaligned_constraints_rejected(self):
        g1 = Parfactor(PotentialTable((EPID, SICK), np.arange(1, 5)), c_x(3))
        g2 = Parfactor(PotentialTable((EPID, SICK), np.arange(1, 5)), c_x(2))
        with pytest.raises(ConstraintsMisaligned):
            lift_multiply(g1, g2)

    def test_zero_ary_against_group_rejected(self):
        g0 = Parfactor(PotentialTable((EPID,), [3, 1]), Constraint.extensional((), [()]))
        g1 = Parfactor(PotentialTable((EPID, SICK), np.arange(1, 5)), c_x(3))
        with pytest.raises(ConstraintsMisaligned):
            lift_multiply(g0, g1)


class TestLiftSumOut:
    def test_treatment_exponent_two(self, rng):
        v = rng.uniform(0.1, 2, 8)
        g2 = Parfactor(PotentialTable((EPID, SICK, TREAT), v), c_xt(3, 2))
        out = lift_sum_out(g2, TREAT)
        assert out.constraint == c_x(3)
        want = v.reshape(2, 2, 2).sum(axis=2) ** 2
        assert np.allclose(out.table.as_array(), want, rtol=1e-9)

    def test_travel_exponent_one(self, rng):
        v = rng.uniform(0.1, 2, 8)
        g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), v), c_x(3))
        out = lift_sum_out(g1, TRAVEL)
        assert out.constraint == c_x(3)
        assert np.allclose(out.table.as_array(), v.reshape(2, 2, 2).sum(axis=2), rtol=1e-9)

    def test_person_exponent_three(self):
        # potentials (epid, sick): tt->2, tf->1, ft->1, ff->3
        g12 = Parfactor(PotentialTable((EPID, SICK), [3, 1, 1, 2]), c_x(3))
        out = lift_sum_out(g12, SICK)
        assert out.constraint.tuples == ((),)
        assert np.allclose(out.table.values, [64.0, 27.0], rtol=1e-9)

    def test_ragged_constraint_rejected(self):
        a, b = xs(2)
        t1, t2 = ts(2)
        c = Constraint.extensional((X, T), [(a, t1), (a, t2), (b, t1)])
        g = Parfactor(PotentialTable((EPID, SICK, TREAT), np.arange(1, 9)), c)
        with pytest.raises(NotCountNormalized):
            lift_sum_out(g, TREAT)

    def test_absent_argument_rejected(self):
        g = Parfactor(PotentialTable((EPID, SICK), np.arange(1, 5)), c_x(2))
        with pytest.raises(ValidationError):
            lift_sum_out(g, TREAT)

    def test_shared_instances_need_grounding(self):
        # summing out Sick while Treat keeps X: each Sick(x) sits in two groundings
        g = Parfactor(PotentialTable((SICK, TREAT), np.arange(1, 5)), c_xt(2, 2))
        with pytest.raises(NotCountNormalized):
            lift_sum_out(g, SICK)

    def test_sum_out_commutes_with_grounding(self, rng):
        for d in (1, 2, 3, 4):
            v = rng.uniform(0.1, 2, 8)
            g2 = Parfactor(PotentialTable((EPID, SICK, TREAT), v), c_xt(d, 2))
            lifted_then_ground = ground(lift_sum_out(g2, TREAT))
            ranges = {}
            for f in ground(g2):
                for a, arg in zip(f.atoms, f.table.args):
                    ranges[a] = list(arg.range)
            keep = sorted(a for a in ranges if a.name != "Treat")
            want = unnormalized_table(ground(g2), keep, ranges)
            got = unnormalized_table(lifted_then_ground, keep, ranges)
            assert np.allclose(got, want, rtol=1e-9)


class TestSplit:
    def test_partition_sizes(self):
        g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), np.arange(1, 9)), c_x(3))
        part, rest = split(g1, X, {Constant("x3")})
        assert part.constraint.size == 1 and rest.constraint.size == 2

    def test_disjoint_constants(self):
        g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), np.arange(1, 9)), c_x(3))
        part, rest = split(g1, X, {Constant("zz")})
        assert part is None
        assert rest.constraint == g1.constraint

    def test_parts_partition_the_groundings(self):
        g2 = Parfactor(PotentialTable((EPID, SICK, TREAT), np.arange(1, 9)), c_xt(3, 2))
        part, rest = split(g2, X, {Constant("x1")})
        merged = sorted(f.atoms for f in ground(part) + ground(rest))
        assert merged == sorted(f.atoms for f in ground(g2))


class TestAbsorb:
    def test_slice_at_observed_value(self):
        g1 = Parfactor(
            PotentialTable((EPID, SICK, TRAVEL), np.arange(1.0, 9.0)),
            Constraint.extensional((X,), [(Constant("eve"),)]),
        )
        out = absorb(g1, Evidence(((atom("Sick", "eve"), "true"),)))
        assert out.table.args == (EPID, TRAVEL)
        assert np.allclose(out.table.values, [3, 4, 7, 8])
        assert out.constraint == g1.constraint

    def test_unrelated_evidence_is_ignored(self):
        g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), np.arange(1, 9)), c_x(2))
        assert absorb(g1, Evidence(((atom("Cough", "x1"), "true"),))) is g1

    def test_partial_observation_rejected(self):
        g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), np.arange(1, 9)), c_x(2))
        with pytest.raises(InferenceError, match="shatter"):
            absorb(g1, Evidence(((atom("Sick", "x1"), "true"),)))

    def test_conditional_query_matches_oracle(self, rng):
        m = epidemic_model(3, 2, rng)
        q = QuerySpec((atom("Epid"),), Evidence(((atom("Sick", "x3"), "true"),)))
        got = lifted_query(m, q)
        want = joint_enumeration(m, (atom("Epid"),), [(atom("Sick", "x3"), "true")])
        assert np.max(np.abs(got.probs - want)) < 1e-9

    def test_whole_group_absorption_raises_slice_to_group_size(self, rng):
        # dropping the only argument over X leaves the slice standing in for
        # every grounding at once; checked against the enumeration oracle
        v = rng.uniform(0.1, 2, 4)
        g = Parfactor(PotentialTable((EPID, SICK), v), c_x(2))
        ev = Evidence(((atom("Sick", "x1"), "true"), (atom("Sick", "x2"), "true")))
        out = absorb(g, ev)
        assert out.table.args == (EPID,)
        assert out.constraint.tuples == ((),)
        want = v.reshape(2, 2)[:, 1] ** 2
        assert np.allclose(out.table.values, want, rtol=1e-12)
        m = ParameterisedModel((g,))
        marginal = ground_ve(m, QuerySpec((atom("Epid"),), ev))
        assert np.allclose(marginal.probs, want / want.sum(), atol=1e-12)


class TestLiftedQuery:
    def test_matches_ground_ve_on_example_shape(self, rng):
        m = epidemic_model(3, 2, rng)
        q = QuerySpec((atom("Epid"),))
        assert np.max(np.abs(lifted_query(m, q).probs - ground_ve(m, q).probs)) < 1e-9

    def test_single_parameterless_parfactor(self):
        m = ParameterisedModel(
            (Parfactor(PotentialTable((EPID,), [1, 3]), Constraint.extensional((), [()])),)
        )
        assert np.allclose(lifted_query(m, QuerySpec((atom("Epid"),))).probs, [0.25, 0.75])

    def test_person_marginal_across_domain_sizes(self, rng):
        for d in range(2, 7):
            m = epidemic_model(d, 2, rng)
            q = QuerySpec((atom("Sick", "x1"),))
            got = lifted_query(m, q).probs
            want = ground_ve(m, q).probs
            assert np.max(np.abs(got - want)) < 1e-9

    def test_interchangeable_persons_get_identical_marginals(self, rng):
        m = epidemic_model(4, 2, rng)
        probs = [
            lifted_query(m, QuerySpec((atom("Sick", f"x{i + 1}"),))).probs for i in range(4)
        ]
        for p in probs[1:]:
            assert np.allclose(p, probs[0], atol=1e-12)

    def test_overlapping_groups_are_refined(self, rng):
        # g2 covers only two of the three persons
        v0, v1, v2 = rng.uniform(0.1, 2, 2), rng.uniform(0.1, 2, 8), rng.uniform(0.1, 2, 8)
        g0 = Parfactor(PotentialTable((EPID,), v0), Constraint.extensional((), [()]))
        g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), v1), c_x(3))
        g2 = Parfactor(
            PotentialTable((EPID, SICK, TREAT), v2),
            Constraint.extensional((X, T), [(x, t) for x in xs(2) for t in ts(2)]),
        )
        m = ParameterisedModel((g0, g1, g2))
        for target in (atom("Epid"), atom("Sick", "x3"), atom("Sick", "x1")):
            q = QuerySpec((target,))
            assert np.max(np.abs(lifted_query(m, q).probs - ground_ve(m, q).probs)) < 1e-9

    def test_ragged_constraint_falls_back_to_grounding(self, rng):
        a, b = xs(2)
        t1, t2 = ts(2)
        v0, v1, v2 = rng.uniform(0.1, 2, 2), rng.uniform(0.1, 2, 8), rng.uniform(0.1, 2, 8)
        g0 = Parfactor(PotentialTable((EPID,), v0), Constraint.extensional((), [()]))
        g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), v1), c_x(2))
        g2 = Parfactor(
            PotentialTable((EPID, SICK, TREAT), v2),
            Constraint.extensional((X, T), [(a, t1), (a, t2), (b, t1)]),
        )
        m = ParameterisedModel((g0, g1, g2))
        q = QuerySpec((atom("Epid"),))
        log = []
        got = lifted_query(m, q, op_log=log)
        assert any(r.kind == "ground" for r in log)
        assert np.max(np.abs(got.probs - ground_ve(m, q).probs)) < 1e-9

    def test_multi_target_query(self, rng):
        m = epidemic_model(3, 2, rng)
        q = QuerySpec((atom("Sick", "x1"), atom("Travel", "x2")))
        got = lifted_query(m, q)
        want = ground_ve(m, q)
        assert got.probs.shape == (4,)
        assert np.max(np.abs(got.probs - want.probs)) < 1e-9

    def test_operation_log_records_exponents(self):
        m = epidemic_model(3, 2)
        log = []
        lifted_query(m, QuerySpec((atom("Epid"),)), op_log=log)
        exponents = {r.detail: r.exponent for r in log if r.kind == "sum_out"}
        assert exponents == {"Treat": 2, "Travel": 1, "Sick": 3}

    def test_operation_count_constant_in_domain_size(self):
        counts = []
        for d in (10, 100, 1000):
            log = []
            lifted_query(epidemic_model(d, 2), QuerySpec((atom("Epid"),)), op_log=log)
            counts.append(len(log))
        assert counts[0] == counts[1] == counts[2]

    def test_huge_exponents_stay_finite(self):
        m = epidemic_model(1000, 2)
        probs = lifted_query(m, QuerySpec((atom("Epid"),))).probs
        assert np.all(np.isfinite(probs)) and abs(probs.sum() - 1) < 1e-9

    def test_evidence_on_pair_argument(self, rng):
        m = epidemic_model(3, 2, rng)
        q = QuerySpec((atom("Epid"),), Evidence(((atom("Treat", "x1", "t1"), "true"),)))
        got = lifted_query(m, q)
        want = ground_ve(m, q)
        assert np.max(np.abs(got.probs - want.probs)) < 1e-9

    def test_target_in_evidence_rejected(self):
        with pytest.raises(ValidationError):
            QuerySpec((atom("Epid"),), Evidence(((atom("Epid"), "true"),)))

    def test_contradictory_evidence_rejected(self):
        with pytest.raises(ValidationError):
            Evidence(((atom("Epid"), "true"), (atom("Epid"), "false")))

    def test_non_boolean_ranges(self, rng):
        from liftworlds import Range, PRV

        severity = Range(("none", "mild", "severe"))
        sev = PRV("Sev", (X,), severity)
        g0 = Parfactor(
            PotentialTable((EPID,), rng.uniform(0.1, 2, 2)), Constraint.extensional((), [()])
        )
        g1 = Parfactor(PotentialTable((EPID, sev), rng.uniform(0.1, 2, 6)), c_x(3))
        g2 = Parfactor(PotentialTable((sev, TREAT), rng.uniform(0.1, 2, 6)), c_xt(3, 2))
        m = ParameterisedModel((g0, g1, g2))
        q = QuerySpec(
            (atom("Sev", "x1"),), Evidence(((atom("Sev", "x2"), "mild"),))
        )
        got = lifted_query(m, q)
        want = ground_ve(m, q)
        assert got.probs.shape == (3,)
        assert np.max(np.abs(got.probs - want.probs)) < 1e-9
        assert got.event_prob(atom("Sev", "x1"), "severe") == pytest.approx(
            float(got.probs[2]), rel=1e-12
        )

    def test_queries_run_concurrently(self, rng):
        from concurrent.futures import ThreadPoolExecutor

        m = epidemic_model(4, 2, rng)
        queries = [QuerySpec((atom("Sick", f"x{i + 1}"),)) for i in range(4)]
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(lambda q: lifted_query(m, q).probs, queries))
        for p in results[1:]:
            assert np.allclose(p, results[0], atol=1e-12)

    def test_zero_potentials_survive_the_lifted_path(self, rng):
        for _ in range(30):
            dx, dt = int(rng.integers(1, 4)), int(rng.integers(1, 3))

            def table(n):
                v = rng.uniform(0.1, 2.0, n)
                v[rng.random(n) < 0.25] = 0.0
                return v

            g0 = Parfactor(PotentialTable((EPID,), table(2)), Constraint.extensional((), [()]))
            g1 = Parfactor(PotentialTable((EPID, SICK, TRAVEL), table(8)), c_x(dx))
            g2 = Parfactor(PotentialTable((EPID, SICK, TREAT), table(8)), c_xt(dx, dt))
            m = ParameterisedModel((g0, g1, g2))
            q = QuerySpec((atom("Epid"),))
            try:
                got = lifted_query(m, q).probs
            except InferenceError:
                with pytest.raises(InferenceError):
                    ground_ve(m, q)
                continue
            want = ground_ve(m, q).probs
            assert np.max(np.abs(got - want)) < 1e-9
