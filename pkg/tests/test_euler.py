"""Tests for class families over towers of group-ring levels: the level
maps and their adjunction identities, local factors, the corestriction
relation, derivative elements and derived classes, pair determinants and
the assembled derived vectors, rank-one reduction, the local comparison
identities over an instance, and the consistent joint generator."""

import itertools
import json
import random

import pytest

from ekslab.biduals import contract_table
from ekslab.euler import (
    EulerSystem,
    EulerTower,
    canonical_system,
    consistent_instance,
    derivative_element,
    derivative_report,
    derivative_scalar,
    derived_class,
    derived_tables,
    derived_vector,
    derived_vector_by_permutations,
    fs_witness,
    full_fs_holds,
    invariance_holds,
    kolyvagin_system_from,
    pairing_determinant,
    pairing_matrix,
    perturb,
    random_system,
    rank_one_reduction,
    rank_reduction_report,
    reduce_class,
    reduction_identity_holds,
    relation_holds,
    relation_report,
    scalar_fs_holds,
    system_from_json,
    system_to_json,
    telescoping_holds,
    tower_from_json,
    tower_to_json,
)
from ekslab.kolyvagin import system_from_ambient_tables, verify_fs
from ekslab.rings import make_ring


def _eye(n):
    return [[int(i == j) for j in range(n)] for i in range(n)]


def _one_prime_tower():
    """Rank 1, one prime of order 5, working modulus 625: the default
    local polynomial is det(1 - x diag(1, 2)) = 1 - 3x + 2x^2."""
    return EulerTower(5, 1, 4, 1, (5,), [[[1, 0], [0, 2]]], [[1]])


def _two_prime_tower():
    """Rank 1, two primes of orders 5 and 25, working modulus 125."""
    fr = [[[1, 0, 0], [0, 2, 0], [0, 0, 3]],
          [[1, 0, 0], [0, 3, 0], [0, 0, 2]]]
    return EulerTower(5, 1, 3, 1, (5, 25), fr, [[1, 2], [3, 1]])


def _small_tower():
    """Rank 1, two primes of order 5, working modulus 25."""
    fr = [_eye(3) for _ in range(2)]
    for rows in fr:
        rows[1][1] = 2
    return EulerTower(5, 1, 2, 1, (5, 5), fr, [[1, 2], [3, 1]])


def _pairing_tower():
    """Four primes with local polynomial 6 - x, so every pair entry is the
    recorded image exponent itself."""
    b = [[1, 2, 3, 4], [4, 1, 2, 3], [2, 4, 1, 3], [3, 1, 4, 2]]
    return EulerTower(5, 1, 2, 1, (5, 5, 5, 5), [_eye(5)] * 4, b,
                      local_polys=[[6, -1]] * 4)


class TestDerivativeScalar:
    def test_cyclic_coefficients(self):
        for m in (1, 2):
            S = make_ring(5, m, (5,))
            assert derivative_scalar(S) == (0, 1, 2, 3, 4)

    def test_chain_ring_is_one(self):
        assert derivative_scalar(make_ring(5, 2)) == 1

    def test_product_over_factors(self):
        S = make_ring(5, 2, (5, 5))
        D = derivative_scalar(S)
        for a in range(5):
            for t in range(5):
                assert D[S.exp_to_index((a, t))] == (a * t) % 25

    def test_telescoping(self):
        for order in (5, 25, 125):
            assert telescoping_holds(5, 2, order)
        assert telescoping_holds(3, 2, 9)
        assert telescoping_holds(2, 3, 8)


class TestTowerValidation:
    def test_target_precision_inside_working(self):
        with pytest.raises(ValueError, match="target precision"):
            EulerTower(5, 3, 2, 1, (), [], [])

    def test_positive_wedge_degree(self):
        with pytest.raises(ValueError, match="wedge degree"):
            EulerTower(5, 1, 2, 0, (), [], [])

    def test_order_must_be_prime_power_multiple(self):
        with pytest.raises(ValueError, match="symbol group order"):
            EulerTower(5, 1, 3, 1, (6,), [_eye(2)], [[1]])
        with pytest.raises(ValueError, match="symbol group order"):
            EulerTower(5, 2, 4, 1, (5,), [_eye(2)], [[1]])

    def test_working_precision_covers_orders(self):
        with pytest.raises(ValueError, match="working precision too small"):
            EulerTower(5, 1, 2, 1, (5, 25),
                       [_eye(3), _eye(3)], [[1, 1], [1, 1]])

    def test_one_matrix_per_prime(self):
        with pytest.raises(ValueError, match="one Frobenius matrix"):
            EulerTower(5, 1, 2, 1, (5,), [], [[1]])

    def test_matrix_shape(self):
        with pytest.raises(ValueError, match="Frobenius matrices"):
            EulerTower(5, 1, 2, 1, (5,), [_eye(3)], [[1]])

    def test_image_row_shape(self):
        with pytest.raises(ValueError, match="image rows"):
            EulerTower(5, 1, 2, 1, (5,), [_eye(2)], [[1, 2]])

    def test_local_value_must_vanish(self):
        with pytest.raises(ValueError, match="nonzero value at 1"):
            EulerTower(5, 1, 2, 1, (5,), [_eye(2)], [[1]],
                       local_polys=[[1, 1]])

    def test_default_polynomial_is_characteristic(self):
        tower = _one_prime_tower()
        assert tower.local_polys == [[1, 622, 2]]


class TestLocalFactors:
    def test_values_at_one(self):
        tower = _one_prime_tower()
        assert tower.value_at_one(0) == 0
        assert tower.derivative_at_one(0) == 1

    def test_factor_at_inverse_image(self):
        tower = _one_prime_tower()
        assert tower.euler_factor(0, (0,)) == (1, 0, 0, 2, 622)
        assert tower.euler_factor(0, ()) == 0

    def test_pair_entry_formula(self):
        tower = _one_prime_tower()
        assert tower.pair_entry(0, 0) == 4
        pairing = _pairing_tower()
        for q in range(4):
            for qq in range(4):
                assert pairing.pair_entry(q, qq) == pairing.images[q][qq] % 5


class TestLevelMaps:
    def test_restrict_after_corestrict_is_norm(self):
        tower = _two_prime_tower()
        big, small = (0, 1), (1,)
        Sb = tower.level_ring(big)
        norm = [0] * Sb.rank
        for t in range(5):
            norm[Sb.exp_to_index((t, 0))] = 1
        rng = random.Random(0)
        for _ in range(10):
            x = Sb.random_element(rng)
            lhs = tower.restrict(small, big,
                                 tower.corestrict(big, small, x))
            assert lhs == Sb.mul(tuple(norm), x)

    def test_corestrict_after_restrict_is_fiber_size(self):
        tower = _two_prime_tower()
        big, small = (0, 1), (1,)
        Ss = tower.level_ring(small)
        rng = random.Random(1)
        for _ in range(10):
            y = Ss.random_element(rng)
            lhs = tower.corestrict(big, small,
                                   tower.restrict(small, big, y))
            assert lhs == Ss.smul(5, y)

    def test_corestrict_is_multiplicative(self):
        tower = _two_prime_tower()
        big, small = (0, 1), (1,)
        Sb = tower.level_ring(big)
        rng = random.Random(2)
        for _ in range(10):
            x = Sb.random_element(rng)
            y = Sb.random_element(rng)
            lhs = tower.corestrict(big, small, Sb.mul(x, y))
            rhs = tower.level_ring(small).mul(
                tower.corestrict(big, small, x),
                tower.corestrict(big, small, y))
            assert lhs == rhs

    def test_corestrict_section(self):
        tower = _two_prime_tower()
        big, small = (0, 1), (0,)
        Ss = tower.level_ring(small)
        rng = random.Random(3)
        for _ in range(10):
            x = Ss.random_element(rng)
            assert tower.corestrict(
                big, small, tower.inflate(small, big, x)) == x

    def test_factor_corestriction_consistency(self):
        tower = _two_prime_tower()
        for q in (0, 1):
            for big, small in (((0, 1), (1,)), ((0, 1), ()), ((0,), ())):
                lhs = tower.corestrict(big, small,
                                       tower.euler_factor(q, big))
                assert lhs == tower.euler_factor(q, small)

    def test_nesting_required(self):
        tower = _two_prime_tower()
        with pytest.raises(ValueError, match="sub-level"):
            tower.corestrict((0,), (1,), tower.level_ring((0,)).one)
        with pytest.raises(ValueError, match="sub-level"):
            tower.restrict((1,), (0,), tower.level_ring((1,)).one)


class TestCanonicalSystem:
    def test_frozen_one_prime_family(self):
        tower = _one_prime_tower()
        system = canonical_system(tower, [3, 7])
        assert system.classes[()] == [3, 7]
        assert system.classes[(0,)] == [(3, 0, 0, 6, 616),
                                        (7, 0, 0, 14, 604)]

    def test_corestriction_matches_value_at_one(self):
        tower = _one_prime_tower()
        system = canonical_system(tower, [3, 7])
        cor = tower.corestrict_class((0,), (), system.classes[(0,)])
        assert cor == [0, 0]
        assert cor == [(tower.value_at_one(0) * c) % 625 for c in (3, 7)]

    def test_free_polynomial_corestriction(self):
        tower = EulerTower(5, 1, 4, 1, (5,), [[[1, 0], [0, 2]]], [[1]],
                           local_polys=[[6, -1]])
        system = canonical_system(tower, [1, 2])
        cor = tower.corestrict_class((0,), (), system.classes[(0,)])
        assert cor == [5, 10]

    def test_zero_vector(self):
        tower = _small_tower()
        system = canonical_system(tower, [0, 0, 0])
        for d in tower.divisors():
            S = tower.level_ring(d)
            assert system.classes[tuple(sorted(d))] == [S.zero] * 3

    def test_width_checked(self):
        with pytest.raises(ValueError, match="wedge vector"):
            canonical_system(_small_tower(), [1, 2])


class TestPerturbAndRelations:
    def test_random_system_satisfies_relations(self):
        system = random_system(_small_tower(), 7)
        holds, failures = relation_holds(system)
        assert holds and failures == []

    def test_report_covers_all_nested_pairs(self):
        system = random_system(_small_tower(), 8)
        report = relation_report(system)
        assert len(report) == 9
        assert set(report) == {
            ">", "0>0", "0>", "1>1", "1>", "0,1>0,1", "0,1>0",
            "0,1>1", "0,1>"}
        assert all(report.values())

    def test_top_perturbation_is_local(self):
        tower = _small_tower()
        base = random_system(tower, 9)
        S = tower.level_ring((0, 1))
        rng = random.Random(10)
        z = [S.random_element(rng) for _ in range(3)]
        moved = perturb(base, (0, 1), z)
        for d in ((), (0,), (1,)):
            assert moved.classes[d] == base.classes[d]
        assert moved.classes[(0, 1)] != base.classes[(0, 1)]
        assert relation_holds(moved)[0]

    def test_middle_perturbation_compensates_upward(self):
        tower = _small_tower()
        base = random_system(tower, 11)
        S = tower.level_ring((0,))
        moved = perturb(base, (0,), [S.one, S.zero, S.generator(0)])
        assert moved.classes[()] == base.classes[()]
        assert moved.classes[(1,)] == base.classes[(1,)]
        assert moved.classes[(0,)] != base.classes[(0,)]
        assert moved.classes[(0, 1)] != base.classes[(0, 1)]
        assert relation_holds(moved)[0]

    def test_no_empty_level_perturbation(self):
        with pytest.raises(ValueError, match="nonempty"):
            perturb(random_system(_small_tower(), 12), (), [1, 1, 1])

    def test_broken_family_is_detected(self):
        tower = _small_tower()
        system = random_system(tower, 13)
        S = tower.level_ring((0, 1))
        classes = {d: list(v) for d, v in system.classes.items()}
        classes[(0, 1)][0] = S.add(classes[(0, 1)][0], S.one)
        broken = EulerSystem(tower, 1, classes)
        holds, failures = relation_holds(broken)
        assert not holds
        assert all(key.startswith("0,1>") for key in failures)

    def test_hundred_random_draws(self):
        tower = _small_tower()
        for seed in range(100):
            random_system(tower, seed)

    def test_four_prime_closure(self):
        fr = [_eye(5) for _ in range(4)]
        for rows in fr:
            rows[1][1] = 2
        tower = EulerTower(5, 1, 2, 1, (5, 5, 5, 5), fr,
                           [[1, 2, 3, 4], [2, 1, 4, 3],
                            [3, 4, 1, 2], [4, 3, 2, 1]])
        system = random_system(tower, 21)
        report = relation_report(system)
        assert len(report) == 81
        assert all(report.values())


class TestDerivedClasses:
    def test_empty_level_is_plain_reduction(self):
        tower = _small_tower()
        system = random_system(tower, 14)
        assert derived_class(system, ()) == reduce_class(
            tower, (), system.classes[()])

    def test_frozen_one_prime_values(self):
        tower = _one_prime_tower()
        system = canonical_system(tower, [3, 7])
        assert reduce_class(tower, (0,), system.classes[(0,)]) == [
            (3, 0, 0, 1, 1), (2, 0, 0, 4, 4)]
        assert derived_class(system, ()) == [3, 2]
        assert derived_class(system, (0,)) == [3, 2]

    def test_invariance_on_random_families(self):
        tower = _small_tower()
        for seed in (15, 16, 17):
            system = random_system(tower, seed)
            for d in tower.divisors():
                assert invariance_holds(system, d)
                derived_class(system, d)

    def test_non_invariant_family_raises(self):
        tower = _small_tower()
        S = tower.level_ring((0,))
        classes = {(): [1, 0, 0], (0,): [S.generator(0), S.zero, S.zero],
                   (1,): [0, 0, 0], (0, 1): [0, 0, 0]}
        classes[(1,)] = [tower.level_ring((1,)).zero] * 3
        classes[(0, 1)] = [tower.level_ring((0, 1)).zero] * 3
        bad = EulerSystem(tower, 1, classes)
        assert not invariance_holds(bad, (0,))
        with pytest.raises(ValueError, match="not invariant"):
            derived_class(bad, (0,))

    def test_reduce_at_working_precision_is_identity(self):
        tower = _small_tower()
        system = random_system(tower, 18)
        for d in tower.divisors():
            assert reduce_class(tower, d, system.classes[d],
                                m=tower.m_big) == system.classes[d]

    def test_reduction_commutes_with_contraction(self):
        fr = [_eye(4) for _ in range(2)]
        for rows in fr:
            rows[1][1] = 2
            rows[2][2] = 3
        tower = EulerTower(5, 2, 4, 2, (25, 25), fr, [[2, 3], [1, 4]])
        system = random_system(tower, 5)
        phi = [1, 7, 0, 3]
        for d in tower.divisors():
            S = tower.level_ring(d)
            T = tower.target_level_ring(d)
            lift = (lambda R, a: R.from_int(a) if R.rank > 1 else a % R.n)
            one = reduce_class(tower, d, contract_table(
                S, 4, 2, 1, [lift(S, a) for a in phi], system.classes[d]))
            two = contract_table(
                T, 4, 2, 1, [lift(T, a) for a in phi],
                reduce_class(tower, d, system.classes[d]))
            assert one == two


class TestPairing:
    def test_empty_divisor(self):
        assert pairing_determinant(_small_tower(), ()) == 1

    def test_singleton_vanishes(self):
        tower = _pairing_tower()
        assert pairing_matrix(tower, (2,)) == [[0]]
        assert pairing_determinant(tower, (2,)) == 0

    def test_single_prime_vector_is_derived_class(self):
        tower = _pairing_tower()
        system = random_system(tower, 19)
        for q in range(4):
            assert derived_vector(system, (q,)) == derived_class(
                system, (q,))

    def test_two_prime_determinant(self):
        tower = _pairing_tower()
        expected = (-tower.pair_entry(0, 1) * tower.pair_entry(1, 0)) % 5
        assert pairing_determinant(tower, (0, 1)) == expected == 2

    def test_labeling_independence(self):
        tower = _pairing_tower()
        frozen = {2: 2, 3: 1, 4: 0}
        for nu in (2, 3, 4):
            values = {pairing_determinant(tower, perm)
                      for perm in itertools.permutations(range(nu))}
            assert values == {frozen[nu]}

    def test_repeated_prime_rejected(self):
        with pytest.raises(ValueError, match="repeated prime"):
            pairing_matrix(_pairing_tower(), (0, 0))

    def test_permutation_cross_check(self):
        tower = _pairing_tower()
        system = random_system(tower, 20)
        for d in ((), (1,), (0, 2), (0, 1, 3), (0, 1, 2, 3)):
            assert derived_vector(system, d) == \
                derived_vector_by_permutations(system, d)


class TestRankOneReduction:
    def test_functional_width_checked(self):
        system = random_system(_small_tower(), 22)
        with pytest.raises(ValueError, match="functional"):
            rank_one_reduction(system, [1, 2])

    def test_zero_functional(self):
        tower = _small_tower()
        system = random_system(tower, 23)
        reduced = rank_one_reduction(system, [0])
        for d in tower.divisors():
            S = tower.level_ring(d)
            assert reduced.classes[tuple(sorted(d))] == [S.zero] * 3

    def test_degree_one_contracts_by_scalar(self):
        tower = _small_tower()
        system = random_system(tower, 24)
        reduced = rank_one_reduction(system, [3])
        for d in tower.divisors():
            S = tower.level_ring(d)
            want = [S.smul(3, c) for c in system.classes[tuple(sorted(d))]]
            assert reduced.classes[tuple(sorted(d))] == want

    def test_reduced_family_satisfies_relations(self):
        system = random_system(_small_tower(), 25)
        reduced = rank_one_reduction(system, [2])
        assert reduced.degree == 1
        assert relation_holds(reduced)[0]

    def test_fifty_random_pairs_commute(self):
        rng = random.Random(1234)
        for trial in range(50):
            b = [[rng.randrange(1, 5) for _ in range(2)] for _ in range(2)]
            fr = []
            for _q in range(2):
                rows = _eye(4)
                rows[1][1] = 2 + (trial % 3)
                fr.append(rows)
            tower = EulerTower(5, 1, 2, 2, (5, 5), fr, b)
            system = random_system(tower, 1000 + trial)
            phi = [rng.randrange(5) for _ in range(4)]
            reduced = rank_one_reduction(system, phi)
            for d in tower.divisors():
                assert reduction_identity_holds(system, reduced, phi, d)


class TestLocalComparison:
    def test_consistent_instance_report(self):
        tower, system, kdata = consistent_instance(5, 2, 2, 2, seed=11)
        report = rank_reduction_report(system, kdata)
        assert report["expansion"]
        assert report["reduction_identity"]
        assert report["equivalence"]
        assert report["fs_holds"]
        assert report["witness"] is None
        assert all(report["full_fs"].values())
        assert all(report["scalar_fs"].values())

    def test_consistent_instance_feeds_contraction_system(self):
        tower, system, kdata = consistent_instance(5, 2, 2, 2, seed=11)
        ksys, malformed = kolyvagin_system_from(system, kdata)
        assert malformed == []
        holds, failures = verify_fs(ksys)
        assert holds and not failures

    def test_frozen_top_table(self):
        tower, system, kdata = consistent_instance(5, 2, 2, 2, seed=11)
        tables = derived_tables(system)
        assert tables[(0, 1)] == [17, 9, 10, 19, 12, 4]
        assert [kdata.effective_unit(q) for q in range(2)] == [1, 1]

    def test_determinism(self):
        first = consistent_instance(5, 2, 2, 2, seed=11)
        second = consistent_instance(5, 2, 2, 2, seed=11)
        assert tower_to_json(first[0]) == tower_to_json(second[0])
        assert derived_tables(first[1]) == derived_tables(second[1])

    def test_tail_tamper_breaks_comparison(self):
        tower, system, kdata = consistent_instance(5, 2, 2, 2, seed=11)
        tables = derived_tables(system)
        bad = {d: list(v) for d, v in tables.items()}
        bad[(0, 1)][1] = (bad[(0, 1)][1] + 1) % 25
        assert fs_witness(kdata, bad) == ((0, 1), 0, (0,))
        assert not full_fs_holds(kdata, bad, (0, 1), 0)
        # full-degree and all-scalar forms still agree on the bad tables
        monomials = [(0,), (1,), (2,), (3,)]
        scalars_ok = all(
            scalar_fs_holds(kdata, bad, (0, 1), 0,
                            [int(i == a) for i in range(4)])
            for a in range(4))
        assert scalars_ok == full_fs_holds(kdata, bad, (0, 1), 0)

    def test_head_tamper_breaks_membership_only(self):
        tower, system, kdata = consistent_instance(5, 2, 2, 2, seed=11)
        tables = derived_tables(system)
        bad = {d: list(v) for d, v in tables.items()}
        bad[(0, 1)][0] = (bad[(0, 1)][0] + 1) % 25
        assert fs_witness(kdata, bad) is None
        _, malformed = system_from_ambient_tables(kdata, bad)
        assert malformed == [(0, 1)]

    def test_odd_prime_required(self):
        with pytest.raises(ValueError, match="odd prime"):
            consistent_instance(2, 2, 1, 1, seed=0)


class TestSerialization:
    def test_tower_round_trip(self):
        tower = _two_prime_tower()
        data = tower_to_json(tower)
        assert data["schema"] == "euler-tower/1"
        back = tower_from_json(data)
        assert tower_to_json(back) == data
        with pytest.raises(ValueError, match="euler-tower/1"):
            tower_from_json({"schema": "nope"})

    def test_system_round_trip(self):
        system = random_system(_small_tower(), 26)
        data = system_to_json(system)
        assert data["schema"] == "euler-system/1"
        assert data["precision"] == {"working_modulus": 25,
                                     "target_modulus": 5}
        back = system_from_json(data)
        assert back.degree == system.degree
        assert back.classes == system.classes
        assert back.meta == system.meta
        with pytest.raises(ValueError, match="euler-system/1"):
            system_from_json({"schema": "nope"})

    def test_byte_stable_serialization(self):
        one = json.dumps(system_to_json(random_system(_small_tower(), 27)),
                         sort_keys=True)
        two = json.dumps(system_to_json(random_system(_small_tower(), 27)),
                         sort_keys=True)
        assert one == two

    def test_derivative_report(self):
        system = random_system(_small_tower(), 28)
        report = derivative_report(system)
        assert report["schema"] == "euler-derivative/1"
        assert report["target_modulus"] == 5
        assert report["working_modulus"] == 25
        assert all(report["relations"].values())
        assert report["telescoping"] == {"5": True}
        assert all(report["invariance"].values())
        assert all(report["permutation_cross_check"].values())
        assert report["pair_determinants"][""] == 1
        for d in system.tower.divisors():
            key = ",".join(str(q) for q in d)
            assert report["derived_vectors"][key] == \
                derived_vector(system, d)
