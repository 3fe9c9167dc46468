"""Euler systems over towers of group-ring levels, and their derived vectors.

A tower fixes a working modulus p^m_big, a target modulus M = p^m dividing
it, and per auxiliary prime: a cyclic symbol group of p-power order (each a
multiple of M), a Frobenius matrix on a free module of rank r + s at working
precision, a local polynomial whose value at 1 vanishes mod M, and the
exponents of the Frobenius image inside every symbol group.  A level is a
divisor — a subset of the primes — and a class at a level is the vector of
wedge coordinates of a degree-r element over the group ring of the product
of that divisor's symbol groups.

Corestriction (fiber summation over the collapsed symbol groups) ties the
family together; the derivative scalars collapse each class to a vector over
Z/M; the pair determinants assemble those into the derived vectors that feed
the contraction-system machinery in :mod:`ekslab.kolyvagin`.
"""

import itertools
import math
import random

from .biduals import contract_table, r_subsets
from .rings import (
    Matrix,
    det_int,
    element_from_json,
    element_to_json,
    kernel_int,
    make_ring,
    solve_int,
)
from .selmer import (
    PrimeData,
    SelmerInstance,
    _det_one_minus_x,
    all_divisors,
    frobenius_data,
)


def _power_exponent(value: int, p: int):
    """The e with value = p^e, or None when value is not a power of p."""
    e = 0
    while value > 1:
        if value % p:
            return None
        value //= p
        e += 1
    return e


def _lift(ring, c: int):
    """The integer c as an element of a chain or group level ring."""
    if ring.rank == 1:
        return c % ring.n
    return ring.from_int(c)


def _divisor_key(divisor) -> str:
    from .stark import _divisor_key as key

    return key(divisor)


# ---------------------------------------------------------------------------
# The tower.
# ---------------------------------------------------------------------------


class EulerTower:
    """The fixed data every class family over the tower shares.

    Arguments:
      p, m        — target modulus M = p^m;
      m_big       — working precision exponent, at least m + max(e_q);
      rank        — wedge degree r of the classes;
      orders      — symbol-group orders, one power of p per prime, each a
                    multiple of M;
      frobenius   — one square integer matrix of size rank + s per prime,
                    read at working precision;
      images      — integer exponent rows: images[q][qq] is the exponent of
                    the qq-th symbol generator in the group image of the
                    q-th Frobenius;
      local_polys — optional coefficient lists (low degree first) replacing
                    the characteristic polynomials det(1 - x Fr_q); each
                    value at 1 must vanish mod M.
    """

    __slots__ = ("p", "m", "m_big", "rank", "orders", "frobenius", "images",
                 "local_polys", "ring", "target", "n", "width",
                 "_levels", "_target_levels", "_factors")

    def __init__(self, p, m, m_big, rank, orders, frobenius, images,
                 local_polys=None):
        if not 1 <= m <= m_big:
            raise ValueError("target precision must sit inside the working one")
        if rank < 1:
            raise ValueError("wedge degree must be at least 1")
        orders = tuple(int(d) for d in orders)
        s = len(orders)
        exps = []
        for d in orders:
            e = _power_exponent(d, p)
            if e is None or e < m:
                raise ValueError(
                    f"symbol group order {d} is not a multiple of {p**m} "
                    f"of the form {p}^e")
            exps.append(e)
        if exps and m_big < m + max(exps):
            raise ValueError(
                "working precision too small: need m_big >= m + max e_q")
        self.p = p
        self.m = m
        self.m_big = m_big
        self.rank = rank
        self.orders = orders
        self.ring = make_ring(p, m_big)
        self.target = make_ring(p, m)
        self.n = rank + s
        self.width = len(r_subsets(self.n, rank))
        if len(frobenius) != s or len(images) != s:
            raise ValueError("one Frobenius matrix and one image row per prime")
        self.frobenius = []
        for rows in frobenius:
            if len(rows) != self.n or any(len(r) != self.n for r in rows):
                raise ValueError(
                    f"Frobenius matrices must be {self.n} x {self.n}")
            self.frobenius.append([[c % self.ring.n for c in r] for r in rows])
        if any(len(row) != s for row in images):
            raise ValueError("image rows must give one exponent per prime")
        self.images = [
            tuple(b % d for b, d in zip(row, orders)) for row in images]
        if local_polys is None:
            local_polys = [
                _det_one_minus_x(self.ring, rows) for rows in self.frobenius]
        self.local_polys = [
            [c % self.ring.n for c in poly] for poly in local_polys]
        if len(self.local_polys) != s:
            raise ValueError("one local polynomial per prime")
        M = p ** m
        for q, poly in enumerate(self.local_polys):
            if sum(poly) % M:
                raise ValueError(
                    f"local polynomial of prime {q} has nonzero value at 1 "
                    f"mod {M}")
        self._levels = {}
        self._target_levels = {}
        self._factors = {}

    @property
    def n_primes(self) -> int:
        return len(self.orders)

    def divisors(self) -> list:
        return all_divisors(self.n_primes)

    def level_ring(self, divisor):
        key = tuple(sorted(divisor))
        if key not in self._levels:
            self._levels[key] = make_ring(
                self.p, self.m_big, tuple(self.orders[q] for q in key))
        return self._levels[key]

    def target_level_ring(self, divisor):
        key = tuple(sorted(divisor))
        if key not in self._target_levels:
            self._target_levels[key] = make_ring(
                self.p, self.m, tuple(self.orders[q] for q in key))
        return self._target_levels[key]

    # -- local factors ------------------------------------------------------

    def euler_factor(self, q: int, divisor):
        """P_q evaluated at the inverse Frobenius image, in the level ring.

        The image of the q-th Frobenius in the divisor's symbol groups is
        the product of the per-prime generators raised to the recorded
        exponents; the factor is the polynomial in its inverse.
        """
        key = (q, tuple(sorted(divisor)))
        if key in self._factors:
            return self._factors[key]
        S = self.level_ring(key[1])
        poly = self.local_polys[q]
        if S.rank == 1:
            out = sum(poly) % S.n
        else:
            vec = [0] * S.rank
            image = [self.images[q][qq] for qq in key[1]]
            for k, a in enumerate(poly):
                if a == 0:
                    continue
                exps = tuple(-k * b for b in image)
                vec[S.exp_to_index(exps)] = (vec[S.exp_to_index(exps)] + a) % S.base.n
            out = tuple(vec)
        self._factors[key] = out
        return out

    def value_at_one(self, q: int) -> int:
        """P_q(1) at working precision."""
        return sum(self.local_polys[q]) % self.ring.n

    def derivative_at_one(self, q: int) -> int:
        """P_q'(1) at working precision."""
        return sum(k * a for k, a in enumerate(self.local_polys[q])) % self.ring.n

    def pair_entry(self, q: int, qq: int) -> int:
        """The linearized factor of prime q at the slot of prime qq, mod M.

        Expanding P_q at the inverse image modulo squares of the
        augmentation ideal leaves -P_q'(1) times the recorded exponent on
        each generator-minus-one slot; the diagonal is excluded by the
        pairing matrix, not here.
        """
        M = self.p ** self.m
        return (-self.derivative_at_one(q) * self.images[q][qq]) % M

    # -- moving between levels ----------------------------------------------

    def corestrict(self, big, small, x):
        """Fiber summation over the symbol groups dropped from big to small.

        A ring homomorphism: each dropped generator is sent to 1.
        """
        big = tuple(sorted(big))
        small = tuple(sorted(small))
        if not set(small) <= set(big):
            raise ValueError("corestriction goes from a level to a sub-level")
        Sb = self.level_ring(big)
        Ss = self.level_ring(small)
        if Sb.rank == 1:
            return x % Ss.n
        if Ss.rank == 1:
            return sum(x) % Ss.n
        keep = [big.index(q) for q in small]
        out = [0] * Ss.rank
        for i, c in enumerate(x):
            if c == 0:
                continue
            exps = Sb.index_to_exp(i)
            j = Ss.exp_to_index(tuple(exps[t] for t in keep))
            out[j] += c
        return tuple(c % Ss.base.n for c in out)

    def restrict(self, small, big, x):
        """Norm spreading from a sub-level: sum of all fiber translates."""
        big = tuple(sorted(big))
        small = tuple(sorted(small))
        if not set(small) <= set(big):
            raise ValueError("restriction goes from a sub-level to a level")
        Sb = self.level_ring(big)
        Ss = self.level_ring(small)
        if Sb.rank == 1:
            return x % Sb.n
        keep = [big.index(q) for q in small]
        out = [0] * Sb.rank
        for i in range(Sb.rank):
            exps = Sb.index_to_exp(i)
            if Ss.rank == 1:
                out[i] = x
            else:
                out[i] = x[Ss.exp_to_index(tuple(exps[t] for t in keep))]
        return tuple(c % Sb.base.n for c in out)

    def inflate(self, small, big, x):
        """The section of corestriction that keeps exponents in place."""
        big = tuple(sorted(big))
        small = tuple(sorted(small))
        if not set(small) <= set(big):
            raise ValueError("inflation goes from a sub-level to a level")
        Sb = self.level_ring(big)
        Ss = self.level_ring(small)
        if Sb.rank == 1:
            return x % Sb.n
        if Ss.rank == 1:
            return Sb.from_int(x)
        keep = [big.index(q) for q in small]
        out = [0] * Sb.rank
        for i, c in enumerate(x):
            if c == 0:
                continue
            exps = Ss.index_to_exp(i)
            full = [0] * len(big)
            for t, e in zip(keep, exps):
                full[t] = e
            out[Sb.exp_to_index(tuple(full))] = c % Sb.base.n
        return tuple(out)

    def corestrict_class(self, big, small, cls) -> list:
        return [self.corestrict(big, small, c) for c in cls]


def derivative_scalar(ring):
    """The derivative element of a group level ring: the product, over the
    cyclic factors, of the exponent-weighted sums of generator powers.

    On a chain ring (no symbol groups) it is 1.
    """
    if ring.rank == 1:
        return 1 % ring.n
    out = ring.one
    for i, order in enumerate(ring.orders):
        vec = [0] * ring.rank
        for t in range(1, order):
            exps = [0] * len(ring.orders)
            exps[i] = t
            vec[ring.exp_to_index(tuple(exps))] = t % ring.base.n
        out = ring.mul(tuple(vec), out)
    return out


def telescoping_holds(p: int, m: int, order: int) -> bool:
    """(generator - 1) times the derivative element equals order minus the
    norm element, exactly, in (Z/p^m)[C_order]."""
    S = make_ring(p, m, (order,))
    D = derivative_scalar(S)
    lhs = S.mul(S.sub(S.generator(0), S.one), D)
    norm = tuple(1 for _ in range(order))
    rhs = S.sub(S.from_int(order), norm)
    return lhs == rhs


# ---------------------------------------------------------------------------
# Class families.
# ---------------------------------------------------------------------------


class EulerSystem:
    """A divisor-indexed family of wedge-coordinate class vectors over the
    level rings of a tower.

    ``degree`` is the wedge degree of the vectors (the tower's rank for the
    families built here, 1 after a rank-one reduction); ``meta`` carries
    construction provenance such as the seed.
    """

    __slots__ = ("tower", "degree", "classes", "meta", "_derived")

    def __init__(self, tower: EulerTower, degree: int, classes: dict,
                 meta=None):
        self.tower = tower
        self.degree = degree
        self.classes = {tuple(sorted(d)): list(v) for d, v in classes.items()}
        self.meta = dict(meta or {})
        self._derived = {}

    @property
    def width(self) -> int:
        return len(r_subsets(self.tower.n, self.degree))

    def component(self, divisor) -> list:
        return list(self.classes[tuple(sorted(divisor))])


def canonical_system(tower: EulerTower, x) -> EulerSystem:
    """The canonical family of a wedge vector: at each level, the integer
    coordinates scaled by the product of the divisor's local factors."""
    x = [c % tower.ring.n for c in x]
    if len(x) != tower.width:
        raise ValueError(f"wedge vector must have {tower.width} coordinates")
    classes = {}
    for d in tower.divisors():
        S = tower.level_ring(d)
        factor = _lift(S, 1)
        for q in d:
            factor = S.mul(tower.euler_factor(q, d), factor)
        classes[d] = [S.mul(factor, _lift(S, c)) for c in x]
    return EulerSystem(tower, tower.rank, classes, meta={"kind": "canonical"})


def perturb(system: EulerSystem, divisor, z) -> EulerSystem:
    """Add a compensated kernel class at one level.

    The wedge vector ``z`` over the divisor's level ring is multiplied by
    the product of the divisor's generator-minus-one elements — killing
    every corestriction out of the level — and the matching local-factor
    multiples are added at every level above, so the whole family still
    satisfies the corestriction relation exactly.  Levels not above the
    divisor, and all levels strictly below it, are untouched.
    """
    tower = system.tower
    d = tuple(sorted(divisor))
    if not d:
        raise ValueError("perturbations live at nonempty levels")
    Sd = tower.level_ring(d)
    diff = _lift(Sd, 1)
    for pos in range(len(d)):
        diff = Sd.mul(Sd.sub(Sd.generator(pos), Sd.one), diff)
    delta = [Sd.mul(diff, c) for c in z]
    classes = {k: list(v) for k, v in system.classes.items()}
    for nn in tower.divisors():
        if not set(d) <= set(nn):
            continue
        Sn = tower.level_ring(nn)
        factor = _lift(Sn, 1)
        for q in nn:
            if q not in d:
                factor = Sn.mul(tower.euler_factor(q, nn), factor)
        term = [Sn.mul(factor, tower.inflate(d, nn, c)) for c in delta]
        classes[nn] = [Sn.add(a, b) for a, b in zip(classes[nn], term)]
    return EulerSystem(tower, system.degree, classes, meta=dict(system.meta))


def random_system(tower: EulerTower, seed: int, x=None) -> EulerSystem:
    """Seed-deterministic random family: the canonical family of a random
    wedge vector plus an independent compensated kernel class at every
    nonempty level, verified post hoc against the corestriction relation."""
    rng = random.Random(seed)
    if x is None:
        x = [rng.randrange(tower.ring.n) for _ in range(tower.width)]
    system = canonical_system(tower, x)
    for d in tower.divisors():
        if not d:
            continue
        S = tower.level_ring(d)
        z = [S.random_element(rng) for _ in range(tower.width)]
        system = perturb(system, d, z)
    system.meta.update({"kind": "random", "seed": seed})
    holds, failures = relation_holds(system)
    if not holds:
        raise RuntimeError(f"corestriction relation broken at {failures}")
    return system


def relation_report(system: EulerSystem) -> dict:
    """Exact corestriction check for every nested divisor pair.

    Keys are "big>small" divisor strings; the value records whether the
    corestricted class equals the dropped primes' local factors times the
    class below.
    """
    tower = system.tower
    out = {}
    for nn in tower.divisors():
        for k in range(len(nn) + 1):
            for dd in itertools.combinations(nn, k):
                Ss = tower.level_ring(dd)
                lhs = tower.corestrict_class(nn, dd, system.classes[nn])
                factor = _lift(Ss, 1)
                for q in nn:
                    if q not in dd:
                        factor = Ss.mul(tower.euler_factor(q, dd), factor)
                rhs = [Ss.mul(factor, c) for c in system.classes[dd]]
                out[f"{_divisor_key(nn)}>{_divisor_key(dd)}"] = lhs == rhs
    return out


def relation_holds(system: EulerSystem):
    """(bool, list of failing "big>small" keys)."""
    report = relation_report(system)
    failures = sorted(k for k, ok in report.items() if not ok)
    return not failures, failures


# ---------------------------------------------------------------------------
# Reduction to the target modulus and the derivative machinery.
# ---------------------------------------------------------------------------


def reduce_class(tower: EulerTower, divisor, cls, m=None) -> list:
    """Coefficientwise reduction of a level class to precision p^m
    (the target modulus by default); the symbol groups are untouched."""
    if m is None:
        m = tower.m
    S = make_ring(tower.p, m, tuple(tower.orders[q] for q in sorted(divisor)))
    if S.rank == 1:
        return [c % S.n for c in cls]
    return [tuple(c % S.base.n for c in x) for x in cls]


def derivative_element(system: EulerSystem, divisor) -> list:
    """The derivative scalar times the target-reduced class at a level."""
    tower = system.tower
    d = tuple(sorted(divisor))
    S = tower.target_level_ring(d)
    reduced = reduce_class(tower, d, system.classes[d])
    D = derivative_scalar(S)
    return [S.mul(D, c) for c in reduced]


def invariance_holds(system: EulerSystem, divisor) -> bool:
    """Whether the derivative element at a level is fixed by every symbol
    generator — the well-definedness condition of the derived class."""
    tower = system.tower
    d = tuple(sorted(divisor))
    S = tower.target_level_ring(d)
    if S.rank == 1:
        return True
    w = derivative_element(system, d)
    for pos in range(len(d)):
        g = S.generator(pos)
        if any(S.mul(g, c) != c for c in w):
            return False
    return True


def derived_class(system: EulerSystem, divisor) -> list:
    """The derived class at a level: the common coefficient vector of the
    (invariant) derivative element, over Z/M.

    Raises ValueError when the derivative element is not invariant, which
    flags a family that does not satisfy the corestriction relation.
    """
    d = tuple(sorted(divisor))
    if d in system._derived:
        return list(system._derived[d])
    tower = system.tower
    S = tower.target_level_ring(d)
    w = derivative_element(system, d)
    if S.rank == 1:
        out = [c % S.n for c in w]
    else:
        for pos in range(len(d)):
            g = S.generator(pos)
            if any(S.mul(g, c) != c for c in w):
                raise ValueError(
                    f"derivative element at level {d} is not invariant: "
                    "not an Euler system")
        out = [c[0] for c in w]
    system._derived[d] = list(out)
    return out


# ---------------------------------------------------------------------------
# Pair determinants and the assembled derived vectors.
# ---------------------------------------------------------------------------


def pairing_matrix(tower: EulerTower, divisor) -> list:
    """The square matrix of linearized factors over a divisor, in the given
    prime order: zero diagonal, pair entries elsewhere, over Z/M."""
    primes = tuple(divisor)
    if len(set(primes)) != len(primes):
        raise ValueError("divisor has a repeated prime")
    return [[0 if a == b else tower.pair_entry(qa, qb)
             for b, qb in enumerate(primes)]
            for a, qa in enumerate(primes)]


def pairing_determinant(tower: EulerTower, divisor) -> int:
    """Determinant of the pairing matrix over Z/M; 1 on the empty divisor,
    independent of the prime ordering."""
    primes = tuple(divisor)
    if not primes:
        return 1 % (tower.p ** tower.m)
    A = pairing_matrix(tower, primes)
    return det_int(A, tower.p, tower.m)


def derived_vector(system: EulerSystem, divisor) -> list:
    """The assembled derived vector at a divisor: the determinant-weighted
    sum of the derived classes of its sub-divisors, over Z/M."""
    tower = system.tower
    nn = tuple(sorted(divisor))
    M = tower.p ** tower.m
    out = [0] * system.width
    for k in range(len(nn) + 1):
        for dd in itertools.combinations(nn, k):
            det = pairing_determinant(tower, tuple(q for q in nn if q not in dd))
            if det == 0:
                continue
            kp = derived_class(system, dd)
            out = [(o + det * c) % M for o, c in zip(out, kp)]
    return out


def derived_vector_by_permutations(system: EulerSystem, divisor) -> list:
    """The assembled derived vector computed the other way: a signed sum
    over the permutations of the divisor's primes, each contributing the
    derived class of its fixed-point set times the pair entries along its
    moved points.  Must agree with :func:`derived_vector`."""
    tower = system.tower
    nn = tuple(sorted(divisor))
    M = tower.p ** tower.m
    out = [0] * system.width
    for perm in itertools.permutations(range(len(nn))):
        inv = sum(1 for i in range(len(nn)) for j in range(i + 1, len(nn))
                  if perm[i] > perm[j])
        sign = -1 if inv % 2 else 1
        fixed = tuple(nn[i] for i in range(len(nn)) if perm[i] == i)
        coeff = sign
        for i in range(len(nn)):
            if perm[i] != i:
                coeff = (coeff * tower.pair_entry(nn[perm[i]], nn[i])) % M
        if coeff == 0:
            continue
        kp = derived_class(system, fixed)
        out = [(o + coeff * c) % M for o, c in zip(out, kp)]
    return out


# ---------------------------------------------------------------------------
# Rank-one reduction.
# ---------------------------------------------------------------------------


def rank_one_reduction(system: EulerSystem, phi) -> EulerSystem:
    """Contract every class by a fixed integer wedge functional of degree
    one less than the system's, producing a rank-one family over the same
    tower; the functional acts by the same integer coefficients at every
    level."""
    tower = system.tower
    r = system.degree
    n = tower.n
    phi = list(phi)
    if len(phi) != len(r_subsets(n, r - 1)):
        raise ValueError(
            f"functional must have {len(r_subsets(n, r - 1))} coordinates")
    classes = {}
    for d in tower.divisors():
        S = tower.level_ring(d)
        phi_S = [_lift(S, a) for a in phi]
        classes[d] = contract_table(S, n, r, r - 1, phi_S, system.classes[d])
    return EulerSystem(tower, 1, classes,
                       meta={"kind": "rank-one", "functional": phi})


def reduction_identity_holds(system: EulerSystem, reduced: EulerSystem,
                             phi, divisor) -> bool:
    """Contract-then-derive equals derive-then-contract at a divisor."""
    tower = system.tower
    M = tower.p ** tower.m
    phi_M = [a % M for a in phi]
    lhs = contract_table(tower.target, tower.n, system.degree,
                         system.degree - 1, phi_M,
                         derived_class(system, divisor))
    return lhs == derived_class(reduced, divisor)


# ---------------------------------------------------------------------------
# The local comparison identities over an instance.
# ---------------------------------------------------------------------------


def derived_tables(system: EulerSystem) -> dict:
    """Ambient value tables of the assembled derived vectors, one per
    divisor; over a free ambient the wedge coordinates are the tables."""
    return {d: derived_vector(system, d) for d in system.tower.divisors()}


def _contract_once(ring, n, r, row, table):
    return contract_table(ring, n, r, 1, list(row), list(table))


def full_fs_holds(kdata, tables, divisor, q: int) -> bool:
    """The full-degree local comparison at (divisor, q): the singular
    contraction of the divisor's table equals the comparison unit times the
    finite-part contraction of the table one prime down."""
    inst = kdata.instance
    ring = kdata.ring
    n = inst.ambient_rank
    r = kdata.rank
    nn = tuple(sorted(divisor))
    if q not in nn:
        raise ValueError("the comparison needs q inside the divisor")
    lower = tuple(x for x in nn if x != q)
    u = kdata.effective_unit(q)
    lhs = _contract_once(ring, n, r, inst.singular_functional(q), tables[nn])
    rhs = [ring.mul(u, c) for c in
           _contract_once(ring, n, r, inst.finite_functional(q), tables[lower])]
    return lhs == rhs


def scalar_fs_holds(kdata, tables, divisor, q: int, phi) -> bool:
    """The rank-one comparison at (divisor, q) after contracting by phi:
    both sides collapsed to scalars through the degree-one tables."""
    inst = kdata.instance
    ring = kdata.ring
    n = inst.ambient_rank
    r = kdata.rank
    nn = tuple(sorted(divisor))
    lower = tuple(x for x in nn if x != q)
    u = kdata.effective_unit(q)
    phi = [c % ring.n for c in phi]
    top = contract_table(ring, n, r, r - 1, phi, tables[nn])
    bot = contract_table(ring, n, r, r - 1, phi, tables[lower])
    v = inst.singular_functional(q)
    t = inst.finite_functional(q)
    lhs = sum(a * b for a, b in zip(v, top)) % ring.n
    rhs = (u * sum(a * b for a, b in zip(t, bot))) % ring.n
    return lhs == rhs


def fs_witness(kdata, tables):
    """The first failing rank-one comparison, as (divisor, prime, monomial),
    or None when every scalar identity holds."""
    inst = kdata.instance
    n = inst.ambient_rank
    r = kdata.rank
    monomials = r_subsets(n, r - 1)
    for nn in inst.divisors():
        for q in nn:
            for a, A in enumerate(monomials):
                phi = [0] * len(monomials)
                phi[a] = 1
                if not scalar_fs_holds(kdata, tables, nn, q, phi):
                    return (nn, q, A)
    return None


def rank_reduction_report(system: EulerSystem, kdata) -> dict:
    """The consistency report tying the rank-one reductions to the full
    family over an instance.

    Checks, for every generating functional: the derived vectors of the
    contracted family expand as the contractions of the full derived
    vectors; the contraction commutes with taking derived classes; and at
    every (divisor, prime) pair the full-degree local comparison holds
    exactly when all the scalar comparisons do, with the witness scan
    reporting the first scalar failure (None when consistent).
    """
    tower = system.tower
    M = tower.p ** tower.m
    n = tower.n
    r = system.degree
    monomials = r_subsets(n, r - 1)
    tables = derived_tables(system)
    expansion = True
    identity = True
    for a in range(len(monomials)):
        phi = [0] * len(monomials)
        phi[a] = 1
        reduced = rank_one_reduction(system, phi)
        for d in tower.divisors():
            if not reduction_identity_holds(system, reduced, phi, d):
                identity = False
            want = contract_table(tower.target, n, r, r - 1, phi, tables[d])
            if derived_vector(reduced, d) != [c % M for c in want]:
                expansion = False
    full = {}
    scalars = {}
    equivalence = True
    for nn in kdata.instance.divisors():
        for q in nn:
            key = f"{_divisor_key(nn)}@{q}"
            full[key] = full_fs_holds(kdata, tables, nn, q)
            ok = True
            for a in range(len(monomials)):
                phi = [0] * len(monomials)
                phi[a] = 1
                if not scalar_fs_holds(kdata, tables, nn, q, phi):
                    ok = False
                    break
            scalars[key] = ok
            if full[key] != scalars[key]:
                equivalence = False
    return {
        "expansion": expansion,
        "reduction_identity": identity,
        "full_fs": full,
        "scalar_fs": scalars,
        "equivalence": equivalence,
        "fs_holds": all(full.values()),
        "witness": fs_witness(kdata, tables),
    }


def kolyvagin_system_from(system: EulerSystem, kdata):
    """Assemble the derived vectors into a contraction-side system over an
    instance: ``(system, malformed)`` as in the ambient-table constructor."""
    from .kolyvagin import system_from_ambient_tables

    return system_from_ambient_tables(kdata, derived_tables(system))


# ---------------------------------------------------------------------------
# Consistent generation: instance and family solved together.
# ---------------------------------------------------------------------------


def _unit_draw(rng, p, modulus):
    while True:
        c = rng.randrange(modulus)
        if c % p:
            return c


def _instance_frobenius(rng, p, m, m_big, n):
    """A diagonal Frobenius at working precision whose target reduction has
    a free rank-one fixed quotient and comparison unit 1.

    The first eigenvalue is 1 + M times a unit; the middle ones are units d
    with 1 - d a unit; the last is solved so the quotient polynomial's
    value at 1 is 1 mod M.  Returns None when the solved entry degenerates.
    """
    if p == 2:
        raise ValueError("consistent generation needs an odd prime")
    M = p ** m
    big = p ** m_big
    diag = [(1 + M * _unit_draw(rng, p, p ** (m_big - m))) % big]
    prod = 1
    for _ in range(n - 2):
        while True:
            d = rng.randrange(big)
            if d % p and (1 - d) % p:
                break
        diag.append(d)
        prod = (prod * (1 - d)) % big
    # last entry: (1 - d_last) * prod = -1 mod M makes the unit 1
    inv = pow(prod % M, -1, M)
    last = (1 + inv) % M
    if last % p == 0:
        return None
    diag.append(last)
    return [[diag[i] if i == j else 0 for j in range(n)] for i in range(n)]


def _constraint_matrix(ring, n, r, row):
    """Integer matrix of the contraction-by-row map on wedge coordinates."""
    width = len(r_subsets(n, r))
    cols = []
    for i in range(width):
        e = [0] * width
        e[i] = 1
        cols.append(_contract_once(ring, n, r, row, e))
    return [[cols[i][b] for i in range(width)] for b in range(len(cols[0]))]


def consistent_instance(p: int, m: int, rank: int, n_primes: int, seed: int,
                        max_tries: int = 60):
    """Draw a tower, an instance over Z/p^m, and a family whose derived
    vectors land in every divisor's modified Selmer bidual and satisfy the
    local comparison at every (divisor, prime) pair.

    The singular rows are the tail coordinate functionals, so membership
    pins each level's support; the finite-part rows are drawn at random and
    the per-level targets solved linearly, resampling whenever a draw makes
    some level unsolvable.  Returns ``(tower, system, kdata)``.
    """
    from .kolyvagin import KolyvaginData, verify_fs

    M = p ** m
    m_big = 2 * m
    n = rank + n_primes
    orders = (M,) * n_primes
    Rbar = make_ring(p, m)
    monomials = r_subsets(n, rank)
    width = len(monomials)
    head = tuple(range(rank))
    rng = random.Random(seed)
    for _ in range(max_tries):
        frob = []
        for _q in range(n_primes):
            rows = _instance_frobenius(rng, p, m, m_big, n)
            if rows is None:
                break
            frob.append(rows)
        if len(frob) != n_primes:
            continue
        images = [[_unit_draw(rng, p, orders[qq]) for qq in range(n_primes)]
                  for _q in range(n_primes)]
        tower = EulerTower(p, m, m_big, rank, orders, frob, images)
        primes = []
        for q in range(n_primes):
            reduced = [[c % M for c in row] for row in frob[q]]
            primes.append(PrimeData(f"q{q}", orders[q],
                                    frobenius_data(Rbar, reduced)))
        finite = Matrix(Rbar, [[int(i == rank + q) for i in range(n)]
                               for q in range(n_primes)], ncols=n)
        t_rows = [[rng.randrange(M) for _ in range(n)]
                  for _q in range(n_primes)]
        transverse = Matrix(Rbar, t_rows, ncols=n)
        instance = SelmerInstance(Rbar, rank, primes, finite, transverse)
        kdata = KolyvaginData(instance)

        # Solve the target vectors level by level.
        targets = {}
        base = [0] * width
        base[monomials.index(head)] = _unit_draw(rng, p, M)
        targets[()] = base
        solved = True
        for d in instance.divisors():
            if not d:
                continue
            forbidden = {rank + q for q in range(n_primes) if q not in d}
            rows = []
            rhs = []
            for i, I in enumerate(monomials):
                if set(I) & forbidden:
                    row = [0] * width
                    row[i] = 1
                    rows.append(row)
                    rhs.append(0)
            for q in d:
                lower = tuple(x for x in d if x != q)
                u = kdata.effective_unit(q)
                A = _constraint_matrix(Rbar, n, rank,
                                       instance.singular_functional(q))
                want = _contract_once(Rbar, n, rank,
                                      instance.finite_functional(q),
                                      targets[lower])
                rows.extend(A)
                rhs.extend((u * c) % M for c in want)
                B = _constraint_matrix(Rbar, n, rank,
                                       instance.finite_functional(q))
                rows.extend(B)
                rhs.extend(0 for _ in B)
            sol = solve_int(rows, rhs, p, m)
            if sol is None:
                solved = False
                break
            for row in kernel_int(rows, p, m):
                c = rng.randrange(M)
                sol = [(a + c * b) % M for a, b in zip(sol, row)]
            targets[d] = sol
        if not solved:
            continue

        # Realize the targets with compensated kernel classes.
        system = canonical_system(tower, list(base))
        class_targets = {(): list(base)}
        ok = True
        for d in instance.divisors():
            if not d:
                continue
            want = list(targets[d])
            for k in range(len(d)):
                for ee in itertools.combinations(d, k):
                    det = pairing_determinant(
                        tower, tuple(q for q in d if q not in ee))
                    want = [(w - det * c) % M
                            for w, c in zip(want, class_targets[ee])]
            class_targets[d] = want
            current = derived_class(system, d)
            delta = [(a - b) % M for a, b in zip(want, current)]
            if any(delta):
                sign = -1 if len(d) % 2 else 1
                S = tower.level_ring(d)
                z = [_lift(S, sign * c) for c in delta]
                system = perturb(system, d, z)
            if derived_class(system, d) != want:
                ok = False
                break
        if not ok:
            continue
        system.meta.update({"kind": "consistent", "seed": seed})
        tables = derived_tables(system)
        if any(tables[tuple(sorted(d))] != targets[tuple(sorted(d))]
               for d in instance.divisors()):
            continue
        ksys, malformed = kolyvagin_system_from(system, kdata)
        if malformed:
            continue
        holds, _failures = verify_fs(ksys)
        if not holds:
            continue
        return tower, system, kdata
    raise RuntimeError("no consistent draw found within the retry budget")


# ---------------------------------------------------------------------------
# Serialization and the identity report.
# ---------------------------------------------------------------------------


def tower_to_json(tower: EulerTower) -> dict:
    return {
        "schema": "euler-tower/1",
        "p": tower.p,
        "m": tower.m,
        "m_big": tower.m_big,
        "rank": tower.rank,
        "orders": list(tower.orders),
        "frobenius": [[list(r) for r in rows] for rows in tower.frobenius],
        "images": [list(row) for row in tower.images],
        "local_polys": [list(poly) for poly in tower.local_polys],
    }


def tower_from_json(data: dict) -> EulerTower:
    if data.get("schema") != "euler-tower/1":
        raise ValueError("not a euler-tower/1 document")
    return EulerTower(
        int(data["p"]), int(data["m"]), int(data["m_big"]), int(data["rank"]),
        [int(d) for d in data["orders"]],
        [[[int(c) for c in r] for r in rows] for rows in data["frobenius"]],
        [[int(b) for b in row] for row in data["images"]],
        [[int(c) for c in poly] for poly in data["local_polys"]],
    )


def system_to_json(system: EulerSystem) -> dict:
    tower = system.tower
    return {
        "schema": "euler-system/1",
        "tower": tower_to_json(tower),
        "degree": system.degree,
        "meta": {k: system.meta[k] for k in sorted(system.meta)},
        "precision": {
            "working_modulus": tower.p ** tower.m_big,
            "target_modulus": tower.p ** tower.m,
        },
        "classes": {
            _divisor_key(d): [element_to_json(tower.level_ring(d), c)
                              for c in v]
            for d, v in sorted(system.classes.items())
        },
    }


def system_from_json(data: dict) -> EulerSystem:
    from .stark import _divisor_from_key

    if data.get("schema") != "euler-system/1":
        raise ValueError("not a euler-system/1 document")
    tower = tower_from_json(data["tower"])
    classes = {}
    for key, v in data["classes"].items():
        d = _divisor_from_key(key)
        S = tower.level_ring(d)
        classes[d] = [element_from_json(S, c) for c in v]
    return EulerSystem(tower, int(data["degree"]), classes,
                       meta=data.get("meta"))


def derivative_report(system: EulerSystem) -> dict:
    """Every identity the derivative machinery rests on, listed one by one:
    the corestriction relations, the telescoping of each symbol-group
    order, the invariance of each level's derivative element, the derived
    classes and pair determinants, and the assembled vectors checked
    against their permutation-sum form."""
    tower = system.tower
    report = {
        "schema": "euler-derivative/1",
        "target_modulus": tower.p ** tower.m,
        "working_modulus": tower.p ** tower.m_big,
        "relations": relation_report(system),
        "telescoping": {
            str(order): telescoping_holds(tower.p, tower.m_big, order)
            for order in sorted(set(tower.orders))
        },
        "invariance": {},
        "derived_classes": {},
        "pair_determinants": {},
        "derived_vectors": {},
        "permutation_cross_check": {},
    }
    for d in tower.divisors():
        key = _divisor_key(d)
        report["invariance"][key] = invariance_holds(system, d)
        report["derived_classes"][key] = derived_class(system, d)
        report["pair_determinants"][key] = pairing_determinant(tower, d)
        vec = derived_vector(system, d)
        report["derived_vectors"][key] = vec
        report["permutation_cross_check"][key] = (
            vec == derived_vector_by_permutations(system, d))
    return report
