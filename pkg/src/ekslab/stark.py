"""Divisor-indexed systems of bidual elements under singular contraction.

The relaxed module at a divisor imposes the finite local condition at every
prime outside the divisor and nothing at the primes inside; the fully
relaxed module is the free ambient itself, whose top-degree bidual is free
of rank one.  A system is a family of elements, one per divisor, compatible
under the transition maps that contract by wedges of singular-part
functionals.  Because the top bidual is free of rank one, each system is
determined by its top component, and the engine constructs components by
contracting the top element and inverting the (injective) bidual functor
of each inclusion.

Conventions that make the transitions consistent on the divisor lattice:
the functionals in a transition wedge are taken in *descending* prime
order, and the result is scaled by (-1)^t where t counts pairs (q, q')
with q contracted, q' outside the larger divisor, and q' < q.  With these
choices the maps compose exactly (no sign leaks), which the tests check
on every chain of divisors.

The value-content ideals of a system, summed over divisors with a fixed
number of primes, recover the Fitting ideals of the dual Selmer module
scaled by the content of the top component — the structure theorem this
module exists to demonstrate.
"""

from __future__ import annotations

from .biduals import (
    ExteriorBidual,
    bidual_contraction,
    bidual_functor_map,
    content_ideal,
    reduce_element,
    reduce_table,
    wedge_coeffs,
)
from .modules import (
    FPModule,
    Ideal,
    ModuleMap,
    fitting_ideal,
    is_isomorphism,
    kernel,
    same_submodule,
    solve_map,
)
from .rings import Matrix, make_ring, solve_linear
from .selmer import PrimeData, SelmerInstance, core_vertices, frobenius_data, min_generators


class StarkData:
    """Relaxed modules, their biduals, and the transition maps of an instance.

    Everything is cached: relaxed modules per divisor, biduals per
    (divisor, degree), inclusion maps and bidual functor maps per divisor
    pair, and the transitions themselves.  Divisors are sorted tuples of
    prime indices.
    """

    __slots__ = ("instance", "ring", "_relaxed", "_bidual", "_incl",
                 "_functor", "_transition", "_ambient_push")

    def __init__(self, instance: SelmerInstance):
        self.instance = instance
        self.ring = instance.ring
        self._relaxed = {}
        self._bidual = {}
        self._incl = {}
        self._functor = {}
        self._transition = {}
        self._ambient_push = {}

    @property
    def top_divisor(self) -> tuple:
        return tuple(range(self.instance.n_primes))

    def degree(self, divisor) -> int:
        """Bidual degree attached to a divisor: core rank + prime count."""
        return self.instance.core_rank + len(divisor)

    def relaxed(self, divisor):
        """The relaxed module at a divisor: ``(module, inclusion)`` into the
        free ambient, cut out by the singular functionals outside."""
        key = tuple(sorted(divisor))
        if key not in self._relaxed:
            ring = self.ring
            n = self.instance.ambient_rank
            free = FPModule.free(ring, n)
            rows = [self.instance.singular_functional(q)
                    for q in range(self.instance.n_primes) if q not in key]
            if not rows:
                self._relaxed[key] = (free, ModuleMap.identity(free))
            else:
                f = ModuleMap(free, FPModule.free(ring, len(rows)),
                              Matrix(ring, rows, ncols=n))
                self._relaxed[key] = kernel(f)
        return self._relaxed[key]

    def bidual(self, divisor, degree=None) -> ExteriorBidual:
        key = tuple(sorted(divisor))
        deg = self.degree(key) if degree is None else degree
        if (key, deg) not in self._bidual:
            module, _incl = self.relaxed(key)
            self._bidual[(key, deg)] = ExteriorBidual(module, deg)
        return self._bidual[(key, deg)]

    def inclusion(self, n_div, m_div) -> ModuleMap:
        """The inclusion of the relaxed module at the smaller divisor into
        the one at the larger (fewer conditions)."""
        n_key, m_key = tuple(sorted(n_div)), tuple(sorted(m_div))
        if not set(n_key) <= set(m_key):
            raise ValueError("inclusion requires nested divisors")
        if (n_key, m_key) not in self._incl:
            small, incl_small = self.relaxed(n_key)
            big, incl_big = self.relaxed(m_key)
            cols = []
            for j in range(small.ngens):
                vec = incl_small.apply(small.generator(j))
                sol = solve_map(incl_big, vec)
                if sol is None:
                    raise RuntimeError(
                        "relaxed module escapes the more relaxed one")
                cols.append(sol)
            mat = Matrix(self.ring,
                         [[cols[j][i] for j in range(small.ngens)]
                          for i in range(big.ngens)], ncols=small.ngens)
            self._incl[(n_key, m_key)] = ModuleMap(small, big, mat)
        return self._incl[(n_key, m_key)]

    def functor_map(self, n_div, m_div, degree: int) -> ModuleMap:
        """The induced map on degree-``degree`` biduals along the inclusion,
        rebuilt on the cached bidual presentations."""
        n_key, m_key = tuple(sorted(n_div)), tuple(sorted(m_div))
        if (n_key, m_key, degree) not in self._functor:
            _bs, _bt, push = bidual_functor_map(
                self.inclusion(n_key, m_key), degree)
            self._functor[(n_key, m_key, degree)] = ModuleMap(
                self.bidual(n_key, degree).module,
                self.bidual(m_key, degree).module,
                push.matrix)
        return self._functor[(n_key, m_key, degree)]

    def singular_on_relaxed(self, divisor, q: int) -> list:
        """The singular functional at q restricted to the relaxed module,
        as a functional vector on its generators."""
        module, incl = self.relaxed(divisor)
        row = self.instance.singular_functional(q)
        ring = self.ring
        out = []
        for j in range(module.ngens):
            col = [incl.matrix.rows[i][j] for i in range(incl.matrix.nrows)]
            acc = ring.zero
            for c, x in zip(row, col):
                acc = ring.add(acc, ring.mul(c, x))
            out.append(acc)
        return out

    def transition(self, m_div, n_div) -> ModuleMap:
        """The transition from the bidual at the larger divisor to the one at
        the smaller: contract by the singular wedge, pull back, sign."""
        m_key, n_key = tuple(sorted(m_div)), tuple(sorted(n_div))
        if not set(n_key) <= set(m_key):
            raise ValueError("transitions go from a divisor to its subdivisors")
        if (m_key, n_key) not in self._transition:
            self._transition[(m_key, n_key)] = self._build_transition(m_key, n_key)
        return self._transition[(m_key, n_key)]

    def _build_transition(self, m_key, n_key) -> ModuleMap:
        ring = self.ring
        bid_hi = self.bidual(m_key)
        if m_key == n_key:
            return ModuleMap.identity(bid_hi.module)
        deg = self.degree(n_key)
        bid_mid = self.bidual(m_key, deg)
        bid_lo = self.bidual(n_key)

        qs = sorted(set(m_key) - set(n_key), reverse=True)
        dual_rows = []
        for q in qs:
            row = self.singular_on_relaxed(m_key, q)
            sol = solve_linear(bid_hi.Y.transpose(), row)
            if sol is None:
                raise RuntimeError(
                    "a singular functional is not in the dual of the relaxed module")
            dual_rows.append(sol[0])
        phi = wedge_coeffs(ring, dual_rows, bid_hi.dual.ngens)
        contr = bidual_contraction(bid_hi, bid_mid, phi)
        push = self.functor_map(n_key, m_key, deg)

        outside = [q for q in range(self.instance.n_primes) if q not in m_key]
        t = sum(1 for q in qs for qp in outside if qp < q)
        sign = ring.one if t % 2 == 0 else ring.neg(ring.one)

        cols = []
        for b in range(bid_hi.module.ngens):
            w = contr.apply(bid_hi.module.generator(b))
            v = solve_map(push, w)
            if v is None:
                raise RuntimeError(
                    "a contracted element does not lie in the smaller bidual")
            cols.append([ring.mul(sign, c) for c in v])
        mat = Matrix(ring,
                     [[cols[b][a] for b in range(bid_hi.module.ngens)]
                      for a in range(bid_lo.module.ngens)],
                     ncols=bid_hi.module.ngens)
        return ModuleMap(bid_hi.module, bid_lo.module, mat)

    def ambient_shadow(self, divisor, coords) -> list:
        """The value table of a component pushed into the bidual of the free
        ambient module — a presentation-free picture indexed by plain subsets
        of coordinates, used to compare components across coefficient rings."""
        key = tuple(sorted(divisor))
        deg = self.degree(key)
        if key not in self._ambient_push:
            _module, incl = self.relaxed(key)
            _bs, bt, push = bidual_functor_map(incl, deg)
            self._ambient_push[key] = (bt, ModuleMap(
                self.bidual(key).module, bt.module, push.matrix))
        bt, push = self._ambient_push[key]
        return bt.table(push.apply(list(coords)))


class StarkSystem:
    """A divisor-indexed family of bidual elements compatible under the
    transition maps.  ``components`` maps each sorted divisor tuple to the
    coordinate vector of its element in the bidual at that divisor."""

    __slots__ = ("data", "components")

    def __init__(self, data: StarkData, components: dict):
        self.data = data
        self.components = {tuple(sorted(d)): list(v)
                           for d, v in components.items()}

    def component(self, divisor) -> list:
        return list(self.components[tuple(sorted(divisor))])

    def top_component(self) -> list:
        return self.component(self.data.top_divisor)

    def scaled(self, c) -> "StarkSystem":
        ring = self.data.ring
        return StarkSystem(self.data, {
            d: [ring.mul(c, x) for x in v] for d, v in self.components.items()})


def stark_from_top(data: StarkData, top_coords) -> StarkSystem:
    """The system with the given top component: every other component is the
    image under the transition from the top divisor."""
    top = data.top_divisor
    comps = {}
    for d in data.instance.divisors():
        comps[d] = data.transition(top, d).apply(list(top_coords))
    return StarkSystem(data, comps)


def canonical_basis_system(data: StarkData) -> StarkSystem:
    """The system whose top component is the canonical generator of the top
    bidual of the free ambient: the functional with value one on the single
    top wedge monomial."""
    bid = data.bidual(data.top_divisor)
    coords = bid.from_table([data.ring.one])
    if coords is None:
        raise RuntimeError("the canonical top table is not a functional")
    return stark_from_top(data, coords)


def system_is_basis(system: StarkSystem) -> bool:
    """Whether the system generates the module of all systems, i.e. whether
    its top component generates the (free rank one) top bidual."""
    data = system.data
    module = data.bidual(data.top_divisor).module
    gens = [module.generator(i) for i in range(module.ngens)]
    return same_submodule(module, [system.top_component()], gens)


def system_compatible(system: StarkSystem) -> bool:
    """Every transition carries the larger component to the smaller one."""
    data = system.data
    divisors = data.instance.divisors()
    for m in divisors:
        m_set = set(m)
        for n in divisors:
            if not set(n) <= m_set:
                continue
            img = data.transition(m, n).apply(system.component(m))
            if not data.bidual(n).module.elements_equal(img, system.component(n)):
                return False
    return True


def system_ideals(system: StarkSystem) -> list:
    """The content ideals of the system, one per level: the i-th entry is
    generated by all values of all components at divisors with i primes."""
    data = system.data
    out = []
    for level in range(data.instance.n_primes + 1):
        acc = Ideal.zero(data.ring)
        for d in data.instance.divisors():
            if len(d) == level:
                acc = acc.add(content_ideal(data.bidual(d), system.component(d)))
        out.append(acc)
    return out


def verify_cocycle(data: StarkData) -> bool:
    """Transition maps compose exactly along every chain of three divisors."""
    divisors = data.instance.divisors()
    for m in divisors:
        m_set = set(m)
        for mp in divisors:
            if not set(mp) <= m_set:
                continue
            mp_set = set(mp)
            for n in divisors:
                if not set(n) <= mp_set:
                    continue
                direct = data.transition(m, n)
                two_step = data.transition(mp, n).compose(data.transition(m, mp))
                if not direct.equals(two_step):
                    return False
    return True


def core_projections_bijective(data: StarkData) -> bool:
    """At every core divisor (vanishing dual Selmer of the modified
    structure) the projection from the top bidual is an isomorphism."""
    top = data.top_divisor
    return all(is_isomorphism(data.transition(top, d))
               for d in core_vertices(data.instance))


def verify_stark_theorem(system: StarkSystem) -> dict:
    """The structure theorem for the content ideals of a system.

    Returns named boolean verdicts: the ideals ascend with the level,
    stabilize from the minimal generator count of the dual Selmer module
    on, the system is a basis exactly when the final ideal is the unit
    ideal, and every ideal is the final one times the matching Fitting
    ideal of the dual Selmer module.
    """
    data = system.data
    instance = data.instance
    ideals = system_ideals(system)
    dual = instance.dual_selmer(())
    fitts = [fitting_ideal(dual, i) for i in range(instance.n_primes + 1)]
    top = ideals[-1]
    mu = min_generators(dual)
    return {
        "ascending": all(ideals[i].leq(ideals[i + 1])
                         for i in range(len(ideals) - 1)),
        "stabilizes": all(ideals[i] == top
                          for i in range(min(mu, len(ideals) - 1), len(ideals))),
        "basis_iff_unit_content": system_is_basis(system) == top.is_unit(),
        "factors_through_top": all(ideals[i] == top.mul(fitts[i])
                                   for i in range(len(ideals))),
    }


# ---------------------------------------------------------------------------
# Coefficient towers (chain rings only).
# ---------------------------------------------------------------------------


def reduce_instance(instance: SelmerInstance, S) -> SelmerInstance:
    """The instance with every coefficient reduced along R -> S."""
    R = instance.ring

    def red_matrix(M):
        return Matrix(S, [[reduce_element(R, S, c) for c in row]
                          for row in M.rows], ncols=M.ncols)

    primes = [
        PrimeData(pd.label, pd.group_order,
                  frobenius_data(S, red_matrix(pd.frobenius.matrix).rows))
        for pd in instance.primes
    ]
    return SelmerInstance(S, instance.core_rank, primes,
                          red_matrix(instance.finite),
                          red_matrix(instance.transverse))


def reduce_ideal(R, S, ideal: Ideal) -> Ideal:
    """The image ideal under coefficient reduction R -> S."""
    return Ideal(S, [reduce_element(R, S, g) for g in ideal.gens])


class StarkTower:
    """One instance over Z/p^m together with its reductions to every lower
    power of p, and the induced reduction and lifting of systems.

    Chain-ring coefficients only; the top coordinate of a system is a plain
    integer residue, so lifting means reading the same integer in the next
    ring up and reducing means taking it mod the smaller power.
    """

    __slots__ = ("top_level", "p", "_instances", "_data")

    def __init__(self, instance: SelmerInstance):
        ring = instance.ring
        if ring.rank != 1:
            raise ValueError("towers require chain-ring coefficients")
        self.top_level = ring.m
        self.p = ring.p
        self._instances = {ring.m: instance}
        self._data = {}

    @property
    def levels(self) -> list:
        return list(range(1, self.top_level + 1))

    def ring_at(self, level: int):
        return make_ring(self.p, level)

    def instance_at(self, level: int) -> SelmerInstance:
        if level < 1 or level > self.top_level:
            raise ValueError("level outside the tower")
        if level not in self._instances:
            upper = self.instance_at(level + 1)
            self._instances[level] = reduce_instance(upper, self.ring_at(level))
        return self._instances[level]

    def data_at(self, level: int) -> StarkData:
        if level not in self._data:
            self._data[level] = StarkData(self.instance_at(level))
        return self._data[level]

    def reduce_system(self, level: int, system: StarkSystem) -> StarkSystem:
        """The system one level down with the reduced top coordinate."""
        if level <= 1:
            raise ValueError("nothing below the first level")
        R = self.ring_at(level)
        S = self.ring_at(level - 1)
        top = [reduce_element(R, S, c) for c in system.top_component()]
        return stark_from_top(self.data_at(level - 1), top)

    def lift_system(self, level: int, system: StarkSystem) -> StarkSystem:
        """A system one level up reducing to the given one: the top
        coordinate lifts as the same integer residue."""
        if level >= self.top_level:
            raise ValueError("nothing above the top level")
        top = [int(c) for c in system.top_component()]
        return stark_from_top(self.data_at(level + 1), top)

    def systems_from_top(self, top_system: StarkSystem) -> dict:
        """The compatible family obtained by reducing a top-level system
        down the whole tower, keyed by level."""
        out = {self.top_level: top_system}
        for level in range(self.top_level, 1, -1):
            out[level - 1] = self.reduce_system(level, out[level])
        return out


def shadow_reduction_matches(tower: StarkTower, level: int,
                             system: StarkSystem) -> bool:
    """Componentwise check that reduction commutes with the construction:
    the free-ambient value table of every component, reduced entrywise,
    equals the table of the reduced system's component."""
    low = tower.reduce_system(level, system)
    R = tower.ring_at(level)
    S = tower.ring_at(level - 1)
    data_hi = tower.data_at(level)
    data_lo = tower.data_at(level - 1)
    for d in data_hi.instance.divisors():
        hi = data_hi.ambient_shadow(d, system.component(d))
        lo = data_lo.ambient_shadow(d, low.component(d))
        if reduce_table(R, S, hi) != lo:
            return False
    return True


def tower_exponent_table(tower: StarkTower, top_system: StarkSystem) -> list:
    """Exponents of the content ideals down the tower.

    Entry [i][level - 1] is the exponent k with the level's i-th content
    ideal equal to (p^k) — the zero ideal giving the level itself.  The
    recurrence k(level) = min(k(level + 1), level) holds row by row, which
    is how the limits stabilize.
    """
    systems = tower.systems_from_top(top_system)
    s = tower.instance_at(tower.top_level).n_primes
    table = [[0] * tower.top_level for _ in range(s + 1)]
    for level in tower.levels:
        ideals = system_ideals(systems[level])
        for i in range(s + 1):
            table[i][level - 1] = ideals[i].exponent()
    return table


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------


def _divisor_key(divisor) -> str:
    return ",".join(str(q) for q in sorted(divisor))


def _divisor_from_key(key: str) -> tuple:
    return tuple(int(q) for q in key.split(",")) if key else ()


def system_to_json(system: StarkSystem) -> dict:
    """Self-contained JSON form of a divisor-indexed contraction system."""
    from .rings import element_to_json
    from .selmer import instance_to_json

    ring = system.data.ring
    return {
        "schema": "stark-system/1",
        "instance": instance_to_json(system.data.instance),
        "components": {
            _divisor_key(d): [element_to_json(ring, x) for x in v]
            for d, v in sorted(system.components.items())
        },
    }


def system_from_json(data: dict, sdata: StarkData = None):
    """Rebuild ``(data, system)``; reuse ``sdata`` when supplied."""
    from .rings import element_from_json
    from .selmer import instance_from_json

    if data.get("schema") != "stark-system/1":
        raise ValueError("not a stark-system/1 document")
    if sdata is None:
        sdata = StarkData(instance_from_json(data["instance"]))
    ring = sdata.ring
    comps = {
        _divisor_from_key(key): [element_from_json(ring, x) for x in v]
        for key, v in data["components"].items()
    }
    return sdata, StarkSystem(sdata, comps)
