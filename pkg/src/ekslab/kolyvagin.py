"""Rank-r families on the modified Selmer modules and the regulator map.

A component at a divisor lives in the degree-r bidual of the modified
Selmer module (transverse conditions inside the divisor, finite outside).
The defining relation compares, for each prime q dividing the divisor, the
singular value of the component with the finite-singular image of the
component one prime down; both sides land in the degree-(r-1) bidual of the
module that is strict at q.  The finite-singular map on the identified
rank-one local lines is multiplication by the comparison unit carried by
the prime's Frobenius data, optionally twisted by the chosen generator of
the prime's symbol group.

The regulator sends a divisor-indexed contraction system to such a family:
it contracts each relaxed component by the wedge of the finite-part
functionals of the primes in the divisor (taken in descending order), pulls
the result back into the bidual of the modified Selmer module, and scales
by the comparison units and a divisor sign.  The sign makes the relation
above hold without any further factors; it is forced by the wedge
conventions and is (-1) to the power nu(nu+1)/2 + (sum of prime positions
in the divisor), where nu is the number of primes dividing the divisor.

The value-content ideals of such a family, summed over divisors with a
fixed number of primes, sit inside the matching Fitting ideals of the dual
Selmer module, with equality for bases over chain rings.
"""

from __future__ import annotations

from .biduals import (
    ExteriorBidual,
    bidual_contraction,
    bidual_functor_map,
    content_ideal,
    wedge_coeffs,
)
from .modules import (
    FPModule,
    Ideal,
    ModuleMap,
    fitting_ideal,
    kernel,
    solve_map,
)
from .rings import (
    Matrix,
    howell_int,
    kernel_int,
    membership_int,
    row_module_size,
    solve_linear,
    vec_to_base,
)
from .selmer import SelmerInstance
from .stark import StarkData, StarkSystem


def _scalar(ring, a: int):
    """The integer a as a scalar element of the ring."""
    if ring.rank == 1:
        return a % ring.n
    return ring.from_vec((a % ring.base.n,) + (0,) * (ring.rank - 1))


def _scalar_inverse(ring, a: int):
    """The inverse of the integer scalar a (a must be prime to p)."""
    base_n = ring.n if ring.rank == 1 else ring.base.n
    return _scalar(ring, pow(a % base_n, -1, base_n))


def divisor_sign(ring, divisor):
    """The global sign carried by a regulator component at a divisor."""
    nu = len(divisor)
    total = nu * (nu + 1) // 2 + sum(divisor)
    return ring.one if total % 2 == 0 else ring.neg(ring.one)


def _restrict_functional(ring, row, incl: ModuleMap) -> list:
    """A functional on the free ambient composed with an inclusion."""
    out = []
    for j in range(incl.matrix.ncols):
        acc = ring.zero
        for i in range(incl.matrix.nrows):
            acc = ring.add(acc, ring.mul(row[i], incl.matrix.rows[i][j]))
        out.append(acc)
    return out


def _sub_inclusion(ring, small, small_incl, big, big_incl) -> ModuleMap:
    """The map between two presented submodules of the same free ambient."""
    cols = []
    for j in range(small.ngens):
        vec = small_incl.apply(small.generator(j))
        sol = solve_map(big_incl, vec)
        if sol is None:
            raise RuntimeError("submodule does not sit inside the larger one")
        cols.append(sol)
    mat = Matrix(ring, [[cols[j][i] for j in range(small.ngens)]
                        for i in range(big.ngens)], ncols=small.ngens)
    return ModuleMap(small, big, mat)


def _dual_coords(bid: ExteriorBidual, row) -> list:
    sol = solve_linear(bid.Y.transpose(), list(row))
    if sol is None:
        raise RuntimeError("functional is not in the dual of the module")
    return sol[0]


def _rebased_push(incl: ModuleMap, degree: int,
                  source_bid: ExteriorBidual, target_bid: ExteriorBidual) -> ModuleMap:
    _bs, _bt, push = bidual_functor_map(incl, degree)
    return ModuleMap(source_bid.module, target_bid.module, push.matrix)


class KolyvaginData:
    """Modified Selmer modules of an instance, their degree-r biduals, and
    the two maps of the defining relation, all cached.

    ``sigma_exponents`` records the chosen generator of each prime's symbol
    group as a unit exponent relative to the default choice; it twists the
    effective comparison units but nothing else.
    """

    __slots__ = ("instance", "ring", "rank", "sigma_exponents", "_selmer",
                 "_strict", "_bidual", "_strict_bidual", "_v", "_fs",
                 "_reg_map")

    def __init__(self, instance: SelmerInstance, sigma_exponents=None):
        self.instance = instance
        self.ring = instance.ring
        self.rank = instance.core_rank
        exps = dict(sigma_exponents or {})
        for q, a in exps.items():
            if a % instance.ring.p == 0:
                raise ValueError("generator exponent must be a unit")
        self.sigma_exponents = exps
        self._selmer = {}
        self._strict = {}
        self._bidual = {}
        self._strict_bidual = {}
        self._v = {}
        self._fs = {}
        self._reg_map = {}

    def effective_unit(self, q: int):
        """The comparison unit at q for the chosen symbol-group generator."""
        u = self.instance.primes[q].frobenius.fs_unit
        a = self.sigma_exponents.get(q, 1)
        if a == 1:
            return u
        return self.ring.mul(u, _scalar_inverse(self.ring, a))

    def selmer(self, divisor):
        key = tuple(sorted(divisor))
        if key not in self._selmer:
            self._selmer[key] = self.instance.selmer_module(key)
        return self._selmer[key]

    def strict(self, divisor, q: int):
        """The module strict at q: both local conditions at q, transverse at
        the rest of the divisor, finite outside."""
        key = (tuple(sorted(divisor)), q)
        if key not in self._strict:
            inst = self.instance
            ring = self.ring
            inside = set(key[0])
            rows = []
            for qq in range(inst.n_primes):
                if qq == q:
                    rows.append(inst.singular_functional(qq))
                    rows.append(inst.finite_functional(qq))
                elif qq in inside:
                    rows.append(inst.finite_functional(qq))
                else:
                    rows.append(inst.singular_functional(qq))
            f = ModuleMap(FPModule.free(ring, inst.ambient_rank),
                          FPModule.free(ring, len(rows)),
                          Matrix(ring, rows, ncols=inst.ambient_rank))
            self._strict[key] = kernel(f)
        return self._strict[key]

    def bidual(self, divisor) -> ExteriorBidual:
        key = tuple(sorted(divisor))
        if key not in self._bidual:
            module, _incl = self.selmer(key)
            self._bidual[key] = ExteriorBidual(module, self.rank)
        return self._bidual[key]

    def strict_bidual(self, divisor, q: int) -> ExteriorBidual:
        key = (tuple(sorted(divisor)), q)
        if key not in self._strict_bidual:
            module, _incl = self.strict(*key)
            self._strict_bidual[key] = ExteriorBidual(module, self.rank - 1)
        return self._strict_bidual[key]

    def _drop_map(self, divisor, q, row, scale) -> ModuleMap:
        """Contract the divisor's bidual by an ambient functional and land in
        the strict bidual at (divisor + q); ``divisor`` may or may not
        contain q, ``row`` is the ambient functional, ``scale`` a unit."""
        ring = self.ring
        with_q = tuple(sorted(set(divisor) | {q}))
        bid = self.bidual(divisor)
        module, incl = self.selmer(divisor)
        restricted = _restrict_functional(ring, row, incl)
        phi = _dual_coords(bid, restricted)
        lowered = ExteriorBidual(module, self.rank - 1)
        contr = bidual_contraction(bid, lowered, phi)
        smod, sincl = self.strict(with_q, q)
        sub = _sub_inclusion(ring, smod, sincl, module, incl)
        push = _rebased_push(sub, self.rank - 1,
                             self.strict_bidual(with_q, q), lowered)
        cols = []
        for b in range(bid.module.ngens):
            w = contr.apply(bid.module.generator(b))
            v = solve_map(push, w)
            if v is None:
                raise RuntimeError(
                    "contracted element does not lie in the strict bidual")
            cols.append([ring.mul(scale, c) for c in v])
        mat = Matrix(ring, [[cols[b][a] for b in range(bid.module.ngens)]
                            for a in range(push.source.ngens)],
                     ncols=bid.module.ngens)
        return ModuleMap(bid.module, push.source, mat)

    def v_map(self, divisor, q: int) -> ModuleMap:
        """The singular-value map at q |  divisor: contraction by the
        singular functional, into the strict bidual."""
        key = (tuple(sorted(divisor)), q)
        if q not in key[0]:
            raise ValueError("the singular-value map needs q inside the divisor")
        if key not in self._v:
            self._v[key] = self._drop_map(
                key[0], q, self.instance.singular_functional(q), self.ring.one)
        return self._v[key]

    def fs_map(self, divisor, q: int) -> ModuleMap:
        """The finite-singular map at q for a divisor not containing q:
        contraction by the finite-part functional times the comparison
        unit, into the strict bidual at divisor + q."""
        key = (tuple(sorted(divisor)), q)
        if q in key[0]:
            raise ValueError("the finite-singular map needs q outside the divisor")
        if key not in self._fs:
            self._fs[key] = self._drop_map(
                key[0], q, self.instance.finite_functional(q),
                self.effective_unit(q))
        return self._fs[key]


class KolyvaginSystem:
    """A divisor-indexed family of degree-r bidual elements on the modified
    Selmer modules, stored with the symbol groups trivialized by the
    generator choice of its data object."""

    __slots__ = ("data", "components")

    def __init__(self, data: KolyvaginData, components: dict):
        self.data = data
        self.components = {tuple(sorted(d)): list(v)
                           for d, v in components.items()}

    def component(self, divisor) -> list:
        return list(self.components[tuple(sorted(divisor))])

    def scaled(self, c) -> "KolyvaginSystem":
        ring = self.data.ring
        return KolyvaginSystem(self.data, {
            d: [ring.mul(c, x) for x in v] for d, v in self.components.items()})


def verify_fs(system: KolyvaginSystem):
    """Check the defining relation at every (divisor, prime) pair.

    Returns ``(holds, failures)`` where failures lists the pairs at which
    the singular value of the component does not match the finite-singular
    image of the component one prime down.
    """
    data = system.data
    failures = []
    for n in data.instance.divisors():
        for q in n:
            lower = tuple(x for x in n if x != q)
            lhs = data.v_map(n, q).apply(system.component(n))
            rhs = data.fs_map(lower, q).apply(system.component(lower))
            if not data.strict_bidual(n, q).module.elements_equal(lhs, rhs):
                failures.append((n, q))
    return not failures, failures


def ambient_table(data: KolyvaginData, divisor, coords) -> list:
    """The degree-r value table of a component on the free ambient module.

    Pushes the component along the bidual functor map of the inclusion and
    tabulates it there; the presentation-free form used for interchange and
    for membership checks.
    """
    module, incl = data.selmer(divisor)
    free = FPModule.free(data.ring, data.instance.ambient_rank)
    ambient_bid = ExteriorBidual(free, data.rank)
    push = _rebased_push(incl, data.rank, data.bidual(divisor), ambient_bid)
    return ambient_bid.table(push.apply(list(coords)))


def component_from_ambient_table(data: KolyvaginData, divisor, table):
    """Coordinates of a component given as a degree-r value table on the
    free ambient module, or None when the table is malformed (not a
    functional, or not supported on the modified Selmer module)."""
    from .biduals import table_in_sub_bidual

    module, incl = data.selmer(divisor)
    ring = data.ring
    n = data.instance.ambient_rank
    gens = [incl.apply(module.generator(i)) for i in range(module.ngens)]
    if not table_in_sub_bidual(ring, n, data.rank, list(table), gens):
        return None
    free = FPModule.free(ring, n)
    ambient_bid = ExteriorBidual(free, data.rank)
    coords = ambient_bid.from_table(list(table))
    if coords is None:
        return None
    push = _rebased_push(incl, data.rank, data.bidual(divisor), ambient_bid)
    return solve_map(push, coords)


def system_from_ambient_tables(data: KolyvaginData, tables: dict):
    """Assemble a system from ambient value tables, reporting malformed
    divisors separately from everything else.

    Returns ``(system, malformed)``; the system is None when any divisor's
    table fails to define an element of the right bidual.
    """
    comps = {}
    malformed = []
    for d in data.instance.divisors():
        coords = component_from_ambient_table(data, d, tables[tuple(sorted(d))])
        if coords is None:
            malformed.append(tuple(sorted(d)))
        else:
            comps[tuple(sorted(d))] = coords
    if malformed:
        return None, malformed
    return KolyvaginSystem(data, comps), []


def regulator_component_map(sdata: StarkData, kdata: KolyvaginData,
                            divisor) -> ModuleMap:
    """The per-divisor linear map applied by the regulator.

    From the degree-(r + nu) bidual of the relaxed module to the degree-r
    bidual of the modified Selmer module: contraction by the descending
    wedge of the divisor's finite-part functionals, pulled back along the
    inclusion, scaled by the comparison units and the divisor sign.
    """
    key = tuple(sorted(divisor))
    if key in kdata._reg_map:
        return kdata._reg_map[key]
    ring = kdata.ring
    inst = kdata.instance
    bid_hi = sdata.bidual(key)
    relaxed, relaxed_incl = sdata.relaxed(key)
    qs = sorted(key, reverse=True)
    dual_rows = [
        _dual_coords(bid_hi, _restrict_functional(
            ring, inst.finite_functional(q), relaxed_incl))
        for q in qs
    ]
    phi = wedge_coeffs(ring, dual_rows, bid_hi.dual.ngens)
    lowered = sdata.bidual(key, kdata.rank)
    contr = bidual_contraction(bid_hi, lowered, phi)
    smod, sincl = kdata.selmer(key)
    sub = _sub_inclusion(ring, smod, sincl, relaxed, relaxed_incl)
    push = _rebased_push(sub, kdata.rank, kdata.bidual(key), lowered)
    scale = divisor_sign(ring, key)
    for q in key:
        scale = ring.mul(scale, kdata.effective_unit(q))
    cols = []
    for b in range(bid_hi.module.ngens):
        w = contr.apply(bid_hi.module.generator(b))
        v = solve_map(push, w)
        if v is None:
            raise RuntimeError(
                "regulator component does not lie in the modified bidual")
        cols.append([ring.mul(scale, c) for c in v])
    mat = Matrix(ring, [[cols[b][a] for b in range(bid_hi.module.ngens)]
                        for a in range(push.source.ngens)],
                 ncols=bid_hi.module.ngens)
    out = ModuleMap(bid_hi.module, push.source, mat)
    kdata._reg_map[key] = out
    return out


def regulator(stark_system: StarkSystem, kdata: KolyvaginData) -> KolyvaginSystem:
    """The regulator image of a divisor-indexed contraction system.

    Each component is the contraction of the relaxed component by the
    descending wedge of the finite-part functionals of the divisor's primes,
    pulled back to the bidual of the modified Selmer module and scaled by
    the comparison units and the divisor sign.
    """
    sdata = stark_system.data
    if sdata.instance is not kdata.instance:
        raise ValueError("regulator needs both views of one instance")
    comps = {}
    for n in kdata.instance.divisors():
        key = tuple(sorted(n))
        f = regulator_component_map(sdata, kdata, key)
        comps[key] = f.apply(stark_system.component(key))
    return KolyvaginSystem(kdata, comps)


def regulator_injectivity_certificate(sdata: StarkData,
                                      kdata: KolyvaginData) -> bool:
    """Whether some core vertex certifies injectivity of the regulator.

    At a core vertex the projection from the top is bijective, so an
    injective per-divisor regulator map there forces the whole regulator to
    be injective on divisor-indexed contraction systems.
    """
    from .modules import is_injective
    from .selmer import core_vertices

    for n in core_vertices(kdata.instance):
        if is_injective(regulator_component_map(sdata, kdata, n)):
            return True
    return False


def core_projection_invert(sdata: StarkData, kdata: KolyvaginData,
                           divisor, x) -> StarkSystem:
    """The contraction system whose regulator hits x at a core vertex.

    Solves the per-divisor regulator map for the relaxed component, lifts
    it to the top along the bijective core projection, and rebuilds the
    unique system through that vertex.  Composing with the regulator
    reproduces x at the vertex.
    """
    from .stark import stark_from_top

    key = tuple(sorted(divisor))
    if not kdata.instance.is_core(key):
        raise ValueError("inversion needs a core vertex")
    f = regulator_component_map(sdata, kdata, key)
    eps_n = solve_map(f, list(x))
    if eps_n is None:
        raise RuntimeError(
            "value outside the regulator image at a core vertex: "
            "model violation")
    proj = sdata.transition(sdata.top_divisor, key)
    top = solve_map(proj, eps_n)
    if top is None:
        raise RuntimeError(
            "core projection failed to invert: model violation")
    return stark_from_top(sdata, top)


def kolyvagin_ideals(system: KolyvaginSystem) -> list:
    """Content ideals by level: the i-th entry is generated by all values of
    all components at divisors with i primes."""
    data = system.data
    out = []
    for level in range(data.instance.n_primes + 1):
        acc = Ideal.zero(data.ring)
        for d in data.instance.divisors():
            if len(d) == level:
                acc = acc.add(content_ideal(data.bidual(d), system.component(d)))
        out.append(acc)
    return out


def verify_main_theorem(system: KolyvaginSystem) -> dict:
    """The structural comparison with Fitting ideals of dual Selmer modules.

    Reports raw facts: whether every component's content sits inside (and
    equals) the zeroth Fitting ideal of the dual Selmer module modified at
    its divisor, and whether the level ideals sit inside (and equal) the
    Fitting ideals of the unmodified dual Selmer module.  The containments
    hold for every system in the defining-relation module; the equalities
    are the claims for bases, the level one over chain rings.
    """
    data = system.data
    inst = data.instance
    per_divisor_contained = True
    per_divisor_equal = True
    for d in inst.divisors():
        im = content_ideal(data.bidual(d), system.component(d))
        fitt = fitting_ideal(inst.dual_selmer(d), 0)
        if not im.leq(fitt):
            per_divisor_contained = False
        if im != fitt:
            per_divisor_equal = False
    ideals = kolyvagin_ideals(system)
    dual = inst.dual_selmer(())
    fitts = [fitting_ideal(dual, i) for i in range(inst.n_primes + 1)]
    level_contained = all(ideals[i].leq(fitts[i]) for i in range(len(ideals)))
    level_equal = all(ideals[i] == fitts[i] for i in range(len(ideals)))
    return {
        "im_in_fitt0": per_divisor_contained,
        "im_equals_fitt0": per_divisor_equal,
        "levels_in_fitt": level_contained,
        "levels_equal_fitt": level_equal,
    }


def main_theorem_holds(system: KolyvaginSystem, is_basis: bool) -> bool:
    """The theorem's verdict for a system: containments always, per-divisor
    equality for bases, level equality for bases over chain rings."""
    facts = verify_main_theorem(system)
    if not (facts["im_in_fitt0"] and facts["levels_in_fitt"]):
        return False
    if is_basis and not facts["im_equals_fitt0"]:
        return False
    if is_basis and system.data.ring.rank == 1 and not facts["levels_equal_fitt"]:
        return False
    return True


def fitt_ind_step(instance: SelmerInstance, divisor, i: int) -> dict:
    """One level of the Fitting-ideal induction at a divisor.

    The sum over primes q outside the divisor of the (i-1)-st Fitting
    ideals of the dual Selmer modules at divisor + q sits inside the i-th
    Fitting ideal at the divisor.  Equality is asserted by the theory when
    the Selmer module at the divisor has vanishing annihilator and the
    prime supply is large enough; with a fixed finite prime set the latter
    is a property of the instance, so both facts are reported rather than
    assumed.
    """
    from .modules import annihilator

    key = tuple(sorted(divisor))
    inside = set(key)
    lhs = Ideal.zero(instance.ring)
    for q in range(instance.n_primes):
        if q in inside:
            continue
        bigger = tuple(sorted(key + (q,)))
        lhs = lhs.add(fitting_ideal(instance.dual_selmer(bigger), i - 1))
    rhs = fitting_ideal(instance.dual_selmer(key), i)
    module, _incl = instance.selmer_module(key)
    ann = annihilator(module)
    return {
        "contained": lhs.leq(rhs),
        "equal": lhs == rhs,
        "ann_vanishes": ann.is_zero(),
    }


def fitt_ind_corollary(instance: SelmerInstance, i: int) -> dict:
    """The summed form of the Fitting-ideal induction.

    The sum over divisors with i primes of the zeroth Fitting ideals of
    their dual Selmer modules sits inside the i-th Fitting ideal of the
    unmodified dual Selmer module; equality is reported together with the
    annihilator condition (every divisor's Selmer module must have
    vanishing annihilator) that the theory pairs with it.
    """
    from .modules import annihilator

    lhs = Ideal.zero(instance.ring)
    for d in instance.divisors():
        if len(d) == i:
            lhs = lhs.add(fitting_ideal(instance.dual_selmer(d), 0))
    rhs = fitting_ideal(instance.dual_selmer(()), i)
    ann_all = all(
        annihilator(instance.selmer_module(d)[0]).is_zero()
        for d in instance.divisors())
    return {
        "contained": lhs.leq(rhs),
        "equal": lhs == rhs,
        "ann_vanishes": ann_all,
    }


# ---------------------------------------------------------------------------
# Exhaustive enumeration of the solution module (small instances only).
# ---------------------------------------------------------------------------


def _map_block(f: ModuleMap):
    """Base-level matrix of a module map as nested lists."""
    return f.matrix.to_base()


def enumerate_systems(kdata: KolyvaginData):
    """Solve the defining relations exactly as one base-level linear system.

    Returns ``(howell_rows, layout, size)``: the Howell rows of the raw
    coordinate solution space, the per-divisor slice layout, and the number
    of distinct systems (raw solutions divided by the relation translates
    of every component's presentation).
    """
    inst = kdata.instance
    ring = kdata.ring
    base = ring.base
    d = ring.rank
    divisors = inst.divisors()
    layout = {}
    offset = 0
    for n in divisors:
        g = kdata.bidual(n).module.ngens
        layout[tuple(sorted(n))] = (offset, g)
        offset += g * d
    width = offset

    cond_rows = []
    for n in divisors:
        for q in n:
            lower = tuple(x for x in n if x != q)
            v = kdata.v_map(n, q)
            fs = kdata.fs_map(lower, q)
            target = kdata.strict_bidual(n, q).module
            vb = _map_block(v)
            fb = _map_block(fs)
            off_n, g_n = layout[tuple(sorted(n))]
            off_l, g_l = layout[lower]
            for crow in target.cochecks:
                row = [0] * width
                for u in range(len(vb)):
                    for w in range(g_n * d):
                        row[off_n + w] = (row[off_n + w]
                                          + crow[u] * vb[u][w]) % base.n
                for u in range(len(fb)):
                    for w in range(g_l * d):
                        row[off_l + w] = (row[off_l + w]
                                          - crow[u] * fb[u][w]) % base.n
                cond_rows.append(row)

    if cond_rows:
        sol_rows = kernel_int(cond_rows, base.p, base.m)
    else:
        sol_rows = [[int(i == j) for j in range(width)] for i in range(width)]
    howell = howell_int(sol_rows, width, base.p, base.m)
    raw = row_module_size(howell, base.p, base.m)

    translates = 1
    for n in divisors:
        module = kdata.bidual(n).module
        translates *= row_module_size(module.rel_howell, base.p, base.m)
    return howell, layout, raw // translates


def system_coordinate_vector(system: KolyvaginSystem, layout, width=None) -> list:
    """The flat base-coordinate vector of a system in an enumeration layout."""
    ring = system.data.ring
    d = ring.rank
    if width is None:
        width = sum(g * d for _off, g in layout.values())
    vec = [0] * width
    for key, (off, g) in layout.items():
        flat = vec_to_base(ring, system.component(key))
        vec[off:off + g * d] = flat
    return vec


def ks_solution_report(kdata: KolyvaginData, sdata: StarkData) -> dict:
    """Empirical structure of the full solution module (small instances).

    The solution module of the defining relations in a finite truncation
    may be larger than the regulator image; this report gives the exact
    count of distinct solutions, whether the regulator image of the
    canonical basis lies in it (it always must), and whether it generates
    everything — i.e. whether the solution module is free of rank one.
    """
    from .stark import canonical_basis_system

    ring = kdata.ring
    base = ring.base
    howell, layout, count = enumerate_systems(kdata)
    reg = regulator(canonical_basis_system(sdata), kdata)
    width = sum(g * ring.rank for _off, g in layout.values())
    vec = system_coordinate_vector(reg, layout, width)
    contained = bool(membership_int(vec, howell, base.p, base.m))
    span = []
    for k in range(ring.rank):
        unit_vec = (0,) * k + (1,) + (0,) * (ring.rank - 1 - k)
        e_k = ring.from_vec(unit_vec) if ring.rank > 1 else 1
        scaled = reg.scaled(e_k)
        span.append(system_coordinate_vector(scaled, layout, width))
    for key, (off, g) in layout.items():
        module = kdata.bidual(key).module
        for rel in module.rel_howell:
            row = [0] * width
            row[off:off + g * ring.rank] = rel
            span.append(row)
    generates = howell_int(span, width, base.p, base.m) == howell
    return {
        "count": count,
        "ring_size": ring.size,
        "regulator_contained": contained,
        "regulator_generates": generates,
        "free_rank_one": count == ring.size and contained and generates,
    }


def ks_module_is_free_rank_one(kdata: KolyvaginData,
                               sdata: StarkData) -> bool:
    """Whether the exhaustively enumerated solution module is exactly the
    span of the regulator image of the canonical basis."""
    return ks_solution_report(kdata, sdata)["free_rank_one"]


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------


def kolyvagin_to_json(system: KolyvaginSystem) -> dict:
    """JSON form: like a contraction system, plus the generator record."""
    from .rings import element_to_json
    from .selmer import instance_to_json
    from .stark import _divisor_key

    ring = system.data.ring
    return {
        "schema": "kolyvagin-system/1",
        "instance": instance_to_json(system.data.instance),
        "sigma_exponents": {
            str(q): a for q, a in sorted(system.data.sigma_exponents.items())
        },
        "components": {
            _divisor_key(d): [element_to_json(ring, x) for x in v]
            for d, v in sorted(system.components.items())
        },
    }


def kolyvagin_from_json(data: dict, kdata: KolyvaginData = None):
    """Rebuild ``(data, system)``; reuse ``kdata`` when supplied."""
    from .rings import element_from_json
    from .selmer import instance_from_json
    from .stark import _divisor_from_key

    if data.get("schema") != "kolyvagin-system/1":
        raise ValueError("not a kolyvagin-system/1 document")
    if kdata is None:
        exps = {int(q): int(a)
                for q, a in data.get("sigma_exponents", {}).items()}
        kdata = KolyvaginData(instance_from_json(data["instance"]),
                              sigma_exponents=exps)
    ring = kdata.ring
    comps = {
        _divisor_from_key(key): [element_from_json(ring, x) for x in v]
        for key, v in data["components"].items()
    }
    return kdata, KolyvaginSystem(kdata, comps)
