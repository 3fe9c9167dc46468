"""Finitely presented modules over a chain ring or group ring.

A module is presented as R^ngens modulo the row span of a relation matrix.
Because the coefficient rings here are finite, local, and self-injective,
everything downstream — duals, biduals, Fitting ideals, annihilators — reduces
to exact linear algebra over Z/p^m through restriction of scalars:

* membership in a submodule of a free module becomes a linear condition
  (the double-annihilator trick in ``cochecks_int``), so kernels, fixed
  points, and syzygies are all plain integer kernel computations;
* duality is concrete: a functional on R^g/N is a vector y in R^g killed by
  every relation row, and the canonical map into the double dual can be
  written down as a matrix and checked for bijectivity.
"""

from __future__ import annotations

import itertools

from .rings import (
    Matrix,
    cochecks_int,
    howell_form,
    kernel_int,
    matrix_from_json,
    matrix_to_json,
    membership_int,
    quotient_reps_int,
    reduce_mod_rows,
    ring_from_json,
    ring_to_json,
    row_module_size,
    smith_int,
    solve_int,
    solve_linear,
    submodule_howell,
    vec_from_base,
    vec_to_base,
)


class FPModule:
    """R^ngens / (row span of relations), with elements as coset reps.

    Elements are plain lists of ring elements of length ``ngens``; two lists
    represent the same element exactly when their difference satisfies
    ``element_is_zero``.  All canonical data lives at the base-ring level so
    chain rings and group rings share one code path.
    """

    __slots__ = ("ring", "ngens", "relations", "_rel_howell", "_cochecks", "_size")

    def __init__(self, ring, ngens: int, relations: Matrix):
        if relations.ring is not ring and relations.ring != ring:
            raise ValueError("relation matrix is over a different ring")
        if relations.ncols != ngens:
            raise ValueError(
                f"relation rows have {relations.ncols} columns, expected {ngens}"
            )
        self.ring = ring
        self.ngens = ngens
        self.relations = relations
        self._rel_howell = None
        self._cochecks = None
        self._size = None

    @classmethod
    def free(cls, ring, n: int) -> "FPModule":
        return cls(ring, n, Matrix.zeros(ring, 0, n))

    @classmethod
    def cyclic(cls, ring, a) -> "FPModule":
        """R / (a), presented on one generator."""
        return cls(ring, 1, Matrix(ring, [[a]]))

    @classmethod
    def zero(cls, ring) -> "FPModule":
        return cls(ring, 0, Matrix.zeros(ring, 0, 0))

    # -- canonical base-level data -------------------------------------------

    @property
    def rel_howell(self) -> list:
        """Howell form (base rows) of the relation submodule of R^ngens."""
        if self._rel_howell is None:
            self._rel_howell = submodule_howell(
                self.ring, self.relations.rows, self.ngens
            )
        return self._rel_howell

    @property
    def cochecks(self) -> list:
        """Int rows C with {x_base : C.x = 0} = the relation submodule."""
        if self._cochecks is None:
            base = self.ring.base
            self._cochecks = cochecks_int(
                self.rel_howell, self.ngens * self.ring.rank, base.p, base.m
            )
        return self._cochecks

    @property
    def size(self) -> int:
        if self._size is None:
            base = self.ring.base
            ambient = base.n ** (self.ngens * self.ring.rank)
            self._size = ambient // row_module_size(self.rel_howell, base.p, base.m)
        return self._size

    @property
    def is_zero_module(self) -> bool:
        return self.size == 1

    # -- elements --------------------------------------------------------------

    def zero_element(self) -> list:
        return [self.ring.zero] * self.ngens

    def generator(self, i: int) -> list:
        vec = self.zero_element()
        vec[i] = self.ring.one
        return vec

    def element_is_zero(self, vec) -> bool:
        base = self.ring.base
        return membership_int(
            vec_to_base(self.ring, vec), self.rel_howell, base.p, base.m
        )

    def elements_equal(self, u, v) -> bool:
        r = self.ring
        return self.element_is_zero([r.sub(a, b) for a, b in zip(u, v)])

    def canonical_rep(self, vec) -> list:
        base = self.ring.base
        flat = reduce_mod_rows(
            vec_to_base(self.ring, vec), self.rel_howell, base.p, base.m
        )
        return vec_from_base(self.ring, flat)

    def canonical_reps(self):
        """Iterate base-coordinate tuples, one per element of the module."""
        base = self.ring.base
        return quotient_reps_int(
            self.rel_howell, self.ngens * self.ring.rank, base.p, base.m
        )

    def from_base(self, flat) -> list:
        return vec_from_base(self.ring, list(flat))

    def random_element(self, rng) -> list:
        return [self.ring.random_element(rng) for _ in range(self.ngens)]

    def scale_element(self, c, vec) -> list:
        r = self.ring
        return [r.mul(c, x) for x in vec]

    def add_elements(self, u, v) -> list:
        r = self.ring
        return [r.add(a, b) for a, b in zip(u, v)]

    def sub_elements(self, u, v) -> list:
        r = self.ring
        return [r.sub(a, b) for a, b in zip(u, v)]

    def __repr__(self):
        return f"FPModule({self.ring!r}, ngens={self.ngens}, nrels={self.relations.nrows})"


class ModuleMap:
    """An R-linear map between presented modules, given on generators.

    ``matrix`` has shape (target.ngens, source.ngens); column i is the image
    of the i-th source generator.  Construction verifies well-definedness:
    every defining relation of the source must land in the target's relation
    module, otherwise the data does not describe a map at all.
    """

    __slots__ = ("source", "target", "matrix")

    def __init__(self, source: FPModule, target: FPModule, matrix: Matrix):
        if matrix.shape != (target.ngens, source.ngens):
            raise ValueError(
                f"map matrix shape {matrix.shape} != "
                f"({target.ngens}, {source.ngens})"
            )
        self.source = source
        self.target = target
        self.matrix = matrix
        for rel in source.relations.rows:
            if not target.element_is_zero(matrix.apply(rel)):
                raise ValueError("map is not well defined: a relation does not die")

    @classmethod
    def identity(cls, module: FPModule) -> "ModuleMap":
        return cls(module, module, Matrix.identity(module.ring, module.ngens))

    def apply(self, vec) -> list:
        return self.matrix.apply(vec)

    def compose(self, first: "ModuleMap") -> "ModuleMap":
        """self o first (apply ``first``, then self).

        The middle modules must agree as presentations (same ring, same
        generator count); the constructor re-checks well-definedness on the
        composite, so a mismatch cannot slip through silently.
        """
        if first.target.ngens != self.source.ngens:
            raise ValueError("composition shape mismatch")
        return ModuleMap(first.source, self.target, self.matrix.mul(first.matrix))

    def add(self, other: "ModuleMap") -> "ModuleMap":
        return ModuleMap(self.source, self.target, self.matrix.add(other.matrix))

    def sub(self, other: "ModuleMap") -> "ModuleMap":
        return ModuleMap(self.source, self.target, self.matrix.sub(other.matrix))

    def is_zero_map(self) -> bool:
        return all(
            self.target.element_is_zero(col)
            for col in self.matrix.transpose().rows
        )

    def equals(self, other: "ModuleMap") -> bool:
        return self.sub(other).is_zero_map()

    def __repr__(self):
        return f"ModuleMap({self.source!r} -> {self.target!r})"


# ---------------------------------------------------------------------------
# Submodules, kernels, images, cokernels.
# ---------------------------------------------------------------------------


def syzygies(ambient: FPModule, vectors) -> list:
    """Generators of {c in R^t : sum c_i . v_i = 0 in ambient}.

    The condition is linear at the base level thanks to the membership
    cochecks, so one integer kernel computation suffices.
    """
    ring = ambient.ring
    base = ring.base
    t = len(vectors)
    if t == 0:
        return []
    V = Matrix(ring, [[vec[j] for vec in vectors] for j in range(ambient.ngens)],
               ncols=t)
    Vb = V.to_base()
    C = ambient.cochecks
    cond = [
        [sum(crow[u] * Vb[u][w] for u in range(len(Vb))) % base.n
         for w in range(t * ring.rank)]
        for crow in C
    ]
    ker = kernel_int(cond, base.p, base.m) if cond else kernel_int(
        [[0] * (t * ring.rank)], base.p, base.m
    )
    out = []
    for row in ker:
        vec = vec_from_base(ring, row)
        if any(x != ring.zero for x in vec):
            out.append(vec)
    return out


def present_submodule(ambient: FPModule, vectors):
    """The submodule of ``ambient`` generated by ``vectors``, presented.

    Returns ``(sub, incl)`` with ``incl`` the inclusion into ``ambient``.
    The presentation generators correspond to the given vectors in order and
    the relations are their syzygies inside the ambient module.
    """
    ring = ambient.ring
    t = len(vectors)
    syz = syzygies(ambient, vectors)
    sub = FPModule(ring, t, Matrix(ring, syz, ncols=t))
    incl = ModuleMap(
        sub,
        ambient,
        Matrix(ring, [[vec[j] for vec in vectors] for j in range(ambient.ngens)],
               ncols=t),
    )
    return sub, incl


def kernel(f: ModuleMap):
    """Kernel of a module map, as ``(ker, incl)`` with incl into the source.

    Works by linearizing "f(x) dies in the target" with the target's
    membership cochecks and taking an integer kernel.
    """
    ring = f.source.ring
    base = ring.base
    g = f.source.ngens
    Mb = f.matrix.to_base()
    C = f.target.cochecks
    if g == 0:
        return present_submodule(f.source, [])
    cond = [
        [sum(crow[u] * Mb[u][w] for u in range(len(Mb))) % base.n
         for w in range(g * ring.rank)]
        for crow in C
    ]
    ker_base = kernel_int(cond, base.p, base.m) if cond else [
        [int(i == j) for j in range(g * ring.rank)] for i in range(g * ring.rank)
    ]
    gens = []
    for row in ker_base:
        vec = vec_from_base(ring, row)
        if not f.source.element_is_zero(vec):
            gens.append(vec)
    return present_submodule(f.source, gens)


def image(f: ModuleMap):
    """Image of a module map, as ``(img, incl)`` with incl into the target."""
    cols = f.matrix.transpose().rows
    return present_submodule(f.target, [list(c) for c in cols])


def cokernel(f: ModuleMap):
    """Cokernel of a module map, as ``(coker, proj)`` from the target."""
    ring = f.target.ring
    img_rows = Matrix(
        ring, [list(c) for c in f.matrix.transpose().rows], ncols=f.target.ngens
    )
    coker = FPModule(ring, f.target.ngens, f.target.relations.stack(img_rows))
    proj = ModuleMap(f.target, coker, Matrix.identity(ring, f.target.ngens))
    return coker, proj


def quotient_by(ambient: FPModule, vectors):
    """Quotient of ``ambient`` by the submodule its ``vectors`` generate."""
    ring = ambient.ring
    extra = Matrix(ring, [list(v) for v in vectors], ncols=ambient.ngens)
    quot = FPModule(ring, ambient.ngens, ambient.relations.stack(extra))
    proj = ModuleMap(ambient, quot, Matrix.identity(ring, ambient.ngens))
    return quot, proj


def solve_map(f: ModuleMap, target_vec):
    """One x with f(x) = target_vec in the target module, or None.

    Equality means up to the target's relations, so the base-level system
    augments the map's matrix with the relation generators.
    """
    ring = f.source.ring
    base = ring.base
    g = f.source.ngens
    if f.target.ngens == 0:
        return [ring.zero] * g
    A = f.matrix.to_base()
    rel_cols = [list(row) for row in f.target.rel_howell]
    ncols_x = g * ring.rank
    aug = []
    for u in range(f.target.ngens * ring.rank):
        row = [A[u][w] for w in range(ncols_x)] if A else []
        row.extend(rc[u] for rc in rel_cols)
        aug.append(row)
    b = vec_to_base(ring, [ring.reduce(x) for x in target_vec])
    sol = solve_int(aug, b, base.p, base.m)
    if sol is None:
        return None
    return vec_from_base(ring, sol[:ncols_x])


def is_injective(f: ModuleMap) -> bool:
    ker, _ = kernel(f)
    return ker.size == 1


def is_surjective(f: ModuleMap) -> bool:
    coker, _ = cokernel(f)
    return coker.size == 1


def is_isomorphism(f: ModuleMap) -> bool:
    return is_injective(f) and is_surjective(f)


def same_submodule(ambient: FPModule, gens_a, gens_b) -> bool:
    """Whether two generating sets span the same submodule of ``ambient``."""
    ring = ambient.ring
    rel = ambient.relations.rows
    ha = submodule_howell(ring, [list(v) for v in gens_a] + rel, ambient.ngens)
    hb = submodule_howell(ring, [list(v) for v in gens_b] + rel, ambient.ngens)
    return ha == hb


def direct_sum(*modules):
    """Direct sum with block-diagonal relations; returns the new module."""
    if not modules:
        raise ValueError("direct sum of no modules")
    ring = modules[0].ring
    ngens = sum(mod.ngens for mod in modules)
    rows = []
    offset = 0
    for mod in modules:
        for rel in mod.relations.rows:
            row = [ring.zero] * ngens
            row[offset : offset + mod.ngens] = rel
            rows.append(row)
        offset += mod.ngens
    return FPModule(ring, ngens, Matrix(ring, rows, ncols=ngens))


def chain_invariants(module: FPModule) -> list:
    """Exponents e with module isomorphic to the sum of R/(p^e), descending.

    Chain rings only: the Smith form of the relation matrix diagonalizes the
    presentation.  Entries equal to the ring's nilpotency degree are free
    summands; zero entries are trivial and dropped.
    """
    ring = module.ring
    if ring.rank != 1:
        raise ValueError("invariant factors require a chain ring")
    rel = module.relations
    if rel.nrows == 0:
        return [ring.m] * module.ngens
    exps, _P, _Q = smith_int(rel.rows, ring.p, ring.m)
    full = list(exps) + [ring.m] * (module.ngens - len(exps))
    return sorted((e for e in full if e > 0), reverse=True)


# ---------------------------------------------------------------------------
# Duality.
# ---------------------------------------------------------------------------


def dual_module(module: FPModule):
    """The dual Hom_R(X, R), presented, plus its functional matrix.

    Returns ``(dual, Y)`` where Y is a (t x ngens) Matrix whose rows span the
    functionals: row a is the coefficient vector of the a-th dual generator,
    and a dual element with coordinates c evaluates on x as c . (Y . x).
    """
    ring = module.ring
    _H, K = howell_form(module.relations)
    func_rows = [row for row in K.rows if not _vanishes_on_free(module, row)]
    Y = Matrix(ring, func_rows, ncols=module.ngens)
    syz = syzygies(FPModule.free(ring, module.ngens), [list(r) for r in Y.rows])
    dual = FPModule(ring, Y.nrows, Matrix(ring, syz, ncols=Y.nrows))
    return dual, Y


def _vanishes_on_free(module: FPModule, row) -> bool:
    return all(x == module.ring.zero for x in row)


def dual_eval(Y: Matrix, phi_coords, x):
    """Evaluate the dual element with the given coordinates at x."""
    ring = Y.ring
    vals = Y.apply(x)
    acc = ring.zero
    for c, v in zip(phi_coords, vals):
        acc = ring.add(acc, ring.mul(c, v))
    return acc


def dual_map(f: ModuleMap, dual_source, Y_source, dual_target, Y_target):
    """The pullback f* : target* -> source*, phi -> phi o f.

    Takes the duals of source and target as produced by ``dual_module``.  The
    pullback of a functional with vector v is the vector M^T . v, which kills
    the source relations because f is well defined; its coordinates in the
    source dual's generators come from one linear solve per generator.
    """
    ring = f.source.ring
    Mt = f.matrix.transpose()
    L = Y_source.transpose()
    cols = []
    for b in range(dual_target.ngens):
        v = list(Y_target.rows[b])
        w = Mt.apply(v)
        sol = solve_linear(L, w)
        if sol is None:
            raise RuntimeError("pullback functional escapes the source dual")
        cols.append(sol[0])
    mat = Matrix(
        ring,
        [[cols[b][a] for b in range(dual_target.ngens)]
         for a in range(dual_source.ngens)],
        ncols=dual_target.ngens,
    )
    return ModuleMap(dual_target, dual_source, mat)


def bidual_setup(module: FPModule):
    """Dual, double dual, and the canonical map into the double dual.

    Returns ``(dual, Y, double, Yd, ev)`` where ev : module -> double sends a
    generator e_i to the functional phi -> phi(e_i).  Over the self-injective
    rings used here ev is an isomorphism for every finitely presented module,
    and the test suite checks exactly that.
    """
    ring = module.ring
    dual, Y = dual_module(module)
    double, Yd = dual_module(dual)
    cols = []
    L = Yd.transpose()
    for i in range(module.ngens):
        w = [Y.rows[a][i] for a in range(Y.nrows)]
        sol = solve_linear(L, w)
        if sol is None:
            raise RuntimeError("evaluation functional escapes the double dual")
        cols.append(sol[0])
    mat = Matrix(
        ring,
        [[cols[i][b] for i in range(module.ngens)] for b in range(double.ngens)],
        ncols=module.ngens,
    )
    ev = ModuleMap(module, double, mat)
    return dual, Y, double, Yd, ev


# ---------------------------------------------------------------------------
# Ideals.
# ---------------------------------------------------------------------------


class Ideal:
    """A finitely generated ideal with a canonical base-level normal form."""

    __slots__ = ("ring", "gens", "_howell")

    def __init__(self, ring, gens):
        self.ring = ring
        self.gens = [ring.reduce(g) for g in gens]
        self._howell = None

    @classmethod
    def zero(cls, ring) -> "Ideal":
        return cls(ring, [])

    @classmethod
    def unit(cls, ring) -> "Ideal":
        return cls(ring, [ring.one])

    @classmethod
    def principal(cls, ring, x) -> "Ideal":
        return cls(ring, [x])

    @classmethod
    def from_exponent(cls, ring, k: int) -> "Ideal":
        """(p^k) over a chain ring; k >= m gives the zero ideal."""
        if ring.rank != 1:
            raise ValueError("exponent form requires a chain ring")
        if k >= ring.m:
            return cls.zero(ring)
        return cls(ring, [ring.p ** k])

    @property
    def howell(self) -> list:
        if self._howell is None:
            self._howell = submodule_howell(self.ring, [[g] for g in self.gens], 1)
        return self._howell

    def contains(self, x) -> bool:
        base = self.ring.base
        return membership_int(
            vec_to_base(self.ring, [x]), self.howell, base.p, base.m
        )

    def is_zero(self) -> bool:
        return not self.howell

    def is_unit(self) -> bool:
        return self.contains(self.ring.one)

    def leq(self, other: "Ideal") -> bool:
        """Containment self <= other as subsets."""
        base = self.ring.base
        return all(
            membership_int(row, other.howell, base.p, base.m) for row in self.howell
        )

    def __eq__(self, other):
        if not isinstance(other, Ideal):
            return NotImplemented
        return self.ring == other.ring and self.howell == other.howell

    def __hash__(self):
        return hash((id(self.ring), tuple(tuple(r) for r in self.howell)))

    def add(self, other: "Ideal") -> "Ideal":
        return Ideal(self.ring, self.gens + other.gens)

    def mul(self, other: "Ideal") -> "Ideal":
        r = self.ring
        return Ideal(r, [r.mul(a, b) for a in self.gens for b in other.gens])

    def scale(self, c) -> "Ideal":
        r = self.ring
        return Ideal(r, [r.mul(c, g) for g in self.gens])

    @property
    def size(self) -> int:
        base = self.ring.base
        return row_module_size(self.howell, base.p, base.m)

    def exponent(self) -> int:
        """k with self = (p^k) over a chain ring; the zero ideal gives m."""
        ring = self.ring
        if ring.rank != 1:
            raise ValueError("exponent form requires a chain ring")
        if not self.gens:
            return ring.m
        return min(ring.val(g) for g in self.gens)

    def __repr__(self):
        ring = self.ring
        if ring.rank == 1:
            k = self.exponent()
            if k >= ring.m:
                return f"Ideal(0) over {ring!r}"
            if k == 0:
                return f"Ideal(1) over {ring!r}"
            return f"Ideal({ring.p}^{k}) over {ring!r}"
        return f"Ideal({len(self.gens)} gens) over {ring!r}"


# ---------------------------------------------------------------------------
# Fitting ideals and annihilators.
# ---------------------------------------------------------------------------


def _relation_generators(module: FPModule) -> list:
    """A small R-generating set for the relation submodule (from Howell)."""
    ring = module.ring
    gens = []
    for row in module.rel_howell:
        vec = vec_from_base(ring, row)
        if any(x != ring.zero for x in vec):
            gens.append(vec)
    return gens


def fitting_ideal(module: FPModule, i: int = 0) -> Ideal:
    """The i-th Fitting ideal, from (ngens - i)-minors of the relations.

    Conventions: minors of non-positive size give the unit ideal; asking for
    minors larger than the relation row count gives the zero ideal.  The
    result is presentation independent, so the canonical Howell generators of
    the relation module are used rather than the raw relation rows.
    """
    from .rings import det_ring

    ring = module.ring
    g = module.ngens
    s = g - i
    if s <= 0:
        return Ideal.unit(ring)
    rel = _relation_generators(module)
    k = len(rel)
    if s > k:
        return Ideal.zero(ring)
    dets = []
    for rsel in itertools.combinations(range(k), s):
        for csel in itertools.combinations(range(g), s):
            sub = [[rel[a][b] for b in csel] for a in rsel]
            d = det_ring(ring, sub)
            if ring.is_unit(d):
                return Ideal.unit(ring)
            if d != ring.zero:
                dets.append(d)
    return Ideal(ring, dets)


def annihilator(module: FPModule) -> Ideal:
    """Ann_R(X) = {a : a.x = 0 for all x}, via linearized membership."""
    ring = module.ring
    base = ring.base
    d = ring.rank
    if module.ngens == 0:
        return Ideal.unit(ring)
    C = module.cochecks
    stacked = []
    for i in range(module.ngens):
        for crow in C:
            stacked.append([crow[i * d + b] for b in range(d)])
    if not stacked:
        return Ideal.unit(ring)
    ker = kernel_int(stacked, base.p, base.m)
    gens = [ring.from_vec(tuple(row)) for row in ker]
    return Ideal(ring, [g for g in gens if g != ring.zero])


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------


def module_to_json(module: FPModule) -> dict:
    return {
        "ring": ring_to_json(module.ring),
        "gens": module.ngens,
        "relations": matrix_to_json(module.relations),
    }


def module_from_json(data: dict) -> FPModule:
    ring = ring_from_json(data["ring"])
    g = data["gens"]
    rel = matrix_from_json(ring, data["relations"])
    return FPModule(ring, g, Matrix(ring, rel.rows, ncols=g))


def ideal_to_json(ideal: Ideal) -> dict:
    from .rings import element_to_json

    return {
        "ring": ring_to_json(ideal.ring),
        "gens": [element_to_json(ideal.ring, g) for g in ideal.gens],
        "canonical": [list(row) for row in ideal.howell],
    }


def ideal_from_json(data: dict) -> Ideal:
    from .rings import element_from_json

    ring = ring_from_json(data["ring"])
    return Ideal(ring, [element_from_json(ring, g) for g in data["gens"]])


# ---------------------------------------------------------------------------
# Fixed points of commuting endomorphisms.
# ---------------------------------------------------------------------------


def fixed_points(module: FPModule, maps):
    """Common fixed points of commuting endomorphisms, as (sub, incl).

    ``maps`` is a single ModuleMap or a list of them, each an endomorphism of
    ``module``.  Non-commuting inputs are rejected: the fixed submodule of a
    group action only deserves the name when the maps generate one.
    """
    if isinstance(maps, ModuleMap):
        maps = [maps]
    for f in maps:
        if f.source is not module or f.target is not module:
            raise ValueError("fixed points need endomorphisms of the module")
    for a, b in itertools.combinations(maps, 2):
        if not a.compose(b).equals(b.compose(a)):
            raise ValueError("fixed points of non-commuting maps are not an action's")
    ring = module.ring
    base = ring.base
    g = module.ngens
    ident = Matrix.identity(ring, g)
    cond = []
    C = module.cochecks
    for f in maps:
        Db = f.matrix.sub(ident).to_base()
        for crow in C:
            cond.append(
                [sum(crow[u] * Db[u][w] for u in range(len(Db))) % base.n
                 for w in range(g * ring.rank)]
            )
    if not cond:
        ker_base = [
            [int(i == j) for j in range(g * ring.rank)] for i in range(g * ring.rank)
        ]
    else:
        ker_base = kernel_int(cond, base.p, base.m)
    gens = []
    for row in ker_base:
        vec = vec_from_base(ring, row)
        if not module.element_is_zero(vec):
            gens.append(vec)
    return present_submodule(module, gens)
