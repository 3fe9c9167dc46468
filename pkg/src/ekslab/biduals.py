"""Exterior powers, exterior power biduals, and their contraction calculus.

The central object is the "exterior bidual" of a module X in degree r: the
dual of the r-th exterior power of the dual.  Unlike the exterior power
itself it behaves well for non-projective modules, and all the machinery
downstream (rank reduction of local conditions, derived classes, regulator
maps) lives inside these biduals.

Two representations coexist deliberately:

* every bidual is also a finitely presented module (via double dualization),
  so the generic module layer applies;
* elements are most useful as *value tables* — the values of the functional
  on the wedge monomials in the dual's generators — because contraction is a
  sparse signed sum on tables.

For a free module the dual generators are the dual basis, tables are indexed
by plain r-subsets of coordinates, and the table calculus below (subsets,
merge signs, wedge multiplication, interior products) is the workhorse the
Euler/Kolyvagin/Stark engines run on.
"""

from __future__ import annotations

import itertools

from .modules import (
    FPModule,
    Ideal,
    ModuleMap,
    bidual_setup,
    dual_module,
    present_submodule,
    solve_map,
)
from .rings import (
    Matrix,
    cochecks_int,
    det_ring,
    howell_form,
    kernel_int,
    membership_int,
    solve_linear,
    submodule_howell,
    vec_from_base,
    vec_to_base,
)

# ---------------------------------------------------------------------------
# Subset combinatorics and the free wedge calculus.
# ---------------------------------------------------------------------------


def r_subsets(n: int, r: int) -> list:
    """All sorted r-subsets of range(n), lexicographically ordered."""
    return list(itertools.combinations(range(n), r))


def subset_position(n: int, r: int) -> dict:
    return {I: a for a, I in enumerate(r_subsets(n, r))}


def merge_sign(A, B) -> int:
    """Sign of sorting the concatenation A + B, or 0 when they intersect.

    Counts inversions between the two sorted tuples: the parity of moving
    every element of A past the smaller elements of B.
    """
    sa = set(A)
    if sa & set(B):
        return 0
    inv = sum(1 for a in A for b in B if a > b)
    return -1 if inv % 2 else 1


def wedge_coeffs(ring, rows, n: int) -> list:
    """Coefficients of row_1 wedge ... wedge row_r on the r-subsets of range(n).

    The coefficient on a subset A is the r x r minor of the stacked rows at
    the columns of A.
    """
    r = len(rows)
    out = []
    for A in r_subsets(n, r):
        sub = [[row[j] for j in A] for row in rows]
        out.append(det_ring(ring, sub))
    return out


def wedge_mult_matrix(ring, n: int, k: int, r: int, phi) -> Matrix:
    """Matrix of Psi -> Phi wedge Psi from degree k to degree k + r on R^n.

    ``phi`` is a coefficient vector on the r-subsets of range(n).  Columns are
    indexed by k-subsets, rows by (k+r)-subsets.
    """
    rows_idx = r_subsets(n, k + r)
    cols_idx = r_subsets(n, k)
    pos = {I: a for a, I in enumerate(rows_idx)}
    out = [[ring.zero] * len(cols_idx) for _ in rows_idx]
    for b, B in enumerate(cols_idx):
        for a, A in enumerate(r_subsets(n, r)):
            s = merge_sign(A, B)
            if s == 0 or phi[a] == ring.zero:
                continue
            C = tuple(sorted(A + B))
            coeff = phi[a] if s == 1 else ring.neg(phi[a])
            out[pos[C]][b] = ring.add(out[pos[C]][b], coeff)
    return Matrix(ring, out, ncols=len(cols_idx))


def contract_table(ring, n: int, k: int, r: int, phi, table) -> list:
    """Value table of (Phi . F) from a degree-k table F on R^n.

    (Phi . F)(Psi) = F(Phi wedge Psi): the output table on (k-r)-subsets B is
    the signed sum over r-subsets A disjoint from B of phi_A F_{A u B}.
    """
    pos_k = subset_position(n, k)
    out = []
    for B in r_subsets(n, k - r):
        acc = ring.zero
        for a, A in enumerate(r_subsets(n, r)):
            if phi[a] == ring.zero:
                continue
            s = merge_sign(A, B)
            if s == 0:
                continue
            v = ring.mul(phi[a], table[pos_k[tuple(sorted(A + B))]])
            acc = ring.add(acc, v) if s == 1 else ring.sub(acc, v)
        out.append(acc)
    return out


def interior_product(ring, n: int, k: int, ell, table) -> list:
    """Contraction of a degree-k table by a single functional vector."""
    return contract_table(ring, n, k, 1, list(ell), table)


# ---------------------------------------------------------------------------
# Exterior powers of presented modules.
# ---------------------------------------------------------------------------


class ExteriorPower:
    """The r-th exterior power of a presented module, with monomial labels.

    ``subsets[a]`` names the a-th generator: the wedge of the base module's
    generators at those indices.  The presentation is the standard right-exact
    one: every relation row of the base wedged into every (r-1)-monomial.
    """

    __slots__ = ("base", "degree", "subsets", "position", "module")

    def __init__(self, base: FPModule, degree: int):
        if degree < 0:
            raise ValueError("exterior power of negative degree")
        ring = base.ring
        g = base.ngens
        self.base = base
        self.degree = degree
        self.subsets = r_subsets(g, degree)
        self.position = {I: a for a, I in enumerate(self.subsets)}
        ngens = len(self.subsets)
        rows = []
        for rel in base.relations.rows:
            for K in r_subsets(g, degree - 1) if degree >= 1 else []:
                row = [ring.zero] * ngens
                touched = False
                for i, coeff in enumerate(rel):
                    if coeff == ring.zero or i in K:
                        continue
                    s = merge_sign((i,), K)
                    I = tuple(sorted((i,) + K))
                    c = coeff if s == 1 else ring.neg(coeff)
                    row[self.position[I]] = ring.add(row[self.position[I]], c)
                    touched = True
                if touched:
                    rows.append(row)
        self.module = FPModule(ring, ngens, Matrix(ring, rows, ncols=ngens))


def exterior_power(X: FPModule, r: int) -> ExteriorPower:
    return ExteriorPower(X, r)


def exterior_map(f: ModuleMap, r: int):
    """The induced map on r-th exterior powers (minors of the matrix).

    Returns ``(ext_source, ext_target, map)``.  Functorial: minors compose by
    Cauchy-Binet, and the test suite checks it on random pairs.
    """
    ring = f.source.ring
    ext_s = exterior_power(f.source, r)
    ext_t = exterior_power(f.target, r)
    M = f.matrix
    rows = []
    for J in ext_t.subsets:
        row = []
        for I in ext_s.subsets:
            sub = [[M.rows[j][i] for i in I] for j in J]
            row.append(det_ring(ring, sub))
        rows.append(row)
    mat = Matrix(ring, rows, ncols=len(ext_s.subsets))
    return ext_s, ext_t, ModuleMap(ext_s.module, ext_t.module, mat)


def contraction_map(X: FPModule, phi_rows, s: int) -> ModuleMap:
    """Contraction of wedge^s X by phi_1 wedge ... wedge phi_r, as a map.

    ``phi_rows`` are coefficient vectors of functionals on X (length ngens).
    A single functional acts on a wedge x_1 ... x_s by the alternating sum
    with sign (-1)^(i+1) on the term dropping x_i; a wedge of r functionals
    acts as the composite with phi_1 applied first.  The result is the map
    wedge^s X -> wedge^(s-r) X, well-definedness checked by construction.
    """
    ring = X.ring
    g = X.ngens
    r = len(phi_rows)
    if r > s:
        raise ValueError("contraction degree exceeds the wedge degree")
    ext_top = exterior_power(X, s)
    mats = []
    k = s
    for phi in phi_rows:
        pos_prev = subset_position(g, k)
        rows_idx = r_subsets(g, k - 1)
        out = [[ring.zero] * len(r_subsets(g, k)) for _ in rows_idx]
        pos_new = {I: a for a, I in enumerate(rows_idx)}
        for I in r_subsets(g, k):
            col = pos_prev[I]
            for t, i in enumerate(I):
                c = phi[i]
                if c == ring.zero:
                    continue
                J = I[:t] + I[t + 1 :]
                val = c if t % 2 == 0 else ring.neg(c)
                out[pos_new[J]][col] = ring.add(out[pos_new[J]][col], val)
        mats.append(Matrix(ring, out, ncols=len(r_subsets(g, k))))
        k -= 1
    total = mats[0] if mats else Matrix.identity(ring, len(ext_top.subsets))
    for M in mats[1:]:
        total = M.mul(total)
    ext_bot = exterior_power(X, s - r)
    return ModuleMap(ext_top.module, ext_bot.module, total)


# ---------------------------------------------------------------------------
# Exterior biduals.
# ---------------------------------------------------------------------------


class ExteriorBidual:
    """Degree-r exterior bidual of X: the dual of wedge^r of the dual.

    Attributes:
      X, r           — the module and the degree;
      dual, Y        — the dual of X and its functional matrix (rows are the
                       dual generators as coefficient vectors on X);
      wedge          — the exterior power of the dual whose dual we take;
      module, YW     — the bidual as a presented module, and its functional
                       matrix on the wedge monomials.

    Elements are coordinate vectors in ``module``; ``table`` and
    ``from_table`` convert to and from value tables on the wedge monomials of
    the dual generators, where contraction is cheap.
    """

    __slots__ = ("X", "r", "dual", "Y", "wedge", "module", "YW", "_ev")

    def __init__(self, X: FPModule, r: int):
        if r < 0:
            raise ValueError("negative bidual degree")
        self.X = X
        self.r = r
        self.dual, self.Y = dual_module(X)
        self.wedge = exterior_power(self.dual, r)
        self.module, self.YW = dual_module(self.wedge.module)
        self._ev = None

    @property
    def ev(self) -> ModuleMap:
        """The canonical X -> degree-1 bidual map (an iso over these rings).

        Only meaningful in degree 1, where the target presentation built here
        coincides with the double dual: the degree-1 wedge of the dual is the
        dual itself, relation row for relation row.
        """
        if self.r != 1:
            raise ValueError("the evaluation map lives on the degree-1 bidual")
        if self._ev is None:
            _d, _Y, _dd, _Yd, ev = bidual_setup(self.X)
            self._ev = ModuleMap(self.X, self.module, ev.matrix)
        return self._ev

    def table(self, coords) -> list:
        """Values of the functional with these coordinates on the monomials."""
        return self.YW.transpose().apply(list(coords))

    def from_table(self, table):
        """Coordinates of a value table, or None when it is not a functional.

        A table defines an element exactly when it kills the relations of the
        wedge module; tables failing that are rejected, which is how malformed
        derived classes are detected downstream.
        """
        for rel in self.wedge.module.relations.rows:
            acc = self.module.ring.zero
            for c, v in zip(rel, table):
                acc = self.module.ring.add(acc, self.module.ring.mul(c, v))
            if acc != self.module.ring.zero:
                return None
        sol = solve_linear(self.YW.transpose(), list(table))
        if sol is None:
            return None
        return sol[0]

    def xi(self) -> ModuleMap:
        """The canonical map from the exterior power into the bidual.

        xi sends a wedge of module elements to the functional pairing it with
        wedges of dual elements through the determinant of the evaluation
        matrix.  Neither injective nor surjective in general; an isomorphism
        for free modules.
        """
        ring = self.X.ring
        ext = exterior_power(self.X, self.r)
        cols = []
        for I in ext.subsets:
            tbl = []
            for A in self.wedge.subsets:
                sub = [[self.Y.rows[a][i] for i in I] for a in A]
                tbl.append(det_ring(ring, sub))
            coords = self.from_table(tbl)
            if coords is None:
                raise RuntimeError("xi value is not a functional on the wedge")
            cols.append(coords)
        mat = Matrix(
            ring,
            [[cols[c][b] for c in range(len(ext.subsets))]
             for b in range(self.module.ngens)],
            ncols=len(ext.subsets),
        )
        return ModuleMap(ext.module, self.module, mat)


def exterior_bidual(X: FPModule, r: int) -> ExteriorBidual:
    return ExteriorBidual(X, r)


def bidual_functor_map(f: ModuleMap, r: int):
    """The induced map on degree-r biduals, functorially.

    Returns ``(bid_source, bid_target, map)``.  Built by pulling back duals,
    wedging the pullback, and dualizing again; injective whenever f is, over
    the self-injective rings used here.
    """
    from .modules import dual_map

    bs = ExteriorBidual(f.source, r)
    bt = ExteriorBidual(f.target, r)
    pull = dual_map(f, bs.dual, bs.Y, bt.dual, bt.Y)
    _es, _et, wedge_pull = exterior_map(pull, r)
    push = dual_map(wedge_pull, bt.module, bt.YW, bs.module, bs.YW)
    return bs, bt, push


def bidual_contraction(source: ExteriorBidual, target: ExteriorBidual, phi) -> ModuleMap:
    """Contraction map between biduals: (Phi . F)(Psi) = F(Phi wedge Psi).

    ``phi`` is a coefficient vector on the (source.r - target.r)-subsets of
    the dual generators (e.g. from ``wedge_coeffs`` on dual coordinate rows).
    The map is the dual of left wedge multiplication by Phi.
    """
    if source.X is not target.X and source.X.ngens != target.X.ngens:
        raise ValueError("contraction between biduals of different modules")
    r = source.r - target.r
    if r < 0:
        raise ValueError("contraction must lower the degree")
    ring = source.X.ring
    t = source.dual.ngens
    cols = []
    for b in range(source.module.ngens):
        tbl = source.table(source.module.generator(b))
        out = contract_table(ring, t, source.r, r, phi, tbl)
        coords = target.from_table(out)
        if coords is None:
            raise RuntimeError("contracted table is not a functional")
        cols.append(coords)
    mat = Matrix(
        ring,
        [[cols[b][a] for b in range(source.module.ngens)]
         for a in range(target.module.ngens)],
        ncols=source.module.ngens,
    )
    return ModuleMap(source.module, target.module, mat)


# ---------------------------------------------------------------------------
# Submodule membership inside a bidual (the linearized criterion).
# ---------------------------------------------------------------------------


def submodule_bidual_membership(bid: ExteriorBidual, coords, sub_gens) -> bool:
    """Whether the element lies in the bidual of the given submodule.

    ``sub_gens`` generate a submodule Y of bid.X.  The element F of the
    degree-r bidual belongs to the (injectively embedded) degree-r bidual of
    Y exactly when every contraction by a (r-1)-monomial in the dual
    generators sends F into Y — a finite, linear criterion.
    """
    ring = bid.X.ring
    base = ring.base
    X = bid.X
    sub_howell = submodule_howell(
        ring, [list(v) for v in sub_gens] + X.relations.rows, X.ngens
    )
    if bid.r == 0:
        return True
    one = exterior_bidual(X, 1)
    tbl = bid.table(coords)
    t = bid.dual.ngens
    for A in r_subsets(t, bid.r - 1):
        phi = [ring.zero] * len(r_subsets(t, bid.r - 1))
        phi[subset_position(t, bid.r - 1)[A]] = ring.one
        out = contract_table(ring, t, bid.r, bid.r - 1, phi, tbl)
        w = one.from_table(out)
        if w is None:
            raise RuntimeError("contraction left the bidual")
        x = solve_map(one.ev, w)
        if x is None:
            raise RuntimeError("degree-1 bidual element outside the image of X")
        if not membership_int(vec_to_base(ring, x), sub_howell, base.p, base.m):
            return False
    return True


def bidual_kernel(X: FPModule, f_vec, r: int):
    """Both sides of the kernel identity for a functional f on X.

    Returns ``(lhs, rhs, equal, bid)`` where ``bid`` is the degree-r bidual
    of X, ``lhs`` generates the submodule of elements supported on ker(f)
    (tested by the linear membership criterion), ``rhs`` generates the kernel
    of contraction by f on the bidual, and ``equal`` says whether they agree
    as submodules.
    """
    from .modules import kernel as module_kernel

    ring = X.ring
    bid = exterior_bidual(X, r)
    f_map = ModuleMap(X, FPModule.free(ring, 1), Matrix(ring, [list(f_vec)]))
    ker_sub, ker_incl = module_kernel(f_map)
    ker_gens = [ker_incl.apply(ker_sub.generator(i)) for i in range(ker_sub.ngens)]

    lhs_gens = _membership_kernel(bid, ker_gens)

    # f as a dual element: solve Y^T c = f (f kills relations of X, so it is
    # an honest functional and the solve succeeds).
    sol = solve_linear(bid.Y.transpose(), list(f_vec))
    if sol is None:
        raise ValueError("f is not a functional on X")
    phi = sol[0]
    target = exterior_bidual(X, r - 1)
    cmap = bidual_contraction(bid, target, phi)
    rhs_sub, rhs_incl = module_kernel(cmap)
    rhs_gens = [rhs_incl.apply(rhs_sub.generator(i)) for i in range(rhs_sub.ngens)]

    lhs_sub, _ = present_submodule(bid.module, lhs_gens)
    equal = lhs_sub.size == rhs_sub.size and all(
        submodule_bidual_membership(bid, gen, ker_gens) for gen in rhs_gens
    )
    return lhs_gens, rhs_gens, equal, bid


def _membership_kernel(bid: ExteriorBidual, sub_gens) -> list:
    """Generators of {F : all (r-1)-monomial contractions land in the span}.

    The linear version of the membership criterion, for biduals too large to
    enumerate: stack, over the monomials, the composite of contraction,
    ev-inverse, and the submodule cochecks, then take an integer kernel.
    """
    ring = bid.X.ring
    base = ring.base
    X = bid.X
    if bid.r == 0:
        return [bid.module.generator(i) for i in range(bid.module.ngens)]
    one = exterior_bidual(X, 1)
    t = bid.dual.ngens
    sub_howell = submodule_howell(
        ring, [list(v) for v in sub_gens] + X.relations.rows, X.ngens
    )
    C = cochecks_int(sub_howell, X.ngens * ring.rank, base.p, base.m)
    cond = []
    g = bid.module.ngens
    for A in r_subsets(t, bid.r - 1):
        phi = [ring.zero] * len(r_subsets(t, bid.r - 1))
        phi[subset_position(t, bid.r - 1)[A]] = ring.one
        xs = []
        for b in range(g):
            tbl = bid.table(bid.module.generator(b))
            out = contract_table(ring, t, bid.r, bid.r - 1, phi, tbl)
            w = one.from_table(out)
            xs.append(solve_map(one.ev, w))
        # x depends R-linearly on the element; columns of the base-linear
        # matrix are the scalar translates of the per-generator images.
        full = []
        for b in range(g):
            for e in range(ring.rank):
                unit = ring.from_vec(tuple(int(i == e) for i in range(ring.rank)))
                scaled = [ring.mul(unit, xe) for xe in xs[b]]
                full.append(vec_to_base(ring, scaled))
        for crow in C:
            cond.append([
                sum(crow[u] * full[w][u] for u in range(len(crow))) % base.n
                for w in range(g * ring.rank)
            ])
    if not cond:
        return [bid.module.generator(i) for i in range(g)]
    ker = kernel_int(cond, base.p, base.m)
    gens = []
    for row in ker:
        vec = vec_from_base(ring, row)
        if not bid.module.element_is_zero(vec):
            gens.append(vec)
    return gens


# ---------------------------------------------------------------------------
# Induced maps along ring surjections (free ambient, table form).
# ---------------------------------------------------------------------------


def reduce_element(R, S, x):
    """Push a ring element along the canonical surjection R -> S.

    Chain to chain lowers the coefficient modulus; group to group may also
    quotient the grading group (exponents reduced componentwise), which sums
    colliding coefficients — the coefficient-projection form of corestriction.
    """
    if R.rank == 1 and S.rank == 1:
        return x % S.n
    if R.rank == 1 or S.rank == 1:
        if S.rank == 1:
            # group ring onto a chain ring: collapse the group (sum all
            # coefficients) and reduce the modulus.
            return sum(x) % S.n
        raise ValueError("no canonical surjection from a chain ring to a group ring")
    out = [0] * S.rank
    for idx, coeff in enumerate(x):
        if coeff == 0:
            continue
        exps = R.index_to_exp(idx)
        new = tuple(e % o for e, o in zip(exps, S.orders))
        out[S.exp_to_index(new)] = (out[S.exp_to_index(new)] + coeff) % S.base.n
    return tuple(c % S.base.n for c in out)


def reduce_table(R, S, table) -> list:
    return [reduce_element(R, S, v) for v in table]


def perp_rows(ring, sub_gens, ncols: int) -> list:
    """Functional vectors vanishing on the span of the given vectors."""
    A = Matrix(ring, [list(v) for v in sub_gens], ncols=ncols)
    _H, K = howell_form(A)
    return [list(r) for r in K.rows]


def table_in_sub_bidual(ring, n: int, k: int, table, sub_gens) -> bool:
    """Free-ambient membership: does the table lie in the bidual of the span?

    A degree-k table on R^n belongs to the embedded bidual of the submodule Y
    spanned by ``sub_gens`` exactly when contraction by every functional
    vanishing on Y kills it.
    """
    for ell in perp_rows(ring, sub_gens, n):
        out = interior_product(ring, n, k, ell, table)
        if any(v != ring.zero for v in out):
            return False
    return True


def induced_bidual_map(R, S, n: int, X_gens, Y_gens, r: int):
    """The natural degree-r map along R -> S from tables on X to tables in Y.

    ``X_gens`` span a submodule of the free R-module of rank n; ``Y_gens``
    span a submodule of the free S-module of rank n.  The square commutes
    when every reduced generator of X lies in the span of Y — checked here,
    rejected otherwise.  The returned callable reduces a degree-r table
    entrywise and verifies the result lands in the bidual of Y.
    """
    y_howell = submodule_howell(S, [list(v) for v in Y_gens], n)
    base = S.base
    for x in X_gens:
        xr = [reduce_element(R, S, c) for c in x]
        if not membership_int(vec_to_base(S, xr), y_howell, base.p, base.m):
            raise ValueError("square does not commute: a reduced generator escapes")

    def push(table):
        out = reduce_table(R, S, table)
        if not table_in_sub_bidual(S, n, r, out, Y_gens):
            raise RuntimeError("reduced table escapes the target bidual")
        return out

    return push


# ---------------------------------------------------------------------------
# Fitting ideals through the bidual calculus.
# ---------------------------------------------------------------------------


def content_ideal(bid: ExteriorBidual, coords) -> Ideal:
    """Ideal generated by all values of a bidual element.

    The wedge monomials span the exterior power, so the values of the
    functional on them generate the same ideal as its values on arbitrary
    arguments.
    """
    ring = bid.X.ring
    return Ideal(ring, [v for v in bid.table(coords) if v != ring.zero])


def fitt0_via_bidual(ring, rank: int, phi_rows) -> Ideal:
    """Fitting ideal of coker(phis) computed by top-table contraction.

    For a free module of the given rank and functionals phi_1..phi_s, the
    image of the top bidual under contraction by their wedge generates, by
    its table values, exactly the zeroth Fitting ideal of the cokernel of
    (phi_i) — the bidual route to minors.
    """
    s = len(phi_rows)
    if s > rank:
        raise ValueError("more functionals than the rank")
    table = [ring.one]
    k = rank
    for phi in phi_rows:
        table = interior_product(ring, rank, k, list(phi), table)
        k -= 1
    return Ideal(ring, [v for v in table if v != ring.zero])
