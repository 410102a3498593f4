"""Kikuchi graphs: labeled sparse edge structures over set-indexed vertices.

A vertex is a tuple of subsets, one per space component; it is ranked to a
single integer through the combinatorial number system per component,
combined row-major.  Four variants are built:

  basic_even   rows/cols C([n], l);            S + T = C, |C| even
  naive_odd    rows C([n], l), cols C([n], l+1); S + T = C, |C| odd
  regular_cs   rows/cols C([n], l)^2;          S1+T1 = C1, S2+T2 = C2
  bipartite    rows C([n], l) x C(P, l), cols C([n], l+1-s) x C(P, l+1);
               S1+T1 = C, S2+T2 = {p}

(+ is symmetric difference.)  Every per-constraint edge set has the same
size D, which is what turns quadratic forms into D times the instance
polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp

from .instances import BipartiteXorInstance, XorInstance
from .setops import subset_rank

DENSE_ENTRY_LIMIT = 10**8  # explicit dense matrices allowed below this
SPACE_ENUM_LIMIT = 5 * 10**7  # lift vectors materialize the whole space


@dataclass(frozen=True)
class SpaceComponent:
    kind: str  # "main" (subsets of [n], lifted by x) or "labels" (by y)
    ground: int
    size: int

    @property
    def cardinality(self) -> int:
        return comb(self.ground, self.size)


@dataclass(frozen=True)
class VertexSpace:
    """Product of subset spaces; vertex rank is row-major over components."""

    components: tuple

    @property
    def cardinality(self) -> int:
        n = 1
        for c in self.components:
            n *= c.cardinality
        return n

    def rank(self, subsets) -> int:
        r = 0
        for c, s in zip(self.components, subsets):
            r = r * c.cardinality + subset_rank(tuple(sorted(s)), c.size)
        return r

    def unrank(self, rank: int):
        from .setops import subset_unrank

        parts = []
        for c in reversed(self.components):
            card = c.cardinality
            parts.append(subset_unrank(rank % card, c.size))
            rank //= card
        return tuple(reversed(parts))

    def lift_vector(self, x, y=None) -> np.ndarray:
        """lift[rank] = product of the assignment over the vertex's subsets.

        "main" components multiply x entries, "labels" components y entries.
        """
        if self.cardinality > SPACE_ENUM_LIMIT:
            raise MemoryError("vertex space too large to enumerate")
        out = None
        for c in self.components:
            vals = x if c.kind == "main" else y
            if vals is None:
                raise ValueError(f"missing assignment for {c.kind} component")
            comp = np.empty(c.cardinality, dtype=np.int8)
            for sub in combinations(range(c.ground), c.size):
                v = 1
                for u in sub:
                    v *= int(vals[u])
                comp[subset_rank(sub, c.size)] = v
            out = comp if out is None else np.multiply.outer(out, comp).ravel()
        return out if out is not None else np.ones(1, dtype=np.int8)


@dataclass
class KikuchiGraph:
    """Edge list with labels; every label owns exactly D edges (entries).

    ``labels[j]`` describes constraint j; ``label_group[j]`` is the
    Rademacher group index (position in ``group_ids``) and
    ``label_sign_factors[j]`` lists the b-indices whose product signs the
    label's entries.  Symmetric variants store both (u,v) and (v,u) entries,
    matching the matrix-entry count D.
    """

    variant: str
    left_space: VertexSpace
    right_space: VertexSpace
    left: np.ndarray  # int64 ranks
    right: np.ndarray
    edge_label: np.ndarray  # int32 index into labels
    labels: list
    label_group: np.ndarray  # int32 index into group_ids
    group_ids: list
    label_sign_factors: list  # per label, tuple of indices into b
    D: int | None
    symmetric: bool
    _csr_cache: tuple | None = field(default=None, repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.left)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def shape(self):
        return (self.left_space.cardinality, self.right_space.cardinality)

    def signs_for(self, b) -> np.ndarray:
        """Per-label sign: the product of the referenced b entries."""
        out = np.ones(self.n_labels, dtype=np.int8)
        for j, factors in enumerate(self.label_sign_factors):
            s = 1
            for i in factors:
                bi = int(b[i])
                if bi not in (-1, 1):
                    raise ValueError("signs must be strictly +-1")
                s *= bi
            out[j] = s
        return out

    def _structure(self):
        if self._csr_cache is None:
            nl, nr = self.shape
            if nl >= 2**62 or nr >= 2**62:
                raise OverflowError("vertex space exceeds index range")
            order = np.lexsort((self.right, self.left))
            rows = self.left[order]
            indptr = np.searchsorted(rows, np.arange(nl + 1))
            self._csr_cache = (order, self.right[order].astype(np.int64), indptr)
        return self._csr_cache

    def to_csr(self, label_signs=None) -> sp.csr_matrix:
        """Sparse matrix with entry = sign of its label (duplicates add)."""
        order, indices, indptr = self._structure()
        if label_signs is None:
            data = np.ones(self.n_edges, dtype=np.float64)
        else:
            data = np.asarray(label_signs, dtype=np.float64)[self.edge_label[order]]
        return sp.csr_matrix((data, indices, indptr), shape=self.shape)

    def to_dense(self, label_signs=None) -> np.ndarray:
        nl, nr = self.shape
        if nl * nr > DENSE_ENTRY_LIMIT:
            raise MemoryError("dense mode disallowed at this size")
        out = np.zeros((nl, nr))
        s = (
            np.ones(self.n_labels, dtype=np.float64)
            if label_signs is None
            else np.asarray(label_signs, dtype=np.float64)
        )
        np.add.at(out, (self.left, self.right), s[self.edge_label])
        return out

    def group_edge_mask(self, group_idx: int) -> np.ndarray:
        return self.label_group[self.edge_label] == group_idx

    def label_edge_mask(self, label_idx: int) -> np.ndarray:
        return self.edge_label == label_idx

    def verify_label_counts(self) -> bool:
        counts = np.bincount(self.edge_label, minlength=self.n_labels)
        return self.n_labels == 0 or (counts == self.D).all()


class ParityObstruction(ValueError):
    """Raised when a builder's parity precondition fails (odd C for the
    even builder and vice versa)."""


def build_basic_even(c_set, n: int, ell: int):
    """Edge entries {(S, T): |S|=|T|=l, S+T=C} for an even-size C.

    Yields (left_rank, right_rank) pairs; count C(|C|, |C|/2) C(n-|C|, l-|C|/2).
    """
    c = tuple(sorted(c_set))
    qc = len(c)
    if qc % 2 == 1:
        raise ParityObstruction("basic even-split graph needs |C| even")
    return _one_sided_edges(c, n, ell, qc // 2, ell)


def build_naive_odd(c_set, n: int, ell: int):
    """Edge entries {(S, T): |S|=l, |T|=l+1, S+T=C} for an odd-size C."""
    c = tuple(sorted(c_set))
    qc = len(c)
    if qc % 2 == 0:
        raise ParityObstruction("imbalanced odd graph needs |C| odd")
    return _one_sided_edges(c, n, ell, (qc - 1) // 2, ell + 1)


def _one_sided_edges(c, n, ell, s_take, t_size):
    """All (S, T) with S = C_half u W, T = (C - C_half) u W."""
    cset = set(c)
    rest = [v for v in range(n) if v not in cset]
    w_size = ell - s_take
    if w_size < 0 or len(c) - s_take + w_size != t_size:
        return []
    out = []
    for chalf in combinations(c, s_take):
        other = tuple(sorted(cset - set(chalf)))
        for w in combinations(rest, w_size):
            s_v = tuple(sorted(chalf + w))
            t_v = tuple(sorted(other + w))
            out.append((subset_rank(s_v, ell), subset_rank(t_v, t_size)))
    return out


def _comb0(n: int, k: int) -> int:
    """Binomial that is 0 outside the feasible range instead of raising."""
    if k < 0 or n < 0 or k > n:
        return 0
    return comb(n, k)


def closed_form_D(variant: str, n: int, ell: int, q: int, s: int = 0, p_size: int = 0) -> int:
    """Per-constraint entry counts for the four variants."""
    if variant == "basic_even":
        return _comb0(q, q // 2) * _comb0(n - q, ell - q // 2)
    if variant == "naive_odd":
        return _comb0(q, (q - 1) // 2) * _comb0(n - q, ell - (q - 1) // 2)
    if variant == "regular_cs":
        h = (q - 1) // 2
        return (_comb0(q - 1, h) * _comb0(n - (q - 1), ell - h)) ** 2
    if variant == "bipartite":
        h = (q - 1) // 2
        if ell + 1 - s < 0:
            return 0
        return (
            _comb0(q - s, h)
            * _comb0(n - (q - s), ell - h)
            * _comb0(p_size - 1, ell)
        )
    raise ValueError(f"unknown variant {variant}")


def build_regular_cs(c1_set, c2_set, n: int, ell: int):
    """Entries ((S1,S2),(T1,T2)) with S1+T1=C1, S2+T2=C2, all sets size l.

    The space is C([n], l)^2 with row-major ranks; C1 and C2 need not be
    disjoint (separate components never interact).
    """
    if len(c1_set) % 2 or len(c2_set) % 2:
        raise ParityObstruction("regular CS graph needs even |C1|, |C2|")
    ones = _one_sided_edges(tuple(sorted(c1_set)), n, ell, len(c1_set) // 2, ell)
    twos = _one_sided_edges(tuple(sorted(c2_set)), n, ell, len(c2_set) // 2, ell)
    card = comb(n, ell)
    out = []
    for s1, t1 in ones:
        base_l = s1 * card
        base_r = t1 * card
        for s2, t2 in twos:
            out.append((base_l + s2, base_r + t2))
    return out


def build_bipartite(c_set, p: int, n: int, ell: int, p_size: int, s: int):
    """Entries ((S1,S2),(T1,T2)): S1+T1=C with |S1 n C|=(q-1)/2, T2=S2 u {p}.

    |C| = q - s; right sizes are l+1-s and l+1.  An infeasible size yields
    an empty list (reported, not an error).
    """
    c = tuple(sorted(c_set))
    q = len(c) + s
    h = (q - 1) // 2
    t1_size = ell + 1 - s
    if t1_size < 0 or ell - h < 0 or h > len(c):
        return []
    cset = set(c)
    rest = [v for v in range(n) if v not in cset]
    ones = []
    for chalf in combinations(c, h):
        other = tuple(sorted(cset - set(chalf)))
        for w in combinations(rest, ell - h):
            s1 = tuple(sorted(chalf + w))
            t1 = tuple(sorted(other + w))
            ones.append((subset_rank(s1, ell), subset_rank(t1, t1_size)))
    twos = []
    others = [u for u in range(p_size) if u != p]
    for s2 in combinations(others, ell):
        t2 = tuple(sorted(s2 + (p,)))
        twos.append((subset_rank(s2, ell), subset_rank(t2, ell + 1)))
    card_l2 = comb(p_size, ell)
    card_r2 = comb(p_size, ell + 1)
    out = []
    for s1, t1 in ones:
        base_l = s1 * card_l2
        base_r = t1 * card_r2
        for s2, t2 in twos:
            out.append((base_l + s2, base_r + t2))
    return out


def _make_graph(variant, left_space, right_space, per_label, labels, groups,
                group_of_label, sign_factors, symmetric) -> KikuchiGraph:
    counts = {len(e) for e in per_label}
    if len(counts) > 1:
        raise AssertionError(f"unequal per-label edge counts: {sorted(counts)}")
    D = counts.pop() if counts else None
    total = sum(len(e) for e in per_label)
    left = np.empty(total, dtype=np.int64)
    right = np.empty(total, dtype=np.int64)
    lab = np.empty(total, dtype=np.int32)
    at = 0
    for j, edges in enumerate(per_label):
        for l, r in edges:
            left[at] = l
            right[at] = r
            lab[at] = j
            at += 1
    return KikuchiGraph(
        variant=variant,
        left_space=left_space,
        right_space=right_space,
        left=left,
        right=right,
        edge_label=lab,
        labels=labels,
        label_group=np.asarray(group_of_label, dtype=np.int32),
        group_ids=groups,
        label_sign_factors=sign_factors,
        D=D,
        symmetric=symmetric,
    )


def assemble_basic(inst: XorInstance, ell: int, variant: str | None = None) -> KikuchiGraph:
    """One label (i, C) per constraint; even split for even q, l vs l+1 else."""
    if variant is None:
        variant = "basic_even" if inst.q % 2 == 0 else "naive_odd"
    n = inst.n
    main_l = VertexSpace((SpaceComponent("main", n, ell),))
    if variant == "basic_even":
        right = VertexSpace((SpaceComponent("main", n, ell),))
        build = lambda c: build_basic_even(c, n, ell)
        symmetric = True
    else:
        right = VertexSpace((SpaceComponent("main", n, ell + 1),))
        build = lambda c: build_naive_odd(c, n, ell)
        symmetric = False
    labels, per_label, group_of_label, sign_factors = [], [], [], []
    groups = list(range(inst.k))
    for i, h in enumerate(inst.hypergraphs):
        for e in h:
            labels.append((i, e))
            per_label.append(build(e))
            group_of_label.append(i)
            sign_factors.append((i,))
    return _make_graph(variant, main_l, right, per_label, labels, groups,
                       group_of_label, sign_factors, symmetric)


def cs_pair_labels(inst: XorInstance, left_idx, right_idx):
    """Labels (i, j, u, C1, C2) over i in L, j in R, shared vertex u, and the
    ordered decompositions C = {u} u C1 in H_i, C' = {u} u C2 in H_j."""
    out = []
    for i in left_idx:
        for j in right_idx:
            if i == j:
                continue
            for e1 in inst.hypergraphs[i]:
                set1 = set(e1)
                for e2 in inst.hypergraphs[j]:
                    for u in e2:
                        if u in set1:
                            c1 = tuple(v for v in e1 if v != u)
                            c2 = tuple(v for v in e2 if v != u)
                            out.append((i, j, u, c1, c2))
    return out


def assemble_regular_cs(
    inst: XorInstance, ell: int, left_idx=None, right_idx=None
) -> KikuchiGraph:
    """Graph of the derived even pairs; group = the left index i of a label.

    With ``left_idx is None`` all ordered pairs i != j contribute, which is
    the full pair polynomial F_b; with a partition (L, R) only L x R pairs
    do, which is f_{L,R}.
    """
    if left_idx is None:
        left_idx = list(range(inst.k))
        right_idx = list(range(inst.k))
    pairs = cs_pair_labels(inst, left_idx, right_idx)
    n = inst.n
    space = VertexSpace(
        (SpaceComponent("main", n, ell), SpaceComponent("main", n, ell))
    )
    groups = sorted(set(left_idx))
    gpos = {g: t for t, g in enumerate(groups)}
    labels, per_label, group_of_label, sign_factors = [], [], [], []
    for (i, j, u, c1, c2) in pairs:
        labels.append((i, j, u, c1, c2))
        per_label.append(build_regular_cs(c1, c2, n, ell))
        group_of_label.append(gpos[i])
        sign_factors.append((i, j))
    g = _make_graph("regular_cs", space, space, per_label, labels, groups,
                    group_of_label, sign_factors, symmetric=True)
    return g


def assemble_bipartite(piece: BipartiteXorInstance, ell: int) -> KikuchiGraph:
    """One label (i, C, p) per bipartite constraint; group = i."""
    n, ps, s = piece.n, piece.p_size, piece.s
    left_space = VertexSpace(
        (SpaceComponent("main", n, ell), SpaceComponent("labels", ps, ell))
    )
    right_space = VertexSpace(
        (
            SpaceComponent("main", n, max(ell + 1 - s, 0)),
            SpaceComponent("labels", ps, ell + 1),
        )
    )
    labels, per_label, group_of_label, sign_factors = [], [], [], []
    groups = list(range(piece.k))
    for i, h in enumerate(piece.hypergraphs):
        for c, p in h:
            labels.append((i, c, p))
            per_label.append(build_bipartite(c, p, n, ell, ps, s))
            group_of_label.append(i)
            sign_factors.append((i,))
    return _make_graph("bipartite", left_space, right_space, per_label, labels,
                       groups, group_of_label, sign_factors, symmetric=False)


def lift_assignment(space: VertexSpace, subsets, x, y=None) -> int:
    """Product of assignment entries over one vertex's subsets."""
    v = 1
    for comp, sub in zip(space.components, subsets):
        vals = x if comp.kind == "main" else y
        for u in sub:
            v *= int(vals[u])
    return v


def quadratic_form(graph: KikuchiGraph, b, x, y=None):
    """z^T A w as an exact integer, plus the per-label breakdown.

    z and w are the lifted +-1 vectors of the two spaces; per label the sum
    equals (edge count) x (signed constraint monomial).
    """
    zl = graph.left_space.lift_vector(x, y).astype(np.int64)
    zr = graph.right_space.lift_vector(x, y).astype(np.int64)
    signs = graph.signs_for(b).astype(np.int64)
    contrib = zl[graph.left] * zr[graph.right] * signs[graph.edge_label]
    per_label = np.zeros(graph.n_labels, dtype=np.int64)
    np.add.at(per_label, graph.edge_label, contrib)
    return int(per_label.sum()), per_label


def matvec(graph: KikuchiGraph, label_signs, vec, side: str = "right"):
    """A @ v for a right-space vector, or A^T @ v for a left-space one.

    ``vec`` may be a dense array over the chosen space or a sparse
    {rank: value} map, in which case only edges meeting the support are
    touched and a map is returned.
    """
    nl, nr = graph.shape
    signs = np.asarray(label_signs, dtype=np.float64)
    if isinstance(vec, dict):
        out: dict[int, float] = {}
        for l, r, j in zip(graph.left, graph.right, graph.edge_label):
            key = int(r) if side == "right" else int(l)
            if key in vec:
                tgt = int(l) if side == "right" else int(r)
                out[tgt] = out.get(tgt, 0.0) + signs[j] * vec[key]
        return out
    vec = np.asarray(vec, dtype=np.float64)
    if side == "right":
        if len(vec) != nr:
            raise ValueError("vector length must match the right space")
        out = np.zeros(nl)
        np.add.at(out, graph.left, signs[graph.edge_label] * vec[graph.right])
        return out
    if len(vec) != nl:
        raise ValueError("vector length must match the left space")
    out = np.zeros(nr)
    np.add.at(out, graph.right, signs[graph.edge_label] * vec[graph.left])
    return out


def reverify_edges(graph: KikuchiGraph) -> bool:
    """Re-check every stored edge against its variant's defining predicate."""
    for l, r, j in zip(graph.left, graph.right, graph.edge_label):
        left_sets = graph.left_space.unrank(int(l))
        right_sets = graph.right_space.unrank(int(r))
        lab = graph.labels[j]
        if graph.variant in ("basic_even", "naive_odd"):
            _, c = lab
            if tuple(sorted(set(left_sets[0]) ^ set(right_sets[0]))) != tuple(c):
                return False
        elif graph.variant == "regular_cs":
            _, _, _, c1, c2 = lab
            if tuple(sorted(set(left_sets[0]) ^ set(right_sets[0]))) != tuple(sorted(c1)):
                return False
            if tuple(sorted(set(left_sets[1]) ^ set(right_sets[1]))) != tuple(sorted(c2)):
                return False
            if left_sets == right_sets:
                return False  # self-loops cannot occur
        elif graph.variant == "bipartite":
            _, c, p = lab
            if tuple(sorted(set(left_sets[0]) ^ set(right_sets[0]))) != tuple(c):
                return False
            if set(left_sets[1]) ^ set(right_sets[1]) != {p}:
                return False
            if p in left_sets[1] or p not in right_sets[1]:
                return False
        else:
            return False
    return True


def dump_graph(graph: KikuchiGraph, path):
    import json

    d = {
        "variant": graph.variant,
        "left_space": [[c.kind, c.ground, c.size] for c in graph.left_space.components],
        "right_space": [[c.kind, c.ground, c.size] for c in graph.right_space.components],
        "D": graph.D,
        "labels": [repr(lab) for lab in graph.labels],
        "edges": [
            [int(l), int(r), int(j)]
            for l, r, j in zip(graph.left, graph.right, graph.edge_label)
        ],
    }
    with open(path, "w") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")
