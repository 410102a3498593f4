"""XOR instances over hypergraph matchings, their polynomials, and oracles.

An instance is ``k`` q-uniform hypergraph matchings H_1..H_k on [n] plus an
optional sign vector b; its polynomial is

    Phi_b(x) = sum_i b_i sum_{C in H_i} prod_{v in C} x_v,   x in {-1,+1}^n.

Bipartite instances carry hyperedges (C, p) with |C| = q - s left vertices
and a label p from a registry of s-subsets; their polynomial additionally
multiplies by y_p.  Everything here is immutable after construction and all
randomness flows through explicit seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .setops import mask_of

EXHAUSTIVE_LIMIT = 24  # max total +-1 variables for the exact oracle
EXHAUSTIVE_B_LIMIT = 16  # expected_val enumerates all 2^k signs up to here


class DimensionMismatch(ValueError):
    pass


class InfeasibleSize(ValueError):
    pass


class OracleLimitExceeded(RuntimeError):
    """Exhaustive scan refused; caller may fall back to sampling."""


def validate_matching(edges) -> tuple[bool, tuple | None]:
    """Check pairwise disjointness; returns (ok, first colliding pair or None)."""
    seen = 0
    for idx, e in enumerate(edges):
        m = mask_of(e)
        if seen & m:
            for jdx in range(idx):
                if mask_of(edges[jdx]) & m:
                    return False, (tuple(edges[jdx]), tuple(e))
        seen |= m
    return True, None


def _norm_edges(hypergraphs):
    return tuple(tuple(tuple(sorted(e)) for e in h) for h in hypergraphs)


@dataclass(frozen=True)
class XorInstance:
    """k q-uniform hypergraph matchings on [n] with optional fixed signs."""

    n: int
    k: int
    q: int
    delta: float
    hypergraphs: tuple  # k tuples of sorted vertex tuples (0-based)
    signs: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "hypergraphs", _norm_edges(self.hypergraphs))
        if len(self.hypergraphs) != self.k:
            raise DimensionMismatch("expected k hypergraphs")
        for h in self.hypergraphs:
            for e in h:
                if len(e) != self.q:
                    raise ValueError(f"edge {e} is not {self.q}-uniform")
                if not all(0 <= v < self.n for v in e):
                    raise ValueError(f"edge {e} out of range [0, {self.n})")
            ok, pair = validate_matching(h)
            if not ok:
                raise ValueError(f"not a matching: edges {pair} collide")
        if self.signs is not None:
            object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
            if len(self.signs) != self.k or any(s not in (-1, 1) for s in self.signs):
                raise ValueError("signs must be a +-1 vector of length k")

    @property
    def edge_counts(self) -> tuple[int, ...]:
        return tuple(len(h) for h in self.hypergraphs)

    @property
    def total_edges(self) -> int:
        return sum(self.edge_counts)

    def measured_delta(self) -> Fraction:
        """max_i |H_i| / n, from the data rather than the metadata field."""
        return Fraction(max(self.edge_counts, default=0), self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "q": self.q,
            "delta": self.delta,
            "hypergraphs": [[[v + 1 for v in e] for e in h] for h in self.hypergraphs],
            "signs": list(self.signs) if self.signs is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "XorInstance":
        return cls(
            n=d["n"],
            k=d["k"],
            q=d["q"],
            delta=d["delta"],
            hypergraphs=[[[v - 1 for v in e] for e in h] for h in d["hypergraphs"]],
            signs=d.get("signs"),
        )


@dataclass(frozen=True)
class BipartiteXorInstance:
    """k bipartite matchings over [n] x P_s; labels are registered s-subsets."""

    n: int
    k: int
    q: int
    s: int
    registry: tuple  # distinct s-subsets of [n], index = label p
    hypergraphs: tuple  # k tuples of (left vertex tuple, label index)
    signs: tuple | None = None

    def __post_init__(self):
        if not (2 <= self.s <= (self.q + 1) // 2):
            raise ValueError("s out of range for the pipeline")
        reg = tuple(tuple(sorted(p)) for p in self.registry)
        if len(set(reg)) != len(reg):
            raise ValueError("registry labels must be distinct")
        for p in reg:
            if len(p) != self.s:
                raise ValueError(f"registry set {p} is not an s-subset")
        object.__setattr__(self, "registry", reg)
        hgs = tuple(
            tuple((tuple(sorted(c)), int(p)) for c, p in h) for h in self.hypergraphs
        )
        object.__setattr__(self, "hypergraphs", hgs)
        if len(hgs) != self.k:
            raise DimensionMismatch("expected k hypergraphs")
        for h in hgs:
            seen_left = 0
            seen_p = set()
            for c, p in h:
                if len(c) != self.q - self.s:
                    raise ValueError(f"left set {c} is not (q-s)-uniform")
                if not (0 <= p < len(reg)):
                    raise ValueError(f"unknown label index {p}")
                m = mask_of(c)
                if (seen_left & m) or p in seen_p:
                    raise ValueError("not a bipartite matching")
                seen_left |= m
                seen_p.add(p)

    @property
    def p_size(self) -> int:
        return len(self.registry)

    @property
    def edge_counts(self) -> tuple[int, ...]:
        return tuple(len(h) for h in self.hypergraphs)

    @property
    def total_edges(self) -> int:
        return sum(self.edge_counts)

    def measured_delta(self) -> Fraction:
        return Fraction(max(self.edge_counts, default=0), self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "q": self.q,
            "s": self.s,
            "labels": [[v + 1 for v in p] for p in self.registry],
            "hypergraphs": [
                [{"left": [v + 1 for v in c], "p": p} for c, p in h]
                for h in self.hypergraphs
            ],
            "signs": list(self.signs) if self.signs is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BipartiteXorInstance":
        return cls(
            n=d["n"],
            k=d["k"],
            q=d["q"],
            s=d["s"],
            registry=[[v - 1 for v in p] for p in d["labels"]],
            hypergraphs=[
                [([v - 1 for v in e["left"]], e["p"]) for e in h]
                for h in d["hypergraphs"]
            ],
            signs=d.get("signs"),
        )


def _check_signs(b, k):
    b = tuple(int(s) for s in b)
    if len(b) != k or any(s not in (-1, 1) for s in b):
        raise DimensionMismatch("signs must be a +-1 vector of length k")
    return b


def eval_phi(inst: XorInstance, b, x) -> int:
    """Exact integer value of Phi_b(x)."""
    b = _check_signs(b, inst.k)
    if len(x) != inst.n:
        raise DimensionMismatch("x has wrong length")
    x = [int(v) for v in x]
    if any(v not in (-1, 1) for v in x):
        raise ValueError("x must be +-1")
    total = 0
    for bi, h in zip(b, inst.hypergraphs):
        for e in h:
            mono = 1
            for v in e:
                mono *= x[v]
            total += bi * mono
    return total


def eval_psi_bipartite(inst: BipartiteXorInstance, b, x, y) -> int:
    """Exact integer value of Psi^(s)_b(x, y)."""
    b = _check_signs(b, inst.k)
    if len(x) != inst.n:
        raise DimensionMismatch("x has wrong length")
    if len(y) != inst.p_size:
        raise DimensionMismatch("y must be indexed by the registry")
    total = 0
    for bi, h in zip(b, inst.hypergraphs):
        for c, p in h:
            mono = int(y[p])
            for v in c:
                mono *= int(x[v])
            total += bi * mono
    return total


def _constraint_masks(inst, b):
    """Per-constraint (sign, variable bitmask) over the joint variable vector.

    Joint order: x_0..x_{n-1} then (for bipartite) y_0..y_{|P|-1}.
    """
    out_signs, out_masks = [], []
    if isinstance(inst, XorInstance):
        for bi, h in zip(b, inst.hypergraphs):
            for e in h:
                out_signs.append(bi)
                out_masks.append(mask_of(e))
    else:
        for bi, h in zip(b, inst.hypergraphs):
            for c, p in h:
                out_signs.append(bi)
                out_masks.append(mask_of(c) | (1 << (inst.n + p)))
    return out_signs, out_masks


def _num_vars(inst) -> int:
    return inst.n + (inst.p_size if isinstance(inst, BipartiteXorInstance) else 0)


def _parity_matrix(masks, lo: int, hi: int) -> np.ndarray:
    """(-1)^{popcount(a & mask)} for assignments a in [lo, hi), int8 rows."""
    a = np.arange(lo, hi, dtype=np.uint64)
    rows = np.empty((len(masks), hi - lo), dtype=np.int8)
    for r, m in enumerate(masks):
        par = np.bitwise_count(a & np.uint64(m)).astype(np.int8) & 1
        rows[r] = 1 - 2 * par
    return rows


def brute_force_val(inst, b, limit: int = EXHAUSTIVE_LIMIT):
    """Exact max of the instance polynomial over all +-1 assignments.

    Returns (value, argmax x, argmax y or None).  Bit v of the assignment
    index set means variable v is -1.  Refuses when the joint variable count
    exceeds ``limit``.
    """
    b = _check_signs(b, inst.k)
    nv = _num_vars(inst)
    if nv > limit:
        raise OracleLimitExceeded(f"{nv} variables exceeds exhaustive limit {limit}")
    signs, masks = _constraint_masks(inst, b)
    best_val, best_idx = None, 0
    sv = np.asarray(signs, dtype=np.int32)
    for lo in range(0, 1 << nv, 1 << 20):
        hi = min(lo + (1 << 20), 1 << nv)
        vals = sv @ _parity_matrix(masks, lo, hi).astype(np.int32)
        j = int(np.argmax(vals))
        if best_val is None or vals[j] > best_val:
            best_val, best_idx = int(vals[j]), lo + j
    x = [1 - 2 * ((best_idx >> v) & 1) for v in range(inst.n)]
    y = None
    if isinstance(inst, BipartiteXorInstance):
        y = [1 - 2 * ((best_idx >> (inst.n + p)) & 1) for p in range(inst.p_size)]
    return best_val, x, y


def val_for_all_signs(inst, limit: int = EXHAUSTIVE_LIMIT) -> np.ndarray:
    """val(Phi_b) for every b in {-1,+1}^k (bit i of the row index = b_i is -1)."""
    nv = _num_vars(inst)
    if nv > limit:
        raise OracleLimitExceeded(f"{nv} variables exceeds exhaustive limit {limit}")
    if inst.k > EXHAUSTIVE_B_LIMIT:
        raise OracleLimitExceeded(f"k={inst.k} too large to enumerate signs")
    _, masks = _constraint_masks(inst, [1] * inst.k)
    owner = []
    for i, h in enumerate(inst.hypergraphs):
        owner.extend([i] * len(h))
    owner = np.asarray(owner, dtype=np.int64)
    bi = np.arange(1 << inst.k, dtype=np.uint64)
    bmat = 1 - 2 * (
        (bi[:, None] >> np.arange(inst.k, dtype=np.uint64)[None, :]) & 1
    ).astype(np.int32)  # (2^k, k)
    coeff = bmat[:, owner] if len(owner) else np.zeros((1 << inst.k, 0), np.int32)
    best = np.full(1 << inst.k, -(1 << 62), dtype=np.int64)
    if not len(masks):
        return np.zeros(1 << inst.k, dtype=np.int64)
    # keep the (2^k x chunk) work array near 2^22 entries
    chunk = max(1 << 8, (1 << 22) >> inst.k)
    for lo in range(0, 1 << nv, chunk):
        hi = min(lo + chunk, 1 << nv)
        vals = coeff.astype(np.int64) @ _parity_matrix(masks, lo, hi).astype(np.int64)
        np.maximum(best, vals.max(axis=1), out=best)
    return best


def expected_val(inst, trials: int = 200, seed: int = 0, limit: int = EXHAUSTIVE_LIMIT):
    """Mean (and stderr) of val over uniform signs b.

    Exhaustive over all 2^k sign vectors when k <= 16 (stderr 0); Monte Carlo
    otherwise.
    """
    if inst.k <= EXHAUSTIVE_B_LIMIT:
        vals = val_for_all_signs(inst, limit=limit)
        return float(vals.mean()), 0.0
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(trials):
        b = 1 - 2 * rng.integers(0, 2, size=inst.k)
        v, _, _ = brute_force_val(inst, b, limit=limit)
        samples.append(v)
    arr = np.asarray(samples, dtype=float)
    stderr = arr.std(ddof=1) / np.sqrt(len(arr)) if len(arr) > 1 else 0.0
    return float(arr.mean()), float(stderr)


def generate_random_matching_instance(
    n: int, q: int, k: int, delta: float, seed: int
) -> XorInstance:
    """k independent uniformly random q-uniform matchings of size floor(delta*n)."""
    m = int(delta * n)
    if m * q > n:
        raise InfeasibleSize(f"need {m * q} vertices for a size-{m} matching, have {n}")
    rng = np.random.default_rng(seed)
    hgs = []
    for _ in range(k):
        perm = rng.permutation(n)[: m * q]
        hgs.append([sorted(int(v) for v in perm[j * q : (j + 1) * q]) for j in range(m)])
    return XorInstance(n=n, k=k, q=q, delta=delta, hypergraphs=hgs)


def generate_random_bipartite_instance(
    n: int, q: int, s: int, k: int, edges_per: int, p_size: int, seed: int
) -> BipartiteXorInstance:
    """Random bipartite matchings over [n] x P_s with a random registry."""
    if edges_per * (q - s) > n or edges_per > p_size:
        raise InfeasibleSize("matching does not fit")
    rng = np.random.default_rng(seed)
    all_s = list(combinations(range(n), s))
    if p_size > len(all_s):
        raise InfeasibleSize("registry larger than the number of s-subsets")
    reg_idx = rng.choice(len(all_s), size=p_size, replace=False)
    registry = [all_s[i] for i in reg_idx]
    hgs = []
    for _ in range(k):
        perm = rng.permutation(n)[: edges_per * (q - s)]
        labels = rng.choice(p_size, size=edges_per, replace=False)
        h = []
        for j in range(edges_per):
            left = sorted(int(v) for v in perm[j * (q - s) : (j + 1) * (q - s)])
            h.append((left, int(labels[j])))
        hgs.append(h)
    return BipartiteXorInstance(
        n=n, k=k, q=q, s=s, registry=registry, hypergraphs=hgs
    )


# ---------------------------------------------------------------------------
# planted instances


def _gf2_rank(rows: list[int]) -> int:
    pivots = []
    for r in rows:
        for p in pivots:
            r = min(r, r ^ p)
        if r:
            pivots.append(r)
    return len(pivots)


@dataclass(frozen=True)
class PlantedCode:
    """Linear map b -> x; column v of the generator is the set of message
    bits whose product gives x_v."""

    n: int
    k: int
    columns: tuple  # columns[v] = bitmask over [k]

    def encode(self, b) -> list[int]:
        b = _check_signs(b, self.k)
        out = []
        for col in self.columns:
            v = 1
            for i in range(self.k):
                if (col >> i) & 1:
                    v *= b[i]
            out.append(v)
        return out

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "columns": [[i + 1 for i in range(self.k) if (c >> i) & 1] for c in self.columns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlantedCode":
        cols = tuple(sum(1 << (i - 1) for i in col) for col in d["columns"])
        return cls(n=d["n"], k=d["k"], columns=cols)


def generate_planted_linear_instance(
    n: int, q: int, k: int, delta: float, seed: int, max_attempts: int = 200
):
    """Instance whose constraints are all satisfied by x = C(b) for every b.

    Draws a uniformly random full-rank k x n generator over GF(2), then for
    each i greedily assembles a matching from the q-subsets whose column-XOR
    equals e_i.  Returns (instance, PlantedCode).
    """
    m = int(delta * n)
    if m * q > n:
        raise InfeasibleSize(f"need {m * q} vertices, have {n}")
    if k > n:
        raise InfeasibleSize("full-rank generator needs k <= n")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        cols = [int(x) for x in rng.integers(0, 1 << k, size=n, dtype=np.uint64)]
        if _gf2_rank(cols[:]) < k:
            continue
        hgs = []
        ok = True
        for i in range(k):
            target = 1 << i
            used = 0
            h = []
            for cand in combinations(range(n), q):
                acc = 0
                block = False
                for v in cand:
                    if (used >> v) & 1:
                        block = True
                        break
                    acc ^= cols[v]
                if block or acc != target:
                    continue
                h.append(list(cand))
                used |= mask_of(cand)
                if len(h) == m:
                    break
            if len(h) < m:
                ok = False
                break
            hgs.append(h)
        if ok:
            inst = XorInstance(n=n, k=k, q=q, delta=delta, hypergraphs=hgs)
            return inst, PlantedCode(n=n, k=k, columns=tuple(cols))
    raise InfeasibleSize(
        f"no planted instance found for n={n} q={q} k={k} delta={delta} "
        f"after {max_attempts} generator draws"
    )


# ---------------------------------------------------------------------------
# file I/O


def load_instance(path):
    with open(path) as fh:
        d = json.load(fh)
    if "s" in d:
        return BipartiteXorInstance.from_dict(d)
    return XorInstance.from_dict(d)


def dump_instance(inst, path, extra: dict | None = None):
    d = inst.to_dict()
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")
