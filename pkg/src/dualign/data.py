"""Knowledge-graph data model, OpenEA-format ingestion, sparse tensor
construction, and a deterministic synthetic KG-pair generator.

OpenEA layout (tab-separated, UTF-8):
    rel_triples_1, rel_triples_2   one "head<TAB>relation<TAB>tail" per line
    ent_links                      one "entity1<TAB>entity2" per line
    721_5fold/<k>/{train_links, valid_links, test_links}, k in 1..5
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .autodiff import SparseMatrix


class ParseError(ValueError):
    """A data file line does not match the expected tab-separated format."""


@dataclass
class Kg:
    """One knowledge graph with dense 0..n entity / 0..m relation ids."""

    entity_uris: list[str] = field(default_factory=list)
    relation_uris: list[str] = field(default_factory=list)
    triples: list[tuple[int, int, int]] = field(default_factory=list)
    entity_id: dict[str, int] = field(default_factory=dict)
    relation_id: dict[str, int] = field(default_factory=dict)

    @property
    def n_entities(self) -> int:
        return len(self.entity_uris)

    @property
    def n_relations(self) -> int:
        return len(self.relation_uris)

    def intern_entity(self, uri: str) -> int:
        eid = self.entity_id.get(uri)
        if eid is None:
            eid = len(self.entity_uris)
            self.entity_id[uri] = eid
            self.entity_uris.append(uri)
        return eid

    def intern_relation(self, uri: str) -> int:
        rid = self.relation_id.get(uri)
        if rid is None:
            rid = len(self.relation_uris)
            self.relation_id[uri] = rid
            self.relation_uris.append(uri)
        return rid

    def validate(self) -> None:
        n, m = self.n_entities, self.n_relations
        for h, r, t in self.triples:
            if not (0 <= h < n and 0 <= t < n and 0 <= r < m):
                raise ValueError(f"triple ({h}, {r}, {t}) out of range for {n} entities / {m} relations")
        if len(set(self.triples)) != len(self.triples):
            raise ValueError("duplicate triples after ingestion")

    def triple_uris(self) -> list[tuple[str, str, str]]:
        return [
            (self.entity_uris[h], self.relation_uris[r], self.entity_uris[t])
            for h, r, t in self.triples
        ]


@dataclass
class KgPair:
    """Two KGs plus seed / validation / test alignment links (local ids)."""

    kg1: Kg
    kg2: Kg
    train_links: list[tuple[int, int]] = field(default_factory=list)
    valid_links: list[tuple[int, int]] = field(default_factory=list)
    test_links: list[tuple[int, int]] = field(default_factory=list)

    def validate(self) -> None:
        self.kg1.validate()
        self.kg2.validate()
        splits = (self.train_links, self.valid_links, self.test_links)
        for links in splits:
            for a, b in links:
                if not 0 <= a < self.kg1.n_entities:
                    raise ValueError(f"link source id {a} not in KG1")
                if not 0 <= b < self.kg2.n_entities:
                    raise ValueError(f"link target id {b} not in KG2")
        for side in (0, 1):
            ids = [set(l[side] for l in links) for links in splits]
            if ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2]:
                raise ValueError("train/valid/test links overlap on one side")

    def all_links(self) -> list[tuple[int, int]]:
        return self.train_links + self.valid_links + self.test_links


@dataclass
class GraphTensors:
    """Precomputed per-KG sparse structure consumed by the encoders."""

    norm_adj: SparseMatrix      # n x n, D^-1/2 (H + H^T + I) D^-1/2
    attn_pattern: SparseMatrix  # n x n adjacency incl. self-loops (values unused)
    rel_in: SparseMatrix        # n x m, (e, r) -> count of triples (., r, e)
    rel_out: SparseMatrix       # n x m, (e, r) -> count of triples (e, r, .)
    in_deg: np.ndarray          # incoming triple counts per entity
    out_deg: np.ndarray         # outgoing triple counts per entity


def build_graph_tensors(kg: Kg) -> GraphTensors:
    """Symmetrized, self-looped, degree-normalized adjacency plus the
    directional relation incidence matrices."""
    n, m = kg.n_entities, kg.n_relations
    pairs = sorted({(h, t) for h, _, t in kg.triples})
    if pairs:
        hs = np.array([p[0] for p in pairs], dtype=np.int64)
        ts = np.array([p[1] for p in pairs], dtype=np.int64)
        directed = sp.csr_matrix((np.ones(len(pairs)), (hs, ts)), shape=(n, n))
    else:
        directed = sp.csr_matrix((n, n))
    sym = (directed + directed.T + sp.eye(n, format="csr")).tocoo()
    deg = np.asarray(sym.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(deg)
    # group the scale factors so the result is bit-exactly symmetric
    vals = sym.data * (dinv[sym.row] * dinv[sym.col])
    norm_adj = SparseMatrix.from_arrays(n, n, sym.row, sym.col, vals)
    attn_pattern = SparseMatrix.from_arrays(n, n, sym.row, sym.col, np.ones(sym.nnz))

    in_counts: dict[tuple[int, int], int] = {}
    out_counts: dict[tuple[int, int], int] = {}
    for h, r, t in kg.triples:
        out_counts[(h, r)] = out_counts.get((h, r), 0) + 1
        in_counts[(t, r)] = in_counts.get((t, r), 0) + 1
    rel_in = SparseMatrix(n, m, [(e, r, float(c)) for (e, r), c in sorted(in_counts.items())])
    rel_out = SparseMatrix(n, m, [(e, r, float(c)) for (e, r), c in sorted(out_counts.items())])

    in_deg = np.zeros(n, dtype=np.int64)
    out_deg = np.zeros(n, dtype=np.int64)
    for h, _, t in kg.triples:
        out_deg[h] += 1
        in_deg[t] += 1
    return GraphTensors(norm_adj, attn_pattern, rel_in, rel_out, in_deg, out_deg)


# ---------------------------------------------------------------------------
# OpenEA ingestion


def _read_rows(path: Path, n_fields: int) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise ParseError(f"{path}:{lineno}: expected {n_fields} tab-separated fields, got {len(fields)}")
            rows.append(fields)
    return rows


def _load_triples(path: Path, kg: Kg) -> None:
    seen = set()
    for h_uri, r_uri, t_uri in _read_rows(path, 3):
        h = kg.intern_entity(h_uri)
        r = kg.intern_relation(r_uri)
        t = kg.intern_entity(t_uri)
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            kg.triples.append((h, r, t))


def _load_links(path: Path, kg1: Kg, kg2: Kg) -> list[tuple[int, int]]:
    return [
        (kg1.intern_entity(u1), kg2.intern_entity(u2))
        for u1, u2 in _read_rows(path, 2)
    ]


def load_openea(data_dir, fold: int) -> KgPair:
    """Load an OpenEA-format directory for one fold (1..5).

    Ids are assigned in first-appearance order; entities that occur only in
    link files become isolated nodes.
    """
    base = Path(data_dir)
    kg1, kg2 = Kg(), Kg()
    _load_triples(base / "rel_triples_1", kg1)
    _load_triples(base / "rel_triples_2", kg2)
    _load_links(base / "ent_links", kg1, kg2)
    fold_dir = base / "721_5fold" / str(fold)
    pair = KgPair(
        kg1=kg1,
        kg2=kg2,
        train_links=_load_links(fold_dir / "train_links", kg1, kg2),
        valid_links=_load_links(fold_dir / "valid_links", kg1, kg2),
        test_links=_load_links(fold_dir / "test_links", kg1, kg2),
    )
    pair.validate()
    return pair


def export_openea(pair: KgPair, out_dir, folds: int = 5) -> None:
    """Write a KgPair back out in OpenEA format (round-trip compatible).

    Fold 1 reproduces the pair's own split; folds 2..k rotate the train
    window through the concatenated link list.
    """
    base = Path(out_dir)
    base.mkdir(parents=True, exist_ok=True)
    for name, kg in (("rel_triples_1", pair.kg1), ("rel_triples_2", pair.kg2)):
        with open(base / name, "w", encoding="utf-8") as fh:
            for h, r, t in kg.triple_uris():
                fh.write(f"{h}\t{r}\t{t}\n")

    links = pair.all_links()
    uri_links = [(pair.kg1.entity_uris[a], pair.kg2.entity_uris[b]) for a, b in links]
    with open(base / "ent_links", "w", encoding="utf-8") as fh:
        for u1, u2 in sorted(uri_links):
            fh.write(f"{u1}\t{u2}\n")

    n_train = len(pair.train_links)
    n_valid = len(pair.valid_links)
    total = len(uri_links)
    for k in range(1, folds + 1):
        fold_dir = base / "721_5fold" / str(k)
        fold_dir.mkdir(parents=True, exist_ok=True)
        off = ((k - 1) * n_train) % total if total else 0
        rotated = uri_links[off:] + uri_links[:off]
        chunks = {
            "train_links": rotated[:n_train],
            "valid_links": rotated[n_train : n_train + n_valid],
            "test_links": rotated[n_train + n_valid :],
        }
        for name, chunk in chunks.items():
            with open(fold_dir / name, "w", encoding="utf-8") as fh:
                for u1, u2 in chunk:
                    fh.write(f"{u1}\t{u2}\n")


# ---------------------------------------------------------------------------
# synthetic pairs

_SYNTH_RELATIONS = 4


def generate_synthetic_pair(
    n: int,
    branching: int,
    noise: float,
    seed: int,
    dropout: float = 0.10,
) -> KgPair:
    """Deterministic desk-scale stand-in for an OpenEA pair.

    KG1 is a rooted tree (heap layout, edges parent -> child) with relation
    ids cycling over a 4-relation vocabulary, plus ceil(noise * n) random
    extra edges. KG2 is KG1 under a random entity permutation with a fraction
    `dropout` of its triples removed. Links are the permutation, split
    20/10/70 into train/valid/test.
    """
    if n < 4:
        raise ValueError(f"need at least 4 entities, got {n}")
    if branching < 1:
        raise ValueError(f"branching factor must be >= 1, got {branching}")
    if not 0.0 <= dropout < 1.0:
        raise ValueError(f"dropout must be in [0, 1), got {dropout}")
    rng = np.random.default_rng(seed)

    triples1: list[tuple[int, int, int]] = []
    for child in range(1, n):
        parent = (child - 1) // branching
        triples1.append((parent, (child - 1) % _SYNTH_RELATIONS, child))

    existing = set(triples1)
    n_noise = math.ceil(noise * n)
    added = 0
    rel_cursor = n - 1
    while added < n_noise:
        h = int(rng.integers(n))
        t = int(rng.integers(n))
        if h == t:
            continue
        triple = (h, rel_cursor % _SYNTH_RELATIONS, t)
        rel_cursor += 1
        if triple in existing:
            continue
        existing.add(triple)
        triples1.append(triple)
        added += 1

    perm = rng.permutation(n)
    triples2 = [(int(perm[h]), r, int(perm[t])) for h, r, t in triples1]
    n_drop = int(round(dropout * len(triples2)))
    if n_drop:
        drop = set(rng.choice(len(triples2), size=n_drop, replace=False).tolist())
        triples2 = [t for i, t in enumerate(triples2) if i not in drop]

    def make_kg(tag: str, triples: list[tuple[int, int, int]]) -> Kg:
        kg = Kg(
            entity_uris=[f"{tag}:e{i}" for i in range(n)],
            relation_uris=[f"{tag}:r{j}" for j in range(_SYNTH_RELATIONS)],
            triples=triples,
        )
        kg.entity_id = {u: i for i, u in enumerate(kg.entity_uris)}
        kg.relation_id = {u: i for i, u in enumerate(kg.relation_uris)}
        return kg

    order = rng.permutation(n)
    links = [(int(i), int(perm[i])) for i in order]
    n_train = int(0.2 * n)
    n_valid = int(0.1 * n)
    pair = KgPair(
        kg1=make_kg("g1", triples1),
        kg2=make_kg("g2", triples2),
        train_links=links[:n_train],
        valid_links=links[n_train : n_train + n_valid],
        test_links=links[n_train + n_valid :],
    )
    pair.validate()
    return pair
