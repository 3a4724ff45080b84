"""Reference hypernym taxonomy: parsing, validation, and queries.

The on-disk format is line-oriented:

    # comment
    @blocklist: entity, object
    @attrs dog: color, size
    dog: canine, carnivore, mammal, vertebrate, animal

Each record maps a leaf concept to its hypernym chain ordered nearest
first. Concept ids are lowercase lemmas; multi-word ids keep their spaces.
"""
from __future__ import annotations

import collections
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping


class TaxonomyError(Exception):
    """Base class for taxonomy construction and query failures."""


class TaxonomyParseError(TaxonomyError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class CycleError(TaxonomyError):
    def __init__(self, concept: str):
        super().__init__(f"hypernym graph contains a cycle through {concept!r}")
        self.concept = concept


class BlocklistViolationError(TaxonomyError):
    pass


class UnknownConceptError(TaxonomyError, KeyError):
    def __init__(self, concept: str):
        super().__init__(f"concept {concept!r} is not in the taxonomy")
        self.concept = concept


class DisconnectedConceptsError(TaxonomyError):
    pass


@dataclass(frozen=True)
class Concept:
    id: str
    display: str = ""

    def __post_init__(self):
        if not self.id:
            raise TaxonomyError("concept id must be non-empty")
        if not self.display:
            object.__setattr__(self, "display", self.id)


class Taxonomy:
    """Immutable set of leaf-to-root hypernym chains with attribute tags.

    Chains are stored nearest-hypernym-first and never contain the leaf
    itself, duplicates, or blocklisted concepts. Every concept mentioned by
    any chain is known and has an attribute signature (possibly empty).
    """

    def __init__(
        self,
        chains: Mapping[str, Iterable[str]],
        signatures: Mapping[str, Iterable[str]] | None = None,
        blocklist: Iterable[str] = (),
    ):
        self._chains: dict[str, tuple[str, ...]] = {
            leaf: tuple(chain) for leaf, chain in chains.items()
        }
        self._blocklist = frozenset(blocklist)
        self._validate_chains()

        known: set[str] = set(self._chains)
        for chain in self._chains.values():
            known.update(chain)
        self._concepts = {cid: Concept(cid) for cid in sorted(known)}

        sigs = {cid: frozenset() for cid in known}
        for cid, tags in (signatures or {}).items():
            if cid not in known:
                raise TaxonomyError(
                    f"attribute signature given for unknown concept {cid!r}"
                )
            sigs[cid] = frozenset(tags)
        self._signatures: dict[str, frozenset[str]] = sigs

        self._adjacency = self._build_adjacency()
        self._check_acyclic()

    # -- construction helpers -------------------------------------------------

    def _validate_chains(self) -> None:
        for leaf, chain in self._chains.items():
            if not leaf:
                raise TaxonomyError("leaf id must be non-empty")
            if leaf in self._blocklist:
                raise BlocklistViolationError(f"leaf {leaf!r} is blocklisted")
            if leaf in chain:
                raise CycleError(leaf)
            if len(set(chain)) != len(chain):
                raise TaxonomyError(f"chain for {leaf!r} repeats a concept")
            for c in chain:
                if not c:
                    raise TaxonomyError(f"chain for {leaf!r} has an empty id")
                if c in self._blocklist:
                    raise BlocklistViolationError(
                        f"chain for {leaf!r} contains blocklisted {c!r}"
                    )

    def _build_adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {cid: set() for cid in self._concepts}
        for leaf, chain in self._chains.items():
            hops = [leaf, *chain]
            for a, b in zip(hops, hops[1:]):
                adj[a].add(b)
                adj[b].add(a)
        return adj

    def _check_acyclic(self) -> None:
        # Directed edges point from a concept to its next hypernym.
        edges: dict[str, set[str]] = collections.defaultdict(set)
        for leaf, chain in self._chains.items():
            hops = [leaf, *chain]
            for a, b in zip(hops, hops[1:]):
                edges[a].add(b)
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {cid: WHITE for cid in self._concepts}
        for start in sorted(self._concepts):
            if color[start] != WHITE:
                continue
            stack: list[tuple[str, Iterable[str]]] = [(start, iter(sorted(edges[start])))]
            color[start] = GRAY
            while stack:
                node, it = stack[-1]
                advanced = False
                for nxt in it:
                    if color[nxt] == GRAY:
                        raise CycleError(nxt)
                    if color[nxt] == WHITE:
                        color[nxt] = GRAY
                        stack.append((nxt, iter(sorted(edges[nxt]))))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    stack.pop()

    # -- queries ---------------------------------------------------------------

    @property
    def concepts(self) -> Mapping[str, Concept]:
        return self._concepts

    @property
    def blocklist(self) -> frozenset[str]:
        return self._blocklist

    def __contains__(self, concept: str) -> bool:
        return concept in self._concepts

    def leaves(self) -> list[str]:
        """Concepts that own a chain record, sorted by id."""
        return sorted(self._chains)

    def is_leaf(self, concept: str) -> bool:
        return concept in self._chains

    def _require_known(self, concept: str) -> None:
        if concept not in self._concepts:
            raise UnknownConceptError(concept)

    def hypernym_chain(self, concept: str) -> tuple[str, ...]:
        """Chain nearest-first; empty for hypernym-only concepts."""
        self._require_known(concept)
        return self._chains.get(concept, ())

    def signature(self, concept: str) -> frozenset[str]:
        self._require_known(concept)
        return self._signatures[concept]

    def is_strict_hypernym(self, hyper: str, hypo: str) -> bool:
        self._require_known(hyper)
        self._require_known(hypo)
        return hyper in self._chains.get(hypo, ())

    def hyponym_hypernym_pairs(self) -> list[tuple[str, str]]:
        """All (leaf, chain member) pairs, sorted by leaf then chain order."""
        return [(leaf, h) for leaf in self.leaves() for h in self._chains[leaf]]

    def path_distance(self, a: str, b: str) -> int:
        """Shortest undirected hop count over chain edges."""
        self._require_known(a)
        self._require_known(b)
        if a == b:
            return 0
        seen = {a}
        frontier = [a]
        dist = 0
        while frontier:
            dist += 1
            nxt: list[str] = []
            for node in frontier:
                for nbr in self._adjacency[node]:
                    if nbr in seen:
                        continue
                    if nbr == b:
                        return dist
                    seen.add(nbr)
                    nxt.append(nbr)
            frontier = nxt
        raise DisconnectedConceptsError(
            f"no path between {a!r} and {b!r} in the hypernym graph"
        )

    def path_similarity(self, a: str, b: str) -> float:
        """1 / (1 + d) where d is the shortest-path hop count; 1.0 iff a == b."""
        return 1.0 / (1.0 + self.path_distance(a, b))

    def scene_closure(self, scene_concepts: Iterable[str]) -> frozenset[str]:
        """Scene labels plus every hypernym of the labels known to the taxonomy."""
        closed: set[str] = set()
        for c in scene_concepts:
            closed.add(c)
            if c in self._concepts:
                closed.update(self._chains.get(c, ()))
        return frozenset(closed)

    def negative_candidates(
        self,
        target: str,
        scene_concepts: Iterable[str] = (),
        required_tags: Iterable[str] | None = None,
        extra_exclude: Iterable[str] = (),
    ) -> list[str]:
        """Concepts eligible as negative question arguments, sorted by id.

        A candidate must not be the target, must not sit on the target's
        hypernym chain, must not be in the scene or in the hypernym closure
        of the scene's labels, and its attribute signature must be a
        superset of `required_tags` (the target's own signature when no
        requirement is given). An empty result is a signal, not an error.
        """
        self._require_known(target)
        required = (
            self._signatures[target]
            if required_tags is None
            else frozenset(required_tags)
        )
        excluded = {target}
        excluded.update(self._chains.get(target, ()))
        excluded.update(self.scene_closure(scene_concepts))
        excluded.update(extra_exclude)
        return [
            c
            for c in sorted(self._concepts)
            if c not in excluded and self._signatures[c] >= required
        ]


def parse_taxonomy(text) -> Taxonomy:
    """Parse the line-oriented taxonomy format from a string or text stream;
    errors carry line numbers."""
    if hasattr(text, "read"):
        text = text.read()
    chains: dict[str, list[str]] = {}
    signatures: dict[str, list[str]] = {}
    blocklist: set[str] = set()
    attr_lines: dict[str, int] = {}

    def split_csv(raw: str) -> list[str]:
        return [part.strip() for part in raw.split(",") if part.strip()]

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@"):
            if line.startswith("@blocklist:"):
                blocklist.update(split_csv(line[len("@blocklist:"):]))
            elif line.startswith("@attrs "):
                body = line[len("@attrs "):]
                cid, sep, tags = body.partition(":")
                cid = cid.strip()
                if not sep or not cid:
                    raise TaxonomyParseError("malformed @attrs directive", line_no)
                if cid in signatures:
                    raise TaxonomyParseError(
                        f"duplicate @attrs for {cid!r}", line_no
                    )
                signatures[cid] = split_csv(tags)
                attr_lines[cid] = line_no
            else:
                raise TaxonomyParseError(
                    f"unknown directive {line.split(':')[0].split()[0]!r}", line_no
                )
            continue
        leaf, sep, rest = line.partition(":")
        leaf = leaf.strip()
        if not sep or not leaf:
            raise TaxonomyParseError("expected 'leaf: hypernym, ...'", line_no)
        if leaf in chains:
            raise TaxonomyParseError(f"duplicate record for {leaf!r}", line_no)
        chains[leaf] = split_csv(rest)

    known: set[str] = set(chains)
    for chain in chains.values():
        known.update(chain)
    for cid in signatures:
        if cid not in known:
            raise TaxonomyParseError(
                f"@attrs names unknown concept {cid!r}", attr_lines[cid]
            )
    return Taxonomy(chains, signatures, blocklist)


def load_taxonomy(source: str | Path | IO[str]) -> Taxonomy:
    if hasattr(source, "read"):
        return parse_taxonomy(source.read())
    return parse_taxonomy(Path(source).read_text(encoding="utf-8"))
