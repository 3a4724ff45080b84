from __future__ import annotations

import random
from pathlib import Path

import pytest

from taxqa.metrics import InstanceResult
from taxqa.taxonomy import Taxonomy, load_taxonomy
from taxqa.scene import load_scene_graphs

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def taxonomy() -> Taxonomy:
    return load_taxonomy(FIXTURES / "taxonomy.txt")


@pytest.fixture(scope="session")
def scenes():
    return load_scene_graphs(FIXTURES / "scenes_10.json")


def make_result(
    instance_id: str,
    ok: bool = True,
    depth: int = 0,
    parent: str | None = None,
    neg_ok: tuple[bool, bool, bool, bool] | None = None,
    source_leaf: str = "",
    target: str = "",
) -> InstanceResult:
    negs = neg_ok if neg_ok is not None else ((True,) * 4 if ok else (True, True, True, False))
    return InstanceResult(
        instance_id=instance_id,
        positive_correct=ok if neg_ok is None else ok,
        negatives_correct=tuple(negs),
        substitution_depth=depth,
        source_leaf=source_leaf,
        target=target,
        parent_instance_id=parent,
    )


def _random_taxonomy(rng: random.Random, n_families: int = 6, leaves_per_family: int = 3,
                     depth: int = 3) -> Taxonomy:
    """Small random forest taxonomy with uniform {color, size} signatures."""
    chains = {}
    sigs = {}
    for f in range(n_families):
        levels = [f"level{d}_f{f}" for d in range(depth)]
        for leaf_i in range(leaves_per_family):
            leaf = f"leaf{leaf_i}_f{f}"
            chains[leaf] = list(levels)
            sigs[leaf] = ["color", "size"]
        for lvl in levels:
            sigs[lvl] = ["color", "size"]
    # drop a few signatures so criterion (3) has bite
    all_ids = sorted(sigs)
    for cid in rng.sample(all_ids, max(1, len(all_ids) // 8)):
        sigs[cid] = []
    return Taxonomy(chains, sigs)


@pytest.fixture(scope="session")
def random_taxonomy():
    return _random_taxonomy


@pytest.fixture(scope="session")
def result_factory():
    return make_result
