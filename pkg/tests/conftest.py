import os

import numpy as np
import pytest

import cogntke as ck

REAL_DATA_ROOT = os.environ.get("COGNTKE_DATA_DIR", "/root/data")


def write_dataset(dir_path, train, valid, test, num_entities, num_relations,
                  entity_names=None, relation_names=None):
    """Materialize a dataset directory in the on-disk text format."""
    os.makedirs(dir_path, exist_ok=True)
    for name, rows in (("train.txt", train), ("valid.txt", valid), ("test.txt", test)):
        with open(os.path.join(dir_path, name), "w") as f:
            for s, r, o, t in rows:
                f.write(f"{s}\t{r}\t{o}\t{t}\n")
    with open(os.path.join(dir_path, "stat.txt"), "w") as f:
        f.write(f"{num_entities} {num_relations}\n")
    if entity_names:
        with open(os.path.join(dir_path, "entity2id.txt"), "w") as f:
            for i, name in enumerate(entity_names):
                f.write(f"{name}\t{i}\n")
    if relation_names:
        with open(os.path.join(dir_path, "relation2id.txt"), "w") as f:
            for i, name in enumerate(relation_names):
                f.write(f"{name}\t{i}\n")
    return str(dir_path)


def random_tiny_tkg(rng, num_entities=None, num_relations=None, num_snapshots=None,
                    n_facts=None):
    """Random small fact set split chronologically into train/valid/test."""
    num_entities = num_entities or int(rng.integers(4, 31))
    num_relations = num_relations or int(rng.integers(1, 6))
    num_snapshots = num_snapshots or int(rng.integers(6, 21))
    n_facts = n_facts or int(rng.integers(30, 120))
    facts = np.stack([
        rng.integers(0, num_entities, n_facts),
        rng.integers(0, num_relations, n_facts),
        rng.integers(0, num_entities, n_facts),
        rng.integers(0, num_snapshots, n_facts),
    ], axis=1).astype(np.int64)
    facts = facts[np.argsort(facts[:, 3], kind="stable")]
    # chronological split: last two snapshot values go to valid/test
    times = np.unique(facts[:, 3])
    if len(times) < 3:
        facts[-2, 3] = num_snapshots
        facts[-1, 3] = num_snapshots + 1
        times = np.unique(facts[:, 3])
    t_valid, t_test = times[-2], times[-1]
    train = facts[facts[:, 3] < t_valid]
    valid = facts[facts[:, 3] == t_valid]
    test = facts[facts[:, 3] == t_test]
    return train, valid, test, num_entities, num_relations


def make_tiny_dataset(tmp_path, rng, name="tiny", **kwargs):
    train, valid, test, ne, nr = random_tiny_tkg(rng, **kwargs)
    path = write_dataset(tmp_path / name, train, valid, test, ne, nr)
    return ck.augment_relations(ck.load_dataset(path))


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture(scope="session")
def ice14():
    path = os.path.join(REAL_DATA_ROOT, "ICEWS14")
    if not os.path.isdir(path):
        pytest.skip(f"ICEWS14 dataset not found under {REAL_DATA_ROOT}")
    return ck.augment_relations(ck.load_dataset(path))


@pytest.fixture(scope="session")
def ice14_dir():
    path = os.path.join(REAL_DATA_ROOT, "ICEWS14")
    if not os.path.isdir(path):
        pytest.skip(f"ICEWS14 dataset not found under {REAL_DATA_ROOT}")
    return path
