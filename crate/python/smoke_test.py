"""Smoke test for the encgraph_py extension.

Build first:  pip install --no-build-isolation -e crates/py
Run:          python -m pytest python/smoke_test.py
"""

import random

import pytest

import encgraph_py


@pytest.fixture(scope="module")
def edges(tmp_path_factory):
    rng = random.Random(7)
    seen = set()
    lines = []
    while len(lines) < 400:
        src, dst = rng.randrange(60), rng.randrange(60)
        if src == dst or (src, dst) in seen:
            continue
        seen.add((src, dst))
        lines.append(f"{src} {dst} {rng.randint(1, 100)}")
    path = tmp_path_factory.mktemp("graph") / "edges.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def cluster(edges):
    with encgraph_py.LocalCluster(str(edges), shards=2, seed=3) as c:
        yield c


def test_version():
    assert encgraph_py.VERSION


def test_parse_query():
    assert encgraph_py.parse_query("(and friend:1  friend:2)") == "(and friend:1 friend:2)"
    with pytest.raises(ValueError, match="position"):
        encgraph_py.parse_query("(and friend:1")


def test_sizes(cluster):
    assert cluster.shards == 2
    assert cluster.entries == 400


@pytest.mark.parametrize(
    "q",
    [
        "(term friend:1)",
        "(and friend:1 friend:2)",
        "(or friend:3 friend:4 friend:5)",
        "(difference friend:6 (and friend:7 friend:8))",
        "(apply friend: friend:9)",
    ],
)
def test_set_queries_match_plaintext(cluster, q):
    got = cluster.query(q)
    want = [i for i, _ in cluster.plain_query(q)]
    assert sorted(got) == sorted(want)


def test_top_k_scores_match(cluster):
    q = "(or friend:10 friend:11)"
    got = cluster.query(q, top_k=5)
    want = cluster.plain_query(q, top_k=5)
    score = dict(cluster.plain_query(q))
    assert [score[i] for i in got] == [s for _, s in want]


def test_exponentiations_counted(cluster):
    before = cluster.exponentiations()
    cluster.query("(and friend:1 friend:2)")
    after = cluster.exponentiations()
    assert after[0] > before[0]


def test_shutdown_is_final(edges):
    c = encgraph_py.LocalCluster(str(edges), shards=1)
    c.shutdown()
    with pytest.raises(RuntimeError):
        c.query("(term friend:1)")
