import json
import random
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from judgepanel.corpus import Passage, QrelsSet, Query

from agreement_fixtures import N_PAIRS, TRUTH_HISTOGRAM


def make_pair(qid, did, gold=None):
    """A (query, passage) pair; the passage embeds a gold marker so the
    copy-gold mock profile can echo the true label."""
    marker = f" [gold={gold}]" if gold is not None else ""
    return (
        Query(qid, f"what is item {qid}"),
        Passage(did, f"passage text for {did}{marker}"),
    )


def synthetic_collection(n_queries=5, docs_per_query=8, seed=13):
    """A small collection with gold labels embedded in the passage texts.

    Returns (gold QrelsSet, queries dict, passages dict, pairs list).
    """
    rng = random.Random(seed)
    gold = QrelsSet(source_tag="human")
    queries, passages, pairs = {}, {}, []
    for qi in range(n_queries):
        qid = f"q{qi:03d}"
        for di in range(docs_per_query):
            did = f"d{qi:03d}_{di:03d}"
            label = rng.randrange(4)
            query, passage = make_pair(qid, did, gold=label)
            gold.add(qid, did, label)
            queries[qid] = query
            passages[did] = passage
            pairs.append((query, passage))
    return gold, queries, passages, pairs


@pytest.fixture
def small_collection():
    return synthetic_collection()


def split_sized_collection():
    """A synthetic collection with the exact shape of the benchmark test
    split: 25 queries, 4,414 distinct passages, 4,423 judged pairs with
    label histogram {0: 2005, 1: 1233, 2: 808, 3: 377}.

    Nine passages are judged for two adjacent queries (with the same gold
    label, so the embedded gold marker stays truthful), which is how 4,423
    pairs span only 4,414 passages.
    """
    label_pool = []
    for value, count in sorted(TRUTH_HISTOGRAM.items()):
        label_pool.extend([value] * count)
    rng = random.Random(97)
    rng.shuffle(label_pool)
    assert len(label_pool) == N_PAIRS

    n_queries = 25
    n_fresh = 4414
    fresh_labels, extra_labels = label_pool[:n_fresh], label_pool[n_fresh:]

    gold = QrelsSet(source_tag="human")
    queries, passages, pairs = {}, {}, []
    docs_by_query = {}
    base = n_fresh // n_queries
    remainder = n_fresh - base * n_queries
    index = 0
    for qi in range(n_queries):
        qid = f"q{qi:03d}"
        docs_by_query[qid] = []
        for di in range(base + (1 if qi < remainder else 0)):
            did = f"d{qi:03d}_{di:03d}"
            label = fresh_labels[index]
            index += 1
            query, passage = make_pair(qid, did, gold=label)
            gold.add(qid, did, label)
            queries[qid] = query
            passages[did] = passage
            pairs.append((query, passage))
            docs_by_query[qid].append((did, label))
    for offset, label in enumerate(extra_labels):
        qid = f"q{offset + 1:03d}"
        source = f"q{offset:03d}"
        did = next(d for d, l in docs_by_query[source] if l == label)
        gold.add(qid, did, label)
        pairs.append((queries[qid], passages[did]))
    assert len(gold) == N_PAIRS and len(passages) == n_fresh
    return gold, queries, passages, pairs


@pytest.fixture(scope="session")
def benchmark_split():
    return split_sized_collection()


class _ChatHandler(BaseHTTPRequestHandler):
    """Minimal chat-completion server: grades every prompt with the gold
    marker when present, otherwise a fixed label."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        prompt = payload["messages"][0]["content"]
        marker = "[gold="
        if marker in prompt:
            start = prompt.index(marker) + len(marker)
            text = prompt[start : prompt.index("]", start)]
        else:
            text = "2"
        body = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": text}}]}
        ).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def live_chat_server():
    """A real HTTP chat-completion endpoint on localhost."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}"
    finally:
        server.shutdown()
        thread.join()
