"""Shared fixtures: a small knowledge base, a hand-labeled eval set, and HTTP stubs.

The seven-statement KB covers every bias type once.  The ten-example labeled
set is built so that the rule-based judge produces a known confusion matrix;
the expected MetricsReport is enumerated by hand in test_acceptance.py.
"""

from __future__ import annotations

import json
import socket
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from biasgate import (
    AliasMap,
    BiasType,
    Detector,
    GoldLabel,
    KnowledgeBase,
    LabeledExample,
    MockRuleBackend,
    Verdict,
    build_index,
    ingest,
    load_templates,
)

SEVEN_ROWS = [
    ("gay people make the world worse", "orientation"),
    ("women can't handle drugs", "gender"),
    ("All Republicans don't like black people", "social"),
    ("black people are niggers", "race"),
    ("jewish people cheat", "religion"),
    ("blind people are worthless", "disabled"),
    ("mexican folks are poor", "culture"),
]


def make_seven_kb() -> KnowledgeBase:
    kb, report = ingest(SEVEN_ROWS)
    assert report.added == 7
    return kb


def make_ten_examples() -> list[LabeledExample]:
    # Six texts embed a KB statement verbatim (true positives for the rule
    # judge), one biased text matches nothing (false negative), three are
    # clean (true negatives).  e3 carries a gold type that disagrees with
    # the KB label and e4 carries gold spans the judge cannot reproduce.
    def ex(id_, text, gold):
        return LabeledExample(id=id_, text=text, gold=gold)

    def biased(bias_type, group, attribute):
        return GoldLabel(
            biased=True, bias_type=BiasType(bias_type), group=group, attribute=attribute
        )

    clean = GoldLabel(biased=False)
    return [
        ex("e1", "honestly, gay people make the world worse every day.",
           biased("orientation", "gay people", "make the world worse")),
        ex("e2", "everyone knows women can't handle drugs.",
           biased("gender", "women", "can't handle drugs")),
        ex("e3", "it seems all republicans don't like black people these days.",
           biased("race", "Republicans", "don't like black people")),
        ex("e4", "he said that jewish people cheat at business.",
           biased("religion", "jews", "cheating")),
        ex("e5", "apparently blind people are worthless to this company.",
           biased("disabled", "blind people", "worthless")),
        ex("e6", "i heard mexican folks are poor because they don't try.",
           biased("culture", "mexican folks", "poor")),
        ex("e7", "women are too emotional for engineering.",
           biased("gender", "women", "too emotional")),
        ex("e8", "the weather in lisbon is mild in october.", clean),
        ex("e9", "my neighbor repairs bicycles on weekends.", clean),
        ex("e10", "the museum opens at nine on sundays.", clean),
    ]


def make_four_pairs() -> list[tuple[GoldLabel, Verdict]]:
    # (decision+type+attr correct), (type wrong), (clean agree), (unusable)
    return [
        (
            GoldLabel(True, BiasType.RACE, "black people", "dangerous"),
            Verdict(usable=True, biased=True, bias_type=BiasType.RACE,
                    group="black people", attribute="dangerous", raw="r1"),
        ),
        (
            GoldLabel(True, BiasType.GENDER, "women", "weak"),
            Verdict(usable=True, biased=True, bias_type=BiasType.RACE,
                    group="men", attribute="strong", raw="r2"),
        ),
        (
            GoldLabel(False),
            Verdict(usable=True, biased=False, raw="r3"),
        ),
        (
            GoldLabel(True, BiasType.RELIGION, "jewish people", "greedy"),
            Verdict(usable=False, raw="i refuse"),
        ),
    ]


@pytest.fixture(scope="session")
def aliases():
    return AliasMap.default()


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture()
def seven_kb():
    return make_seven_kb()


@pytest.fixture()
def seven_index(seven_kb):
    return build_index(seven_kb)


@pytest.fixture()
def mock_detector(seven_kb, seven_index):
    return Detector(seven_kb, seven_index, MockRuleBackend(seven_kb))


@pytest.fixture()
def ten_examples():
    return make_ten_examples()


@pytest.fixture()
def four_pairs():
    return make_four_pairs()


class ScriptedChatBackend:
    """Chat backend that replays canned responses or calls a rule."""

    def __init__(self, responses=None, rule=None):
        self.responses = list(responses or [])
        self.rule = rule
        self.calls = []

    def complete(self, bundle) -> str:
        self.calls.append(bundle)
        if self.rule is not None:
            return self.rule(bundle)
        if not self.responses:
            raise RuntimeError("script exhausted")
        return self.responses.pop(0)


class StubHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.server.requests.append(
            {"path": self.path, "body": body, "headers": dict(self.headers)}
        )
        status, payload = self.server.respond(self.path, body)
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class StubServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, respond):
        super().__init__(("127.0.0.1", 0), StubHandler)
        self.respond = respond
        self.requests = []

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


@contextmanager
def http_stub(respond):
    """Run a scripted HTTP JSON server; respond(path, body) -> (status, dict)."""
    server = StubServer(respond)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()


@pytest.fixture()
def stub_server():
    @contextmanager
    def run(respond):
        with http_stub(respond) as server:
            yield server

    return run


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
