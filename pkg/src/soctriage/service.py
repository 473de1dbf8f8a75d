"""HTTP service exposing the engine to the analyst console.

Endpoints (JSON bodies, same value encoding as the wire formats):

    GET  /health                 version + counters
    POST /events                 {"events": [record, ...]} batch ingest
    POST /filters/apply          {"criteria": text, "correlate_key"?, "window"?}
    GET  /suggest?k=N            ranked hits + deduplicated next ops
    POST /experiences            one experience record
    POST /model/predict          {"events": [record, ...]}
    POST /model/train            {"events": [...], "labels": {...}, "config": {...}}
    GET  /petri/report?cap=N     net analysis of this session's op pipeline

Every response carries an X-Request-Id (client value echoed when given)
and a request_id body field. Store writes and trace updates run under a
single writer lock; the model snapshot swaps atomically after training.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import __version__
from .errors import (BadValue, CriteriaSyntaxError, MissingField,
                     OrderViolation, TriageError)
from .events import Event, parse_event_line, serialize_event
from .dsl import FilterOp, OpKind, apply_filter, correlate_groups, parse_criteria
from .retrieval import QueryContext, retrieve_topk, suggest_next_ops
from .store import (ExperienceStore, StepRecord, experience_from_json,
                    experience_to_json, op_to_json)
from . import petri
from . import rnn


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    store_path: str = "triage-store.jsonl"
    model_path: str | None = None
    default_k: int = 5
    cors_origins: tuple[str, ...] = ()
    train_cap: int = 10000

    @classmethod
    def load(cls, path: str | None = None) -> "ServiceConfig":
        path = path or os.environ.get("TRIAGE_CONFIG")
        if not path:
            return cls()
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f: raw[f] for f in cls.__dataclass_fields__ if f in raw}
        if "cors_origins" in known:
            known["cors_origins"] = tuple(known["cors_origins"])
        return cls(**known)

    def with_overrides(self, **kw) -> "ServiceConfig":
        return replace(self, **kw)


class Engine:
    """Service state: ingested events, session trace, store, model."""

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.lock = threading.Lock()
        self.events: dict[str, Event] = {}
        self.store = ExperienceStore(cfg.store_path)
        self.model: rnn.SequenceClassifier | None = None
        if cfg.model_path and os.path.exists(cfg.model_path):
            self.model = rnn.load_checkpoint(cfg.model_path)
        self.trace: list[StepRecord] = []
        self._op_serial = 0

    # each public method mirrors one library call so the API can be
    # checked for equivalence against direct use of the modules

    def ingest(self, records: list) -> dict:
        ingested, rejected = 0, []
        with self.lock:
            for i, record in enumerate(records):
                try:
                    event = parse_event_line(json.dumps(record))
                    if event.id in self.events:
                        raise BadValue(f"duplicate id {event.id}")
                    self.events[event.id] = event
                    ingested += 1
                except (BadValue, MissingField, OrderViolation) as exc:
                    rejected.append({"index": i, "error": type(exc).__name__,
                                     "detail": str(exc)})
        return {"ingested": ingested, "rejected": rejected,
                "total": len(self.events)}

    def _all_events(self) -> list[Event]:
        return sorted(self.events.values(), key=lambda e: (e.t_detect, e.id))

    def apply(self, criteria_text: str, correlate_key: list[str] | None,
              window: int | None) -> dict:
        criteria = parse_criteria(criteria_text)
        with self.lock:
            events = self._all_events()
            matched = apply_filter(criteria, events)
            groups = None
            if correlate_key:
                op_kind = OpKind.CORRELATE
                groups = correlate_groups(tuple(correlate_key), matched,
                                          window or 300)
            else:
                op_kind = OpKind.SELECT
            self._op_serial += 1
            op = FilterOp(op_kind, criteria,
                          tuple(correlate_key) if correlate_key else None,
                          op_id=f"op-{self._op_serial}",
                          created_at=int(time.time()))
            self.trace.append(StepRecord(op, len(matched),
                                         tuple(e.id for e in matched[:5])))
        body = {"count": len(matched),
                "events": [json.loads(serialize_event(e)) for e in matched],
                "op_id": op.op_id,
                "op": op_to_json(op)}  # canonical form for client-side traces
        if groups is not None:
            body["groups"] = [[e.id for e in g] for g in groups]
        return body

    def suggest(self, k: int) -> dict:
        with self.lock:
            last = self.trace[-1] if self.trace else None
            events = self._all_events()
            if last is not None:
                focus = tuple(apply_filter(last.op.criteria, events))
            else:
                focus = tuple(events)
            query = QueryContext(focus, last.op if last else None,
                                 int(time.time()))
            hits = retrieve_topk(self.store, query, k)
        suggestions = suggest_next_ops(hits, k)
        return {
            "hits": [{"experience_id": h.experience_id, "level": h.level,
                      "score": h.score,
                      "suggested_op": op_to_json(h.suggested_op)
                      if h.suggested_op else None} for h in hits],
            "suggestions": [{"op": op_to_json(op), "support": support,
                             "best_score": best}
                            for op, support, best in suggestions],
        }

    def record_experience(self, payload: dict) -> dict:
        exp = experience_from_json(payload)
        return {"id": self.store.record(exp)}

    def experience_count(self) -> int:
        return len(self.store)

    def predict(self, records: list) -> dict:
        if self.model is None:
            raise BadValue("no model loaded")
        events = [parse_event_line(json.dumps(r)) for r in records]
        events.sort(key=lambda e: (e.t_detect, e.id))
        p_noise, p_chain = self.model.predict_proba(events)
        return {"p_noise": p_noise, "p_chain": p_chain,
                "label": rnn.CLASS_NAMES[self.model.classify(events)]}

    def train(self, payload: dict) -> dict:
        records = payload.get("events", [])
        if len(records) > self.cfg.train_cap:
            raise _TooLarge(f"training set {len(records)} exceeds "
                            f"cap {self.cfg.train_cap}")
        events = [parse_event_line(json.dumps(r)) for r in records]
        labels = payload.get("labels", {})
        cfg_raw = payload.get("config", {})
        data = rnn.build_sequence_dataset(events, labels,
                                          cfg_raw.get("noise_chunk", 3))
        cfg = rnn.TrainConfig(rate=cfg_raw.get("rate", 0.1),
                              epochs=cfg_raw.get("epochs", 60),
                              seed=cfg_raw.get("seed", 0))
        vocab = rnn.vocabulary_from_sequences(seq for seq, _ in data)
        clf = rnn.init_classifier(vocab, cfg_raw.get("hidden", 16), cfg.seed)
        clf, curve = rnn.train_classifier(clf, data, cfg)
        with self.lock:
            self.model = clf  # atomic snapshot swap
        if self.cfg.model_path:
            rnn.save_checkpoint(clf, self.cfg.model_path)
        return {"sequences": len(data), "epochs": len(curve),
                "final_loss": curve[-1],
                "train_accuracy": rnn.accuracy(clf, data)}

    def petri_report(self, cap: int) -> dict:
        with self.lock:
            ops = [s.op for s in self.trace]
        if not ops:
            raise BadValue("no filter operations recorded this session")
        net = petri.workflow_to_net(ops, petri.linear_wiring(ops))
        props = petri.analyze_properties(net, cap)
        report = petri.deficiency_report(net, cap)
        return {
            "places": list(net.places),
            "transitions": list(net.transitions),
            "markings": props.marking_count,
            "truncated": props.truncated,
            "k_bound": props.k_bound,
            "unbounded": props.unbounded,
            "dead_transitions": list(props.dead_transitions),
            "deadlocks": len(props.deadlock_markings),
            "net_strongly_connected": props.net_strongly_connected,
            "deficiencies": {name: {"present": f.present,
                                    "witness": _jsonable(f.witness),
                                    "detail": f.detail}
                             for name, f in report.findings().items()},
        }


class _TooLarge(TriageError):
    pass


def _jsonable(value):
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, petri.CoveringPair):
        return {"smaller": list(value.smaller), "larger": list(value.larger),
                "pumped_places": list(value.pumped_places)}
    return str(value)


class _Handler(BaseHTTPRequestHandler):
    engine: Engine = None  # set by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet; diagnostics go to stderr by caller
        pass

    def _request_id(self) -> str:
        return self.headers.get("X-Request-Id") or uuid.uuid4().hex

    def _cors(self):
        origin = self.headers.get("Origin")
        if origin and origin in self.engine.cfg.cors_origins:
            self.send_header("Access-Control-Allow-Origin", origin)
            self.send_header("Access-Control-Allow-Headers",
                             "Content-Type, X-Request-Id")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")

    def _reply(self, status: int, body: dict, rid: str):
        body = dict(body)
        body["request_id"] = rid
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("X-Request-Id", rid)
        self._cors()
        self.end_headers()
        self.wfile.write(data)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise BadValue(f"body is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise BadValue("body must be a JSON object")
        return obj

    def do_OPTIONS(self):
        rid = self._request_id()
        self.send_response(204)
        self.send_header("Content-Length", "0")
        self.send_header("X-Request-Id", rid)
        self._cors()
        self.end_headers()

    def do_GET(self):
        rid = self._request_id()
        url = urlparse(self.path)
        query = parse_qs(url.query)
        try:
            if url.path == "/health":
                self._reply(200, {"status": "ok", "version": __version__,
                                  "events": len(self.engine.events),
                                  "experiences": self.engine.experience_count(),
                                  "model_loaded": self.engine.model is not None},
                            rid)
            elif url.path == "/suggest":
                k = int(query.get("k", [self.engine.cfg.default_k])[0])
                self._reply(200, self.engine.suggest(k), rid)
            elif url.path == "/petri/report":
                cap = int(query.get("cap", [10000])[0])
                self._reply(200, self.engine.petri_report(cap), rid)
            else:
                self._reply(404, {"error": "unknown route"}, rid)
        except Exception as exc:
            self._error(exc, rid)

    def do_POST(self):
        rid = self._request_id()
        url = urlparse(self.path)
        try:
            body = self._body()
            if url.path == "/events":
                records = body.get("events")
                if not isinstance(records, list):
                    raise BadValue('body needs an "events" array')
                self._reply(200, self.engine.ingest(records), rid)
            elif url.path == "/filters/apply":
                if "criteria" not in body:
                    raise BadValue('body needs a "criteria" string')
                self._reply(200, self.engine.apply(
                    body["criteria"], body.get("correlate_key"),
                    body.get("window")), rid)
            elif url.path == "/experiences":
                self._reply(200, self.engine.record_experience(body), rid)
            elif url.path == "/model/predict":
                records = body.get("events")
                if not isinstance(records, list) or not records:
                    raise BadValue('body needs a non-empty "events" array')
                self._reply(200, self.engine.predict(records), rid)
            elif url.path == "/model/train":
                self._reply(200, self.engine.train(body), rid)
            else:
                self._reply(404, {"error": "unknown route"}, rid)
        except Exception as exc:
            self._error(exc, rid)

    def _error(self, exc: Exception, rid: str):
        if isinstance(exc, _TooLarge):
            status = 413
        elif isinstance(exc, CriteriaSyntaxError):
            self._reply(422, {"error": "CriteriaSyntaxError", "detail": str(exc),
                              "position": exc.position}, rid)
            return
        elif isinstance(exc, TriageError):
            status = 422
        else:
            status = 500
        self._reply(status, {"error": type(exc).__name__, "detail": str(exc)}, rid)


def make_server(cfg: ServiceConfig) -> tuple[ThreadingHTTPServer, Engine]:
    engine = Engine(cfg)
    handler = type("BoundHandler", (_Handler,), {"engine": engine})
    server = ThreadingHTTPServer((cfg.host, cfg.port), handler)
    return server, engine


def serve(cfg: ServiceConfig) -> None:
    """Run until interrupted; prints the bound address line first."""
    server, _ = make_server(cfg)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
