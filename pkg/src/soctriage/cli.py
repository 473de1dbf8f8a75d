"""Command-line surface of the triage engine.

Machine-readable results go to stdout, diagnostics to stderr. Exit codes:
0 success, 1 usage error, 2 data/validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import __version__
from .errors import TriageError
from .events import read_event_file, serialize_event, write_event_file
from .dsl import (FilterOp, OpKind, apply_filter, correlate_groups,
                  format_constraint, format_criteria, parse_criteria)
from .relaxation import DROPPED, build_hierarchy, chain_positions
from .retrieval import QueryContext, retrieve_topk
from .store import ExperienceStore, experience_from_json, experience_to_json
from .synth import GenConfig, default_templates, generate_stream, read_labels, write_labels
from . import adversarial as adv
from . import petri as petri_mod
from . import rnn


def _sorted_sequence(events):
    return sorted(events, key=lambda e: (e.t_detect, e.id))


def _load_dataset(events_path: str, labels_path: str, noise_chunk: int):
    events = read_event_file(events_path)
    labels = read_labels(labels_path)
    return rnn.build_sequence_dataset(events, labels, noise_chunk)


def _pool_from_file(path: str, limit: int | None = None):
    events = _sorted_sequence(read_event_file(path))
    return tuple(events if limit is None else events[:limit])


# -- subcommand bodies ---------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = GenConfig(seed=args.seed, n_noise=args.noise, n_chains=args.chains,
                    templates=default_templates(), horizon=args.horizon)
    events, labels = generate_stream(cfg)
    write_event_file(args.out, events)
    write_labels(args.labels, events, labels)
    print(f"events {len(events)}")
    print(f"chains {args.chains}")
    print(f"noise {args.noise}")
    return 0


def cmd_ingest(args) -> int:
    events = read_event_file(args.infile)
    print(f"events {len(events)}")
    if events:
        print(f"t_detect_min {min(e.t_detect for e in events)}")
        print(f"t_detect_max {max(e.t_detect for e in events)}")
    return 0


def cmd_filter(args) -> int:
    criteria = parse_criteria(args.criteria)
    events = read_event_file(args.infile)
    for e in apply_filter(criteria, events):
        print(serialize_event(e))
    return 0


def cmd_correlate(args) -> int:
    events = read_event_file(args.infile)
    groups = correlate_groups(tuple(args.key.split(",")), events, args.window)
    for i, group in enumerate(groups):
        print(json.dumps({"group": i, "count": len(group),
                          "ids": [e.id for e in group]}))
    return 0


def cmd_relax(args) -> int:
    hierarchy = build_hierarchy(parse_criteria(args.criteria))
    print("level\tchanged\tconstraint\tspecificity")
    for level in hierarchy.levels:
        if level.changed_attribute is None:
            mutated = "-"
        else:
            pos = level.positions[level.changed_attribute]
            base = hierarchy.base.constraint_for(level.changed_attribute)
            variant = chain_positions(base)[pos]
            mutated = "DROPPED" if variant is DROPPED else format_constraint(variant)
        changed = level.changed_attribute or "-"
        print(f"{level.index}\t{changed}\t{mutated}\t{level.specificity:.6f}")
    return 0


def cmd_record(args) -> int:
    store = ExperienceStore(args.store)
    if args.list:
        for exp in store.all():
            print(json.dumps(experience_to_json(exp)))
        return 0
    if not args.infile:
        print("record: need --in or --list", file=sys.stderr)
        return 1
    with open(args.infile, encoding="utf-8") as fh:
        exp = experience_from_json(json.load(fh))
    print(f"id {store.record(exp)}")
    return 0


def cmd_retrieve(args) -> int:
    store = ExperienceStore(args.store)
    focus = tuple(read_event_file(args.events)) if args.events else ()
    last = FilterOp(OpKind.SELECT, parse_criteria(args.query),
                    op_id="query", created_at=int(time.time()))
    hits = retrieve_topk(store, QueryContext(focus, last), args.k)
    print("experience\tlevel\tscore\tsuggested_op")
    for hit in hits:
        op = hit.suggested_op
        text = format_criteria(op.criteria) if op else "-"
        print(f"{hit.experience_id}\t{hit.level}\t{hit.score:.6f}\t{text}")
    return 0


def cmd_train(args) -> int:
    data = _load_dataset(args.infile, args.labels, args.noise_chunk)
    vocab = rnn.vocabulary_from_sequences(seq for seq, _ in data)
    clf = rnn.init_classifier(vocab, args.hidden, args.seed)
    cfg = rnn.TrainConfig(rate=args.rate, epochs=args.epochs, seed=args.seed)
    clf, curve = rnn.train_classifier(clf, data, cfg)
    rnn.save_checkpoint(clf, args.out)
    print(f"sequences {len(data)}")
    print(f"epochs {len(curve)}")
    print(f"final_loss {curve[-1]!r}")
    print(f"train_accuracy {rnn.accuracy(clf, data):.4f}")
    return 0


def cmd_predict(args) -> int:
    clf = rnn.load_checkpoint(args.model)
    events = _sorted_sequence(read_event_file(args.infile))
    p_noise, p_chain = clf.predict_proba(events)
    print(f"p_noise {p_noise!r}")
    print(f"p_chain {p_chain!r}")
    print(f"label {rnn.CLASS_NAMES[clf.classify(events)]}")
    return 0


def cmd_attack(args) -> int:
    clf = rnn.load_checkpoint(args.model)
    sequence = _sorted_sequence(read_event_file(args.infile))
    budget = adv.AttackBudget(args.budget, _pool_from_file(args.pool, args.pool_size))
    result = adv.craft_evasion(clf, sequence, budget)
    if args.out:
        write_event_file(args.out, result.sequence)
    print(f"flipped {str(result.flipped).lower()}")
    print(f"insertions {result.insertions}")
    print(f"p_before {result.p_before!r}")
    print(f"p_after {result.p_after!r}")
    return 0


def cmd_harden(args) -> int:
    clf = rnn.load_checkpoint(args.model)
    data = _load_dataset(args.infile, args.labels, args.noise_chunk)
    budget = adv.AttackBudget(args.budget, _pool_from_file(args.pool, args.pool_size))
    attack = adv.AttackConfig(budget, sample_size=args.sample, seed=args.seed)
    cfg = rnn.TrainConfig(rate=args.rate, epochs=args.epochs, seed=args.seed)
    clf, log = adv.adversarial_train(clf, data, attack, args.rounds, cfg)
    rnn.save_checkpoint(clf, args.out)
    for i, rate in enumerate(log):
        print(f"round_{i}_evasion_success {rate!r}")
    print(f"rounds {len(log)}")
    return 0


def cmd_surrogate(args) -> int:
    target = rnn.load_checkpoint(args.target)
    data = _load_dataset(args.infile, args.labels, args.noise_chunk)
    pool = [seq for seq, _ in data]
    cfg = adv.SurrogateConfig(
        hidden=args.hidden, seed=args.seed,
        train=rnn.TrainConfig(rate=args.rate, epochs=args.epochs, seed=args.seed),
        vocab=target.vocab)
    surrogate = adv.train_surrogate(lambda seq: target.classify(seq),
                                    pool, args.queries, cfg)
    rnn.save_checkpoint(surrogate, args.out)
    print(f"queries {args.queries}")
    holdout = pool[args.queries:] if args.queries < len(pool) else []
    if holdout:
        agree = sum(1 for seq in holdout
                    if surrogate.classify(seq) == target.classify(seq))
        print(f"holdout_agreement {agree / len(holdout)!r}")
    return 0


def cmd_transfer(args) -> int:
    target = rnn.load_checkpoint(args.target)
    surrogate = rnn.load_checkpoint(args.surrogate)
    data = _load_dataset(args.infile, args.labels, args.noise_chunk)
    budget = adv.AttackBudget(args.budget, _pool_from_file(args.pool, args.pool_size))
    report = adv.evaluate_transfer(target, surrogate, [s for s, _ in data], budget)
    print(f"surrogate_agreement {report.surrogate_agreement!r}")
    print(f"evasion_success {report.evasion_success!r}")
    print(f"transfer_rate {report.transfer_rate!r}")
    print(f"query_count {report.query_count}")
    print(f"empty_denominator {str(report.empty_denominator).lower()}")
    return 0


def cmd_petri(args) -> int:
    with open(args.file, encoding="utf-8") as fh:
        net = petri_mod.parse_net_file(fh.read())
    props = petri_mod.analyze_properties(net, args.cap)
    print(f"markings {props.marking_count}")
    print(f"truncated {str(props.truncated).lower()}")
    print(f"k_bound {props.k_bound}")
    print(f"unbounded {str(props.unbounded).lower()}")
    if props.covering:
        print(f"covering_pair {props.covering.smaller} -> {props.covering.larger}")
    print(f"dead_transitions {','.join(props.dead_transitions) or '-'}")
    print(f"deadlocks {len(props.deadlock_markings)}")
    print(f"net_strongly_connected {str(props.net_strongly_connected).lower()}")
    print(f"reachability_strongly_connected "
          f"{str(props.reachability_strongly_connected).lower()}")
    report = petri_mod.deficiency_report(net, args.cap)
    for name, finding in report.findings().items():
        print(f"deficiency_{name} {str(finding.present).lower()}")
        if finding.present:
            print(f"deficiency_{name}_witness {finding.witness}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve
    cfg = ServiceConfig.load(args.config)
    if args.host:
        cfg = cfg.with_overrides(host=args.host)
    if args.port is not None:
        cfg = cfg.with_overrides(port=args.port)
    if args.store:
        cfg = cfg.with_overrides(store_path=args.store)
    if args.model:
        cfg = cfg.with_overrides(model_path=args.model)
    serve(cfg)
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triage",
        description="SOC triage engine: generate, filter, retrieve, model, "
                    "attack, and audit network-event workflows.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit a labeled synthetic event stream")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=int, default=100)
    p.add_argument("--chains", type=int, default=10)
    p.add_argument("--horizon", type=int, default=86400)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("ingest", help="validate a wire-format event file")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("filter", help="apply criteria to an event file")
    p.add_argument("--criteria", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("correlate", help="group events into candidate chains")
    p.add_argument("--key", required=True, help="comma-separated attributes")
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("relax", help="print the relaxation level table")
    p.add_argument("--criteria", required=True)
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("record", help="append or list stored experiences")
    p.add_argument("--store", required=True)
    p.add_argument("--in", dest="infile")
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("retrieve", help="rank stored experiences for a query")
    p.add_argument("--store", required=True)
    p.add_argument("--query", required=True, help="criteria text")
    p.add_argument("--events", help="focus event file")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_retrieve)

    def model_data_args(p):
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--labels", required=True)
        p.add_argument("--noise-chunk", type=int, default=3)

    p = sub.add_parser("train", help="train the sequence classifier")
    model_data_args(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify one event file as a sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("attack", help="craft an insertion evasion")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--pool", required=True, help="benign candidate event file")
    p.add_argument("--pool-size", type=int, default=None)
    p.add_argument("--budget", type=int, default=5)
    p.add_argument("--out", help="write the adversarial sequence here")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("harden", help="adversarial training rounds")
    p.add_argument("--model", required=True)
    model_data_args(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--pool-size", type=int, default=None)
    p.add_argument("--budget", type=int, default=5)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--sample", type=int, default=20)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_harden)

    p = sub.add_parser("surrogate", help="extract a surrogate via label queries")
    p.add_argument("--target", required=True)
    model_data_args(p)
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--hidden", type=int, default=12)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_surrogate)

    p = sub.add_parser("transfer", help="measure evasion transferability")
    p.add_argument("--target", required=True)
    p.add_argument("--surrogate", required=True)
    model_data_args(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--pool-size", type=int, default=None)
    p.add_argument("--budget", type=int, default=5)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("petri", help="check a workflow net")
    p.add_argument("action", choices=["check"])
    p.add_argument("file")
    p.add_argument("--cap", type=int, default=10000)
    p.set_defaults(func=cmd_petri)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="JSON config path (or $TRIAGE_CONFIG)")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--store")
    p.add_argument("--model")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except TriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 3
    except Exception as exc:  # pragma: no cover - internal faults
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
