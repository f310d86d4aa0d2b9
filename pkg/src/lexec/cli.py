"""Command line interface: ``lexec <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from lexec import commits, harness, instrument, predictors, traces


def _add_predictor_args(p, default="naive"):
    p.add_argument("--predictor", default=default, choices=harness.PREDICTOR_NAMES)
    p.add_argument("--table", help="frequency table JSON (frequency predictor)")
    p.add_argument("--url", help="base URL of a prediction server (rest predictor)")
    p.add_argument("--script", help="JSON script mapping names to labels (stub predictor)")
    p.add_argument("--granularity", default="fine", choices=("fine", "coarse"))
    p.add_argument("--mode", default="det", choices=("det", "rand"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=harness.DEFAULT_TIMEOUT)


def _config(args, predictor=None) -> harness.RunConfig:
    return harness.RunConfig(
        predictor=predictor or args.predictor,
        granularity=args.granularity,
        mode="randomized" if args.mode == "rand" else "deterministic",
        seed=args.seed,
        timeout=args.timeout,
        table=args.table,
        url=args.url,
        script=args.script,
    )


def _dump(doc, path=None):
    text = json.dumps(doc, indent=1)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_instrument(args):
    units, skipped = instrument.instrument_tree(args.paths, args.out, window=args.window)
    print(f"instrumented {len(units)} file(s), skipped {len(skipped)}; sidecar in "
          f"{Path(args.out) / instrument.SIDECAR_NAME}")
    for item in skipped:
        print(f"  skipped {item['file']}: {item['error']}", file=sys.stderr)


def cmd_trace(args):
    path = Path(args.entry)
    metadata = instrument.load_sidecar(args.sidecar)
    code = compile(path.read_text(encoding="utf-8"), str(path), "exec", dont_inherit=True)
    events = traces.record_run(code=code, metadata=metadata, filename=str(path), out=args.out)
    print(f"recorded {len(events)} value-use event(s) into {args.out}")


def cmd_fit_frequency(args):
    events = []
    for t in args.trace:
        events.extend(traces.read_trace(t))
    ds = traces.deduplicate(events)
    table = predictors.fit_frequency(ds.events)
    table.save(args.out)
    print(f"fitted {len(table.counts)} name(s) from {len(ds)} unique event(s)")


def cmd_eval_predictor(args):
    ds = traces.deduplicate(traces.read_trace(args.trace))
    train, heldout = traces.split(ds, args.split, args.seed)
    if args.predictor == "frequency" and not args.table:
        predictor = predictors.FrequencyPredictor(predictors.fit_frequency(train.events), args.seed)
    else:
        predictor = harness.build_predictor(_config(args))
    metadata = instrument.load_sidecar(args.sidecar)
    sources = instrument.load_sidecar_sources(args.sidecar)
    ks = [int(k) for k in args.topk.split(",")]
    result = traces.evaluate_topk(predictor, heldout, ks, metadata, sources, args.granularity)
    _dump({"train": len(train), "heldout": len(heldout), "evaluated": result.evaluated,
           "skipped": len(result.skipped), "accuracy": result.accuracy,
           "per_kind": result.per_kind}, args.report)


def cmd_run(args):
    report = harness.run_snippet(args.file, _config(args), isolate=not args.in_process)
    _dump(report.to_json(), args.report)
    if args.report:
        print(f"coverage {report.coverage:.3f} ({len(report.covered)}/{len(report.countable)} lines)")


def _parse_config(text: str, args) -> harness.RunConfig:
    # predictor[:granularity[:det|rand]]
    parts = text.split(":")
    config = _config(args, predictor=parts[0])
    if len(parts) > 1:
        config.granularity = parts[1]
    if len(parts) > 2:
        config.mode = "randomized" if parts[2] == "rand" else "deterministic"
    return config


def cmd_batch(args):
    specs = args.config or ["asis", "naive"]
    configs = [_parse_config(s, args) for s in specs]
    summaries = harness.run_batch(args.corpus, configs, isolate=not args.in_process)
    for s in summaries:
        per_line = s.ms_per_covered_line
        print(f"{s.label:28s} mean coverage {s.mean_coverage:6.1%}  fully executed "
              f"{s.fully_executed:6.1%}  ms/covered line {per_line if per_line is None else round(per_line, 3)}")
    if len(summaries) > 1:
        base = summaries[0]
        for other in summaries[1:]:
            cmp = harness.compare_summaries(base, other)
            print(f"{other.label} vs {base.label}: mean delta {cmp.mean_delta:+.3f}, Wilcoxon p = {cmp.p_value:.3g}")
    if args.csv:
        harness.write_csv(summaries, args.csv)
    if args.json:
        harness.write_json(summaries, args.json)


def cmd_diff_commit(args):
    predictor = harness.build_predictor(_config(args))
    pairs = []
    if args.manifest:
        with open(args.manifest, encoding="utf-8") as fh:
            for item in json.load(fh):
                pairs.append((item.get("id", item["old"]), item["old"], item["new"]))
    else:
        if not (args.old and args.new):
            raise SystemExit("diff-commit needs --old and --new, or --manifest")
        pairs.append((args.old, args.old, args.new))
    results = []
    for ident, old_path, new_path in pairs:
        old_src = Path(old_path).read_text(encoding="utf-8")
        new_src = Path(new_path).read_text(encoding="utf-8")
        try:
            pair = commits.FunctionPair(old_src, new_src)
            commits.build_driver(pair)
        except commits.BuildError:
            pair, reason = commits.single_function_change(old_src, new_src, file=str(new_path))
            if pair is None:
                results.append({"id": ident, "outcome": None, "skipped": reason})
                continue
        outcome = commits.classify(pair, predictor, args.seed, args.granularity,
                                   "randomized" if args.mode == "rand" else "deterministic", args.timeout)
        results.append({"id": ident, **outcome.to_json()})
        print(f"{ident}: {outcome.outcome.value} ({outcome.detail})", file=sys.stderr)
    _dump(results if args.manifest else results[0], args.report)


def cmd_serve(args):
    predictor = harness.build_predictor(_config(args))
    server = predictors.PredictionServer(predictor, args.host, args.port)
    print(f"serving {args.predictor} predictor on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lexec", description="learning-guided execution of code snippets")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("instrument", help="instrument files or directories")
    p.add_argument("paths", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=512)
    p.set_defaults(func=cmd_instrument)

    p = sub.add_parser("trace", help="record value-use events of an instrumented program")
    p.add_argument("entry")
    p.add_argument("--sidecar", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("fit-frequency", help="fit a frequency table from traces")
    p.add_argument("--trace", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_frequency)

    p = sub.add_parser("eval-predictor", help="top-k accuracy on a held-out split of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--split", type=float, default=0.95)
    p.add_argument("--topk", default="1,3,5")
    p.add_argument("--report")
    _add_predictor_args(p, default="frequency")
    p.set_defaults(func=cmd_eval_predictor)

    p = sub.add_parser("run", help="lexecute one snippet")
    p.add_argument("file")
    p.add_argument("--report")
    p.add_argument("--in-process", action="store_true", help="skip the worker process")
    _add_predictor_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="lexecute a corpus under several configurations")
    p.add_argument("corpus")
    p.add_argument("--config", action="append",
                   help="predictor[:granularity[:det|rand]], repeatable; the first is the comparison baseline")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--in-process", action="store_true")
    _add_predictor_args(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("diff-commit", help="classify a function change by lexecuting both versions")
    p.add_argument("--old")
    p.add_argument("--new")
    p.add_argument("--manifest", help="JSON list of {id, old, new}")
    p.add_argument("--report")
    _add_predictor_args(p)
    p.set_defaults(func=cmd_diff_commit)

    p = sub.add_parser("serve", help="serve a predictor over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _add_predictor_args(p)
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)


if __name__ == "__main__":
    main()
