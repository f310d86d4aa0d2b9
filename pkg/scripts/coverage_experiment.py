"""Coverage of an incomplete snippet corpus under every predictor configuration."""
import contextlib
import io
import json
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

from _config import parse_config
from lexec.harness import RunConfig, compare_summaries, run_batch, write_csv
from lexec.instrument import instrument_source
from lexec.predictors import fit_frequency
from lexec.synth import incomplete_corpus, training_programs
from lexec.traces import deduplicate, record_run


@dataclass
class Config:
    """Run as-is, naive, random and frequency lexecution over a seeded corpus."""
    snippets: int = 30
    corpus_seed: int = 0
    training_programs: int = 40
    training_seed: int = 1
    seed: int = 0
    timeout: float = 10.0
    corpus_dir: str = ""
    csv: str = ""
    json: str = ""


def fit_table(n, seed):
    events = []
    with contextlib.redirect_stdout(io.StringIO()):
        for i, src in enumerate(training_programs(n, seed)):
            events += record_run(instrument_source(src, f"train_{i}.py"))
    ds = deduplicate(events)
    print(f"training trace: {len(events)} events, {len(ds)} after dedup")
    return fit_frequency(ds.events)


def main(cfg: Config):
    table = fit_table(cfg.training_programs, cfg.training_seed)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(cfg.corpus_dir) if cfg.corpus_dir else Path(tmp)
        if not cfg.corpus_dir:
            for name, src in incomplete_corpus(cfg.snippets, cfg.corpus_seed).items():
                (root / name).write_text(src)
        configs = [RunConfig("asis", timeout=cfg.timeout)]
        for predictor in ("naive", "random", "frequency"):
            for granularity, mode in (("fine", "deterministic"), ("coarse", "deterministic"),
                                      ("coarse", "randomized")):
                configs.append(RunConfig(predictor, granularity, mode, cfg.seed, cfg.timeout, table=table))
        summaries = run_batch(root, configs, seed=cfg.seed)
    base = summaries[0]
    print(f"{'configuration':28s} {'coverage':>9s} {'fully run':>10s} {'ms/line':>8s} {'p vs as-is':>11s}")
    for s in summaries:
        p = compare_summaries(base, s).p_value if s is not base else float("nan")
        per_line = s.ms_per_covered_line
        print(f"{s.label:28s} {s.mean_coverage:9.3f} {s.fully_executed:10.3f} "
              f"{per_line if per_line is None else round(per_line, 3)!s:>8s} {p:11.2e}")
    if cfg.csv:
        write_csv(summaries, cfg.csv)
    if cfg.json:
        Path(cfg.json).write_text(json.dumps({"config": asdict(cfg), "results": [
            {"label": s.label, "mean_coverage": s.mean_coverage, "fully_executed": s.fully_executed}
            for s in summaries]}, indent=1))


if __name__ == "__main__":
    main(parse_config(Config))
