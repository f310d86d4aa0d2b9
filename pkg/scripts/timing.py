"""Instrumentation throughput and execution cost per covered line."""
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from _config import parse_config
from lexec.harness import RunConfig, run_batch
from lexec.instrument import instrument_source
from lexec.synth import generated_lines, self_contained_corpus


@dataclass
class Config:
    """Time instrumentation of generated code and lexecution of a runnable corpus."""
    lines: int = 1000
    repeats: int = 5
    snippets: int = 50
    seed: int = 0


def main(cfg: Config):
    src = generated_lines(cfg.lines, cfg.seed)
    best = min(_timed(instrument_source, src) for _ in range(cfg.repeats))
    print(f"instrumenting {cfg.lines} lines: {best:.3f} s (best of {cfg.repeats})")
    with tempfile.TemporaryDirectory() as tmp:
        for name, text in self_contained_corpus(cfg.snippets, cfg.seed).items():
            (Path(tmp) / name).write_text(text)
        configs = [RunConfig("asis"), RunConfig("naive"), RunConfig("random", "coarse", "randomized")]
        for s in run_batch(tmp, configs, isolate=False):
            print(f"{s.label:24s} {s.ms_per_covered_line:.4f} ms per covered line")


def _timed(fn, *args):
    start = time.perf_counter()
    fn(*args)
    return time.perf_counter() - start


if __name__ == "__main__":
    main(parse_config(Config))
