"""Top-k accuracy of the non-neural predictors on a held-out split of recorded traces."""
import contextlib
import io
from dataclasses import dataclass

from _config import parse_config
from lexec.instrument import instrument_source
from lexec.predictors import FrequencyPredictor, NaivePredictor, RandomPredictor, fit_frequency
from lexec.synth import training_programs
from lexec.traces import deduplicate, evaluate_topk, record_run, split


@dataclass
class Config:
    """Record traces of generated programs, split them and score each predictor."""
    programs: int = 200
    program_seed: int = 5
    train_fraction: float = 0.95
    split_seed: int = 0
    seed: int = 0
    granularity: str = "fine"


def main(cfg: Config):
    sources, metadata, events, next_iid = {}, {}, [], 0
    with contextlib.redirect_stdout(io.StringIO()):
        for i, src in enumerate(training_programs(cfg.programs, cfg.program_seed)):
            unit = instrument_source(src, f"prog_{i}.py", first_iid=next_iid)
            next_iid += len(unit.metadata)
            sources[unit.file] = src
            metadata.update(unit.by_iid())
            events += record_run(unit)
    ds = deduplicate(events)
    train, held = split(ds, cfg.train_fraction, cfg.split_seed)
    print(f"{len(events)} raw events, {len(ds)} unique; train {len(train)}, held-out {len(held)}")
    predictors = {
        "naive": NaivePredictor(),
        "random": RandomPredictor(cfg.seed),
        "frequency": FrequencyPredictor(fit_frequency(train.events), cfg.seed, strategy="argmax"),
    }
    for name, predictor in predictors.items():
        result = evaluate_topk(predictor, held, (1, 3, 5), metadata, sources, cfg.granularity)
        acc = result.accuracy
        print(f"{name:10s} top-1 {acc[1]:.3f}  top-3 {acc[3]:.3f}  top-5 {acc[5]:.3f}")
        for kind, per in result.per_kind.items():
            print(f"    {kind:13s} top-1 {per[1]:.3f}")


if __name__ == "__main__":
    main(parse_config(Config))
