"""Classify the retry-limit change and a few constructed function pairs."""
from dataclasses import dataclass
from pathlib import Path

from _config import parse_config
from lexec.commits import FunctionPair, classify
from lexec.predictors import StubPredictor

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


@dataclass
class Config:
    """Lexecute old and new versions of changed functions and compare their results."""
    seed: int = 0


def main(cfg: Config):
    retry = FunctionPair((DATA / "retry_old.py").read_text(), (DATA / "retry_new.py").read_text())
    cases = {
        "retry limit": (retry, StubPredictor({"attribute:get": "callable", "return_value:get": "int_zero",
                                              "max_retry_times": "int_pos"})),
        "constant bump": (FunctionPair("def f():\n    return 0\n", "def f():\n    return 1\n"), None),
        "unused local": (FunctionPair("def f():\n    return g(x)\n",
                                      "def f():\n    y = 1\n    return g(x)\n"), None),
        "new raise": (FunctionPair("def f():\n    return 1\n", "def f():\n    raise KeyError\n"), None),
    }
    for name, (pair, predictor) in cases.items():
        out = classify(pair, predictor, cfg.seed)
        print(f"{name:14s} {out.outcome.value:18s} {out.detail}")


if __name__ == "__main__":
    main(parse_config(Config))
