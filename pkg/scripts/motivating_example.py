"""Lexecute the data-splitting snippet as-is and with scripted predictions."""
import tempfile
from dataclasses import dataclass
from pathlib import Path

from _config import parse_config
from lexec.harness import RunConfig, run_snippet

SNIPPET = (
    'if (not has_min_size(all_data)): raise RuntimeError("not enough data")\n'
    "train_len = round(0.8 * len(all_data))\n"
    'logger.info(f"Extracting training data with config {config_str}")\n'
    "train_data = all_data[:train_len]\n"
)

PREDICTIONS = {
    "all_data": "list_nonempty",
    "variable:has_min_size": "callable",
    "return_value:has_min_size": "true",
    "config_str": "str_nonempty",
    "logger": "object",
    "attribute:info": "callable",
    "return_value:info": "none",
}


@dataclass
class Config:
    """Compare as-is and guided execution of a four-line snippet."""
    timeout: float = 5.0


def main(cfg: Config):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "split_data.py"
        path.write_text(SNIPPET)
        for label, run in (("as-is", RunConfig("asis", timeout=cfg.timeout)),
                           ("stub", RunConfig("stub", script=PREDICTIONS, timeout=cfg.timeout))):
            report = run_snippet(path, run)
            print(f"{label:6s} coverage {report.coverage:5.0%}  exception {report.terminal_exception}")
            for ev in report.injections:
                print(f"        injected {ev['kind']:12s} {ev['name']:14s} -> {ev['label']}")


if __name__ == "__main__":
    main(parse_config(Config))
