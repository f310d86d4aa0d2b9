"""Learning-guided execution of incomplete Python code."""
from lexec.instrument import InstrumentedUnit, build_model_input, instrument_source, instrument_tree
from lexec.runtime import EngineSession, run_guarded, run_plain
from lexec.values import Granularity, Mode, abstract_value, catalog, coarsen, concretize

__all__ = [
    "EngineSession", "Granularity", "InstrumentedUnit", "Mode", "abstract_value",
    "build_model_input", "catalog", "coarsen", "concretize", "instrument_source",
    "instrument_tree", "run_guarded", "run_plain",
]
