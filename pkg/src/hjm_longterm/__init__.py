"""Long-maturity factorization of the pricing kernel in HJM models, with a Monte Carlo harness."""
from .curve_space import ForwardCurve, MaturityGrid, PowerWeight, read_curve_csv, write_curve_csv
from .factorization import bond_price, factorization_check, long_bond, pricing_kernel, rollover_wealth
from .hjm_engine import HJMEngine, NumericalBlowup, hjm_drift, step
from .measures import Measure
from .vol_model import ConfigurationError, DeterministicVol, InvariantViolation, StateDependentVol

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DeterministicVol", "ForwardCurve", "HJMEngine", "InvariantViolation", "MaturityGrid",
    "Measure", "NumericalBlowup", "PowerWeight", "StateDependentVol", "bond_price", "factorization_check",
    "hjm_drift", "long_bond", "pricing_kernel", "read_curve_csv", "rollover_wealth", "step", "write_curve_csv",
]
