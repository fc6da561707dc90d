"""Safety model checking with quantified lemmas for integer and array programs."""
from .terms import Term, Subst
from .problem import SafetyProblem, parse_problem, load_problem
from .engine import EngineConfig, Safe, Cex, ResourceLimit, run, validate_verdict

__all__ = ["Term", "Subst", "SafetyProblem", "parse_problem", "load_problem",
           "EngineConfig", "Safe", "Cex", "ResourceLimit", "run", "validate_verdict"]
__version__ = "0.1.0"
