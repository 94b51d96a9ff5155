"""Private learning algorithms: GF(2) parity learning, the exponential
mechanism, local randomizers, SQ simulations, and MASKED-PARITY."""

from .dp import BudgetExceeded, BudgetLedger, laplace_mechanism, laplace_sample
from .expmech import agnostic_learn, required_sample_size
from .gf2 import BitVector, LinearSystem, gaussian_eliminate, sample_uniform
from .learning import Database, LabelConvention, parity, parity_class
from .local import LROracle, QueryPlan, Randomizer, laplace_query_randomizer, randomized_response
from .parity import BOTTOM, AmplifiedConfig, ParityConfig, learn_amplified, learn_once
from .sq import AdversarialSQOracle, ExactSQOracle, SQQuery, rejection_simulate

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded", "BudgetLedger", "laplace_mechanism", "laplace_sample",
    "agnostic_learn", "required_sample_size",
    "BitVector", "LinearSystem", "gaussian_eliminate", "sample_uniform",
    "Database", "LabelConvention", "parity", "parity_class",
    "LROracle", "QueryPlan", "Randomizer", "laplace_query_randomizer", "randomized_response",
    "BOTTOM", "AmplifiedConfig", "ParityConfig", "learn_amplified", "learn_once",
    "AdversarialSQOracle", "ExactSQOracle", "SQQuery", "rejection_simulate",
]
