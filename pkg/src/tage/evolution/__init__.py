from .engine import Candidate, EvolutionConfig, RunReport, Search, adapt_p_mut, evolve
from .operators import OPERATORS, Alphabet, Mutator, Shape, create_random_ta, crossover
from .selection import rank_probabilities, select, tournament

__all__ = [
    "Alphabet",
    "Candidate",
    "EvolutionConfig",
    "Mutator",
    "OPERATORS",
    "RunReport",
    "Search",
    "Shape",
    "adapt_p_mut",
    "create_random_ta",
    "crossover",
    "evolve",
    "rank_probabilities",
    "select",
    "tournament",
]
