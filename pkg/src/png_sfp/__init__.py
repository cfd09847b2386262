"""Smooth fictitious play on population network games: agent simulation, moment and density models, equilibria."""

from .dynamics import NumericalError, SfpParams
from .game import GameError, PopulationNetworkGame, load_game

__all__ = ["GameError", "NumericalError", "PopulationNetworkGame", "SfpParams", "load_game"]
__version__ = "0.1.0"
