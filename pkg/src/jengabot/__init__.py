"""Seeded simulation of a camera- and force-guided Jenga extraction robot."""
from .config import RunConfig, load_config, parse_config
from .game import GameLog, run_game
from .tower import TowerConfig, new_tower

__version__ = "0.1.0"
