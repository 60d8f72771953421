"""Scenario simulator over the ledger, oracle network and provers."""
from verifbfl.sim.config import SimulationConfig, Participant, load_config, parse_config, preset, preset_names
from verifbfl.sim.orchestrator import AttackStats, Simulation, SimulationReport, attack_eval, check_report, run

__all__ = [
    "AttackStats", "Participant", "Simulation", "SimulationConfig", "SimulationReport", "attack_eval",
    "check_report", "load_config", "parse_config", "preset", "preset_names", "run",
]
