from .routing import NoRoute, plan_reference
from .traffic import (
    DT,
    IMPLEMENTABLE,
    MAX_STEPS,
    N_OBS_MAX,
    SENTINEL,
    ControlCommand,
    EpisodeState,
    RouteTooShort,
    SpawnFailure,
    StateMatrix,
    Status,
    SteppedTerminalEpisode,
    StepInfo,
    VehicleState,
    nearest_waypoints,
    observe,
    reset,
    step,
)
from .world import RoadWorld, Scenario, get_scenario, load_scenario, save_scenario
