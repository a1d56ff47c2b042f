"""Multi-lane LWR traffic with autonomous vehicles as moving flux constraints."""
from .model import (DomainError, LaneSpec, RiemannQuery, SourceCoupling, demand, flux, godunov_flux, hat_rho,
                    lane_change_source, riemann_eval, supply, velocity)
from .multilane import (AvState, Boundary, ConfigError, GridSpec, MultiLaneState, Schedule, SimulationError,
                        StepError, cfl_dt, run, step)
from .scalar import LimitSpec, MbTraces, flux_limiter, mb_traces, run_limit_lwr, run_mb

__version__ = "0.1.0"
