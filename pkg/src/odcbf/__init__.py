"""Optimal-decay input-to-state-safe control barrier function toolkit."""

from .backstepping import (
    CompositeBarrier,
    Layer,
    StrictFeedbackSystem,
    check_row_rank_g2,
    compose_barrier,
    recursive_compose,
)
from .barrier import (
    BarrierSpec,
    ExtendedClassK,
    LieData,
    SafeSetGeometry,
    admissible_delta,
    atan_class_k,
    cubic_class_k,
    eval_lie,
    gamma_margin,
    linear_class_k,
    register_class_k,
)
from .drd import (
    AttitudeMap,
    DrdBarrier,
    DrdSystem,
    align_uz,
    drd_barrier,
    eta_d_rate,
    partial_closed_loop,
    quadrotor_eta_d,
)
from .dynamics import (
    DisturbanceSignal,
    DisturbedSystem,
    FeedbackLaw,
    close_loop,
    eval_dynamics,
)
from .odfilter import FilterResult, OdIssfController, od_issf_filter, od_issf_virtual_filter
from .scenarios import (
    PendulumConfig,
    QuadrotorConfig,
    build_pendulum,
    build_quadrotor,
    build_quadrotor_full,
)
from .sim import RolloutConfig, SafetyMetrics, Trajectory, rk4_step, rollout, sweep
from .synthesis import SmoothVirtualController, half_sontag, synth_virtual
from .verify import (
    SampleReport,
    check_matched,
    check_od_issf,
    check_prop1,
    check_regular_values,
    qp_oracle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
