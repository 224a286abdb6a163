"""Human-in-the-loop review service: state, core engine, protocol, HTTP API."""

from idcloop.service.core import HitlService, ServiceSettings
from idcloop.service.protocol import (
    ExperimentGroupResult,
    run_validation_protocol,
    select_misclassified,
)
from idcloop.service.state import (
    EventLog,
    ModelRegistry,
    RetrainJob,
    ReviewRecord,
    replay_events,
)

__all__ = [
    "EventLog",
    "ExperimentGroupResult",
    "HitlService",
    "ModelRegistry",
    "RetrainJob",
    "ReviewRecord",
    "ServiceSettings",
    "replay_events",
    "run_validation_protocol",
    "select_misclassified",
]
